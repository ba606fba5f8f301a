//! Network input stencils and supervised learning sets.
//!
//! Two neighbour families are supported:
//!
//! * [`StencilKind::EdgeNeighbors`]: the cell and the `2d` cells sharing a face
//!   with it. For `d = 2` the order is `[u(i-1,j), u(i+1,j), u(i,j), u(i,j+1), u(i,j-1)]`;
//!   higher dimensions append `(+, -)` pairs for each further axis after the
//!   same axis-0 prefix.
//! * [`StencilKind::VertexNeighbors`]: all `3^d` cells sharing at least a vertex,
//!   in lexicographic order of the offsets in `{-1, 0, 1}^d`, last axis fastest.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_ghost, unflatten, BoundaryCondition, Field, PaddedField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilKind {
    #[serde(alias = "five_point", alias = "edge")]
    EdgeNeighbors,
    #[serde(alias = "nine_point", alias = "vertex")]
    VertexNeighbors,
}

impl StencilKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StencilKind::EdgeNeighbors => "edge_neighbors",
            StencilKind::VertexNeighbors => "vertex_neighbors",
        }
    }
}

impl fmt::Display for StencilKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StencilKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge_neighbors" | "edge" | "five_point" => Ok(StencilKind::EdgeNeighbors),
            "vertex_neighbors" | "vertex" | "nine_point" => Ok(StencilKind::VertexNeighbors),
            other => Err(Error::config(format!(
                "unknown stencil '{other}' (expected edge_neighbors or vertex_neighbors)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StencilSpec {
    kind: StencilKind,
    dim: usize,
    offsets: Vec<Vec<isize>>,
    center: usize,
}

impl StencilSpec {
    pub fn new(kind: StencilKind, dim: usize) -> Self {
        let offsets = match kind {
            StencilKind::EdgeNeighbors => edge_offsets(dim),
            StencilKind::VertexNeighbors => vertex_offsets(dim),
        };
        let center = offsets
            .iter()
            .position(|o| o.iter().all(|&c| c == 0))
            .expect("every stencil contains its center");
        Self {
            kind,
            dim,
            offsets,
            center,
        }
    }

    pub fn kind(&self) -> StencilKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `2d + 1` or `3^d`.
    pub fn input_width(&self) -> usize {
        self.offsets.len()
    }

    /// Position of the cell itself inside the input vector.
    pub fn center_position(&self) -> usize {
        self.center
    }

    pub fn offsets(&self) -> &[Vec<isize>] {
        &self.offsets
    }

    fn check_dim(&self, padded: &PaddedField) -> Result<()> {
        if padded.grid().dim() != self.dim {
            return Err(Error::config(format!(
                "stencil is {}-dimensional but the grid has {} axes",
                self.dim,
                padded.grid().dim()
            )));
        }
        Ok(())
    }

    /// Flat displacements of every stencil entry in a padded array.
    pub(crate) fn deltas(&self, padded: &PaddedField) -> Vec<isize> {
        self.offsets.iter().map(|o| padded.offset_delta(o)).collect()
    }
}

fn edge_offsets(dim: usize) -> Vec<Vec<isize>> {
    let unit = |axis: usize, s: isize| {
        let mut o = vec![0; dim];
        o[axis] = s;
        o
    };
    let mut out = vec![unit(0, -1), unit(0, 1), vec![0; dim]];
    for axis in 1..dim {
        out.push(unit(axis, 1));
        out.push(unit(axis, -1));
    }
    out
}

fn vertex_offsets(dim: usize) -> Vec<Vec<isize>> {
    let counts = vec![3; dim];
    (0..3usize.pow(dim as u32))
        .map(|m| unflatten(m, &counts).into_iter().map(|c| c as isize - 1).collect())
        .collect()
}

/// Input vector of one interior cell.
pub fn build_input_vector(padded: &PaddedField, cell: &[usize], spec: &StencilSpec) -> Result<Vec<f64>> {
    spec.check_dim(padded)?;
    let grid = padded.grid();
    grid.flat_index(cell)?;
    Ok(spec
        .offsets
        .iter()
        .map(|o| padded.neighbor(cell, o))
        .collect())
}

/// Input vectors of every cell, row-major `(cells, input_width)`, flat-index order.
pub fn build_all_inputs(padded: &PaddedField, spec: &StencilSpec) -> Result<Vec<f64>> {
    spec.check_dim(padded)?;
    let deltas = spec.deltas(padded);
    let values = padded.values();
    let positions = padded.interior_positions();
    let mut out = Vec::with_capacity(positions.len() * deltas.len());
    for p in positions {
        for d in &deltas {
            out.push(values[(p as isize + d) as usize]);
        }
    }
    Ok(out)
}

/// Supervised pairs `(input vector, next-level cell average)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningSet {
    width: usize,
    center: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    centers: Vec<f64>,
    cell_ids: Vec<usize>,
    pair_count: usize,
    cell_measure: f64,
}

impl LearningSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.width
    }

    /// Position of the center cell within each input vector.
    pub fn center_position(&self) -> usize {
        self.center
    }

    pub fn input(&self, m: usize) -> &[f64] {
        &self.inputs[m * self.width..(m + 1) * self.width]
    }

    /// All inputs, row-major `(len, input_width)`.
    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn center_inputs(&self) -> &[f64] {
        &self.centers
    }

    pub fn cell_ids(&self) -> &[usize] {
        &self.cell_ids
    }

    /// Measure `ΔS` of the cells the pairs come from.
    pub fn cell_measure(&self) -> f64 {
        self.cell_measure
    }

    /// Number of time-level pairs the set was built from (`p + 1`).
    pub fn pair_count(&self) -> usize {
        self.pair_count
    }

    /// Subset containing the entries at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> LearningSet {
        let mut inputs = Vec::with_capacity(indices.len() * self.width);
        for &m in indices {
            inputs.extend_from_slice(self.input(m));
        }
        LearningSet {
            width: self.width,
            center: self.center,
            inputs,
            targets: indices.iter().map(|&m| self.targets[m]).collect(),
            centers: indices.iter().map(|&m| self.centers[m]).collect(),
            cell_ids: indices.iter().map(|&m| self.cell_ids[m]).collect(),
            pair_count: self.pair_count,
            cell_measure: self.cell_measure,
        }
    }

    /// Stable sort by cell id.
    pub fn sorted_by_cell(&self) -> LearningSet {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&m| self.cell_ids[m]);
        self.select(&order)
    }

    /// Appends the pairs of another time level.
    pub fn extend(&mut self, other: &LearningSet) -> Result<()> {
        if other.width != self.width || other.center != self.center || other.cell_measure != self.cell_measure {
            return Err(Error::config("cannot merge learning sets with different stencils"));
        }
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
        self.centers.extend_from_slice(&other.centers);
        self.cell_ids.extend_from_slice(&other.cell_ids);
        self.pair_count += other.pair_count;
        Ok(())
    }
}

/// One pair per cell from two consecutive time levels, ghosts filled at `field_n.time()`.
pub fn assemble_pairs(
    field_n: &Field,
    field_np1: &Field,
    bc: &BoundaryCondition,
    spec: &StencilSpec,
) -> Result<LearningSet> {
    if field_n.grid() != field_np1.grid() {
        return Err(Error::config("learning pair fields live on different grids"));
    }
    let padded = apply_ghost(field_n, bc, field_n.time())?;
    let inputs = build_all_inputs(&padded, spec)?;
    let n = field_n.grid().len();
    Ok(LearningSet {
        width: spec.input_width(),
        center: spec.center_position(),
        inputs,
        targets: field_np1.values().to_vec(),
        centers: field_n.values().to_vec(),
        cell_ids: (0..n).collect(),
        pair_count: 1,
        cell_measure: field_n.grid().cell_measure(),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::grid::GridSpec;

    fn synthetic(n: usize) -> Field {
        let g = GridSpec::cube(2, 0.0, 1.0, n).unwrap();
        let values = (0..g.len())
            .map(|m| {
                let idx = g.multi_index(m).unwrap();
                idx[0] as f64 + 10.0 * idx[1] as f64
            })
            .collect();
        Field::new(g, values, 0.0).unwrap()
    }

    #[test]
    fn widths() {
        for d in 2..=4 {
            assert_eq!(StencilSpec::new(StencilKind::EdgeNeighbors, d).input_width(), 2 * d + 1);
            assert_eq!(StencilSpec::new(StencilKind::VertexNeighbors, d).input_width(), 3usize.pow(d as u32));
        }
        assert_eq!(StencilSpec::new(StencilKind::VertexNeighbors, 3).input_width(), 27);
        assert_eq!(StencilSpec::new(StencilKind::EdgeNeighbors, 2).center_position(), 2);
        assert_eq!(StencilSpec::new(StencilKind::VertexNeighbors, 2).center_position(), 4);
        assert_eq!(StencilSpec::new(StencilKind::VertexNeighbors, 3).center_position(), 13);
    }

    #[test]
    fn five_point_order() {
        let f = synthetic(4);
        let p = apply_ghost(&f, &BoundaryCondition::Periodic, 0.0).unwrap();
        let spec = StencilSpec::new(StencilKind::EdgeNeighbors, 2);
        let v = build_input_vector(&p, &[1, 1], &spec).unwrap();
        assert_eq!(v, vec![10.0, 12.0, 11.0, 21.0, 1.0]);
    }

    #[test]
    fn nine_point_order() {
        let f = synthetic(4);
        let p = apply_ghost(&f, &BoundaryCondition::Periodic, 0.0).unwrap();
        let spec = StencilSpec::new(StencilKind::VertexNeighbors, 2);
        let v = build_input_vector(&p, &[1, 1], &spec).unwrap();
        // offsets (-1,-1), (-1,0), (-1,1), (0,-1), ..., (1,1)
        assert_eq!(v, vec![0.0, 10.0, 20.0, 1.0, 11.0, 21.0, 2.0, 12.0, 22.0]);
    }

    #[test]
    fn constant_field_gives_constant_vectors() {
        let g = GridSpec::cube(3, 0.0, 1.0, 3).unwrap();
        let f = Field::constant(&g, 1.25, 0.0).unwrap();
        let p = apply_ghost(&f, &BoundaryCondition::Periodic, 0.0).unwrap();
        for kind in [StencilKind::EdgeNeighbors, StencilKind::VertexNeighbors] {
            let spec = StencilSpec::new(kind, 3);
            let v = build_input_vector(&p, &[2, 0, 1], &spec).unwrap();
            assert!(v.iter().all(|&x| x == 1.25));
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let f = synthetic(4);
        let p = apply_ghost(&f, &BoundaryCondition::Periodic, 0.0).unwrap();
        let spec = StencilSpec::new(StencilKind::VertexNeighbors, 3);
        assert!(matches!(build_input_vector(&p, &[1, 1], &spec), Err(Error::Config(_))));
    }

    #[test]
    fn pairs_one_per_cell() {
        let f = synthetic(8);
        let spec = StencilSpec::new(StencilKind::EdgeNeighbors, 2);
        let set = assemble_pairs(&f, &f, &BoundaryCondition::Periodic, &spec).unwrap();
        assert_eq!(set.len(), 64);
        assert_eq!(set.pair_count(), 1);
        for m in 0..set.len() {
            assert_eq!(set.targets()[m], set.center_inputs()[m]);
            assert_eq!(set.input(m)[spec.center_position()], set.center_inputs()[m]);
            assert_eq!(set.cell_ids()[m], m);
        }
    }

    #[test]
    fn pairs_reject_grid_mismatch() {
        let a = synthetic(4);
        let b = synthetic(5);
        let spec = StencilSpec::new(StencilKind::EdgeNeighbors, 2);
        assert!(assemble_pairs(&a, &b, &BoundaryCondition::Periodic, &spec).is_err());
    }

    #[test]
    fn extend_tracks_pair_count() {
        let f = synthetic(4);
        let spec = StencilSpec::new(StencilKind::EdgeNeighbors, 2);
        let mut set = assemble_pairs(&f, &f, &BoundaryCondition::Periodic, &spec).unwrap();
        let other = set.clone();
        set.extend(&other).unwrap();
        assert_eq!(set.pair_count(), 2);
        assert_eq!(set.len(), 32);
    }

    proptest! {
        #[test]
        fn permuted_then_sorted_is_identical(seed in 0u64..500) {
            let f = synthetic(5);
            let spec = StencilSpec::new(StencilKind::VertexNeighbors, 2);
            let set = assemble_pairs(&f, &f.rolled(1, 1), &BoundaryCondition::Periodic, &spec).unwrap();
            let mut order: Vec<usize> = (0..set.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(set.select(&order).sorted_by_cell(), set);
        }

        #[test]
        fn periodic_translation_equivariance(axis in 0usize..2, shift in -3isize..4, kind in prop_oneof![Just(StencilKind::EdgeNeighbors), Just(StencilKind::VertexNeighbors)]) {
            let f = synthetic(5);
            let g = f.grid().clone();
            let spec = StencilSpec::new(kind, 2);
            let p = apply_ghost(&f, &BoundaryCondition::Periodic, 0.0).unwrap();
            let shifted = f.rolled(axis, shift);
            let ps = apply_ghost(&shifted, &BoundaryCondition::Periodic, 0.0).unwrap();
            for m in 0..g.len() {
                let idx = g.multi_index(m).unwrap();
                let mut moved = idx.clone();
                moved[axis] = (idx[axis] as isize + shift).rem_euclid(5) as usize;
                let a = build_input_vector(&p, &idx, &spec).unwrap();
                let b = build_input_vector(&ps, &moved, &spec).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
