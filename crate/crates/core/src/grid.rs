//! Structured Cartesian grids, cell-average fields and ghost-cell padding.
//!
//! Cells are addressed either by a multi-index `(i_0, .., i_{d-1})` or by a flat
//! index in row-major order (last axis fastest). Axis 0 is `x`, axis 1 is `y`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Quadrature points per axis used for initial data and Dirichlet ghost cells.
pub const DEFAULT_QUADRATURE_POINTS: usize = 4;

/// Uniform hypercube-cell grid over an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<usize>,
    dx: Vec<f64>,
    strides: Vec<usize>,
    cell_measure: f64,
}

impl GridSpec {
    pub fn new(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Self> {
        let dim = counts.len();
        if dim < 2 {
            return Err(Error::config(format!(
                "grid dimension must be at least 2, got {dim}"
            )));
        }
        if lo.len() != dim || hi.len() != dim {
            return Err(Error::config(format!(
                "grid bounds have {} and {} entries for {} axes",
                lo.len(),
                hi.len(),
                dim
            )));
        }
        for k in 0..dim {
            if !(lo[k].is_finite() && hi[k].is_finite()) || lo[k] >= hi[k] {
                return Err(Error::config(format!(
                    "degenerate axis {k}: lo = {}, hi = {}",
                    lo[k], hi[k]
                )));
            }
            if counts[k] < 3 {
                return Err(Error::config(format!(
                    "axis {k} has {} cells; at least 3 are required",
                    counts[k]
                )));
            }
        }
        let dx: Vec<f64> = (0..dim)
            .map(|k| (hi[k] - lo[k]) / counts[k] as f64)
            .collect();
        let cell_measure = dx.iter().product();
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            counts: counts.to_vec(),
            strides: row_major_strides(counts),
            dx,
            cell_measure,
        })
    }

    /// Hypercube `[lo, hi]^dim` with `cells` cells per axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::new(&vec![lo; dim], &vec![hi; dim], &vec![cells; dim])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    /// Smallest cell width over all axes.
    pub fn min_dx(&self) -> f64 {
        self.dx.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn cell_measure(&self) -> f64 {
        self.cell_measure
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dim() || idx.iter().zip(&self.counts).any(|(i, n)| i >= n) {
            return Err(Error::Index {
                index: idx.to_vec(),
                counts: self.counts.clone(),
            });
        }
        Ok(idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum())
    }

    pub fn multi_index(&self, flat: usize) -> Result<Vec<usize>> {
        if flat >= self.len() {
            return Err(Error::Index {
                index: vec![flat],
                counts: self.counts.clone(),
            });
        }
        Ok(unflatten(flat, &self.counts))
    }

    /// Lower corner of a cell.
    pub fn cell_lower(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(k, &i)| self.lo[k] + i as f64 * self.dx[k])
            .collect()
    }

    pub fn cell_center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(k, &i)| self.lo[k] + (i as f64 + 0.5) * self.dx[k])
            .collect()
    }

    /// Centers of all cells in flat-index order.
    pub fn cell_centers(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|m| self.cell_center(&unflatten(m, &self.counts)))
            .collect()
    }
}

pub(crate) fn row_major_strides(counts: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; counts.len()];
    for k in (0..counts.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * counts[k + 1];
    }
    strides
}

pub(crate) fn unflatten(mut flat: usize, counts: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; counts.len()];
    for k in (0..counts.len()).rev() {
        idx[k] = flat % counts[k];
        flat /= counts[k];
    }
    idx
}

/// Cell averages on a grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
    time: f64,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(m) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                what: "field value",
                location: grid.cell_center(&unflatten(m, grid.counts())),
                value: values[m],
            });
        }
        Ok(Self { grid, values, time })
    }

    pub fn constant(grid: &GridSpec, value: f64, time: f64) -> Result<Self> {
        Self::new(grid.clone(), vec![value; grid.len()], time)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn at_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Periodic shift by `shift` cells along `axis`: `out[i] = self[i - shift]`.
    pub fn rolled(&self, axis: usize, shift: isize) -> Field {
        let counts = self.grid.counts();
        let n = counts[axis] as isize;
        let mut values = vec![0.0; self.values.len()];
        for (m, v) in self.values.iter().enumerate() {
            let mut idx = unflatten(m, counts);
            idx[axis] = (idx[axis] as isize + shift).rem_euclid(n) as usize;
            let target: usize = idx
                .iter()
                .zip(&self.grid.strides)
                .map(|(i, s)| i * s)
                .sum();
            values[target] = *v;
        }
        Field {
            grid: self.grid.clone(),
            values,
            time: self.time,
        }
    }
}

/// Averages `f` over every cell with a `q`-point tensor-product Gauss-Legendre rule.
pub fn cell_average<F>(grid: &GridSpec, f: F, q: usize) -> Result<Field>
where
    F: Fn(&[f64]) -> f64,
{
    let rule = GaussLegendre::new(q)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut point = vec![0.0; grid.dim()];
    for m in 0..grid.len() {
        let idx = unflatten(m, grid.counts());
        let lower = grid.cell_lower(&idx);
        let value = rule.box_average(&lower, grid.dx(), &mut point, &f);
        if !value.is_finite() {
            return Err(Error::Evaluation {
                what: "cell average",
                location: grid.cell_center(&idx),
                value,
            });
        }
        values.push(value);
    }
    Field::new(grid.clone(), values, 0.0)
}

/// Function of `(point, t)` used to fill Dirichlet ghost cells.
pub type BoundaryFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum BoundaryCondition {
    Periodic,
    /// Ghost cells take the cell average of an extension of the solution.
    Dirichlet(BoundaryFn),
}

impl BoundaryCondition {
    pub fn dirichlet<F>(f: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        BoundaryCondition::Dirichlet(Arc::new(f))
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, BoundaryCondition::Periodic)
    }
}

impl fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryCondition::Periodic => f.write_str("Periodic"),
            BoundaryCondition::Dirichlet(_) => f.write_str("Dirichlet(<fn>)"),
        }
    }
}

/// A field extended by one ghost cell on each side of every axis (corners included).
#[derive(Debug, Clone)]
pub struct PaddedField {
    grid: GridSpec,
    counts: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
    time: f64,
}

impl PaddedField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Padded extents, `I_k + 2` per axis.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Value at a padded multi-index (`0` and `I_k + 1` are ghosts).
    pub fn get(&self, padded_idx: &[usize]) -> f64 {
        let flat: usize = padded_idx
            .iter()
            .zip(&self.strides)
            .map(|(i, s)| i * s)
            .sum();
        self.values[flat]
    }

    /// Value at interior cell `idx` displaced by `offset` (each entry in -1..=1).
    pub fn neighbor(&self, idx: &[usize], offset: &[isize]) -> f64 {
        let flat: isize = idx
            .iter()
            .zip(offset)
            .zip(&self.strides)
            .map(|((&i, &o), &s)| (i as isize + 1 + o) * s as isize)
            .sum();
        self.values[flat as usize]
    }

    /// Flat padded position of an interior cell multi-index.
    pub fn position(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.strides)
            .map(|(i, s)| (i + 1) * s)
            .sum()
    }

    /// Flat padded positions of all interior cells, in interior flat-index order.
    pub fn interior_positions(&self) -> Vec<usize> {
        let counts = self.grid.counts();
        (0..self.grid.len())
            .map(|m| self.position(&unflatten(m, counts)))
            .collect()
    }

    /// Flat displacement in the padded array corresponding to a cell offset.
    pub fn offset_delta(&self, offset: &[isize]) -> isize {
        offset
            .iter()
            .zip(&self.strides)
            .map(|(&o, &s)| o * s as isize)
            .sum()
    }
}

/// Pads `field` with one ghost layer according to `bc`, evaluated at time `t`.
pub fn apply_ghost(field: &Field, bc: &BoundaryCondition, t: f64) -> Result<PaddedField> {
    let grid = field.grid();
    let dim = grid.dim();
    let counts: Vec<usize> = grid.counts().iter().map(|n| n + 2).collect();
    let strides = row_major_strides(&counts);
    let total: usize = counts.iter().product();
    let mut values = vec![0.0; total];

    let rule = match bc {
        BoundaryCondition::Dirichlet(_) => Some(GaussLegendre::new(DEFAULT_QUADRATURE_POINTS)?),
        BoundaryCondition::Periodic => None,
    };
    let mut point = vec![0.0; dim];
    let mut inner = vec![0usize; dim];
    for (p, slot) in values.iter_mut().enumerate() {
        let pidx = unflatten(p, &counts);
        let interior = pidx
            .iter()
            .zip(grid.counts())
            .all(|(&i, &n)| i >= 1 && i <= n);
        if interior {
            for k in 0..dim {
                inner[k] = pidx[k] - 1;
            }
            *slot = field.values[grid.flat_index(&inner)?];
            continue;
        }
        match bc {
            BoundaryCondition::Periodic => {
                for k in 0..dim {
                    let n = grid.counts()[k] as isize;
                    inner[k] = (pidx[k] as isize - 1).rem_euclid(n) as usize;
                }
                *slot = field.values[grid.flat_index(&inner)?];
            }
            BoundaryCondition::Dirichlet(f) => {
                let lower: Vec<f64> = (0..dim)
                    .map(|k| grid.lo()[k] + (pidx[k] as f64 - 1.0) * grid.dx()[k])
                    .collect();
                let rule = rule.as_ref().expect("rule built for Dirichlet");
                let value = rule.box_average(&lower, grid.dx(), &mut point, &|x: &[f64]| f(x, t));
                if !value.is_finite() {
                    return Err(Error::Evaluation {
                        what: "Dirichlet ghost average",
                        location: lower,
                        value,
                    });
                }
                *slot = value;
            }
        }
    }
    Ok(PaddedField {
        grid: grid.clone(),
        counts,
        strides,
        values,
        time: t,
    })
}
