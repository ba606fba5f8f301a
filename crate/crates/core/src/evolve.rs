//! Explicit time marching with a trained network, error norms and convergence orders.

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_ghost, BoundaryCondition, Field};
use crate::network::MlpParams;
use crate::stencil::{build_all_inputs, StencilSpec};

/// Fixed-step march from the field's time to a final time.
#[derive(Debug, Clone)]
pub struct MarchPlan {
    dt: f64,
    n_steps: usize,
    bc: BoundaryCondition,
    stencil: StencilSpec,
}

impl MarchPlan {
    /// Plan reaching `final_time` in whole steps of `dt`; a fractional step count is rejected.
    pub fn new(dt: f64, final_time: f64, bc: BoundaryCondition, stencil: StencilSpec) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        if !(final_time >= 0.0 && final_time.is_finite()) {
            return Err(Error::config(format!("final time must be non-negative, got {final_time}")));
        }
        let n = (final_time / dt).round();
        if (n * dt - final_time).abs() > 1e-12 * final_time.max(1.0) {
            return Err(Error::config(format!(
                "final time {final_time} is not a whole number of steps of {dt} ({} steps)",
                final_time / dt
            )));
        }
        Ok(Self::with_steps(dt, n as usize, bc, stencil))
    }

    pub fn with_steps(dt: f64, n_steps: usize, bc: BoundaryCondition, stencil: StencilSpec) -> Self {
        Self { dt, n_steps, bc, stencil }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn bc(&self) -> &BoundaryCondition {
        &self.bc
    }

    pub fn stencil(&self) -> &StencilSpec {
        &self.stencil
    }
}

/// One network update `v_out = v_center + N(v)` applied to every cell.
pub fn step(params: &MlpParams, field: &Field, plan: &MarchPlan) -> Result<Field> {
    advance(params, field, plan, 1, field.time() + plan.dt)
}

fn advance(params: &MlpParams, field: &Field, plan: &MarchPlan, index: usize, t_next: f64) -> Result<Field> {
    let stencil = &plan.stencil;
    if params.input_width() != stencil.input_width() {
        return Err(Error::Shape {
            expected: stencil.input_width(),
            got: params.input_width(),
        });
    }
    let padded = apply_ghost(field, &plan.bc, field.time())?;
    let inputs = build_all_inputs(&padded, stencil)?;
    let width = stencil.input_width();
    let n = field.values().len();
    let view = ArrayView2::from_shape((n, width), &inputs).expect("input matrix shape");
    let pass = params.forward_batch(view)?;
    let centre = stencil.center_position();
    let mut next = Vec::with_capacity(n);
    for (m, correction) in pass.output().iter().enumerate() {
        let value = inputs[m * width + centre] + correction;
        if !value.is_finite() {
            return Err(Error::BlowUp {
                step: index,
                cell: field.grid().multi_index(m)?,
                value,
            });
        }
        next.push(value);
    }
    Field::new(field.grid().clone(), next, t_next)
}

/// Result of [`march`]: the final field and `max |v|` after every step (entry 0 is the initial field).
#[derive(Debug, Clone)]
pub struct MarchOutcome {
    pub field: Field,
    pub max_norm_trace: Vec<f64>,
}

impl MarchOutcome {
    /// Largest ratio of the max norm over the initial max norm.
    pub fn growth(&self) -> f64 {
        let first = self.max_norm_trace[0];
        let peak = self.max_norm_trace.iter().copied().fold(0.0, f64::max);
        if first == 0.0 {
            if peak == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            peak / first
        }
    }
}

pub fn march(params: &MlpParams, field0: &Field, plan: &MarchPlan) -> Result<MarchOutcome> {
    let t0 = field0.time();
    let mut field = field0.clone();
    let mut trace = Vec::with_capacity(plan.n_steps + 1);
    trace.push(field.max_abs());
    for n in 1..=plan.n_steps {
        field = advance(params, &field, plan, n, t0 + n as f64 * plan.dt)?;
        trace.push(field.max_abs());
    }
    Ok(MarchOutcome {
        field,
        max_norm_trace: trace,
    })
}

/// Discrete `L2` and `L∞` errors of cell averages at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l2: f64,
    pub linf: f64,
    pub time: f64,
    pub dx: f64,
    pub dt: f64,
}

impl ErrorReport {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
}

/// `l2 = sqrt(Σ (v - u)² ΔS)`, `linf = max |v - u|`.
pub fn error_norms(approx: &Field, reference: &Field) -> Result<ErrorReport> {
    let grid = approx.grid();
    if grid != reference.grid() {
        return Err(Error::config(format!(
            "error norms need matching grids, got counts {:?} and {:?}",
            grid.counts(),
            reference.grid().counts()
        )));
    }
    let mut sum = 0.0;
    let mut linf: f64 = 0.0;
    for (v, u) in approx.values().iter().zip(reference.values()) {
        let e = (v - u).abs();
        sum += e * e;
        linf = linf.max(e);
    }
    Ok(ErrorReport {
        l2: (sum * grid.cell_measure()).sqrt(),
        linf,
        time: approx.time(),
        dx: grid.min_dx(),
        dt: 0.0,
    })
}

/// `log(e_k / e_{k+1}) / log(h_k / h_{k+1})` for consecutive meshes.
///
/// An entry is `None` when either error is zero or non-finite.
pub fn convergence_order(errors: &[f64], meshes: &[f64]) -> Result<Vec<Option<f64>>> {
    if errors.len() != meshes.len() {
        return Err(Error::Order(format!(
            "{} errors for {} meshes",
            errors.len(),
            meshes.len()
        )));
    }
    if let Some(w) = meshes.windows(2).find(|w| !(w[1] < w[0] && w[1] > 0.0)) {
        return Err(Error::Order(format!(
            "meshes must be positive and strictly decreasing, got {} then {}",
            w[0], w[1]
        )));
    }
    Ok(errors
        .windows(2)
        .zip(meshes.windows(2))
        .map(|(e, h)| {
            let usable = |x: f64| x > 0.0 && x.is_finite();
            (usable(e[0]) && usable(e[1])).then(|| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        })
        .collect())
}

/// Writes one row per cell: multi-index, centre coordinates, value.
pub fn write_field_csv(field: &Field, path: &Path) -> Result<()> {
    let grid = field.grid();
    let dim = grid.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dim).map(|k| format!("i{k}")).collect();
    header.extend((0..dim).map(|k| format!("x{k}")));
    header.push("value".into());
    w.write_record(&header)?;
    for (m, v) in field.values().iter().enumerate() {
        let idx = grid.multi_index(m)?;
        let centre = grid.cell_center(&idx);
        let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        row.extend(centre.iter().map(|x| x.to_string()));
        row.push(v.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
