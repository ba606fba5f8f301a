//! The example PDE catalog, its closed-form solutions, and a second-order
//! finite-difference reference solver used to generate training targets.
//!
//! Every problem is written as `u_t = L(u) + f` on a box; [`flux_divergence`]
//! evaluates a central discretization of `L(u) + f` from a padded field of
//! cell averages and [`fd_evolve`] integrates it with sub-stepped two-stage
//! Runge-Kutta (Heun).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_ghost, cell_average, BoundaryCondition, Field, GridSpec, PaddedField, DEFAULT_QUADRATURE_POINTS};

/// Diffusive stability fraction: `δt ≤ 0.2 h² / D`.
const DIFFUSIVE_SAFETY: f64 = 0.2;
/// Advective stability fraction: `δt ≤ 0.5 h / |velocity|_1`.
const ADVECTIVE_SAFETY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemId {
    #[serde(rename = "heat2d")]
    Heat2D,
    #[serde(rename = "convdiff2d")]
    ConvDiff2D,
    #[serde(rename = "aniso_diff2d")]
    AnisoDiff2D,
    #[serde(rename = "ns_vorticity2d")]
    NSVorticity2D,
    #[serde(rename = "nonlinear_diff2d")]
    NonlinearDiff2D,
    #[serde(rename = "pme2d")]
    PME2D,
    #[serde(rename = "heat3d")]
    Heat3D,
    #[serde(rename = "heat4d")]
    Heat4D,
}

impl ProblemId {
    pub const ALL: [ProblemId; 8] = [
        ProblemId::Heat2D,
        ProblemId::ConvDiff2D,
        ProblemId::AnisoDiff2D,
        ProblemId::NSVorticity2D,
        ProblemId::NonlinearDiff2D,
        ProblemId::PME2D,
        ProblemId::Heat3D,
        ProblemId::Heat4D,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ProblemId::Heat2D => "heat2d",
            ProblemId::ConvDiff2D => "convdiff2d",
            ProblemId::AnisoDiff2D => "aniso_diff2d",
            ProblemId::NSVorticity2D => "ns_vorticity2d",
            ProblemId::NonlinearDiff2D => "nonlinear_diff2d",
            ProblemId::PME2D => "pme2d",
            ProblemId::Heat3D => "heat3d",
            ProblemId::Heat4D => "heat4d",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ProblemId::Heat3D => 3,
            ProblemId::Heat4D => 4,
            _ => 2,
        }
    }

    /// Variant keys accepted by [`catalog`]; the first is the training default.
    pub fn variants(self) -> &'static [&'static str] {
        match self {
            ProblemId::Heat2D => &["sin", "cos", "cos_pi3"],
            ProblemId::ConvDiff2D => &["sin", "cos", "cos_pi6"],
            ProblemId::AnisoDiff2D => &["cos", "sin"],
            ProblemId::NSVorticity2D => &["2cosy_sinx", "2cosx_siny"],
            ProblemId::NonlinearDiff2D => &["quadratic"],
            ProblemId::PME2D => &["offset15", "offset11"],
            ProblemId::Heat3D | ProblemId::Heat4D => &["sin", "cos"],
        }
    }

    pub fn default_train_variant(self) -> &'static str {
        self.variants()[0]
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.key() == s)
            .ok_or_else(|| {
                let keys: Vec<&str> = ProblemId::ALL.iter().map(|p| p.key()).collect();
                Error::config(format!("unknown problem '{s}' (expected one of {})", keys.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trig {
    Sin,
    Cos,
}

impl Trig {
    fn eval(self, x: f64) -> f64 {
        match self {
            Trig::Sin => x.sin(),
            Trig::Cos => x.cos(),
        }
    }
}

/// Shape of the initial condition.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Initial {
    /// `trig(Σ x_k + phase)`.
    Wave { trig: Trig, phase: f64 },
    /// `2 cos y sin x`.
    VortexA,
    /// `2 cos x sin y`.
    VortexB,
    /// `(x² + y²) / 2`.
    Quadratic,
    /// `(5 (x + y) + offset)^{1/2}`.
    Pme { offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    /// Advection speed `c`.
    pub c: f64,
    /// Diffusion coefficient `μ`.
    pub mu: f64,
    /// Reynolds number (vorticity problem only).
    pub re: f64,
}

/// One fully specified example problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    id: ProblemId,
    variant: String,
    coefficients: Coefficients,
    initial: Initial,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Looks up a problem and one of its initial-condition variants.
pub fn catalog(id: ProblemId, variant: &str) -> Result<ProblemSpec> {
    let wave = |trig, phase| Initial::Wave { trig, phase };
    let initial = match (id, variant) {
        (ProblemId::Heat2D | ProblemId::ConvDiff2D, "sin") => wave(Trig::Sin, 0.0),
        (ProblemId::Heat2D | ProblemId::ConvDiff2D, "cos") => wave(Trig::Cos, 0.0),
        (ProblemId::Heat2D, "cos_pi3") => wave(Trig::Cos, PI / 3.0),
        (ProblemId::ConvDiff2D, "cos_pi6") => wave(Trig::Cos, PI / 6.0),
        (ProblemId::AnisoDiff2D, "cos") => wave(Trig::Cos, 0.0),
        (ProblemId::AnisoDiff2D, "sin") => wave(Trig::Sin, 0.0),
        (ProblemId::NSVorticity2D, "2cosy_sinx") => Initial::VortexA,
        (ProblemId::NSVorticity2D, "2cosx_siny") => Initial::VortexB,
        (ProblemId::NonlinearDiff2D, "quadratic") => Initial::Quadratic,
        (ProblemId::PME2D, "offset15") => Initial::Pme { offset: 15.0 },
        (ProblemId::PME2D, "offset11") => Initial::Pme { offset: 11.0 },
        (ProblemId::Heat3D | ProblemId::Heat4D, "sin") => wave(Trig::Sin, 0.0),
        (ProblemId::Heat3D | ProblemId::Heat4D, "cos") => wave(Trig::Cos, 0.0),
        _ => {
            return Err(Error::config(format!(
                "problem {id} has no variant '{variant}' (expected one of {})",
                id.variants().join(", ")
            )))
        }
    };
    let coefficients = match id {
        ProblemId::ConvDiff2D => Coefficients { c: 1.0, mu: 1.0, re: 0.0 },
        ProblemId::AnisoDiff2D => Coefficients { c: 1.0, mu: 0.01, re: 0.0 },
        ProblemId::NSVorticity2D => Coefficients { c: 0.0, mu: 0.01, re: 100.0 },
        ProblemId::PME2D => Coefficients { c: 0.0, mu: 0.2, re: 0.0 },
        _ => Coefficients { c: 0.0, mu: 1.0, re: 0.0 },
    };
    let dim = id.dim();
    let (lo, hi) = match id {
        ProblemId::Heat2D | ProblemId::ConvDiff2D | ProblemId::AnisoDiff2D | ProblemId::NSVorticity2D => {
            (0.0, 2.0 * PI)
        }
        ProblemId::NonlinearDiff2D => (-1.0, 1.0),
        ProblemId::PME2D => (0.0, 1.0),
        ProblemId::Heat3D | ProblemId::Heat4D => (0.0, PI),
    };
    Ok(ProblemSpec {
        id,
        variant: variant.to_string(),
        coefficients,
        initial,
        lo: vec![lo; dim],
        hi: vec![hi; dim],
    })
}

/// Velocity field `w = (-cos x sin y, sin x cos y)` of the vorticity problem.
pub fn vortex_velocity(x: &[f64]) -> [f64; 2] {
    [-x[0].cos() * x[1].sin(), x[0].sin() * x[1].cos()]
}

/// Forcing of the nonlinear diffusion problem, `f = u_t - ∇·((1 + e^{-|∇u|²}) ∇u)`
/// for `u = e^{-t} (x² + y²) / 2`.
///
/// With `q = |∇u|² = 2 e^{-t} u` this is `f = (4 e^{-2t - q} - 1) u - 2 e^{-t} (e^{-q} + 1)`.
pub fn nonlinear_forcing(x: &[f64], t: f64) -> f64 {
    let decay = (-t).exp();
    let u = decay * 0.5 * (x[0] * x[0] + x[1] * x[1]);
    let q = 2.0 * decay * u;
    (4.0 * (-2.0 * t - q).exp() - 1.0) * u - 2.0 * decay * ((-q).exp() + 1.0)
}

/// Forcing function of a problem that needs one.
pub fn derive_forcing(spec: &ProblemSpec) -> Result<fn(&[f64], f64) -> f64> {
    match spec.id {
        ProblemId::NonlinearDiff2D => Ok(nonlinear_forcing),
        other => Err(Error::config(format!("problem {other} has no forcing term"))),
    }
}

impl ProblemSpec {
    pub fn id(&self) -> ProblemId {
        self.id
    }

    pub fn variant(&self) -> &str {
        &self.variant
    }

    pub fn coefficients(&self) -> Coefficients {
        self.coefficients
    }

    pub fn dim(&self) -> usize {
        self.id.dim()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Domain edge length (every domain here is a hypercube).
    pub fn length(&self) -> f64 {
        self.hi[0] - self.lo[0]
    }

    /// Grid over the problem domain with cell width `dx`; `L / dx` must be integral.
    pub fn grid_for_dx(&self, dx: f64) -> Result<GridSpec> {
        let ratio = self.length() / dx;
        let cells = ratio.round();
        if dx.is_nan() || dx <= 0.0 || (ratio - cells).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(format!(
                "cell width {dx} does not divide the domain length {} of {}",
                self.length(),
                self.id
            )));
        }
        GridSpec::new(&self.lo, &self.hi, &vec![cells as usize; self.dim()])
    }

    pub fn is_periodic(&self) -> bool {
        matches!(
            self.id,
            ProblemId::Heat2D | ProblemId::ConvDiff2D | ProblemId::AnisoDiff2D | ProblemId::NSVorticity2D
        )
    }

    pub fn initial(&self, x: &[f64]) -> f64 {
        match self.initial {
            Initial::Wave { trig, phase } => trig.eval(x.iter().sum::<f64>() + phase),
            Initial::VortexA => 2.0 * x[1].cos() * x[0].sin(),
            Initial::VortexB => 2.0 * x[0].cos() * x[1].sin(),
            Initial::Quadratic => 0.5 * (x[0] * x[0] + x[1] * x[1]),
            Initial::Pme { offset } => (5.0 * (x[0] + x[1]) + offset).sqrt(),
        }
    }

    pub fn has_exact(&self) -> bool {
        self.id != ProblemId::NSVorticity2D
    }

    /// Closed-form solution, where one exists.
    pub fn exact(&self, x: &[f64], t: f64) -> Option<f64> {
        let Coefficients { c, mu, .. } = self.coefficients;
        let sum: f64 = x.iter().sum();
        match (self.id, self.initial) {
            (ProblemId::Heat2D | ProblemId::Heat3D | ProblemId::Heat4D, Initial::Wave { trig, phase }) => {
                Some((-(self.dim() as f64) * t).exp() * trig.eval(sum + phase))
            }
            (ProblemId::ConvDiff2D, Initial::Wave { trig, phase }) => {
                Some((-2.0 * mu * t).exp() * trig.eval(sum - 2.0 * c * t + phase))
            }
            (ProblemId::AnisoDiff2D, Initial::Wave { trig, phase }) => {
                Some((-3.0 * mu * t).exp() * trig.eval(sum - 2.0 * c * t + phase))
            }
            (ProblemId::NonlinearDiff2D, Initial::Quadratic) => Some((-t).exp() * self.initial(x)),
            (ProblemId::PME2D, Initial::Pme { offset }) => Some((5.0 * (sum + t) + offset).sqrt()),
            _ => None,
        }
    }

    pub fn forcing(&self, x: &[f64], t: f64) -> f64 {
        match self.id {
            ProblemId::NonlinearDiff2D => nonlinear_forcing(x, t),
            _ => 0.0,
        }
    }

    pub fn velocity(&self, x: &[f64]) -> Option<[f64; 2]> {
        match self.id {
            ProblemId::NSVorticity2D => Some(vortex_velocity(x)),
            _ => None,
        }
    }

    /// Periodic for the `[0, 2π]²` problems, Dirichlet from the exact solution otherwise.
    pub fn bc(&self) -> BoundaryCondition {
        if self.is_periodic() {
            return BoundaryCondition::Periodic;
        }
        let spec = self.clone();
        BoundaryCondition::dirichlet(move |x, t| spec.exact(x, t).expect("Dirichlet problems have exact solutions"))
    }

    /// Largest diffusivity seen by the discrete operator for states bounded by `max_abs`.
    pub fn max_diffusivity(&self, max_abs: f64) -> f64 {
        let Coefficients { mu, re, .. } = self.coefficients;
        match self.id {
            ProblemId::Heat2D | ProblemId::Heat3D | ProblemId::Heat4D => 1.0,
            ProblemId::ConvDiff2D => mu,
            // eigenvalues of μ [[1, 1/2], [1/2, 1]]
            ProblemId::AnisoDiff2D => 1.5 * mu,
            ProblemId::NSVorticity2D => 1.0 / re,
            // Jacobian of (1 + e^{-|g|²}) g is bounded by 2
            ProblemId::NonlinearDiff2D => 2.0,
            ProblemId::PME2D => mu * max_abs * max_abs,
        }
    }

    /// Sum over axes of the largest advection speed.
    pub fn max_advection_speed(&self) -> f64 {
        match self.id {
            ProblemId::ConvDiff2D | ProblemId::AnisoDiff2D => 2.0 * self.coefficients.c.abs(),
            ProblemId::NSVorticity2D => 2.0,
            _ => 0.0,
        }
    }

    /// Cell averages of the initial condition at `t = 0`.
    pub fn initial_field(&self, grid: &GridSpec) -> Result<Field> {
        cell_average(grid, |x| self.initial(x), DEFAULT_QUADRATURE_POINTS)
    }

    /// Cell averages of the exact solution at time `t`.
    pub fn exact_field(&self, grid: &GridSpec, t: f64) -> Result<Field> {
        if !self.has_exact() {
            return Err(Error::config(format!("problem {} has no closed-form solution", self.id)));
        }
        Ok(cell_average(grid, |x| self.exact(x, t).unwrap(), DEFAULT_QUADRATURE_POINTS)?.at_time(t))
    }

    /// Stable inner step for the reference integrator on `grid` with states bounded by `max_abs`.
    pub fn stable_step(&self, grid: &GridSpec, max_abs: f64) -> f64 {
        let h = grid.min_dx();
        let mut dt = DIFFUSIVE_SAFETY * h * h / self.max_diffusivity(max_abs);
        let speed = self.max_advection_speed();
        if speed > 0.0 {
            dt = dt.min(ADVECTIVE_SAFETY * h / speed);
        }
        dt
    }
}

/// Discrete `L(u) + f` at one interior cell, evaluated at the padded field's time.
pub fn flux_divergence(spec: &ProblemSpec, padded: &PaddedField, cell: &[usize]) -> f64 {
    let stencil = OperatorStencil::new(padded);
    let p = padded.position(cell);
    let center = padded.grid().cell_center(cell);
    stencil.apply(spec, padded.values(), p, &center, padded.time())
}

/// Discrete `L(u) + f` for every cell, in flat-index order.
pub fn spatial_operator(spec: &ProblemSpec, padded: &PaddedField) -> Vec<f64> {
    let stencil = OperatorStencil::new(padded);
    let grid = padded.grid();
    let centers = grid.cell_centers();
    padded
        .interior_positions()
        .into_iter()
        .zip(centers)
        .map(|(p, x)| stencil.apply(spec, padded.values(), p, &x, padded.time()))
        .collect()
}

struct OperatorStencil {
    dx: Vec<f64>,
    strides: Vec<isize>,
}

impl OperatorStencil {
    fn new(padded: &PaddedField) -> Self {
        Self {
            dx: padded.grid().dx().to_vec(),
            strides: padded.strides().iter().map(|&s| s as isize).collect(),
        }
    }

    fn apply(&self, spec: &ProblemSpec, u: &[f64], p: usize, x: &[f64], t: f64) -> f64 {
        let at = |delta: isize| u[(p as isize + delta) as usize];
        let s = &self.strides;
        let h = &self.dx;
        let uc = at(0);
        let laplacian = || -> f64 {
            (0..s.len())
                .map(|k| (at(s[k]) - 2.0 * uc + at(-s[k])) / (h[k] * h[k]))
                .sum()
        };
        let gradient_sum = || -> f64 {
            (0..s.len())
                .map(|k| (at(s[k]) - at(-s[k])) / (2.0 * h[k]))
                .sum()
        };
        let Coefficients { c, mu, re } = spec.coefficients;
        match spec.id {
            ProblemId::Heat2D | ProblemId::Heat3D | ProblemId::Heat4D => laplacian(),
            ProblemId::ConvDiff2D => -c * gradient_sum() + mu * laplacian(),
            ProblemId::AnisoDiff2D => {
                let uxy = (at(s[0] + s[1]) - at(s[0] - s[1]) - at(-s[0] + s[1]) + at(-s[0] - s[1]))
                    / (4.0 * h[0] * h[1]);
                -c * gradient_sum() + mu * (laplacian() + uxy)
            }
            ProblemId::NSVorticity2D => {
                let flux = |axis: usize, sign: f64| {
                    let mut y = [x[0], x[1]];
                    y[axis] += sign * h[axis];
                    vortex_velocity(&y)[axis] * at(if sign > 0.0 { s[axis] } else { -s[axis] })
                };
                let div = (flux(0, 1.0) - flux(0, -1.0)) / (2.0 * h[0])
                    + (flux(1, 1.0) - flux(1, -1.0)) / (2.0 * h[1]);
                -div + laplacian() / re
            }
            ProblemId::NonlinearDiff2D => {
                // face flux along `axis` between the cell at `base` and `base + s[axis]`
                let face_flux = |axis: usize, base: isize| {
                    let other = 1 - axis;
                    let normal = (at(base + s[axis]) - at(base)) / h[axis];
                    let tangential = (at(base + s[other]) - at(base - s[other]) + at(base + s[axis] + s[other])
                        - at(base + s[axis] - s[other]))
                        / (4.0 * h[other]);
                    let g2 = normal * normal + tangential * tangential;
                    (1.0 + (-g2).exp()) * normal
                };
                let div = (face_flux(0, 0) - face_flux(0, -s[0])) / h[0]
                    + (face_flux(1, 0) - face_flux(1, -s[1])) / h[1];
                div + nonlinear_forcing(x, t)
            }
            ProblemId::PME2D => {
                let div: f64 = (0..2)
                    .map(|k| {
                        let face = |base: isize| {
                            let a = at(base);
                            let b = at(base + s[k]);
                            let m = 0.5 * (a + b);
                            m * m * (b - a) / h[k]
                        };
                        (face(0) - face(-s[k])) / h[k]
                    })
                    .sum();
                mu * div
            }
        }
    }
}

/// Integrates the reference scheme from `field` (at its own time) to `t_end`.
///
/// Uses Heun's method with the largest uniform inner step not exceeding
/// [`ProblemSpec::stable_step`].
pub fn fd_evolve(spec: &ProblemSpec, field: &Field, t_end: f64) -> Result<Field> {
    let t0 = field.time();
    let span = t_end - t0;
    if span < 0.0 {
        return Err(Error::config(format!("cannot evolve backwards from {t0} to {t_end}")));
    }
    if span == 0.0 {
        return Ok(field.clone());
    }
    let bc = spec.bc();
    let grid = field.grid().clone();
    // PME diffusivity grows with u; leave headroom for the state bound
    let bound = 1.5 * field.max_abs();
    let dt_max = spec.stable_step(&grid, bound);
    let steps = (span / dt_max).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let mut u = field.clone();
    for n in 0..steps {
        let t = t0 + n as f64 * dt;
        let k1 = spatial_operator(spec, &apply_ghost(&u, &bc, t)?);
        let stage: Vec<f64> = u.values().iter().zip(&k1).map(|(v, k)| v + dt * k).collect();
        let stage = Field::new(grid.clone(), stage, t + dt)?;
        let k2 = spatial_operator(spec, &apply_ghost(&stage, &bc, t + dt)?);
        let next: Vec<f64> = u
            .values()
            .iter()
            .zip(stage.values())
            .zip(&k2)
            .map(|((v, s), k)| 0.5 * v + 0.5 * (s + dt * k))
            .collect();
        u = Field::new(grid.clone(), next, t + dt)?;
    }
    Ok(u.at_time(t_end))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Cell averages of the closed-form solution at both levels.
    ExactAverages,
    /// Initial averages evolved by the finite-difference reference.
    #[default]
    FdReference,
}

/// Training pair `(ū(t_0 = 0), ū(t_1 = dt))`.
pub fn generate_target(spec: &ProblemSpec, grid: &GridSpec, dt: f64, mode: TargetMode) -> Result<(Field, Field)> {
    if dt.is_nan() || dt < 0.0 {
        return Err(Error::config(format!("time step must be non-negative, got {dt}")));
    }
    match mode {
        TargetMode::ExactAverages => {
            let start = spec.exact_field(grid, 0.0)?;
            let end = spec.exact_field(grid, dt)?;
            Ok((start, end))
        }
        TargetMode::FdReference => {
            let start = spec.initial_field(grid)?;
            let end = fd_evolve(spec, &start, dt)?;
            Ok((start, end))
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Fourth-order (Richardson) central first and second derivatives.
    fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        let c = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
        (4.0 * c(h / 2.0) - c(h)) / 3.0
    }

    fn d2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        let c = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        (4.0 * c(h / 2.0) - c(h)) / 3.0
    }

    #[test]
    fn serde_keys_match_display() {
        for id in ProblemId::ALL {
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{id}\""));
        }
    }

    #[test]
    fn catalog_rejects_unknown_variant() {
        assert!(matches!(catalog(ProblemId::Heat2D, "tan"), Err(Error::Config(_))));
        assert!("heat5d".parse::<ProblemId>().is_err());
        for id in ProblemId::ALL {
            assert_eq!(id.key().parse::<ProblemId>().unwrap(), id);
            for v in id.variants() {
                catalog(id, v).unwrap();
            }
        }
    }

    #[test]
    fn pme_closed_form_at_origin() {
        let p = catalog(ProblemId::PME2D, "offset15").unwrap();
        assert_eq!(p.exact(&[0.0, 0.0], 0.0).unwrap(), 15f64.sqrt());
        assert_eq!(p.initial(&[0.0, 0.0]), 15f64.sqrt());
    }

    #[test]
    fn exact_matches_initial_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in ProblemId::ALL {
            for v in id.variants() {
                let p = catalog(id, v).unwrap();
                if !p.has_exact() {
                    assert!(p.exact(&[0.0, 0.0], 0.0).is_none());
                    continue;
                }
                for _ in 0..20 {
                    let x: Vec<f64> = (0..p.dim()).map(|k| rng.gen_range(p.lo()[k]..p.hi()[k])).collect();
                    assert!((p.exact(&x, 0.0).unwrap() - p.initial(&x)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn periodic_initial_data_is_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for id in ProblemId::ALL {
            for v in id.variants() {
                let p = catalog(id, v).unwrap();
                if !p.is_periodic() {
                    continue;
                }
                for _ in 0..50 {
                    let mut x: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
                    let axis = rng.gen_range(0..2);
                    x[axis] = 0.0;
                    let a = p.initial(&x);
                    x[axis] = 2.0 * PI;
                    assert!((a - p.initial(&x)).abs() < 1e-12);
                }
            }
        }
    }

    /// `u_t - (L u + f)` of the continuous problem at one point, by finite differences
    /// of the closed form.
    fn pde_residual(p: &ProblemSpec, x: &[f64], t: f64) -> f64 {
        // PME evaluates u³, whose larger magnitude favours a wider step
        let h = if p.id() == ProblemId::PME2D { 1e-2 } else { 3e-3 };
        let u = |y: &[f64], s: f64| p.exact(y, s).unwrap();
        let ut = d1(&|s| u(x, s), t, h);
        let partial2 = |k: usize| {
            d2(
                &|z| {
                    let mut y = x.to_vec();
                    y[k] = z;
                    u(&y, t)
                },
                x[k],
                h,
            )
        };
        let partial1 = |k: usize| {
            d1(
                &|z| {
                    let mut y = x.to_vec();
                    y[k] = z;
                    u(&y, t)
                },
                x[k],
                h,
            )
        };
        let lap: f64 = (0..p.dim()).map(partial2).sum();
        let Coefficients { c, mu, .. } = p.coefficients();
        let rhs = match p.id() {
            ProblemId::Heat2D | ProblemId::Heat3D | ProblemId::Heat4D => lap,
            ProblemId::ConvDiff2D => -c * (partial1(0) + partial1(1)) + mu * lap,
            ProblemId::AnisoDiff2D => {
                let uxy = d1(
                    &|z| {
                        d1(&|w| u(&[w, z], t), x[0], h)
                    },
                    x[1],
                    h,
                );
                -c * (partial1(0) + partial1(1)) + mu * (lap + uxy)
            }
            ProblemId::PME2D => {
                // 0.2 ∇·(u² ∇u) = 0.2 Δ(u³/3)
                let cube = |y: &[f64]| u(y, t).powi(3) / 3.0;
                let l: f64 = (0..2)
                    .map(|k| {
                        d2(
                            &|z| {
                                let mut y = x.to_vec();
                                y[k] = z;
                                cube(&y)
                            },
                            x[k],
                            h,
                        )
                    })
                    .sum();
                mu * l
            }
            ProblemId::NonlinearDiff2D => {
                let flux = |y: &[f64], k: usize| {
                    let g = |j: usize| {
                        d1(
                            &|z| {
                                let mut w = y.to_vec();
                                w[j] = z;
                                u(&w, t)
                            },
                            y[j],
                            1e-3,
                        )
                    };
                    let (gx, gy) = (g(0), g(1));
                    (1.0 + (-(gx * gx + gy * gy)).exp()) * if k == 0 { gx } else { gy }
                };
                let div: f64 = (0..2)
                    .map(|k| {
                        d1(
                            &|z| {
                                let mut y = x.to_vec();
                                y[k] = z;
                                flux(&y, k)
                            },
                            x[k],
                            h,
                        )
                    })
                    .sum();
                div + p.forcing(x, t)
            }
            ProblemId::NSVorticity2D => unreachable!(),
        };
        ut - rhs
    }

    #[test]
    fn closed_forms_satisfy_their_pdes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for id in ProblemId::ALL {
            for v in id.variants() {
                let p = catalog(id, v).unwrap();
                if !p.has_exact() {
                    continue;
                }
                let tol = if id == ProblemId::NonlinearDiff2D { 1e-8 } else { 1e-9 };
                let samples = if id == ProblemId::NonlinearDiff2D { 1000 } else { 100 };
                for _ in 0..samples {
                    let x: Vec<f64> = (0..p.dim()).map(|k| rng.gen_range(p.lo()[k]..p.hi()[k])).collect();
                    let t = rng.gen_range(0.0..1.0);
                    let r = pde_residual(&p, &x, t);
                    assert!(r.abs() < tol, "{id}/{v} residual {r:e} at {x:?}, t={t}");
                }
            }
        }
    }

    #[test]
    fn heat_residual_is_tiny_with_exact_derivatives() {
        // u = e^{-2t} sin(x+y): u_t = -2u, Δu = -2u
        let p = catalog(ProblemId::Heat2D, "sin").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
            let t = rng.gen_range(0.0..2.0);
            let u = p.exact(&x, t).unwrap();
            let expected = (-2.0 * t).exp() * (x[0] + x[1]).sin();
            assert!((u - expected).abs() < 1e-15);
            assert!(pde_residual(&p, &x, t).abs() < 1e-9);
        }
    }

    #[test]
    fn forcing_at_origin_and_symmetry() {
        for t in [0.0, 0.3, 1.0] {
            assert!((nonlinear_forcing(&[0.0, 0.0], t) + 4.0 * (-t).exp()).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let r: f64 = rng.gen_range(0.0..1.0);
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let b: f64 = rng.gen_range(0.0..2.0 * PI);
            let t = rng.gen_range(0.0..1.0);
            let f1 = nonlinear_forcing(&[r * a.cos(), r * a.sin()], t);
            let f2 = nonlinear_forcing(&[r * b.cos(), r * b.sin()], t);
            assert!((f1 - f2).abs() < 1e-13);
        }
        assert!(derive_forcing(&catalog(ProblemId::Heat2D, "sin").unwrap()).is_err());
    }

    #[test]
    fn printed_forcing_sign_differs_from_manufactured_one() {
        // The variant with e^{-r}, r = -2 e^{-t} u, leaves a residual away from the origin.
        let printed = |x: &[f64], t: f64| {
            let u = (-t).exp() * 0.5 * (x[0] * x[0] + x[1] * x[1]);
            let r = -2.0 * (-t).exp() * u;
            (4.0 * (-2.0 * t - r).exp() - 1.0) * u - 2.0 * (-t).exp() * ((-r).exp() + 1.0)
        };
        let p = catalog(ProblemId::NonlinearDiff2D, "quadratic").unwrap();
        let x = [0.8, -0.6];
        assert!(pde_residual(&p, &x, 0.2).abs() < 1e-8);
        assert!((printed(&x, 0.2) - nonlinear_forcing(&x, 0.2)).abs() > 1e-2);
        assert_eq!(printed(&[0.0, 0.0], 0.5), nonlinear_forcing(&[0.0, 0.0], 0.5));
    }

    #[test]
    fn operator_on_simple_fields() {
        let heat = catalog(ProblemId::Heat2D, "sin").unwrap();
        let g = GridSpec::cube(2, 0.0, 2.0 * PI, 8).unwrap();
        let c = Field::constant(&g, 3.0, 0.0).unwrap();
        let pc = apply_ghost(&c, &BoundaryCondition::Periodic, 0.0).unwrap();
        assert!(spatial_operator(&heat, &pc).iter().all(|v| v.abs() < 1e-12));

        // u = x² + y² with exact ghosts: central second differences give 4 exactly
        let g = GridSpec::cube(2, 0.0, 1.0, 8).unwrap();
        let quad = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let centers: Vec<f64> = g.cell_centers().iter().map(|x| quad(x)).collect();
        let f = Field::new(g.clone(), centers, 0.0).unwrap();
        let h = g.dx()[0];
        // the cell average of x² + y² exceeds its centre value by h²/6
        let bc = BoundaryCondition::dirichlet(move |x, _| quad(x) - h * h / 6.0);
        let p = apply_ghost(&f, &bc, 0.0).unwrap();
        for m in 0..g.len() {
            let idx = g.multi_index(m).unwrap();
            let v = flux_divergence(&heat, &p, &idx);
            assert!((v - 4.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn pme_operator_on_linear_field() {
        let pme = catalog(ProblemId::PME2D, "offset15").unwrap();
        let g = GridSpec::cube(2, 0.0, 1.0, 16).unwrap();
        let f = cell_average(&g, |x| x[0], 4).unwrap();
        let p = apply_ghost(&f, &BoundaryCondition::dirichlet(|x, _| x[0]), 0.0).unwrap();
        for m in 0..g.len() {
            let idx = g.multi_index(m).unwrap();
            let x = g.cell_center(&idx)[0];
            assert!((flux_divergence(&pme, &p, &idx) - 0.4 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn vortex_velocity_is_discretely_divergence_free() {
        let g = GridSpec::cube(2, 0.0, 2.0 * PI, 16).unwrap();
        let h = g.dx()[0];
        for x in g.cell_centers() {
            let wx = |a: f64| vortex_velocity(&[a, x[1]])[0];
            let wy = |b: f64| vortex_velocity(&[x[0], b])[1];
            let div = (wx(x[0] + h) - wx(x[0] - h)) / (2.0 * h) + (wy(x[1] + h) - wy(x[1] - h)) / (2.0 * h);
            assert!(div.abs() < 1e-12);
        }
    }

    #[test]
    fn exact_targets_separate_in_time() {
        let p = catalog(ProblemId::Heat2D, "sin").unwrap();
        let g = p.grid_for_dx(PI / 4.0).unwrap();
        let (a, b) = generate_target(&p, &g, PI / 4.0, TargetMode::ExactAverages).unwrap();
        let factor = (-2.0 * PI / 4.0).exp();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((y - factor * x).abs() < 1e-12);
        }
        assert_eq!(b.time(), PI / 4.0);
    }

    #[test]
    fn zero_step_target_is_identity() {
        let p = catalog(ProblemId::PME2D, "offset15").unwrap();
        let g = p.grid_for_dx(0.25).unwrap();
        for mode in [TargetMode::ExactAverages, TargetMode::FdReference] {
            let (a, b) = generate_target(&p, &g, 0.0, mode).unwrap();
            assert_eq!(a.values(), b.values());
        }
        let ns = catalog(ProblemId::NSVorticity2D, "2cosy_sinx").unwrap();
        let g = ns.grid_for_dx(PI / 4.0).unwrap();
        assert!(generate_target(&ns, &g, 0.1, TargetMode::ExactAverages).is_err());
    }

    #[test]
    fn heat_reference_conserves_mean() {
        let p = catalog(ProblemId::Heat2D, "cos_pi3").unwrap();
        let g = p.grid_for_dx(PI / 8.0).unwrap();
        let mut u = p.initial_field(&g).unwrap();
        let mean = |f: &Field| f.values().iter().sum::<f64>() / f.values().len() as f64;
        let m0 = mean(&u);
        let step = p.stable_step(&g, 1.0);
        for n in 1..=20 {
            let next = fd_evolve(&p, &u, n as f64 * step).unwrap();
            assert!((mean(&next) - mean(&u)).abs() < 1e-12);
            u = next;
        }
        assert!((mean(&u) - m0).abs() < 1e-12);
    }

    fn reference_error(p: &ProblemSpec, cells_dx: f64, t: f64) -> f64 {
        let g = p.grid_for_dx(cells_dx).unwrap();
        let (_, fd) = generate_target(p, &g, t, TargetMode::FdReference).unwrap();
        let exact = p.exact_field(&g, t).unwrap();
        let ds = g.cell_measure();
        fd.values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b) * (a - b) * ds)
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn reference_self_converges_at_second_order() {
        let cases: [(ProblemId, &str, f64, f64); 6] = [
            (ProblemId::Heat2D, "sin", PI / 8.0, PI / 4.0),
            (ProblemId::ConvDiff2D, "cos", PI / 8.0, 0.5),
            (ProblemId::AnisoDiff2D, "sin", PI / 8.0, PI / 4.0),
            (ProblemId::NonlinearDiff2D, "quadratic", 0.25, 0.25),
            (ProblemId::PME2D, "offset11", 0.25, 0.25),
            (ProblemId::Heat3D, "cos", PI / 4.0, 0.2),
        ];
        for (id, v, h, t) in cases {
            let p = catalog(id, v).unwrap();
            let e1 = reference_error(&p, h, t);
            let e2 = reference_error(&p, h / 2.0, t);
            let e3 = reference_error(&p, h / 4.0, t);
            let o1 = (e1 / e2).log2();
            let o2 = (e2 / e3).log2();
            assert!(o1 >= 1.9 && o2 >= 1.9, "{id}/{v}: errors {e1:e} {e2:e} {e3:e}, orders {o1:.2} {o2:.2}");
        }
    }

    #[test]
    fn grid_for_dx_requires_integral_cell_count() {
        let p = catalog(ProblemId::Heat2D, "sin").unwrap();
        assert_eq!(p.grid_for_dx(PI / 16.0).unwrap().counts(), &[32, 32]);
        assert!(p.grid_for_dx(0.3).is_err());
        let p = catalog(ProblemId::Heat3D, "sin").unwrap();
        assert_eq!(p.grid_for_dx(PI / 16.0).unwrap().counts(), &[16, 16, 16]);
    }
}
