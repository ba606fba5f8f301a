//! Declarative experiments: one TOML file describes one table of runs.
//!
//! For every mesh and time step the runner generates the training pair on the
//! training variant, trains one network per seed, marches every test variant to
//! the final time and reports errors against the reference solution.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{Checkpoint, Metadata};
use crate::error::{Error, Result};
use crate::evolve::{convergence_order, error_norms, march, write_field_csv, ErrorReport, MarchPlan};
use crate::grid::{Field, GridSpec};
use crate::network::MlpParams;
use crate::problems::{catalog, fd_evolve, generate_target, ProblemId, ProblemSpec, TargetMode};
use crate::stencil::{assemble_pairs, LearningSet, StencilKind, StencilSpec};
use crate::training::{split_set, train, Split, TrainConfig};

/// Variant label of the held-out pairs in the split regime.
pub const HOLDOUT_VARIANT: &str = "holdout_t1";

/// A real number written either literally or as an expression such as `"pi/16"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

impl Scalar {
    pub fn value(&self) -> Result<f64> {
        match self {
            Scalar::Number(x) => Ok(*x),
            Scalar::Expr(s) => parse_scalar(s),
        }
    }

    /// File-name friendly rendering.
    pub fn label(&self) -> String {
        let raw = match self {
            Scalar::Number(x) => x.to_string(),
            Scalar::Expr(s) => s.clone(),
        };
        raw.chars()
            .filter(|c| !c.is_whitespace() && *c != '*')
            .map(|c| match c {
                '/' => '_',
                '.' => 'p',
                c => c,
            })
            .collect()
    }
}

/// Evaluates products and quotients of numbers and `pi`, e.g. `"pi/16"`, `"3*pi/4"`, `"2pi"`, `"1/32"`.
pub fn parse_scalar(text: &str) -> Result<f64> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::config(format!("cannot parse '{text}' as a number (use forms like 0.25, pi/16, 3*pi/4)"));
    if compact.is_empty() {
        return Err(bad());
    }
    let mut value = 1.0;
    let mut divide = false;
    let mut token = String::new();
    let mut apply = |token: &str, divide: bool| -> Result<()> {
        let factor = parse_factor(token).ok_or_else(bad)?;
        if divide {
            if factor == 0.0 {
                return Err(Error::config(format!("division by zero in '{text}'")));
            }
            value /= factor;
        } else {
            value *= factor;
        }
        Ok(())
    };
    for c in compact.chars() {
        if c == '*' || c == '/' {
            apply(&token, divide)?;
            token.clear();
            divide = c == '/';
        } else {
            token.push(c);
        }
    }
    apply(&token, divide)?;
    Ok(value)
}

fn parse_factor(token: &str) -> Option<f64> {
    let lower = token.to_ascii_lowercase();
    match lower.strip_suffix("pi") {
        Some("") => Some(std::f64::consts::PI),
        Some(coef) => coef.parse::<f64>().ok().map(|c| c * std::f64::consts::PI),
        None => lower.parse::<f64>().ok().filter(|x| x.is_finite()),
    }
}

fn default_gain() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

/// One experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemId,
    /// Variant providing the training pair; defaults to the problem's first variant.
    #[serde(default)]
    pub train_variant: Option<String>,
    /// Variants marched to the final time with the trained network.
    pub test_variants: Vec<String>,
    /// Cell widths, coarse to fine.
    pub meshes: Vec<Scalar>,
    /// Time steps as multiples of the cell width.
    #[serde(default)]
    pub dt_factors: Vec<f64>,
    /// Absolute time steps (used instead of `dt_factors`).
    #[serde(default)]
    pub dt_values: Vec<Scalar>,
    pub final_time: Scalar,
    pub stencil: StencilKind,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Multiplier on the Glorot bound of the initial weights.
    #[serde(default = "default_gain")]
    pub init_gain: f64,
    #[serde(default)]
    pub target_mode: TargetMode,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
}

/// Mesh/time-step pair of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPoint {
    pub mesh_index: usize,
    pub dt_index: usize,
    pub dx: f64,
    pub dt: f64,
    pub mesh_label: String,
    pub dt_label: String,
}

/// Hashed view of a config: every field that changes results, with expressions evaluated.
#[derive(Serialize)]
struct Canonical<'a> {
    problem: &'a str,
    train_variant: &'a str,
    test_variants: &'a [String],
    meshes: Vec<f64>,
    dt_factors: &'a [f64],
    dt_values: Vec<f64>,
    final_time: f64,
    stencil: StencilKind,
    hidden: &'a [usize],
    init_gain: f64,
    target_mode: TargetMode,
    seeds: &'a [u64],
    train: &'a TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn train_variant(&self) -> &str {
        self.train_variant
            .as_deref()
            .unwrap_or_else(|| self.problem.default_train_variant())
    }

    pub fn train_problem(&self) -> Result<ProblemSpec> {
        catalog(self.problem, self.train_variant())
    }

    pub fn stencil_spec(&self) -> StencilSpec {
        StencilSpec::new(self.stencil, self.problem.dim())
    }

    /// Layer widths `[input, hidden.., 1]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.stencil_spec().input_width()];
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }

    pub fn final_time_value(&self) -> Result<f64> {
        self.final_time.value()
    }

    /// Every (mesh, dt) combination, meshes outermost.
    pub fn run_points(&self) -> Result<Vec<RunPoint>> {
        let mut points = Vec::new();
        for (i, mesh) in self.meshes.iter().enumerate() {
            let dx = mesh.value()?;
            if self.dt_values.is_empty() {
                for (j, f) in self.dt_factors.iter().enumerate() {
                    points.push(RunPoint {
                        mesh_index: i,
                        dt_index: j,
                        dx,
                        dt: f * dx,
                        mesh_label: mesh.label(),
                        dt_label: format!("{}dx", Scalar::Number(*f).label()),
                    });
                }
            } else {
                for (j, v) in self.dt_values.iter().enumerate() {
                    points.push(RunPoint {
                        mesh_index: i,
                        dt_index: j,
                        dx,
                        dt: v.value()?,
                        mesh_label: mesh.label(),
                        dt_label: format!("dt{}", v.label()),
                    });
                }
            }
        }
        Ok(points)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let train = self.train_problem()?;
        if self.test_variants.is_empty() {
            return Err(Error::config("test_variants must name at least one variant"));
        }
        for v in &self.test_variants {
            catalog(self.problem, v)?;
        }
        if self.meshes.is_empty() {
            return Err(Error::config("meshes must list at least one cell width"));
        }
        if self.dt_factors.is_empty() == self.dt_values.is_empty() {
            return Err(Error::config("give exactly one of dt_factors or dt_values"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden must list at least one non-zero layer width"));
        }
        if !(self.init_gain.is_finite() && self.init_gain > 0.0) {
            return Err(Error::config(format!("init_gain must be positive, got {}", self.init_gain)));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.target_mode == TargetMode::ExactAverages && !train.has_exact() {
            return Err(Error::config(format!(
                "target_mode exact_averages needs a closed-form solution, which {} lacks",
                self.problem
            )));
        }
        let t = self.final_time_value()?;
        for p in self.run_points()? {
            train.grid_for_dx(p.dx)?;
            MarchPlan::new(p.dt, t, crate::grid::BoundaryCondition::Periodic, self.stencil_spec()).map_err(|e| {
                Error::config(format!("mesh {} with dt {}: {e}", p.mesh_label, p.dt_label))
            })?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything except `name` and `output_dir`.
    pub fn config_hash(&self) -> Result<String> {
        let canonical = Canonical {
            problem: self.problem.key(),
            train_variant: self.train_variant(),
            test_variants: &self.test_variants,
            meshes: self.meshes.iter().map(Scalar::value).collect::<Result<_>>()?,
            dt_factors: &self.dt_factors,
            dt_values: self.dt_values.iter().map(Scalar::value).collect::<Result<_>>()?,
            final_time: self.final_time_value()?,
            stencil: self.stencil,
            hidden: &self.hidden,
            init_gain: self.init_gain,
            target_mode: self.target_mode,
            seeds: &self.seeds,
            train: &self.train,
        };
        let json = serde_json::to_string(&canonical)?;
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// One line of `runs.csv` / `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub problem: String,
    pub variant: String,
    pub stencil: String,
    pub dx: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub final_time: f64,
    pub seed: u64,
    pub l2: f64,
    pub linf: f64,
    pub order_l2: Option<f64>,
    pub order_linf: Option<f64>,
    pub train_loss_final: f64,
    pub wall_seconds: f64,
    pub status: String,
    #[serde(skip)]
    pub mesh_index: usize,
    #[serde(skip)]
    pub dt_index: usize,
}

impl RunRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Everything measured for one (mesh, dt, seed).
#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub mesh: String,
    pub dt_label: String,
    pub dx: f64,
    pub dt: f64,
    pub seed: u64,
    pub status: String,
    pub message: Option<String>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub train_loss_final: f64,
    /// Last recorded loss values.
    pub loss_tail: Vec<f64>,
    pub wall_seconds: f64,
    /// Per test variant: error at the final time.
    pub errors: BTreeMap<String, ErrorReport>,
    /// Per test variant: peak max-norm over the initial max-norm.
    pub growth: BTreeMap<String, f64>,
    pub holdout: Option<ErrorReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub name: String,
    pub config_hash: String,
    pub problem: String,
    pub runs: Vec<SeedRun>,
    /// All seeds.
    pub rows: Vec<RunRow>,
    /// Lowest-L2 seed per (mesh, dt, variant), with convergence orders across meshes.
    pub best: Vec<RunRow>,
}

impl RunRecord {
    /// Exit code reflecting the first failure kind, 0 when every run succeeded.
    pub fn exit_code(&self) -> i32 {
        if self.runs.iter().any(|r| r.status == "diverged") {
            3
        } else if self.runs.iter().any(|r| r.status == "blow_up") {
            4
        } else {
            0
        }
    }

    pub fn best_row(&self, variant: &str, mesh_index: usize, dt_index: usize) -> Option<&RunRow> {
        self.best
            .iter()
            .find(|r| r.variant == variant && r.mesh_index == mesh_index && r.dt_index == dt_index)
    }
}

/// Reference cell averages of `spec` at time `t`.
pub fn reference_field(spec: &ProblemSpec, grid: &GridSpec, t: f64) -> Result<Field> {
    if spec.has_exact() {
        spec.exact_field(grid, t)
    } else {
        fd_evolve(spec, &spec.initial_field(grid)?, t)
    }
}

/// Held-out prediction errors `sqrt(Σ r² ΔS)` and `max |r|`.
fn holdout_errors(params: &MlpParams, set: &LearningSet, dx: f64, dt: f64) -> Result<ErrorReport> {
    let mut sum = 0.0;
    let mut linf: f64 = 0.0;
    for m in 0..set.len() {
        let r = params.predict_cell(set.input(m), set.center_inputs()[m])? - set.targets()[m];
        sum += r * r;
        linf = linf.max(r.abs());
    }
    Ok(ErrorReport {
        l2: (sum * set.cell_measure()).sqrt(),
        linf,
        time: dt,
        dx,
        dt,
    })
}

struct Outputs {
    root: PathBuf,
}

impl Outputs {
    fn create(root: &Path) -> Result<Self> {
        for sub in ["checkpoints", "losses", "fields"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    fn path(&self, sub: &str, name: String) -> PathBuf {
        self.root.join(sub).join(name)
    }
}

/// Runs the whole experiment; writes reports under `out` (or the config's `output_dir`) when given.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunRecord> {
    config.validate()?;
    let hash = config.config_hash()?;
    let outputs = match out.or(config.output_dir.as_deref()) {
        Some(dir) => Some(Outputs::create(dir)?),
        None => None,
    };
    let train_spec = config.train_problem()?;
    let tests: Vec<ProblemSpec> = config
        .test_variants
        .iter()
        .map(|v| catalog(config.problem, v))
        .collect::<Result<_>>()?;
    let stencil = config.stencil_spec();
    let sizes = config.sizes();
    let t_final = config.final_time_value()?;
    let holdout_fraction = match config.train.split {
        Split::RandomSplit { train_fraction } => Some(train_fraction),
        Split::Full => None,
    };

    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut references: BTreeMap<(usize, usize), Field> = BTreeMap::new();

    for point in config.run_points()? {
        let grid = train_spec.grid_for_dx(point.dx)?;
        log::info!(
            "{}: mesh {} ({} cells), dt {}",
            config.name,
            point.mesh_label,
            grid.len(),
            point.dt_label
        );
        let (t0, t1) = generate_target(&train_spec, &grid, point.dt, config.target_mode)?;
        let pairs = assemble_pairs(&t0, &t1, &train_spec.bc(), &stencil)?;
        for (v, spec) in tests.iter().enumerate() {
            if let std::collections::btree_map::Entry::Vacant(slot) = references.entry((point.mesh_index, v)) {
                slot.insert(reference_field(spec, &grid, t_final)?);
            }
        }

        for &seed in &config.seeds {
            let started = Instant::now();
            let mut tc = config.train.clone();
            tc.seed = seed;
            let (train_set, held_out) = match holdout_fraction {
                Some(f) => {
                    let (a, b) = split_set(&pairs, f, seed)?;
                    (a, Some(b))
                }
                None => (pairs.clone(), None),
            };
            let init = MlpParams::init_with_gain(&sizes, seed, config.init_gain)?;
            let mut run = SeedRun {
                mesh: point.mesh_label.clone(),
                dt_label: point.dt_label.clone(),
                dx: point.dx,
                dt: point.dt,
                seed,
                status: "ok".into(),
                message: None,
                iterations: 0,
                converged: false,
                restarts: 0,
                train_loss_final: f64::NAN,
                loss_tail: Vec::new(),
                wall_seconds: 0.0,
                errors: BTreeMap::new(),
                growth: BTreeMap::new(),
                holdout: None,
            };
            let row = |variant: &str, report: Option<&ErrorReport>, loss: f64, status: &str| RunRow {
                problem: config.problem.key().into(),
                variant: variant.into(),
                stencil: config.stencil.as_str().into(),
                dx: point.dx,
                dt: point.dt,
                final_time: if variant == HOLDOUT_VARIANT { point.dt } else { t_final },
                seed,
                l2: report.map_or(f64::NAN, |r| r.l2),
                linf: report.map_or(f64::NAN, |r| r.linf),
                order_l2: None,
                order_linf: None,
                train_loss_final: loss,
                wall_seconds: 0.0,
                status: status.into(),
                mesh_index: point.mesh_index,
                dt_index: point.dt_index,
            };

            let outcome = match train(&train_set, &tc, &init) {
                Ok(o) => o,
                Err(e @ Error::Divergence { .. }) => {
                    log::warn!("seed {seed}: {e}");
                    run.status = "diverged".into();
                    run.message = Some(e.to_string());
                    run.wall_seconds = started.elapsed().as_secs_f64();
                    let mut seed_rows: Vec<RunRow> =
                        config.test_variants.iter().map(|v| row(v, None, f64::NAN, "diverged")).collect();
                    if held_out.is_some() {
                        seed_rows.insert(0, row(HOLDOUT_VARIANT, None, f64::NAN, "diverged"));
                    }
                    for r in &mut seed_rows {
                        r.wall_seconds = run.wall_seconds;
                    }
                    rows.extend(seed_rows);
                    runs.push(run);
                    continue;
                }
                Err(e) => return Err(e),
            };
            run.iterations = outcome.iterations;
            run.converged = outcome.converged;
            run.restarts = outcome.restarts;
            run.train_loss_final = outcome.best_loss;
            let tail_start = outcome.history.losses.len().saturating_sub(10);
            run.loss_tail = outcome.history.losses[tail_start..].to_vec();
            log::info!(
                "seed {seed}: loss {:e} after {} updates",
                outcome.best_loss,
                outcome.iterations
            );

            let mut seed_rows = Vec::new();
            if let Some(held) = &held_out {
                let report = holdout_errors(&outcome.params, held, point.dx, point.dt)?;
                seed_rows.push(row(HOLDOUT_VARIANT, Some(&report), outcome.best_loss, "ok"));
                run.holdout = Some(report);
            }
            for (v, spec) in tests.iter().enumerate() {
                let variant = &config.test_variants[v];
                let plan = MarchPlan::new(point.dt, t_final, spec.bc(), stencil.clone())?;
                let start = spec.initial_field(&grid)?;
                match march(&outcome.params, &start, &plan) {
                    Ok(m) => {
                        let report = error_norms(&m.field, &references[&(point.mesh_index, v)])?.with_dt(point.dt);
                        run.growth.insert(variant.clone(), m.growth());
                        run.errors.insert(variant.clone(), report);
                        seed_rows.push(row(variant, Some(&report), outcome.best_loss, "ok"));
                        if let Some(o) = &outputs {
                            let name = format!("{variant}_{}_{}_seed{seed}.csv", point.mesh_label, point.dt_label);
                            write_field_csv(&m.field, &o.path("fields", name))?;
                        }
                    }
                    Err(e @ Error::BlowUp { .. }) => {
                        log::warn!("seed {seed}, variant {variant}: {e}");
                        run.status = "blow_up".into();
                        run.message = Some(e.to_string());
                        seed_rows.push(row(variant, None, outcome.best_loss, "blow_up"));
                    }
                    Err(e) => return Err(e),
                }
            }
            run.wall_seconds = started.elapsed().as_secs_f64();
            for r in &mut seed_rows {
                r.wall_seconds = run.wall_seconds;
            }

            if let Some(o) = &outputs {
                let stem = format!("{}_{}_seed{seed}", point.mesh_label, point.dt_label);
                outcome.history.write_csv(&o.path("losses", format!("{stem}.csv")))?;
                let metadata = Metadata {
                    problem: Some(config.problem.key().into()),
                    variant: Some(config.train_variant().into()),
                    stencil: Some(config.stencil),
                    dim: Some(config.problem.dim()),
                    counts: Some(grid.counts().to_vec()),
                    dx: Some(point.dx),
                    dt: Some(point.dt),
                    final_loss: Some(outcome.best_loss),
                    iterations: Some(outcome.iterations),
                    config_hash: Some(hash.clone()),
                };
                Checkpoint::new(outcome.params.clone(), Some(seed), metadata)
                    .save(&o.path("checkpoints", format!("{stem}.json")))?;
            }
            rows.extend(seed_rows);
            runs.push(run);
        }
    }

    let best = select_best(&rows, config)?;
    let record = RunRecord {
        name: config.name.clone(),
        config_hash: hash,
        problem: config.problem.key().into(),
        runs,
        rows,
        best,
    };
    if let Some(o) = &outputs {
        write_rows(&record.rows, &o.root.join("runs.csv"))?;
        write_rows(&record.best, &o.root.join("results.csv"))?;
        fs::write(o.root.join("table.txt"), format_table(&record, config)?)?;
        fs::write(o.root.join("record.json"), serde_json::to_string_pretty(&record)?)?;
    }
    Ok(record)
}

/// Lowest finite L2 per (mesh, dt, variant); ties go to the earlier seed.
fn select_best(rows: &[RunRow], config: &ExperimentConfig) -> Result<Vec<RunRow>> {
    let mut groups: BTreeMap<(usize, usize, String), RunRow> = BTreeMap::new();
    for r in rows {
        let key = (r.mesh_index, r.dt_index, r.variant.clone());
        match groups.get(&key) {
            Some(current) => {
                let better = r.l2.is_finite() && (!current.l2.is_finite() || r.l2 < current.l2);
                if better {
                    groups.insert(key, r.clone());
                }
            }
            None => {
                groups.insert(key, r.clone());
            }
        }
    }
    let mut variants: Vec<String> = Vec::new();
    if matches!(config.train.split, Split::RandomSplit { .. }) {
        variants.push(HOLDOUT_VARIANT.into());
    }
    variants.extend(config.test_variants.iter().cloned());
    let dt_count = config.dt_factors.len().max(config.dt_values.len());
    let mut best = Vec::new();
    for variant in &variants {
        for j in 0..dt_count {
            let mut series: Vec<RunRow> = (0..config.meshes.len())
                .filter_map(|i| groups.get(&(i, j, variant.clone())).cloned())
                .collect();
            if series.len() > 1 {
                let meshes: Vec<f64> = series.iter().map(|r| r.dx).collect();
                let l2: Vec<f64> = series.iter().map(|r| r.l2).collect();
                let linf: Vec<f64> = series.iter().map(|r| r.linf).collect();
                if let (Ok(o2), Ok(oi)) = (convergence_order(&l2, &meshes), convergence_order(&linf, &meshes)) {
                    for k in 1..series.len() {
                        series[k].order_l2 = o2[k - 1];
                        series[k].order_linf = oi[k - 1];
                    }
                }
            }
            best.extend(series);
        }
    }
    best.sort_by_key(|r| (r.mesh_index, r.dt_index, variants.iter().position(|v| *v == r.variant)));
    Ok(best)
}

pub fn write_rows(rows: &[RunRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Five significant digits in scientific notation, e.g. `3.2872e-4`.
pub fn sci(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4e}")
    } else {
        "failed".into()
    }
}

fn order(o: Option<f64>) -> String {
    o.map_or_else(String::new, |v| format!("{v:.2}"))
}

/// Human-readable table of the best seeds.
pub fn format_table(record: &RunRecord, config: &ExperimentConfig) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "{}", config.name);
    let _ = writeln!(
        s,
        "problem {} (train {}), stencil {}, hidden {:?}, T = {}",
        config.problem,
        config.train_variant(),
        config.stencil,
        config.hidden,
        sci(config.final_time_value()?)
    );
    let _ = writeln!(s, "config {}", record.config_hash);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<12} {:<12} {:<12} {:>5} {:>11} {:>6} {:>11} {:>6} {:>11}",
        "dx", "dt", "variant", "seed", "L2", "order", "Linf", "order", "loss"
    );
    for r in &record.best {
        let _ = writeln!(
            s,
            "{:<12} {:<12} {:<12} {:>5} {:>11} {:>6} {:>11} {:>6} {:>11}",
            sci(r.dx),
            sci(r.dt),
            r.variant,
            r.seed,
            sci(r.l2),
            order(r.order_l2),
            sci(r.linf),
            order(r.order_linf),
            sci(r.train_loss_final)
        );
    }
    Ok(s)
}

/// Loads every `*.toml` in `dir`, sorted by file name.
pub fn load_config_dir(dir: &Path) -> Result<Vec<(PathBuf, ExperimentConfig)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| ExperimentConfig::load(&p).map(|c| (p, c)))
        .collect()
}
