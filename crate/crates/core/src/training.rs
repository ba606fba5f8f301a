//! Minimisation of the cell-measure weighted squared loss
//! `L(Θ) = Σ_m (ū^n_m + N(V_m; Θ) - ū^{n+1}_m)^2 ΔS`.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Gradients, MlpParams};
use crate::stencil::LearningSet;

/// Loss growth (relative to the initial loss) that counts as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;
/// Step-halving restarts allowed before training gives up.
const MAX_RESTARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Full-batch adaptive moment estimation.
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    /// Plain descent on one pair at a time, pairs visited in seeded shuffled epochs.
    Sgd { learning_rate: f64 },
    /// Plain full-batch gradient descent.
    GradientDescent { learning_rate: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Optimizer {
    pub fn learning_rate(&self) -> f64 {
        match *self {
            Optimizer::Adam { learning_rate, .. }
            | Optimizer::Sgd { learning_rate }
            | Optimizer::GradientDescent { learning_rate } => learning_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Split {
    /// Train on every pair.
    #[default]
    Full,
    /// Train on a seeded random fraction, hold out the rest.
    RandomSplit { train_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Maximum number of parameter updates.
    pub max_iters: usize,
    /// Stop as soon as the loss is at or below this value.
    pub tolerance: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub split: Split,
    /// Stride between recorded loss values.
    pub log_every: usize,
    /// Update only the output layer (hidden layers frozen).
    pub output_layer_only: bool,
    /// Update biases; when false they keep their initial (zero) values.
    pub train_biases: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tolerance: 1e-6,
            optimizer: Optimizer::default(),
            seed: 0,
            split: Split::Full,
            log_every: 100,
            output_layer_only: false,
            train_biases: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::config("tolerance must be positive"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be at least 1"));
        }
        let lr = self.optimizer.learning_rate();
        if lr.is_nan() || lr <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        if let Optimizer::Adam { beta1, beta2, epsilon, .. } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon.is_nan() || epsilon <= 0.0 {
                return Err(Error::config("adam moments must lie in [0, 1) and epsilon must be positive"));
            }
        }
        if let Split::RandomSplit { train_fraction } = self.split {
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(Error::config(format!(
                    "train_fraction must lie strictly between 0 and 1, got {train_fraction}"
                )));
            }
        }
        Ok(())
    }
}

/// Loss values recorded during training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub iterations: Vec<usize>,
    pub losses: Vec<f64>,
}

impl LossHistory {
    fn push(&mut self, iteration: usize, loss: f64) {
        if self.iterations.last() == Some(&iteration) {
            return;
        }
        self.iterations.push(iteration);
        self.losses.push(loss);
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn last(&self) -> Option<(usize, f64)> {
        Some((*self.iterations.last()?, *self.losses.last()?))
    }

    /// Running minimum of the recorded losses.
    pub fn running_min(&self) -> Vec<f64> {
        self.losses
            .iter()
            .scan(f64::INFINITY, |m, &l| {
                *m = m.min(l);
                Some(*m)
            })
            .collect()
    }

    /// Two-column CSV `iteration,loss`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "iteration,loss")?;
        for (i, l) in self.iterations.iter().zip(&self.losses) {
            writeln!(out, "{i},{l:e}")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest recorded loss.
    pub params: MlpParams,
    pub best_loss: f64,
    pub history: LossHistory,
    /// Parameter updates performed.
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub final_learning_rate: f64,
}

fn inputs_view(set: &LearningSet) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((set.len(), set.input_width()), set.inputs())
        .expect("learning set inputs are row-major (len, width)")
}

fn check_set(params: &MlpParams, set: &LearningSet) -> Result<()> {
    if set.is_empty() {
        return Err(Error::config("learning set is empty"));
    }
    if params.input_width() != set.input_width() {
        return Err(Error::Shape {
            expected: params.input_width(),
            got: set.input_width(),
        });
    }
    Ok(())
}

/// Residuals `prediction - target` for every pair.
fn residuals(params: &MlpParams, set: &LearningSet) -> Result<(crate::network::BatchPass, Array1<f64>)> {
    let pass = params.forward_batch(inputs_view(set))?;
    let centers = ArrayView1::from(set.center_inputs());
    let targets = ArrayView1::from(set.targets());
    let r = pass.output() + &centers - targets;
    Ok((pass, r))
}

/// Squared loss weighted by the cell measure, summed in set order.
pub fn loss(params: &MlpParams, set: &LearningSet, cell_measure: f64) -> Result<f64> {
    check_set(params, set)?;
    let (_, r) = residuals(params, set)?;
    Ok(r.iter().map(|e| e * e).sum::<f64>() * cell_measure)
}

/// Exact gradient of [`loss`].
pub fn loss_gradient(params: &MlpParams, set: &LearningSet, cell_measure: f64) -> Result<Gradients> {
    Ok(loss_and_gradient(params, set, cell_measure)?.1)
}

pub fn loss_and_gradient(
    params: &MlpParams,
    set: &LearningSet,
    cell_measure: f64,
) -> Result<(f64, Gradients)> {
    check_set(params, set)?;
    let (pass, r) = residuals(params, set)?;
    let value = r.iter().map(|e| e * e).sum::<f64>() * cell_measure;
    let upstream = r * (2.0 * cell_measure);
    let grads = params.backward_batch(inputs_view(set), &pass, upstream.view());
    Ok((value, grads))
}

/// Seeded random partition into `round(fraction * N)` training pairs and the rest.
///
/// Both halves keep the original (ascending cell id) order.
pub fn split_set(set: &LearningSet, fraction: f64, seed: u64) -> Result<(LearningSet, LearningSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!(
            "split fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    let n = set.len();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::config(format!(
            "splitting {n} pairs at fraction {fraction} leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((set.select(train), set.select(test)))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn update(&mut self, params: &mut MlpParams, grads: &Gradients, lr: f64, b1: f64, b2: f64, eps: f64) {
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (((p, g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Trains from `init` and returns the parameters with the lowest recorded loss.
///
/// The loss is weighted by the set's cell measure. Training stops after
/// `max_iters` updates or once the loss reaches `tolerance`. A non-finite loss or
/// one that grows past `1e6` times the initial value restarts from the best
/// parameters with half the step size, at most three times.
pub fn train(set: &LearningSet, config: &TrainConfig, init: &MlpParams) -> Result<TrainOutcome> {
    config.validate()?;
    check_set(init, set)?;
    let cell_measure = set.cell_measure();
    match config.optimizer {
        Optimizer::Sgd { .. } => train_per_sample(set, cell_measure, config, init),
        _ => train_full_batch(set, cell_measure, config, init),
    }
}

struct Tracker {
    best: MlpParams,
    best_loss: f64,
    initial_loss: f64,
    history: LossHistory,
}

impl Tracker {
    fn new(init: &MlpParams, initial_loss: f64) -> Self {
        Self {
            best: init.clone(),
            best_loss: f64::INFINITY,
            initial_loss,
            history: LossHistory::default(),
        }
    }

    fn diverged(&self, loss: f64) -> bool {
        !loss.is_finite() || loss > DIVERGENCE_FACTOR * self.initial_loss.max(f64::MIN_POSITIVE)
    }

    fn observe(&mut self, params: &MlpParams, loss: f64) {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best = params.clone();
        }
    }
}

fn train_full_batch(
    set: &LearningSet,
    cell_measure: f64,
    config: &TrainConfig,
    init: &MlpParams,
) -> Result<TrainOutcome> {
    let mut params = init.clone();
    let mut lr = config.optimizer.learning_rate();
    let mut adam = AdamState::new(params.param_count());
    let mut tracker: Option<Tracker> = None;
    let mut restarts = 0;
    let mut converged = false;
    let mut updates = 0;

    let mut iteration = 0;
    loop {
        let (value, mut grads) = loss_and_gradient(&params, set, cell_measure)?;
        let t = tracker.get_or_insert_with(|| Tracker::new(&params, value));
        if t.diverged(value) {
            if restarts == MAX_RESTARTS {
                return Err(Error::Divergence {
                    iteration,
                    loss: value,
                    step: lr,
                });
            }
            restarts += 1;
            lr *= 0.5;
            log::warn!("loss {value:e} at iteration {iteration}; restarting from best with step {lr:e}");
            params = t.best.clone();
            adam = AdamState::new(params.param_count());
            continue;
        }
        t.observe(&params, value);
        if iteration % config.log_every == 0 || iteration == config.max_iters || value <= config.tolerance {
            t.history.push(iteration, value);
        }
        if value <= config.tolerance {
            converged = true;
            break;
        }
        if iteration == config.max_iters {
            break;
        }
        if config.output_layer_only {
            grads.zero_hidden();
        }
        if !config.train_biases {
            grads.zero_biases();
        }
        match config.optimizer {
            Optimizer::Adam { beta1, beta2, epsilon, .. } => {
                adam.update(&mut params, &grads, lr, beta1, beta2, epsilon)
            }
            _ => params.add_scaled(&grads, -lr),
        }
        updates += 1;
        iteration += 1;
    }
    let t = tracker.expect("at least one loss evaluation");
    Ok(TrainOutcome {
        params: t.best,
        best_loss: t.best_loss,
        history: t.history,
        iterations: updates,
        converged,
        restarts,
        final_learning_rate: lr,
    })
}

fn train_per_sample(
    set: &LearningSet,
    cell_measure: f64,
    config: &TrainConfig,
    init: &MlpParams,
) -> Result<TrainOutcome> {
    let mut params = init.clone();
    let mut lr = config.optimizer.learning_rate();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut cursor = order.len();
    let initial = loss(&params, set, cell_measure)?;
    let mut tracker = Tracker::new(&params, initial);
    let mut restarts = 0;
    let mut converged = false;
    let mut iteration = 0;
    loop {
        if iteration % config.log_every == 0 || iteration == config.max_iters {
            let value = loss(&params, set, cell_measure)?;
            if tracker.diverged(value) {
                if restarts == MAX_RESTARTS {
                    return Err(Error::Divergence {
                        iteration,
                        loss: value,
                        step: lr,
                    });
                }
                restarts += 1;
                lr *= 0.5;
                log::warn!("loss {value:e} at update {iteration}; restarting from best with step {lr:e}");
                params = tracker.best.clone();
                continue;
            }
            tracker.observe(&params, value);
            tracker.history.push(iteration, value);
            if value <= config.tolerance {
                converged = true;
                break;
            }
        }
        if iteration == config.max_iters {
            break;
        }
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let m = order[cursor];
        cursor += 1;
        let v = set.input(m);
        let r = params.predict_cell(v, set.center_inputs()[m])? - set.targets()[m];
        let mut grads = params.backward(v, 2.0 * r * cell_measure)?;
        if config.output_layer_only {
            grads.zero_hidden();
        }
        if !config.train_biases {
            grads.zero_biases();
        }
        params.add_scaled(&grads, -lr);
        iteration += 1;
    }
    Ok(TrainOutcome {
        params: tracker.best,
        best_loss: tracker.best_loss,
        history: tracker.history,
        iterations: iteration,
        converged,
        restarts,
        final_learning_rate: lr,
    })
}
