//! Fully connected tanh network with identity output and its residual cell update.
//!
//! A network with layer widths `n_1, .., n_M` has `M - 1` affine maps. Every map
//! except the last is followed by `tanh`; the last one is linear and `n_M = 1`.
//! Weight matrices are stored `(n_{i+1}, n_i)`, row-major.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One affine map `x -> W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            biases: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// The parameter set of the network: every weight matrix and bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Layer>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 {
        return Err(Error::config(format!(
            "network needs at least 3 layers (input, hidden, output), got {:?}",
            sizes
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::config(format!("zero-width layer in {:?}", sizes)));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(Error::config(format!(
            "network output must be scalar, got sizes {:?}",
            sizes
        )));
    }
    Ok(())
}

impl MlpParams {
    /// All-zero parameters; the residual update is then the identity.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    /// Glorot-uniform weights, zero biases, reproducible from `seed`.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        Self::init_with_gain(sizes, seed, 1.0)
    }

    /// Glorot-uniform with the bound multiplied by `gain`; `gain = 1` is [`MlpParams::init`].
    pub fn init_with_gain(sizes: &[usize], seed: u64, gain: f64) -> Result<Self> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::config(format!("init gain must be positive, got {gain}")));
        }
        let mut params = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut params.layers {
            let fan = (layer.inputs() + layer.outputs()) as f64;
            let limit = gain * (6.0 / fan).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for w in layer.weights.iter_mut() {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(params)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::config("network has no layers"));
        };
        let mut sizes = vec![first.inputs()];
        for (k, layer) in layers.iter().enumerate() {
            if layer.inputs() != *sizes.last().unwrap() {
                return Err(Error::config(format!(
                    "layer {k} expects {} inputs but the previous layer has {} outputs",
                    layer.inputs(),
                    sizes.last().unwrap()
                )));
            }
            if layer.biases.len() != layer.outputs() {
                return Err(Error::config(format!(
                    "layer {k} has {} biases for {} outputs",
                    layer.biases.len(),
                    layer.outputs()
                )));
            }
            sizes.push(layer.outputs());
        }
        check_sizes(&sizes)?;
        let params = Self { sizes, layers };
        if params.values().any(|v| !v.is_finite()) {
            return Err(Error::config("network parameters must be finite"));
        }
        Ok(params)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Parameters in a fixed order: per layer, weights row-major then biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    /// Zero-valued gradient buffers with matching shapes.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_width() {
            return Err(Error::Shape {
                expected: self.input_width(),
                got: len,
            });
        }
        Ok(())
    }

    /// Hidden-layer activations for one input (excluding the input itself).
    fn hidden_activations(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let hidden = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(hidden);
        for layer in &self.layers[..hidden] {
            let input: &[f64] = acts.last().map(|a| a.as_slice()).unwrap_or(v);
            let out = (0..layer.outputs())
                .map(|r| {
                    let row = layer.weights.row(r);
                    let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + layer.biases[r];
                    z.tanh()
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    fn output_from(&self, last_hidden: &[f64]) -> f64 {
        let out = self.layers.last().unwrap();
        let row = out.weights.row(0);
        row.iter().zip(last_hidden).map(|(w, h)| w * h).sum::<f64>() + out.biases[0]
    }

    /// Network output `N(v)` for one input vector.
    pub fn forward(&self, v: &[f64]) -> Result<f64> {
        self.check_input(v.len())?;
        let acts = self.hidden_activations(v);
        Ok(self.output_from(acts.last().unwrap()))
    }

    /// Residual cell update `center + N(v)`.
    pub fn predict_cell(&self, v: &[f64], center: f64) -> Result<f64> {
        Ok(center + self.forward(v)?)
    }

    /// Gradient of `upstream * N(v)` with respect to every parameter.
    pub fn backward(&self, v: &[f64], upstream: f64) -> Result<Gradients> {
        self.check_input(v.len())?;
        let acts = self.hidden_activations(v);
        let mut grads = self.zero_gradients();
        let n = self.layers.len();
        // delta = d(upstream * N)/d(pre-activation) of the current layer
        let mut delta = vec![upstream];
        for k in (0..n).rev() {
            let input: &[f64] = if k == 0 { v } else { &acts[k - 1] };
            let g = &mut grads.layers[k];
            for (r, d) in delta.iter().enumerate() {
                for (c, x) in input.iter().enumerate() {
                    g.weights[[r, c]] += d * x;
                }
                g.biases[r] += d;
            }
            if k > 0 {
                let w = &self.layers[k].weights;
                delta = (0..w.ncols())
                    .map(|c| {
                        let back: f64 = delta.iter().enumerate().map(|(r, d)| d * w[[r, c]]).sum();
                        let a = input[c];
                        back * (1.0 - a * a)
                    })
                    .collect();
            }
        }
        Ok(grads)
    }

    /// Forward pass over a batch, rows of `inputs` are samples; keeps hidden activations.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<BatchPass> {
        self.check_input(inputs.ncols())?;
        let hidden = self.layers.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(hidden);
        for layer in &self.layers[..hidden] {
            let mut z = match acts.last() {
                Some(prev) => prev.dot(&layer.weights.t()),
                None => inputs.dot(&layer.weights.t()),
            };
            z += &layer.biases;
            z.mapv_inplace(f64::tanh);
            acts.push(z);
        }
        let out = self.layers.last().unwrap();
        let last = acts.last().unwrap();
        let output = last.dot(&out.weights.row(0)) + out.biases[0];
        Ok(BatchPass { hidden: acts, output })
    }

    /// Sum over samples of the gradients of `upstream[m] * N(inputs[m])`.
    pub fn backward_batch(
        &self,
        inputs: ArrayView2<'_, f64>,
        pass: &BatchPass,
        upstream: ArrayView1<'_, f64>,
    ) -> Gradients {
        let n = self.layers.len();
        let mut grads = self.zero_gradients();
        let mut delta: Array2<f64> = upstream.insert_axis(Axis(1)).to_owned();
        for k in (0..n).rev() {
            let input: ArrayView2<'_, f64> = if k == 0 {
                inputs.view()
            } else {
                pass.hidden[k - 1].view()
            };
            let g = &mut grads.layers[k];
            g.weights = delta.t().dot(&input);
            g.biases = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weights);
                ndarray::Zip::from(&mut back)
                    .and(&input)
                    .for_each(|b, &a| *b *= 1.0 - a * a);
                delta = back;
            }
        }
        grads
    }

    /// Bound on `|N(v)|` for any input: `|b_out| + sum |W_out|` since `|tanh| < 1`.
    pub fn output_bound(&self) -> f64 {
        let out = self.layers.last().unwrap();
        out.biases[0].abs() + out.weights.iter().map(|w| w.abs()).sum::<f64>()
    }

    /// `self += scale * grads`.
    pub fn add_scaled(&mut self, grads: &Gradients, scale: f64) {
        for (p, g) in self.values_mut().zip(grads.values()) {
            *p += scale * g;
        }
    }
}

/// Cached activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct BatchPass {
    hidden: Vec<Array2<f64>>,
    output: Array1<f64>,
}

impl BatchPass {
    /// `N(v_m)` for each sample.
    pub fn output(&self) -> &Array1<f64> {
        &self.output
    }
}

impl Gradients {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.values_mut() {
            *a *= factor;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// Zero every bias entry.
    pub fn zero_biases(&mut self) {
        for layer in &mut self.layers {
            layer.biases.fill(0.0);
        }
    }

    /// Zero every entry outside the output layer.
    pub fn zero_hidden(&mut self) {
        let n = self.layers.len();
        for layer in &mut self.layers[..n - 1] {
            layer.weights.fill(0.0);
            layer.biases.fill(0.0);
        }
    }
}

/// Largest relative error between `backward` and central differences of `forward`.
///
/// The difference is the fourth-order one over `x ± step` and `x ± 2 step`; with
/// `step = 1e-3` its truncation and round-off errors are both near `1e-13`.
pub fn gradient_check(params: &MlpParams, v: &[f64], upstream: f64, step: f64) -> Result<f64> {
    let analytic: Vec<f64> = params.backward(v, upstream)?.values().copied().collect();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let numeric = upstream * central_difference(&mut probe, i, step, |p| p.forward(v))?;
        worst = worst.max(relative_error(*a, numeric));
    }
    Ok(worst)
}

/// Fourth-order central difference of `f` with respect to parameter `index`;
/// the parameter is restored afterwards.
pub fn central_difference<F>(params: &mut MlpParams, index: usize, step: f64, f: F) -> Result<f64>
where
    F: Fn(&MlpParams) -> Result<f64>,
{
    let original = *params.values().nth(index).unwrap();
    let mut at = |shift: f64| -> Result<f64> {
        *params.values_mut().nth(index).unwrap() = original + shift;
        f(params)
    };
    let (p1, m1, p2, m2) = (at(step)?, at(-step)?, at(2.0 * step)?, at(-2.0 * step)?);
    *params.values_mut().nth(index).unwrap() = original;
    Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step))
}

/// `|a - b| / max(|a|, |b|, 1e-4)`; components below the floor are compared absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-4);
    (a - b).abs() / scale
}
