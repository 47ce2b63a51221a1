//! Fully-connected coordinate regressor with exact backpropagation and Adam.
//!
//! Layouts: batched inputs and outputs are flat row-major `batch × dim` buffers; layer
//! weights are row-major `out_dim × in_dim`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    /// One entry per hidden layer. The output layer is always linear.
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_layers: Vec<usize>,
        output_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        let activations = vec![activation; hidden_layers.len()];
        Self {
            input_dim,
            hidden_layers,
            output_dim,
            activations,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_layers.contains(&0) {
            return Err(Error::InvalidArgument("all layer widths must be at least 1".into()));
        }
        if !self.output_dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "output_dim must be even (2 per landmark), got {}",
                self.output_dim
            )));
        }
        check_len("activations per hidden layer", self.hidden_layers.len(), self.activations.len())
    }

    /// `(in_dim, out_dim)` for every affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_layers {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    fn activation(&self, layer: usize) -> Option<Activation> {
        self.activations.get(layer).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            layers: spec
                .layer_dims()
                .into_iter()
                .map(|(i, o)| Layer::zeros(i, o))
                .collect(),
        }
    }

    pub fn check_against(&self, spec: &MlpSpec) -> Result<()> {
        let dims = spec.layer_dims();
        check_len("layer count", dims.len(), self.layers.len())?;
        for (l, (i, o)) in self.layers.iter().zip(dims) {
            check_len("layer weights", i * o, l.weights.len())?;
            check_len("layer bias", o, l.bias.len())?;
            if l.in_dim != i || l.out_dim != o {
                return Err(Error::DimensionMismatch {
                    context: "layer shape",
                    expected: i * o,
                    actual: l.in_dim * l.out_dim,
                });
            }
        }
        Ok(())
    }

    /// Parameter tensors in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Glorot-uniform weights, zero biases, reproducible from `spec.seed`.
pub fn init_params<T: Scalar>(spec: &MlpSpec) -> Result<MlpParams<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut params = MlpParams::zeros(spec);
    for layer in &mut params.layers {
        let bound = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
        for w in &mut layer.weights {
            *w = T::lit(rng.random_range(-bound..=bound));
        }
    }
    Ok(params)
}

/// Post-activation outputs of every layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub batch: usize,
    /// `outputs[l]` is the output of layer `l`; the last entry is the network output.
    pub outputs: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn forward_cached<T: Scalar>(
    spec: &MlpSpec,
    params: &MlpParams<T>,
    inputs: &[T],
) -> Result<ForwardCache<T>> {
    params.check_against(spec)?;
    if !inputs.len().is_multiple_of(spec.input_dim) {
        return Err(Error::DimensionMismatch {
            context: "forward input row length",
            expected: spec.input_dim,
            actual: inputs.len() % spec.input_dim,
        });
    }
    let batch = inputs.len() / spec.input_dim;
    let mut outputs: Vec<Vec<T>> = Vec::with_capacity(params.layers.len());
    for (li, layer) in params.layers.iter().enumerate() {
        let x: &[T] = if li == 0 { inputs } else { &outputs[li - 1] };
        let act = spec.activation(li);
        // Accumulating input by input over a transposed copy of the weights keeps each
        // output's summation order (bias, then inputs in order) while letting the inner
        // loop run across outputs, which vectorizes.
        let mut wt = vec![T::zero(); layer.weights.len()];
        for (o, row) in layer.weights.chunks_exact(layer.in_dim).enumerate() {
            for (i, &w) in row.iter().enumerate() {
                wt[i * layer.out_dim + o] = w;
            }
        }
        let mut y = vec![T::zero(); batch * layer.out_dim];
        for (xr, yr) in x
            .chunks_exact(layer.in_dim)
            .zip(y.chunks_exact_mut(layer.out_dim))
        {
            yr.copy_from_slice(&layer.bias);
            for (&xi, col) in xr.iter().zip(wt.chunks_exact(layer.out_dim)) {
                for (yo, &w) in yr.iter_mut().zip(col) {
                    *yo += w * xi;
                }
            }
            if let Some(a) = act {
                for yo in yr.iter_mut() {
                    *yo = a.apply(*yo);
                }
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation { layer: li });
        }
        outputs.push(y);
    }
    Ok(ForwardCache { batch, outputs })
}

/// Network output for a row-major batch of inputs.
pub fn forward<T: Scalar>(spec: &MlpSpec, params: &MlpParams<T>, inputs: &[T]) -> Result<Vec<T>> {
    let mut cache = forward_cached(spec, params, inputs)?;
    Ok(cache.outputs.pop().unwrap_or_default())
}

/// Reverse-mode gradients of a loss with respect to every parameter, given
/// `d_output = ∂loss/∂output` for the cached forward pass.
pub fn backward<T: Scalar>(
    spec: &MlpSpec,
    params: &MlpParams<T>,
    inputs: &[T],
    cache: &ForwardCache<T>,
    d_output: &[T],
) -> Result<MlpParams<T>> {
    params.check_against(spec)?;
    let batch = cache.batch;
    check_len("backward inputs", batch * spec.input_dim, inputs.len())?;
    check_len("backward output gradient", batch * spec.output_dim, d_output.len())?;
    check_len("backward cache depth", params.layers.len(), cache.outputs.len())?;

    let mut grads = MlpParams::zeros(spec);
    let mut delta = d_output.to_vec();
    for li in (0..params.layers.len()).rev() {
        let layer = &params.layers[li];
        if let Some(act) = spec.activation(li) {
            for (d, &y) in delta.iter_mut().zip(&cache.outputs[li]) {
                *d *= act.derivative_from_output(y);
            }
        }
        let x: &[T] = if li == 0 { inputs } else { &cache.outputs[li - 1] };
        let g = &mut grads.layers[li];
        let need_dx = li > 0;
        let mut dx = if need_dx {
            vec![T::zero(); batch * layer.in_dim]
        } else {
            Vec::new()
        };
        for b in 0..batch {
            let xr = &x[b * layer.in_dim..(b + 1) * layer.in_dim];
            let dr = &delta[b * layer.out_dim..(b + 1) * layer.out_dim];
            for (o, &d) in dr.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                g.bias[o] += d;
                let gw = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gwi, &xi) in gw.iter_mut().zip(xr) {
                    *gwi += d * xi;
                }
                if need_dx {
                    let wr = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let dxr = &mut dx[b * layer.in_dim..(b + 1) * layer.in_dim];
                    for (dxi, &w) in dxr.iter_mut().zip(wr) {
                        *dxi += d * w;
                    }
                }
            }
        }
        delta = dx;
    }
    Ok(grads)
}

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_DECAY: f64 = 1e-6;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Per-step inverse-time learning-rate decay.
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            decay: DEFAULT_DECAY,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl AdamConfig {
    /// Learning rate in effect at step `t` (1-based).
    pub fn learning_rate_at(&self, t: u64) -> f64 {
        self.learning_rate / (1.0 + self.decay * t as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments shaped like `shapes` (one entry per parameter tensor).
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn for_params(config: AdamConfig, params: &MlpParams<T>) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self::new(config, &shapes)
    }

    /// One bias-corrected Adam update over matching parameter and gradient tensors.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        check_len("adam tensor count", self.m.len(), params.len())?;
        check_len("adam gradient tensor count", self.m.len(), grads.len())?;
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            check_len("adam parameter tensor", m.len(), p.len())?;
            check_len("adam gradient tensor", m.len(), g.len())?;
        }
        self.t += 1;
        let c = self.config;
        let lr = c.learning_rate_at(self.t);
        let bc1 = 1.0 - c.beta1.powf(self.t as f64);
        let bc2 = 1.0 - c.beta2.powf(self.t as f64);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let step = T::lit(lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(c.epsilon);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                p[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam update to `params`.
pub fn adam_step<T: Scalar>(
    params: &mut MlpParams<T>,
    grads: &MlpParams<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    state.update(&mut p, &g)
}

/// A network together with its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor<T> {
    pub spec: MlpSpec,
    pub params: MlpParams<T>,
}

impl<T: Scalar> Regressor<T> {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        let params = init_params(&spec)?;
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: MlpSpec, params: MlpParams<T>) -> Result<Self> {
        spec.validate()?;
        params.check_against(&spec)?;
        Ok(Self { spec, params })
    }

    pub fn predict(&self, inputs: &[T]) -> Result<Vec<T>> {
        forward(&self.spec, &self.params, inputs)
    }

    pub fn num_points(&self) -> usize {
        self.spec.output_dim / 2
    }
}
