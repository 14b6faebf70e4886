//! Small perceptron encoders mapping features into the joint embedding space,
//! with manual backpropagation and an AdamW optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::normalize_backward;
use crate::numerics::{norm, EmbeddingMatrix, Matrix, Rng, ZERO_NORM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// One affine map `y = x·W + b` with `W` stored fan_in × fan_out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

/// Encoder weights. The activation follows every layer except the last; the
/// final output rows are L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl EncoderParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::fan_out));
        dims
    }

    /// Zero gradients with the same shapes as the parameters.
    pub fn zeros_like(&self) -> EncoderParams {
        EncoderParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.fan_in(), l.fan_out()),
                    bias: vec![0.0; l.fan_out()],
                })
                .collect(),
            activation: self.activation,
        }
    }

    /// Parameter tensors in a fixed order: weight then bias per layer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Adds `other` into `self`, tensor by tensor.
    pub fn accumulate(&mut self, other: &EncoderParams) -> Result<()> {
        if self.layer_dims() != other.layer_dims() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.layer_dims(),
                other.layer_dims()
            )));
        }
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        Ok(())
    }
}

/// Uniform Glorot initialization with zero biases.
pub fn init_params(layer_dims: &[usize], activation: Activation, rng: &mut Rng) -> Result<EncoderParams> {
    if layer_dims.len() < 2 {
        return Err(Error::BadDims(format!(
            "need input and output dimensions, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::BadDims(format!("zero dimension in {layer_dims:?}")));
    }
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.uniform_range(-s, s))
                .collect();
            Layer {
                weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized"),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(EncoderParams { layers, activation })
}

/// Intermediates kept by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to every layer (`activations[0]` is the encoder input).
    activations: Vec<Matrix>,
    /// Final rows before normalization, and their norms.
    pre_norm: Matrix,
    norms: Vec<f64>,
    output: Matrix,
}

pub fn forward(p: &EncoderParams, x: &Matrix) -> Result<(EmbeddingMatrix, ForwardCache)> {
    if x.cols() != p.input_dim() {
        return Err(Error::DimMismatch(format!(
            "encoder expects {} input features, got {}",
            p.input_dim(),
            x.cols()
        )));
    }
    let last = p.layers.len() - 1;
    let mut activations = Vec::with_capacity(p.layers.len());
    let mut h = x.clone();
    for (k, layer) in p.layers.iter().enumerate() {
        let mut z = h.matmul(&layer.weight)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        if k < last {
            for v in z.as_mut_slice() {
                *v = p.activation.apply(*v);
            }
        }
        activations.push(h);
        h = z;
    }
    let mut out = h.clone();
    let mut norms = Vec::with_capacity(h.rows());
    for i in 0..h.rows() {
        let n = norm(h.row(i));
        if n < ZERO_NORM {
            return Err(Error::ZeroVector { norm: n });
        }
        for v in out.row_mut(i) {
            *v /= n;
        }
        norms.push(n);
    }
    let cache = ForwardCache {
        activations,
        pre_norm: h,
        norms,
        output: out.clone(),
    };
    Ok((out, cache))
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: EncoderParams,
    pub input: Matrix,
}

/// Exact gradients of `Σ grad_out ⊙ forward(x)` with respect to the
/// parameters and the input.
pub fn backward(p: &EncoderParams, cache: &ForwardCache, grad_out: &Matrix) -> Result<Gradients> {
    if cache.activations.len() != p.layers.len()
        || cache
            .activations
            .iter()
            .zip(&p.layers)
            .any(|(a, l)| a.cols() != l.fan_in())
    {
        return Err(Error::MissingCache);
    }
    if grad_out.shape() != cache.output.shape() {
        return Err(Error::ShapeMismatch(format!(
            "grad {:?} vs output {:?}",
            grad_out.shape(),
            cache.output.shape()
        )));
    }
    let mut g = Matrix::zeros(grad_out.rows(), grad_out.cols());
    for i in 0..g.rows() {
        let back = normalize_backward(cache.output.row(i), cache.norms[i], grad_out.row(i));
        g.row_mut(i).copy_from_slice(&back);
    }

    let mut grads = p.zeros_like();
    let last = p.layers.len() - 1;
    for k in (0..p.layers.len()).rev() {
        if k < last {
            // g currently holds ∂L/∂(activation output of layer k).
            let out = if k + 1 < p.layers.len() {
                &cache.activations[k + 1]
            } else {
                &cache.pre_norm
            };
            for (gv, y) in g.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *gv *= p.activation.derivative_from_output(*y);
            }
        }
        let input = &cache.activations[k];
        grads.layers[k].weight = input.t_matmul(&g)?;
        let bias = &mut grads.layers[k].bias;
        for row in g.iter_rows() {
            for (b, v) in bias.iter_mut().zip(row) {
                *b += v;
            }
        }
        g = g.matmul_t(&p.layers[k].weight)?;
    }
    Ok(Gradients {
        params: grads,
        input: g,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moments for a flat list of parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub config: AdamWConfig,
}

impl OptimizerState {
    pub fn new(shapes: &[usize], config: AdamWConfig) -> Self {
        Self {
            step_count: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            config,
        }
    }

    pub fn for_params(p: &EncoderParams, config: AdamWConfig) -> Self {
        let shapes: Vec<usize> = p.tensors().iter().map(|t| t.len()).collect();
        Self::new(&shapes, config)
    }
}

/// One AdamW update over matching lists of parameter and gradient tensors.
///
/// Decay `θ ← θ − lr·wd·θ` is applied first and separately from the adaptive
/// step `θ ← θ − lr·m̂/(√v̂ + ε)`.
pub fn adamw_step(params: Vec<&mut [f64]>, grads: Vec<&[f64]>, state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter tensors, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(&grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first_moment[k].len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {k}: {} params, {} grads, {} moments",
                p.len(),
                g.len(),
                state.first_moment[k].len()
            )));
        }
    }
    state.step_count += 1;
    let c = &state.config;
    let t = state.step_count as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let decay = 1.0 - c.learning_rate * c.weight_decay;
    for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        for i in 0..p.len() {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] *= decay;
            p[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
    Ok(())
}
