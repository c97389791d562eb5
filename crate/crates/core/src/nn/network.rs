use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => h.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a = act(h)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
        }
    }

    /// `d/da` of [`Activation::derivative_from_output`].
    #[inline]
    pub fn derivative_slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        MlpArchitecture {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config(format!("all layer widths must be >= 1: {self:?}")));
        }
        Ok(())
    }

    /// `[input, hidden..., output]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_dims.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden_dims);
        d.push(self.output_dim);
        d
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Offset of each layer's first parameter in the flat layout.
    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.depth());
        let mut acc = 0;
        for w in self.layer_dims().windows(2) {
            off.push(acc);
            acc += (w[0] + 1) * w[1];
        }
        off
    }
}

/// Affine layers `h_l = W_lᵀ a_{l-1} + b_l` with `W_l` stored as `in_l × out_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork {
    pub arch: MlpArchitecture,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Intermediate values of a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Matrix,
    /// `h_l` for every layer; the last one is the network output.
    pub pre_activations: Vec<Matrix>,
    /// `a(h_l)` for the hidden layers.
    pub post_activations: Vec<Matrix>,
    pub output: Matrix,
}

impl ForwardTrace {
    /// Input of layer `l` (0-based): the raw input for `l = 0`, else `a(h_{l-1})`.
    pub fn layer_input(&self, l: usize) -> &Matrix {
        if l == 0 {
            &self.input
        } else {
            &self.post_activations[l - 1]
        }
    }
}

/// Parameter-shaped gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

impl MlpNetwork {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let dims = arch.layer_dims();
        MlpNetwork {
            arch: arch.clone(),
            weights: dims.windows(2).map(|w| Matrix::zeros(w[0], w[1])).collect(),
            biases: dims.windows(2).map(|w| vec![0.0; w[1]]).collect(),
        }
    }

    /// Weights `N(0, 1/fan_in)`, zero biases.
    pub fn init(arch: &MlpArchitecture, rng: &mut RngStream) -> Result<Self> {
        arch.validate()?;
        let dims = arch.layer_dims();
        Ok(MlpNetwork {
            arch: arch.clone(),
            weights: dims
                .windows(2)
                .map(|w| rng.normal_matrix(w[0], w[1], 1.0 / (w[0] as f64).sqrt()))
                .collect(),
            biases: dims.windows(2).map(|w| vec![0.0; w[1]]).collect(),
        })
    }

    pub fn from_flat(arch: &MlpArchitecture, params: &[f64]) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::dims(format!(
                "architecture has {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        let mut net = MlpNetwork::zeros(arch);
        net.set_flat(params);
        Ok(net)
    }

    /// Layer-major flat parameters: `W_1` row-major, `b_1`, `W_2`, ...
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&params[off..off + n]);
            off += n;
            let m = b.len();
            b.copy_from_slice(&params[off..off + m]);
            off += m;
        }
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Network outputs `g(X, θ)` as an `N × C` matrix.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(forward(self, x, false)?.output)
    }
}

pub fn forward(net: &MlpNetwork, x: &Matrix, keep_trace: bool) -> Result<ForwardTrace> {
    if x.cols() != net.input_dim() {
        return Err(Error::dims(format!(
            "input has {} columns, network expects {}",
            x.cols(),
            net.input_dim()
        )));
    }
    let depth = net.depth();
    let act = net.arch.activation;
    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut current = x.clone();
    for l in 0..depth {
        let mut h = current.matmul(&net.weights[l])?;
        for i in 0..h.rows() {
            for (v, b) in h.row_mut(i).iter_mut().zip(&net.biases[l]) {
                *v += b;
            }
        }
        if l + 1 == depth {
            if !h.is_finite() {
                return Err(Error::non_finite("network output"));
            }
            if keep_trace {
                pre.push(h.clone());
            }
            return Ok(ForwardTrace {
                input: if keep_trace { x.clone() } else { Matrix::zeros(0, x.cols()) },
                pre_activations: pre,
                post_activations: post,
                output: h,
            });
        }
        let a = h.map(|v| act.apply(v));
        if keep_trace {
            pre.push(h);
            post.push(a.clone());
        }
        current = a;
    }
    unreachable!("network has at least one layer")
}

/// Gradient of a scalar loss whose gradient w.r.t. the outputs is `output_gradient` (`N × C`).
pub fn backward(net: &MlpNetwork, trace: &ForwardTrace, output_gradient: &Matrix) -> Result<Gradients> {
    let depth = net.depth();
    if trace.pre_activations.len() != depth || trace.input.rows() != trace.output.rows() {
        return Err(Error::dims("trace was not recorded with keep_trace"));
    }
    if output_gradient.shape() != trace.output.shape() {
        return Err(Error::dims(format!(
            "output gradient {:?} vs output {:?}",
            output_gradient.shape(),
            trace.output.shape()
        )));
    }
    let act = net.arch.activation;
    let mut weights = vec![Matrix::zeros(0, 0); depth];
    let mut biases = vec![Vec::new(); depth];
    let mut delta = output_gradient.clone();
    for l in (0..depth).rev() {
        let input = trace.layer_input(l);
        weights[l] = input.t_matmul(&delta)?;
        let mut db = vec![0.0; delta.cols()];
        for i in 0..delta.rows() {
            for (s, d) in db.iter_mut().zip(delta.row(i)) {
                *s += d;
            }
        }
        biases[l] = db;
        if l > 0 {
            let mut prev = delta.matmul_t(&net.weights[l])?;
            let a = &trace.post_activations[l - 1];
            for (p, av) in prev.as_mut_slice().iter_mut().zip(a.as_slice()) {
                *p *= act.derivative_from_output(*av);
            }
            delta = prev;
        }
    }
    Ok(Gradients { weights, biases })
}
