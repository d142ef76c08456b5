//! Dense feedforward ReLU networks with exact reverse-mode Jacobians.
//!
//! Parameters are stored as one flat vector. Layer `l` occupies a contiguous
//! slice holding its weight matrix (row-major, `fan_out x fan_in`) followed by
//! its bias when biases are enabled. Under the NTK parameterisation each
//! pre-activation is `W h / sqrt(fan_in) + b`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dot, Matrix};
use crate::par::{self, Execution};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Hidden layer widths. Empty means a linear model `f(x) = W x`.
    pub hidden_widths: Vec<usize>,
    pub num_classes: usize,
    pub init_scale: f64,
    pub ntk_parameterization: bool,
    #[serde(default)]
    pub bias: bool,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, num_classes: usize) -> Self {
        NetworkSpec {
            input_dim,
            hidden_widths,
            num_classes,
            init_scale: 1.0,
            ntk_parameterization: true,
            bias: false,
        }
    }

    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self::new(input_dim, Vec::new(), num_classes)
    }

    pub fn with_init_scale(mut self, init_scale: f64) -> Self {
        self.init_scale = init_scale;
        self
    }

    pub fn with_ntk_parameterization(mut self, on: bool) -> Self {
        self.ntk_parameterization = on;
        self
    }

    pub fn with_bias(mut self, on: bool) -> Self {
        self.bias = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be positive".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be positive".into()));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "init_scale must be finite and non-negative, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<Layer> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.num_classes);
        let mut start = 0;
        dims.windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let len = fan_in * fan_out + if self.bias { fan_out } else { 0 };
                let layer = Layer {
                    fan_in,
                    fan_out,
                    start,
                    len,
                    scale: if self.ntk_parameterization {
                        1.0 / (fan_in as f64).sqrt()
                    } else {
                        1.0
                    },
                    bias: self.bias,
                };
                start += len;
                layer
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.len).sum()
    }

    pub fn last_layer(&self) -> Layer {
        *self.layers().last().expect("at least one layer")
    }
}

/// Placement and scaling of one dense layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub start: usize,
    pub len: usize,
    pub scale: f64,
    pub bias: bool,
}

impl Layer {
    #[inline]
    fn weights_len(&self) -> usize {
        self.fan_in * self.fan_out
    }

    #[inline]
    fn bias_start(&self) -> usize {
        self.start + self.weights_len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layer_offsets: Vec<(usize, usize)>,
    last_layer_range: (usize, usize),
}

impl ParamVector {
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self::from_layout(spec, vec![0.0; spec.num_params()]))
    }

    pub fn from_values(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.num_params() {
            return Err(Error::Dimension(format!(
                "{} parameters for a network with {}",
                values.len(),
                spec.num_params()
            )));
        }
        Ok(Self::from_layout(spec, values))
    }

    fn from_layout(spec: &NetworkSpec, values: Vec<f64>) -> Self {
        let layer_offsets: Vec<_> = spec.layers().iter().map(|l| (l.start, l.len)).collect();
        let last_layer_range = *layer_offsets.last().expect("at least one layer");
        ParamVector {
            values,
            layer_offsets,
            last_layer_range,
        }
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.values.len()
            )));
        }
        Ok(ParamVector {
            values,
            layer_offsets: self.layer_offsets.clone(),
            last_layer_range: self.last_layer_range,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layer_offsets(&self) -> &[(usize, usize)] {
        &self.layer_offsets
    }

    pub fn last_layer_range(&self) -> (usize, usize) {
        self.last_layer_range
    }

    pub fn layer_values(&self, layer: usize) -> &[f64] {
        let (s, l) = self.layer_offsets[layer];
        &self.values[s..s + l]
    }

    pub fn layer_values_mut(&mut self, layer: usize) -> &mut [f64] {
        let (s, l) = self.layer_offsets[layer];
        &mut self.values[s..s + l]
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.values.len() != spec.num_params() {
            return Err(Error::Dimension(format!(
                "parameter vector of length {} does not match spec ({} parameters)",
                self.values.len(),
                spec.num_params()
            )));
        }
        Ok(())
    }
}

/// Weights i.i.d. `N(0, 1) * init_scale`, biases zero.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<ParamVector> {
    let mut params = ParamVector::zeros(spec)?;
    let mut rng = seed::rng(seed);
    for layer in spec.layers() {
        let w = &mut params.values[layer.start..layer.start + layer.weights_len()];
        for v in w.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = z * spec.init_scale;
        }
    }
    Ok(params)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianScope {
    #[default]
    Full,
    LastLayer,
}

impl std::str::FromStr for JacobianScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(JacobianScope::Full),
            "last_layer" | "last" => Ok(JacobianScope::LastLayer),
            other => Err(Error::InvalidArgument(format!("unknown scope `{other}`"))),
        }
    }
}

impl std::fmt::Display for JacobianScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JacobianScope::Full => "full",
            JacobianScope::LastLayer => "last_layer",
        })
    }
}

/// `d f(x) / d theta`, one row per output class.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    pub scope: JacobianScope,
    pub values: Matrix,
}

impl Jacobian {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }
}

/// Per-sample buffers for forward and backward passes.
#[derive(Clone, Debug)]
pub struct Workspace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub fn new(spec: &NetworkSpec) -> Self {
        let layers = spec.layers();
        let widest = layers.iter().map(|l| l.fan_out.max(l.fan_in)).max().unwrap_or(1);
        Workspace {
            pre: layers.iter().map(|l| vec![0.0; l.fan_out]).collect(),
            post: std::iter::once(vec![0.0; spec.input_dim])
                .chain(layers.iter().map(|l| vec![0.0; l.fan_out]))
                .collect(),
            delta: Vec::with_capacity(widest),
            delta_prev: Vec::with_capacity(widest),
        }
    }

    /// Network output from the last forward pass.
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }

    /// Input to the final (linear) layer from the last forward pass.
    pub fn penultimate(&self) -> &[f64] {
        &self.post[self.post.len() - 2]
    }

    /// Pre-activations of every layer from the last forward pass.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// A network spec bound to a parameter slice, with its layer table resolved once.
#[derive(Clone, Debug)]
pub struct Network<'a> {
    pub spec: &'a NetworkSpec,
    layers: Vec<Layer>,
    theta: &'a [f64],
}

impl<'a> Network<'a> {
    pub fn new(spec: &'a NetworkSpec, params: &'a ParamVector) -> Result<Self> {
        spec.validate()?;
        params.check(spec)?;
        Ok(Network {
            spec,
            layers: spec.layers(),
            theta: &params.values,
        })
    }

    pub fn from_slice(spec: &'a NetworkSpec, theta: &'a [f64]) -> Result<Self> {
        spec.validate()?;
        if theta.len() != spec.num_params() {
            return Err(Error::Dimension(format!(
                "parameter slice of length {} does not match spec ({} parameters)",
                theta.len(),
                spec.num_params()
            )));
        }
        Ok(Network {
            spec,
            layers: spec.layers(),
            theta,
        })
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.spec)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Dimension(format!(
                "input of length {}, network expects {}",
                x.len(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Forward pass; the output is left in `ws.output()`.
    pub fn forward_ws(&self, x: &[f64], ws: &mut Workspace) -> Result<()> {
        self.check_input(x)?;
        ws.post[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &self.theta[layer.start..layer.start + layer.weights_len()];
            let (before, after) = ws.post.split_at_mut(l + 1);
            let input = &before[l];
            let pre = &mut ws.pre[l];
            for (i, p) in pre.iter_mut().enumerate() {
                let row = &w[i * layer.fan_in..(i + 1) * layer.fan_in];
                *p = layer.scale * dot(row, input);
            }
            if layer.bias {
                let b = &self.theta[layer.bias_start()..layer.bias_start() + layer.fan_out];
                for (p, bi) in pre.iter_mut().zip(b) {
                    *p += bi;
                }
            }
            if l < last {
                for (h, &g) in after[0].iter_mut().zip(pre.iter()) {
                    *h = g.max(0.0);
                }
            } else {
                after[0].copy_from_slice(pre);
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut ws = self.workspace();
        self.forward_ws(x, &mut ws)?;
        Ok(ws.output().to_vec())
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut ws = self.workspace();
        let mut out = Matrix::zeros(x.rows(), self.spec.num_classes);
        for i in 0..x.rows() {
            self.forward_ws(x.row(i), &mut ws)?;
            out.row_mut(i).copy_from_slice(ws.output());
        }
        Ok(out)
    }

    /// Adds `scale * upstream^T (d f / d theta)` into `grad` using the
    /// activations of the last forward pass in `ws`.
    pub fn backward_add(&self, ws: &mut Workspace, upstream: &[f64], scale: f64, grad: &mut [f64]) {
        debug_assert_eq!(upstream.len(), self.spec.num_classes);
        debug_assert_eq!(grad.len(), self.theta.len());
        let Workspace {
            pre,
            post,
            delta,
            delta_prev,
        } = ws;
        delta.clear();
        delta.extend(upstream.iter().map(|u| u * scale));
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &post[l];
            let w = &self.theta[layer.start..layer.start + layer.weights_len()];
            let gw = &mut grad[layer.start..layer.start + layer.weights_len()];
            for (i, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d * layer.scale, input, &mut gw[i * layer.fan_in..(i + 1) * layer.fan_in]);
                }
            }
            if layer.bias {
                let gb = &mut grad[layer.bias_start()..layer.bias_start() + layer.fan_out];
                for (g, d) in gb.iter_mut().zip(delta.iter()) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            delta_prev.clear();
            delta_prev.resize(layer.fan_in, 0.0);
            for (i, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d * layer.scale, &w[i * layer.fan_in..(i + 1) * layer.fan_in], delta_prev);
                }
            }
            // ReLU derivative, zero at exactly zero
            for (dp, &g) in delta_prev.iter_mut().zip(pre[l - 1].iter()) {
                if g <= 0.0 {
                    *dp = 0.0;
                }
            }
            std::mem::swap(delta, delta_prev);
        }
    }

    /// Jacobian at the activations stored in `ws`.
    pub fn jacobian_ws(&self, ws: &mut Workspace, scope: JacobianScope) -> Jacobian {
        let c = self.spec.num_classes;
        match scope {
            JacobianScope::Full => {
                let p = self.theta.len();
                let mut values = Matrix::zeros(c, p);
                let mut unit = vec![0.0; c];
                for k in 0..c {
                    unit[k] = 1.0;
                    self.backward_add(ws, &unit, 1.0, values.row_mut(k));
                    unit[k] = 0.0;
                }
                Jacobian { scope, values }
            }
            JacobianScope::LastLayer => {
                let layer = *self.layers.last().expect("at least one layer");
                let h = ws.penultimate();
                let mut values = Matrix::zeros(c, layer.len);
                for k in 0..c {
                    let row = values.row_mut(k);
                    let w = &mut row[k * layer.fan_in..(k + 1) * layer.fan_in];
                    for (dst, &hj) in w.iter_mut().zip(h) {
                        *dst = layer.scale * hj;
                    }
                    if layer.bias {
                        row[layer.weights_len() + k] = 1.0;
                    }
                }
                Jacobian { scope, values }
            }
        }
    }

    pub fn jacobian(&self, x: &[f64], scope: JacobianScope) -> Result<Jacobian> {
        let mut ws = self.workspace();
        self.forward_ws(x, &mut ws)?;
        let jac = self.jacobian_ws(&mut ws, scope);
        if !jac.values.all_finite() {
            return Err(Error::NonFinite("jacobian".into()));
        }
        Ok(jac)
    }

    /// Jacobians of every row of `x`, computed once per sample.
    pub fn jacobians(&self, x: &Matrix, scope: JacobianScope, exec: Execution) -> Result<Vec<Jacobian>> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::Dimension(format!(
                "inputs have {} columns, network expects {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        par::map_range(exec, x.rows(), |i| self.jacobian(x.row(i), scope))
            .into_iter()
            .collect()
    }

    /// `d/d theta of 0.5 * sum_i ||f(x_i) - y_i||^2`.
    pub fn grad_mse(&self, x: &Matrix, y: &Matrix, exec: Execution) -> Result<Vec<f64>> {
        check_xy(self.spec, x, y)?;
        let grad = par::chunked_sum(exec, x.rows(), self.theta.len(), |i, acc| {
            let mut ws = self.workspace();
            self.forward_ws(x.row(i), &mut ws).expect("input checked");
            let resid: Vec<f64> = ws.output().iter().zip(y.row(i)).map(|(f, t)| f - t).collect();
            self.backward_add(&mut ws, &resid, 1.0, acc);
        });
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok(grad)
    }
}

fn check_xy(spec: &NetworkSpec, x: &Matrix, y: &Matrix) -> Result<()> {
    if x.cols() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "inputs have {} columns, network expects {}",
            x.cols(),
            spec.input_dim
        )));
    }
    if y.rows() != x.rows() || y.cols() != spec.num_classes {
        return Err(Error::Dimension(format!(
            "targets are {}x{}, expected {}x{}",
            y.rows(),
            y.cols(),
            x.rows(),
            spec.num_classes
        )));
    }
    Ok(())
}

pub fn forward(params: &ParamVector, spec: &NetworkSpec, x: &[f64]) -> Result<Vec<f64>> {
    Network::new(spec, params)?.forward(x)
}

pub fn forward_batch(params: &ParamVector, spec: &NetworkSpec, x: &Matrix) -> Result<Matrix> {
    Network::new(spec, params)?.forward_batch(x)
}

pub fn jacobian(params: &ParamVector, spec: &NetworkSpec, x: &[f64], scope: JacobianScope) -> Result<Jacobian> {
    Network::new(spec, params)?.jacobian(x, scope)
}

/// Central differences `(f(theta + h e_i) - f(theta - h e_i)) / 2h` per coordinate.
pub fn finite_diff_jacobian(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &[f64],
    h: f64,
    scope: JacobianScope,
) -> Result<Jacobian> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    Network::new(spec, params)?.check_input(x)?;
    let range = match scope {
        JacobianScope::Full => 0..params.len(),
        JacobianScope::LastLayer => {
            let (s, l) = params.last_layer_range();
            s..s + l
        }
    };
    let c = spec.num_classes;
    let mut values = Matrix::zeros(c, range.len());
    let mut theta = params.values.clone();
    let mut ws = Workspace::new(spec);
    for (col, i) in range.enumerate() {
        let orig = theta[i];
        theta[i] = orig + h;
        Network::from_slice(spec, &theta)?.forward_ws(x, &mut ws)?;
        let plus = ws.output().to_vec();
        theta[i] = orig - h;
        Network::from_slice(spec, &theta)?.forward_ws(x, &mut ws)?;
        theta[i] = orig;
        for (k, (p, m)) in plus.iter().zip(ws.output()).enumerate() {
            values[(k, col)] = (p - m) / (2.0 * h);
        }
    }
    Ok(Jacobian { scope, values })
}

/// `0.5 * sum_i sum_c (f_ic - y_ic)^2`.
pub fn mse_loss(outputs: &Matrix, targets: &Matrix) -> Result<f64> {
    if outputs.rows() != targets.rows() || outputs.cols() != targets.cols() {
        return Err(Error::Dimension(format!(
            "outputs {}x{} vs targets {}x{}",
            outputs.rows(),
            outputs.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    Ok(0.5
        * outputs
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .map(|(f, y)| (f - y) * (f - y))
            .sum::<f64>())
}

pub fn grad_mse(params: &ParamVector, spec: &NetworkSpec, x: &Matrix, y: &Matrix) -> Result<Vec<f64>> {
    Network::new(spec, params)?.grad_mse(x, y, Execution::default())
}

/// One-hot targets in `{0, 1}`.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Matrix> {
    let mut y = Matrix::zeros(labels.len(), num_classes);
    for (i, &c) in labels.iter().enumerate() {
        if c >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {c} out of range for {num_classes} classes"
            )));
        }
        y[(i, c)] = 1.0;
    }
    Ok(y)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
