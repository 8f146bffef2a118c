use serde::{Deserialize, Serialize};

use super::activation::ActivationSpec;
use super::matrix::{all_finite, Matrix};
use crate::error::{NinnError, Result};

/// Weights and bias of one affine map `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weights.mul_vec(x);
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        z
    }

    fn is_finite(&self) -> bool {
        self.weights.is_finite() && all_finite(&self.bias)
    }
}

/// Architecture of a net without its parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResNetShape {
    pub input_dim: usize,
    pub output_dim: usize,
    pub width: usize,
    /// Number of affine maps `L`, so the net has `L - 1` hidden feature
    /// vectors and `L - 2` residual layers.
    pub depth: usize,
    pub tau: f64,
    pub activation: ActivationSpec,
}

impl ResNetShape {
    /// Shape with the default step `τ = 1/(L-2)`.
    pub fn new(input_dim: usize, output_dim: usize, width: usize, depth: usize) -> Self {
        let tau = if depth > 2 {
            1.0 / (depth - 2) as f64
        } else {
            1.0
        };
        Self {
            input_dim,
            output_dim,
            width,
            depth,
            tau,
            activation: ActivationSpec::default(),
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_activation(mut self, activation: ActivationSpec) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.width == 0 {
            return Err(NinnError::InvalidArgument(
                "net dimensions must be positive".into(),
            ));
        }
        if self.depth < 3 {
            return Err(NinnError::InvalidArgument(format!(
                "depth must be at least 3, got {}",
                self.depth
            )));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(NinnError::InvalidArgument(format!(
                "tau must be finite and non-negative, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let n = self.width;
        n * self.input_dim + n + (self.depth - 2) * (n * n + n) + self.output_dim * n
    }

    /// Positions of `b_0 … b_{L-2}` inside the flat parameter vector.
    pub fn bias_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.width;
        let opening = n * self.input_dim;
        let mut out = Vec::with_capacity(self.depth - 1);
        out.push(opening..opening + n);
        let hidden_len = n * n + n;
        for l in 0..self.depth - 2 {
            let start = opening + n + l * hidden_len + n * n;
            out.push(start..start + n);
        }
        out
    }
}

/// Hidden feature vectors `y_1, …, y_{L-1}` recorded during a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTrace {
    pub states: Vec<Vec<f64>>,
}

impl HiddenTrace {
    /// `y_ℓ` for `ℓ = 1..=L-1`.
    pub fn layer(&self, l: usize) -> &[f64] {
        &self.states[l - 1]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trace is never empty")
    }
}

/// Gradients of `upstream · y_L` with respect to every parameter (flattened in
/// [`ResNetParams::to_flat`] order) and to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// A dense residual network
///
/// ```text
/// y_1     = σ(W_0 y_0 + b_0)
/// y_{ℓ+1} = y_ℓ + τ σ(W_ℓ y_ℓ + b_ℓ)    ℓ = 1..L-2
/// y_L     = W_{L-1} y_{L-1}
/// ```
///
/// The closing map has no bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNetParams {
    input_dim: usize,
    output_dim: usize,
    width: usize,
    tau: f64,
    activation: ActivationSpec,
    opening: LayerParams,
    hidden: Vec<LayerParams>,
    closing: Matrix,
}

impl ResNetParams {
    pub fn new(
        opening: LayerParams,
        hidden: Vec<LayerParams>,
        closing: Matrix,
        tau: f64,
        activation: ActivationSpec,
    ) -> Result<Self> {
        let width = opening.weights.rows();
        let input_dim = opening.weights.cols();
        let output_dim = closing.rows();
        let shape = ResNetShape {
            input_dim,
            output_dim,
            width,
            depth: hidden.len() + 2,
            tau,
            activation,
        };
        shape.validate()?;
        if opening.bias.len() != width {
            return Err(NinnError::DimensionMismatch(
                "opening bias length differs from width".into(),
            ));
        }
        for (i, layer) in hidden.iter().enumerate() {
            if layer.weights.rows() != width
                || layer.weights.cols() != width
                || layer.bias.len() != width
            {
                return Err(NinnError::DimensionMismatch(format!(
                    "hidden layer {} is not {width}x{width}",
                    i + 1
                )));
            }
        }
        if closing.cols() != width {
            return Err(NinnError::DimensionMismatch(
                "closing weights do not match width".into(),
            ));
        }
        let net = Self {
            input_dim,
            output_dim,
            width,
            tau,
            activation,
            opening,
            hidden,
            closing,
        };
        if !net.params_finite() {
            return Err(NinnError::InvalidArgument(
                "parameters must be finite".into(),
            ));
        }
        Ok(net)
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(shape: &ResNetShape) -> Result<Self> {
        shape.validate()?;
        let n = shape.width;
        Self::new(
            LayerParams::zeros(n, shape.input_dim),
            (0..shape.depth - 2)
                .map(|_| LayerParams::zeros(n, n))
                .collect(),
            Matrix::zeros(shape.output_dim, n),
            shape.tau,
            shape.activation,
        )
    }

    pub fn shape(&self) -> ResNetShape {
        ResNetShape {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            width: self.width,
            depth: self.depth(),
            tau: self.tau,
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `L`: number of affine maps.
    pub fn depth(&self) -> usize {
        self.hidden.len() + 2
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn activation(&self) -> &ActivationSpec {
        &self.activation
    }

    pub fn opening(&self) -> &LayerParams {
        &self.opening
    }

    /// Residual layers `W_1 … W_{L-2}`.
    pub fn hidden(&self) -> &[LayerParams] {
        &self.hidden
    }

    pub fn hidden_mut(&mut self) -> &mut [LayerParams] {
        &mut self.hidden
    }

    pub fn opening_mut(&mut self) -> &mut LayerParams {
        &mut self.opening
    }

    /// `W_{L-1}`.
    pub fn closing(&self) -> &Matrix {
        &self.closing
    }

    pub fn closing_mut(&mut self) -> &mut Matrix {
        &mut self.closing
    }

    /// Every layer that carries a bias, `b_0 … b_{L-2}`.
    pub fn biased_layers(&self) -> impl Iterator<Item = &LayerParams> {
        std::iter::once(&self.opening).chain(self.hidden.iter())
    }

    fn params_finite(&self) -> bool {
        self.opening.is_finite()
            && self.hidden.iter().all(LayerParams::is_finite)
            && self.closing.is_finite()
    }

    pub fn num_params(&self) -> usize {
        self.shape().num_params()
    }

    /// Parameters in the order `W_0, b_0, W_1, b_1, …, W_{L-2}, b_{L-2}, W_{L-1}`,
    /// matrices row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in self.biased_layers() {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        out.extend_from_slice(self.closing.as_slice());
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat).
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(NinnError::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[offset..offset + dst.len()]);
            offset += dst.len();
        };
        take(self.opening.weights.as_mut_slice());
        take(&mut self.opening.bias);
        for layer in &mut self.hidden {
            take(layer.weights.as_mut_slice());
            take(&mut layer.bias);
        }
        take(self.closing.as_mut_slice());
        Ok(())
    }

    /// `y_1 = σ(W_0 y_0 + b_0)`.
    pub fn opening_state(&self, y0: &[f64]) -> Vec<f64> {
        self.activation.eval_vec(&self.opening.affine(y0))
    }

    /// `y_ℓ + τ σ(W_ℓ y_ℓ + b_ℓ)` for residual layer `l ∈ 1..=L-2`.
    pub fn residual_step(&self, l: usize, y: &[f64]) -> Vec<f64> {
        let z = self.hidden[l - 1].affine(y);
        y.iter()
            .zip(&z)
            .map(|(&yi, &zi)| yi + self.tau * self.activation.eval(zi))
            .collect()
    }

    /// `W_{L-1} y`.
    pub fn readout(&self, y: &[f64]) -> Vec<f64> {
        self.closing.mul_vec(y)
    }

    /// Output obtained by running `y_l` through the remaining residual layers
    /// `l..=L-2` without any feedback, then the readout.
    pub fn propagate_from(&self, l: usize, y: &[f64]) -> Vec<f64> {
        let mut cur = y.to_vec();
        for k in l..self.depth() - 1 {
            cur = self.residual_step(k, &cur);
        }
        self.readout(&cur)
    }

    fn check_input(&self, y0: &[f64]) -> Result<()> {
        if y0.len() != self.input_dim {
            return Err(NinnError::DimensionMismatch(format!(
                "net input has length {}, expected {}",
                y0.len(),
                self.input_dim
            )));
        }
        if !all_finite(y0) {
            return Err(NinnError::Divergence { layer: 0 });
        }
        Ok(())
    }

    /// Forward pass returning `y_L` and the hidden trace `y_1 … y_{L-1}`.
    pub fn forward(&self, y0: &[f64]) -> Result<(Vec<f64>, HiddenTrace)> {
        self.check_input(y0)?;
        let mut states = Vec::with_capacity(self.depth() - 1);
        let y1 = self.opening_state(y0);
        if !all_finite(&y1) {
            return Err(NinnError::Divergence { layer: 1 });
        }
        states.push(y1);
        for l in 1..self.depth() - 1 {
            let next = self.residual_step(l, states.last().unwrap());
            if !all_finite(&next) {
                return Err(NinnError::Divergence { layer: l + 1 });
            }
            states.push(next);
        }
        let out = self.readout(states.last().unwrap());
        if !all_finite(&out) {
            return Err(NinnError::Divergence {
                layer: self.depth(),
            });
        }
        Ok((out, HiddenTrace { states }))
    }

    /// Forward pass without keeping the trace.
    pub fn output(&self, y0: &[f64]) -> Result<Vec<f64>> {
        self.forward(y0).map(|(out, _)| out)
    }

    /// Exact reverse-mode gradients of `upstream · y_L(y0)`.
    pub fn backprop(&self, y0: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let mut params = vec![0.0; self.num_params()];
        let mut input = vec![0.0; self.input_dim];
        self.backprop_accumulate(y0, upstream, &mut params, Some(&mut input))?;
        Ok(Gradients { params, input })
    }

    /// Adds the gradients of `upstream · y_L(y0)` into `param_grad` (flat
    /// order) and, if given, `input_grad`. Returns `y_L`.
    pub fn backprop_accumulate(
        &self,
        y0: &[f64],
        upstream: &[f64],
        param_grad: &mut [f64],
        input_grad: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        self.backprop_with(y0, |_| Ok(upstream.to_vec()), param_grad, input_grad)
    }

    /// Like [`backprop_accumulate`](Self::backprop_accumulate), with the
    /// upstream vector computed from `y_L` after the forward sweep.
    pub fn backprop_with(
        &self,
        y0: &[f64],
        upstream: impl FnOnce(&[f64]) -> Result<Vec<f64>>,
        param_grad: &mut [f64],
        input_grad: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        if param_grad.len() != self.num_params() {
            return Err(NinnError::DimensionMismatch(
                "parameter gradient buffer has wrong length".into(),
            ));
        }
        self.check_input(y0)?;

        let n = self.width;
        let depth = self.depth();
        // Forward, keeping pre-activations.
        let mut pre = Vec::with_capacity(depth - 1);
        let mut states = Vec::with_capacity(depth - 1);
        let a0 = self.opening.affine(y0);
        states.push(self.activation.eval_vec(&a0));
        pre.push(a0);
        for l in 1..depth - 1 {
            let y = states.last().unwrap();
            let a = self.hidden[l - 1].affine(y);
            let next: Vec<f64> = y
                .iter()
                .zip(&a)
                .map(|(&yi, &ai)| yi + self.tau * self.activation.eval(ai))
                .collect();
            pre.push(a);
            states.push(next);
        }
        if let Some(l) = states.iter().position(|s| !all_finite(s)) {
            return Err(NinnError::Divergence { layer: l + 1 });
        }
        let out = self.readout(states.last().unwrap());
        if !all_finite(&out) {
            return Err(NinnError::Divergence { layer: depth });
        }
        let upstream = upstream(&out)?;
        if upstream.len() != self.output_dim {
            return Err(NinnError::DimensionMismatch(format!(
                "upstream has length {}, expected {}",
                upstream.len(),
                self.output_dim
            )));
        }

        // Offsets into the flat gradient.
        let opening_len = n * self.input_dim + n;
        let hidden_len = n * n + n;
        let closing_off = opening_len + (depth - 2) * hidden_len;

        // Closing layer.
        let y_last = states.last().unwrap();
        for (r, &u) in upstream.iter().enumerate() {
            let row = &mut param_grad[closing_off + r * n..closing_off + (r + 1) * n];
            for (g, &y) in row.iter_mut().zip(y_last) {
                *g += u * y;
            }
        }
        let mut gy = vec![0.0; n];
        self.closing.add_transpose_mul_vec(&upstream, &mut gy);

        // Residual layers, last to first.
        for l in (1..depth - 1).rev() {
            let layer = &self.hidden[l - 1];
            let y = &states[l - 1];
            let ga: Vec<f64> = pre[l]
                .iter()
                .zip(&gy)
                .map(|(&a, &g)| self.tau * self.activation.derivative(a) * g)
                .collect();
            let off = opening_len + (l - 1) * hidden_len;
            for (r, &gar) in ga.iter().enumerate() {
                if gar != 0.0 {
                    let row = &mut param_grad[off + r * n..off + (r + 1) * n];
                    for (g, &yc) in row.iter_mut().zip(y) {
                        *g += gar * yc;
                    }
                }
                param_grad[off + n * n + r] += gar;
            }
            layer.weights.add_transpose_mul_vec(&ga, &mut gy);
        }

        // Opening layer.
        let ga0: Vec<f64> = pre[0]
            .iter()
            .zip(&gy)
            .map(|(&a, &g)| self.activation.derivative(a) * g)
            .collect();
        let d = self.input_dim;
        for (r, &gar) in ga0.iter().enumerate() {
            if gar != 0.0 {
                let row = &mut param_grad[r * d..(r + 1) * d];
                for (g, &x) in row.iter_mut().zip(y0) {
                    *g += gar * x;
                }
            }
            param_grad[n * d + r] += gar;
        }
        if let Some(input_grad) = input_grad {
            self.opening.weights.add_transpose_mul_vec(&ga0, input_grad);
        }
        if !all_finite(param_grad) {
            return Err(NinnError::Divergence { layer: 0 });
        }
        Ok(out)
    }
}

/// Free-function form of [`ResNetParams::forward`].
pub fn forward(net: &ResNetParams, y0: &[f64]) -> Result<(Vec<f64>, HiddenTrace)> {
    net.forward(y0)
}

pub fn backprop(net: &ResNetParams, y0: &[f64], upstream: &[f64]) -> Result<Gradients> {
    net.backprop(y0, upstream)
}

impl ResNetParams {
    /// Parameters drawn i.i.d. uniform on `[-scale, scale]`.
    pub fn random_uniform<R: rand::Rng + ?Sized>(
        shape: &ResNetShape,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(shape)?;
        let flat: Vec<f64> = (0..net.num_params())
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        net.set_flat(&flat)?;
        Ok(net)
    }
}
