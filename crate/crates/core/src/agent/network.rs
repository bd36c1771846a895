//! Fully connected Q-network with ReLU hidden layers and hand-written
//! backpropagation.

use rand::Rng;

use crate::error::{Error, Result};

/// Layer widths of the mobility controller's Q-network.
pub const Q_LAYOUT: [usize; 5] = [11, 64, 128, 64, 3];

/// One affine map `y = W x + b`, weights stored row-major (`outputs × inputs`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Uniform in ±1/√fan_in for weights and biases.
    pub fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-bound..bound)).collect::<Vec<_>>();
        let weights = draw(inputs * outputs);
        let biases = draw(outputs);
        Self {
            inputs,
            outputs,
            weights,
            biases,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.biases.iter().enumerate().map(|(o, b)| b + dot(self.row(o), x)));
    }

    fn is_consistent(&self) -> bool {
        self.weights.len() == self.inputs * self.outputs && self.biases.len() == self.outputs
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

/// Reusable per-sample buffers for forward/backward passes.
#[derive(Debug, Default)]
pub struct Workspace {
    // activations[0] is the input, activations[l + 1] the output of layer l
    // (post-ReLU for hidden layers).
    activations: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl QNetwork {
    /// Freshly initialized network with the controller layout.
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::with_layout(&Q_LAYOUT, rng)
    }

    pub fn with_layout<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::uniform(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if !l.is_consistent() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} arrays do not match {}x{}",
                    l.outputs, l.inputs
                )));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs != w[1].inputs {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    w[0].outputs,
                    i + 1,
                    w[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layout(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn same_shape(&self, other: &QNetwork) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    /// Q-values for one input. Rejects wrong-length or non-finite input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(i));
        }
        let mut ws = Workspace::default();
        Ok(self.forward_into(x, &mut ws).to_vec())
    }

    /// Forward pass keeping every activation in `ws`; returns the output.
    pub(crate) fn forward_into<'w>(&self, x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        let n = self.layers.len();
        ws.activations.resize_with(n + 1, Vec::new);
        ws.activations[0].clear();
        ws.activations[0].extend_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.activations.split_at_mut(l + 1);
            let out = &mut tail[0];
            layer.affine(&head[l], out);
            if l + 1 < n {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        &ws.activations[n]
    }

    /// Adds ∂(gᵀ q(x))/∂θ into `grads`, where `g = grad_out`. Runs its own
    /// forward pass so the caller only supplies the upstream gradient.
    pub(crate) fn accumulate_gradient(&self, x: &[f64], grad_out: &[f64], grads: &mut QNetwork, ws: &mut Workspace) {
        self.forward_into(x, ws);
        let n = self.layers.len();
        ws.delta.clear();
        ws.delta.extend_from_slice(grad_out);
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let input = &ws.activations[l];
            let g = &mut grads.layers[l];
            for (o, &d) in ws.delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, input, &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                    g.biases[o] += d;
                }
            }
            if l == 0 {
                break;
            }
            ws.delta_prev.clear();
            ws.delta_prev.resize(layer.inputs, 0.0);
            for (o, &d) in ws.delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, layer.row(o), &mut ws.delta_prev);
                }
            }
            // ReLU derivative from the post-activation value.
            for (dp, &a) in ws.delta_prev.iter_mut().zip(input.iter()) {
                if a <= 0.0 {
                    *dp = 0.0;
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }

    /// Overwrites every parameter with `other`'s.
    pub fn copy_from(&mut self, other: &QNetwork) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "cannot copy {:?} into {:?}",
                other.layout(),
                self.layout()
            )));
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.copy_from_slice(&src.weights);
            dst.biases.copy_from_slice(&src.biases);
        }
        Ok(())
    }

    pub(crate) fn add_assign(&mut self, other: &QNetwork) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(1.0, &b.weights, &mut a.weights);
            axpy(1.0, &b.biases, &mut a.biases);
        }
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}
