//! Dense layers and MLP stacks with batched forward and reverse passes.
//!
//! Activations are row-major `batch × width` buffers.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            activation,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-uniform weights for ReLU layers, Glorot-uniform for linear ones;
    /// zero bias.
    pub fn init<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = match activation {
            Activation::Relu => (6.0 / inputs as f64).sqrt(),
            Activation::Linear => (6.0 / (inputs + outputs) as f64).sqrt(),
        };
        let mut layer = Self::zeros(inputs, outputs, activation);
        for w in layer.weights.iter_mut() {
            *w = rng.random_range(-limit..limit);
        }
        layer
    }

    pub fn is_consistent(&self) -> bool {
        self.weights.len() == self.inputs * self.outputs && self.bias.len() == self.outputs
    }

    pub fn forward(&self, input: &[f64], batch: usize) -> Vec<f64> {
        debug_assert_eq!(input.len(), batch * self.inputs);
        let (n_in, n_out) = (self.inputs, self.outputs);
        let mut transposed = vec![0.0; n_in * n_out];
        for o in 0..n_out {
            for i in 0..n_in {
                transposed[i * n_out + o] = self.weights[o * n_in + i];
            }
        }
        let mut out = vec![0.0; batch * n_out];
        for (x, y) in input.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
            y.copy_from_slice(&self.bias);
            for (&xi, w) in x.iter().zip(transposed.chunks_exact(n_out)) {
                if xi != 0.0 {
                    axpy(y, xi, w);
                }
            }
            if self.activation == Activation::Relu {
                for v in y.iter_mut() {
                    // max(0, z) with the subgradient at 0 taken as 0.
                    if *v <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to `input` when `want_input` is set.
    pub fn backward(
        &self,
        input: &[f64],
        output: &[f64],
        mut d_output: Vec<f64>,
        grad: &mut DenseLayer,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (n_in, n_out) = (self.inputs, self.outputs);
        if self.activation == Activation::Relu {
            for (d, &y) in d_output.iter_mut().zip(output) {
                if y <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let mut d_input = want_input.then(|| vec![0.0; input.len()]);
        for (b, (x, dz)) in input
            .chunks_exact(n_in)
            .zip(d_output.chunks_exact(n_out))
            .enumerate()
        {
            for (o, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad.bias[o] += g;
                axpy(&mut grad.weights[o * n_in..(o + 1) * n_in], g, x);
                if let Some(dx) = d_input.as_mut() {
                    axpy(
                        &mut dx[b * n_in..(b + 1) * n_in],
                        g,
                        &self.weights[o * n_in..(o + 1) * n_in],
                    );
                }
            }
        }
        d_input
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Inputs and per-layer outputs of one batched forward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub batch: usize,
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    pub activations: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }
}

impl Mlp {
    /// Layers of widths `dims[0] → dims[1] → …`; ReLU on every layer except
    /// optionally the last.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], linear_output: bool, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let act = if linear_output && l == last {
                    Activation::Linear
                } else {
                    Activation::Relu
                };
                DenseLayer::init(w[0], w[1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs, l.activation))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Layer widths are chained and every buffer has its declared size.
    pub fn is_consistent(&self) -> bool {
        !self.layers.is_empty()
            && self.layers.iter().all(DenseLayer::is_consistent)
            && self.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
    }

    pub fn forward(&self, input: Vec<f64>, batch: usize) -> MlpTrace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input);
        for layer in &self.layers {
            let next = layer.forward(activations.last().unwrap(), batch);
            activations.push(next);
        }
        MlpTrace { batch, activations }
    }

    pub fn backward(
        &self,
        trace: &MlpTrace,
        d_output: Vec<f64>,
        grad: &mut Mlp,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let mut d = d_output;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let need = want_input || l > 0;
            d = layer.backward(
                &trace.activations[l],
                &trace.activations[l + 1],
                d,
                &mut grad.layers[l],
                need,
            )?;
        }
        Some(d)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}
