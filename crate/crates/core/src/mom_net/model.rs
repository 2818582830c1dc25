//! The encoder/decoder network, its losses and exact gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::Mlp;
use super::NetError;
use crate::geometry::{PixelPoint, WorldPoint};
use crate::sampling::{EstimatorBatch, TrainingPair, ESTIMATORS_PER_BATCH};

/// Flattened width of one camera's estimator batch.
pub const CAMERA_INPUT_DIM: usize = 2 * ESTIMATORS_PER_BATCH;
pub const DIVISION_GUARD: f64 = 1e-9;

/// Row-major 3×4 matrix.
pub type Mat34 = [f64; 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderMode {
    /// `(h₀, h₁)` of `h = P_k [ŷ; 1]`; the depth scale is folded into `P_k`.
    #[default]
    Linear,
    /// `(h₀ / h₂, h₁ / h₂)`.
    Perspective,
}

/// Hidden widths of the per-camera stacks and the fusion head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub local_hidden: Vec<usize>,
    pub global_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            local_hidden: vec![64, 64],
            global_hidden: vec![128, 64],
        }
    }
}

/// Maps pixels and world coordinates to network units and back.
///
/// Pixels are divided by the image size; world coordinates are mapped
/// affinely from the scene bounds onto `[-1, 1]³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub image_sizes: Vec<[f64; 2]>,
    pub world_min: [f64; 3],
    pub world_max: [f64; 3],
}

impl Normalizer {
    pub fn validate(&self) -> Result<(), NetError> {
        let ok_images = self.image_sizes.iter().flatten().all(|d| *d > 0.0);
        let ok_world = (0..3).all(|a| self.world_max[a] > self.world_min[a]);
        if ok_images && ok_world {
            Ok(())
        } else {
            Err(NetError::InvalidConfig("normalizer bounds must be positive extents".into()))
        }
    }

    pub fn pixel(&self, camera: usize, p: PixelPoint) -> [f64; 2] {
        let [w, h] = self.image_sizes[camera];
        [p.u / w, p.v / h]
    }

    pub fn world(&self, p: WorldPoint) -> [f64; 3] {
        let c = [p.x, p.y, p.z];
        std::array::from_fn(|a| {
            2.0 * (c[a] - self.world_min[a]) / (self.world_max[a] - self.world_min[a]) - 1.0
        })
    }

    pub fn denormalize_world(&self, n: [f64; 3]) -> WorldPoint {
        let c: [f64; 3] = std::array::from_fn(|a| {
            self.world_min[a] + 0.5 * (n[a] + 1.0) * (self.world_max[a] - self.world_min[a])
        });
        WorldPoint::from(c)
    }
}

/// k per-camera stacks and one fusion head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub locals: Vec<Mlp>,
    pub global: Mlp,
}

/// One learned 3×4 matrix per camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub projections: Vec<Mat34>,
}

/// Every trainable parameter. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: EncoderParams {
                locals: self.encoder.locals.iter().map(Mlp::zeros_like).collect(),
                global: self.encoder.global.zeros_like(),
            },
            decoder: DecoderParams {
                projections: vec![[0.0; 12]; self.decoder.projections.len()],
            },
        }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (k, mlp) in self.encoder.locals.iter().enumerate() {
            for (l, layer) in mlp.layers.iter().enumerate() {
                out.push((format!("local{k}.layer{l}.weight"), &layer.weights));
                out.push((format!("local{k}.layer{l}.bias"), &layer.bias));
            }
        }
        for (l, layer) in self.encoder.global.layers.iter().enumerate() {
            out.push((format!("global.layer{l}.weight"), &layer.weights));
            out.push((format!("global.layer{l}.bias"), &layer.bias));
        }
        for (k, p) in self.decoder.projections.iter().enumerate() {
            out.push((format!("decoder{k}.projection"), p.as_slice()));
        }
        out
    }

    /// Mutable views in the same order as [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for mlp in self.encoder.locals.iter_mut() {
            for layer in mlp.layers.iter_mut() {
                out.push(&mut layer.weights);
                out.push(&mut layer.bias);
            }
        }
        for layer in self.encoder.global.layers.iter_mut() {
            out.push(&mut layer.weights);
            out.push(&mut layer.bias);
        }
        for p in self.decoder.projections.iter_mut() {
            out.push(p.as_mut_slice());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Localization and reconstruction losses of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loc: f64,
    pub rec: f64,
}

impl LossBreakdown {
    /// `loss_loc + λ · loss_rec`.
    pub fn total(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            self.loc
        } else {
            self.loc + lambda * self.rec
        }
    }
}

/// The full network with its normalization and decoder mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomNet {
    pub params: Params,
    pub normalizer: Normalizer,
    pub decoder_mode: DecoderMode,
}

/// Everything the reverse pass needs from one forward pass.
struct ForwardPass {
    batch: usize,
    local_traces: Vec<super::layer::MlpTrace>,
    global_trace: super::layer::MlpTrace,
}

impl ForwardPass {
    fn prediction(&self, b: usize) -> [f64; 3] {
        let out = self.global_trace.output();
        [out[3 * b], out[3 * b + 1], out[3 * b + 2]]
    }
}

impl MomNet {
    /// Random initialization: He-uniform hidden layers and decoder matrices
    /// near `[I₂ 0 0; 0 0 0 1]` (the first two rows of `[I₃ | 0]` with a unit
    /// homogeneous row) plus small noise.
    pub fn init<R: Rng + ?Sized>(
        cameras: usize,
        architecture: &Architecture,
        normalizer: Normalizer,
        decoder_mode: DecoderMode,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        if cameras < 2 {
            return Err(NetError::InvalidConfig(format!(
                "need at least 2 cameras, got {cameras}"
            )));
        }
        if normalizer.image_sizes.len() != cameras {
            return Err(NetError::ShapeMismatch(format!(
                "normalizer has {} image sizes for {cameras} cameras",
                normalizer.image_sizes.len()
            )));
        }
        normalizer.validate()?;
        if architecture.local_hidden.is_empty() {
            return Err(NetError::InvalidConfig("local stacks need at least one layer".into()));
        }

        let mut local_dims = vec![CAMERA_INPUT_DIM];
        local_dims.extend_from_slice(&architecture.local_hidden);
        let locals: Vec<Mlp> = (0..cameras)
            .map(|_| Mlp::init(&local_dims, false, rng))
            .collect();
        let mut global_dims = vec![cameras * local_dims[local_dims.len() - 1]];
        global_dims.extend_from_slice(&architecture.global_hidden);
        global_dims.push(3);
        let global = Mlp::init(&global_dims, true, rng);

        #[rustfmt::skip]
        const BASE: Mat34 = [
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ];
        let projections = (0..cameras)
            .map(|_| std::array::from_fn(|i| BASE[i] + rng.random_range(-0.01..0.01)))
            .collect();

        Ok(Self {
            params: Params {
                encoder: EncoderParams { locals, global },
                decoder: DecoderParams { projections },
            },
            normalizer,
            decoder_mode,
        })
    }

    pub fn cameras(&self) -> usize {
        self.params.encoder.locals.len()
    }

    /// Shape checks for deserialized networks.
    pub fn validate(&self) -> Result<(), NetError> {
        let k = self.cameras();
        let enc = &self.params.encoder;
        if k < 2 || self.params.decoder.projections.len() != k || self.normalizer.image_sizes.len() != k {
            return Err(NetError::ShapeMismatch("camera counts disagree".into()));
        }
        if !enc.locals.iter().all(|m| m.is_consistent() && m.input_dim() == CAMERA_INPUT_DIM)
            || !enc.global.is_consistent()
        {
            return Err(NetError::ShapeMismatch("inconsistent layer shapes".into()));
        }
        let concat: usize = enc.locals.iter().map(Mlp::output_dim).sum();
        if enc.global.input_dim() != concat || enc.global.output_dim() != 3 {
            return Err(NetError::ShapeMismatch(format!(
                "global stack expects {} inputs and 3 outputs, locals provide {concat}",
                enc.global.input_dim()
            )));
        }
        self.normalizer.validate()
    }

    fn check_batches(&self, batches: &[EstimatorBatch]) -> Result<(), NetError> {
        if batches.len() != self.cameras() {
            return Err(NetError::ShapeMismatch(format!(
                "expected {} camera batches, got {}",
                self.cameras(),
                batches.len()
            )));
        }
        for (k, b) in batches.iter().enumerate() {
            if b.camera != k {
                return Err(NetError::ShapeMismatch(format!(
                    "batch {k} belongs to camera {}",
                    b.camera
                )));
            }
        }
        Ok(())
    }

    fn forward_pass<'a, I>(&self, inputs: I) -> Result<ForwardPass, NetError>
    where
        I: IntoIterator<Item = &'a [EstimatorBatch]>,
        I::IntoIter: ExactSizeIterator,
    {
        let inputs = inputs.into_iter();
        let batch = inputs.len();
        let k = self.cameras();
        let mut camera_inputs = vec![Vec::with_capacity(batch * CAMERA_INPUT_DIM); k];
        for batches in inputs {
            self.check_batches(batches)?;
            for (cam, b) in batches.iter().enumerate() {
                for e in b.estimators.iter() {
                    camera_inputs[cam].extend_from_slice(&self.normalizer.pixel(cam, e.mean));
                }
            }
        }

        let local_traces: Vec<_> = self
            .params
            .encoder
            .locals
            .iter()
            .zip(camera_inputs)
            .map(|(mlp, input)| mlp.forward(input, batch))
            .collect();

        let widths: Vec<usize> = self.params.encoder.locals.iter().map(Mlp::output_dim).collect();
        let concat_width: usize = widths.iter().sum();
        let mut concat = Vec::with_capacity(batch * concat_width);
        for b in 0..batch {
            for (trace, &w) in local_traces.iter().zip(&widths) {
                concat.extend_from_slice(&trace.output()[b * w..(b + 1) * w]);
            }
        }
        let global_trace = self.params.encoder.global.forward(concat, batch);
        Ok(ForwardPass {
            batch,
            local_traces,
            global_trace,
        })
    }

    /// Encoder output in normalized world units.
    pub fn encode_normalized(&self, batches: &[EstimatorBatch]) -> Result<[f64; 3], NetError> {
        Ok(self.forward_pass([batches])?.prediction(0))
    }

    /// Predicted world point in meters.
    pub fn encode(&self, batches: &[EstimatorBatch]) -> Result<WorldPoint, NetError> {
        Ok(self.normalizer.denormalize_world(self.encode_normalized(batches)?))
    }

    /// Batched [`MomNet::encode`].
    pub fn encode_many(&self, inputs: &[&[EstimatorBatch]]) -> Result<Vec<WorldPoint>, NetError> {
        let pass = self.forward_pass(inputs.iter().copied())?;
        Ok((0..pass.batch)
            .map(|b| self.normalizer.denormalize_world(pass.prediction(b)))
            .collect())
    }

    /// Decoder output for camera `camera` in normalized pixel units.
    pub fn decode(&self, y: [f64; 3], camera: usize) -> Result<[f64; 2], NetError> {
        decode(&self.params.decoder.projections[camera], y, self.decoder_mode)
    }

    /// Per-batch losses without gradients.
    pub fn losses(&self, pairs: &[TrainingPair]) -> Result<LossBreakdown, NetError> {
        let refs: Vec<&TrainingPair> = pairs.iter().collect();
        self.losses_of(&refs)
    }

    pub fn losses_of(&self, pairs: &[&TrainingPair]) -> Result<LossBreakdown, NetError> {
        if pairs.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let pass = self.forward_pass(pairs.iter().map(|p| p.batches.as_slice()))?;
        let mut loss = LossBreakdown::default();
        for (b, pair) in pairs.iter().enumerate() {
            let y = pass.prediction(b);
            let t = self.normalizer.world(pair.target);
            loss.loc += (0..3).map(|a| (y[a] - t[a]).powi(2)).sum::<f64>();
            for cam in 0..self.cameras() {
                let d = self.decode(y, cam)?;
                let x = self.normalizer.pixel(cam, pair.pixel_means[cam]);
                loss.rec += (d[0] - x[0]).powi(2) + (d[1] - x[1]).powi(2);
            }
        }
        let n = pairs.len() as f64;
        loss.loc /= n;
        loss.rec /= n;
        Ok(loss)
    }

    /// Losses and exact gradients of `loss_loc + λ · loss_rec`.
    pub fn backward(
        &self,
        pairs: &[&TrainingPair],
        lambda: f64,
    ) -> Result<(LossBreakdown, Params), NetError> {
        if pairs.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let k = self.cameras();
        let pass = self.forward_pass(pairs.iter().map(|p| p.batches.as_slice()))?;
        let batch = pass.batch;
        let scale = 2.0 / batch as f64;
        let mut grads = self.params.zeros_like();
        let mut loss = LossBreakdown::default();
        let mut d_out = vec![0.0; batch * 3];

        for (b, pair) in pairs.iter().enumerate() {
            let y = pass.prediction(b);
            let t = self.normalizer.world(pair.target);
            let dy = &mut d_out[3 * b..3 * b + 3];
            for a in 0..3 {
                let r = y[a] - t[a];
                loss.loc += r * r;
                dy[a] = scale * r;
            }
            for cam in 0..k {
                let p = &self.params.decoder.projections[cam];
                let x = self.normalizer.pixel(cam, pair.pixel_means[cam]);
                let yh = [y[0], y[1], y[2], 1.0];
                let h: [f64; 3] = std::array::from_fn(|r| (0..4).map(|c| p[4 * r + c] * yh[c]).sum());
                // Gradient of the loss with respect to h.
                let gh: [f64; 3] = match self.decoder_mode {
                    DecoderMode::Linear => {
                        let r = [h[0] - x[0], h[1] - x[1]];
                        loss.rec += r[0] * r[0] + r[1] * r[1];
                        [lambda * scale * r[0], lambda * scale * r[1], 0.0]
                    }
                    DecoderMode::Perspective => {
                        if h[2].abs() < DIVISION_GUARD {
                            return Err(NetError::DivisionGuard { camera: cam, depth: h[2] });
                        }
                        let d = [h[0] / h[2], h[1] / h[2]];
                        let r = [d[0] - x[0], d[1] - x[1]];
                        loss.rec += r[0] * r[0] + r[1] * r[1];
                        let g = [lambda * scale * r[0], lambda * scale * r[1]];
                        [g[0] / h[2], g[1] / h[2], -(g[0] * d[0] + g[1] * d[1]) / h[2]]
                    }
                };
                if lambda == 0.0 {
                    continue;
                }
                let gp = &mut grads.decoder.projections[cam];
                for r in 0..3 {
                    for c in 0..4 {
                        gp[4 * r + c] += gh[r] * yh[c];
                    }
                }
                for (a, d) in dy.iter_mut().enumerate() {
                    *d += (0..3).map(|r| gh[r] * p[4 * r + a]).sum::<f64>();
                }
            }
        }
        loss.loc /= batch as f64;
        loss.rec /= batch as f64;

        let d_concat = self
            .params
            .encoder
            .global
            .backward(&pass.global_trace, d_out, &mut grads.encoder.global, true)
            .expect("input gradient requested");

        let widths: Vec<usize> = self.params.encoder.locals.iter().map(Mlp::output_dim).collect();
        let concat_width: usize = widths.iter().sum();
        let mut offset = 0;
        for (cam, &w) in widths.iter().enumerate() {
            let mut d_local = Vec::with_capacity(batch * w);
            for b in 0..batch {
                let row = b * concat_width + offset;
                d_local.extend_from_slice(&d_concat[row..row + w]);
            }
            self.params.encoder.locals[cam].backward(
                &pass.local_traces[cam],
                d_local,
                &mut grads.encoder.locals[cam],
                false,
            );
            offset += w;
        }

        for (name, t) in grads.tensors() {
            if t.iter().any(|g| !g.is_finite()) {
                return Err(NetError::NonFiniteGradient(name));
            }
        }
        Ok((loss, grads))
    }
}

/// `h = P [ŷ; 1]`, then either `(h₀, h₁)` or `(h₀/h₂, h₁/h₂)`.
pub fn decode(p: &Mat34, y: [f64; 3], mode: DecoderMode) -> Result<[f64; 2], NetError> {
    let yh = [y[0], y[1], y[2], 1.0];
    let h: [f64; 3] = std::array::from_fn(|r| (0..4).map(|c| p[4 * r + c] * yh[c]).sum());
    match mode {
        DecoderMode::Linear => Ok([h[0], h[1]]),
        DecoderMode::Perspective => {
            if h[2].abs() < DIVISION_GUARD {
                Err(NetError::DivisionGuard { camera: usize::MAX, depth: h[2] })
            } else {
                Ok([h[0] / h[2], h[1] / h[2]])
            }
        }
    }
}
