//! Adam training over freshly resampled estimator batches, and inference.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, EpochRecord, CHECKPOINT_FORMAT};
use super::model::{Architecture, DecoderMode, LossBreakdown, MomNet, Normalizer, Params};
use super::NetError;
use crate::geometry::WorldPoint;
use crate::rng::{substream, Domain};
use crate::sampling::{
    build_pair, build_training_pairs, sample_bbox_points, CameraObservations, ObservationSet,
    TrainingPair,
};

/// Abort when a batch loss exceeds this multiple of the first batch loss.
pub const DIVERGENCE_FACTOR: f64 = 1e3;
const EVAL_CHUNK: usize = 1024;

/// Which raw points feed the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationSource {
    /// Detected keypoints as given.
    #[default]
    Keypoints,
    /// Fresh uniform samples from each camera's bounding box.
    Bbox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the reconstruction loss.
    pub lambda: f64,
    pub seed: u64,
    pub decoder_mode: DecoderMode,
    pub pairs_per_frame: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub source: ObservationSource,
    pub bbox_samples: usize,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 400,
            batch_size: 256,
            lambda: 1.0,
            seed: 42,
            decoder_mode: DecoderMode::Linear,
            pairs_per_frame: 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            source: ObservationSource::Keypoints,
            bbox_samples: 20,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if self.batch_size == 0 || self.pairs_per_frame == 0 {
            return bad("batch size and pairs per frame must be at least 1");
        }
        if self.source == ObservationSource::Bbox && self.bbox_samples == 0 {
            return bad("bbox sampling needs at least 1 sample");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

impl ObservationSource {
    /// Observation sets ready for estimator sampling. Bbox mode replaces the
    /// keypoints with `samples` fresh points from each camera's box.
    pub fn prepare<'a, R: Rng + ?Sized>(
        &self,
        frames: &'a [ObservationSet],
        samples: usize,
        rng: &mut R,
    ) -> Result<Cow<'a, [ObservationSet]>, NetError> {
        match self {
            ObservationSource::Keypoints => Ok(Cow::Borrowed(frames)),
            ObservationSource::Bbox => frames
                .iter()
                .map(|f| self.prepare_one(f, samples, rng))
                .collect::<Result<Vec<_>, _>>()
                .map(Cow::Owned),
        }
    }

    fn prepare_one<R: Rng + ?Sized>(
        &self,
        frame: &ObservationSet,
        samples: usize,
        rng: &mut R,
    ) -> Result<ObservationSet, NetError> {
        match self {
            ObservationSource::Keypoints => Ok(frame.clone()),
            ObservationSource::Bbox => {
                let cameras = frame
                    .cameras
                    .iter()
                    .map(|c| {
                        let bbox = c.bbox.ok_or_else(|| {
                            NetError::InvalidConfig(format!(
                                "frame {} camera {} has no bounding box",
                                frame.frame, c.camera
                            ))
                        })?;
                        Ok(CameraObservations {
                            camera: c.camera,
                            points: sample_bbox_points(&bbox, samples, rng)?,
                            bbox: c.bbox,
                        })
                    })
                    .collect::<Result<Vec<_>, NetError>>()?;
                Ok(ObservationSet {
                    frame: frame.frame,
                    cameras,
                    world_points: frame.world_points.clone(),
                    center: frame.center,
                })
            }
        }
    }
}

struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    fn new(params: &Params, config: &TrainConfig) -> Self {
        let shapes: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        Self {
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            step: 0,
            first: shapes.clone(),
            second: shapes,
        }
    }

    fn update(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let grads = grads.tensors();
        for (((p, (_, g)), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

fn evaluate(net: &MomNet, pairs: &[TrainingPair]) -> Result<LossBreakdown, NetError> {
    let mut total = LossBreakdown::default();
    for chunk in pairs.chunks(EVAL_CHUNK) {
        let l = net.losses(chunk)?;
        let w = chunk.len() as f64;
        total.loc += l.loc * w;
        total.rec += l.rec * w;
    }
    let n = pairs.len() as f64;
    Ok(LossBreakdown {
        loc: total.loc / n,
        rec: total.rec / n,
    })
}

pub fn train(
    train_frames: &[ObservationSet],
    test_frames: &[ObservationSet],
    normalizer: Normalizer,
    config: &TrainConfig,
) -> Result<Checkpoint, NetError> {
    train_with_observer(train_frames, test_frames, normalizer, config, |_| {})
}

/// Trains from scratch, calling `observer` after every epoch.
///
/// Each epoch draws new estimator batches from the cached raw observations,
/// shuffles them and takes one Adam step per mini-batch. The test split is
/// sampled once so its loss curve is comparable across epochs.
pub fn train_with_observer(
    train_frames: &[ObservationSet],
    test_frames: &[ObservationSet],
    normalizer: Normalizer,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<Checkpoint, NetError> {
    config.validate()?;
    if train_frames.is_empty() {
        return Err(NetError::EmptySplit("train"));
    }
    if test_frames.is_empty() {
        return Err(NetError::EmptySplit("test"));
    }
    let cameras = normalizer.image_sizes.len();
    let mut net = MomNet::init(
        cameras,
        &config.architecture,
        normalizer,
        config.decoder_mode,
        &mut substream(config.seed, Domain::Init, 0),
    )?;

    let test_pairs = {
        let mut rng = substream(config.seed, Domain::TestPairs, 0);
        let obs = config
            .source
            .prepare(test_frames, config.bbox_samples, &mut rng)?;
        build_training_pairs(&obs, cameras, 1, &mut rng)?
    };

    let mut adam = Adam::new(&net.params, config);
    let mut history = Vec::with_capacity(config.epochs);
    let mut initial: Option<f64> = None;

    for epoch in 1..=config.epochs {
        let mut rng = substream(config.seed, Domain::Epoch, epoch as u64);
        let obs = config
            .source
            .prepare(train_frames, config.bbox_samples, &mut rng)?;
        let pairs = build_training_pairs(&obs, cameras, config.pairs_per_frame, &mut rng)?;
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut substream(config.seed, Domain::Shuffle, epoch as u64));

        let mut sum = LossBreakdown::default();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let (loss, grads) = net.backward(&batch, config.lambda)?;
            let total = loss.total(config.lambda);
            let reference = *initial.get_or_insert(total);
            if !total.is_finite() || total > DIVERGENCE_FACTOR * reference {
                return Err(NetError::Diverged {
                    epoch,
                    loss: total,
                    initial: reference,
                });
            }
            let w = chunk.len() as f64;
            sum.loc += loss.loc * w;
            sum.rec += loss.rec * w;
            adam.update(&mut net.params, &grads, config.learning_rate);
        }
        let n = pairs.len() as f64;
        let train_loss = LossBreakdown {
            loc: sum.loc / n,
            rec: sum.rec / n,
        };
        let test_loss = evaluate(&net, &test_pairs)?;
        let record = EpochRecord {
            epoch,
            train_loc: train_loss.loc,
            train_rec: train_loss.rec,
            test_loc: test_loss.loc,
            test_rec: test_loss.rec,
        };
        observer(&record);
        history.push(record);
    }

    Ok(Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        config: config.clone(),
        epoch: config.epochs,
        net,
        history,
    })
}

/// Per-frame predictions averaged over `draws` independent estimator
/// batches. Randomness is keyed by frame id, so results do not depend on
/// which other frames are predicted alongside.
pub fn predict(
    checkpoint: &Checkpoint,
    frames: &[ObservationSet],
    seed: u64,
    draws: usize,
) -> Result<Vec<WorldPoint>, NetError> {
    let draws = draws.max(1);
    let net = &checkpoint.net;
    let cameras = net.cameras();
    let source = checkpoint.config.source;
    let mut pairs = Vec::with_capacity(frames.len() * draws);
    for f in frames {
        let mut rng = substream(seed, Domain::Predict, f.frame);
        for _ in 0..draws {
            let obs = source.prepare_one(f, checkpoint.config.bbox_samples, &mut rng)?;
            pairs.push(build_pair(&obs, cameras, &mut rng)?);
        }
    }
    let mut out = Vec::with_capacity(frames.len());
    let per_chunk = (EVAL_CHUNK / draws).max(1) * draws;
    for chunk in pairs.chunks(per_chunk) {
        let inputs: Vec<&[_]> = chunk.iter().map(|p| p.batches.as_slice()).collect();
        let preds = net.encode_many(&inputs)?;
        for group in preds.chunks(draws) {
            let mut s = [0.0; 3];
            for p in group {
                s[0] += p.x;
                s[1] += p.y;
                s[2] += p.z;
            }
            let d = group.len() as f64;
            out.push(WorldPoint::new(s[0] / d, s[1] / d, s[2] / d));
        }
    }
    Ok(out)
}
