//! Mean estimators over body observations.
//!
//! Every point sampled on a body is treated as an observation of the body
//! center. Averaging random subsets of those observations yields mean
//! estimators; a fixed-size batch of them per camera is the network input.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PixelPoint, WorldPoint};

/// Estimators per camera in one encoder input, one per DOF of a 3×4 projection.
pub const ESTIMATORS_PER_BATCH: usize = 12;
pub const MIN_NORMALITY_SAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("bounding box has zero area: [{0}, {1}, {2}, {3}]")]
    ZeroAreaBox(f64, f64, f64, f64),
    #[error("count must be at least 1")]
    EmptyRequest,
    #[error("subset is empty")]
    EmptySubset,
    #[error("subset index {0} appears more than once")]
    DuplicateIndex(usize),
    #[error("subset index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("pair count overflows for n = {0}")]
    Overflow(u32),
    #[error("frame {frame} has no observations for camera {camera}")]
    MissingCamera { frame: u64, camera: usize },
    #[error("camera {camera} in frame {frame} has no points")]
    EmptyCamera { frame: u64, camera: usize },
    #[error("need at least {MIN_NORMALITY_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
}

/// Points that can be averaged component-wise.
pub trait Observation: Copy {
    const DIM: usize;
    fn component(&self, axis: usize) -> f64;
    fn from_components(c: &[f64]) -> Self;
}

impl Observation for PixelPoint {
    const DIM: usize = 2;
    fn component(&self, axis: usize) -> f64 {
        [self.u, self.v][axis]
    }
    fn from_components(c: &[f64]) -> Self {
        PixelPoint::new(c[0], c[1])
    }
}

impl Observation for WorldPoint {
    const DIM: usize = 3;
    fn component(&self, axis: usize) -> f64 {
        [self.x, self.y, self.z][axis]
    }
    fn from_components(c: &[f64]) -> Self {
        WorldPoint::new(c[0], c[1], c[2])
    }
}

/// Arithmetic mean of points. Panics on empty input.
pub fn mean_of<T: Observation>(points: impl IntoIterator<Item = T>) -> T {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for p in points {
        for (axis, s) in sum.iter_mut().enumerate().take(T::DIM) {
            *s += p.component(axis);
        }
        n += 1;
    }
    assert!(n > 0, "mean of an empty set");
    for s in sum.iter_mut() {
        *s /= n as f64;
    }
    T::from_components(&sum[..T::DIM])
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, SamplingError> {
        if !(x0 < x1 && y0 < y1) {
            return Err(SamplingError::ZeroAreaBox(x0, y0, x1, y1));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Tight box around `points`; `None` if the points span zero area.
    pub fn enclosing(points: &[PixelPoint]) -> Option<Self> {
        let first = points.first()?;
        let mut b = [first.u, first.v, first.u, first.v];
        for p in points {
            b[0] = b[0].min(p.u);
            b[1] = b[1].min(p.v);
            b[2] = b[2].max(p.u);
            b[3] = b[3].max(p.v);
        }
        Self::new(b[0], b[1], b[2], b[3]).ok()
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.u >= self.x0 && p.u <= self.x1 && p.v >= self.y0 && p.v <= self.y1
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn translated(&self, du: f64, dv: f64) -> Self {
        Self {
            x0: self.x0 + du,
            y0: self.y0 + dv,
            x1: self.x1 + du,
            y1: self.y1 + dv,
        }
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = SamplingError;
    fn try_from(a: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// `n` points uniform over the box interior.
pub fn sample_bbox_points<R: Rng + ?Sized>(
    bbox: &BoundingBox,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PixelPoint>, SamplingError> {
    let bbox = BoundingBox::new(bbox.x0, bbox.y0, bbox.x1, bbox.y1)?;
    if n == 0 {
        return Err(SamplingError::EmptyRequest);
    }
    Ok((0..n)
        .map(|_| {
            PixelPoint::new(
                bbox.x0 + (bbox.x1 - bbox.x0) * rng.random::<f64>(),
                bbox.y0 + (bbox.y1 - bbox.y0) * rng.random::<f64>(),
            )
        })
        .collect())
}

/// The mean of `size` original observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimator<T> {
    pub size: usize,
    pub mean: T,
}

pub fn mean_estimator<T: Observation>(
    points: &[T],
    subset: &[usize],
) -> Result<MeanEstimator<T>, SamplingError> {
    if subset.is_empty() {
        return Err(SamplingError::EmptySubset);
    }
    let mut seen = vec![false; points.len()];
    for &i in subset {
        if i >= points.len() {
            return Err(SamplingError::IndexOutOfRange {
                index: i,
                len: points.len(),
            });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(SamplingError::DuplicateIndex(i));
        }
    }
    Ok(MeanEstimator {
        size: subset.len(),
        mean: mean_of(subset.iter().map(|&i| points[i])),
    })
}

/// Draws a subset size uniformly from `1..=n`, then a uniform subset of that
/// size without replacement, and averages it.
pub fn random_mean_estimator<T: Observation, R: Rng + ?Sized>(
    points: &[T],
    rng: &mut R,
) -> Result<MeanEstimator<T>, SamplingError> {
    let n = points.len();
    if n == 0 {
        return Err(SamplingError::EmptyRequest);
    }
    let m = rng.random_range(1..=n);
    let subset = index::sample(rng, n, m);
    Ok(MeanEstimator {
        size: m,
        mean: mean_of(subset.iter().map(|i| points[i])),
    })
}

/// Twelve pixel mean estimators from one camera, in sampling order.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorBatch {
    pub camera: usize,
    pub estimators: [MeanEstimator<PixelPoint>; ESTIMATORS_PER_BATCH],
}

impl EstimatorBatch {
    /// Row-major `12 × 2` layout: `[u₀, v₀, u₁, v₁, …]`.
    pub fn flatten(&self) -> [f64; 2 * ESTIMATORS_PER_BATCH] {
        let mut out = [0.0; 2 * ESTIMATORS_PER_BATCH];
        for (i, e) in self.estimators.iter().enumerate() {
            out[2 * i] = e.mean.u;
            out[2 * i + 1] = e.mean.v;
        }
        out
    }

    /// Mean of the twelve estimator means.
    pub fn grand_mean(&self) -> PixelPoint {
        mean_of(self.estimators.iter().map(|e| e.mean))
    }
}

pub fn build_estimator_batch<R: Rng + ?Sized>(
    camera: usize,
    points: &[PixelPoint],
    rng: &mut R,
) -> Result<EstimatorBatch, SamplingError> {
    let mut estimators = [MeanEstimator {
        size: 0,
        mean: PixelPoint::default(),
    }; ESTIMATORS_PER_BATCH];
    for e in estimators.iter_mut() {
        *e = random_mean_estimator(points, rng)?;
    }
    Ok(EstimatorBatch { camera, estimators })
}

/// Number of (pixel estimator, world estimator) pairs available from `n`
/// observations per side: `(2ⁿ − 1)²`.
pub fn pair_count(n: u32) -> Result<u128, SamplingError> {
    if n == 0 {
        return Err(SamplingError::EmptyRequest);
    }
    let subsets = 1u128
        .checked_shl(n)
        .filter(|_| n < 128)
        .ok_or(SamplingError::Overflow(n))?
        - 1;
    subsets
        .checked_mul(subsets)
        .ok_or(SamplingError::Overflow(n))
}

/// Raw observations for one camera in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraObservations {
    pub camera: usize,
    pub points: Vec<PixelPoint>,
    pub bbox: Option<BoundingBox>,
}

/// All raw observations for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub frame: u64,
    pub cameras: Vec<CameraObservations>,
    /// Body points in world coordinates, when the source provides them.
    pub world_points: Option<Vec<WorldPoint>>,
    pub center: WorldPoint,
}

impl ObservationSet {
    pub fn camera(&self, id: usize) -> Result<&CameraObservations, SamplingError> {
        self.cameras
            .iter()
            .find(|c| c.camera == id)
            .ok_or(SamplingError::MissingCamera {
                frame: self.frame,
                camera: id,
            })
    }
}

/// One encoder input with its regression and reconstruction targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub frame: u64,
    /// One batch per camera, ordered by camera id.
    pub batches: Vec<EstimatorBatch>,
    pub target: WorldPoint,
    /// Per-camera grand mean of the batch, the decoder's reconstruction target.
    pub pixel_means: Vec<PixelPoint>,
}

/// Fresh estimator batches for cameras `0..cameras` of one frame.
pub fn build_pair<R: Rng + ?Sized>(
    frame: &ObservationSet,
    cameras: usize,
    rng: &mut R,
) -> Result<TrainingPair, SamplingError> {
    let mut batches = Vec::with_capacity(cameras);
    for id in 0..cameras {
        let obs = frame.camera(id)?;
        if obs.points.is_empty() {
            return Err(SamplingError::EmptyCamera {
                frame: frame.frame,
                camera: id,
            });
        }
        batches.push(build_estimator_batch(id, &obs.points, rng)?);
    }
    let target = match &frame.world_points {
        Some(w) if !w.is_empty() => random_mean_estimator(w, rng)?.mean,
        _ => frame.center,
    };
    let pixel_means = batches.iter().map(EstimatorBatch::grand_mean).collect();
    Ok(TrainingPair {
        frame: frame.frame,
        batches,
        target,
        pixel_means,
    })
}

/// `pairs_per_frame` training pairs for every frame, in frame order.
pub fn build_training_pairs<R: Rng + ?Sized>(
    frames: &[ObservationSet],
    cameras: usize,
    pairs_per_frame: usize,
    rng: &mut R,
) -> Result<Vec<TrainingPair>, SamplingError> {
    let mut out = Vec::with_capacity(frames.len() * pairs_per_frame);
    for frame in frames {
        for _ in 0..pairs_per_frame {
            out.push(build_pair(frame, cameras, rng)?);
        }
    }
    Ok(out)
}

/// Empirical moments of a sample of estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityStats {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Unbiased sample covariance.
    pub covariance: Vec<Vec<f64>>,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
}

impl NormalityStats {
    /// Standard error of the mean along `axis`.
    pub fn standard_error(&self, axis: usize) -> f64 {
        (self.covariance[axis][axis] / self.count as f64).sqrt()
    }
}

/// Moments per axis; skewness and kurtosis use population central moments
/// and are reported as zero along constant axes.
pub fn normality_stats<T: Observation>(samples: &[T]) -> Result<NormalityStats, SamplingError> {
    let n = samples.len();
    if n < MIN_NORMALITY_SAMPLES {
        return Err(SamplingError::TooFewSamples(n));
    }
    let d = T::DIM;
    let nf = n as f64;
    let mean: Vec<f64> = (0..d)
        .map(|a| samples.iter().map(|s| s.component(a)).sum::<f64>() / nf)
        .collect();

    let mut covariance = vec![vec![0.0; d]; d];
    let mut m3 = vec![0.0; d];
    let mut m4 = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    for s in samples {
        for a in 0..d {
            let da = s.component(a) - mean[a];
            m2[a] += da * da;
            m3[a] += da * da * da;
            m4[a] += da * da * da * da;
            for b in 0..d {
                covariance[a][b] += da * (s.component(b) - mean[b]);
            }
        }
    }
    for row in covariance.iter_mut() {
        for c in row.iter_mut() {
            *c /= nf - 1.0;
        }
    }
    let mut skewness = vec![0.0; d];
    let mut excess_kurtosis = vec![0.0; d];
    for a in 0..d {
        let var = m2[a] / nf;
        if var > 0.0 {
            skewness[a] = (m3[a] / nf) / var.powf(1.5);
            excess_kurtosis[a] = (m4[a] / nf) / (var * var) - 3.0;
        }
    }
    Ok(NormalityStats {
        count: n,
        mean,
        covariance,
        skewness,
        excess_kurtosis,
    })
}
