//! Localization metrics: position error statistics, thresholded accuracy,
//! ATE/RPE, and a CSV comparison table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::WorldPoint;

/// Thresholds (meters) for the accuracy columns.
pub const ACC_THRESHOLDS: [f64; 4] = [0.2, 0.3, 0.4, 0.5];
pub const REPORT_HEADER: &str = "method,mean,median,std,ate,rpe,acc02,acc03,acc04,acc05,best_flags";

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions for {ground_truth} ground-truth frames")]
    LengthMismatch {
        predictions: usize,
        ground_truth: usize,
    },
    #[error("frame mismatch at position {index}: prediction for frame {predicted}, ground truth for frame {expected}")]
    FrameMismatch {
        index: usize,
        predicted: u64,
        expected: u64,
    },
    #[error("no frames to evaluate")]
    Empty,
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("relative error with gap {delta} needs at least {} frames, got {frames}", delta + 1)]
    TooFewFrames { frames: usize, delta: usize },
    #[error("non-finite prediction at position {0}")]
    NonFinite(usize),
}

/// `planar` ignores the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceMode {
    #[serde(rename = "planar")]
    Planar,
    #[default]
    #[serde(rename = "3d")]
    ThreeD,
}

impl DistanceMode {
    pub fn for_manifest(planar: bool) -> Self {
        if planar {
            DistanceMode::Planar
        } else {
            DistanceMode::ThreeD
        }
    }

    fn vector(self, a: WorldPoint, b: WorldPoint) -> [f64; 3] {
        let dz = match self {
            DistanceMode::Planar => 0.0,
            DistanceMode::ThreeD => a.z - b.z,
        };
        [a.x - b.x, a.y - b.y, dz]
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Per-frame distances and their summary. `std` is the population standard
/// deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub distances: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

fn check_pair(predictions: &[WorldPoint], ground_truth: &[WorldPoint]) -> Result<(), EvalError> {
    if predictions.len() != ground_truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            ground_truth: ground_truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(i) = predictions.iter().position(|p| !p.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    Ok(())
}

/// Pairs predictions with ground truth by frame id, in ground-truth order.
pub fn align_by_frame(
    predictions: &[(u64, WorldPoint)],
    ground_truth: &[(u64, WorldPoint)],
) -> Result<(Vec<WorldPoint>, Vec<WorldPoint>), EvalError> {
    if predictions.len() != ground_truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            ground_truth: ground_truth.len(),
        });
    }
    let mut p = Vec::with_capacity(predictions.len());
    let mut g = Vec::with_capacity(predictions.len());
    for (i, ((pf, pp), (gf, gp))) in predictions.iter().zip(ground_truth).enumerate() {
        if pf != gf {
            return Err(EvalError::FrameMismatch {
                index: i,
                predicted: *pf,
                expected: *gf,
            });
        }
        p.push(*pp);
        g.push(*gp);
    }
    Ok((p, g))
}

pub fn position_errors(
    predictions: &[WorldPoint],
    ground_truth: &[WorldPoint],
    mode: DistanceMode,
) -> Result<ErrorSummary, EvalError> {
    check_pair(predictions, ground_truth)?;
    let distances: Vec<f64> = predictions
        .iter()
        .zip(ground_truth)
        .map(|(p, g)| norm(mode.vector(*p, *g)))
        .collect();
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let std = (distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n).sqrt();
    let mut sorted = distances.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Ok(ErrorSummary {
        distances,
        mean,
        median,
        std,
    })
}

/// Percentage of distances strictly below `tau`.
pub fn acc_at(distances: &[f64], tau: f64) -> Result<f64, EvalError> {
    if !(tau > 0.0) {
        return Err(EvalError::InvalidThreshold(tau));
    }
    if distances.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = distances.iter().filter(|d| **d < tau).count();
    Ok(100.0 * hits as f64 / distances.len() as f64)
}

/// `(ATE, RPE)`: RMS of per-frame distances without alignment, and RMS of
/// displacement errors over a `delta`-frame gap.
pub fn trajectory_errors(
    predictions: &[WorldPoint],
    ground_truth: &[WorldPoint],
    delta: usize,
    mode: DistanceMode,
) -> Result<(f64, f64), EvalError> {
    check_pair(predictions, ground_truth)?;
    let n = predictions.len();
    if delta == 0 || n < delta + 1 {
        return Err(EvalError::TooFewFrames { frames: n, delta });
    }
    let ate = (predictions
        .iter()
        .zip(ground_truth)
        .map(|(p, g)| norm(mode.vector(*p, *g)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let mut acc = 0.0;
    for t in 0..n - delta {
        let dp = mode.vector(predictions[t + delta], predictions[t]);
        let dg = mode.vector(ground_truth[t + delta], ground_truth[t]);
        acc += norm([dp[0] - dg[0], dp[1] - dg[1], dp[2] - dg[2]]).powi(2);
    }
    let rpe = (acc / (n - delta) as f64).sqrt();
    Ok((ate, rpe))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub mode: DistanceMode,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// Percent accuracy at each of [`ACC_THRESHOLDS`].
    pub acc: [f64; 4],
    pub ate: f64,
    pub rpe: f64,
}

impl MetricsReport {
    pub fn acc_at(&self, tau: f64) -> Option<f64> {
        ACC_THRESHOLDS
            .iter()
            .position(|t| *t == tau)
            .map(|i| self.acc[i])
    }
}

/// Full metric suite with a one-frame RPE gap.
pub fn evaluate(
    predictions: &[WorldPoint],
    ground_truth: &[WorldPoint],
    mode: DistanceMode,
) -> Result<MetricsReport, EvalError> {
    let errors = position_errors(predictions, ground_truth, mode)?;
    let (ate, rpe) = trajectory_errors(predictions, ground_truth, 1, mode)?;
    let mut acc = [0.0; 4];
    for (a, tau) in acc.iter_mut().zip(ACC_THRESHOLDS) {
        *a = acc_at(&errors.distances, tau)?;
    }
    Ok(MetricsReport {
        count: errors.distances.len(),
        mode,
        mean: errors.mean,
        median: errors.median,
        std: errors.std,
        acc,
        ate,
        rpe,
    })
}

const COLUMNS: [&str; 9] = [
    "mean", "median", "std", "ate", "rpe", "acc02", "acc03", "acc04", "acc05",
];

fn columns(r: &MetricsReport) -> [f64; 9] {
    [
        r.mean, r.median, r.std, r.ate, r.rpe, r.acc[0], r.acc[1], r.acc[2], r.acc[3],
    ]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per labelled report. `best_flags` lists, `;`-separated, the
/// columns where the row is best (lowest error, highest accuracy); ties are
/// all marked.
pub fn report(rows: &[(String, MetricsReport)]) -> String {
    let values: Vec<[f64; 9]> = rows.iter().map(|(_, r)| columns(r)).collect();
    let best: Vec<f64> = (0..COLUMNS.len())
        .map(|c| {
            let it = values.iter().map(|v| v[c]);
            if c >= 5 {
                it.fold(f64::NEG_INFINITY, f64::max)
            } else {
                it.fold(f64::INFINITY, f64::min)
            }
        })
        .collect();
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for ((label, _), v) in rows.iter().zip(&values) {
        let flags: Vec<&str> = (0..COLUMNS.len())
            .filter(|&c| v[c] == best[c])
            .map(|c| COLUMNS[c])
            .collect();
        out.push_str(&csv_field(label));
        for x in v {
            out.push_str(&format!(",{x}"));
        }
        out.push(',');
        out.push_str(&flags.join(";"));
        out.push('\n');
    }
    out
}
