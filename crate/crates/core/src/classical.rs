//! PnP + triangulation baseline.
//!
//! `dlt_pnp` estimates a projection matrix from world/pixel correspondences,
//! `triangulate` inverts several calibrated views back to one world point.

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    cross_matrix, project, GeometryError, PixelPoint, ProjectionMatrix, Provenance, WorldPoint,
};
use crate::linalg::jacobi_svd;

pub const MIN_DLT_POINTS: usize = 6;
/// `σ_min / σ_next` above this means the DLT null space is not one-dimensional.
pub const DLT_DEGENERACY_RATIO: f64 = 0.99;
/// Relative size of `σ_next` below which the DLT null space is treated as
/// multi-dimensional regardless of the ratio test.
pub const DLT_RANK_EPS: f64 = 1e-9;
pub const TRIANGULATION_CONDITION_LIMIT: f64 = 1e12;
pub const POINT_AT_INFINITY_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error("DLT needs at least {MIN_DLT_POINTS} correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate correspondence configuration (singular value ratio {ratio:.4})")]
    DegenerateConfiguration { ratio: f64 },
    #[error("triangulation needs at least 2 distinct cameras, got {0}")]
    TooFewViews(usize),
    #[error("viewing rays are near parallel (condition number {0:e})")]
    RaysNearParallel(f64),
    #[error("triangulated point is at infinity (w = {0:e})")]
    PointAtInfinity(f64),
    #[error("non-finite input")]
    NonFinite,
    #[error("cameras disagree on keypoint count ({0} vs {1})")]
    KeypointCountMismatch(usize, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One world/pixel pair for a single camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub world: WorldPoint,
    pub pixel: PixelPoint,
}

/// The observation of one point by one calibrated camera.
#[derive(Debug, Clone, Copy)]
pub struct ViewObservation<'a> {
    pub camera: usize,
    pub pixel: PixelPoint,
    pub projection: &'a ProjectionMatrix,
}

/// Similarity transform taking points to zero centroid and the given mean
/// distance from the origin.
fn isotropic_normalizer<const D: usize>(
    points: impl Iterator<Item = [f64; D]> + Clone,
    target_mean_distance: f64,
) -> Option<([f64; D], f64)> {
    let mut centroid = [0.0; D];
    let mut count = 0usize;
    for p in points.clone() {
        for (c, x) in centroid.iter_mut().zip(p) {
            *c += x;
        }
        count += 1;
    }
    for c in centroid.iter_mut() {
        *c /= count as f64;
    }
    let mean_distance = points
        .map(|p| {
            p.iter()
                .zip(centroid.iter())
                .map(|(x, c)| (x - c) * (x - c))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / count as f64;
    if !(mean_distance > 0.0) {
        return None;
    }
    Some((centroid, target_mean_distance / mean_distance))
}

/// Direct linear transform with isotropic normalization of both point sets.
pub fn dlt_pnp(corr: &[Correspondence]) -> Result<ProjectionMatrix, ClassicalError> {
    if corr.len() < MIN_DLT_POINTS {
        return Err(ClassicalError::TooFewPoints(corr.len()));
    }
    if corr.iter().any(|c| !c.world.is_finite() || !c.pixel.is_finite()) {
        return Err(ClassicalError::NonFinite);
    }

    let degenerate = ClassicalError::DegenerateConfiguration { ratio: 1.0 };
    let (wc, ws) = isotropic_normalizer(corr.iter().map(|c| <[f64; 3]>::from(c.world)), 3f64.sqrt())
        .ok_or(degenerate.clone())?;
    let (pc, ps) = isotropic_normalizer(corr.iter().map(|c| <[f64; 2]>::from(c.pixel)), 2f64.sqrt())
        .ok_or(degenerate)?;

    #[rustfmt::skip]
    let world_t = Matrix4::new(
        ws, 0.0, 0.0, -ws * wc[0],
        0.0, ws, 0.0, -ws * wc[1],
        0.0, 0.0, ws, -ws * wc[2],
        0.0, 0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let pixel_t = Matrix3::new(
        ps, 0.0, -ps * pc[0],
        0.0, ps, -ps * pc[1],
        0.0, 0.0, 1.0,
    );

    let mut a = DMatrix::<f64>::zeros(2 * corr.len(), 12);
    for (i, c) in corr.iter().enumerate() {
        let x = world_t * c.world.homogeneous();
        let u = ps * (c.pixel.u - pc[0]);
        let v = ps * (c.pixel.v - pc[1]);
        for j in 0..4 {
            // Row from u · (p3 · X) − p1 · X = 0.
            a[(2 * i, j)] = x[j];
            a[(2 * i, 8 + j)] = -u * x[j];
            // Row from v · (p3 · X) − p2 · X = 0.
            a[(2 * i + 1, 4 + j)] = x[j];
            a[(2 * i + 1, 8 + j)] = -v * x[j];
        }
    }

    let svd = jacobi_svd(&a);
    let n = svd.singular_values.len();
    let smallest = svd.singular_values[n - 1];
    let next = svd.singular_values[n - 2];
    let ratio = if next > 0.0 { smallest / next } else { 1.0 };
    if ratio > DLT_DEGENERACY_RATIO || next <= DLT_RANK_EPS * svd.largest() {
        return Err(ClassicalError::DegenerateConfiguration { ratio });
    }

    let h = svd.null_vector();
    let normalized = Matrix3x4::from_fn(|r, c| h[4 * r + c]);
    let pixel_t_inv = pixel_t
        .try_inverse()
        .expect("isotropic scaling matrix is invertible");
    let mut p = pixel_t_inv * normalized * world_t;
    p /= p.norm();

    let positive = corr
        .iter()
        .filter(|c| (p.row(2) * c.world.homogeneous())[0] > 0.0)
        .count();
    if 2 * positive < corr.len() {
        p = -p;
    }
    Ok(ProjectionMatrix::new(p, Provenance::Estimated)?)
}

/// Linear triangulation from two or more calibrated views.
///
/// Each view contributes the first two rows of `[p]× P`; blocks are scaled by
/// `1 / ‖P‖` so the solution does not depend on each matrix's overall scale.
pub fn triangulate(obs: &[ViewObservation<'_>]) -> Result<WorldPoint, ClassicalError> {
    let mut cameras: Vec<usize> = obs.iter().map(|o| o.camera).collect();
    cameras.sort_unstable();
    cameras.dedup();
    if cameras.len() < 2 {
        return Err(ClassicalError::TooFewViews(cameras.len()));
    }
    if obs.iter().any(|o| !o.pixel.is_finite()) {
        return Err(ClassicalError::NonFinite);
    }

    let mut a = DMatrix::<f64>::zeros(2 * obs.len(), 4);
    for (i, o) in obs.iter().enumerate() {
        let p = o.projection.matrix();
        let block = cross_matrix(o.pixel) * p / p.norm();
        for r in 0..2 {
            for c in 0..4 {
                a[(2 * i + r, c)] = block[(r, c)];
            }
        }
    }

    let svd = jacobi_svd(&a);
    // The exact solution makes σ₄ vanish; the conditioning of the rank-3 part
    // is what detects parallel rays.
    let third = svd.singular_values[2];
    let condition = if third > 0.0 {
        svd.largest() / third
    } else {
        f64::INFINITY
    };
    if condition > TRIANGULATION_CONDITION_LIMIT {
        return Err(ClassicalError::RaysNearParallel(condition));
    }

    let x = svd.null_vector();
    if x[3].abs() < POINT_AT_INFINITY_EPS {
        return Err(ClassicalError::PointAtInfinity(x[3]));
    }
    Ok(WorldPoint::from_vector(&(Vector3::new(x[0], x[1], x[2]) / x[3])))
}

/// Per-point pixel distances between projections and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprojectionReport {
    pub distances: Vec<f64>,
    pub rms: f64,
}

impl ReprojectionReport {
    pub fn max(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }
}

/// Points that land on the camera plane count as infinitely far off.
pub fn reprojection_error(p: &ProjectionMatrix, corr: &[Correspondence]) -> ReprojectionReport {
    let distances: Vec<f64> = corr
        .iter()
        .map(|c| match project(p, c.world) {
            Ok(proj) => proj.pixel.distance(c.pixel),
            Err(_) => f64::INFINITY,
        })
        .collect();
    let rms = if distances.is_empty() {
        0.0
    } else {
        (distances.iter().map(|d| d * d).sum::<f64>() / distances.len() as f64).sqrt()
    };
    ReprojectionReport { distances, rms }
}

/// Which image evidence the baseline triangulates per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselinePoints {
    /// Triangulate keypoint `i` across cameras for every `i`, then average.
    #[default]
    Keypoints,
    /// Triangulate the centers of the per-camera bounding boxes.
    BboxCenter,
}

/// Triangulates matched keypoints (same index across cameras) and averages
/// the recovered points. Keypoints whose rays are degenerate are skipped;
/// the call fails only if none survive.
pub fn locate_from_keypoints(
    projections: &[ProjectionMatrix],
    keypoints: &[&[PixelPoint]],
) -> Result<WorldPoint, ClassicalError> {
    let count = keypoints.first().map_or(0, |k| k.len());
    for k in keypoints {
        if k.len() != count {
            return Err(ClassicalError::KeypointCountMismatch(count, k.len()));
        }
    }
    let mut sum = Vector3::zeros();
    let mut used = 0usize;
    let mut last_err = ClassicalError::TooFewViews(keypoints.len());
    for i in 0..count {
        let views: Vec<ViewObservation<'_>> = projections
            .iter()
            .zip(keypoints)
            .enumerate()
            .map(|(cam, (p, k))| ViewObservation {
                camera: cam,
                pixel: k[i],
                projection: p,
            })
            .collect();
        match triangulate(&views) {
            Ok(w) => {
                sum += w.to_vector();
                used += 1;
            }
            Err(e) => last_err = e,
        }
    }
    if used == 0 {
        return Err(last_err);
    }
    Ok(WorldPoint::from_vector(&(sum / used as f64)))
}
