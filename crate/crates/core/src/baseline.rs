//! PnP + triangulation baseline on a dataset: calibrate each camera from the
//! manifest's known markers, then triangulate every frame.

use thiserror::Error;

use crate::classical::{
    dlt_pnp, locate_from_keypoints, reprojection_error, triangulate, BaselinePoints,
    ClassicalError, Correspondence, ReprojectionReport, ViewObservation,
};
use crate::geometry::{ProjectionMatrix, WorldPoint};
use crate::scene::{Calibration, Dataset, DatasetRecord};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("dataset manifest has no calibration markers")]
    NoCalibration,
    #[error("calibrating camera {camera}: {source}")]
    Calibration {
        camera: usize,
        source: ClassicalError,
    },
    #[error("frame {frame}: {source}")]
    Frame { frame: u64, source: ClassicalError },
}

#[derive(Debug, Clone)]
pub struct Baseline {
    pub projections: Vec<ProjectionMatrix>,
    pub reprojection: Vec<ReprojectionReport>,
}

impl Baseline {
    /// DLT-PnP per camera from the first `markers` calibration points (all
    /// of them when `None`).
    pub fn calibrate(cal: &Calibration, markers: Option<usize>) -> Result<Self, BaselineError> {
        let n = markers.unwrap_or(cal.world.len()).min(cal.world.len());
        let mut projections = Vec::with_capacity(cal.pixels.len());
        let mut reprojection = Vec::with_capacity(cal.pixels.len());
        for (camera, pixels) in cal.pixels.iter().enumerate() {
            let corr: Vec<Correspondence> = cal.world[..n]
                .iter()
                .zip(pixels)
                .map(|(w, p)| Correspondence {
                    world: *w,
                    pixel: *p,
                })
                .collect();
            let p = dlt_pnp(&corr).map_err(|source| BaselineError::Calibration { camera, source })?;
            reprojection.push(reprojection_error(&p, &corr));
            projections.push(p);
        }
        Ok(Self {
            projections,
            reprojection,
        })
    }

    pub fn from_dataset(ds: &Dataset, markers: Option<usize>) -> Result<Self, BaselineError> {
        let cal = ds
            .manifest
            .calibration
            .as_ref()
            .ok_or(BaselineError::NoCalibration)?;
        Self::calibrate(cal, markers)
    }

    pub fn locate(&self, rec: &DatasetRecord, points: BaselinePoints) -> Result<WorldPoint, ClassicalError> {
        match points {
            BaselinePoints::Keypoints => {
                let kps: Vec<&[_]> = rec.cams.iter().map(|c| c.kps.as_slice()).collect();
                locate_from_keypoints(&self.projections, &kps)
            }
            BaselinePoints::BboxCenter => {
                let views: Vec<ViewObservation<'_>> = rec
                    .cams
                    .iter()
                    .map(|c| ViewObservation {
                        camera: c.id,
                        pixel: c.bbox.center(),
                        projection: &self.projections[c.id],
                    })
                    .collect();
                triangulate(&views)
            }
        }
    }

    pub fn predict(&self, ds: &Dataset, points: BaselinePoints) -> Result<Vec<WorldPoint>, BaselineError> {
        ds.records
            .iter()
            .map(|r| {
                self.locate(r, points)
                    .map_err(|source| BaselineError::Frame { frame: r.frame, source })
            })
            .collect()
    }
}
