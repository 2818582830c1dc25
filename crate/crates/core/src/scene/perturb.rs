//! Input perturbations applied to an existing dataset.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{padded_box, Dataset};
use crate::rng::{substream, Domain};

/// Rigid per-camera, per-frame image shift drawn uniformly from
/// `[-max_offset, max_offset]²`, applied to every keypoint and the bbox.
pub fn inject_camera_offset(dataset: &Dataset, max_offset: f64, seed: u64) -> Dataset {
    let mut out = dataset.clone();
    if max_offset <= 0.0 {
        return out;
    }
    for rec in &mut out.records {
        let mut rng = substream(seed, Domain::CameraOffset, rec.frame);
        for cam in &mut rec.cams {
            let du = rng.random_range(-max_offset..=max_offset);
            let dv = rng.random_range(-max_offset..=max_offset);
            for k in &mut cam.kps {
                k.u += du;
                k.v += dv;
            }
            cam.bbox = cam.bbox.translated(du, dv);
        }
    }
    out.manifest.camera_offset = max_offset;
    out
}

/// Independent Gaussian shift on every keypoint; bboxes are recomputed.
pub fn inject_keypoint_noise(dataset: &Dataset, sigma: f64, seed: u64) -> Dataset {
    let mut out = dataset.clone();
    if sigma <= 0.0 {
        return out;
    }
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    for rec in &mut out.records {
        let mut rng = substream(seed, Domain::KeypointNoise, rec.frame);
        for cam in &mut rec.cams {
            for k in &mut cam.kps {
                k.u += noise.sample(&mut rng);
                k.v += noise.sample(&mut rng);
            }
            if let Some(b) = padded_box(&cam.kps) {
                cam.bbox = b;
            }
        }
    }
    out.manifest.added_noise = sigma;
    out
}
