//! On-disk dataset: `manifest.toml` plus `records.jsonl`, one frame per line.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SceneError;
use crate::geometry::{PixelPoint, WorldPoint};
use crate::mom_net::Normalizer;
use crate::sampling::{BoundingBox, CameraObservations, ObservationSet};

pub const DATASET_FORMAT: &str = "mom-dataset/1";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RECORDS_FILE: &str = "records.jsonl";

/// Axis-aligned scene bounds in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Area {
    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.z].iter().all(|[lo, hi]| hi > lo)
    }

    pub fn contains(&self, p: WorldPoint) -> bool {
        (self.x[0]..=self.x[1]).contains(&p.x)
            && (self.y[0]..=self.y[1]).contains(&p.y)
            && (self.z[0]..=self.z[1]).contains(&p.z)
    }
}

/// Known world markers and their observed pixels, per camera in camera order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub world: Vec<WorldPoint>,
    pub pixels: Vec<Vec<PixelPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub scene: String,
    pub cameras: usize,
    pub image_sizes: Vec<[u32; 2]>,
    pub area: Area,
    /// Ground-truth height is constant across frames.
    pub planar: bool,
    pub seed: u64,
    pub keypoint_noise: f64,
    pub points_per_body: usize,
    /// Maximum rigid pixel offset injected after generation.
    #[serde(default)]
    pub camera_offset: f64,
    /// Extra per-keypoint Gaussian noise injected after generation.
    #[serde(default)]
    pub added_noise: f64,
    /// True projection matrices, row-major, synthetic scenes only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<Vec<[[f64; 4]; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

impl Manifest {
    fn validate(&self) -> Result<(), SceneError> {
        if self.format != DATASET_FORMAT {
            return Err(SceneError::UnsupportedFormat(self.format.clone()));
        }
        let bad = |m: String| Err(SceneError::Manifest(m));
        if self.cameras < 2 {
            return bad(format!("need at least 2 cameras, got {}", self.cameras));
        }
        if self.image_sizes.len() != self.cameras {
            return bad(format!(
                "{} image sizes for {} cameras",
                self.image_sizes.len(),
                self.cameras
            ));
        }
        if self.image_sizes.iter().flatten().any(|d| *d == 0) {
            return bad("image dimensions must be positive".into());
        }
        if !self.area.is_valid() {
            return bad("area extents must be positive".into());
        }
        if let Some(p) = &self.projections {
            if p.len() != self.cameras {
                return bad(format!("{} projections for {} cameras", p.len(), self.cameras));
            }
        }
        if let Some(c) = &self.calibration {
            if c.pixels.len() != self.cameras || c.pixels.iter().any(|p| p.len() != c.world.len()) {
                return bad("calibration pixels must list every marker for every camera".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraView {
    pub id: usize,
    pub bbox: BoundingBox,
    pub kps: Vec<PixelPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub frame: u64,
    /// Trajectory (subject) the frame belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u32>,
    pub gt: WorldPoint,
    pub cams: Vec<CameraView>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn ground_truth(&self) -> Vec<WorldPoint> {
        self.records.iter().map(|r| r.gt).collect()
    }

    pub fn observation_sets(&self) -> Vec<ObservationSet> {
        self.records
            .iter()
            .map(|r| ObservationSet {
                frame: r.frame,
                cameras: r
                    .cams
                    .iter()
                    .map(|c| CameraObservations {
                        camera: c.id,
                        points: c.kps.clone(),
                        bbox: Some(c.bbox),
                    })
                    .collect(),
                world_points: None,
                center: r.gt,
            })
            .collect()
    }

    pub fn normalizer(&self) -> Normalizer {
        let a = &self.manifest.area;
        Normalizer {
            image_sizes: self
                .manifest
                .image_sizes
                .iter()
                .map(|[w, h]| [*w as f64, *h as f64])
                .collect(),
            world_min: [a.x[0], a.y[0], a.z[0]],
            world_max: [a.x[1], a.y[1], a.z[1]],
        }
    }

    /// Record indices `(train, test)`. Whole trajectories go to the test side
    /// (the highest sequence ids); a single-trajectory dataset is split into
    /// a leading train block and a trailing test block.
    pub fn split(&self, test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let n = self.records.len();
        let seqs: BTreeSet<u32> = self.records.iter().filter_map(|r| r.seq).collect();
        let all_tagged = self.records.iter().all(|r| r.seq.is_some());
        if all_tagged && seqs.len() >= 2 {
            let n_test = ((seqs.len() as f64 * test_fraction).round() as usize).clamp(1, seqs.len() - 1);
            let test_seqs: BTreeSet<u32> = seqs.iter().rev().take(n_test).copied().collect();
            (0..n).partition(|&i| !test_seqs.contains(&self.records[i].seq.unwrap()))
        } else {
            let n_test = ((n as f64 * test_fraction).round() as usize).min(n);
            ((0..n - n_test).collect(), (n - n_test..n).collect())
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            manifest: self.manifest.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Non-fatal consistency issues.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.manifest.planar {
            if let Some(first) = self.records.first() {
                if let Some(r) = self.records.iter().find(|r| r.gt.z != first.gt.z) {
                    out.push(format!(
                        "manifest is planar but frame {} has height {} (frame {} has {})",
                        r.frame, r.gt.z, first.frame, first.gt.z
                    ));
                }
            }
        }
        out
    }
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), SceneError> {
    fs::create_dir_all(dir)?;
    let manifest =
        toml::to_string(&dataset.manifest).map_err(|e| SceneError::Manifest(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(RECORDS_FILE))?);
    for r in &dataset.records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads and validates a dataset; returns it with any consistency warnings.
pub fn read_dataset(dir: &Path) -> Result<(Dataset, Vec<String>), SceneError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| {
        match toml::from_str::<toml::Table>(&text)
            .ok()
            .and_then(|t| t.get("format").and_then(|f| f.as_str()).map(str::to_owned))
        {
            Some(f) if f != DATASET_FORMAT => SceneError::UnsupportedFormat(f),
            _ => SceneError::Manifest(e.to_string()),
        }
    })?;
    manifest.validate()?;

    let body = fs::read_to_string(dir.join(RECORDS_FILE))?;
    let mut records = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(line).map_err(|e| SceneError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        if rec.cams.len() != manifest.cameras {
            return Err(SceneError::CameraCountMismatch {
                line: line_no,
                expected: manifest.cameras,
                found: rec.cams.len(),
            });
        }
        if rec.cams.iter().enumerate().any(|(k, c)| c.id != k) {
            return Err(SceneError::MalformedRecord {
                line: line_no,
                message: "camera ids must be 0..k in order".into(),
            });
        }
        records.push(rec);
    }
    let dataset = Dataset { manifest, records };
    let warnings = dataset.warnings();
    Ok((dataset, warnings))
}
