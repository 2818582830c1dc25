//! Synthetic multi-camera scenes: walking trajectories, ellipsoidal body point
//! clouds, rendering through pinhole cameras, and calibration markers for the
//! classical baseline.

mod dataset;
mod perturb;

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraModel, Extrinsics, GeometryError, Intrinsics, PixelPoint, WorldPoint};
use crate::rng::{substream, Domain};
use crate::sampling::BoundingBox;

pub use dataset::{
    read_dataset, write_dataset, Area, Calibration, CameraView, Dataset, DatasetRecord, Manifest,
    DATASET_FORMAT, MANIFEST_FILE, RECORDS_FILE,
};
pub use perturb::{inject_camera_offset, inject_keypoint_noise};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown trajectory pattern {0:?} (expected random, cross or square)")]
    UnknownPattern(String),
    #[error("unknown scene {0:?}")]
    UnknownScene(String),
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("frame {frame}: camera {camera} sees no points")]
    EmptyView { frame: u64, camera: usize },
    #[error("unsupported dataset format {0:?}")]
    UnsupportedFormat(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("records line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("records line {line}: expected {expected} cameras, found {found}")]
    CameraCountMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    #[default]
    Random,
    Cross,
    Square,
}

impl FromStr for Pattern {
    type Err = SceneError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Pattern::Random),
            "cross" => Ok(Pattern::Cross),
            "square" => Ok(Pattern::Square),
            other => Err(SceneError::UnknownPattern(other.to_string())),
        }
    }
}

/// Body modeled as a solid vertical ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDims {
    pub height: f64,
    pub radius: f64,
}

impl BodyDims {
    pub fn center_height(&self) -> f64 {
        0.5 * self.height
    }
}

/// Camera placement: position, heading in the ground plane, downward pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub position: [f64; 3],
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub focal: f64,
    pub image: [u32; 2],
}

impl CameraSpec {
    pub fn model(&self, id: usize) -> Result<CameraModel, GeometryError> {
        let [w, h] = self.image;
        let k = Intrinsics::new(self.focal, self.focal, 0.5 * w as f64, 0.5 * h as f64, 0.0)?;
        let (yaw, pitch) = (self.yaw_deg.to_radians(), self.pitch_deg.to_radians());
        let eye = WorldPoint::from(self.position);
        let forward = Vector3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), -pitch.sin());
        let target = WorldPoint::from_vector(&(eye.to_vector() + forward));
        let rt = Extrinsics::look_at(eye, target, Vector3::z())?;
        CameraModel::new(id, k, rt, w, h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub area: Area,
    pub body: BodyDims,
    pub cameras: Vec<CameraSpec>,
    pub points_per_body: usize,
    /// Gaussian pixel noise on every rendered keypoint and marker.
    pub keypoint_noise: f64,
    pub seed: u64,
    pub frames: usize,
    /// Independent walkers; each contributes one contiguous trajectory.
    pub subjects: usize,
    pub pattern: Pattern,
    /// Meters per frame.
    pub speed: f64,
    pub calibration_points: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::walk_2cam()
    }
}

impl SceneSpec {
    /// 10 × 10 m room, two 640×480 cameras at opposite corners 2.5 m up and
    /// pitched down 20°, 20 points per body, 1 px noise, 5000 frames.
    pub fn walk_2cam() -> Self {
        let camera = |position: [f64; 3], yaw_deg: f64| CameraSpec {
            position,
            yaw_deg,
            pitch_deg: 20.0,
            focal: 320.0,
            image: [640, 480],
        };
        Self {
            name: "walk-2cam".into(),
            area: Area {
                x: [0.0, 10.0],
                y: [0.0, 10.0],
                z: [0.0, 2.0],
            },
            body: BodyDims {
                height: 1.7,
                radius: 0.25,
            },
            cameras: vec![
                camera([-0.5, -0.5, 2.5], 45.0),
                camera([10.5, 10.5, 2.5], 225.0),
            ],
            points_per_body: 20,
            keypoint_noise: 1.0,
            seed: 42,
            frames: 5000,
            subjects: 10,
            pattern: Pattern::Random,
            speed: 0.05,
            calibration_points: 20,
        }
    }

    pub fn named(name: &str) -> Result<Self, SceneError> {
        match name {
            "walk-2cam" => Ok(Self::walk_2cam()),
            other => Err(SceneError::UnknownScene(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidSpec(m));
        if self.cameras.len() < 2 {
            return bad(format!("need at least 2 cameras, got {}", self.cameras.len()));
        }
        if !self.area.is_valid() {
            return bad("area extents must be positive".into());
        }
        if self.points_per_body == 0 {
            return bad("points per body must be at least 1".into());
        }
        if !(self.keypoint_noise >= 0.0) {
            return bad("keypoint noise must be non-negative".into());
        }
        if self.frames == 0 || self.subjects == 0 || self.subjects > self.frames {
            return bad("need 1 <= subjects <= frames".into());
        }
        if !(self.speed >= 0.0) || !(self.body.height >= 0.0) || !(self.body.radius >= 0.0) {
            return bad("speed and body dimensions must be non-negative".into());
        }
        if self.cameras.iter().any(|c| c.image[0] == 0 || c.image[1] == 0) {
            return bad("image dimensions must be positive".into());
        }
        Ok(())
    }

    pub fn rig(&self) -> Result<Vec<CameraModel>, SceneError> {
        self.cameras
            .iter()
            .enumerate()
            .map(|(i, c)| c.model(i).map_err(SceneError::from))
            .collect()
    }
}

/// Ordered body-center positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub pattern: Pattern,
    pub points: Vec<(u64, WorldPoint)>,
}

/// Inset used by the scripted cross and square paths.
fn path_margin(area: &Area) -> f64 {
    (0.1 * (area.x[1] - area.x[0]).min(area.y[1] - area.y[0])).min(1.0)
}

/// Point at arclength `s` along a closed polyline.
fn along_polyline(vertices: &[(f64, f64)], s: f64) -> (f64, f64) {
    let lengths: Vec<f64> = vertices
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .collect();
    let total: f64 = lengths.iter().sum();
    if total == 0.0 {
        return vertices[0];
    }
    let mut s = s.rem_euclid(total);
    for (w, len) in vertices.windows(2).zip(&lengths) {
        if s <= *len && *len > 0.0 {
            let t = s / len;
            return (w[0].0 + t * (w[1].0 - w[0].0), w[0].1 + t * (w[1].1 - w[0].1));
        }
        s -= len;
    }
    vertices[vertices.len() - 1]
}

/// Reflects `x` back into `[lo, hi]`; returns whether a reflection happened.
fn reflect(x: &mut f64, lo: f64, hi: f64) -> bool {
    let mut flipped = false;
    while *x < lo || *x > hi {
        if *x < lo {
            *x = 2.0 * lo - *x;
        } else {
            *x = 2.0 * hi - *x;
        }
        flipped = !flipped;
    }
    flipped
}

/// Constant-speed body-center path at height `center_z`.
///
/// `random` is a reflecting random walk with a wandering heading; `cross`
/// repeatedly walks out and back along both axes through the center; `square`
/// loops the perimeter of the area inset by a margin.
pub fn gen_trajectory<R: Rng + ?Sized>(
    pattern: Pattern,
    steps: usize,
    speed: f64,
    area: &Area,
    center_z: f64,
    first_frame: u64,
    rng: &mut R,
) -> Trajectory {
    let frames = (0..steps as u64).map(|i| first_frame + i);
    let points: Vec<(u64, WorldPoint)> = match pattern {
        Pattern::Random => {
            let mut x = rng.random_range(area.x[0]..=area.x[1]);
            let mut y = rng.random_range(area.y[0]..=area.y[1]);
            let mut heading = rng.random_range(0.0..TAU);
            let turn = Normal::new(0.0, 0.2).expect("valid normal");
            let mut out = Vec::with_capacity(steps);
            for f in frames {
                out.push((f, WorldPoint::new(x, y, center_z)));
                heading += turn.sample(rng);
                x += speed * heading.cos();
                y += speed * heading.sin();
                if reflect(&mut x, area.x[0], area.x[1]) {
                    heading = PI - heading;
                }
                if reflect(&mut y, area.y[0], area.y[1]) {
                    heading = -heading;
                }
            }
            out
        }
        Pattern::Cross | Pattern::Square => {
            let m = path_margin(area);
            let (x0, x1, y0, y1) = (area.x[0] + m, area.x[1] - m, area.y[0] + m, area.y[1] - m);
            let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            let vertices: Vec<(f64, f64)> = if pattern == Pattern::Square {
                vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
            } else {
                vec![
                    (cx, cy),
                    (x1, cy),
                    (cx, cy),
                    (cx, y1),
                    (cx, cy),
                    (x0, cy),
                    (cx, cy),
                    (cx, y0),
                    (cx, cy),
                ]
            };
            frames
                .enumerate()
                .map(|(i, f)| {
                    let (x, y) = along_polyline(&vertices, i as f64 * speed);
                    (f, WorldPoint::new(x, y, center_z))
                })
                .collect()
        }
    };
    Trajectory { pattern, points }
}

/// `n` points inside the vertical ellipsoid around `center`, drawn as
/// uniform samples paired with their reflection through the center (plus the
/// center itself when `n` is odd), so the cloud's centroid is the center.
pub fn gen_body_points<R: Rng + ?Sized>(
    center: WorldPoint,
    n: usize,
    body: &BodyDims,
    rng: &mut R,
) -> Vec<WorldPoint> {
    let half = 0.5 * body.height;
    let mut out = Vec::with_capacity(n);
    if n % 2 == 1 {
        out.push(center);
    }
    while out.len() < n {
        let (a, b, c) = loop {
            let p: (f64, f64, f64) = (
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if p.0 * p.0 + p.1 * p.1 + p.2 * p.2 <= 1.0 {
                break p;
            }
        };
        let (dx, dy, dz) = (body.radius * a, body.radius * b, half * c);
        out.push(WorldPoint::new(center.x + dx, center.y + dy, center.z + dz));
        out.push(WorldPoint::new(center.x - dx, center.y - dy, center.z - dz));
    }
    out
}

/// Tight box around `points`, padded by half a pixel along any axis where
/// the points coincide.
pub(crate) fn padded_box(points: &[PixelPoint]) -> Option<BoundingBox> {
    let first = points.first()?;
    let mut b = [first.u, first.v, first.u, first.v];
    for p in points {
        b[0] = b[0].min(p.u);
        b[1] = b[1].min(p.v);
        b[2] = b[2].max(p.u);
        b[3] = b[3].max(p.v);
    }
    if b[2] <= b[0] {
        b[0] -= 0.5;
        b[2] += 0.5;
    }
    if b[3] <= b[1] {
        b[1] -= 0.5;
        b[3] += 0.5;
    }
    BoundingBox::new(b[0], b[1], b[2], b[3]).ok()
}

/// A rendered frame plus how many body points were dropped for lying behind
/// (or on the plane of) some camera.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub record: DatasetRecord,
    pub dropped: usize,
}

/// Projects body points into every camera and adds Gaussian pixel noise.
///
/// A point not in front of every camera is dropped from all views, so
/// keypoint `i` refers to the same body point in every camera.
pub fn render_frame<R: Rng + ?Sized>(
    rig: &[CameraModel],
    frame: u64,
    center: WorldPoint,
    body_points: &[WorldPoint],
    noise_px: f64,
    rng: &mut R,
) -> Result<RenderedFrame, SceneError> {
    let mut per_camera: Vec<Vec<PixelPoint>> = vec![Vec::with_capacity(body_points.len()); rig.len()];
    let mut dropped = 0;
    for p in body_points {
        let projected: Option<Vec<PixelPoint>> = rig
            .iter()
            .map(|cam| match cam.project(*p) {
                Ok(proj) if !proj.behind_camera => Some(proj.pixel),
                _ => None,
            })
            .collect();
        match projected {
            Some(pixels) => {
                for (dst, px) in per_camera.iter_mut().zip(pixels) {
                    dst.push(px);
                }
            }
            None => dropped += 1,
        }
    }

    let noise = (noise_px > 0.0).then(|| Normal::new(0.0, noise_px).expect("valid sigma"));
    let mut cams = Vec::with_capacity(rig.len());
    for (cam, mut kps) in rig.iter().zip(per_camera) {
        if let Some(n) = &noise {
            for k in kps.iter_mut() {
                k.u += n.sample(rng);
                k.v += n.sample(rng);
            }
        }
        let bbox = padded_box(&kps).ok_or(SceneError::EmptyView {
            frame,
            camera: cam.id,
        })?;
        cams.push(CameraView {
            id: cam.id,
            bbox,
            kps,
        });
    }
    Ok(RenderedFrame {
        record: DatasetRecord {
            frame,
            seq: None,
            gt: center,
            cams,
        },
        dropped,
    })
}

/// A generated dataset together with the hidden generative state.
#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub spec: SceneSpec,
    pub rig: Vec<CameraModel>,
    pub dataset: Dataset,
    /// World body points behind each record, in keypoint order.
    pub body_points: Vec<Vec<WorldPoint>>,
    /// Noise-free pixel positions of the calibration markers per camera.
    pub calibration_truth: Vec<Vec<PixelPoint>>,
    pub dropped_points: usize,
}

impl GeneratedScene {
    /// Observation sets with the raw world body points attached.
    pub fn observation_sets_with_world(&self) -> Vec<crate::sampling::ObservationSet> {
        self.dataset
            .observation_sets()
            .into_iter()
            .zip(&self.body_points)
            .map(|(mut o, w)| {
                o.world_points = Some(w.clone());
                o
            })
            .collect()
    }
}

/// Renders a full scene. Every frame draws from its own seeded streams.
pub fn generate(spec: &SceneSpec) -> Result<GeneratedScene, SceneError> {
    spec.validate()?;
    let rig = spec.rig()?;
    let center_z = spec.body.center_height();

    let mut records = Vec::with_capacity(spec.frames);
    let mut body_points = Vec::with_capacity(spec.frames);
    let mut dropped_points = 0;
    let per_subject = spec.frames / spec.subjects;
    let mut next_frame = 0u64;
    for subject in 0..spec.subjects {
        let steps = if subject + 1 == spec.subjects {
            spec.frames - per_subject * (spec.subjects - 1)
        } else {
            per_subject
        };
        let traj = gen_trajectory(
            spec.pattern,
            steps,
            spec.speed,
            &spec.area,
            center_z,
            next_frame,
            &mut substream(spec.seed, Domain::Trajectory, subject as u64),
        );
        next_frame += steps as u64;
        for (frame, center) in traj.points {
            let body = gen_body_points(
                center,
                spec.points_per_body,
                &spec.body,
                &mut substream(spec.seed, Domain::Body, frame),
            );
            let mut rendered = render_frame(
                &rig,
                frame,
                center,
                &body,
                spec.keypoint_noise,
                &mut substream(spec.seed, Domain::Render, frame),
            )?;
            rendered.record.seq = Some(subject as u32);
            dropped_points += rendered.dropped;
            records.push(rendered.record);
            body_points.push(body);
        }
    }

    let (calibration, calibration_truth) = calibration_markers(spec, &rig);
    let manifest = Manifest {
        format: DATASET_FORMAT.to_string(),
        scene: spec.name.clone(),
        cameras: rig.len(),
        image_sizes: spec.cameras.iter().map(|c| c.image).collect(),
        area: spec.area,
        planar: true,
        seed: spec.seed,
        keypoint_noise: spec.keypoint_noise,
        points_per_body: spec.points_per_body,
        camera_offset: 0.0,
        added_noise: 0.0,
        projections: Some(rig.iter().map(|c| c.projection().rows()).collect()),
        calibration: Some(calibration),
    };
    Ok(GeneratedScene {
        spec: spec.clone(),
        rig,
        dataset: Dataset { manifest, records },
        body_points,
        calibration_truth,
        dropped_points,
    })
}

/// Known world markers spread through the area volume, observed by every
/// camera with the scene's keypoint noise.
fn calibration_markers(spec: &SceneSpec, rig: &[CameraModel]) -> (Calibration, Vec<Vec<PixelPoint>>) {
    let mut rng = substream(spec.seed, Domain::Calibration, 0);
    let noise = (spec.keypoint_noise > 0.0).then(|| Normal::new(0.0, spec.keypoint_noise).expect("valid sigma"));
    let mut world = Vec::with_capacity(spec.calibration_points);
    let mut truth = vec![Vec::with_capacity(spec.calibration_points); rig.len()];
    while world.len() < spec.calibration_points {
        let w = WorldPoint::new(
            rng.random_range(spec.area.x[0]..=spec.area.x[1]),
            rng.random_range(spec.area.y[0]..=spec.area.y[1]),
            rng.random_range(spec.area.z[0]..=spec.area.z[1]),
        );
        let pixels: Option<Vec<PixelPoint>> = rig
            .iter()
            .map(|c| c.project(w).ok().filter(|p| !p.behind_camera).map(|p| p.pixel))
            .collect();
        if let Some(pixels) = pixels {
            world.push(w);
            for (t, p) in truth.iter_mut().zip(pixels) {
                t.push(p);
            }
        }
    }
    let pixels = truth
        .iter()
        .map(|cam| {
            cam.iter()
                .map(|p| match &noise {
                    Some(n) => PixelPoint::new(p.u + n.sample(&mut rng), p.v + n.sample(&mut rng)),
                    None => *p,
                })
                .collect()
        })
        .collect();
    (Calibration { world, pixels }, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{triangulate, ViewObservation};
    use crate::rng::seeded;

    fn area() -> Area {
        Area {
            x: [0.0, 10.0],
            y: [0.0, 10.0],
            z: [0.0, 2.0],
        }
    }

    #[test]
    fn square_stays_on_perimeter() {
        let a = area();
        let m = path_margin(&a);
        let t = gen_trajectory(Pattern::Square, 2000, 0.07, &a, 0.85, 0, &mut seeded(0));
        for (_, p) in &t.points {
            let on_x = (p.x - m).abs() < 1e-9 || (p.x - (10.0 - m)).abs() < 1e-9;
            let on_y = (p.y - m).abs() < 1e-9 || (p.y - (10.0 - m)).abs() < 1e-9;
            assert!(on_x || on_y, "{p:?} off the perimeter");
            assert!(p.x >= m - 1e-9 && p.x <= 10.0 - m + 1e-9);
        }
    }

    #[test]
    fn cross_stays_on_axes() {
        let t = gen_trajectory(Pattern::Cross, 1000, 0.05, &area(), 0.85, 0, &mut seeded(0));
        assert!(t.points.iter().all(|(_, p)| (p.x - 5.0).abs() < 1e-9 || (p.y - 5.0).abs() < 1e-9));
    }

    #[test]
    fn random_walk_stays_inside() {
        let a = area();
        let t = gen_trajectory(Pattern::Random, 20_000, 0.3, &a, 0.85, 100, &mut seeded(3));
        assert!(t.points.iter().all(|(_, p)| a.contains(*p)));
        assert!(t.points.windows(2).all(|w| w[1].0 == w[0].0 + 1));
        assert_eq!(t.points[0].0, 100);
    }

    #[test]
    fn single_step_is_start() {
        let a = area();
        let t = gen_trajectory(Pattern::Random, 1, 0.5, &a, 0.85, 0, &mut seeded(1));
        assert_eq!(t.points.len(), 1);
        let s = gen_trajectory(Pattern::Square, 1, 0.5, &a, 0.85, 0, &mut seeded(1));
        assert_eq!(s.points[0].1, WorldPoint::new(1.0, 1.0, 0.85));
    }

    #[test]
    fn unknown_pattern() {
        assert!(matches!("zigzag".parse::<Pattern>(), Err(SceneError::UnknownPattern(_))));
        assert_eq!("cross".parse::<Pattern>().unwrap(), Pattern::Cross);
    }

    #[test]
    fn body_points_center_on_center() {
        let body = BodyDims { height: 1.7, radius: 0.25 };
        let c = WorldPoint::new(3.0, 4.0, 0.85);
        let n = 100_000;
        let pts = gen_body_points(c, n, &body, &mut seeded(5));
        // Uniform ellipsoid: per-axis variance is semi-axis² / 5.
        let sigma = [0.25 / 5f64.sqrt(), 0.25 / 5f64.sqrt(), 0.85 / 5f64.sqrt()];
        let mean = crate::sampling::mean_of(pts.iter().copied());
        let half: Vec<f64> = pts.iter().step_by(2).map(|p| p.z - c.z).collect();
        let half_sd = (half.iter().map(|d| d * d).sum::<f64>() / half.len() as f64).sqrt();
        assert!((half_sd - sigma[2]).abs() < 0.01, "spread {half_sd}");
        let diff = [mean.x - c.x, mean.y - c.y, mean.z - c.z];
        for a in 0..3 {
            assert!(diff[a].abs() < 3.0 * sigma[a] / (n as f64).sqrt(), "axis {a}: {}", diff[a]);
        }
        for p in &pts {
            let q = ((p.x - c.x) / 0.25).powi(2) + ((p.y - c.y) / 0.25).powi(2) + ((p.z - c.z) / 0.85).powi(2);
            assert!(q <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn degenerate_body_is_center() {
        let c = WorldPoint::new(1.0, 2.0, 3.0);
        let pts = gen_body_points(c, 1, &BodyDims { height: 0.0, radius: 0.0 }, &mut seeded(0));
        assert_eq!(pts, vec![c]);
    }

    fn small_scene(noise: f64) -> GeneratedScene {
        let spec = SceneSpec {
            frames: 60,
            subjects: 3,
            keypoint_noise: noise,
            ..SceneSpec::walk_2cam()
        };
        generate(&spec).unwrap()
    }

    #[test]
    fn noiseless_render_matches_projection() {
        let scene = small_scene(0.0);
        for (rec, body) in scene.dataset.records.iter().zip(&scene.body_points) {
            for (cam, view) in scene.rig.iter().zip(&rec.cams) {
                for (kp, w) in view.kps.iter().zip(body) {
                    assert_eq!(*kp, cam.project(*w).unwrap().pixel);
                }
                assert!(view.kps.iter().all(|k| view.bbox.contains(*k)));
            }
        }
    }

    #[test]
    fn render_noise_has_requested_spread() {
        let rig = SceneSpec::walk_2cam().rig().unwrap();
        let center = WorldPoint::new(5.0, 5.0, 0.85);
        let body = vec![center; 10_000];
        let clean = rig[0].project(center).unwrap().pixel;
        let r = render_frame(&rig, 0, center, &body, 2.0, &mut seeded(8)).unwrap();
        let kps = &r.record.cams[0].kps;
        for axis in 0..2 {
            let vals: Vec<f64> = kps.iter().map(|k| if axis == 0 { k.u - clean.u } else { k.v - clean.v }).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
            assert!((1.9..=2.1).contains(&sd), "axis {axis} sd {sd}");
        }
        assert!(kps.iter().all(|k| r.record.cams[0].bbox.contains(*k)));
    }

    #[test]
    fn render_drops_points_behind_a_camera() {
        let rig = SceneSpec::walk_2cam().rig().unwrap();
        let center = WorldPoint::new(5.0, 5.0, 0.85);
        let behind = WorldPoint::new(-3.0, -3.0, 2.5);
        let r = render_frame(&rig, 0, center, &[center, behind], 0.0, &mut seeded(0)).unwrap();
        assert_eq!(r.dropped, 1);
        assert!(r.record.cams.iter().all(|c| c.kps.len() == 1));
        let err = render_frame(&rig, 7, center, &[behind], 0.0, &mut seeded(0)).unwrap_err();
        assert!(matches!(err, SceneError::EmptyView { frame: 7, camera: 0 }));
    }

    #[test]
    fn noiseless_scene_triangulates_exactly() {
        let scene = small_scene(0.0);
        let projections: Vec<_> = scene.rig.iter().map(|c| *c.projection()).collect();
        for (rec, body) in scene.dataset.records.iter().zip(&scene.body_points) {
            for (i, w) in body.iter().enumerate() {
                let views: Vec<ViewObservation<'_>> = rec
                    .cams
                    .iter()
                    .map(|c| ViewObservation {
                        camera: c.id,
                        pixel: c.kps[i],
                        projection: &projections[c.id],
                    })
                    .collect();
                assert!(triangulate(&views).unwrap().distance(*w) < 1e-5);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = small_scene(1.0);
        let b = small_scene(1.0);
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.dataset.records.len(), 60);
        assert_eq!(a.dataset.manifest.calibration.as_ref().unwrap().world.len(), 20);
        assert!(a.dataset.records.iter().all(|r| r.gt.z == 0.85));
        let seqs: Vec<u32> = a.dataset.records.iter().map(|r| r.seq.unwrap()).collect();
        assert_eq!((seqs[0], seqs[20], seqs[59]), (0, 1, 2));
    }

    #[test]
    fn spec_validation() {
        let mut spec = SceneSpec::walk_2cam();
        spec.cameras.truncate(1);
        assert!(matches!(spec.validate(), Err(SceneError::InvalidSpec(_))));
        assert!(matches!(SceneSpec::named("nope"), Err(SceneError::UnknownScene(_))));
    }
}
