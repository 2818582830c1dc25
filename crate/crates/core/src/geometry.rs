//! Pinhole camera model in homogeneous coordinates.
//!
//! Points are stored inhomogeneously; the homogeneous forms are built on
//! demand so the trailing `1` can never drift.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Depth magnitude below which a point is treated as lying on the camera plane.
pub const CAMERA_PLANE_EPS: f64 = 1e-12;
/// Orthonormality tolerance for rotation matrices (max-abs of `RᵀR − I`).
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal with det +1 (residual {residual:e}, det {det})")]
    InvalidExtrinsics { residual: f64, det: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("point lies on the camera plane (depth {0:e})")]
    PointAtCameraPlane(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("image dimensions must be positive, got {0}x{1}")]
    InvalidImageSize(u32, u32),
}

/// A world-frame point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn homogeneous(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.z, 1.0)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(self, other: WorldPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

impl From<[f64; 3]> for WorldPoint {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<WorldPoint> for [f64; 3] {
    fn from(p: WorldPoint) -> Self {
        [p.x, p.y, p.z]
    }
}

/// An image point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn homogeneous(self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, 1.0)
    }

    pub fn is_finite(self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn distance(self, other: PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

impl From<[f64; 2]> for PixelPoint {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl From<PixelPoint> for [f64; 2] {
    fn from(p: PixelPoint) -> Self {
        [p.u, p.v]
    }
}

/// Camera intrinsic matrix `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics(Matrix3<f64>);

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::new(fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0))
    }

    pub fn from_matrix(k: Matrix3<f64>) -> Result<Self, GeometryError> {
        if k.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite("intrinsics"));
        }
        if k[(2, 2)] != 1.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(1, 0)] != 0.0 {
            return Err(GeometryError::InvalidIntrinsics(
                "expected upper-triangular K with K[2][2] = 1".into(),
            ));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        Ok(Self(k))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// World-to-camera rigid transform `[R | T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite("extrinsics"));
        }
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if residual >= ROTATION_TOLERANCE || (det - 1.0).abs() >= ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidExtrinsics { residual, det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`, with image `v` pointing away from
    /// world `up` (camera frame: x right, y down, z forward).
    pub fn look_at(
        eye: WorldPoint,
        target: WorldPoint,
        up: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let forward = (target.to_vector() - eye.to_vector()).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye.to_vector());
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates, `−Rᵀ T`.
    pub fn center(&self) -> WorldPoint {
        WorldPoint::from_vector(&(-(self.rotation.transpose() * self.translation)))
    }
}

/// How a projection matrix came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Composed,
    Estimated,
    Learned,
}

/// A 3×4 projection matrix `P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix {
    matrix: Matrix3x4<f64>,
    provenance: Provenance,
}

impl ProjectionMatrix {
    pub fn new(matrix: Matrix3x4<f64>, provenance: Provenance) -> Result<Self, GeometryError> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite("projection matrix"));
        }
        Ok(Self { matrix, provenance })
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.matrix
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Same projective map, scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix * factor,
            provenance: self.provenance,
        }
    }

    pub fn rows(&self) -> [[f64; 4]; 3] {
        let mut out = [[0.0; 4]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x = self.matrix[(r, c)];
            }
        }
        out
    }

    pub fn from_rows(rows: [[f64; 4]; 3], provenance: Provenance) -> Result<Self, GeometryError> {
        Self::new(Matrix3x4::from_fn(|r, c| rows[r][c]), provenance)
    }
}

/// Result of projecting one world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: PixelPoint,
    /// The scale factor `s` (depth along the optical axis up to `P`'s scale).
    pub depth: f64,
    pub behind_camera: bool,
}

/// `P = K · [R | T]`.
pub fn compose_projection(k: &Intrinsics, rt: &Extrinsics) -> ProjectionMatrix {
    let mut rt_matrix = Matrix3x4::zeros();
    rt_matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt.rotation);
    rt_matrix.fixed_view_mut::<3, 1>(0, 3).copy_from(&rt.translation);
    ProjectionMatrix {
        matrix: k.0 * rt_matrix,
        provenance: Provenance::Composed,
    }
}

/// `s · [u, v, 1]ᵀ = P · [x, y, z, 1]ᵀ`.
pub fn project(p: &ProjectionMatrix, world: WorldPoint) -> Result<Projection, GeometryError> {
    let h = p.matrix * world.homogeneous();
    let depth = h[2];
    if !depth.is_finite() || depth.abs() < CAMERA_PLANE_EPS {
        return Err(GeometryError::PointAtCameraPlane(depth));
    }
    Ok(Projection {
        pixel: PixelPoint::new(h[0] / depth, h[1] / depth),
        depth,
        behind_camera: depth < 0.0,
    })
}

/// Skew-symmetric `[p]×` with `[p]× x = p × x`.
pub fn cross_matrix(p: PixelPoint) -> Matrix3<f64> {
    let (x, y, z) = (p.u, p.v, 1.0);
    Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0)
}

/// A calibrated camera with its cached projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub id: usize,
    intrinsics: Intrinsics,
    extrinsics: Extrinsics,
    width: u32,
    height: u32,
    projection: ProjectionMatrix,
}

impl CameraModel {
    pub fn new(
        id: usize,
        intrinsics: Intrinsics,
        extrinsics: Extrinsics,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidImageSize(width, height));
        }
        let projection = compose_projection(&intrinsics, &extrinsics);
        Ok(Self {
            id,
            intrinsics,
            extrinsics,
            width,
            height,
            projection,
        })
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &Extrinsics {
        &self.extrinsics
    }

    pub fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    pub fn image_size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn project(&self, world: WorldPoint) -> Result<Projection, GeometryError> {
        project(&self.projection, world)
    }
}
