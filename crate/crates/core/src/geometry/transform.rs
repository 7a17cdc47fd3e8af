use nalgebra::{Matrix3, Unit, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{GeometryError, Vec3};

/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// A rigid transform in SE(3): `p -> R p + t`.
///
/// Construction through [`RigidTransform::new`] checks that the rotation is
/// orthonormal with determinant +1. Composition re-orthonormalizes when
/// accumulated rounding pushes the rotation past [`ROTATION_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeometryError> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite entry".into()));
        }
        let drift = orthonormal_drift(&rotation);
        if drift > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation is not orthonormal (max |RtR - I| = {drift:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation: Vec3::zeros(),
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::z(), angle)
    }

    /// Builds a transform from three orthonormal frame axes (the columns of
    /// the rotation) and an origin.
    pub fn from_axes(x: Vec3, y: Vec3, z: Vec3, origin: Vec3) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_columns(&[x, y, z]), origin)
    }

    /// Camera pose looking from `eye` toward `target`, using the optical
    /// convention: z forward, x right, y down in the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self, GeometryError> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(GeometryError::InvalidTransform("eye coincides with target".into()));
        }
        let z = forward.normalize();
        let right = z.cross(&up);
        if right.norm() < 1e-9 {
            return Err(GeometryError::InvalidTransform("up vector parallel to view".into()));
        }
        let x = right.normalize();
        let y = z.cross(&x);
        Self::from_axes(x, y, z, eye)
    }

    pub fn with_translation(mut self, translation: Vec3) -> Self {
        self.translation = translation;
        self
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Column `i` of the rotation, i.e. the i-th frame axis in world coordinates.
    pub fn axis(&self, i: usize) -> Vec3 {
        self.rotation.column(i).into_owned()
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rotation = self.rotation * other.rotation;
        if orthonormal_drift(&rotation) > ROTATION_TOLERANCE {
            rotation = reorthonormalize(&rotation);
        }
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `R^T (p - t)`: expresses a world point in this frame.
    #[inline]
    pub fn inverse_apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.tr_mul(&(p - self.translation))
    }

    #[inline]
    pub fn inverse_apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.tr_mul(v)
    }

    /// The 12 numbers `[r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2]`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> Result<Self, GeometryError> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self::new(rotation, Vec3::new(v[3], v[7], v[11]))
    }

    /// Largest entry-wise deviation from another transform (rotation and translation).
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let dr = (self.rotation - other.rotation).abs().max();
        let dt = (self.translation - other.translation).abs().max();
        dr.max(dt)
    }
}

/// Max entry of |RᵀR − I|.
pub fn orthonormal_drift(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

fn reorthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0: Vector3<f64> = r.column(0).into_owned();
    let c1: Vector3<f64> = r.column(1).into_owned();
    let x = c0.normalize();
    let y = (c1 - x * x.dot(&c1)).normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = <[f64; 12]>::deserialize(deserializer)?;
        RigidTransform::from_row_major(&v).map_err(serde::de::Error::custom)
    }
}
