//! Unit-quaternion rotations with a canonical double-cover representative.
//!
//! A [`Rotation`] always stores the quaternion with `w >= 0` (and, when
//! `w == 0`, the first nonzero vector component positive), so two rotations
//! compare equal exactly when they are the same element of SO(3) up to
//! floating-point rounding.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// An element of SO(3), stored as a canonical unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    q: UnitQuaternion<f64>,
}

/// Rotation matrix view of a [`Rotation`] (row-major when flattened).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix(pub Mat3);

fn canonical(q: Quaternion<f64>) -> Quaternion<f64> {
    let flip = if q.w != 0.0 {
        q.w < 0.0
    } else if q.i != 0.0 {
        q.i < 0.0
    } else if q.j != 0.0 {
        q.j < 0.0
    } else {
        q.k < 0.0
    };
    if flip {
        -q
    } else {
        q
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            q: UnitQuaternion::identity(),
        }
    }

    /// Builds a rotation from raw quaternion components `(w, x, y, z)`;
    /// the input is normalized and sign-canonicalized.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::DegenerateQuaternion(n));
        }
        Ok(Self::from_quaternion_unchecked(q / n))
    }

    /// `q` must already have unit norm (up to rounding). It is renormalized.
    pub(crate) fn from_quaternion_unchecked(q: Quaternion<f64>) -> Self {
        let q = canonical(q);
        Self {
            q: UnitQuaternion::new_normalize(q),
        }
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self::from_quaternion_unchecked(q.into_inner())
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        Self::from_unit_quaternion(UnitQuaternion::from_axis_angle(&axis, angle))
    }

    pub fn rx(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::x(), angle)
    }

    pub fn ry(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::y(), angle)
    }

    pub fn rz(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::z(), angle)
    }

    /// Nearest rotation to an (approximately) orthonormal matrix.
    pub fn from_matrix(m: &Mat3) -> Self {
        let r = Rotation3::from_matrix_unchecked(*m);
        Self::from_unit_quaternion(UnitQuaternion::from_rotation_matrix(&r))
    }

    /// Canonical components `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.q.as_ref();
        [q.w, q.i, q.j, q.k]
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.q
    }

    pub fn matrix(&self) -> RotationMatrix {
        RotationMatrix(self.q.to_rotation_matrix().into_inner())
    }

    /// `self ∘ other`, i.e. the rotation whose matrix is `M(self)·M(other)`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self::from_unit_quaternion(self.q * other.q)
    }

    pub fn inverse(&self) -> Rotation {
        Self::from_unit_quaternion(self.q.inverse())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.q.transform_vector(v)
    }

    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        self.q.inverse_transform_vector(v)
    }

    /// `|<q_a, q_b>|`, the cosine of half the geodesic angle.
    #[inline]
    pub fn abs_dot(&self, other: &Rotation) -> f64 {
        let a = self.q.as_ref();
        let b = other.q.as_ref();
        (a.w * b.w + a.i * b.i + a.j * b.j + a.k * b.k).abs()
    }

    /// Geodesic distance in radians, in `[0, π]`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        geodesic_angle(self, other)
    }

    /// Angle of this rotation from the identity, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let q = self.q.as_ref();
        let v = (q.i * q.i + q.j * q.j + q.k * q.k).sqrt();
        2.0 * v.atan2(q.w.abs())
    }
}

impl RotationMatrix {
    /// Row-major entries.
    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }
}

pub fn compose(a: &Rotation, b: &Rotation) -> Rotation {
    a.compose(b)
}

pub fn inverse(a: &Rotation) -> Rotation {
    a.inverse()
}

/// Geodesic angle between two rotations, in radians.
///
/// Evaluated as `4·atan2(|q_a − s·q_b|, |q_a + s·q_b|)` with `s` the sign of
/// `<q_a, q_b>`. This equals `arccos((tr(AᵀB) − 1)/2)` but keeps full
/// precision near 0 and π, and is exactly zero for identical inputs.
pub fn geodesic_angle(a: &Rotation, b: &Rotation) -> f64 {
    let qa = a.q.as_ref();
    let qb = b.q.as_ref();
    let s = if qa.dot(qb) < 0.0 { -1.0 } else { 1.0 };
    let diff = (qa - qb * s).norm();
    let sum = (qa + qb * s).norm();
    (4.0 * diff.atan2(sum)).min(PI)
}

/// Draws one Haar-uniform rotation: four standard normals, normalized.
pub fn haar<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let w: f64 = rng.sample(StandardNormal);
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        if let Ok(r) = Rotation::from_wxyz(w, x, y, z) {
            return r;
        }
    }
}

/// `n` Haar-uniform rotations, deterministic in `seed`.
pub fn sample_haar(n: usize, seed: u64) -> Vec<Rotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_haar_with(&mut rng, n)
}

pub fn sample_haar_with<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Rotation> {
    (0..n).map(|_| haar(rng)).collect()
}
