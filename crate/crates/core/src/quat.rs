//! Quaternion algebra in `[q_v; q_o]` storage order.
//!
//! Two products are defined through 4×4 matrices acting on the right-hand
//! operand:
//!
//! ```text
//! [q⊗] = | -[q_v×] + q_o·1   q_v |      [q⊛] = | [q_v×] + q_o·1   q_v |
//!        |       -q_vᵀ       q_o |             |      -q_vᵀ       q_o |
//! ```
//!
//! so that `q1 ⊛ q2 ≡ q2 ⊗ q1` and `A(q1 ⊛ q2) = A(q1)·A(q2)`, where
//! `A(q) = (2q_o² - 1)·1 + 2q_o[q_v×] + 2q_v q_vᵀ` rotates vectors actively.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Unit quaternion with vector part `v` and scalar part `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion<T: Real> {
    v: Vector3<T>,
    s: T,
}

/// 3×3 rotation matrix produced by [`UnitQuaternion::to_rotation`].
pub type RotationMatrix<T> = Matrix3<T>;

impl<T: Real> UnitQuaternion<T> {
    pub fn identity() -> Self {
        Self {
            v: Vector3::zeros(),
            s: T::one(),
        }
    }

    /// Normalizing constructor. A zero quaternion maps to the identity.
    pub fn new(v: Vector3<T>, s: T) -> Self {
        let n = (v.norm_squared() + s * s).sqrt();
        if n <= T::zero() || !n.is_finite() {
            return Self::identity();
        }
        Self { v: v / n, s: s / n }
    }

    /// Builds from `[x, y, z, w]` (vector part first), normalizing.
    pub fn from_vector4(q: &Vector4<T>) -> Self {
        Self::new(Vector3::new(q[0], q[1], q[2]), q[3])
    }

    pub fn from_array(q: [T; 4]) -> Self {
        Self::new(Vector3::new(q[0], q[1], q[2]), q[3])
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        let n = axis.norm();
        if n <= T::zero() {
            return Self::identity();
        }
        let half = angle * lit(0.5);
        Self::new(axis / n * half.sin(), half.cos())
    }

    /// Rotation vector (axis × angle) to quaternion.
    pub fn from_rotation_vector(phi: &Vector3<T>) -> Self {
        let angle = phi.norm();
        if angle < lit(1e-8) {
            let half = phi * lit::<T>(0.5);
            let h2 = half.norm_squared();
            return Self::new(half * (T::one() - h2 / lit(6.0)), T::one() - h2 * lit(0.5));
        }
        Self::from_axis_angle(phi, angle)
    }

    /// Inverse of [`to_rotation`](Self::to_rotation) (Shepperd's method).
    pub fn from_rotation(a: &RotationMatrix<T>) -> Self {
        let one = T::one();
        let quarter: T = lit(0.25);
        let tr = a.trace();
        let (v, s);
        if tr >= a[(0, 0)] && tr >= a[(1, 1)] && tr >= a[(2, 2)] {
            let s4 = (one + tr).sqrt() * lit(2.0);
            s = quarter * s4;
            v = Vector3::new(
                (a[(2, 1)] - a[(1, 2)]) / s4,
                (a[(0, 2)] - a[(2, 0)]) / s4,
                (a[(1, 0)] - a[(0, 1)]) / s4,
            );
        } else if a[(0, 0)] >= a[(1, 1)] && a[(0, 0)] >= a[(2, 2)] {
            let s4 = (one + a[(0, 0)] - a[(1, 1)] - a[(2, 2)]).sqrt() * lit(2.0);
            s = (a[(2, 1)] - a[(1, 2)]) / s4;
            v = Vector3::new(
                quarter * s4,
                (a[(0, 1)] + a[(1, 0)]) / s4,
                (a[(0, 2)] + a[(2, 0)]) / s4,
            );
        } else if a[(1, 1)] >= a[(2, 2)] {
            let s4 = (one + a[(1, 1)] - a[(0, 0)] - a[(2, 2)]).sqrt() * lit(2.0);
            s = (a[(0, 2)] - a[(2, 0)]) / s4;
            v = Vector3::new(
                (a[(0, 1)] + a[(1, 0)]) / s4,
                quarter * s4,
                (a[(1, 2)] + a[(2, 1)]) / s4,
            );
        } else {
            let s4 = (one + a[(2, 2)] - a[(0, 0)] - a[(1, 1)]).sqrt() * lit(2.0);
            s = (a[(1, 0)] - a[(0, 1)]) / s4;
            v = Vector3::new(
                (a[(0, 2)] + a[(2, 0)]) / s4,
                (a[(1, 2)] + a[(2, 1)]) / s4,
                quarter * s4,
            );
        }
        Self::new(v, s)
    }

    /// `[v; sqrt(1 - |v|²)]`, the quaternion built from an error-state
    /// vector part.
    pub fn from_small(v: &Vector3<T>) -> Result<Self> {
        let n2 = v.norm_squared();
        if !(n2 <= T::one()) {
            return Err(Error::ErrorStateOverflow(to_f64(n2.sqrt())));
        }
        Ok(Self {
            v: *v,
            s: (T::one() - n2).sqrt(),
        })
    }

    #[inline]
    pub fn vector(&self) -> Vector3<T> {
        self.v
    }

    #[inline]
    pub fn scalar(&self) -> T {
        self.s
    }

    /// `[x, y, z, w]`.
    pub fn to_vector4(&self) -> Vector4<T> {
        Vector4::new(self.v[0], self.v[1], self.v[2], self.s)
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.v[0], self.v[1], self.v[2], self.s]
    }

    /// Left-product matrix `[q⊗]`.
    pub fn otimes_matrix(&self) -> Matrix4<T> {
        Self::product_matrix(&self.v, self.s, -T::one())
    }

    /// Right-product matrix `[q⊛]`.
    pub fn circledast_matrix(&self) -> Matrix4<T> {
        Self::product_matrix(&self.v, self.s, T::one())
    }

    /// `[a̲⊗]` for the pure quaternion `[a; 0]`.
    pub fn pure_otimes_matrix(a: &Vector3<T>) -> Matrix4<T> {
        Self::product_matrix(a, T::zero(), -T::one())
    }

    /// `[a̲⊛]` for the pure quaternion `[a; 0]`.
    pub fn pure_circledast_matrix(a: &Vector3<T>) -> Matrix4<T> {
        Self::product_matrix(a, T::zero(), T::one())
    }

    fn product_matrix(v: &Vector3<T>, s: T, sign: T) -> Matrix4<T> {
        let mut m = Matrix4::zeros();
        let upper = v.cross_matrix() * sign + Matrix3::identity() * s;
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&upper);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(v);
        m.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-v.transpose()));
        m[(3, 3)] = s;
        m
    }

    /// `self ⊗ rhs`.
    pub fn otimes(&self, rhs: &Self) -> Self {
        Self::from_vector4(&(self.otimes_matrix() * rhs.to_vector4()))
    }

    /// `self ⊛ rhs`, identical to `rhs ⊗ self`.
    pub fn circledast(&self, rhs: &Self) -> Self {
        rhs.otimes(self)
    }

    pub fn conjugate(&self) -> Self {
        Self {
            v: -self.v,
            s: self.s,
        }
    }

    /// The same rotation with both signs flipped.
    pub fn negated(&self) -> Self {
        Self {
            v: -self.v,
            s: -self.s,
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        self.v.dot(&other.v) + self.s * other.s
    }

    pub fn to_rotation(&self) -> RotationMatrix<T> {
        let two: T = lit(2.0);
        Matrix3::identity() * (two * self.s * self.s - T::one())
            + self.v.cross_matrix() * (two * self.s)
            + self.v * self.v.transpose() * two
    }

    /// `A(q)·x`, evaluated as the sandwich `q* ⊗ x ⊗ q` on the embedded
    /// 4-vector `[x; 0]`.
    pub fn rotate_vec(&self, x: &Vector3<T>) -> Vector3<T> {
        let embedded = Vector4::new(x[0], x[1], x[2], T::zero());
        let inner = self.conjugate().otimes_matrix() * embedded;
        let out = self.circledast_matrix() * inner;
        Vector3::new(out[0], out[1], out[2])
    }

    /// Advances the attitude by a constant rate `omega` (rad/s) held for
    /// `dt` seconds: `exp(½·dt·[ω⊗]) q`.
    pub fn propagate_const_rate(&self, omega: &Vector3<T>, dt: T) -> Self {
        Self::exp_rate(omega, dt).otimes(self)
    }

    /// Advances by `exp(-½·dt·[ν⊛]) q`, the frame-rate term of the
    /// relative kinematics.
    pub(crate) fn propagate_frame_rate(&self, nu: &Vector3<T>, dt: T) -> Self {
        Self::exp_rate(&(-nu), dt).circledast(self)
    }

    fn exp_rate(omega: &Vector3<T>, dt: T) -> Self {
        let angle = omega.norm() * dt.abs();
        if angle < lit(1e-8) {
            let half = omega * (dt * lit(0.5));
            let h2 = half.norm_squared();
            Self::new(half * (T::one() - h2 / lit(6.0)), T::one() - h2 * lit(0.5))
        } else {
            let half = omega.norm() * dt * lit(0.5);
            Self::new(omega / omega.norm() * half.sin(), half.cos())
        }
    }

    /// Geodesic angle between two attitudes, in `[0, π]`.
    pub fn angle_to(&self, other: &Self) -> T {
        let d = self.conjugate().otimes(other);
        lit::<T>(2.0) * d.v.norm().atan2(d.s.abs())
    }

    /// Z-Y-X (yaw, pitch, roll) angles of `A(q)`, returned as
    /// `[roll, pitch, yaw]` in radians.
    pub fn to_euler_zyx(&self) -> [T; 3] {
        let a = self.to_rotation();
        let pitch = (-a[(2, 0)]).max(-T::one()).min(T::one()).asin();
        let roll = a[(2, 1)].atan2(a[(2, 2)]);
        let yaw = a[(1, 0)].atan2(a[(0, 0)]);
        [roll, pitch, yaw]
    }

    pub fn norm(&self) -> T {
        (self.v.norm_squared() + self.s * self.s).sqrt()
    }

    pub fn cast<U: Real>(&self) -> UnitQuaternion<U> {
        UnitQuaternion::new(
            Vector3::new(lit(to_f64(self.v[0])), lit(to_f64(self.v[1])), lit(to_f64(self.v[2]))),
            lit(to_f64(self.s)),
        )
    }
}

impl<T: Real> Default for UnitQuaternion<T> {
    fn default() -> Self {
        Self::identity()
    }
}
