//! Torque-free attitude dynamics in inertia-ratio form and the relative
//! translational motion about a circular reference orbit.
//!
//! Frames: `{A}` rides with the chaser (x radial, z along the orbit
//! normal), `{B}` is the target's principal-axes frame and `{C}` the
//! target's point of reference, the frame whose pose the sensor measures.
//! `A(μ)` maps `{B}` coordinates into `{A}`; `ω` and `ρ` are expressed in
//! `{B}`; `r_c` and `ṙ_c` in `{A}`.

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::icp::Pose;
use crate::quat::UnitQuaternion;
use crate::scalar::{lit, to_f64, Real};

/// Earth's gravitational parameter (m³/s²).
pub const MU_EARTH: f64 = 3.986_004_418e14;

/// Error-state layout of the 21-element state vector.
pub mod idx {
    pub const MU: usize = 0;
    pub const OMEGA: usize = 3;
    pub const P: usize = 6;
    pub const RC: usize = 9;
    pub const VC: usize = 12;
    pub const RHO: usize = 15;
    pub const ETA: usize = 18;
    pub const DIM: usize = 21;
}

/// `(p_x, p_y, p_z) = ((I_yy−I_zz)/I_xx, (I_zz−I_xx)/I_yy, (I_xx−I_yy)/I_zz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaRatios<T: Real> {
    pub px: T,
    pub py: T,
    pub pz: T,
}

impl<T: Real> InertiaRatios<T> {
    pub fn from_inertia(inertia: &Vector3<T>) -> Result<Self> {
        validate_inertia(inertia)?;
        let (ixx, iyy, izz) = (inertia[0], inertia[1], inertia[2]);
        Ok(Self {
            px: (iyy - izz) / ixx,
            py: (izz - ixx) / iyy,
            pz: (ixx - iyy) / izz,
        })
    }

    pub fn as_vector(&self) -> Vector3<T> {
        Vector3::new(self.px, self.py, self.pz)
    }

    /// `p_x + p_y + p_z + p_x·p_y·p_z`, zero for ratios of a physical body.
    pub fn identity_residual(&self) -> T {
        self.px + self.py + self.pz + self.px * self.py * self.pz
    }
}

pub fn validate_inertia<T: Real>(inertia: &Vector3<T>) -> Result<()> {
    let (a, b, c) = (inertia[0], inertia[1], inertia[2]);
    if !(a > T::zero() && b > T::zero() && c > T::zero()) {
        return Err(Error::NonPhysicalInertia(format!(
            "principal moments must be positive, got ({}, {}, {})",
            to_f64(a),
            to_f64(b),
            to_f64(c)
        )));
    }
    if !(a + b > c && b + c > a && a + c > b) {
        return Err(Error::NonPhysicalInertia(format!(
            "triangle inequality violated by ({}, {}, {})",
            to_f64(a),
            to_f64(b),
            to_f64(c)
        )));
    }
    Ok(())
}

/// `ψ(ω) = (p_x ω_y ω_z, p_y ω_x ω_z, p_z ω_x ω_y)`.
pub fn psi<T: Real>(omega: &Vector3<T>, p: &Vector3<T>) -> Vector3<T> {
    Vector3::new(
        p[0] * omega[1] * omega[2],
        p[1] * omega[0] * omega[2],
        p[2] * omega[0] * omega[1],
    )
}

/// `J(p) = diag(1, (1−p_y)/(1+p_x), (1+p_z)/(1−p_x))`, the map from
/// normalized torque perturbations to angular acceleration.
pub fn torque_gain<T: Real>(p: &Vector3<T>) -> Result<Matrix3<T>> {
    let eps: T = lit(1e-9);
    if (T::one() + p[0]).abs() < eps || (T::one() - p[0]).abs() < eps {
        return Err(Error::SingularInertiaRatio(to_f64(p[0])));
    }
    Ok(Matrix3::from_diagonal(&Vector3::new(
        T::one(),
        (T::one() - p[1]) / (T::one() + p[0]),
        (T::one() + p[2]) / (T::one() - p[0]),
    )))
}

/// `∂ψ/∂ω`.
pub fn psi_jacobian_omega<T: Real>(omega: &Vector3<T>, p: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(
        z,
        p[0] * omega[2],
        p[0] * omega[1],
        p[1] * omega[2],
        z,
        p[1] * omega[0],
        p[2] * omega[1],
        p[2] * omega[0],
        z,
    )
}

/// `∂ψ/∂p`.
pub fn psi_jacobian_p<T: Real>(omega: &Vector3<T>) -> Matrix3<T> {
    Matrix3::from_diagonal(&Vector3::new(
        omega[1] * omega[2],
        omega[0] * omega[2],
        omega[0] * omega[1],
    ))
}

/// Circular reference orbit of the chaser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitParams<T: Real> {
    /// Orbital rate (rad/s). Zero disables gravity terms.
    pub n: T,
    /// Gravitational parameter (m³/s²).
    pub mu_e: T,
}

impl<T: Real> OrbitParams<T> {
    pub fn new(n: T) -> Self {
        Self {
            n,
            mu_e: lit(MU_EARTH),
        }
    }

    /// Free-space limit with no orbital motion.
    pub fn free() -> Self {
        Self::new(T::zero())
    }

    /// `[0, 0, n]`.
    pub fn rate_vector(&self) -> Vector3<T> {
        Vector3::new(T::zero(), T::zero(), self.n)
    }

    /// Orbit radius `(μ_e/n²)^(1/3)`, or `None` in the free-space limit.
    pub fn radius(&self) -> Option<T> {
        if self.n > T::zero() {
            Some((self.mu_e / (self.n * self.n)).powf(lit(1.0 / 3.0)))
        } else {
            None
        }
    }

    /// `r_e = [R_e, 0, 0]` from the Earth centre to the chaser.
    pub fn r_e(&self) -> Vector3<T> {
        Vector3::new(self.radius().unwrap_or(T::zero()), T::zero(), T::zero())
    }

    /// `K(n) = diag(3n², 0, −n²)`.
    pub fn stiffness(&self) -> Matrix3<T> {
        let n2 = self.n * self.n;
        Matrix3::from_diagonal(&Vector3::new(lit::<T>(3.0) * n2, T::zero(), -n2))
    }
}

/// Nonlinear relative acceleration:
/// `−2n×ṙ − n×(n×r) − μ_e(r_e+r)/‖r_e+r‖³ + n² r_e`.
///
/// The gravity difference is evaluated as `−n²[r_e·((1+q)^{-3/2} − 1) + r·(1+q)^{-3/2}]`
/// with `‖r_e+r‖² = R_e²(1+q)`, which avoids cancelling two nearly equal
/// accelerations. This relies on `n² = μ_e/R_e³`.
pub fn cw_accel<T: Real>(r: &Vector3<T>, v: &Vector3<T>, orbit: &OrbitParams<T>) -> Result<Vector3<T>> {
    let nv = orbit.rate_vector();
    let mut acc = -nv.cross(v) * lit::<T>(2.0) - nv.cross(&nv.cross(r));
    if let Some(re) = orbit.radius() {
        let rel = orbit.r_e() + r;
        if rel.norm() < T::one() {
            return Err(Error::SingularGravity);
        }
        let q = (lit::<T>(2.0) * re * r[0] + r.norm_squared()) / (re * re);
        let f = (-lit::<T>(1.5) * q.ln_1p()).exp_m1();
        let n2 = orbit.n * orbit.n;
        let gravity = -(orbit.r_e() * f + r * (f + T::one())) * n2;
        acc += gravity;
    }
    Ok(acc)
}

/// Linearized relative acceleration `K(n)·r − 2n×ṙ`.
pub fn cw_accel_linear<T: Real>(r: &Vector3<T>, v: &Vector3<T>, orbit: &OrbitParams<T>) -> Vector3<T> {
    orbit.stiffness() * r - orbit.rate_vector().cross(v) * lit::<T>(2.0)
}

/// Quaternion rate `½(ω̲⊗ − n̲⊛)μ` as a 4-vector.
pub fn attitude_rate<T: Real>(mu: &Vector4<T>, omega: &Vector3<T>, orbit: &OrbitParams<T>) -> Vector4<T> {
    let half: T = lit(0.5);
    (UnitQuaternion::pure_otimes_matrix(omega) * mu
        - UnitQuaternion::pure_circledast_matrix(&orbit.rate_vector()) * mu)
        * half
}

/// The estimated quantities (carried quaternions plus the vector states).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector<T: Real> {
    pub mu: UnitQuaternion<T>,
    pub omega: Vector3<T>,
    pub p: Vector3<T>,
    pub r_c: Vector3<T>,
    pub v_c: Vector3<T>,
    pub rho: Vector3<T>,
    pub eta: UnitQuaternion<T>,
}

impl<T: Real> StateVector<T> {
    /// Pose of `{C}` in `{A}`: rotation `η ⊗ μ`, translation `r_c + A(μ)ρ`.
    pub fn por_pose(&self) -> Pose<T> {
        Pose::new(
            self.eta.otimes(&self.mu),
            self.r_c + self.mu.to_rotation() * self.rho,
        )
    }
}

/// Time derivative of a [`StateVector`] (quaternion rates as 4-vectors).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative<T: Real> {
    pub mu: Vector4<T>,
    pub omega: Vector3<T>,
    pub p: Vector3<T>,
    pub r_c: Vector3<T>,
    pub v_c: Vector3<T>,
    pub rho: Vector3<T>,
    pub eta: Vector4<T>,
}

/// Noise-free `ẋ = f(x, 0)` with constant parameters.
pub fn state_derivative<T: Real>(x: &StateVector<T>, orbit: &OrbitParams<T>) -> Result<StateDerivative<T>> {
    Ok(StateDerivative {
        mu: attitude_rate(&x.mu.to_vector4(), &x.omega, orbit),
        omega: psi(&x.omega, &x.p),
        p: Vector3::zeros(),
        r_c: x.v_c,
        v_c: cw_accel(&x.r_c, &x.v_c, orbit)?,
        rho: Vector3::zeros(),
        eta: Vector4::zeros(),
    })
}

/// Simulated ground truth of the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetTruth<T: Real> {
    /// `{B}` relative to `{A}`.
    pub mu: UnitQuaternion<T>,
    /// Body rate in `{B}` (rad/s).
    pub omega: Vector3<T>,
    pub r_c: Vector3<T>,
    pub v_c: Vector3<T>,
    /// `{C}` origin offset from the centre of mass, in `{B}` (m).
    pub rho: Vector3<T>,
    /// `{B}` relative to `{C}`.
    pub eta: UnitQuaternion<T>,
    /// Principal moments (kg·m²).
    pub inertia: Vector3<T>,
}

impl<T: Real> TargetTruth<T> {
    pub fn ratios(&self) -> Result<InertiaRatios<T>> {
        InertiaRatios::from_inertia(&self.inertia)
    }

    /// `ωᵀ I ω`.
    pub fn energy(&self) -> T {
        self.omega.dot(&self.inertia.component_mul(&self.omega))
    }

    /// `‖I ω‖`.
    pub fn momentum_norm(&self) -> T {
        self.inertia.component_mul(&self.omega).norm()
    }

    pub fn observed_pose(&self) -> Pose<T> {
        observed_pose(self)
    }
}

/// Pose of `{C}` in `{A}` for the true target.
pub fn observed_pose<T: Real>(truth: &TargetTruth<T>) -> Pose<T> {
    Pose::new(
        truth.eta.otimes(&truth.mu),
        truth.r_c + truth.mu.to_rotation() * truth.rho,
    )
}

#[derive(Clone, Copy)]
struct RigidState<T: Real> {
    mu: Vector4<T>,
    omega: Vector3<T>,
    r: Vector3<T>,
    v: Vector3<T>,
}

impl<T: Real> RigidState<T> {
    fn axpy(&self, h: T, d: &RigidState<T>) -> Self {
        Self {
            mu: self.mu + d.mu * h,
            omega: self.omega + d.omega * h,
            r: self.r + d.r * h,
            v: self.v + d.v * h,
        }
    }
}

fn euler_rhs<T: Real>(s: &RigidState<T>, inertia: &Vector3<T>, orbit: &OrbitParams<T>) -> Result<RigidState<T>> {
    let w = s.omega;
    let iw = inertia.component_mul(&w);
    let omega_dot = iw.cross(&w).component_div(inertia);
    Ok(RigidState {
        mu: attitude_rate(&s.mu, &w, orbit),
        omega: omega_dot,
        r: s.v,
        v: cw_accel(&s.r, &s.v, orbit)?,
    })
}

fn rk4_truth_step<T: Real>(truth: &TargetTruth<T>, orbit: &OrbitParams<T>, h: T) -> Result<TargetTruth<T>> {
    let s0 = RigidState {
        mu: truth.mu.to_vector4(),
        omega: truth.omega,
        r: truth.r_c,
        v: truth.v_c,
    };
    let half: T = lit(0.5);
    let k1 = euler_rhs(&s0, &truth.inertia, orbit)?;
    let k2 = euler_rhs(&s0.axpy(h * half, &k1), &truth.inertia, orbit)?;
    let k3 = euler_rhs(&s0.axpy(h * half, &k2), &truth.inertia, orbit)?;
    let k4 = euler_rhs(&s0.axpy(h, &k3), &truth.inertia, orbit)?;
    let sixth = h / lit(6.0);
    let two: T = lit(2.0);
    let s1 = RigidState {
        mu: s0.mu + (k1.mu + k2.mu * two + k3.mu * two + k4.mu) * sixth,
        omega: s0.omega + (k1.omega + k2.omega * two + k3.omega * two + k4.omega) * sixth,
        r: s0.r + (k1.r + k2.r * two + k3.r * two + k4.r) * sixth,
        v: s0.v + (k1.v + k2.v * two + k3.v * two + k4.v) * sixth,
    };
    Ok(TargetTruth {
        mu: UnitQuaternion::from_vector4(&s1.mu),
        omega: s1.omega,
        r_c: s1.r,
        v_c: s1.v,
        ..*truth
    })
}

/// Splits `duration` into whole steps of `dt` plus a shorter final step.
pub(crate) fn step_sizes<T: Real>(duration: T, dt: T) -> Result<Vec<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidTimeStep(format!("dt must be positive, got {}", to_f64(dt))));
    }
    if !(duration >= dt) {
        return Err(Error::InvalidTimeStep(format!(
            "interval {} shorter than step {}",
            to_f64(duration),
            to_f64(dt)
        )));
    }
    let ratio = duration / dt;
    let whole = (ratio + lit(1e-9)).floor();
    let count = to_f64(whole) as usize;
    let mut steps = vec![dt; count];
    let rest = duration - dt * whole;
    if rest > dt * lit(1e-9) {
        steps.push(rest);
    }
    Ok(steps)
}

/// Propagates the full rigid-body equations (physical inertia, nonlinear
/// relative translation) over `duration` with RK4 steps of `dt`,
/// renormalizing the attitude after every step.
pub fn integrate_truth<T: Real>(
    truth: &TargetTruth<T>,
    orbit: &OrbitParams<T>,
    duration: T,
    dt: T,
) -> Result<TargetTruth<T>> {
    integrate_truth_perturbed(truth, orbit, duration, dt, |_| Vector3::zeros())
}

/// As [`integrate_truth`], adding `J(p)·ε·√h` to the body rate after each
/// step of length `h`, where `ε = perturbation(h)` is a normalized torque
/// sample (rad/s² per √Hz).
pub fn integrate_truth_perturbed<T: Real, F>(
    truth: &TargetTruth<T>,
    orbit: &OrbitParams<T>,
    duration: T,
    dt: T,
    mut perturbation: F,
) -> Result<TargetTruth<T>>
where
    F: FnMut(T) -> Vector3<T>,
{
    validate_inertia(&truth.inertia)?;
    let gain = torque_gain(&truth.ratios()?.as_vector())?;
    let mut state = *truth;
    for h in step_sizes(duration, dt)? {
        state = rk4_truth_step(&state, orbit, h)?;
        let eps = perturbation(h);
        if eps != Vector3::zeros() {
            state.omega += gain * eps * h.sqrt();
        }
    }
    Ok(state)
}
