//! Multiplicative extended Kalman filter over the 21-element error state
//! `[δμ_v, δω, δp, δr_c, δṙ_c, δρ, δη_v]`.
//!
//! Attitude errors are body-side: `μ = δμ ⊗ μ̄` (so `A(μ) = A(μ̄)·A(δμ)`)
//! and `η = η̄ ⊗ δη`. The measurement is the pose of `{C}`:
//! position `r_c + A(μ)ρ` and orientation `q = η ⊗ μ`, whose error
//! `δq = η̄* ⊗ q ⊗ μ̄* = δη ⊗ δμ` has vector part `≈ δη_v + δμ_v`.

use nalgebra::{DMatrix, Matrix3, Matrix6, SMatrix, SVector, Vector3, Vector6};

use crate::dynamics::{
    cw_accel, idx, psi, psi_jacobian_omega, psi_jacobian_p, torque_gain, OrbitParams, StateVector,
};
use crate::error::{Error, Result};
use crate::icp::Pose;
use crate::quat::UnitQuaternion;
use crate::scalar::{lit, to_f64, Real};

pub type StateMatrix<T> = SMatrix<T, 21, 21>;
pub type NoiseInput<T> = SMatrix<T, 21, 6>;
pub type ErrorVector<T> = SVector<T, 21>;
pub type MeasurementMatrix<T> = SMatrix<T, 6, 21>;

/// Innovation covariances with a condition number above this are rejected.
const MAX_CONDITION: f64 = 1e12;
/// Mean propagation uses this many RK4 sub-steps per interval.
const SUBSTEPS: usize = 10;

/// Process and measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig<T: Real> {
    /// Torque perturbation intensity (rad/s² per axis).
    pub sigma_tau: T,
    /// Force perturbation intensity (m/s² per axis).
    pub sigma_f: T,
    /// Covariance of `[r̆; δq̆_v]` (m², dimensionless).
    pub r: Matrix6<T>,
}

impl<T: Real> NoiseConfig<T> {
    pub fn new(sigma_tau: T, sigma_f: T, sigma_pos: T, sigma_att: T) -> Self {
        let mut d = Vector6::from_element(sigma_pos * sigma_pos);
        d.fixed_rows_mut::<3>(3).fill(sigma_att * sigma_att);
        Self {
            sigma_tau,
            sigma_f,
            r: Matrix6::from_diagonal(&d),
        }
    }

    /// `Σ = diag(σ_τ²·1₃, σ_f²·1₃)`.
    pub fn sigma(&self) -> Matrix6<T> {
        let mut d = Vector6::from_element(self.sigma_tau * self.sigma_tau);
        d.fixed_rows_mut::<3>(3).fill(self.sigma_f * self.sigma_f);
        Matrix6::from_diagonal(&d)
    }
}

impl<T: Real> Default for NoiseConfig<T> {
    /// `σ_τ = σ_f = 1e-4`, 1 cm position and 0.005 quaternion-vector noise.
    fn default() -> Self {
        Self::new(lit(1e-4), lit(1e-4), lit(0.01), lit(0.005))
    }
}

/// Prior standard deviations of each error-state block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSigmas<T: Real> {
    pub mu: T,
    pub omega: T,
    pub p: T,
    pub r_c: T,
    pub v_c: T,
    pub rho: T,
    pub eta: T,
}

impl<T: Real> Default for PriorSigmas<T> {
    fn default() -> Self {
        Self {
            mu: lit(0.1),
            omega: lit(0.1),
            p: lit(0.5),
            r_c: lit(0.5),
            v_c: lit(0.1),
            rho: lit(0.2),
            eta: lit(0.1),
        }
    }
}

impl<T: Real> PriorSigmas<T> {
    pub fn covariance(&self) -> StateMatrix<T> {
        let blocks = [self.mu, self.omega, self.p, self.r_c, self.v_c, self.rho, self.eta];
        StateMatrix::from_diagonal(&ErrorVector::from_fn(|i, _| blocks[i / 3] * blocks[i / 3]))
    }
}

/// A pose measurement from registration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement<T: Real> {
    pub position: Vector3<T>,
    pub rotation: UnitQuaternion<T>,
    pub time: T,
}

impl<T: Real> Measurement<T> {
    pub fn from_pose(pose: &Pose<T>, time: T) -> Self {
        Self {
            position: pose.translation,
            rotation: pose.rotation,
            time,
        }
    }
}

/// Estimate, error covariance and timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState<T: Real> {
    pub x: StateVector<T>,
    pub cov: StateMatrix<T>,
    pub time: T,
}

impl<T: Real> FilterState<T> {
    pub fn new(x: StateVector<T>, cov: StateMatrix<T>, time: T) -> Self {
        Self { x, cov, time }
    }

    /// Predicted pose of `{C}`.
    pub fn pose(&self) -> Pose<T> {
        self.x.por_pose()
    }

    /// Largest absolute asymmetry of the covariance.
    pub fn asymmetry(&self) -> T {
        (self.cov - self.cov.transpose()).amax()
    }

    /// Smallest eigenvalue of the symmetrized covariance.
    pub fn min_eigenvalue(&self) -> T {
        let sym = (self.cov + self.cov.transpose()) * lit::<T>(0.5);
        sym.symmetric_eigenvalues().min()
    }

    fn ensure_finite(&self) -> Result<()> {
        let x = &self.x;
        let finite = x.mu.to_vector4().iter().all(|v| v.is_finite())
            && x.eta.to_vector4().iter().all(|v| v.is_finite())
            && [x.omega, x.p, x.r_c, x.v_c, x.rho]
                .iter()
                .all(|v| v.iter().all(|c| c.is_finite()))
            && self.cov.iter().all(|c| c.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::FilterDivergence(format!(
                "non-finite estimate at t = {}",
                to_f64(self.time)
            )))
        }
    }
}

fn set_block<T: Real>(m: &mut StateMatrix<T>, row: usize, col: usize, b: &Matrix3<T>) {
    m.fixed_view_mut::<3, 3>(row, col).copy_from(b);
}

/// Continuous-time error dynamics `F` linearized at `x̄`.
pub fn build_f<T: Real>(x: &StateVector<T>, orbit: &OrbitParams<T>) -> StateMatrix<T> {
    let mut f = StateMatrix::zeros();
    let half: T = lit(0.5);
    set_block(&mut f, idx::MU, idx::MU, &(-x.omega.cross_matrix()));
    set_block(&mut f, idx::MU, idx::OMEGA, &(Matrix3::identity() * half));
    set_block(&mut f, idx::OMEGA, idx::OMEGA, &psi_jacobian_omega(&x.omega, &x.p));
    set_block(&mut f, idx::OMEGA, idx::P, &psi_jacobian_p(&x.omega));
    set_block(&mut f, idx::RC, idx::VC, &Matrix3::identity());
    set_block(&mut f, idx::VC, idx::RC, &orbit.stiffness());
    set_block(
        &mut f,
        idx::VC,
        idx::VC,
        &(-orbit.rate_vector().cross_matrix() * lit::<T>(2.0)),
    );
    f
}

/// Noise input matrix `B`: `J(p̄)` drives `δω`, the force noise drives `δṙ_c`.
pub fn build_b<T: Real>(p: &Vector3<T>) -> Result<NoiseInput<T>> {
    let mut b = NoiseInput::zeros();
    b.fixed_view_mut::<3, 3>(idx::OMEGA, 0).copy_from(&torque_gain(p)?);
    b.fixed_view_mut::<3, 3>(idx::VC, 3).copy_from(&Matrix3::identity());
    Ok(b)
}

/// Matrix exponential (Padé approximant with scaling and squaring).
pub fn matrix_exponential<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    a.exp()
}

/// Discrete transition `Φ` and process noise `Q` over an interval `t` by
/// exponentiating `[[−F, BΣBᵀ], [0, Fᵀ]]·t = [[·, D₁₂], [0, D₂₂]]`,
/// giving `Φ = D₂₂ᵀ` and `Q = Φ·D₁₂`.
pub fn van_loan_discretize<T: Real>(
    f: &StateMatrix<T>,
    b: &NoiseInput<T>,
    sigma: &Matrix6<T>,
    t: T,
) -> Result<(StateMatrix<T>, StateMatrix<T>)> {
    if !(t > T::zero()) {
        return Err(Error::InvalidTimeStep(format!(
            "discretization interval must be positive, got {}",
            to_f64(t)
        )));
    }
    let n = idx::DIM;
    let mut big = DMatrix::<T>::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-f * t));
    big.view_mut((0, n), (n, n)).copy_from(&(b * sigma * b.transpose() * t));
    big.view_mut((n, n), (n, n)).copy_from(&(f.transpose() * t));
    let d = matrix_exponential(&big);
    let d12: StateMatrix<T> = d.view((0, n), (n, n)).into_owned().fixed_view::<21, 21>(0, 0).into_owned();
    let d22: StateMatrix<T> = d.view((n, n), (n, n)).into_owned().fixed_view::<21, 21>(0, 0).into_owned();
    let phi = d22.transpose();
    let q = phi * d12;
    Ok((phi, floor_psd((q + q.transpose()) * lit::<T>(0.5))))
}

/// Clips negative eigenvalues of a symmetric matrix to zero.
fn floor_psd<T: Real>(q: StateMatrix<T>) -> StateMatrix<T> {
    let eig = q.symmetric_eigen();
    if eig.eigenvalues.min() >= T::zero() {
        return q;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(T::zero()));
    let rec = eig.eigenvectors * StateMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (rec + rec.transpose()) * lit::<T>(0.5)
}

/// Predicted measurement `ẑ = [r̂_c + Âρ̂; 0]` and its sensitivity `H`.
pub fn predict_measurement<T: Real>(state: &FilterState<T>) -> (Vector6<T>, MeasurementMatrix<T>) {
    let x = &state.x;
    let a = x.mu.to_rotation();
    let pos = x.r_c + a * x.rho;
    let mut z = Vector6::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(&pos);

    let mut h = MeasurementMatrix::zeros();
    let i3 = Matrix3::<T>::identity();
    h.fixed_view_mut::<3, 3>(0, idx::MU)
        .copy_from(&(-(a * x.rho.cross_matrix()) * lit::<T>(2.0)));
    h.fixed_view_mut::<3, 3>(0, idx::RC).copy_from(&i3);
    h.fixed_view_mut::<3, 3>(0, idx::RHO).copy_from(&a);
    h.fixed_view_mut::<3, 3>(3, idx::MU).copy_from(&i3);
    h.fixed_view_mut::<3, 3>(3, idx::ETA).copy_from(&i3);
    (z, h)
}

/// `[r̆ − r̂; vec(η̂* ⊗ q̆ ⊗ μ̂*)]` with the error quaternion taken on the
/// hemisphere of non-negative scalar part.
pub fn innovation<T: Real>(meas: &Measurement<T>, state: &FilterState<T>) -> Vector6<T> {
    let (z, _) = predict_measurement(state);
    let x = &state.x;
    let mut dq = x.eta.conjugate().otimes(&meas.rotation).otimes(&x.mu.conjugate());
    if dq.scalar() < T::zero() {
        dq = dq.negated();
    }
    let mut nu = Vector6::zeros();
    nu.fixed_rows_mut::<3>(0).copy_from(&(meas.position - z.fixed_rows::<3>(0)));
    nu.fixed_rows_mut::<3>(3).copy_from(&dq.vector());
    nu
}

/// Correction output with the quantities logged per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correction<T: Real> {
    pub state: FilterState<T>,
    pub innovation: Vector6<T>,
    pub innovation_cov: Matrix6<T>,
}

/// Measurement update with Joseph-form covariance and multiplicative
/// quaternion reset.
pub fn ekf_correct<T: Real>(
    state: &FilterState<T>,
    meas: &Measurement<T>,
    noise: &NoiseConfig<T>,
) -> Result<FilterState<T>> {
    ekf_correct_detailed(state, meas, noise).map(|c| c.state)
}

pub fn ekf_correct_detailed<T: Real>(
    state: &FilterState<T>,
    meas: &Measurement<T>,
    noise: &NoiseConfig<T>,
) -> Result<Correction<T>> {
    let (_, h) = predict_measurement(state);
    let nu = innovation(meas, state);
    let p = state.cov;
    let s = h * p * h.transpose() + noise.r;
    let s = (s + s.transpose()) * lit::<T>(0.5);

    let eig = s.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > T::zero() { hi / lo } else { T::max_value().unwrap_or(hi) };
    if !(cond <= lit(MAX_CONDITION)) {
        return Err(Error::IllConditioned(to_f64(cond)));
    }
    let chol = s.cholesky().ok_or(Error::IllConditioned(to_f64(cond)))?;
    // K = P Hᵀ S⁻¹ = (S⁻¹ H P)ᵀ since P and S are symmetric.
    let gain = chol.solve(&(h * p)).transpose();

    let dx = gain * nu;
    let ikh = StateMatrix::identity() - gain * h;
    let cov = ikh * p * ikh.transpose() + gain * noise.r * gain.transpose();
    let cov = (cov + cov.transpose()) * lit::<T>(0.5);

    let block = |i: usize| dx.fixed_rows::<3>(i).into_owned();
    let mut x = state.x;
    x.mu = UnitQuaternion::from_small(&block(idx::MU))?.otimes(&x.mu);
    x.omega += block(idx::OMEGA);
    x.p += block(idx::P);
    x.r_c += block(idx::RC);
    x.v_c += block(idx::VC);
    x.rho += block(idx::RHO);
    x.eta = x.eta.otimes(&UnitQuaternion::from_small(&block(idx::ETA))?);

    let out = FilterState::new(x, cov, state.time);
    out.ensure_finite()?;
    Ok(Correction {
        state: out,
        innovation: nu,
        innovation_cov: s,
    })
}

/// Mean propagation `x̂ + ∫f(x, 0)dt` over `dt` with RK4 on the rate and
/// translation and closed-form attitude steps.
pub fn propagate_mean<T: Real>(x: &StateVector<T>, orbit: &OrbitParams<T>, dt: T) -> Result<StateVector<T>> {
    let mut out = *x;
    let h = dt / lit(SUBSTEPS as f64);
    let half: T = lit(0.5);
    let two: T = lit(2.0);
    let sixth = h / lit(6.0);
    let nv = orbit.rate_vector();
    for _ in 0..SUBSTEPS {
        let (w0, r0, v0) = (out.omega, out.r_c, out.v_c);
        let p = out.p;
        let k1w = psi(&w0, &p);
        let k2w = psi(&(w0 + k1w * (h * half)), &p);
        let k3w = psi(&(w0 + k2w * (h * half)), &p);
        let k4w = psi(&(w0 + k3w * h), &p);
        let w1 = w0 + (k1w + k2w * two + k3w * two + k4w) * sixth;

        let k1v = cw_accel(&r0, &v0, orbit)?;
        let k1r = v0;
        let k2r = v0 + k1v * (h * half);
        let k2v = cw_accel(&(r0 + k1r * (h * half)), &k2r, orbit)?;
        let k3r = v0 + k2v * (h * half);
        let k3v = cw_accel(&(r0 + k2r * (h * half)), &k3r, orbit)?;
        let k4r = v0 + k3v * h;
        let k4v = cw_accel(&(r0 + k3r * h), &k4r, orbit)?;
        out.r_c = r0 + (k1r + k2r * two + k3r * two + k4r) * sixth;
        out.v_c = v0 + (k1v + k2v * two + k3v * two + k4v) * sixth;

        // Fourth-order commutator-free step: two constant-rate exponentials
        // built from the rate at the Gauss points, interpolated by a cubic
        // Hermite fit of the RK4 rate solution. The body-rate (left) and
        // frame-rate (right) products commute, so the frame rotation is
        // applied separately.
        let hermite = |c: T| {
            let c2 = c * c;
            let c3 = c2 * c;
            w0 * (two * c3 - lit::<T>(3.0) * c2 + T::one())
                + k1w * (h * (c3 - two * c2 + c))
                + w1 * (lit::<T>(3.0) * c2 - two * c3)
                + psi(&w1, &p) * (h * (c3 - c2))
        };
        let r3: T = lit(3.0f64.sqrt() / 6.0);
        let (g1, g2) = (hermite(half - r3), hermite(half + r3));
        let (a1, a2) = (lit::<T>(0.25) - r3, lit::<T>(0.25) + r3);
        out.mu = out
            .mu
            .propagate_const_rate(&(g1 * a2 + g2 * a1), h)
            .propagate_const_rate(&(g1 * a1 + g2 * a2), h)
            .propagate_frame_rate(&nv, h);
        out.omega = w1;
    }
    Ok(out)
}

/// Time update over `dt`: mean by [`propagate_mean`], covariance by
/// `ΦPΦᵀ + Q` with `Φ`, `Q` evaluated at the pre-propagation estimate.
pub fn ekf_propagate<T: Real>(
    state: &FilterState<T>,
    orbit: &OrbitParams<T>,
    noise: &NoiseConfig<T>,
    dt: T,
) -> Result<FilterState<T>> {
    if dt == T::zero() {
        return Ok(*state);
    }
    let f = build_f(&state.x, orbit);
    let b = build_b(&state.x.p).map_err(|e| Error::FilterDivergence(e.to_string()))?;
    let (phi, q) = van_loan_discretize(&f, &b, &noise.sigma(), dt)?;
    let cov = phi * state.cov * phi.transpose() + q;
    let out = FilterState::new(
        propagate_mean(&state.x, orbit, dt)?,
        (cov + cov.transpose()) * lit::<T>(0.5),
        state.time + dt,
    );
    out.ensure_finite()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::state_derivative;
    use nalgebra::{Matrix2, Vector2, Vector4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> StateVector<f64> {
        let mut v = || Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        StateVector {
            mu: UnitQuaternion::from_rotation_vector(&(v() * 2.0)),
            omega: v() * 0.3,
            p: v() * 0.8,
            r_c: v() * 10.0,
            v_c: v() * 0.1,
            rho: v() * 0.3,
            eta: UnitQuaternion::from_rotation_vector(&v()),
        }
    }

    /// `a ⊗ b` on unnormalized 4-vectors.
    fn qmul(a: &Vector4<f64>, b: &Vector4<f64>) -> Vector4<f64> {
        let (av, bv) = (a.xyz(), b.xyz());
        let v = bv * a[3] - av.cross(&bv) + av * b[3];
        Vector4::new(v[0], v[1], v[2], a[3] * b[3] - av.dot(&bv))
    }

    fn state(x: StateVector<f64>) -> FilterState<f64> {
        FilterState::new(x, PriorSigmas::default().covariance(), 0.0)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn f_at_rest_keeps_only_kinematic_couplings() {
        let x = StateVector {
            mu: UnitQuaternion::identity(),
            omega: Vector3::zeros(),
            p: Vector3::new(0.75, 0.125, -0.8),
            r_c: Vector3::new(1.0, 2.0, 3.0),
            v_c: Vector3::zeros(),
            rho: Vector3::zeros(),
            eta: UnitQuaternion::identity(),
        };
        let f = build_f(&x, &OrbitParams::free());
        let mut expected = StateMatrix::<f64>::zeros();
        for i in 0..3 {
            expected[(idx::MU + i, idx::OMEGA + i)] = 0.5;
            expected[(idx::RC + i, idx::VC + i)] = 1.0;
        }
        assert_eq!(f, expected);
    }

    #[test]
    fn f_rate_block_values() {
        let mut x = random_state(&mut ChaCha8Rng::seed_from_u64(1));
        x.omega = Vector3::new(1.0, 2.0, 3.0);
        x.p = Vector3::new(0.75, 0.125, -0.8);
        let f = build_f(&x, &OrbitParams::free());
        let row: Vec<f64> = (0..3).map(|j| f[(idx::OMEGA, idx::OMEGA + j)]).collect();
        assert_eq!(row, vec![0.0, 2.25, 1.5]);
    }

    #[test]
    fn f_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let orbit = OrbitParams::new(0.0011);
        let h = 1e-6;
        for _ in 0..20 {
            let x = random_state(&mut rng);
            let f = build_f(&x, &orbit);
            // Columns over the additive states; attitude columns use the
            // body-side perturbation μ ← δμ ⊗ μ.
            for col in 0..idx::ETA {
                let perturb = |s: f64| {
                    let mut y = x;
                    let k = col % 3;
                    let mut e = Vector3::zeros();
                    e[k] = s;
                    match col / 3 {
                        0 => y.mu = UnitQuaternion::from_small(&e).unwrap().otimes(&x.mu),
                        1 => y.omega += e,
                        2 => y.p += e,
                        3 => y.r_c += e,
                        4 => y.v_c += e,
                        5 => y.rho += e,
                        _ => unreachable!(),
                    }
                    y
                };
                let err_rate = |y: &StateVector<f64>| -> ErrorVector<f64> {
                    // d/dt vec(y ⊗ x*) = vec(ẏ ⊗ x* + y ⊗ ẋ*) on raw 4-vectors.
                    let dy = state_derivative(y, &orbit).unwrap();
                    let dx = state_derivative(&x, &orbit).unwrap();
                    let conj = |q: Vector4<f64>| Vector4::new(-q[0], -q[1], -q[2], q[3]);
                    let rate = qmul(&dy.mu, &conj(x.mu.to_vector4()))
                        + qmul(&y.mu.to_vector4(), &conj(dx.mu));
                    let mut out = ErrorVector::zeros();
                    out.fixed_rows_mut::<3>(idx::MU).copy_from(&rate.fixed_rows::<3>(0));
                    out.fixed_rows_mut::<3>(idx::OMEGA).copy_from(&(dy.omega - dx.omega));
                    out.fixed_rows_mut::<3>(idx::RC).copy_from(&(dy.r_c - dx.r_c));
                    out.fixed_rows_mut::<3>(idx::VC).copy_from(&(dy.v_c - dx.v_c));
                    out
                };
                let d = (err_rate(&perturb(h)) - err_rate(&perturb(-h))) / (2.0 * h);
                for row in [idx::OMEGA, idx::OMEGA + 1, idx::OMEGA + 2, idx::RC, idx::VC, idx::VC + 2] {
                    assert!(
                        (d[row] - f[(row, col)]).abs() <= 1e-5 * f[(row, col)].abs().max(1e-3),
                        "row {row} col {col}: fd {} vs F {}",
                        d[row],
                        f[(row, col)]
                    );
                }
                for row in 0..3 {
                    assert!(
                        (d[row] - f[(row, col)]).abs() <= 1e-5 * f[(row, col)].abs().max(1e-3),
                        "attitude row {row} col {col}: fd {} vs F {}",
                        d[row],
                        f[(row, col)]
                    );
                }
            }
        }
    }

    #[test]
    fn b_blocks() {
        let b = build_b(&Vector3::new(0.75, 0.125, -0.8)).unwrap();
        let j = b.fixed_view::<3, 3>(idx::OMEGA, 0).into_owned();
        assert!((j - Matrix3::from_diagonal(&Vector3::new(1.0, 0.5, 0.8))).amax() < 1e-15);
        assert_eq!(b.fixed_view::<3, 3>(idx::VC, 3).into_owned(), Matrix3::identity());
        assert_eq!(b.iter().filter(|v| **v != 0.0).count(), 6);
        let z = build_b(&Vector3::<f64>::zeros()).unwrap();
        assert_eq!(z.fixed_view::<3, 3>(idx::OMEGA, 0).into_owned(), Matrix3::identity());
    }

    #[test]
    fn exponential_basics() {
        let z = DMatrix::<f64>::zeros(5, 5);
        assert_eq!(matrix_exponential(&z), DMatrix::identity(5, 5));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-2.0, 0.5, 3.0]));
        let e = matrix_exponential(&d);
        for (i, a) in [-2.0f64, 0.5, 3.0].iter().enumerate() {
            assert!(rel_close(e[(i, i)], a.exp(), 1e-13));
        }
        // [[0, t], [0, 0]] is nilpotent: exp = [[1, t], [0, 1]].
        let mut n = DMatrix::<f64>::zeros(2, 2);
        n[(0, 1)] = 0.7;
        let e = matrix_exponential(&n);
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.0, 1.0]));
    }

    #[test]
    fn exponential_inverse_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = DMatrix::<f64>::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
            let a = &a * (10.0 / a.norm());
            let prod = matrix_exponential(&a) * matrix_exponential(&(-&a));
            assert!((prod - DMatrix::identity(8, 8)).amax() < 1e-9);
        }
    }

    #[test]
    fn van_loan_free_limit() {
        let b = build_b(&Vector3::new(0.3, -0.2, 0.1)).unwrap();
        let noise = NoiseConfig::new(2e-3, 3e-3, 0.01, 0.005);
        let (phi, q) = van_loan_discretize(&StateMatrix::zeros(), &b, &noise.sigma(), 0.5).unwrap();
        assert!((phi - StateMatrix::identity()).amax() < 1e-12);
        assert!((q - b * noise.sigma() * b.transpose() * 0.5).amax() < 1e-12);
    }

    #[test]
    fn van_loan_double_integrator() {
        let x = StateVector {
            mu: UnitQuaternion::identity(),
            omega: Vector3::zeros(),
            p: Vector3::zeros(),
            r_c: Vector3::zeros(),
            v_c: Vector3::zeros(),
            rho: Vector3::zeros(),
            eta: UnitQuaternion::identity(),
        };
        let f = build_f(&x, &OrbitParams::free());
        let b = build_b(&x.p).unwrap();
        let sf = 0.02f64;
        let noise = NoiseConfig::new(0.0, sf, 0.01, 0.005);
        let t = 0.5f64;
        let (phi, q) = van_loan_discretize(&f, &b, &noise.sigma(), t).unwrap();
        let s2 = sf * sf;
        for k in 0..3 {
            let (r, v) = (idx::RC + k, idx::VC + k);
            assert!((q[(r, r)] - s2 * t.powi(3) / 3.0).abs() < 1e-9);
            assert!((q[(r, v)] - s2 * t * t / 2.0).abs() < 1e-9);
            assert!((q[(v, v)] - s2 * t).abs() < 1e-9);
            assert!((phi[(r, v)] - t).abs() < 1e-12);
        }
    }

    #[test]
    fn van_loan_rejects_nonpositive_interval() {
        let b = build_b(&Vector3::<f64>::zeros()).unwrap();
        let r = van_loan_discretize(&StateMatrix::zeros(), &b, &Matrix6::identity(), 0.0);
        assert!(matches!(r, Err(Error::InvalidTimeStep(_))));
    }

    #[test]
    fn transition_matches_variational_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_state(&mut rng);
        let f = build_f(&x, &OrbitParams::new(0.0011));
        let b = build_b(&x.p).unwrap();
        let t = 0.5;
        let (phi, _) = van_loan_discretize(&f, &b, &NoiseConfig::default().sigma(), t).unwrap();
        // dΦ/dt = FΦ by RK4 with fine steps.
        let mut m = StateMatrix::<f64>::identity();
        let steps = 200;
        let h = t / steps as f64;
        for _ in 0..steps {
            let k1 = f * m;
            let k2 = f * (m + k1 * (h / 2.0));
            let k3 = f * (m + k2 * (h / 2.0));
            let k4 = f * (m + k3 * h);
            m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        assert!((phi - m).amax() < 1e-6);
    }

    #[test]
    fn h_structure() {
        let mut x = random_state(&mut ChaCha8Rng::seed_from_u64(5));
        x.rho = Vector3::zeros();
        let (_, h) = predict_measurement(&state(x));
        let a = x.mu.to_rotation();
        assert_eq!(h.fixed_view::<3, 3>(0, idx::MU).into_owned(), Matrix3::zeros());
        assert_eq!(h.fixed_view::<3, 3>(0, idx::RC).into_owned(), Matrix3::identity());
        assert_eq!(h.fixed_view::<3, 3>(0, idx::RHO).into_owned(), a);
        assert_eq!(h.fixed_view::<3, 3>(3, idx::MU).into_owned(), Matrix3::identity());
        assert_eq!(h.fixed_view::<3, 3>(3, idx::ETA).into_owned(), Matrix3::identity());
        assert_eq!(h.iter().filter(|v| **v != 0.0).count(), 3 + 9 + 6);
    }

    #[test]
    fn h_position_block_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let x = random_state(&mut rng);
            let (_, h) = predict_measurement(&state(x));
            let pos = |d: Vector3<f64>| {
                let mu = UnitQuaternion::from_small(&d).unwrap().otimes(&x.mu);
                x.r_c + mu.to_rotation() * x.rho
            };
            let eps = 1e-6;
            for k in 0..3 {
                let mut e = Vector3::zeros();
                e[k] = eps;
                let fd = (pos(e) - pos(-e)) / (2.0 * eps);
                for r in 0..3 {
                    assert!((fd[r] - h[(r, idx::MU + k)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn innovation_of_own_prediction_is_zero() {
        let x = random_state(&mut ChaCha8Rng::seed_from_u64(7));
        let s = state(x);
        let m = Measurement::from_pose(&x.por_pose(), 0.0);
        assert!(innovation(&m, &s).amax() < 1e-12);
        let flipped = Measurement {
            rotation: m.rotation.negated(),
            ..m
        };
        assert!(innovation(&flipped, &s).amax() < 1e-12);
    }

    #[test]
    fn innovation_small_angle() {
        let x = random_state(&mut ChaCha8Rng::seed_from_u64(8));
        let s = state(x);
        let pose = x.por_pose();
        let axis = Vector3::new(0.3, -0.5, 0.8).normalize();
        let theta = 1e-3;
        // q̆ = η ⊗ (δ ⊗ μ): an attitude error on the μ side.
        let meas_rot = x.eta.otimes(&UnitQuaternion::from_axis_angle(&axis, theta).otimes(&x.mu));
        let m = Measurement {
            position: pose.translation,
            rotation: meas_rot,
            time: 0.0,
        };
        let nu = innovation(&m, &s);
        let expected = axis * (theta / 2.0);
        assert!((nu.fixed_rows::<3>(3) - expected).norm() < 1e-9);
    }

    #[test]
    fn huge_measurement_noise_leaves_state_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_state(&mut rng);
        let s = state(x);
        let mut noise = NoiseConfig::default();
        noise.r *= 1e12;
        let truth_pose = Pose::new(
            UnitQuaternion::from_rotation_vector(&Vector3::new(0.01, 0.02, 0.0)).otimes(&x.por_pose().rotation),
            x.por_pose().translation + Vector3::new(0.05, 0.0, -0.02),
        );
        let out = ekf_correct(&s, &Measurement::from_pose(&truth_pose, 0.0), &noise).unwrap();
        assert!((out.x.r_c - x.r_c).amax() < 1e-6);
        assert!(out.x.mu.angle_to(&x.mu) < 1e-6);
        assert!((out.cov - s.cov).amax() <= 1e-6 * s.cov.amax());
    }

    #[test]
    fn tight_measurement_is_followed() {
        let mut x = random_state(&mut ChaCha8Rng::seed_from_u64(10));
        x.rho = Vector3::zeros();
        let s = state(x);
        let noise = NoiseConfig::new(1e-4, 1e-4, 1e-6, 1e-6);
        let target = Pose::new(
            UnitQuaternion::from_rotation_vector(&Vector3::new(0.002, 0.0, -0.001)).otimes(&x.por_pose().rotation),
            x.por_pose().translation + Vector3::new(0.03, -0.01, 0.02),
        );
        let m = Measurement::from_pose(&target, 0.0);
        let nu = innovation(&m, &s).norm();
        let out = ekf_correct(&s, &m, &noise).unwrap();
        let after = innovation(&m, &out).norm();
        assert!(after < 1e-3 * nu, "residual {after} vs innovation {nu}");
    }

    #[test]
    fn zero_interval_propagation_is_identity() {
        let s = state(random_state(&mut ChaCha8Rng::seed_from_u64(11)));
        let out = ekf_propagate(&s, &OrbitParams::new(0.0011), &NoiseConfig::default(), 0.0).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn noise_free_translation_covariance_is_congruence() {
        let x = StateVector {
            mu: UnitQuaternion::identity(),
            omega: Vector3::zeros(),
            p: Vector3::zeros(),
            r_c: Vector3::new(0.0, 5.0, 0.0),
            v_c: Vector3::new(0.01, 0.0, 0.0),
            rho: Vector3::zeros(),
            eta: UnitQuaternion::identity(),
        };
        let s = state(x);
        let orbit = OrbitParams::free();
        let noise = NoiseConfig::new(0.0, 0.0, 0.01, 0.005);
        let out = ekf_propagate(&s, &orbit, &noise, 0.5).unwrap();
        let f = build_f(&x, &orbit);
        let b = build_b(&x.p).unwrap();
        let (phi, _) = van_loan_discretize(&f, &b, &noise.sigma(), 0.5).unwrap();
        assert!((out.cov - phi * s.cov * phi.transpose()).amax() < 1e-15);
        assert!((out.x.r_c - Vector3::new(0.005, 5.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn covariance_trace_grows_without_measurements() {
        let x = random_state(&mut ChaCha8Rng::seed_from_u64(12));
        let mut s = FilterState::new(x, PriorSigmas::default().covariance() * 1e-4, 0.0);
        let orbit = OrbitParams::new(0.0011);
        let noise = NoiseConfig::new(1e-3, 1e-3, 0.01, 0.005);
        let mut last = s.cov.trace();
        for _ in 0..100 {
            s = ekf_propagate(&s, &orbit, &noise, 0.5).unwrap();
            assert!(s.cov.trace() > last);
            last = s.cov.trace();
        }
    }

    #[test]
    fn mean_propagation_matches_fine_reference() {
        let x = random_state(&mut ChaCha8Rng::seed_from_u64(13));
        let orbit = OrbitParams::new(0.0011);
        let coarse = propagate_mean(&x, &orbit, 0.5).unwrap();
        let mut fine = x;
        for _ in 0..100 {
            fine = propagate_mean(&fine, &orbit, 0.005).unwrap();
        }
        assert!(coarse.mu.angle_to(&fine.mu) < 1e-10);
        assert!((coarse.omega - fine.omega).norm() < 1e-9);
        assert!((coarse.r_c - fine.r_c).norm() < 1e-9);
    }

    #[test]
    fn overflowing_error_state_is_divergence() {
        let x = random_state(&mut ChaCha8Rng::seed_from_u64(14));
        let mut s = state(x);
        s.cov *= 1e6;
        let far = Pose::new(x.por_pose().rotation, x.por_pose().translation + Vector3::new(1e3, 0.0, 0.0));
        let r = ekf_correct(&s, &Measurement::from_pose(&far, 0.0), &NoiseConfig::default());
        assert!(matches!(r, Err(Error::ErrorStateOverflow(_))), "{r:?}");
    }

    #[test]
    fn translation_subsystem_matches_scalar_kalman_filter() {
        // Frozen attitude: zero prior on every non-translational state and no
        // torque noise, so each axis is an independent constant-velocity KF.
        let sf = 0.01f64;
        let sp = 0.02f64;
        let t = 0.5f64;
        let noise = NoiseConfig::new(0.0, sf, sp, 0.005);
        let prior = PriorSigmas::<f64> {
            mu: 0.0,
            omega: 0.0,
            p: 0.0,
            rho: 0.0,
            eta: 0.0,
            ..Default::default()
        };
        let x0 = StateVector {
            mu: UnitQuaternion::identity(),
            omega: Vector3::zeros(),
            p: Vector3::zeros(),
            r_c: Vector3::new(1.0, -2.0, 0.5),
            v_c: Vector3::zeros(),
            rho: Vector3::zeros(),
            eta: UnitQuaternion::identity(),
        };
        let mut s = FilterState::new(x0, prior.covariance(), 0.0);
        let orbit = OrbitParams::free();

        let phi = Matrix2::new(1.0, t, 0.0, 1.0);
        let q = Matrix2::new(t.powi(3) / 3.0, t * t / 2.0, t * t / 2.0, t) * (sf * sf);
        let mut kf: Vec<(Vector2<f64>, Matrix2<f64>)> = (0..3)
            .map(|k| {
                (
                    Vector2::new(x0.r_c[k], 0.0),
                    Matrix2::new(prior.r_c.powi(2), 0.0, 0.0, prior.v_c.powi(2)),
                )
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for step in 0..40 {
            let z = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)) + Vector3::new(0.01, 0.02, -0.01) * step as f64;
            s = ekf_correct(&s, &Measurement { position: z, rotation: UnitQuaternion::identity(), time: s.time }, &noise).unwrap();
            for (k, (m, p)) in kf.iter_mut().enumerate() {
                let gain = p.column(0) / (p[(0, 0)] + sp * sp);
                *m += gain * (z[k] - m[0]);
                *p -= gain * p.row(0);
                assert!((s.x.r_c[k] - m[0]).abs() < 1e-9);
                assert!((s.x.v_c[k] - m[1]).abs() < 1e-9);
                assert!((s.cov[(idx::RC + k, idx::RC + k)] - p[(0, 0)]).abs() < 1e-9);
                assert!((s.cov[(idx::RC + k, idx::VC + k)] - p[(0, 1)]).abs() < 1e-9);
            }
            s = ekf_propagate(&s, &orbit, &noise, t).unwrap();
            for (m, p) in kf.iter_mut() {
                *m = phi * *m;
                *p = phi * *p * phi.transpose() + q;
            }
        }
    }

    #[test]
    fn f32_filter_cycle() {
        let x = StateVector::<f32> {
            mu: UnitQuaternion::identity(),
            omega: Vector3::new(0.1, 0.2, 0.1),
            p: Vector3::zeros(),
            r_c: Vector3::new(0.0, 5.0, 0.0),
            v_c: Vector3::zeros(),
            rho: Vector3::zeros(),
            eta: UnitQuaternion::identity(),
        };
        let s = FilterState::new(x, PriorSigmas::default().covariance(), 0.0f32);
        let s = ekf_correct(&s, &Measurement::from_pose(&x.por_pose(), 0.0), &NoiseConfig::default()).unwrap();
        let s = ekf_propagate(&s, &OrbitParams::free(), &NoiseConfig::default(), 0.5).unwrap();
        assert!(s.cov.trace().is_finite());
    }
}
