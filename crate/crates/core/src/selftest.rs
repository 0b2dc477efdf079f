//! Oracle checks bundled with the library so that an installed binary can
//! verify its own numerics. Each check reduces to one worst-case figure
//! compared against a tolerance; `tol_scale` multiplies every tolerance.

use std::time::{Duration, Instant};

use nalgebra::{SMatrix, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{idx, integrate_truth, state_derivative, InertiaRatios, OrbitParams, StateVector, TargetTruth};
use crate::ekf::{
    build_b, build_f, ekf_correct, ekf_propagate, innovation, predict_measurement, van_loan_discretize,
    ErrorVector, FilterState, Measurement, NoiseConfig, PriorSigmas, StateMatrix,
};
use crate::icp::{horn_align, PointCloud, Pose};
use crate::quat::UnitQuaternion;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// Worst observed error.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub elapsed: Duration,
}

type Check = fn() -> f64;

const CHECKS: [(&str, f64, Check); 7] = [
    ("horn_recovery", 1e-9, horn_recovery),
    ("inertia_ratio_identity", 1e-12, ratio_identity),
    ("energy_momentum_drift", 1e-7, conservation),
    ("jacobian_f", 1e-5, jacobian_f),
    ("jacobian_h", 1e-5, jacobian_h),
    ("van_loan_free", 1e-12, van_loan_free),
    ("covariance_health", 1e-9, covariance_health),
];

/// Runs every check. A check passes when its figure is finite and at most
/// `tolerance · tol_scale`.
pub fn run_all(tol_scale: f64) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|&(name, tol, check)| {
            let start = Instant::now();
            let value = check();
            let tolerance = tol * tol_scale;
            CheckResult {
                name,
                value,
                tolerance,
                passed: value.is_finite() && value <= tolerance,
                elapsed: start.elapsed(),
            }
        })
        .collect()
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5e1f_7e57 ^ tag)
}

fn unit_box(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let v = Vector4::<f64>::from_fn(|_, _| rng.random_range(-1.0..1.0));
    UnitQuaternion::from_vector4(&v)
}

/// Largest rotation or translation error over 100 noiseless alignments.
fn horn_recovery() -> f64 {
    let mut rng = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pts: Vec<_> = (0..50).map(|_| unit_box(&mut rng)).collect();
        let truth = Pose::new(random_rotation(&mut rng), unit_box(&mut rng) * 5.0);
        let u = PointCloud::new(pts.clone()).expect("finite points");
        let v = PointCloud::new(pts.iter().map(|p| truth.transform_point(p)).collect()).expect("finite points");
        match horn_align(&u, &v) {
            Ok(a) => {
                let got = Pose::new(a.rotation, a.translation);
                let (r, t) = truth.error_to(&got);
                worst = worst.max(r).max(t);
            }
            Err(_) => return f64::INFINITY,
        }
    }
    worst
}

fn random_inertia(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let i = Vector3::from_fn(|_, _| rng.random_range(0.5..20.0));
        if i[0] + i[1] > i[2] && i[1] + i[2] > i[0] && i[0] + i[2] > i[1] {
            return i;
        }
    }
}

fn ratio_identity() -> f64 {
    let mut rng = rng(2);
    (0..1000)
        .map(|_| match InertiaRatios::from_inertia(&random_inertia(&mut rng)) {
            Ok(r) => r.identity_residual().abs(),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Relative drift of `ωᵀIω` and `‖Iω‖` over 300 s of torque-free motion.
fn conservation() -> f64 {
    let truth = TargetTruth::<f64> {
        mu: UnitQuaternion::identity(),
        omega: Vector3::new(0.1, 0.2, 0.1),
        r_c: Vector3::zeros(),
        v_c: Vector3::zeros(),
        rho: Vector3::zeros(),
        eta: UnitQuaternion::identity(),
        inertia: Vector3::new(4.0, 8.0, 5.0),
    };
    match integrate_truth(&truth, &OrbitParams::free(), 300.0, 0.01) {
        Ok(end) => {
            let de = (end.energy() - truth.energy()).abs() / truth.energy();
            let dh = (end.momentum_norm() - truth.momentum_norm()).abs() / truth.momentum_norm();
            de.max(dh)
        }
        Err(_) => f64::INFINITY,
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> StateVector<f64> {
    StateVector {
        mu: random_rotation(rng),
        omega: unit_box(rng) * 0.3,
        p: unit_box(rng) * 0.8,
        r_c: unit_box(rng) * 10.0,
        v_c: unit_box(rng) * 0.1,
        rho: unit_box(rng) * 0.3,
        eta: random_rotation(rng),
    }
}

/// Applies error-state component `col` with magnitude `s`: body-side
/// quaternion errors `μ ← δμ ⊗ μ`, `η ← η ⊗ δη`, additive elsewhere.
fn retract(x: &StateVector<f64>, col: usize, s: f64) -> StateVector<f64> {
    let mut y = *x;
    let mut e = Vector3::zeros();
    e[col % 3] = s;
    let small = || UnitQuaternion::from_small(&e).expect("small perturbation");
    match col / 3 {
        0 => y.mu = small().otimes(&x.mu),
        1 => y.omega += e,
        2 => y.p += e,
        3 => y.r_c += e,
        4 => y.v_c += e,
        5 => y.rho += e,
        _ => y.eta = x.eta.otimes(&small()),
    }
    y
}

/// `a ⊗ b` on raw 4-vectors `[v; s]`.
fn qmul(a: &Vector4<f64>, b: &Vector4<f64>) -> Vector4<f64> {
    let (av, bv) = (a.xyz(), b.xyz());
    let v = bv * a[3] - av.cross(&bv) + av * b[3];
    Vector4::new(v[0], v[1], v[2], a[3] * b[3] - av.dot(&bv))
}

/// Worst entry error of `numeric` against `analytic`, each row scaled by
/// its largest analytic entry. Rows that are identically zero in both are
/// skipped.
fn row_relative_error<const R: usize>(analytic: &SMatrix<f64, R, 21>, numeric: &SMatrix<f64, R, 21>, rows: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for &r in rows {
        let scale = analytic.row(r).amax().max(numeric.row(r).amax());
        if scale == 0.0 {
            continue;
        }
        worst = worst.max((analytic.row(r) - numeric.row(r)).amax() / scale);
    }
    worst
}

fn jacobian_f() -> f64 {
    let mut rng = rng(3);
    let orbit = OrbitParams::new(0.0011);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = random_state(&mut rng);
        let f = build_f(&x, &orbit);
        let Ok(dx) = state_derivative(&x, &orbit) else {
            return f64::INFINITY;
        };
        let conj = |q: Vector4<f64>| Vector4::new(-q[0], -q[1], -q[2], q[3]);
        // Error rate of y relative to x. The attitude part is
        // d/dt vec(y ⊗ x*) = vec(ẏ ⊗ x* + y ⊗ ẋ*).
        let err_rate = |y: &StateVector<f64>| -> Option<ErrorVector<f64>> {
            let dy = state_derivative(y, &orbit).ok()?;
            let rate = qmul(&dy.mu, &conj(x.mu.to_vector4())) + qmul(&y.mu.to_vector4(), &conj(dx.mu));
            let mut out = ErrorVector::zeros();
            out.fixed_rows_mut::<3>(idx::MU).copy_from(&rate.xyz());
            out.fixed_rows_mut::<3>(idx::OMEGA).copy_from(&(dy.omega - dx.omega));
            out.fixed_rows_mut::<3>(idx::RC).copy_from(&(dy.r_c - dx.r_c));
            out.fixed_rows_mut::<3>(idx::VC).copy_from(&(dy.v_c - dx.v_c));
            Some(out)
        };
        let mut numeric = StateMatrix::zeros();
        for col in 0..idx::DIM {
            match (err_rate(&retract(&x, col, h)), err_rate(&retract(&x, col, -h))) {
                (Some(a), Some(b)) => numeric.set_column(col, &((a - b) / (2.0 * h))),
                _ => return f64::INFINITY,
            }
        }
        let rows: Vec<usize> = (idx::MU..idx::MU + 3)
            .chain(idx::OMEGA..idx::OMEGA + 3)
            .chain(idx::RC..idx::VC + 3)
            .collect();
        worst = worst.max(row_relative_error(&f, &numeric, &rows));
    }
    worst
}

fn jacobian_h() -> f64 {
    let mut rng = rng(4);
    let h = 1e-6;
    let cov = PriorSigmas::default().covariance();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = random_state(&mut rng);
        let state = FilterState::new(x, cov, 0.0);
        let (_, analytic) = predict_measurement(&state);
        let innov = |y: &StateVector<f64>| innovation(&Measurement::from_pose(&y.por_pose(), 0.0), &state);
        let mut numeric = SMatrix::<f64, 6, 21>::zeros();
        for col in 0..idx::DIM {
            let d = (innov(&retract(&x, col, h)) - innov(&retract(&x, col, -h))) / (2.0 * h);
            numeric.set_column(col, &d);
        }
        worst = worst.max(row_relative_error(&analytic, &numeric, &[0, 1, 2, 3, 4, 5]));
    }
    worst
}

/// With `F = 0`: `Φ = I` and `Q = BΣBᵀT`.
fn van_loan_free() -> f64 {
    let p = Vector3::new(0.75, 0.125, -0.8);
    let Ok(b) = build_b(&p) else {
        return f64::INFINITY;
    };
    let sigma = NoiseConfig::new(0.03, 0.02, 0.01, 0.005).sigma();
    let t = 0.5;
    match van_loan_discretize(&StateMatrix::<f64>::zeros(), &b, &sigma, t) {
        Ok((phi, q)) => {
            let q_ref = b * sigma * b.transpose() * t;
            (phi - StateMatrix::identity()).amax().max((q - q_ref).amax())
        }
        Err(_) => f64::INFINITY,
    }
}

/// Runs 10⁴ propagate/correct cycles on a tumbling target and returns the
/// larger of the worst covariance asymmetry and the most negative
/// eigenvalue, both relative to the largest covariance entry.
fn covariance_health() -> f64 {
    let mut rng = rng(5);
    let orbit = OrbitParams::new(0.0011);
    let noise = NoiseConfig::new(1e-3, 1e-3, 0.01, 0.005);
    let truth0 = StateVector {
        mu: UnitQuaternion::identity(),
        omega: Vector3::new(0.1, 0.2, 0.1),
        p: Vector3::new(0.75, 0.125, -0.8),
        r_c: Vector3::new(0.0, 5.0, 0.0),
        v_c: Vector3::zeros(),
        rho: Vector3::new(-0.15, 0.0, 0.0),
        eta: UnitQuaternion::identity(),
    };
    let mut state = FilterState::new(truth0, PriorSigmas::default().covariance(), 0.0);
    let (mut asym, mut neg): (f64, f64) = (0.0, 0.0);
    let dt = 0.5;
    for _ in 0..10_000 {
        state = match ekf_propagate(&state, &orbit, &noise, dt) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        // Measurement scattered about the prediction at the stated noise.
        let pose = state.pose();
        let jitter = UnitQuaternion::from_rotation_vector(&(unit_box(&mut rng) * 0.005));
        let meas = Measurement {
            position: pose.translation + unit_box(&mut rng) * 0.01,
            rotation: pose.rotation.otimes(&jitter),
            time: state.time,
        };
        state = match ekf_correct(&state, &meas, &noise) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        let scale = state.cov.amax().max(1.0);
        asym = asym.max(state.asymmetry() / scale);
        neg = neg.max(-state.min_eigenvalue() / scale);
    }
    asym.max(neg)
}
