use nalgebra::{SVector, Vector3, Vector6};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Mode, ScenarioConfig};
use crate::dynamics::{integrate_truth_perturbed, OrbitParams, StateVector, TargetTruth};
use crate::ekf::{ekf_correct_detailed, ekf_propagate, FilterState, Measurement, NoiseConfig, PriorSigmas};
use crate::error::{Error, Result};
use crate::icp::{icp_register, IcpOptions, Pose, SurfaceModel};
use crate::io::read_ply;
use crate::model::{build_model, Shape};
use crate::quat::UnitQuaternion;
use crate::rng::{stream_rng, stream_seed, Stream};
use crate::sensor::{apply_faults, sample_scan, FaultSchedule, ScanFrame};

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn quat(a: [f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_array(a)
}

/// Registration outcome for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpSummary {
    pub residual: f64,
    pub fit_normalized: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Everything logged for one sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub time: f64,
    /// False during a blackout.
    pub valid: bool,
    pub truth: TargetTruth<f64>,
    /// True pose of `{C}`.
    pub true_pose: Pose<f64>,
    /// Filter prediction of the `{C}` pose before this frame's correction.
    pub predicted: Option<Pose<f64>>,
    /// `{C}` pose used to start registration.
    pub seed: Option<Pose<f64>>,
    /// Registration result as a `{C}` pose.
    pub measured: Option<Pose<f64>>,
    pub icp: Option<IcpSummary>,
    /// Filter estimate after this frame's correction.
    pub estimate: Option<StateVector<f64>>,
    pub cov_diag: Option<SVector<f64, 21>>,
    pub innovation: Option<Vector6<f64>>,
    pub innovation_cov_diag: Option<Vector6<f64>>,
    /// The correction was skipped because the innovation covariance was
    /// ill-conditioned.
    pub rejected: bool,
    /// Geodesic angle (rad) and distance (m) between the true pose and the
    /// reported one: the filter estimate in CL, the latest registration
    /// (held through gaps) in OL.
    pub rot_err: Option<f64>,
    pub trans_err: Option<f64>,
    /// Same errors for the prediction.
    pub pred_rot_err: Option<f64>,
    pub pred_trans_err: Option<f64>,
}

impl FrameRecord {
    pub fn estimated_pose(&self) -> Option<Pose<f64>> {
        self.estimate.map(|x| x.por_pose())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub time: f64,
    pub reason: String,
}

/// The full run: per-frame log plus the true constant parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub config: ScenarioConfig,
    pub frames: Vec<FrameRecord>,
    pub divergence: Option<Divergence>,
    pub true_p: Vector3<f64>,
    pub characteristic_radius: f64,
}

/// Geometry, truth and sensor set up from a configuration.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: SurfaceModel<f64>,
    pub truth0: TargetTruth<f64>,
    pub orbit: OrbitParams<f64>,
    pub noise: NoiseConfig<f64>,
    pub faults: FaultSchedule<f64>,
    pub view_dir: Vector3<f64>,
    pub icp: IcpOptions<f64>,
}

impl Scenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let model = match &config.model.path {
            Some(path) => SurfaceModel::new(read_ply(std::path::Path::new(path))?)?,
            None => build_model(config.model.shape.parse::<Shape>()?, config.model.size, config.model.points)?,
        };
        let t = &config.truth;
        let truth0 = TargetTruth {
            mu: quat(t.mu0),
            omega: v3(t.omega0),
            r_c: v3(t.r_c0),
            v_c: v3(t.v_c0),
            rho: v3(t.rho),
            eta: quat(t.eta),
            inertia: v3(t.inertia),
        };
        truth0.ratios()?;
        let f = &config.filter;
        let noise = NoiseConfig::new(f.sigma_tau, f.sigma_f, f.sigma_pos, f.sigma_att);
        let faults = FaultSchedule::new(config.sensor.blackouts.iter().map(|w| (w[0], w[1])).collect())?;
        let view_dir = match config.sensor.view_dir {
            Some(v) => v3(v).normalize(),
            None => {
                let los = truth0.observed_pose().translation;
                if los.norm() > 0.0 {
                    los.normalize()
                } else {
                    Vector3::y()
                }
            }
        };
        let sigma = config.sensor.sigma;
        let icp = IcpOptions {
            d_min: config.icp.d_min.unwrap_or(IcpOptions::for_noise(sigma).d_min.max(1e-20)),
            max_iter: config.icp.max_iter,
        };
        Ok(Self {
            config: config.clone(),
            model,
            truth0,
            orbit: OrbitParams::new(config.orbit.n),
            noise,
            faults,
            view_dir,
            icp,
        })
    }

    pub fn frame_count(&self) -> usize {
        (self.config.duration * self.config.sensor.rate_hz + 1e-9).floor() as usize + 1
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        k as f64 / self.config.sensor.rate_hz
    }

    /// Scan `k` of the true pose, before blackouts are applied.
    pub fn scan(&self, k: usize, true_pose: &Pose<f64>) -> Result<ScanFrame<f64>> {
        sample_scan(
            &self.model,
            true_pose,
            self.config.sensor.points,
            self.config.sensor.sigma,
            stream_seed(self.config.seed, Stream::Scan, k as u64),
            &self.view_dir,
            self.frame_time(k),
        )
    }

    /// The coarse pose that seeds the first registration: the true pose
    /// moved by the configured acquisition error in a random direction.
    pub fn acquisition_pose(&self, true_pose: &Pose<f64>) -> Pose<f64> {
        let mut rng = stream_rng(self.config.seed, Stream::Acquisition, 0);
        let mut unit = || loop {
            let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        };
        let axis = unit();
        let dir = unit();
        let a = &self.config.acquisition;
        Pose::new(
            UnitQuaternion::from_axis_angle(&axis, a.angle_deg.to_radians()).otimes(&true_pose.rotation),
            true_pose.translation + dir * a.offset,
        )
    }

    /// Filter initialized from the first measurement, with the attitude of
    /// the principal axes inferred through the prior `η̂`.
    pub fn initial_filter(&self, meas: &Pose<f64>, time: f64) -> FilterState<f64> {
        let pr = &self.config.filter.prior;
        let eta = quat(pr.eta);
        let rho = v3(pr.rho);
        let mu = eta.conjugate().otimes(&meas.rotation);
        let x = StateVector {
            mu,
            omega: v3(pr.omega),
            p: v3(pr.p),
            r_c: meas.translation - mu.to_rotation() * rho,
            v_c: Vector3::zeros(),
            rho,
            eta,
        };
        let sig = PriorSigmas {
            mu: pr.sigma_mu,
            omega: pr.sigma_omega,
            p: pr.sigma_p,
            r_c: pr.sigma_r_c,
            v_c: pr.sigma_v_c,
            rho: pr.sigma_rho,
            eta: pr.sigma_eta,
        };
        FilterState::new(x, sig.covariance(), time)
    }
}

fn is_divergence(e: &Error) -> bool {
    !matches!(e, Error::IllConditioned(_))
}

/// Runs truth, sensor, registration and filter frame by frame.
///
/// In closed loop the filter's prediction seeds every registration; in
/// open loop the previous registration result does, and the filter only
/// consumes measurements. Blackout frames skip registration and
/// correction. A diverging filter ends the run with the time recorded.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrackRecord> {
    let sc = Scenario::new(cfg)?;
    run_prepared(&sc)
}

pub fn run_prepared(sc: &Scenario) -> Result<TrackRecord> {
    let cfg = &sc.config;
    let mut truth = sc.truth0;
    let mut filter: Option<FilterState<f64>> = None;
    let mut last_measured: Option<Pose<f64>> = None;
    let mut frames = Vec::with_capacity(sc.frame_count());
    let mut divergence = None;

    let mut torque_rng = stream_rng(cfg.seed, Stream::TruthNoise, 0);
    let torque = Normal::new(0.0, cfg.truth.sigma_torque).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    for k in 0..sc.frame_count() {
        let t = sc.frame_time(k);
        if k > 0 {
            let span = t - sc.frame_time(k - 1);
            truth = if cfg.truth.sigma_torque > 0.0 {
                integrate_truth_perturbed(&truth, &sc.orbit, span, cfg.truth.dt, |_| {
                    Vector3::from_fn(|_, _| torque.sample(&mut torque_rng))
                })?
            } else {
                integrate_truth_perturbed(&truth, &sc.orbit, span, cfg.truth.dt, |_| Vector3::zeros())?
            };
            if let Some(f) = &filter {
                match ekf_propagate(f, &sc.orbit, &sc.noise, t - f.time) {
                    Ok(next) => filter = Some(next),
                    Err(e) => {
                        divergence = Some(Divergence {
                            time: t,
                            reason: e.to_string(),
                        });
                        break;
                    }
                }
            }
        }
        let true_pose = truth.observed_pose();
        let scan = apply_faults(t, sc.scan(k, &true_pose)?, &sc.faults);
        let predicted = filter.map(|f| f.pose());

        let mut rec = FrameRecord {
            index: k,
            time: t,
            valid: scan.valid,
            truth,
            true_pose,
            predicted,
            seed: None,
            measured: None,
            icp: None,
            estimate: None,
            cov_diag: None,
            innovation: None,
            innovation_cov_diag: None,
            rejected: false,
            rot_err: None,
            trans_err: None,
            pred_rot_err: None,
            pred_trans_err: None,
        };

        if scan.valid {
            let seed = match (cfg.mode, predicted, last_measured) {
                (Mode::Cl, Some(p), _) => p,
                (Mode::Ol, _, Some(prev)) => prev,
                _ => sc.acquisition_pose(&true_pose),
            };
            rec.seed = Some(seed);
            // Registration maps scan points into the model frame, the
            // inverse of the {C} pose.
            if let Ok(res) = icp_register(&scan.cloud, &sc.model, &seed.inverse(), &sc.icp) {
                let measured = res.pose.inverse();
                rec.measured = Some(measured);
                rec.icp = Some(IcpSummary {
                    residual: res.residual,
                    fit_normalized: res.fit_normalized,
                    iterations: res.iterations,
                    converged: res.converged,
                });
                last_measured = Some(measured);
                match &filter {
                    None => filter = Some(sc.initial_filter(&measured, t)),
                    Some(f) => match ekf_correct_detailed(f, &Measurement::from_pose(&measured, t), &sc.noise) {
                        Ok(c) => {
                            rec.innovation = Some(c.innovation);
                            rec.innovation_cov_diag = Some(c.innovation_cov.diagonal());
                            filter = Some(c.state);
                        }
                        Err(e) if !is_divergence(&e) => rec.rejected = true,
                        Err(e) => {
                            divergence = Some(Divergence {
                                time: t,
                                reason: e.to_string(),
                            });
                        }
                    },
                }
            }
        }

        if let Some(f) = &filter {
            rec.estimate = Some(f.x);
            rec.cov_diag = Some(f.cov.diagonal());
        }
        let reported = match cfg.mode {
            Mode::Cl => filter.map(|f| f.pose()),
            Mode::Ol => last_measured,
        };
        if let Some(p) = &reported {
            let (re, te) = true_pose.error_to(p);
            rec.rot_err = Some(re);
            rec.trans_err = Some(te);
        }
        if let Some(p) = &predicted {
            let (re, te) = true_pose.error_to(p);
            rec.pred_rot_err = Some(re);
            rec.pred_trans_err = Some(te);
        }
        frames.push(rec);
        if divergence.is_some() {
            break;
        }
    }

    Ok(TrackRecord {
        config: cfg.clone(),
        frames,
        divergence,
        true_p: sc.truth0.ratios()?.as_vector(),
        characteristic_radius: sc.model.characteristic_radius(),
    })
}
