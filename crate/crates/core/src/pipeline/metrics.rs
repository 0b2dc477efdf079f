use serde::Serialize;

use super::run::TrackRecord;

/// Gates used when summarizing a track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Inertia-ratio error (absolute).
    pub p: f64,
    /// Offset error per axis (m).
    pub rho: f64,
    /// Body-rate error norm (rad/s).
    pub omega: f64,
    /// A parameter counts as converged only if it stays within its gate
    /// for at least this long (s).
    pub sustain: f64,
    /// Tracking is lost beyond this rotation error (deg)...
    pub lost_angle_deg: f64,
    /// ...or when the registration fit exceeds this multiple of its first value.
    pub lost_fit_factor: f64,
    /// Recovery gates after a blackout.
    pub recover_angle_deg: f64,
    pub recover_pos: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            p: 0.05,
            rho: 0.02,
            omega: 0.01,
            sustain: 20.0,
            lost_angle_deg: 30.0,
            lost_fit_factor: 10.0,
            recover_angle_deg: 2.0,
            recover_pos: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlackoutSummary {
    pub start: f64,
    pub end: f64,
    /// Errors of the reported pose at the last frame inside the window.
    pub rot_err_at_end_deg: Option<f64>,
    pub trans_err_at_end: Option<f64>,
    /// Seconds from the window end until the estimate is back within the
    /// recovery gates.
    pub recovery_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub mode: String,
    pub frames: usize,
    pub end_time: f64,
    pub true_p: [f64; 3],
    pub final_p: Option<[f64; 3]>,
    pub true_rho: [f64; 3],
    pub final_rho: Option<[f64; 3]>,
    pub p_convergence_time: [Option<f64>; 3],
    pub rho_convergence_time: [Option<f64>; 3],
    pub omega_convergence_time: Option<f64>,
    pub rot_err_max_deg: f64,
    pub rot_err_mean_deg: f64,
    pub trans_err_max: f64,
    pub trans_err_mean: f64,
    pub blackouts: Vec<BlackoutSummary>,
    /// First time the rotation error or the registration fit crossed the
    /// loss gates.
    pub tracking_lost_at: Option<f64>,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    pub divergence_reason: Option<String>,
    pub thresholds: Thresholds,
}

/// Earliest time after which `err` stays below `gate` through the end of
/// the record, provided that leaves at least `sustain` seconds. Frames
/// without an estimate count as failures.
pub fn convergence_time(series: &[(f64, Option<f64>)], gate: f64, sustain: f64) -> Option<f64> {
    let end = series.last()?.0;
    let start = match series.iter().rposition(|(_, e)| !matches!(e, Some(v) if *v < gate)) {
        None => 0,
        Some(i) if i + 1 < series.len() => i + 1,
        Some(_) => return None,
    };
    let t = series[start].0;
    (end - t >= sustain).then_some(t)
}

fn stats(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
    for v in values {
        max = max.max(v);
        sum += v;
        n += 1;
    }
    (max, if n > 0 { sum / n as f64 } else { 0.0 })
}

pub fn compute_metrics(rec: &TrackRecord) -> Summary {
    compute_metrics_with(rec, &Thresholds::default())
}

pub fn compute_metrics_with(rec: &TrackRecord, th: &Thresholds) -> Summary {
    let frames = &rec.frames;
    let true_rho = rec.config.truth.rho;
    let diverged = rec.divergence.is_some();
    // A diverged run never counts as converged.
    let conv = |f: &dyn Fn(&super::run::FrameRecord) -> Option<f64>, gate: f64| {
        if diverged {
            return None;
        }
        let series: Vec<_> = frames.iter().map(|fr| (fr.time, f(fr))).collect();
        convergence_time(&series, gate, th.sustain)
    };
    let p_conv = [0, 1, 2].map(|k| conv(&|fr| fr.estimate.map(|x| (x.p[k] - rec.true_p[k]).abs()), th.p));
    let rho_conv = [0, 1, 2].map(|k| conv(&|fr| fr.estimate.map(|x| (x.rho[k] - true_rho[k]).abs()), th.rho));
    let omega_conv = conv(&|fr| fr.estimate.map(|x| (x.omega - fr.truth.omega).norm()), th.omega);

    let (rot_max, rot_mean) = stats(frames.iter().filter_map(|f| f.rot_err).map(f64::to_degrees));
    let (tr_max, tr_mean) = stats(frames.iter().filter_map(|f| f.trans_err));

    let blackouts = rec
        .config
        .sensor
        .blackouts
        .iter()
        .map(|w| {
            let last_dark = frames.iter().rev().find(|f| f.time >= w[0] && f.time < w[1]);
            let recovery_time = frames
                .iter()
                .filter(|f| f.time >= w[1])
                .find(|f| {
                    matches!((f.rot_err, f.trans_err), (Some(r), Some(t))
                        if r.to_degrees() < th.recover_angle_deg && t < th.recover_pos)
                })
                .map(|f| f.time - w[1]);
            BlackoutSummary {
                start: w[0],
                end: w[1],
                rot_err_at_end_deg: last_dark.and_then(|f| f.rot_err).map(f64::to_degrees),
                trans_err_at_end: last_dark.and_then(|f| f.trans_err),
                recovery_time,
            }
        })
        .collect();

    let first_fit = frames.iter().find_map(|f| f.icp.map(|i| i.fit_normalized));
    let tracking_lost_at = frames
        .iter()
        .find(|f| {
            let angle = f.rot_err.is_some_and(|r| r.to_degrees() > th.lost_angle_deg);
            let fit = matches!((f.icp, first_fit), (Some(i), Some(f0)) if i.fit_normalized > th.lost_fit_factor * f0);
            angle || fit
        })
        .map(|f| f.time)
        .or(rec.divergence.as_ref().map(|d| d.time));

    let last_est = frames.iter().rev().find_map(|f| f.estimate);
    Summary {
        name: rec.config.name.clone(),
        mode: rec.config.mode.to_string(),
        frames: frames.len(),
        end_time: frames.last().map_or(0.0, |f| f.time),
        true_p: [rec.true_p[0], rec.true_p[1], rec.true_p[2]],
        final_p: last_est.map(|x| [x.p[0], x.p[1], x.p[2]]),
        true_rho,
        final_rho: last_est.map(|x| [x.rho[0], x.rho[1], x.rho[2]]),
        p_convergence_time: p_conv,
        rho_convergence_time: rho_conv,
        omega_convergence_time: omega_conv,
        rot_err_max_deg: rot_max,
        rot_err_mean_deg: rot_mean,
        trans_err_max: tr_max,
        trans_err_mean: tr_mean,
        blackouts,
        tracking_lost_at,
        diverged,
        divergence_time: rec.divergence.as_ref().map(|d| d.time),
        divergence_reason: rec.divergence.as_ref().map(|d| d.reason.clone()),
        thresholds: *th,
    }
}
