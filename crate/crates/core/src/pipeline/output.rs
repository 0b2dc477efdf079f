//! CSV tables of a [`TrackRecord`]. Numbers use 17 significant digits;
//! missing values are empty cells.

use std::io::Write;

use super::run::{FrameRecord, TrackRecord};
use crate::error::Result;
use crate::icp::Pose;
use crate::io::{fmt_f64, write_csv};

fn num(x: f64) -> String {
    fmt_f64(x)
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn cols(prefix: &str, names: &[&str]) -> Vec<String> {
    names.iter().map(|n| format!("{prefix}_{n}")).collect()
}

const POSE: [&str; 7] = ["qx", "qy", "qz", "qw", "x", "y", "z"];
const XYZ: [&str; 3] = ["x", "y", "z"];
const QUAT: [&str; 4] = ["qx", "qy", "qz", "qw"];

fn pose_cells(p: Option<&Pose<f64>>) -> Vec<String> {
    match p {
        Some(p) => p
            .rotation
            .to_array()
            .iter()
            .chain(p.translation.iter())
            .map(|v| num(*v))
            .collect(),
        None => vec![String::new(); 7],
    }
}

fn vec_cells<'a>(v: Option<impl IntoIterator<Item = &'a f64>>, n: usize) -> Vec<String> {
    match v {
        Some(it) => it.into_iter().map(|x| num(*x)).collect(),
        None => vec![String::new(); n],
    }
}

pub fn track_header() -> Vec<String> {
    let mut h = vec!["t".to_string(), "valid".to_string()];
    h.extend(cols("true", &POSE));
    h.extend(cols("meas", &POSE));
    h.extend(cols("est", &POSE));
    h.extend(cols("true_omega", &XYZ));
    h.extend(cols("est_omega", &XYZ));
    h.extend(cols("est_p", &XYZ));
    h.extend(cols("est_rho", &XYZ));
    h.extend(cols("est_eta", &QUAT));
    h.extend(cols("seed", &POSE));
    for s in ["icp_fit", "icp_iterations", "icp_converged", "rot_err", "trans_err", "rejected"] {
        h.push(s.into());
    }
    h
}

pub fn track_row(f: &FrameRecord) -> Vec<String> {
    let est = f.estimated_pose();
    let mut r = vec![num(f.time), u8::from(f.valid).to_string()];
    r.extend(pose_cells(Some(&f.true_pose)));
    r.extend(pose_cells(f.measured.as_ref()));
    r.extend(pose_cells(est.as_ref()));
    r.extend(vec_cells(Some(f.truth.omega.iter()), 3));
    r.extend(vec_cells(f.estimate.as_ref().map(|x| x.omega.iter()), 3));
    r.extend(vec_cells(f.estimate.as_ref().map(|x| x.p.iter()), 3));
    r.extend(vec_cells(f.estimate.as_ref().map(|x| x.rho.iter()), 3));
    r.extend(vec_cells(f.estimate.as_ref().map(|x| x.eta.to_array()).as_ref().map(|a| a.iter()), 4));
    r.extend(pose_cells(f.seed.as_ref()));
    r.push(opt(f.icp.map(|i| i.fit_normalized)));
    r.push(f.icp.map(|i| i.iterations.to_string()).unwrap_or_default());
    r.push(f.icp.map(|i| u8::from(i.converged).to_string()).unwrap_or_default());
    r.push(opt(f.rot_err));
    r.push(opt(f.trans_err));
    r.push(u8::from(f.rejected).to_string());
    r
}

pub fn write_track_csv<W: Write>(out: W, rec: &TrackRecord) -> Result<()> {
    write_csv(out, &track_header(), rec.frames.iter().map(track_row))
}

const STATE: [&str; 23] = [
    "mu_qx", "mu_qy", "mu_qz", "mu_qw", "omega_x", "omega_y", "omega_z", "p_x", "p_y", "p_z", "r_c_x", "r_c_y",
    "r_c_z", "v_c_x", "v_c_y", "v_c_z", "rho_x", "rho_y", "rho_z", "eta_qx", "eta_qy", "eta_qz", "eta_qw",
];

pub fn filter_trace_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(STATE.iter().map(|s| s.to_string()));
    h.extend((0..21).map(|i| format!("P_{i}")));
    h.extend((0..6).map(|i| format!("innov_{i}")));
    h.extend((0..6).map(|i| format!("S_{i}")));
    h
}

pub fn filter_trace_row(f: &FrameRecord) -> Vec<String> {
    let mut r = vec![num(f.time)];
    match &f.estimate {
        Some(x) => {
            let vals = x
                .mu
                .to_array()
                .into_iter()
                .chain(x.omega.iter().copied())
                .chain(x.p.iter().copied())
                .chain(x.r_c.iter().copied())
                .chain(x.v_c.iter().copied())
                .chain(x.rho.iter().copied())
                .chain(x.eta.to_array());
            r.extend(vals.map(num));
        }
        None => r.extend(vec![String::new(); 23]),
    }
    r.extend(vec_cells(f.cov_diag.as_ref().map(|d| d.iter()), 21));
    r.extend(vec_cells(f.innovation.as_ref().map(|d| d.iter()), 6));
    r.extend(vec_cells(f.innovation_cov_diag.as_ref().map(|d| d.iter()), 6));
    r
}

pub fn write_filter_trace_csv<W: Write>(out: W, rec: &TrackRecord) -> Result<()> {
    write_csv(out, &filter_trace_header(), rec.frames.iter().map(filter_trace_row))
}

pub fn truth_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(cols("mu", &QUAT));
    h.extend(cols("omega", &XYZ));
    h.extend(cols("r_c", &XYZ));
    h.extend(cols("v_c", &XYZ));
    h.extend(cols("pose", &POSE));
    h
}

pub fn truth_row(f: &FrameRecord) -> Vec<String> {
    let t = &f.truth;
    let mut r = vec![num(f.time)];
    r.extend(
        t.mu.to_array()
            .into_iter()
            .chain(t.omega.iter().copied())
            .chain(t.r_c.iter().copied())
            .chain(t.v_c.iter().copied())
            .map(num),
    );
    r.extend(pose_cells(Some(&f.true_pose)));
    r
}

pub fn write_truth_csv<W: Write>(out: W, rec: &TrackRecord) -> Result<()> {
    write_csv(out, &truth_header(), rec.frames.iter().map(truth_row))
}
