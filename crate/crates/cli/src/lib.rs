//! Commands behind the `tumbletrack` binary. Each returns the process exit
//! code and writes diagnostics to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tumbletrack::io::write_ply;
use tumbletrack::pipeline::{
    compute_metrics, run_prepared, write_filter_trace_csv, write_track_csv, write_truth_csv, Mode, Scenario,
    ScenarioConfig, Summary, TrackRecord,
};
use tumbletrack::sensor::apply_faults;
use tumbletrack::{selftest, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Environment variable scaling every selftest tolerance.
pub const TOL_SCALE_VAR: &str = "TUMBLETRACK_TOL_SCALE";

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

/// Record of one `run` invocation, written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_path: String,
    pub output_dir: String,
    pub seed: u64,
    pub mode: String,
    /// Paths relative to `output_dir`.
    pub artifacts: Vec<String>,
    pub exit_status: i32,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config: &'a ScenarioConfig,
    metrics: &'a Summary,
}

fn load_config(path: &Path, ov: &Overrides) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut cfg = ScenarioConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(m) = ov.mode {
        cfg.mode = m;
    }
    // Relative model paths are taken from the config's directory.
    if let Some(p) = &cfg.model.path {
        let p = Path::new(p);
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.model.path = Some(dir.join(p).to_string_lossy().into_owned());
            }
        }
    }
    Ok(cfg)
}

fn prepare(cfg: &ScenarioConfig) -> Result<Scenario, String> {
    Scenario::new(cfg).map_err(|e| e.to_string())
}

/// Writes every artifact of a finished run into `out` and returns their
/// relative paths.
fn write_artifacts(out: &Path, sc: &Scenario, rec: &TrackRecord, summary: &Summary) -> tumbletrack::Result<Vec<String>> {
    fs::create_dir_all(out)?;
    let mut artifacts = Vec::new();
    let mut csv_file = |name: &str, f: &dyn Fn(fs::File) -> tumbletrack::Result<()>| -> tumbletrack::Result<()> {
        f(fs::File::create(out.join(name))?)?;
        artifacts.push(name.to_string());
        Ok(())
    };
    csv_file("track.csv", &|w| write_track_csv(w, rec))?;
    csv_file("filter_trace.csv", &|w| write_filter_trace_csv(w, rec))?;
    csv_file("truth.csv", &|w| write_truth_csv(w, rec))?;

    let summary_text = serde_json::to_string_pretty(&SummaryFile {
        config: &rec.config,
        metrics: summary,
    })
    .map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out.join("summary.json"), summary_text + "\n")?;
    artifacts.push("summary.json".into());

    if rec.config.sensor.export_scans {
        let dir = out.join("scans");
        fs::create_dir_all(&dir)?;
        for f in &rec.frames {
            let scan = apply_faults(f.time, sc.scan(f.index, &f.true_pose)?, &sc.faults);
            if scan.valid {
                let name = format!("scans/scan_{:05}.ply", f.index);
                write_ply(&out.join(&name), scan.cloud.points())?;
                artifacts.push(name);
            }
        }
    }
    Ok(artifacts)
}

fn write_manifest(out: &Path, m: &RunManifest) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    fs::write(out.join("manifest.json"), text + "\n")
}

/// Runs one scenario and writes its artifacts to `out`.
pub fn cmd_run(config: &Path, out: &Path, ov: &Overrides) -> i32 {
    let cfg = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let sc = match prepare(&cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let rec = match run_prepared(&sc) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let summary = compute_metrics(&rec);
    let status = if rec.divergence.is_some() { EXIT_DIVERGED } else { EXIT_OK };
    let artifacts = match write_artifacts(out, &sc, &rec, &summary) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: writing results: {e}");
            return EXIT_FAILED;
        }
    };
    let manifest = RunManifest {
        config_path: config.display().to_string(),
        output_dir: out.display().to_string(),
        seed: cfg.seed,
        mode: cfg.mode.to_string(),
        artifacts,
        exit_status: status,
    };
    if let Err(e) = write_manifest(out, &manifest) {
        eprintln!("error: writing manifest: {e}");
        return EXIT_FAILED;
    }
    print_run_summary(&summary);
    if let Some(d) = &rec.divergence {
        eprintln!("filter diverged at t = {} s: {}", d.time, d.reason);
    }
    status
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

fn fmt_p(v: &[Option<f64>; 3]) -> String {
    v.iter().map(|x| fmt_opt(*x)).collect::<Vec<_>>().join("/")
}

fn print_run_summary(s: &Summary) {
    println!("scenario {} ({}) {} frames to t = {} s", s.name, s.mode, s.frames, s.end_time);
    if let Some(p) = s.final_p {
        println!("  p   final ({:.4}, {:.4}, {:.4})  true ({:.4}, {:.4}, {:.4})", p[0], p[1], p[2], s.true_p[0], s.true_p[1], s.true_p[2]);
    }
    if let Some(r) = s.final_rho {
        println!("  rho final ({:.4}, {:.4}, {:.4})  true ({:.4}, {:.4}, {:.4})", r[0], r[1], r[2], s.true_rho[0], s.true_rho[1], s.true_rho[2]);
    }
    println!("  converged at: p {}  rho {}  omega {}", fmt_p(&s.p_convergence_time), fmt_p(&s.rho_convergence_time), fmt_opt(s.omega_convergence_time));
    println!("  rotation error max {:.3} deg mean {:.3} deg; translation max {:.4} m mean {:.4} m", s.rot_err_max_deg, s.rot_err_mean_deg, s.trans_err_max, s.trans_err_mean);
    if let Some(t) = s.tracking_lost_at {
        println!("  tracking lost at t = {t} s");
    }
}

/// A mode fails when it loses track or its filter diverges.
pub fn mode_failed(s: &Summary) -> bool {
    s.diverged || s.tracking_lost_at.is_some()
}

/// Side-by-side metrics of a closed-loop and an open-loop run.
pub fn compare_table(cl: &Summary, ol: &Summary) -> Vec<[String; 3]> {
    let f = |x: f64| format!("{x:.4}");
    let row = |name: &str, a: String, b: String| [name.to_string(), a, b];
    let status = |s: &Summary| if mode_failed(s) { "FAILED" } else { "ok" }.to_string();
    let lost = |s: &Summary| s.tracking_lost_at.map_or("-".into(), |t| format!("{t}"));
    vec![
        row("status", status(cl), status(ol)),
        row("tracking_lost_at_s", lost(cl), lost(ol)),
        row("rot_err_max_deg", f(cl.rot_err_max_deg), f(ol.rot_err_max_deg)),
        row("rot_err_mean_deg", f(cl.rot_err_mean_deg), f(ol.rot_err_mean_deg)),
        row("trans_err_max_m", f(cl.trans_err_max), f(ol.trans_err_max)),
        row("trans_err_mean_m", f(cl.trans_err_mean), f(ol.trans_err_mean)),
        row("p_converged_s", fmt_p(&cl.p_convergence_time), fmt_p(&ol.p_convergence_time)),
        row("rho_converged_s", fmt_p(&cl.rho_convergence_time), fmt_p(&ol.rho_convergence_time)),
        row("omega_converged_s", fmt_opt(cl.omega_convergence_time), fmt_opt(ol.omega_convergence_time)),
        row("diverged", cl.diverged.to_string(), ol.diverged.to_string()),
    ]
}

/// Runs the scenario in both modes with one seed. Artifacts go to
/// `out/cl` and `out/ol`; the table is printed and saved as `compare.csv`.
pub fn cmd_compare(config: &Path, out: &Path, ov: &Overrides) -> i32 {
    let base = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut summaries = Vec::new();
    for mode in [Mode::Cl, Mode::Ol] {
        let cfg = ScenarioConfig { mode, ..base.clone() };
        let sc = match prepare(&cfg) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        let rec = match run_prepared(&sc) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        let summary = compute_metrics(&rec);
        if let Err(e) = write_artifacts(&out.join(mode.to_string()), &sc, &rec, &summary) {
            eprintln!("error: writing results: {e}");
            return EXIT_FAILED;
        }
        summaries.push(summary);
    }
    let table = compare_table(&summaries[0], &summaries[1]);
    let mut text = String::from("metric,cl,ol\n");
    for r in &table {
        text.push_str(&format!("{},{},{}\n", r[0], r[1], r[2]));
    }
    if let Err(e) = fs::write(out.join("compare.csv"), &text) {
        eprintln!("error: writing compare.csv: {e}");
        return EXIT_FAILED;
    }
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{:<20} {:>18} {:>18}", "metric", "CL EKF", "OL EKF");
    for r in &table {
        let _ = writeln!(stdout, "{:<20} {:>18} {:>18}", r[0], r[1], r[2]);
    }
    EXIT_OK
}

/// Reads the tolerance scale from the environment; unset means 1.
pub fn tolerance_scale() -> Result<f64, String> {
    match std::env::var(TOL_SCALE_VAR) {
        Err(_) => Ok(1.0),
        Ok(v) => match v.trim().parse::<f64>() {
            Ok(x) if x >= 0.0 && x.is_finite() => Ok(x),
            _ => Err(format!("{TOL_SCALE_VAR} must be a non-negative number, got '{v}'")),
        },
    }
}

/// Runs the built-in oracle checks and prints a pass/fail table.
pub fn cmd_selftest() -> i32 {
    let scale = match tolerance_scale() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let results = selftest::run_all(scale);
    println!("{:<24} {:>12} {:>12} {:>9}  result", "check", "value", "tolerance", "time_s");
    for r in &results {
        println!(
            "{:<24} {:>12.3e} {:>12.3e} {:>9.3}  {}",
            r.name,
            r.value,
            r.tolerance,
            r.elapsed.as_secs_f64(),
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

/// Default output directory for a command without `--out`.
pub fn default_out(config: &Path) -> PathBuf {
    let stem = config.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from("out").join(stem)
}
