//! Truth simulation, scanning, registration and filtering wired into a
//! closed-loop or open-loop tracker, plus run metrics and CSV output.

mod config;
mod metrics;
mod output;
mod run;

pub use config::{
    AcquisitionConfig, FilterConfig, IcpConfig, Mode, ModelConfig, OrbitConfig, PriorConfig, ScenarioConfig,
    SensorConfig, TruthConfig,
};
pub use metrics::{compute_metrics, compute_metrics_with, convergence_time, BlackoutSummary, Summary, Thresholds};
pub use output::{
    filter_trace_header, filter_trace_row, track_header, track_row, truth_header, truth_row, write_filter_trace_csv,
    write_track_csv, write_truth_csv,
};
pub use run::{run_prepared, run_scenario, Divergence, FrameRecord, IcpSummary, Scenario, TrackRecord};
