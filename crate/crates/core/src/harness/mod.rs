//! Experiment orchestration: configuration, Monte-Carlo drivers and output.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ChannelKind, Estimator, ExperimentConfig};
pub use experiments::{
    nmse, run_entropy_sweep, run_kernel_slices, run_learn, run_snr_sweep, run_surface_scan, EntropyRow, KernelSlice,
    RidgeFit, SurfaceResult, SweepResult, SweepRow,
};
pub use output::{emit_csv, emit_svg, CsvTable, SvgPlot};
