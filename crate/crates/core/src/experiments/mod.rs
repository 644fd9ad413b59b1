//! Config-driven experiments: threshold sweeps comparing the approximation
//! with Monte Carlo, the two reference figures, the ρ(T) report and count
//! p-values.
//!
//! Every artifact is a pure function of the config and seed; CSV rows are
//! written in threshold order with numbers at 17 significant digits.

pub mod config;
pub mod plot;
pub mod runner;

pub use config::{ConfigError, EstimatorSettings, ExperimentConfig, KernelSpec, MeanSpec, OutputSettings, Term, Thresholds};
pub use plot::{render_svg, Panel};
pub use runner::{
    read_config, rows_to_csv, run_and_write, run_compare, run_figure, run_pvalue, run_rho, write_figure, write_outputs,
    Figure, FigurePanel, Mode, Overrides, PValueReport, ResultRow, RhoReport, RunError, CSV_HEADER,
};
