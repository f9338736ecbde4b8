//! Experiment harness: epsilon sweeps, BSS-vs-uniform sample-size sweeps,
//! report emission, data generators and the statistical verification suites.

pub mod error;
pub mod report;
pub mod sweep;
pub mod verify;
pub mod workloads;

pub use error::{BenchError, Result};
pub use report::{emit_report, ReportFormat};
pub use sweep::{epsilon_sweep, k_sweep_vs_uniform, SweepCell, SweepConfig, SweepKind, SweepReport, SweepRow};
