//! File formats, simulated datasets, experiment sweeps and the command-line
//! front end around `velostereo-core`.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod io;
pub mod report;
pub mod sweep;

pub use config::FileConfig;
pub use dataset::{emit_dataset, DatasetSpec, Manifest};
pub use experiment::{Detections, Outcome, Runner, Trial};
pub use report::{evaluate, GroundTruth, ResultFile};
pub use sweep::{run_sweep, SweepKind, SweepReport, SweepSpec};
