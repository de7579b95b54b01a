//! File formats (epoch data, checkpoints), experiment configuration,
//! sweep orchestration, and report emission.

pub mod checkpoint;
pub mod config;
pub mod epoch;
pub mod report;
pub mod sweep;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::{DatasetSource, ExperimentConfig};
pub use epoch::{read_epoch_file, write_epoch_file};
pub use report::emit_report;
pub use sweep::{run_experiment, ResultRow};
