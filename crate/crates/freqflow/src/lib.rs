//! Files, checkpoints and the command line around `freqflow-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csv_io;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::RunConfig;
pub use csv_io::{load_csv, read_csv, save_csv, write_csv, CsvError, TimedDataset};
