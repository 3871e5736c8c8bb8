//! File formats: binary datasets and matrices, TOML run configs, JSON reports
//! and binary checkpoints.

mod binary;
mod checkpoint;
pub mod config;
pub mod report;

pub use binary::{
    decode_dataset, decode_matrix, encode_dataset, encode_matrix, format_csv, parse_csv,
    read_dataset, read_matrix, write_dataset, write_matrix, write_matrix_csv, DATASET_MAGIC,
    FORMAT_VERSION, MATRIX_MAGIC,
};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use config::{EvalConfig, FitConfig, FitModel, GenerateConfig, RunConfig};
