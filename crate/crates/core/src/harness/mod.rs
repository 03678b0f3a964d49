//! Operational shell: run configuration, dataset generation and storage,
//! checkpoint persistence, pixmap emission and the command-line interface.

mod checkpoint;
mod cli;
mod config;
mod dataset;
mod pixmap;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use cli::run_command;
pub use config::RunConfig;
pub use dataset::{
    gen_synthetic_dataset, parse_dataset_line, read_dataset, write_dataset, DatasetRecord,
    RecChunk,
};
pub use pixmap::{emit_image, parse_pixmap, pixmap_text, PALETTE};
