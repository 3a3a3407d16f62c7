//! Checkpoints, images and run reports.

mod checkpoint;
mod image;
mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, MAGIC, VERSION};
pub use image::{quantize, read_image, write_image};
pub use report::RunReport;
