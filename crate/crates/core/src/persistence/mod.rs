//! File formats: float and preview images, checkpoints, PLY exports and the
//! on-disk dataset layout.

mod checkpoint;
mod dataset;
mod image_io;
mod ply;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, Checkpoint, NamedTensor,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use dataset::{load_manifest, save_manifest, DatasetManifest, SampleRecord, ViewRecord, DATASET_VERSION};
pub use image_io::{pfm_header, read_pfm, read_png, write_bundle, write_pfm, write_png};
pub use ply::{export_ply, import_ply, PLY_PROPERTIES};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
