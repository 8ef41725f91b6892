//! Dataset index: a `manifest.toml` at the dataset root listing every
//! keyframe with its image files, camera file, expert action and
//! proprioception. Paths are relative to the root.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_file, read_pfm, write_file};
use crate::action::{DiscreteAction, Workspace};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::synthetic::Task;

pub const DATASET_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    /// Index into the camera file: 0 is the front camera.
    pub camera: usize,
    pub rgb: String,
    pub depth: String,
    pub semantic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub episode: usize,
    pub task: Task,
    pub seed: u64,
    pub keyframe: usize,
    pub camera_file: String,
    pub state_file: String,
    pub action: DiscreteAction,
    pub proprioception: [f64; 4],
    pub views: Vec<ViewRecord>,
}

impl SampleRecord {
    /// `(rgb, depth, semantic)` of one view.
    pub fn load_view(&self, root: &Path, view: usize) -> Result<(Image, Image, Image)> {
        let v = self
            .views
            .get(view)
            .ok_or_else(|| Error::IndexOutOfRange(format!("view {view} of {}", self.views.len())))?;
        Ok((
            read_pfm(&root.join(&v.rgb))?,
            read_pfm(&root.join(&v.depth))?,
            read_pfm(&root.join(&v.semantic))?,
        ))
    }

    fn paths(&self) -> impl Iterator<Item = &str> {
        [self.camera_file.as_str(), self.state_file.as_str()]
            .into_iter()
            .chain(self.views.iter().flat_map(|v| [v.rgb.as_str(), v.depth.as_str(), v.semantic.as_str()]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub tasks: Vec<Task>,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub voxel_resolution: usize,
    pub workspace: Workspace,
    /// The generating configuration, serialized as TOML.
    pub config: String,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn episodes(&self) -> Vec<usize> {
        let mut eps: Vec<usize> = self.samples.iter().map(|s| s.episode).collect();
        eps.sort_unstable();
        eps.dedup();
        eps
    }
}

pub fn save_manifest(manifest: &DatasetManifest, root: &Path) -> Result<()> {
    let text = toml::to_string(manifest).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&root.join(MANIFEST), text.as_bytes())
}

/// Loads and validates the manifest; every referenced file must exist.
pub fn load_manifest(root: &Path) -> Result<DatasetManifest> {
    let path: PathBuf = root.join(MANIFEST);
    let text = String::from_utf8(read_file(&path)?).map_err(|_| Error::Malformed {
        path: path.clone(),
        reason: "manifest is not UTF-8".into(),
    })?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Malformed {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != DATASET_VERSION {
        return Err(Error::Malformed {
            path,
            reason: format!(
                "dataset format version {} (reader supports {DATASET_VERSION})",
                manifest.format_version
            ),
        });
    }
    for s in &manifest.samples {
        for p in s.paths() {
            let full = root.join(p);
            if !full.is_file() {
                return Err(Error::io(full, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
    }
    Ok(manifest)
}
