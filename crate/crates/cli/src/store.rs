use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use gradebal::imageops::ImageRgb;

use crate::error::CliError;

/// Source-image reader over `<image_dir>/<id>.png` that records every id it
/// opens and refuses ids placed on its deny list.
#[derive(Debug)]
pub struct ImageStore {
    dir: PathBuf,
    log: Mutex<Vec<String>>,
    denied: Mutex<HashSet<String>>,
}

impl ImageStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            log: Mutex::new(Vec::new()),
            denied: Mutex::new(HashSet::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.png"))
    }

    pub fn load(&self, id: &str) -> Result<ImageRgb, CliError> {
        if self.denied.lock().unwrap().contains(id) {
            return Err(CliError::DataError(format!(
                "image {id:?} is held out and may not be read here"
            )));
        }
        self.log.lock().unwrap().push(id.to_string());
        let path = self.path_of(id);
        if !path.exists() {
            return Err(CliError::MissingArtifact(path.display().to_string()));
        }
        ImageRgb::read(&path).map_err(|e| CliError::DataError(e.to_string()))
    }

    /// Ids read so far, in access order.
    pub fn accessed(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().unwrap().clear();
    }

    pub fn deny(&self, ids: impl IntoIterator<Item = String>) {
        self.denied.lock().unwrap().extend(ids);
    }

    pub fn allow_all(&self) {
        self.denied.lock().unwrap().clear();
    }
}
