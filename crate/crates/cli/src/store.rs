//! On-disk layout: `datasets/<id>.csv` and `sessions/<id>.json` under one data
//! directory. Every write goes through a temporary file and a rename, so a
//! crash leaves either the old or the new file.

use std::fs;
use std::path::{Path, PathBuf};

use steerlsh_core::series::{load_csv, write_csv};
use steerlsh_core::{MultivariateTimeSeries, Result, SessionDocument};

pub const DATASET_PREFIX: &str = "d";
pub const SESSION_PREFIX: &str = "s";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("datasets"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dataset_path(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.csv"))
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn save_dataset(&self, id: &str, series: &MultivariateTimeSeries) -> Result<()> {
        let mut bytes = Vec::new();
        write_csv(series, &mut bytes)?;
        Self::write_atomic(&self.dataset_path(id), &bytes)
    }

    /// `None` when no dataset with this id was ever stored.
    pub fn load_dataset(&self, id: &str) -> Result<Option<MultivariateTimeSeries>> {
        let path = self.dataset_path(id);
        if !is_safe_id(id) || !path.exists() {
            return Ok(None);
        }
        load_csv(path, true).map(Some)
    }

    pub fn save_session(&self, id: &str, doc: &SessionDocument) -> Result<()> {
        Self::write_atomic(&self.session_path(id), doc.to_json()?.as_bytes())
    }

    /// `None` when no session with this id was ever stored.
    pub fn load_session(&self, id: &str) -> Result<Option<SessionDocument>> {
        let path = self.session_path(id);
        if !is_safe_id(id) || !path.exists() {
            return Ok(None);
        }
        SessionDocument::from_json(&fs::read_to_string(path)?).map(Some)
    }

    /// Largest numeric suffix among stored ids with `prefix`, 0 if none.
    pub fn max_id(&self, prefix: &str) -> u64 {
        let dir = if prefix == DATASET_PREFIX { "datasets" } else { "sessions" };
        fs::read_dir(self.root.join(dir))
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let stem = name.split('.').next()?;
                stem.strip_prefix(prefix)?.parse::<u64>().ok()
            })
            .max()
            .unwrap_or(0)
    }
}

/// Ids are a prefix letter plus digits; anything else never touches the disk.
fn is_safe_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric())
}
