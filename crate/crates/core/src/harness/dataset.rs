//! Labelled record collections and their on-disk manifest.
//!
//! Synthetic entries hold only their simulation configuration; samples are
//! generated on demand so large datasets never sit in memory at once.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::simulate::{self, GestureLabel, IQRecord, SimConfig};

pub const MANIFEST_FILE: &str = "meta.json";
pub const MANIFEST_VERSION: u32 = 1;

/// One manifest row. Without `file` the record is synthesised from `config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: usize,
    pub label: GestureLabel,
    #[serde(flatten)]
    pub config: SimConfig,
    /// `.iq` file, relative to the dataset directory when loaded from a manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    entries: Vec<DatasetEntry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    entries: Vec<DatasetEntry>,
    root: Option<PathBuf>,
}

impl Dataset {
    pub fn new(entries: Vec<DatasetEntry>) -> Self {
        Self { entries, root: None }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn labels(&self) -> Vec<GestureLabel> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn class_counts(&self) -> [usize; GestureLabel::COUNT] {
        let mut c = [0; GestureLabel::COUNT];
        for e in &self.entries {
            c[e.label.index()] += 1;
        }
        c
    }

    /// Manifest ids must be unique.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id) {
                return Err(Error::Data(format!("duplicate manifest id {}", e.id)));
            }
        }
        Ok(())
    }

    /// Samples of entry `i`, synthesised or read from disk.
    pub fn record(&self, i: usize) -> Result<IQRecord> {
        let e = self
            .entries
            .get(i)
            .ok_or_else(|| Error::Data(format!("record index {i} out of range")))?;
        match &e.file {
            None => simulate::simulate(e.label, &e.config),
            Some(rel) => {
                let path = match &self.root {
                    Some(root) if rel.is_relative() => root.join(rel),
                    _ => rel.clone(),
                };
                Ok(IQRecord {
                    samples: io::read_iq(&path)?,
                    sample_rate_hz: e.config.sample_rate_hz,
                    label: e.label,
                    config: e.config,
                    truth: Vec::new(),
                })
            }
        }
    }

    /// Writes every record as `<id>.iq` plus the manifest; the saved
    /// dataset refers to the files.
    pub fn save(&self, dir: &Path) -> Result<Dataset> {
        let mut entries = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let rec = self.record(i)?;
            let name = PathBuf::from(format!("{:05}.iq", self.entries[i].id));
            io::write_iq(&dir.join(&name), &rec.samples)?;
            entries.push(DatasetEntry {
                file: Some(name),
                ..self.entries[i].clone()
            });
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            entries,
        };
        io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(Dataset {
            entries: manifest.entries,
            root: Some(dir.to_path_buf()),
        })
    }

    /// Writes only the manifest; synthetic entries stay lazy.
    pub fn save_manifest(&self, dir: &Path) -> Result<()> {
        io::write_json(
            &dir.join(MANIFEST_FILE),
            &Manifest {
                version: MANIFEST_VERSION,
                entries: self.entries.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest: Manifest = io::read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Data(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        let ds = Dataset {
            entries: manifest.entries,
            root: Some(dir.to_path_buf()),
        };
        ds.validate()?;
        Ok(ds)
    }
}
