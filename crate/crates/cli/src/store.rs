//! On-disk design store. Each design has its own lock: edits run
//! clone-modify-persist-swap under the write lock, reads take a snapshot.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use origami_core::CreasePattern;

use crate::error::ApiError;

type Slot = Arc<RwLock<CreasePattern>>;

pub struct DesignStore {
    dir: PathBuf,
    designs: RwLock<BTreeMap<String, Slot>>,
}

/// Ids double as file names, so keep them to a safe alphabet.
pub fn check_id(id: &str) -> Result<(), ApiError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_input("BadId", "ids are 1-64 characters of [A-Za-z0-9_-]").on(format!("design:{id}")))
    }
}

fn write_atomically(path: &Path, text: &str) -> Result<(), ApiError> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

impl DesignStore {
    /// Open (creating if needed) a store directory and load every design in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut designs = BTreeMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            let text = std::fs::read_to_string(&path)?;
            match CreasePattern::from_json(&text) {
                Ok(p) => {
                    designs.insert(id, Arc::new(RwLock::new(p)));
                }
                Err(e) => eprintln!("skipping {}: {e}", path.display()),
            }
        }
        Ok(DesignStore {
            dir,
            designs: RwLock::new(designs),
        })
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn slot(&self, id: &str) -> Result<Slot, ApiError> {
        check_id(id)?;
        self.designs
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("design", id))
    }

    pub fn ids(&self) -> Vec<String> {
        self.designs.read().expect("store lock").keys().cloned().collect()
    }

    /// Create or replace. Returns true when the id was new.
    pub fn put(&self, id: &str, pattern: CreasePattern) -> Result<bool, ApiError> {
        check_id(id)?;
        let mut map = self.designs.write().expect("store lock");
        match map.get(id) {
            Some(slot) => {
                let mut current = slot.write().expect("design lock");
                write_atomically(&self.path(id), &pattern.to_json())?;
                *current = pattern;
                Ok(false)
            }
            None => {
                write_atomically(&self.path(id), &pattern.to_json())?;
                map.insert(id.to_string(), Arc::new(RwLock::new(pattern)));
                Ok(true)
            }
        }
    }

    pub fn snapshot(&self, id: &str) -> Result<CreasePattern, ApiError> {
        Ok(self.slot(id)?.read().expect("design lock").clone())
    }

    /// Apply an edit atomically: other readers see either the old or the
    /// new design, never an intermediate state.
    pub fn update<T>(
        &self,
        id: &str,
        edit: impl FnOnce(&CreasePattern) -> Result<(CreasePattern, T), ApiError>,
    ) -> Result<T, ApiError> {
        let slot = self.slot(id)?;
        let mut current = slot.write().expect("design lock");
        let (next, out) = edit(&current)?;
        write_atomically(&self.path(id), &next.to_json())?;
        *current = next;
        Ok(out)
    }
}
