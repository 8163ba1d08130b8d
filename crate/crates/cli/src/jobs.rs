//! Asynchronous jobs on a bounded worker pool. Records and results live in
//! one directory per job so they survive a restart.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Semaphore;

use crate::error::ApiError;
use crate::pipeline::SCHEMA_VERSION;

pub const FRAMES_FILE: &str = "frames.ndjson";
const RECORD_FILE: &str = "record.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Simulate,
    Sweep,
    Optimize,
}

/// Ordered so that a valid transition never decreases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub version: u32,
    pub id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    /// Fraction in [0, 1].
    pub progress: f64,
    /// Directory holding the job's output files.
    pub result: Option<String>,
    pub summary: Option<Value>,
    pub error: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FramePage {
    pub version: u32,
    pub from: usize,
    pub next: usize,
    pub total: usize,
    pub done: bool,
    pub frames: Vec<Value>,
}

/// Handle given to running work.
pub struct JobContext {
    registry: Arc<JobRegistry>,
    pub id: String,
    pub dir: PathBuf,
}

impl JobContext {
    pub fn progress(&self, fraction: f64) {
        self.registry.modify(&self.id, |r| {
            if r.status == JobStatus::Running {
                r.progress = r.progress.max(fraction.clamp(0.0, 1.0));
            }
        });
    }
}

pub type JobWork = Box<dyn FnOnce(&JobContext) -> Result<Value, ApiError> + Send>;

pub struct JobRegistry {
    dir: PathBuf,
    records: Mutex<BTreeMap<String, JobRecord>>,
    next: AtomicU64,
    permits: Arc<Semaphore>,
}

impl JobRegistry {
    /// Open a job directory. Jobs left queued or running by a previous
    /// process are marked failed.
    pub fn open(dir: impl Into<PathBuf>, workers: usize) -> Result<Arc<Self>, ApiError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut records = BTreeMap::new();
        let mut highest = 0;
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path().join(RECORD_FILE);
            let Ok(text) = std::fs::read_to_string(&path) else { continue };
            let Ok(mut record) = serde_json::from_str::<JobRecord>(&text) else { continue };
            if let Some(n) = record.id.strip_prefix("job-").and_then(|n| n.parse::<u64>().ok()) {
                highest = highest.max(n);
            }
            if !record.status.is_terminal() {
                record.status = JobStatus::Failed;
                record.error = Some(serde_json::to_value(ApiError::internal("interrupted by shutdown")).expect("json"));
                std::fs::write(&path, serde_json::to_string_pretty(&record).expect("json"))?;
            }
            records.insert(record.id.clone(), record);
        }
        Ok(Arc::new(JobRegistry {
            dir,
            records: Mutex::new(records),
            next: AtomicU64::new(highest + 1),
            permits: Arc::new(Semaphore::new(workers.max(1))),
        }))
    }

    pub fn get(&self, id: &str) -> Result<JobRecord, ApiError> {
        self.records
            .lock()
            .expect("job lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("job", id))
    }

    fn job_dir(&self, id: &str) -> PathBuf {
        self.dir.join(id)
    }

    fn persist(&self, record: &JobRecord) {
        let path = self.job_dir(&record.id).join(RECORD_FILE);
        if let Err(e) = std::fs::write(&path, serde_json::to_string_pretty(record).expect("json")) {
            eprintln!("cannot persist {}: {e}", path.display());
        }
    }

    /// Apply `edit` unless it would move the status backwards or out of a
    /// terminal state.
    fn modify(&self, id: &str, edit: impl FnOnce(&mut JobRecord)) {
        let mut records = self.records.lock().expect("job lock");
        let Some(record) = records.get_mut(id) else { return };
        let mut next = record.clone();
        edit(&mut next);
        let forward = next.status >= record.status && !(record.status.is_terminal() && next.status != record.status);
        if forward {
            *record = next;
            self.persist(record);
        }
    }

    /// Queue `work`; returns the job id at once. Must be called inside a
    /// Tokio runtime.
    pub fn submit(self: &Arc<Self>, kind: JobKind, work: JobWork) -> Result<String, ApiError> {
        let id = format!("job-{}", self.next.fetch_add(1, Ordering::SeqCst));
        let dir = self.job_dir(&id);
        std::fs::create_dir_all(&dir)?;
        let record = JobRecord {
            version: SCHEMA_VERSION,
            id: id.clone(),
            kind,
            status: JobStatus::Queued,
            progress: 0.0,
            result: Some(dir.display().to_string()),
            summary: None,
            error: None,
        };
        self.persist(&record);
        self.records.lock().expect("job lock").insert(id.clone(), record);

        let registry = Arc::clone(self);
        let permits = Arc::clone(&self.permits);
        let job = id.clone();
        tokio::spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore never closes");
            registry.modify(&job, |r| r.status = JobStatus::Running);
            let ctx = JobContext {
                registry: Arc::clone(&registry),
                id: job.clone(),
                dir,
            };
            let outcome = tokio::task::spawn_blocking(move || work(&ctx))
                .await
                .unwrap_or_else(|e| Err(ApiError::internal(format!("job panicked: {e}"))));
            registry.modify(&job, |r| match outcome {
                Ok(summary) => {
                    r.status = JobStatus::Done;
                    r.progress = 1.0;
                    r.summary = Some(summary);
                }
                Err(e) => {
                    r.status = JobStatus::Failed;
                    r.error = Some(serde_json::to_value(&e).expect("json"));
                }
            });
        });
        Ok(id)
    }

    /// Frames `from..from+limit` of a simulate job.
    pub fn frames(&self, id: &str, from: usize, limit: usize) -> Result<FramePage, ApiError> {
        let record = self.get(id)?;
        if record.kind != JobKind::Simulate {
            return Err(ApiError::bad_input("NotASimulation", "only simulate jobs have frames").on(format!("job:{id}")));
        }
        let path = self.job_dir(id).join(FRAMES_FILE);
        let text = if record.status == JobStatus::Done {
            std::fs::read_to_string(path)?
        } else {
            String::new()
        };
        let lines: Vec<&str> = text.lines().collect();
        let start = from.min(lines.len());
        let end = start.saturating_add(limit).min(lines.len());
        let frames = lines[start..end]
            .iter()
            .map(|l| serde_json::from_str(l).map_err(|e| ApiError::internal(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(FramePage {
            version: SCHEMA_VERSION,
            from: start,
            next: end,
            total: lines.len(),
            done: record.status.is_terminal(),
            frames,
        })
    }
}
