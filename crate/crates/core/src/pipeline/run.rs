//! Run directories, their manifest and the single-writer lock.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";

/// Paths inside `runs/<run-id>/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn id(&self) -> String {
        self.root
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn lock(&self) -> PathBuf {
        self.root.join(LOCK_FILE)
    }

    pub fn keywords(&self) -> PathBuf {
        self.root.join("keywords.tsv")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn backend(&self) -> PathBuf {
        self.root.join("backend")
    }

    pub fn base_backend(&self) -> PathBuf {
        self.backend().join("base")
    }

    pub fn classifiers(&self) -> PathBuf {
        self.root.join("classifiers")
    }

    pub fn rankings(&self) -> PathBuf {
        self.root.join("rankings")
    }

    pub fn ranking(&self) -> PathBuf {
        self.rankings().join("ranking.tsv")
    }

    pub fn decisions(&self) -> PathBuf {
        self.rankings().join("decisions.jsonl")
    }

    /// Top kept contexts per candidate, for review.
    pub fn contexts(&self) -> PathBuf {
        self.rankings().join("contexts.jsonl")
    }

    pub fn distributions_dir(&self) -> PathBuf {
        self.root.join("distributions")
    }

    pub fn distributions(&self) -> PathBuf {
        self.distributions_dir().join("distributions.jsonl")
    }

    pub fn identify_errors(&self) -> PathBuf {
        self.distributions_dir().join("errors.jsonl")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn review(&self) -> PathBuf {
        self.root.join("review")
    }

    pub fn is_locked(&self) -> bool {
        self.lock().exists()
    }

    pub fn read_manifest(&self) -> Result<RunManifest> {
        let path = self.manifest();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn create_dirs(&self) -> Result<()> {
        for d in [
            self.root.clone(),
            self.backend(),
            self.classifiers(),
            self.rankings(),
            self.distributions_dir(),
            self.reports(),
        ] {
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(())
    }
}

/// Held while a command writes into a run directory; dropping releases it.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run: &RunDir) -> Result<Self> {
        fs::create_dir_all(run.root()).map_err(|e| Error::io(run.root(), e))?;
        let path = run.lock();
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::RunLocked(run.root().to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Running,
    Complete,
    Failed,
}

/// One status change of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub stage: String,
    pub status: StageStatus,
    pub at: String,
    /// Run-relative artifact paths, present on completion.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

/// Config snapshot plus an append-only log of stage events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_at: String,
    pub config: RunConfig,
    pub events: Vec<StageEvent>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        RunManifest {
            run_id: config.run_id.clone(),
            created_at: now(),
            config: config.clone(),
            events: Vec::new(),
        }
    }

    /// Latest status of `stage`.
    pub fn stage_status(&self, stage: &str) -> Option<StageStatus> {
        self.events.iter().rev().find(|e| e.stage == stage).map(|e| e.status)
    }

    /// Latest event per stage, in first-seen order.
    pub fn stages(&self) -> Vec<&StageEvent> {
        let mut order: Vec<&str> = Vec::new();
        for e in &self.events {
            if !order.contains(&e.stage.as_str()) {
                order.push(&e.stage);
            }
        }
        order
            .into_iter()
            .filter_map(|s| self.events.iter().rev().find(|e| e.stage == s))
            .collect()
    }

    pub fn artifact(&self, stage: &str, name: &str) -> Option<&str> {
        self.events
            .iter()
            .rev()
            .find(|e| e.stage == stage && e.status == StageStatus::Complete)
            .and_then(|e| e.artifacts.get(name))
            .map(String::as_str)
    }

    pub fn is_failed(&self) -> bool {
        self.stages().iter().any(|e| e.status == StageStatus::Failed)
    }

    pub fn is_running(&self) -> bool {
        self.stages().iter().any(|e| e.status == StageStatus::Running)
    }

    pub fn save(&self, run: &RunDir) -> Result<()> {
        let path = run.manifest();
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

/// Appends stage events to a manifest and persists after each one.
pub struct Recorder<'a> {
    pub run: &'a RunDir,
    pub manifest: RunManifest,
}

impl<'a> Recorder<'a> {
    pub fn new(run: &'a RunDir, manifest: RunManifest) -> Result<Self> {
        manifest.save(run)?;
        Ok(Recorder { run, manifest })
    }

    fn push(&mut self, event: StageEvent) -> Result<()> {
        self.manifest.events.push(event);
        self.manifest.save(self.run)
    }

    /// Runs `body` as stage `name`. On success every artifact it returns must
    /// exist before the stage is marked complete; on failure the error is
    /// recorded and passed on.
    pub fn stage<T>(
        &mut self,
        name: &str,
        body: impl FnOnce(&RunDir) -> Result<(T, Vec<(&'static str, PathBuf)>, serde_json::Value)>,
    ) -> Result<T> {
        self.push(StageEvent {
            stage: name.into(),
            status: StageStatus::Running,
            at: now(),
            artifacts: BTreeMap::new(),
            error: None,
            details: serde_json::Value::Null,
        })?;
        let result = body(self.run).and_then(|(value, artifacts, details)| {
            let mut rel = BTreeMap::new();
            for (key, path) in artifacts {
                if !path.exists() {
                    return Err(Error::InvalidInput(format!(
                        "stage {name} reported missing artifact {}",
                        path.display()
                    )));
                }
                let shown = path.strip_prefix(self.run.root()).unwrap_or(&path);
                rel.insert(key.to_string(), shown.display().to_string());
            }
            Ok((value, rel, details))
        });
        match result {
            Ok((value, artifacts, details)) => {
                self.push(StageEvent {
                    stage: name.into(),
                    status: StageStatus::Complete,
                    at: now(),
                    artifacts,
                    error: None,
                    details,
                })?;
                Ok(value)
            }
            Err(err) => {
                self.push(StageEvent {
                    stage: name.into(),
                    status: StageStatus::Failed,
                    at: now(),
                    artifacts: BTreeMap::new(),
                    error: Some(err.to_string()),
                    details: serde_json::Value::Null,
                })?;
                Err(err)
            }
        }
    }
}

/// Summary row for run listings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub created_at: String,
    pub backend: String,
    pub t: usize,
    pub keywords: String,
    pub locked: bool,
    pub stages: BTreeMap<String, StageStatus>,
}

/// All run directories under `runs_dir` that hold a manifest, by id.
pub fn list_runs(runs_dir: &Path) -> Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    let entries = match fs::read_dir(runs_dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(runs_dir, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(runs_dir, e))?;
        let run = RunDir::new(entry.path());
        if !run.manifest().is_file() {
            continue;
        }
        let Ok(m) = run.read_manifest() else { continue };
        out.push(RunSummary {
            run_id: m.run_id.clone(),
            created_at: m.created_at.clone(),
            backend: m.config.backend.to_string(),
            t: m.config.t,
            keywords: m.config.keywords.display().to_string(),
            locked: run.is_locked(),
            stages: m.stages().into_iter().map(|e| (e.stage.clone(), e.status)).collect(),
        });
    }
    out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path().join("r1"));
        let lock = RunLock::acquire(&run).unwrap();
        assert!(matches!(RunLock::acquire(&run), Err(Error::RunLocked(_))));
        drop(lock);
        assert!(!run.is_locked());
        RunLock::acquire(&run).unwrap();
    }

    #[test]
    fn recorder_appends_and_checks_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path().join("r1"));
        run.create_dirs().unwrap();
        let cfg = RunConfig {
            run_id: "r1".into(),
            ..RunConfig::default()
        };
        let mut rec = Recorder::new(&run, RunManifest::new(&cfg)).unwrap();
        rec.stage("good", |r| {
            let p = r.ranking();
            fs::write(&p, "x").unwrap();
            Ok(((), vec![("ranking", p)], serde_json::Value::Null))
        })
        .unwrap();
        let err = rec.stage("bad", |r| Ok(((), vec![("missing", r.decisions())], serde_json::Value::Null)));
        assert!(err.is_err());
        let m = run.read_manifest().unwrap();
        assert_eq!(m.events.len(), 4);
        assert_eq!(m.stage_status("good"), Some(StageStatus::Complete));
        assert_eq!(m.stage_status("bad"), Some(StageStatus::Failed));
        assert_eq!(m.artifact("good", "ranking"), Some("rankings/ranking.tsv"));
        let runs = list_runs(dir.path()).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].stages["bad"], StageStatus::Failed);
    }
}
