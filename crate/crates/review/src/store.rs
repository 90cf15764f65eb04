//! File-backed review state: an append-only verdict ledger per run, a status
//! snapshot derived from it, and versioned promoted keyword lists.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use euphemism::corpus::{load_keywords, write_keywords, TargetKeyword, MASK_TOKEN};
use euphemism::detection::{read_ranking, CandidateRanking};
use euphemism::identification::{read_distributions, EuphemismDistribution};
use euphemism::pipeline::{
    cmd_detect, is_safe_run_id, list_runs, read_evidence, CandidateEvidence, RunDir, RunManifest, RunSummary,
    StageStatus,
};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const STATUS_FILE: &str = "status.json";
pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_EXAMPLE_CONTEXTS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown run {0:?}")]
    UnknownRun(String),
    #[error("{0:?} is not in the ranking of this run")]
    UnknownWord(String),
    #[error("cannot move {word:?} from {from} to {to}")]
    InvalidTransition {
        word: String,
        from: ReviewStatus,
        to: ReviewStatus,
    },
    #[error("{0}")]
    Validation(String),
    #[error("nothing to promote: no confirmed words beyond the current keyword list")]
    NothingToPromote,
    #[error("no promoted keyword list for run {0:?}; promote first")]
    NoPromotedList(String),
    #[error("a rerun of {0:?} is still in progress")]
    Busy(String),
    #[error(transparent)]
    Core(#[from] euphemism::Error),
}

pub type Result<T, E = ReviewError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Pending,
    Confirmed,
    Rejected,
    Unsure,
}

impl std::fmt::Display for ReviewStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReviewStatus::Pending => "pending",
            ReviewStatus::Confirmed => "confirmed",
            ReviewStatus::Rejected => "rejected",
            ReviewStatus::Unsure => "unsure",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Confirmed,
    Rejected,
    Unsure,
}

impl Verdict {
    pub fn status(self) -> ReviewStatus {
        match self {
            Verdict::Confirmed => ReviewStatus::Confirmed,
            Verdict::Rejected => ReviewStatus::Rejected,
            Verdict::Unsure => ReviewStatus::Unsure,
        }
    }
}

/// pending -> any verdict; unsure -> confirmed or rejected.
pub fn transition_allowed(from: ReviewStatus, to: ReviewStatus) -> bool {
    matches!(
        (from, to),
        (ReviewStatus::Pending, ReviewStatus::Confirmed | ReviewStatus::Rejected | ReviewStatus::Unsure)
            | (ReviewStatus::Unsure, ReviewStatus::Confirmed | ReviewStatus::Rejected)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub timestamp: String,
    pub word: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapped_keyword: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemState {
    pub status: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapped_keyword: Option<String>,
}

/// Statuses after applying `entries` in order. Entries that would be an
/// invalid transition are ignored.
pub fn replay(entries: &[LedgerEntry]) -> BTreeMap<String, ItemState> {
    let mut out: BTreeMap<String, ItemState> = BTreeMap::new();
    for e in entries {
        let from = out.get(&e.word).map_or(ReviewStatus::Pending, |s| s.status);
        let to = e.verdict.status();
        if !transition_allowed(from, to) {
            warn!(word = %e.word, %from, %to, "ignoring invalid ledger transition");
            continue;
        }
        out.insert(
            e.word.clone(),
            ItemState {
                status: to,
                mapped_keyword: e.mapped_keyword.clone(),
            },
        );
    }
    out
}

/// A kept context with the candidate written into the slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleContext {
    pub masked_id: String,
    pub text: String,
    /// Token index of the candidate in `text` split on spaces.
    pub highlight: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub word: String,
    pub rank: usize,
    pub weight: f64,
    pub support: usize,
    pub contexts: Vec<ExampleContext>,
    pub completions: Vec<(String, usize)>,
    pub distribution: Option<EuphemismDistribution>,
    pub status: ReviewStatus,
    pub mapped_keyword: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePage {
    pub run_id: String,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub items: Vec<ReviewItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promotion {
    pub run_id: String,
    pub version: usize,
    pub keywords_file: PathBuf,
    pub added: Vec<String>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RerunState {
    Running { run_id: String },
    Complete { run_id: String },
    Failed { run_id: String, error: String },
}

impl RerunState {
    pub fn run_id(&self) -> &str {
        match self {
            RerunState::Running { run_id } | RerunState::Complete { run_id } | RerunState::Failed { run_id, .. } => {
                run_id
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub locked: bool,
    pub manifest: RunManifest,
    pub review: BTreeMap<ReviewStatus, usize>,
    pub latest_promotion: Option<PathBuf>,
    pub reruns: Vec<RerunState>,
}

impl PartialOrd for ReviewStatus {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ReviewStatus {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Review state for every run under one runs directory.
#[derive(Debug, Clone)]
pub struct ReviewStore {
    runs_dir: PathBuf,
    /// Serializes ledger appends and promotions.
    writer: Arc<Mutex<()>>,
    reruns: Arc<Mutex<HashMap<String, Vec<RerunState>>>>,
}

impl ReviewStore {
    pub fn new(runs_dir: impl Into<PathBuf>) -> Self {
        ReviewStore {
            runs_dir: runs_dir.into(),
            writer: Arc::new(Mutex::new(())),
            reruns: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn runs_dir(&self) -> &Path {
        &self.runs_dir
    }

    pub fn list_runs(&self) -> Result<Vec<RunSummary>> {
        Ok(list_runs(&self.runs_dir)?)
    }

    fn run(&self, run_id: &str) -> Result<RunDir> {
        if !is_safe_run_id(run_id) {
            return Err(ReviewError::UnknownRun(run_id.to_string()));
        }
        let run = RunDir::new(self.runs_dir.join(run_id));
        if !run.manifest().is_file() {
            return Err(ReviewError::UnknownRun(run_id.to_string()));
        }
        Ok(run)
    }

    fn ranking(&self, run: &RunDir) -> Result<CandidateRanking> {
        let m = run.read_manifest()?;
        if m.stage_status("detect") != Some(StageStatus::Complete) {
            return Err(ReviewError::Validation(format!("run {} has no completed detection", run.id())));
        }
        Ok(read_ranking(&run.ranking())?)
    }

    fn ledger_path(run: &RunDir) -> PathBuf {
        run.review().join(LEDGER_FILE)
    }

    pub fn ledger(&self, run_id: &str) -> Result<Vec<LedgerEntry>> {
        let run = self.run(run_id)?;
        read_ledger(&Self::ledger_path(&run))
    }

    /// Statuses replayed from the ledger. Rewrites the snapshot if it is
    /// missing or disagrees (for example after a crash between the two writes).
    pub fn statuses(&self, run_id: &str) -> Result<BTreeMap<String, ItemState>> {
        let run = self.run(run_id)?;
        let states = replay(&read_ledger(&Self::ledger_path(&run))?);
        let snap = run.review().join(STATUS_FILE);
        let stored: Option<BTreeMap<String, ItemState>> =
            fs::read_to_string(&snap).ok().and_then(|t| serde_json::from_str(&t).ok());
        if stored.as_ref() != Some(&states) && (!states.is_empty() || snap.exists()) {
            let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
            write_snapshot(&run, &states)?;
        }
        Ok(states)
    }

    fn evidence(run: &RunDir) -> HashMap<String, CandidateEvidence> {
        read_evidence(&run.contexts())
            .unwrap_or_default()
            .into_iter()
            .map(|e| (e.word.clone(), e))
            .collect()
    }

    fn distributions(run: &RunDir) -> HashMap<String, EuphemismDistribution> {
        read_distributions(&run.distributions())
            .unwrap_or_default()
            .into_iter()
            .map(|d| (d.word.clone(), d))
            .collect()
    }

    fn item(
        ranking: &CandidateRanking,
        idx: usize,
        evidence: &HashMap<String, CandidateEvidence>,
        dists: &HashMap<String, EuphemismDistribution>,
        states: &BTreeMap<String, ItemState>,
    ) -> ReviewItem {
        let e = &ranking.entries[idx];
        let ev = evidence.get(&e.word);
        let state = states.get(&e.word);
        ReviewItem {
            word: e.word.clone(),
            rank: idx + 1,
            weight: e.weight,
            support: e.support,
            contexts: ev
                .map(|ev| {
                    ev.contexts
                        .iter()
                        .take(MAX_EXAMPLE_CONTEXTS)
                        .map(|c| highlight(&c.masked_id, &c.text, &e.word, c.score))
                        .collect()
                })
                .unwrap_or_default(),
            completions: ev.map(|ev| ev.completions.clone()).unwrap_or_default(),
            distribution: dists.get(&e.word).cloned(),
            status: state.map_or(ReviewStatus::Pending, |s| s.status),
            mapped_keyword: state.and_then(|s| s.mapped_keyword.clone()),
        }
    }

    /// 1-based page of the ranking; pages past the end are empty.
    pub fn list_candidates(&self, run_id: &str, page: usize, page_size: usize) -> Result<CandidatePage> {
        if page == 0 || page_size == 0 {
            return Err(ReviewError::Validation("page and page_size must be >= 1".into()));
        }
        let run = self.run(run_id)?;
        let ranking = self.ranking(&run)?;
        let states = self.statuses(run_id)?;
        let evidence = Self::evidence(&run);
        let dists = Self::distributions(&run);
        let start = (page - 1).saturating_mul(page_size);
        let end = start.saturating_add(page_size).min(ranking.entries.len());
        let items = (start..end)
            .map(|i| Self::item(&ranking, i, &evidence, &dists, &states))
            .collect();
        Ok(CandidatePage {
            run_id: run_id.to_string(),
            page,
            page_size,
            total: ranking.entries.len(),
            items,
        })
    }

    pub fn get_candidate(&self, run_id: &str, word: &str) -> Result<ReviewItem> {
        let run = self.run(run_id)?;
        let ranking = self.ranking(&run)?;
        let idx = ranking
            .position(word)
            .ok_or_else(|| ReviewError::UnknownWord(word.to_string()))?;
        let states = self.statuses(run_id)?;
        Ok(Self::item(
            &ranking,
            idx,
            &Self::evidence(&run),
            &Self::distributions(&run),
            &states,
        ))
    }

    fn run_keywords(run: &RunDir) -> Result<Vec<TargetKeyword>> {
        let path = if run.keywords().is_file() {
            run.keywords()
        } else {
            run.read_manifest()?.config.keywords
        };
        Ok(load_keywords(path)?)
    }

    pub fn submit_verdict(
        &self,
        run_id: &str,
        word: &str,
        verdict: Verdict,
        mapped_keyword: Option<&str>,
        reviewer: Option<&str>,
    ) -> Result<ReviewItem> {
        let run = self.run(run_id)?;
        let ranking = self.ranking(&run)?;
        if ranking.position(word).is_none() {
            return Err(ReviewError::UnknownWord(word.to_string()));
        }
        let mapped = mapped_keyword.map(str::trim).filter(|s| !s.is_empty());
        if verdict == Verdict::Confirmed {
            let Some(k) = mapped else {
                return Err(ReviewError::Validation("confirmed verdicts need a mapped_keyword".into()));
            };
            if !Self::run_keywords(&run)?.iter().any(|x| x.surface == k) {
                return Err(ReviewError::Validation(format!("{k:?} is not a keyword of this run")));
            }
        }
        {
            let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
            let path = Self::ledger_path(&run);
            let mut entries = read_ledger(&path)?;
            let states = replay(&entries);
            let from = states.get(word).map_or(ReviewStatus::Pending, |s| s.status);
            let to = verdict.status();
            if !transition_allowed(from, to) {
                return Err(ReviewError::InvalidTransition {
                    word: word.to_string(),
                    from,
                    to,
                });
            }
            let entry = LedgerEntry {
                timestamp: now(),
                word: word.to_string(),
                verdict,
                mapped_keyword: mapped.map(str::to_string),
                reviewer: reviewer.map(str::to_string),
            };
            append_ledger(&path, &entry)?;
            entries.push(entry);
            write_snapshot(&run, &replay(&entries))?;
        }
        self.get_candidate(run_id, word)
    }

    fn promoted_versions(run: &RunDir) -> Vec<(usize, PathBuf)> {
        let mut out: Vec<(usize, PathBuf)> = fs::read_dir(run.review())
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                let v = name.strip_prefix("keywords.v")?.strip_suffix(".tsv")?.parse().ok()?;
                Some((v, e.path()))
            })
            .collect();
        out.sort();
        out
    }

    pub fn latest_promotion(&self, run_id: &str) -> Result<Option<PathBuf>> {
        let run = self.run(run_id)?;
        Ok(Self::promoted_versions(&run).pop().map(|(_, p)| p))
    }

    /// Writes `review/keywords.v<N>.tsv`: the latest list plus every
    /// confirmed word not already in it, with the mapped keyword's category.
    pub fn promote_confirmed(&self, run_id: &str) -> Result<Promotion> {
        let run = self.run(run_id)?;
        let states = self.statuses(run_id)?;
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let run_keywords = Self::run_keywords(&run)?;
        let versions = Self::promoted_versions(&run);
        let mut list = match versions.last() {
            Some((_, p)) => load_keywords(p)?,
            None => run_keywords.clone(),
        };
        let mut added = Vec::new();
        for (word, state) in &states {
            if state.status != ReviewStatus::Confirmed {
                continue;
            }
            let Some(mapped) = &state.mapped_keyword else { continue };
            if list.iter().any(|k| &k.surface == word) {
                continue;
            }
            let category = run_keywords
                .iter()
                .chain(list.iter())
                .find(|k| &k.surface == mapped)
                .map(|k| k.category.clone())
                .ok_or_else(|| ReviewError::Validation(format!("mapped keyword {mapped:?} is unknown")))?;
            list.push(TargetKeyword::new(word, &category)?);
            added.push(word.clone());
        }
        if added.is_empty() {
            return Err(ReviewError::NothingToPromote);
        }
        let version = versions.last().map_or(1, |(v, _)| v + 1);
        let path = run.review().join(format!("keywords.v{version}.tsv"));
        write_keywords(&path, &list)?;
        info!(run = run_id, version, added = added.len(), "promoted confirmed euphemisms");
        Ok(Promotion {
            run_id: run_id.to_string(),
            version,
            keywords_file: path,
            added,
            total: list.len(),
        })
    }

    /// Claims the rerun slot of `run_id` and prepares the new run's config.
    /// The caller runs [`ReviewStore::execute_rerun`] (typically on a
    /// blocking thread).
    pub fn prepare_rerun(
        &self,
        run_id: &str,
        overrides: &BTreeMap<String, String>,
    ) -> Result<euphemism::pipeline::RunConfig> {
        let run = self.run(run_id)?;
        let keywords = Self::promoted_versions(&run)
            .pop()
            .map(|(_, p)| p)
            .ok_or_else(|| ReviewError::NoPromotedList(run_id.to_string()))?;
        let mut config = run.read_manifest()?.config;
        config.runs_dir = self.runs_dir.clone();
        config.keywords = fs::canonicalize(&keywords).unwrap_or(keywords);
        config.run_id = String::new();
        for (k, v) in overrides {
            if matches!(k.replace('-', "_").as_str(), "keywords" | "runs_dir") {
                return Err(ReviewError::Validation(format!("{k} cannot be overridden in a rerun")));
            }
            config.set(k, v)?;
        }
        let mut reruns = self.reruns.lock().unwrap_or_else(|p| p.into_inner());
        let history = reruns.entry(run_id.to_string()).or_default();
        if history.iter().any(|s| matches!(s, RerunState::Running { .. })) {
            return Err(ReviewError::Busy(run_id.to_string()));
        }
        if config.run_id.is_empty() {
            config.run_id = (history.len() + 1..)
                .map(|n| format!("{run_id}-r{n}"))
                .find(|id| !self.runs_dir.join(id).exists())
                .expect("unbounded search");
        } else if self.runs_dir.join(&config.run_id).exists() {
            return Err(ReviewError::Validation(format!("run {:?} already exists", config.run_id)));
        }
        config.validate()?;
        history.push(RerunState::Running {
            run_id: config.run_id.clone(),
        });
        Ok(config)
    }

    /// Runs detection for a prepared rerun and records the outcome.
    pub fn execute_rerun(&self, parent: &str, config: &euphemism::pipeline::RunConfig) -> RerunState {
        let outcome = match cmd_detect(config) {
            Ok(_) => RerunState::Complete {
                run_id: config.run_id.clone(),
            },
            Err(e) => {
                warn!(run = %config.run_id, error = %e, "rerun failed");
                RerunState::Failed {
                    run_id: config.run_id.clone(),
                    error: e.to_string(),
                }
            }
        };
        let mut reruns = self.reruns.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(slot) = reruns
            .entry(parent.to_string())
            .or_default()
            .iter_mut()
            .find(|s| s.run_id() == config.run_id)
        {
            *slot = outcome.clone();
        }
        outcome
    }

    pub fn status(&self, run_id: &str) -> Result<RunStatus> {
        let run = self.run(run_id)?;
        let manifest = run.read_manifest()?;
        let mut review: BTreeMap<ReviewStatus, usize> = BTreeMap::new();
        if run.ranking().is_file() {
            let ranking = read_ranking(&run.ranking())?;
            let states = self.statuses(run_id)?;
            for e in &ranking.entries {
                *review
                    .entry(states.get(&e.word).map_or(ReviewStatus::Pending, |s| s.status))
                    .or_insert(0) += 1;
            }
        }
        let reruns = self
            .reruns
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(run_id)
            .cloned()
            .unwrap_or_default();
        Ok(RunStatus {
            run_id: run_id.to_string(),
            locked: run.is_locked(),
            manifest,
            review,
            latest_promotion: Self::promoted_versions(&run).pop().map(|(_, p)| p),
            reruns,
        })
    }
}

fn highlight(masked_id: &str, masked_text: &str, word: &str, score: f64) -> ExampleContext {
    let mut tokens: Vec<&str> = masked_text.split(' ').collect();
    let pos = tokens.iter().position(|t| *t == MASK_TOKEN).unwrap_or(0);
    if let Some(t) = tokens.get_mut(pos) {
        *t = word;
    }
    ExampleContext {
        masked_id: masked_id.to_string(),
        text: tokens.join(" "),
        highlight: pos,
        score,
    }
}

fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str(line) {
            Ok(e) => out.push(e),
            // A torn final line from a crash mid-append is skipped.
            Err(err) => warn!(path = %path.display(), %err, "skipping unreadable ledger line"),
        }
    }
    Ok(out)
}

fn io_err(path: &Path, e: std::io::Error) -> ReviewError {
    ReviewError::Core(euphemism::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn append_ledger(path: &Path, entry: &LedgerEntry) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut line = serde_json::to_vec(entry).map_err(euphemism::Error::from)?;
    line.push(b'\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    f.write_all(&line).map_err(|e| io_err(path, e))?;
    f.sync_data().map_err(|e| io_err(path, e))
}

fn write_snapshot(run: &RunDir, states: &BTreeMap<String, ItemState>) -> Result<()> {
    let dir = run.review();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let path = dir.join(STATUS_FILE);
    let tmp = dir.join("status.json.tmp");
    let text = serde_json::to_string_pretty(states).map_err(euphemism::Error::from)?;
    fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(word: &str, verdict: Verdict) -> LedgerEntry {
        LedgerEntry {
            timestamp: String::new(),
            word: word.into(),
            verdict,
            mapped_keyword: None,
            reviewer: None,
        }
    }

    #[test]
    fn transitions() {
        use ReviewStatus::*;
        assert!(transition_allowed(Pending, Unsure));
        assert!(transition_allowed(Unsure, Confirmed));
        assert!(!transition_allowed(Rejected, Confirmed));
        assert!(!transition_allowed(Unsure, Unsure));
        assert!(!transition_allowed(Confirmed, Rejected));
    }

    #[test]
    fn replay_skips_invalid_steps() {
        let s = replay(&[
            entry("a", Verdict::Unsure),
            entry("a", Verdict::Confirmed),
            entry("b", Verdict::Rejected),
            entry("b", Verdict::Confirmed),
        ]);
        assert_eq!(s["a"].status, ReviewStatus::Confirmed);
        assert_eq!(s["b"].status, ReviewStatus::Rejected);
    }

    #[test]
    fn highlight_fills_slot() {
        let c = highlight("s1@2+1", "we smoked [MASK] today", "weed", 0.5);
        assert_eq!(c.text, "we smoked weed today");
        assert_eq!(c.highlight, 2);
    }
}
