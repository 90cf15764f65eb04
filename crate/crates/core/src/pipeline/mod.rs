//! Run orchestration: configuration, run directories and the detect /
//! identify / evaluate / synth commands.

mod config;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::{info, warn};

use crate::corpus::{load_corpus, load_keywords, write_keywords, Corpus, TargetKeyword};
use crate::detection::{
    bigram_completions, detect_with, read_ranking, top_contexts, write_decisions, write_ranking, CandidateContext,
    DetectParams,
};
use crate::error::{Error, Result};
use crate::evaluation::{detection_report, emit_report, identification_report, load_truth, ReportFormat};
use crate::identification::{
    build_coarse_training_set, build_fine_training_set, identify_many, read_distributions, train_coarse, train_fine,
    write_distributions, ClassifierOptions, CoarseClassifier, EncoderSpec, EuphemismDistribution, FineClassifier,
    IdentifyOptions, COARSE_FILE, FINE_FILE,
};
use crate::mlm::{
    build_count_oracle, fine_tune, BackendHandle, BackendKind, FineTuneParams, CONTEXTUAL_STATE_FILE,
    COUNT_TABLE_FILE,
};
use crate::synth::{generate, SynthConfig, SynthPaths};

pub use config::{is_safe_run_id, parse_config_pairs, GenerationModel, RunConfig, CONFIG_KEYS};
pub use run::{
    list_runs, Recorder, RunDir, RunLock, RunManifest, RunSummary, StageEvent, StageStatus, LOCK_FILE, MANIFEST_FILE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_STAGE: i32 = 2;

/// Process exit code for a command error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_STAGE,
    }
}

/// Review material for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvidence {
    pub word: String,
    pub contexts: Vec<CandidateContext>,
    pub completions: Vec<(String, usize)>,
}

pub fn read_evidence(path: &Path) -> Result<Vec<CandidateEvidence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn open_run(config: &RunConfig) -> Result<(RunDir, RunLock, RunManifest)> {
    let run = RunDir::new(config.run_dir());
    let lock = RunLock::acquire(&run)?;
    run.create_dirs()?;
    let manifest = if run.manifest().is_file() {
        run.read_manifest()?
    } else {
        fs::write(run.config(), config.to_flat()).map_err(|e| Error::io(run.config(), e))?;
        RunManifest::new(config)
    };
    Ok((run, lock, manifest))
}

fn ingest(rec: &mut Recorder<'_>, config: &RunConfig) -> Result<(Corpus, Vec<TargetKeyword>)> {
    rec.stage("ingest", |run| {
        let corpus = load_corpus(&config.corpus, config.corpus_format())?;
        let keywords = load_keywords(&config.keywords)?;
        write_keywords(run.keywords(), &keywords)?;
        let details = json!({
            "sentences": corpus.len(),
            "vocabulary": corpus.vocabulary().len(),
            "keywords": keywords.len(),
        });
        Ok(((corpus, keywords), vec![("keywords", run.keywords())], details))
    })
}

/// Loads cached contextual state from `dir` or trains it there.
fn contextual_backend(corpus: &Corpus, config: &RunConfig, params: &FineTuneParams, dir: &Path) -> Result<BackendHandle> {
    if dir.join(CONTEXTUAL_STATE_FILE).is_file() {
        info!(dir = %dir.display(), "reusing cached contextual state");
        return BackendHandle::load(dir);
    }
    fine_tune(corpus, &config.base_model_ref()?, params, Some(dir))
}

/// Filter backend and generation backend.
fn backends(rec: &mut Recorder<'_>, corpus: &Corpus, config: &RunConfig) -> Result<(BackendHandle, BackendHandle)> {
    rec.stage("backend", |run| {
        let dir = run.backend();
        match config.backend {
            BackendKind::CountOracle => {
                let oracle = build_count_oracle(corpus, config.oracle_window, config.smoothing)?;
                let handle = BackendHandle::new(oracle).persist_to(&dir)?;
                let details = json!({"kind": "count-oracle", "window": config.oracle_window, "smoothing": config.smoothing});
                Ok(((handle.clone(), handle), vec![("state", dir.join(COUNT_TABLE_FILE))], details))
            }
            BackendKind::ContextualMlm => {
                let params = config.fine_tune_params();
                let tuned = contextual_backend(corpus, config, &params, &dir)?;
                let mut artifacts = vec![("state", dir.join(CONTEXTUAL_STATE_FILE))];
                let generation = match config.generation {
                    GenerationModel::FineTuned => tuned.clone(),
                    GenerationModel::Base => {
                        let base_dir = run.base_backend();
                        let base = contextual_backend(corpus, config, &FineTuneParams { epochs: 0, ..params }, &base_dir)?;
                        artifacts.push(("base_state", base_dir.join(CONTEXTUAL_STATE_FILE)));
                        base
                    }
                };
                let details = json!({
                    "kind": "contextual-mlm",
                    "base_model": config.base_model,
                    "epochs": config.epochs,
                    "generation": config.generation,
                    "vocabulary": tuned.vocabulary().len(),
                });
                Ok(((tuned, generation), artifacts, details))
            }
        }
    })
}

/// Ingest, backend, detect. Persists the ranking, filter decisions and
/// review contexts under the run directory.
pub fn cmd_detect(config: &RunConfig) -> Result<RunManifest> {
    let mut config = config.clone();
    config.ensure_run_id();
    config.validate()?;
    let (run, _lock, manifest) = open_run(&config)?;
    let mut rec = Recorder::new(&run, manifest)?;
    let (corpus, keywords) = ingest(&mut rec, &config)?;
    let (filter, generation) = backends(&mut rec, &corpus, &config)?;
    rec.stage("detect", |run| {
        let params = DetectParams {
            t: config.t,
            stop_top_df: config.stop_top_df,
        };
        let d = detect_with(&corpus, &keywords, &filter, &generation, &params)?;
        write_ranking(&run.ranking(), &d.ranking)?;
        write_decisions(&run.decisions(), &d.filter.decisions)?;
        let evidence: Vec<CandidateEvidence> = top_contexts(
            &d.ranking,
            &d.filter.kept,
            &generation,
            config.review_words,
            config.review_contexts,
        )
        .into_iter()
        .map(|c| CandidateEvidence {
            completions: bigram_completions(&corpus, &c.word, 5),
            word: c.word,
            contexts: c.contexts,
        })
        .collect();
        write_jsonl(&run.contexts(), &evidence)?;
        read_ranking(&run.ranking())?;
        let occurrences: serde_json::Map<String, serde_json::Value> = d
            .extraction
            .occurrences
            .iter()
            .map(|(k, n)| (k.surface.clone(), json!(n)))
            .collect();
        let details = json!({
            "t": config.t,
            "masked": d.extraction.masked.len(),
            "kept": d.filter.kept.len(),
            "candidates": d.ranking.entries.len(),
            "occurrences": occurrences,
        });
        Ok((
            (),
            vec![
                ("ranking", run.ranking()),
                ("decisions", run.decisions()),
                ("contexts", run.contexts()),
            ],
            details,
        ))
    })?;
    Ok(rec.manifest)
}

/// Words to identify: an explicit list or the top `k` detected candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WordSelection {
    Words(Vec<String>),
    FromDetection(usize),
}

impl FromStr for WordSelection {
    type Err = Error;

    /// `from-detection:<k>` or a comma-separated word list.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(k) = s.trim().strip_prefix("from-detection:") {
            let k: usize = k
                .parse()
                .map_err(|_| Error::Config(format!("bad word selection {s:?}")))?;
            if k == 0 {
                return Err(Error::Config("from-detection needs k >= 1".into()));
            }
            return Ok(WordSelection::FromDetection(k));
        }
        let words: Vec<String> = s
            .split(',')
            .map(|w| w.trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(Error::Config("empty word list".into()));
        }
        Ok(WordSelection::Words(words))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordError {
    pub word: String,
    pub error: String,
}

fn classifier_options(config: &RunConfig) -> ClassifierOptions {
    let mut opts = ClassifierOptions::default();
    opts.train.seed = config.seed;
    if let Some(p) = &config.word_vectors {
        opts.encoder = EncoderSpec::WordVectors(p.clone());
    }
    opts
}

/// Trains (or reloads) the coarse and fine classifiers, then writes one
/// distribution per word. Words that fail are recorded and skipped.
pub fn cmd_identify(config: &RunConfig, words: &WordSelection) -> Result<RunManifest> {
    let mut config = config.clone();
    config.ensure_run_id();
    config.validate()?;
    if matches!(words, WordSelection::Words(w) if w.is_empty()) {
        return Err(Error::Config("empty word list".into()));
    }
    let (run, _lock, manifest) = open_run(&config)?;
    let mut rec = Recorder::new(&run, manifest)?;
    let (corpus, keywords) = ingest(&mut rec, &config)?;
    let (coarse, fine) = rec.stage("classifiers", |run| {
        let dir = run.classifiers();
        let artifacts = vec![("coarse", dir.join(COARSE_FILE)), ("fine", dir.join(FINE_FILE))];
        if dir.join(COARSE_FILE).is_file() && dir.join(FINE_FILE).is_file() {
            let coarse = CoarseClassifier::load(&dir)?;
            let fine = FineClassifier::load(&dir)?;
            return Ok(((coarse, fine), artifacts, json!({"cached": true})));
        }
        let opts = classifier_options(&config);
        let fine_set = build_fine_training_set(&corpus, &keywords)?;
        let coarse_set = build_coarse_training_set(&corpus, &keywords, &fine_set, config.seed)?;
        let coarse = train_coarse(&coarse_set.positives, &coarse_set.negatives, &opts)?;
        let fine = train_fine(&fine_set.samples, &opts)?;
        coarse.save(&dir)?;
        fine.save(&dir)?;
        let untrainable: Vec<&str> = fine_set.untrainable().map(|k| k.surface.as_str()).collect();
        let details = json!({
            "positives": coarse_set.positives.len(),
            "negatives": coarse_set.negatives.len(),
            "coarse": coarse.metrics,
            "fine": fine.metrics,
            "untrainable": untrainable,
        });
        Ok(((coarse, fine), artifacts, details))
    })?;
    rec.stage("identify", |run| {
        let list = match words {
            WordSelection::Words(w) => w.clone(),
            WordSelection::FromDetection(k) => {
                if !run.ranking().is_file() {
                    return Err(Error::InvalidInput(format!(
                        "run {} has no detection ranking; run detect first",
                        run.id()
                    )));
                }
                read_ranking(&run.ranking())?.top(*k).iter().map(|c| c.word.clone()).collect()
            }
        };
        if list.is_empty() {
            return Err(Error::InvalidInput("empty word list".into()));
        }
        let opts = IdentifyOptions {
            aggregation: config.aggregation,
            min_context_tokens: config.min_context_tokens,
        };
        let mut dists = Vec::new();
        let mut errors = Vec::new();
        for (word, result) in list.iter().zip(identify_many(&list, &corpus, &coarse, &fine, &opts)) {
            match result {
                Ok(d) => dists.push(d),
                Err(e) => {
                    warn!(word = %word, error = %e, "identification failed");
                    errors.push(WordError {
                        word: word.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        write_distributions(&run.distributions(), &dists)?;
        write_jsonl(&run.identify_errors(), &errors)?;
        let details = json!({"words": list.len(), "identified": dists.len(), "errors": errors});
        Ok((
            (),
            vec![("distributions", run.distributions()), ("errors", run.identify_errors())],
            details,
        ))
    })?;
    Ok(rec.manifest)
}

/// Writes detection and (when present) identification reports in markdown,
/// JSON and CSV. Requires a ground truth file.
pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let truth_path = config
        .truth
        .clone()
        .ok_or_else(|| Error::Config("evaluation needs a ground truth file (--truth)".into()))?;
    if !truth_path.is_file() {
        return Err(Error::Config(format!("ground truth {} does not exist", truth_path.display())));
    }
    if !is_safe_run_id(&config.run_id) {
        return Err(Error::Config(format!("run id {:?} is not filesystem-safe", config.run_id)));
    }
    let run = RunDir::new(config.run_dir());
    if !run.manifest().is_file() {
        return Err(Error::Config(format!("run {} does not exist", run.root().display())));
    }
    let _lock = RunLock::acquire(&run)?;
    let mut rec = Recorder::new(&run, run.read_manifest()?)?;
    rec.stage("evaluate", |run| {
        let kw_path = if run.keywords().is_file() {
            run.keywords()
        } else {
            config.keywords.clone()
        };
        let keywords = load_keywords(&kw_path)?;
        let truth = load_truth(&truth_path, &keywords)?;
        let detection = if run.ranking().is_file() {
            let ranking = read_ranking(&run.ranking())?;
            Some(detection_report(&ranking, &truth, &config.k_values)?)
        } else {
            None
        };
        let dists: Vec<EuphemismDistribution> = if run.distributions().is_file() {
            read_distributions(&run.distributions())?
        } else {
            Vec::new()
        };
        let identification = if dists.iter().any(|d| truth.contains(&d.word)) {
            Some(identification_report(&dists, &truth, &config.identify_k_values)?)
        } else {
            None
        };
        if detection.is_none() && identification.is_none() {
            return Err(Error::InvalidInput(format!("run {} has nothing to evaluate", run.id())));
        }
        for w in detection.iter().flat_map(|d| &d.warnings) {
            warn!("{w}");
        }
        let mut paths = Vec::new();
        for format in [ReportFormat::Markdown, ReportFormat::Json, ReportFormat::Csv] {
            paths.push(emit_report(&run.reports(), detection.as_ref(), identification.as_ref(), format)?);
        }
        let artifacts = vec![
            ("markdown", paths[0].clone()),
            ("json", paths[1].clone()),
            ("csv", paths[2].clone()),
        ];
        let details = json!({
            "precision": detection.as_ref().map(|d| &d.precision),
            "accuracy": identification.as_ref().map(|r| &r.accuracy),
        });
        Ok((paths, artifacts, details))
    })
}

/// Writes a synthetic corpus, keyword list and ground truth into `out`.
pub fn cmd_synth(config: &SynthConfig, out: &Path) -> Result<SynthPaths> {
    generate(config)?.write(out)
}
