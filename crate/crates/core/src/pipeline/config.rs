use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusFormat;
use crate::detection::{DEFAULT_STOP_TOP_DF, DEFAULT_T};
use crate::error::{Error, Result};
use crate::evaluation::{DETECTION_KS, IDENTIFICATION_KS};
use crate::identification::{Aggregation, DEFAULT_MIN_CONTEXT_TOKENS};
use crate::mlm::{BackendKind, BaseModelRef, FineTuneParams, DEFAULT_SMOOTHING, DEFAULT_WINDOW};

/// Which contextual model scores candidates after filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationModel {
    #[default]
    FineTuned,
    Base,
}

/// Everything a run depends on. Built from defaults, then a flat
/// `key = value` file, then flag overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: PathBuf,
    /// Inferred from the corpus extension when absent.
    pub corpus_format: Option<CorpusFormat>,
    pub keywords: PathBuf,
    pub truth: Option<PathBuf>,
    pub backend: BackendKind,
    pub generation: GenerationModel,
    pub t: usize,
    pub k_values: Vec<usize>,
    pub identify_k_values: Vec<usize>,
    pub seed: u64,
    pub run_id: String,
    pub runs_dir: PathBuf,
    pub oracle_window: usize,
    pub smoothing: f64,
    pub stop_top_df: usize,
    pub base_model: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_count: u64,
    pub max_memory_mb: u64,
    pub word_vectors: Option<PathBuf>,
    pub aggregation: Aggregation,
    pub min_context_tokens: usize,
    pub review_words: usize,
    pub review_contexts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ft = FineTuneParams::default();
        RunConfig {
            corpus: PathBuf::new(),
            corpus_format: None,
            keywords: PathBuf::new(),
            truth: None,
            backend: BackendKind::ContextualMlm,
            generation: GenerationModel::FineTuned,
            t: DEFAULT_T,
            k_values: DETECTION_KS.to_vec(),
            identify_k_values: IDENTIFICATION_KS.to_vec(),
            seed: 13,
            run_id: String::new(),
            runs_dir: PathBuf::from("runs"),
            oracle_window: DEFAULT_WINDOW,
            smoothing: DEFAULT_SMOOTHING,
            stop_top_df: DEFAULT_STOP_TOP_DF,
            base_model: "scratch".into(),
            epochs: ft.epochs,
            batch_size: ft.batch_size,
            learning_rate: ft.learning_rate,
            min_count: ft.min_count,
            max_memory_mb: ft.max_memory_mb,
            word_vectors: None,
            aggregation: Aggregation::Hard,
            min_context_tokens: DEFAULT_MIN_CONTEXT_TOKENS,
            review_words: 100,
            review_contexts: 10,
        }
    }
}

/// Keys accepted by [`RunConfig::set`], in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "corpus",
    "corpus_format",
    "keywords",
    "truth",
    "backend",
    "generation",
    "t",
    "k",
    "identify_k",
    "seed",
    "run_id",
    "runs_dir",
    "oracle_window",
    "smoothing",
    "stop_top_df",
    "base_model",
    "epochs",
    "batch_size",
    "learning_rate",
    "min_count",
    "max_memory_mb",
    "word_vectors",
    "aggregation",
    "min_context_tokens",
    "review_words",
    "review_contexts",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_ks(key: &str, value: &str) -> Result<Vec<usize>> {
    let mut ks: Vec<usize> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

fn join_ks(ks: &[usize]) -> String {
    ks.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Applies one setting. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "corpus" => self.corpus = PathBuf::from(v),
            "corpus_format" => {
                self.corpus_format = if v.is_empty() {
                    None
                } else {
                    Some(v.parse().map_err(|_| Error::Config(format!("corpus_format: unknown {v:?}")))?)
                }
            }
            "keywords" => self.keywords = PathBuf::from(v),
            "truth" => self.truth = optional_path(v),
            "backend" => self.backend = v.parse()?,
            "generation" => {
                self.generation = match v {
                    "fine-tuned" | "fine_tuned" => GenerationModel::FineTuned,
                    "base" => GenerationModel::Base,
                    _ => return Err(Error::Config(format!("generation: expected fine-tuned or base, got {v:?}"))),
                }
            }
            "t" => self.t = parse(&key, v)?,
            "k" | "k_values" => self.k_values = parse_ks(&key, v)?,
            "identify_k" => self.identify_k_values = parse_ks(&key, v)?,
            "seed" => self.seed = parse(&key, v)?,
            "run_id" => self.run_id = v.to_string(),
            "runs_dir" => self.runs_dir = PathBuf::from(v),
            "oracle_window" => self.oracle_window = parse(&key, v)?,
            "smoothing" => self.smoothing = parse(&key, v)?,
            "stop_top_df" => self.stop_top_df = parse(&key, v)?,
            "base_model" => self.base_model = v.to_string(),
            "epochs" => self.epochs = parse(&key, v)?,
            "batch_size" => self.batch_size = parse(&key, v)?,
            "learning_rate" => self.learning_rate = parse(&key, v)?,
            "min_count" => self.min_count = parse(&key, v)?,
            "max_memory_mb" => self.max_memory_mb = parse(&key, v)?,
            "word_vectors" => self.word_vectors = optional_path(v),
            "aggregation" => {
                self.aggregation = match v {
                    "hard" => Aggregation::Hard,
                    "soft" => Aggregation::Soft,
                    _ => return Err(Error::Config(format!("aggregation: expected hard or soft, got {v:?}"))),
                }
            }
            "min_context_tokens" => self.min_context_tokens = parse(&key, v)?,
            "review_words" => self.review_words = parse(&key, v)?,
            "review_contexts" => self.review_contexts = parse(&key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn apply<K: AsRef<str>, V: AsRef<str>>(&mut self, pairs: impl IntoIterator<Item = (K, V)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k.as_ref(), v.as_ref())?;
        }
        Ok(())
    }

    /// Defaults, then the file at `path` (if any), then `overrides`.
    pub fn load<K: AsRef<str>, V: AsRef<str>>(
        path: Option<&Path>,
        overrides: impl IntoIterator<Item = (K, V)>,
    ) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply(parse_config_pairs(&text)?)?;
        }
        cfg.apply(overrides)?;
        Ok(cfg)
    }

    /// Flat `key = value` text that [`RunConfig::load`] reads back to an equal value.
    pub fn to_flat(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("corpus", self.corpus.display().to_string());
        kv("corpus_format", self.corpus_format.map(|f| f.to_string()).unwrap_or_default());
        kv("keywords", self.keywords.display().to_string());
        kv("truth", opt(&self.truth));
        kv("backend", self.backend.to_string());
        kv(
            "generation",
            match self.generation {
                GenerationModel::FineTuned => "fine-tuned",
                GenerationModel::Base => "base",
            }
            .into(),
        );
        kv("t", self.t.to_string());
        kv("k", join_ks(&self.k_values));
        kv("identify_k", join_ks(&self.identify_k_values));
        kv("seed", self.seed.to_string());
        kv("run_id", self.run_id.clone());
        kv("runs_dir", self.runs_dir.display().to_string());
        kv("oracle_window", self.oracle_window.to_string());
        kv("smoothing", format!("{:?}", self.smoothing));
        kv("stop_top_df", self.stop_top_df.to_string());
        kv("base_model", self.base_model.clone());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", format!("{:?}", self.learning_rate));
        kv("min_count", self.min_count.to_string());
        kv("max_memory_mb", self.max_memory_mb.to_string());
        kv("word_vectors", opt(&self.word_vectors));
        kv(
            "aggregation",
            match self.aggregation {
                Aggregation::Hard => "hard",
                Aggregation::Soft => "soft",
            }
            .into(),
        );
        kv("min_context_tokens", self.min_context_tokens.to_string());
        kv("review_words", self.review_words.to_string());
        kv("review_contexts", self.review_contexts.to_string());
        out
    }

    pub fn corpus_format(&self) -> CorpusFormat {
        self.corpus_format.unwrap_or_else(|| {
            match self.corpus.extension().and_then(|e| e.to_str()) {
                Some("jsonl" | "json" | "ndjson") => CorpusFormat::JsonLines,
                _ => CorpusFormat::PlainLines,
            }
        })
    }

    pub fn base_model_ref(&self) -> Result<BaseModelRef> {
        self.base_model.parse()
    }

    pub fn fine_tune_params(&self) -> FineTuneParams {
        FineTuneParams {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            min_count: self.min_count,
            max_memory_mb: self.max_memory_mb,
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.runs_dir.join(&self.run_id)
    }

    /// Fills in a timestamped run id when none was given.
    pub fn ensure_run_id(&mut self) {
        if self.run_id.is_empty() {
            self.run_id = format!("run-{}", chrono::Utc::now().format("%Y%m%d-%H%M%S-%3f"));
        }
    }

    /// Checks values and input files. Every failure is a [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.corpus.as_os_str().is_empty() {
            return fail("corpus path is required".into());
        }
        if self.keywords.as_os_str().is_empty() {
            return fail("keyword list path is required".into());
        }
        for (what, p) in [("corpus", &self.corpus), ("keyword list", &self.keywords)] {
            if !p.is_file() {
                return fail(format!("{what} {} does not exist", p.display()));
            }
        }
        if let Some(p) = &self.truth {
            if !p.is_file() {
                return fail(format!("ground truth {} does not exist", p.display()));
            }
        }
        if self.t == 0 {
            return fail("t must be >= 1".into());
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return fail("k values must be non-empty and >= 1".into());
        }
        if self.identify_k_values.is_empty() || self.identify_k_values.contains(&0) {
            return fail("identify_k values must be non-empty and >= 1".into());
        }
        if !self.k_values.windows(2).all(|w| w[0] < w[1]) {
            return fail("k values must be ascending".into());
        }
        if !is_safe_run_id(&self.run_id) {
            return fail(format!("run id {:?} is not filesystem-safe", self.run_id));
        }
        if self.oracle_window == 0 {
            return fail("oracle_window must be >= 1".into());
        }
        if !(self.smoothing > 0.0) {
            return fail("smoothing must be > 0".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.backend == BackendKind::ContextualMlm {
            self.base_model_ref()
                .map_err(|e| Error::Config(format!("base_model: {e}")))?;
        }
        Ok(())
    }
}

/// Letters, digits, `-`, `_` and `.`; not starting with `.`.
pub fn is_safe_run_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}
