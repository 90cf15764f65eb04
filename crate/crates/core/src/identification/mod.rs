//! Coarse-to-fine identification: which target keyword does a euphemism
//! stand for?
//!
//! Training data is self-supervised. Masking known keywords yields labeled
//! contexts for the fine classifier; those same contexts against randomly
//! masked sentences train the coarse related/unrelated filter.

mod features;
pub mod logistic;
mod sampling;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::{extract_masked_sentences, extract_word_contexts, Corpus, MaskedSentence, TargetKeyword};
use crate::error::{Error, Result};
pub use features::SentenceEncoder;
use logistic::{argmax, Features, SoftmaxRegression, TrainParams};
pub use sampling::{sample_negative_contexts, SplitIndices, SplitRatios};

pub const COARSE_FILE: &str = "coarse.json";
pub const FINE_FILE: &str = "fine.json";
pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_CONTEXT_TOKENS: usize = 3;
pub const NON_EUPHEMISTIC_NOTE: &str = "non-euphemistic usage only";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledContext {
    pub masked: MaskedSentence,
    pub label: TargetKeyword,
}

#[derive(Debug, Clone, Default)]
pub struct FineTrainingSet {
    pub samples: Vec<LabeledContext>,
    /// Samples per keyword, in keyword-list order.
    pub class_counts: Vec<(TargetKeyword, usize)>,
}

impl FineTrainingSet {
    pub fn untrainable(&self) -> impl Iterator<Item = &TargetKeyword> {
        self.class_counts.iter().filter(|(_, n)| *n == 0).map(|(k, _)| k)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &MaskedSentence> {
        self.samples.iter().map(|s| &s.masked)
    }
}

pub fn build_fine_training_set(corpus: &Corpus, keywords: &[TargetKeyword]) -> Result<FineTrainingSet> {
    if keywords.is_empty() {
        return Err(Error::InvalidInput("keyword list is empty".into()));
    }
    let extraction = extract_masked_sentences(corpus, keywords);
    for k in extraction.missing_keywords() {
        warn!(keyword = %k, "keyword never occurs; class is untrainable");
    }
    let samples = extraction
        .masked
        .into_iter()
        .map(|m| {
            let label = m.origin_keyword.clone().expect("keyword extraction sets origin_keyword");
            LabeledContext { masked: m, label }
        })
        .collect();
    Ok(FineTrainingSet {
        samples,
        class_counts: extraction.occurrences,
    })
}

/// Balanced related/unrelated contexts for the coarse classifier.
#[derive(Debug, Clone)]
pub struct CoarseTrainingSet {
    pub positives: Vec<MaskedSentence>,
    pub negatives: Vec<MaskedSentence>,
}

pub fn build_coarse_training_set(
    corpus: &Corpus,
    keywords: &[TargetKeyword],
    fine: &FineTrainingSet,
    seed: u64,
) -> Result<CoarseTrainingSet> {
    let positives: Vec<MaskedSentence> = fine.contexts().cloned().collect();
    if positives.is_empty() {
        return Err(Error::NoKeywordOccurrences);
    }
    let negatives = sample_negative_contexts(corpus, keywords, positives.len(), seed)?;
    Ok(CoarseTrainingSet { positives, negatives })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

/// How sentence representations are built.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum EncoderSpec {
    #[default]
    OneHot,
    /// Pretrained vectors in word2vec text format.
    WordVectors(PathBuf),
}

impl EncoderSpec {
    fn fit<'a>(&self, contexts: impl IntoIterator<Item = &'a MaskedSentence>) -> Result<SentenceEncoder> {
        match self {
            EncoderSpec::OneHot => Ok(SentenceEncoder::one_hot(contexts)),
            EncoderSpec::WordVectors(path) => SentenceEncoder::word_vectors(path, contexts),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOptions {
    pub encoder: EncoderSpec,
    pub split: SplitRatios,
    pub train: TrainParams,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        ClassifierOptions {
            encoder: EncoderSpec::OneHot,
            split: SplitRatios::default(),
            train: TrainParams::default(),
        }
    }
}

/// Encodes, splits, fits and scores a labeled dataset.
fn train_split(
    data: &[(&MaskedSentence, usize)],
    n_classes: usize,
    opts: &ClassifierOptions,
) -> Result<(SentenceEncoder, SoftmaxRegression, Metrics)> {
    let split = opts.split.split(data.len(), opts.train.seed);
    let encoder = opts.encoder.fit(split.train.iter().map(|&i| data[i].0))?;
    let encode = |idx: &[usize]| -> Vec<(Features, usize)> {
        idx.iter().map(|&i| (encoder.encode(data[i].0), data[i].1)).collect()
    };
    let (train, val, test) = (encode(&split.train), encode(&split.val), encode(&split.test));
    let params = TrainParams {
        seed: opts.train.seed.wrapping_add(1),
        ..opts.train.clone()
    };
    let (model, report) = SoftmaxRegression::fit(&train, &val, n_classes, encoder.dim(), &params);
    let metrics = Metrics {
        train_acc: report.train_acc,
        val_acc: report.val_acc,
        test_acc: (!test.is_empty()).then(|| model.accuracy(&test)),
        n_train: train.len(),
        n_val: val.len(),
        n_test: test.len(),
    };
    Ok((encoder, model, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseClassifier {
    pub kind: String,
    pub encoder: SentenceEncoder,
    model: SoftmaxRegression,
    pub decision_threshold: f64,
    pub metrics: Metrics,
}

impl CoarseClassifier {
    /// Probability that the context is about the category.
    pub fn predict(&self, m: &MaskedSentence) -> f64 {
        self.model.predict_proba(&self.encoder.encode(m))[1]
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        save_json(&dir.join(COARSE_FILE), self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        load_json(&dir.join(COARSE_FILE))
    }
}

pub fn train_coarse(
    positives: &[MaskedSentence],
    negatives: &[MaskedSentence],
    opts: &ClassifierOptions,
) -> Result<CoarseClassifier> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::SingleClass);
    }
    let data: Vec<(&MaskedSentence, usize)> = positives
        .iter()
        .map(|m| (m, 1))
        .chain(negatives.iter().map(|m| (m, 0)))
        .collect();
    let (encoder, model, metrics) = train_split(&data, 2, opts)?;
    Ok(CoarseClassifier {
        kind: format!("logistic-regression/{}", encoder.name()),
        encoder,
        model,
        decision_threshold: DEFAULT_DECISION_THRESHOLD,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineClassifier {
    /// Sorted by surface.
    pub classes: Vec<TargetKeyword>,
    pub encoder: SentenceEncoder,
    model: SoftmaxRegression,
    pub metrics: Metrics,
}

impl FineClassifier {
    pub fn predict_proba(&self, m: &MaskedSentence) -> Vec<f64> {
        self.model.predict_proba(&self.encoder.encode(m))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        save_json(&dir.join(FINE_FILE), self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        load_json(&dir.join(FINE_FILE))
    }
}

/// Classes are the keywords with at least one sample.
pub fn train_fine(samples: &[LabeledContext], opts: &ClassifierOptions) -> Result<FineClassifier> {
    let mut classes: Vec<TargetKeyword> = samples.iter().map(|s| s.label.clone()).collect();
    classes.sort_by(|a, b| a.surface.cmp(&b.surface));
    classes.dedup_by(|a, b| a.surface == b.surface);
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, k)| (k.surface.as_str(), i)).collect();
    let data: Vec<(&MaskedSentence, usize)> = samples
        .iter()
        .map(|s| (&s.masked, index[s.label.surface.as_str()]))
        .collect();
    let (encoder, model, metrics) = train_split(&data, classes.len(), opts)?;
    Ok(FineClassifier {
        classes,
        encoder,
        model,
        metrics,
    })
}

/// Anything that can act as the coarse stage.
pub trait CoarseFilter: Sync {
    fn related_probability(&self, m: &MaskedSentence) -> f64;
    fn threshold(&self) -> f64;
}

/// Anything that can act as the fine stage.
pub trait FineLabeler: Sync {
    fn classes(&self) -> &[TargetKeyword];
    /// Distribution over `classes()`.
    fn class_probabilities(&self, m: &MaskedSentence) -> Vec<f64>;
}

impl CoarseFilter for CoarseClassifier {
    fn related_probability(&self, m: &MaskedSentence) -> f64 {
        self.predict(m)
    }

    fn threshold(&self) -> f64 {
        self.decision_threshold
    }
}

impl FineLabeler for FineClassifier {
    fn classes(&self) -> &[TargetKeyword] {
        &self.classes
    }

    fn class_probabilities(&self, m: &MaskedSentence) -> Vec<f64> {
        self.predict_proba(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Count argmax labels, then normalize.
    #[default]
    Hard,
    /// Average the per-context class distributions.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifyOptions {
    pub aggregation: Aggregation,
    pub min_context_tokens: usize,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions {
            aggregation: Aggregation::Hard,
            min_context_tokens: DEFAULT_MIN_CONTEXT_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuphemismDistribution {
    pub word: String,
    /// Argmax label counts per keyword surface.
    pub counts: BTreeMap<String, u64>,
    pub probabilities: BTreeMap<String, f64>,
    pub n_total: usize,
    pub n_kept: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EuphemismDistribution {
    /// Normalized label counts; empty with a note when nothing was counted.
    pub fn from_counts(word: &str, counts: BTreeMap<String, u64>, n_total: usize) -> Self {
        let n_kept: u64 = counts.values().sum();
        if n_kept == 0 {
            return EuphemismDistribution {
                word: word.to_string(),
                counts: BTreeMap::new(),
                probabilities: BTreeMap::new(),
                n_total,
                n_kept: 0,
                note: Some(NON_EUPHEMISTIC_NOTE.to_string()),
            };
        }
        let probabilities = counts
            .iter()
            .map(|(k, &c)| (k.clone(), c as f64 / n_kept as f64))
            .collect();
        EuphemismDistribution {
            word: word.to_string(),
            counts,
            probabilities,
            n_total,
            n_kept: n_kept as usize,
            note: None,
        }
    }

    /// Keywords by descending probability, lexicographic on ties.
    pub fn ranked_keywords(&self) -> Vec<&str> {
        let mut v: Vec<(&str, f64)> = self.probabilities.iter().map(|(k, &p)| (k.as_str(), p)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v.into_iter().map(|(k, _)| k).collect()
    }

    pub fn probability_mass(&self) -> f64 {
        self.probabilities.values().sum()
    }
}

/// Distribution over target keywords for one word.
pub fn identify(
    word: &str,
    corpus: &Corpus,
    coarse: &dyn CoarseFilter,
    fine: &dyn FineLabeler,
    opts: &IdentifyOptions,
) -> Result<EuphemismDistribution> {
    let word = word.trim().to_lowercase();
    let contexts = extract_word_contexts(corpus, &word);
    if contexts.is_empty() {
        return Err(Error::WordAbsent(word));
    }
    let classes = fine.classes();
    let mut counts = vec![0u64; classes.len()];
    let mut soft = vec![0.0; classes.len()];
    for m in &contexts {
        if m.non_mask_len() < opts.min_context_tokens || coarse.related_probability(m) < coarse.threshold() {
            continue;
        }
        let p = fine.class_probabilities(m);
        counts[argmax(&p)] += 1;
        soft.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
    }
    let kept: u64 = counts.iter().sum();
    let count_map: BTreeMap<String, u64> = if kept == 0 {
        BTreeMap::new()
    } else {
        classes.iter().zip(&counts).map(|(k, &c)| (k.surface.clone(), c)).collect()
    };
    let mut dist = EuphemismDistribution::from_counts(&word, count_map, contexts.len());
    if kept > 0 && opts.aggregation == Aggregation::Soft {
        dist.probabilities = classes
            .iter()
            .zip(&soft)
            .map(|(k, &s)| (k.surface.clone(), s / kept as f64))
            .collect();
    }
    Ok(dist)
}

/// [`identify`] over many words in parallel; results keep input order.
pub fn identify_many(
    words: &[String],
    corpus: &Corpus,
    coarse: &dyn CoarseFilter,
    fine: &dyn FineLabeler,
    opts: &IdentifyOptions,
) -> Vec<Result<EuphemismDistribution>> {
    words
        .par_iter()
        .map(|w| identify(w, corpus, coarse, fine, opts))
        .collect()
}

pub fn write_distributions(path: &Path, dists: &[EuphemismDistribution]) -> Result<()> {
    let mut out = Vec::new();
    for d in dists {
        serde_json::to_writer(&mut out, d)?;
        out.push(b'\n');
    }
    write_file(path, &out)
}

pub fn read_distributions(path: &Path) -> Result<Vec<EuphemismDistribution>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    write_file(path, serde_json::to_string(value)?.as_bytes())?;
    Ok(path.to_path_buf())
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
