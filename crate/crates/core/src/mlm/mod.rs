//! Masked-token scoring backends.
//!
//! Every backend produces, for a masked sentence, a probability distribution
//! over its whole-word vocabulary that sums to one. Filtering and candidate
//! generation both go through [`BackendHandle`], so the two stages always see
//! the same numbers for the same input.

mod contextual;
mod count_oracle;

use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::MaskedSentence;
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

pub use contextual::{
    fine_tune, BaseModelRef, ContextualConfig, ContextualMlm, FineTuneParams, CONTEXTUAL_STATE_FILE,
};
pub use count_oracle::{build_count_oracle, CountOracle, COUNT_TABLE_FILE, DEFAULT_SMOOTHING, DEFAULT_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    ContextualMlm,
    CountOracle,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::ContextualMlm => "contextual-mlm",
            BackendKind::CountOracle => "count-oracle",
        })
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contextual-mlm" | "mlm" => Ok(BackendKind::ContextualMlm),
            "count-oracle" | "oracle" => Ok(BackendKind::CountOracle),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

/// A masked-token model: a normalized distribution over a fixed vocabulary
/// for the slot of any masked sentence.
pub trait MaskedLm: Send + Sync + fmt::Debug {
    fn kind(&self) -> BackendKind;

    fn vocabulary(&self) -> &Vocabulary;

    /// Probabilities aligned with `vocabulary()` indices, summing to one.
    fn distribution(&self, masked: &MaskedSentence) -> Vec<f64>;

    /// Writes the model state into `dir` (created if needed).
    fn persist(&self, dir: &Path) -> Result<()>;
}

/// One row of a [`ReplacementRanking`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub token: String,
    pub probability: f64,
}

/// Top entries of a backend's distribution for one masked sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementRanking {
    pub masked_ref: String,
    pub entries: Vec<Replacement>,
}

/// Shared, immutable handle to a backend plus where its state lives.
#[derive(Debug, Clone)]
pub struct BackendHandle {
    model: Arc<dyn MaskedLm>,
    state_ref: Option<PathBuf>,
}

impl BackendHandle {
    pub fn new(model: impl MaskedLm + 'static) -> Self {
        BackendHandle {
            model: Arc::new(model),
            state_ref: None,
        }
    }

    pub fn with_state_ref(mut self, dir: impl Into<PathBuf>) -> Self {
        self.state_ref = Some(dir.into());
        self
    }

    /// Persists the state under `dir` and records it as the state location.
    pub fn persist_to(self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        self.model.persist(&dir)?;
        Ok(self.with_state_ref(dir))
    }

    /// Reopens a persisted backend directory of either kind.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let handle = if dir.join(COUNT_TABLE_FILE).exists() {
            BackendHandle::new(CountOracle::load(dir)?)
        } else if dir.join(CONTEXTUAL_STATE_FILE).exists() {
            BackendHandle::new(ContextualMlm::load(dir)?)
        } else {
            return Err(Error::BaseModelUnavailable(format!(
                "no backend state in {}",
                dir.display()
            )));
        };
        Ok(handle.with_state_ref(dir))
    }

    pub fn kind(&self) -> BackendKind {
        self.model.kind()
    }

    pub fn state_ref(&self) -> Option<&Path> {
        self.state_ref.as_deref()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        self.model.vocabulary()
    }

    pub fn model(&self) -> &dyn MaskedLm {
        self.model.as_ref()
    }

    pub fn distribution(&self, masked: &MaskedSentence) -> Vec<f64> {
        self.model.distribution(masked)
    }

    /// MLM probability of `candidate` filling the slot of `masked`.
    pub fn score(&self, candidate: &str, masked: &MaskedSentence) -> Result<f64> {
        let idx = self
            .vocabulary()
            .index_of(candidate)
            .ok_or_else(|| Error::OutOfVocabulary(candidate.to_string()))?;
        Ok(self.distribution(masked)[idx])
    }

    /// The `depth` most probable tokens, ties broken lexicographically. A
    /// depth beyond the vocabulary size yields the full ranking.
    pub fn rank_replacements(&self, masked: &MaskedSentence, depth: usize) -> Result<ReplacementRanking> {
        if depth == 0 {
            return Err(Error::InvalidInput("ranking depth must be >= 1".into()));
        }
        let dist = self.distribution(masked);
        let order = top_indices(&dist, depth);
        let vocab = self.vocabulary();
        Ok(ReplacementRanking {
            masked_ref: masked.id.clone(),
            entries: order
                .into_iter()
                .map(|i| Replacement {
                    token: vocab.token(i).to_string(),
                    probability: dist[i],
                })
                .collect(),
        })
    }
}

/// Descending probability, ascending index (= lexicographic token order).
pub(crate) fn rank_order(dist: &[f64], a: usize, b: usize) -> Ordering {
    dist[b].total_cmp(&dist[a]).then(a.cmp(&b))
}

/// Indices of the `depth` largest entries in rank order.
pub(crate) fn top_indices(dist: &[f64], depth: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    let depth = depth.min(idx.len());
    if depth < idx.len() {
        idx.select_nth_unstable_by(depth, |&a, &b| rank_order(dist, a, b));
        idx.truncate(depth);
    }
    idx.sort_unstable_by(|&a, &b| rank_order(dist, a, b));
    idx
}

/// 1-based rank of index `target` under [`rank_order`].
pub(crate) fn rank_of(dist: &[f64], target: usize) -> usize {
    let p = dist[target];
    1 + dist
        .iter()
        .enumerate()
        .filter(|&(i, &q)| q > p || (q == p && i < target))
        .count()
}
