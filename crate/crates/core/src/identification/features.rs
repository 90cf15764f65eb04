//! Sentence representations: the average of the encodings of the context
//! words around the mask slot.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::MaskedSentence;
use crate::error::{Error, Result};
use crate::identification::logistic::Features;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SentenceEncoder {
    /// Averaged one-hot vectors over a fixed vocabulary.
    OneHot { vocabulary: Vocabulary },
    /// Averaged dense word vectors.
    WordVectors {
        dim: usize,
        vectors: BTreeMap<String, Vec<f64>>,
    },
}

impl SentenceEncoder {
    /// One-hot encoder over every context token of `contexts`.
    pub fn one_hot<'a>(contexts: impl IntoIterator<Item = &'a MaskedSentence>) -> Self {
        let vocabulary = contexts
            .into_iter()
            .flat_map(|m| m.context_tokens().map(str::to_string).collect::<Vec<_>>())
            .collect();
        SentenceEncoder::OneHot { vocabulary }
    }

    /// Reads word vectors in word2vec/GloVe text format (an optional
    /// `count dim` header line, then `word v1 .. vd`), keeping only words
    /// that occur in `contexts`.
    pub fn word_vectors<'a>(
        path: &Path,
        contexts: impl IntoIterator<Item = &'a MaskedSentence>,
    ) -> Result<Self> {
        let wanted: BTreeSet<&str> = contexts.into_iter().flat_map(|m| m.context_tokens()).collect();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut dim = None;
        let mut vectors = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: "non-numeric vector component".into(),
                })?;
            if n == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: n + 1,
                        message: format!("expected {d} components, found {}", values.len()),
                    })
                }
                _ => {}
            }
            let word = word.to_lowercase();
            if wanted.contains(word.as_str()) {
                vectors.entry(word).or_insert(values);
            }
        }
        let dim = dim.filter(|&d| d > 0).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "no vectors found".into(),
        })?;
        Ok(SentenceEncoder::WordVectors { dim, vectors })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SentenceEncoder::OneHot { .. } => "one-hot",
            SentenceEncoder::WordVectors { .. } => "word-vectors",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SentenceEncoder::OneHot { vocabulary } => vocabulary.len(),
            SentenceEncoder::WordVectors { dim, .. } => *dim,
        }
    }

    /// Averages over all non-mask tokens; words without an encoding count as
    /// zero vectors.
    pub fn encode(&self, m: &MaskedSentence) -> Features {
        let n = m.non_mask_len();
        if n == 0 {
            return Vec::new();
        }
        let scale = 1.0 / n as f64;
        match self {
            SentenceEncoder::OneHot { vocabulary } => {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for tok in m.context_tokens() {
                    if let Some(i) = vocabulary.index_of(tok) {
                        *acc.entry(i).or_insert(0.0) += scale;
                    }
                }
                acc.into_iter().collect()
            }
            SentenceEncoder::WordVectors { dim, vectors } => {
                let mut acc = vec![0.0; *dim];
                for tok in m.context_tokens() {
                    if let Some(v) = vectors.get(tok) {
                        for (a, x) in acc.iter_mut().zip(v) {
                            *a += x * scale;
                        }
                    }
                }
                acc.into_iter().enumerate().collect()
            }
        }
    }
}
