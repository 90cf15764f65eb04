use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MaskedSentence, TargetKeyword, MASK_TOKEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitRatios {
    /// Sizes of each part for `n` items: train and validation rounded, test
    /// takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let total = self.train + self.val + self.test;
        let train = ((n as f64) * self.train / total).round() as usize;
        let train = train.min(n);
        let val = (((n as f64) * self.val / total).round() as usize).min(n - train);
        (train, val, n - train - val)
    }

    /// Seeded shuffle of `0..n` cut into train/val/test.
    pub fn split(&self, n: usize, seed: u64) -> SplitIndices {
        let (train, val, _) = self.sizes(n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let test = idx.split_off(train + val);
        let val = idx.split_off(train);
        SplitIndices {
            train: idx,
            val,
            test,
        }
    }
}

/// Draws `count` negative contexts: a uniformly chosen sentence with a
/// uniformly chosen token masked. Sentences containing any keyword are
/// rejected and redrawn, and no (sentence, position) pair is drawn twice.
pub fn sample_negative_contexts(
    corpus: &Corpus,
    keywords: &[TargetKeyword],
    count: usize,
    seed: u64,
) -> Result<Vec<MaskedSentence>> {
    if count == 0 {
        return Err(Error::InvalidInput("negative sample count must be >= 1".into()));
    }
    let sentences = corpus.sentences();
    if sentences.len() < count {
        return Err(Error::CorpusTooSmall(format!(
            "{} sentences for {count} negative samples",
            sentences.len()
        )));
    }
    let eligible: Vec<bool> = sentences
        .iter()
        .map(|s| !Corpus::sentence_contains_any(s, keywords))
        .collect();
    let pool: usize = sentences
        .iter()
        .zip(&eligible)
        .filter(|(_, &ok)| ok)
        .map(|(s, _)| s.tokens.len())
        .sum();
    if pool < count {
        return Err(Error::CorpusTooSmall(format!(
            "only {pool} maskable positions remain after rejecting keyword sentences; need {count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let si = rng.gen_range(0..sentences.len());
        if !eligible[si] {
            continue;
        }
        let s = &sentences[si];
        let pos = rng.gen_range(0..s.tokens.len());
        if !seen.insert((si, pos)) {
            continue;
        }
        let mut tokens = s.tokens.clone();
        let surface = std::mem::replace(&mut tokens[pos], MASK_TOKEN.to_string());
        out.push(MaskedSentence {
            id: format!("{}@{}+1", s.id, pos),
            tokens,
            mask_index: pos,
            origin_sentence_id: s.id.clone(),
            window_start: 0,
            masked_surface: surface,
            origin_keyword: None,
        });
    }
    Ok(out)
}
