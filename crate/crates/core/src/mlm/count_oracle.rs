//! Deterministic count-based stand-in for a masked language model.
//!
//! The context of a slot is the `window` tokens on each side (sentence
//! boundaries padded). The probability of token `c` is its count in that exact
//! context plus `smoothing`, normalized over the vocabulary. Unseen contexts
//! therefore get the uniform distribution.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{Corpus, MaskedSentence};
use crate::error::{Error, Result};
use crate::mlm::{BackendKind, MaskedLm};
use crate::vocab::Vocabulary;

pub const COUNT_TABLE_FILE: &str = "count_oracle.tsv";
pub const DEFAULT_SMOOTHING: f64 = 0.01;
pub const DEFAULT_WINDOW: usize = 2;

const BOS: &str = "<s>";
const EOS: &str = "</s>";

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    /// (vocabulary index, count), sorted by index.
    counts: Vec<(usize, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountOracle {
    window: usize,
    smoothing: f64,
    vocab: Vocabulary,
    table: HashMap<String, ContextCounts>,
}

fn context_key<S: AsRef<str>>(tokens: &[S], slot: usize, window: usize) -> String {
    let mut key = String::new();
    for off in (1..=window).rev() {
        if !key.is_empty() {
            key.push(' ');
        }
        key.push_str(if slot >= off { tokens[slot - off].as_ref() } else { BOS });
    }
    key.push('\t');
    for off in 1..=window {
        if off > 1 {
            key.push(' ');
        }
        key.push_str(tokens.get(slot + off).map_or(EOS, |t| t.as_ref()));
    }
    key
}

/// Builds the count table from every token position in the corpus.
pub fn build_count_oracle(corpus: &Corpus, window: usize, smoothing: f64) -> Result<CountOracle> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if window == 0 {
        return Err(Error::InvalidInput("count-oracle window must be >= 1".into()));
    }
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidInput("count-oracle smoothing must be > 0".into()));
    }
    let vocab: Vocabulary = corpus.vocabulary().keys().cloned().collect();
    let mut raw: HashMap<String, BTreeMap<usize, u64>> = HashMap::new();
    for s in corpus.sentences() {
        for (i, tok) in s.tokens.iter().enumerate() {
            let idx = vocab.index_of(tok).expect("corpus token in vocabulary");
            *raw.entry(context_key(&s.tokens, i, window))
                .or_default()
                .entry(idx)
                .or_insert(0) += 1;
        }
    }
    Ok(CountOracle::from_raw(window, smoothing, vocab, raw))
}

impl CountOracle {
    fn from_raw(
        window: usize,
        smoothing: f64,
        vocab: Vocabulary,
        raw: HashMap<String, BTreeMap<usize, u64>>,
    ) -> Self {
        let table = raw
            .into_iter()
            .map(|(k, m)| {
                let counts: Vec<(usize, u64)> = m.into_iter().collect();
                let total = counts.iter().map(|(_, c)| c).sum();
                (k, ContextCounts { total, counts })
            })
            .collect();
        CountOracle {
            window,
            smoothing,
            vocab,
            table,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Raw (count, context total) for a token in the slot context of `masked`.
    pub fn context_count(&self, token: &str, masked: &MaskedSentence) -> (u64, u64) {
        let key = context_key(&masked.tokens, masked.mask_index, self.window);
        let Some(ctx) = self.table.get(&key) else {
            return (0, 0);
        };
        let count = self
            .vocab
            .index_of(token)
            .and_then(|i| ctx.counts.iter().find(|(j, _)| *j == i))
            .map_or(0, |(_, c)| *c);
        (count, ctx.total)
    }

    /// Sorted `left, right, token, count` table.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(&str, &str, &str, u64)> = Vec::new();
        for (key, ctx) in &self.table {
            let (left, right) = key.split_once('\t').expect("context key has a tab");
            for &(i, c) in &ctx.counts {
                rows.push((left, right, self.vocab.token(i), c));
            }
        }
        rows.sort_unstable();
        let mut out = String::new();
        let _ = writeln!(out, "# count-oracle");
        let _ = writeln!(out, "# window\t{}", self.window);
        let _ = writeln!(out, "# smoothing\t{}", self.smoothing);
        out.push_str("left\tright\ttoken\tcount\n");
        for (l, r, t, c) in rows {
            let _ = writeln!(out, "{l}\t{r}\t{t}\t{c}");
        }
        out
    }

    pub fn from_tsv(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, message: &str| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut window = None;
        let mut smoothing = None;
        let mut rows: Vec<(String, String, u64)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            if let Some(meta) = line.strip_prefix("# ") {
                match meta.split_once('\t') {
                    Some(("window", v)) => {
                        window = Some(v.parse().map_err(|_| bad(lineno, "bad window"))?)
                    }
                    Some(("smoothing", v)) => {
                        smoothing = Some(v.parse().map_err(|_| bad(lineno, "bad smoothing"))?)
                    }
                    _ => {}
                }
                continue;
            }
            if line.is_empty() || line == "left\tright\ttoken\tcount" {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [left, right, token, count] = parts[..] else {
                return Err(bad(lineno, "expected 4 tab-separated fields"));
            };
            let count: u64 = count.parse().map_err(|_| bad(lineno, "bad count"))?;
            rows.push((format!("{left}\t{right}"), token.to_string(), count));
        }
        let window = window.ok_or_else(|| bad(1, "missing window header"))?;
        let smoothing = smoothing.ok_or_else(|| bad(1, "missing smoothing header"))?;
        let vocab: Vocabulary = rows.iter().map(|(_, t, _)| t.clone()).collect();
        if vocab.is_empty() {
            return Err(bad(1, "empty count table"));
        }
        let mut raw: HashMap<String, BTreeMap<usize, u64>> = HashMap::new();
        for (key, token, count) in rows {
            let idx = vocab.index_of(&token).expect("token collected above");
            *raw.entry(key).or_default().entry(idx).or_insert(0) += count;
        }
        Ok(CountOracle::from_raw(window, smoothing, vocab, raw))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(COUNT_TABLE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_tsv(&text, &path)
    }
}

impl MaskedLm for CountOracle {
    fn kind(&self) -> BackendKind {
        BackendKind::CountOracle
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn distribution(&self, masked: &MaskedSentence) -> Vec<f64> {
        let v = self.vocab.len();
        let key = context_key(&masked.tokens, masked.mask_index, self.window);
        let ctx = self.table.get(&key);
        let total = ctx.map_or(0, |c| c.total);
        let denom = total as f64 + self.smoothing * v as f64;
        let mut dist = vec![self.smoothing / denom; v];
        if let Some(ctx) = ctx {
            for &(i, c) in &ctx.counts {
                dist[i] = (c as f64 + self.smoothing) / denom;
            }
        }
        dist
    }

    fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(COUNT_TABLE_FILE);
        fs::write(&path, self.to_tsv()).map_err(|e| Error::io(&path, e))
    }
}
