//! Contextual masked-token model adapted to a corpus by gradient descent.
//!
//! The slot is predicted from the `window` tokens on each side. Each context
//! position has its own block in the hidden layer's input, so the same word
//! left or right of the slot contributes differently:
//!
//! ```text
//! x = [E(t-w) .. E(t-1), E(t+1) .. E(t+w)]
//! h = tanh(W1 x + b1)
//! p = softmax(W2 h + b2)          over the whole-word vocabulary
//! ```
//!
//! A base model is either a previously persisted state directory or a fresh
//! seeded initialization (`scratch`). Fine-tuning continues training the base
//! on the target corpus with a fixed seed, single-threaded, so the resulting
//! weights are reproducible on the same platform.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MaskedSentence};
use crate::error::{Error, Result};
use crate::mlm::{BackendHandle, BackendKind, MaskedLm};
use crate::vocab::Vocabulary;

pub const CONTEXTUAL_STATE_FILE: &str = "contextual.json";
const WEIGHTS_FILE: &str = "contextual.weights";

const PAD: usize = 0;
const UNK: usize = 1;
const SPECIALS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualConfig {
    pub dim: usize,
    pub hidden: usize,
    pub window: usize,
}

impl Default for ContextualConfig {
    fn default() -> Self {
        ContextualConfig {
            dim: 32,
            hidden: 64,
            window: 3,
        }
    }
}

/// Where fine-tuning starts from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaseModelRef {
    /// Seeded random initialization with the corpus vocabulary.
    Scratch(ContextualConfig),
    /// A directory holding a persisted contextual state.
    Path(PathBuf),
}

impl FromStr for BaseModelRef {
    type Err = Error;

    /// `scratch`, `scratch:<dim>:<hidden>:<window>`, or a state directory.
    fn from_str(s: &str) -> Result<Self> {
        if s == "scratch" {
            return Ok(BaseModelRef::Scratch(ContextualConfig::default()));
        }
        if let Some(rest) = s.strip_prefix("scratch:") {
            let nums: Vec<usize> = rest
                .split(':')
                .map(|p| p.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("bad base model spec {s:?}")))?;
            let [dim, hidden, window] = nums[..] else {
                return Err(Error::Config(format!(
                    "expected scratch:<dim>:<hidden>:<window>, got {s:?}"
                )));
            };
            if dim == 0 || hidden == 0 || window == 0 {
                return Err(Error::Config(format!("zero size in {s:?}")));
            }
            return Ok(BaseModelRef::Scratch(ContextualConfig { dim, hidden, window }));
        }
        Ok(BaseModelRef::Path(PathBuf::from(s)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Tokens rarer than this are mapped to the unknown input and never predicted
    /// (scratch bases only; a loaded base keeps its vocabulary).
    pub min_count: u64,
    pub max_memory_mb: u64,
}

impl Default for FineTuneParams {
    fn default() -> Self {
        FineTuneParams {
            epochs: 5,
            batch_size: 16,
            learning_rate: 0.2,
            seed: 13,
            min_count: 1,
            max_memory_mb: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualMlm {
    config: ContextualConfig,
    vocab: Vocabulary,
    emb: Vec<f64>,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    kind: BackendKind,
    config: ContextualConfig,
    vocabulary: Vocabulary,
    weights_file: String,
}

struct Forward {
    x: Vec<f64>,
    h: Vec<f64>,
    p: Vec<f64>,
}

fn param_count(config: &ContextualConfig, v: usize) -> usize {
    let input = 2 * config.window * config.dim;
    (v + SPECIALS) * config.dim + config.hidden * input + config.hidden + v * config.hidden + v
}

impl ContextualMlm {
    fn init(config: ContextualConfig, vocab: Vocabulary, unigram: &[f64], rng: &mut impl Rng) -> Self {
        let v = vocab.len();
        let input = 2 * config.window * config.dim;
        let emb_scale = 0.5 / config.dim as f64;
        let emb = (0..(v + SPECIALS) * config.dim)
            .map(|_| rng.gen_range(-emb_scale..emb_scale))
            .collect();
        let s1 = (6.0 / (input + config.hidden) as f64).sqrt();
        let w1 = (0..config.hidden * input).map(|_| rng.gen_range(-s1..s1)).collect();
        let s2 = (6.0 / (config.hidden + v) as f64).sqrt();
        let w2 = (0..v * config.hidden).map(|_| rng.gen_range(-s2..s2)).collect();
        // start from the unigram distribution
        let b2 = unigram.iter().map(|&f| f.max(1e-12).ln()).collect();
        ContextualMlm {
            config,
            vocab,
            emb,
            w1,
            b1: vec![0.0; config.hidden],
            w2,
            b2,
        }
    }

    pub fn config(&self) -> ContextualConfig {
        self.config
    }

    fn input_id(&self, token: &str) -> usize {
        self.vocab.index_of(token).map_or(UNK, |i| i + SPECIALS)
    }

    fn context_ids<S: AsRef<str>>(&self, tokens: &[S], slot: usize) -> Vec<usize> {
        let w = self.config.window;
        let mut ids = Vec::with_capacity(2 * w);
        for off in (1..=w).rev() {
            ids.push(if slot >= off { self.input_id(tokens[slot - off].as_ref()) } else { PAD });
        }
        for off in 1..=w {
            ids.push(tokens.get(slot + off).map_or(PAD, |t| self.input_id(t.as_ref())));
        }
        ids
    }

    fn forward(&self, ids: &[usize]) -> Forward {
        let d = self.config.dim;
        let hn = self.config.hidden;
        let input = ids.len() * d;
        let mut x = Vec::with_capacity(input);
        for &id in ids {
            x.extend_from_slice(&self.emb[id * d..(id + 1) * d]);
        }
        let h: Vec<f64> = (0..hn)
            .map(|j| {
                let row = &self.w1[j * input..(j + 1) * input];
                let z: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + self.b1[j];
                z.tanh()
            })
            .collect();
        let v = self.vocab.len();
        let mut p: Vec<f64> = (0..v)
            .map(|c| {
                let row = &self.w2[c * hn..(c + 1) * hn];
                row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + self.b2[c]
            })
            .collect();
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for z in &mut p {
            *z = (*z - max).exp();
            total += *z;
        }
        for z in &mut p {
            *z /= total;
        }
        Forward { x, h, p }
    }

    /// Mean cross-entropy of predicting each in-vocabulary corpus token from its context.
    pub fn mean_loss(&self, corpus: &Corpus) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for s in corpus.sentences() {
            for (i, tok) in s.tokens.iter().enumerate() {
                if let Some(target) = self.vocab.index_of(tok) {
                    let f = self.forward(&self.context_ids(&s.tokens, i));
                    total -= f.p[target].max(1e-300).ln();
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }

    fn train(&mut self, corpus: &Corpus, params: &FineTuneParams) {
        let examples: Vec<(usize, usize, usize)> = corpus
            .sentences()
            .iter()
            .enumerate()
            .flat_map(|(si, s)| {
                s.tokens
                    .iter()
                    .enumerate()
                    .filter_map(|(i, t)| self.vocab.index_of(t).map(|target| (si, i, target)))
                    .collect::<Vec<_>>()
            })
            .collect();
        if examples.is_empty() {
            tracing::warn!("no corpus token is in the base vocabulary; nothing to fine-tune");
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed_f1e7);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let batch = params.batch_size.max(1);
        let d = self.config.dim;
        let hn = self.config.hidden;
        let v = self.vocab.len();
        let input = 2 * self.config.window * d;

        let mut g_w1 = vec![0.0; self.w1.len()];
        let mut g_b1 = vec![0.0; hn];
        let mut g_w2 = vec![0.0; self.w2.len()];
        let mut g_b2 = vec![0.0; v];
        let mut g_emb: Vec<(usize, Vec<f64>)> = Vec::new();

        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(batch) {
                g_w1.iter_mut().for_each(|g| *g = 0.0);
                g_b1.iter_mut().for_each(|g| *g = 0.0);
                g_w2.iter_mut().for_each(|g| *g = 0.0);
                g_b2.iter_mut().for_each(|g| *g = 0.0);
                g_emb.clear();
                for &ei in chunk {
                    let (si, pos, target) = examples[ei];
                    let tokens = &corpus.sentences()[si].tokens;
                    let ids = self.context_ids(tokens, pos);
                    let f = self.forward(&ids);
                    epoch_loss -= f.p[target].max(1e-300).ln();

                    let mut dh = vec![0.0; hn];
                    for c in 0..v {
                        let dz = f.p[c] - if c == target { 1.0 } else { 0.0 };
                        if dz == 0.0 {
                            continue;
                        }
                        g_b2[c] += dz;
                        let row = c * hn;
                        for j in 0..hn {
                            g_w2[row + j] += dz * f.h[j];
                            dh[j] += dz * self.w2[row + j];
                        }
                    }
                    let mut dx = vec![0.0; input];
                    for j in 0..hn {
                        let dpre = dh[j] * (1.0 - f.h[j] * f.h[j]);
                        g_b1[j] += dpre;
                        let row = j * input;
                        for k in 0..input {
                            g_w1[row + k] += dpre * f.x[k];
                            dx[k] += dpre * self.w1[row + k];
                        }
                    }
                    for (slot, &id) in ids.iter().enumerate() {
                        g_emb.push((id, dx[slot * d..(slot + 1) * d].to_vec()));
                    }
                }
                let step = params.learning_rate / chunk.len() as f64;
                for (w, g) in self.w1.iter_mut().zip(&g_w1) {
                    *w -= step * g;
                }
                for (w, g) in self.b1.iter_mut().zip(&g_b1) {
                    *w -= step * g;
                }
                for (w, g) in self.w2.iter_mut().zip(&g_w2) {
                    *w -= step * g;
                }
                for (w, g) in self.b2.iter_mut().zip(&g_b2) {
                    *w -= step * g;
                }
                for (id, g) in &g_emb {
                    let row = &mut self.emb[id * d..(id + 1) * d];
                    for (w, gi) in row.iter_mut().zip(g) {
                        *w -= step * gi;
                    }
                }
            }
            tracing::debug!(
                epoch,
                loss = epoch_loss / examples.len() as f64,
                "contextual fine-tune epoch"
            );
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header_path = dir.join(CONTEXTUAL_STATE_FILE);
        let raw = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
        let header: StateHeader = serde_json::from_str(&raw)?;
        let weights_path = dir.join(&header.weights_file);
        let bytes = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
        let config = header.config;
        let v = header.vocabulary.len();
        let expected = param_count(&config, v);
        if bytes.len() != expected * 8 {
            return Err(Error::BaseModelUnavailable(format!(
                "{} holds {} bytes, expected {}",
                weights_path.display(),
                bytes.len(),
                expected * 8
            )));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
        let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
        let input = 2 * config.window * config.dim;
        let emb = take((v + SPECIALS) * config.dim);
        let w1 = take(config.hidden * input);
        let b1 = take(config.hidden);
        let w2 = take(v * config.hidden);
        let b2 = take(v);
        Ok(ContextualMlm {
            config,
            vocab: header.vocabulary,
            emb,
            w1,
            b1,
            w2,
            b2,
        })
    }
}

impl MaskedLm for ContextualMlm {
    fn kind(&self) -> BackendKind {
        BackendKind::ContextualMlm
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn distribution(&self, masked: &MaskedSentence) -> Vec<f64> {
        self.forward(&self.context_ids(&masked.tokens, masked.mask_index)).p
    }

    fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = StateHeader {
            kind: BackendKind::ContextualMlm,
            config: self.config,
            vocabulary: self.vocab.clone(),
            weights_file: WEIGHTS_FILE.to_string(),
        };
        let header_path = dir.join(CONTEXTUAL_STATE_FILE);
        fs::write(&header_path, serde_json::to_string_pretty(&header)?)
            .map_err(|e| Error::io(&header_path, e))?;
        let mut bytes = Vec::with_capacity(param_count(&self.config, self.vocab.len()) * 8);
        for w in self
            .emb
            .iter()
            .chain(&self.w1)
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
        {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        let weights_path = dir.join(WEIGHTS_FILE);
        fs::write(&weights_path, bytes).map_err(|e| Error::io(&weights_path, e))
    }
}

/// Adapts a base model to `corpus`. With `epochs == 0` the returned model is
/// the base unchanged. When `state_dir` is given the result is persisted there
/// and the handle points at it.
pub fn fine_tune(
    corpus: &Corpus,
    base: &BaseModelRef,
    params: &FineTuneParams,
    state_dir: Option<&Path>,
) -> Result<BackendHandle> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = match base {
        BaseModelRef::Path(dir) => {
            if !dir.join(CONTEXTUAL_STATE_FILE).exists() {
                return Err(Error::BaseModelUnavailable(format!(
                    "{} has no {CONTEXTUAL_STATE_FILE}",
                    dir.display()
                )));
            }
            ContextualMlm::load(dir)?
        }
        BaseModelRef::Scratch(config) => {
            let kept: Vec<(&String, u64)> = corpus
                .vocabulary()
                .iter()
                .filter(|(_, &c)| c >= params.min_count)
                .map(|(t, &c)| (t, c))
                .collect();
            if kept.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "no token reaches min_count {}",
                    params.min_count
                )));
            }
            check_memory(config, kept.len(), params.max_memory_mb)?;
            let vocab: Vocabulary = kept.iter().map(|(t, _)| (*t).clone()).collect();
            let total: u64 = kept.iter().map(|(_, c)| c).sum();
            let unigram: Vec<f64> = vocab
                .iter()
                .map(|t| corpus.token_count(t) as f64 / total as f64)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            ContextualMlm::init(*config, vocab, &unigram, &mut rng)
        }
    };
    check_memory(&model.config, model.vocab.len(), params.max_memory_mb)?;
    model.train(corpus, params);
    let handle = BackendHandle::new(model);
    match state_dir {
        Some(dir) => handle.persist_to(dir),
        None => Ok(handle),
    }
}

fn check_memory(config: &ContextualConfig, vocab: usize, budget_mb: u64) -> Result<()> {
    // weights plus one full set of gradients
    let bytes = param_count(config, vocab) as u64 * 8 * 2;
    let required_mb = bytes.div_ceil(1 << 20);
    if required_mb > budget_mb {
        return Err(Error::OutOfMemory {
            required_mb,
            budget_mb,
            vocab,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::extract_word_contexts;

    fn tiny() -> BaseModelRef {
        BaseModelRef::Scratch(ContextualConfig {
            dim: 8,
            hidden: 12,
            window: 2,
        })
    }

    fn corpus() -> Corpus {
        let mut texts = Vec::new();
        for who in ["she", "he", "they", "we", "i", "you"] {
            texts.push(format!("{who} was a former heroin addict ."));
            texts.push(format!("{who} drank hot coffee today ."));
        }
        Corpus::from_texts(texts).unwrap()
    }

    fn params(epochs: usize) -> FineTuneParams {
        FineTuneParams {
            epochs,
            batch_size: 4,
            learning_rate: 0.5,
            seed: 7,
            ..FineTuneParams::default()
        }
    }

    #[test]
    fn parses_base_refs() {
        assert_eq!(
            "scratch".parse::<BaseModelRef>().unwrap(),
            BaseModelRef::Scratch(ContextualConfig::default())
        );
        assert_eq!(
            "scratch:4:5:1".parse::<BaseModelRef>().unwrap(),
            BaseModelRef::Scratch(ContextualConfig {
                dim: 4,
                hidden: 5,
                window: 1
            })
        );
        assert!("scratch:4:5".parse::<BaseModelRef>().is_err());
        assert!(matches!(
            "some/dir".parse::<BaseModelRef>().unwrap(),
            BaseModelRef::Path(_)
        ));
    }

    #[test]
    fn training_lowers_loss_and_learns_context() {
        let c = corpus();
        let base = fine_tune(&c, &tiny(), &params(0), None).unwrap();
        let tuned = fine_tune(&c, &tiny(), &params(60), None).unwrap();
        let m = extract_word_contexts(&c, "heroin").remove(0);
        let p_base = base.score("heroin", &m).unwrap();
        let p_tuned = tuned.score("heroin", &m).unwrap();
        assert!(p_tuned > p_base, "{p_base} -> {p_tuned}");
        assert_eq!(tuned.rank_replacements(&m, 1).unwrap().entries[0].token, "heroin");
        let sum: f64 = tuned.distribution(&m).iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_equals_base_and_state_round_trips() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let base_dir = dir.path().join("base");
        let base = fine_tune(&c, &tiny(), &params(3), Some(&base_dir)).unwrap();
        let reloaded = BackendHandle::load(&base_dir).unwrap();
        let noop = fine_tune(&c, &BaseModelRef::Path(base_dir.clone()), &params(0), None).unwrap();
        let m = extract_word_contexts(&c, "coffee").remove(0);
        assert_eq!(base.distribution(&m), reloaded.distribution(&m));
        assert_eq!(base.distribution(&m), noop.distribution(&m));
        assert_eq!(reloaded.kind(), BackendKind::ContextualMlm);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let c = corpus();
        let a = fine_tune(&c, &tiny(), &params(5), None).unwrap();
        let b = fine_tune(&c, &tiny(), &params(5), None).unwrap();
        let m = extract_word_contexts(&c, "addict").remove(0);
        assert_eq!(a.distribution(&m), b.distribution(&m));
    }

    #[test]
    fn errors() {
        let c = corpus();
        assert!(matches!(
            fine_tune(&c, &BaseModelRef::Path("/nonexistent/base".into()), &params(1), None),
            Err(Error::BaseModelUnavailable(_))
        ));
        let huge = BaseModelRef::Scratch(ContextualConfig {
            dim: 4096,
            hidden: 4096,
            window: 8,
        });
        let p = FineTuneParams {
            max_memory_mb: 16,
            ..params(1)
        };
        assert!(matches!(fine_tune(&c, &huge, &p, None), Err(Error::OutOfMemory { .. })));
    }
}
