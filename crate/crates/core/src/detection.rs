//! Euphemism detection: denoise keyword contexts with the MLM threshold, then
//! rank every vocabulary word by its summed slot probability over the
//! contexts that survive.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    extract_masked_sentences, is_punctuation_token, Corpus, MaskedExtraction, MaskedSentence,
    TargetKeyword, MASK_TOKEN,
};
use crate::error::{Error, Result};
use crate::mlm::{rank_of, BackendHandle, BackendKind};

pub const DEFAULT_T: usize = 5;
pub const DEFAULT_STOP_TOP_DF: usize = 50;

const SCORE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub masked: MaskedSentence,
    pub kept: bool,
    /// 1-based rank of the best single-token keyword in the full replacement
    /// ranking; `None` when no keyword is in the backend vocabulary.
    pub best_keyword_rank: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<MaskedSentence>,
    pub decisions: Vec<FilterDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub word: String,
    pub weight: f64,
    /// Kept contexts in which the word scored above the uniform probability.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingParams {
    pub t: Option<usize>,
    pub backend: BackendKind,
    pub n_kept: usize,
}

/// Euphemism candidates in descending weight order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRanking {
    pub entries: Vec<RankedCandidate>,
    pub params: RankingParams,
}

impl CandidateRanking {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.word.as_str())
    }

    pub fn top(&self, k: usize) -> &[RankedCandidate] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.word == word)
    }
}

/// Tokens never reported as candidates. Applied to output only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopTokens {
    tokens: BTreeSet<String>,
}

impl StopTokens {
    /// The mask token plus the `top_df` highest document-frequency corpus tokens.
    pub fn for_corpus(corpus: &Corpus, top_df: usize) -> Self {
        let mut tokens = corpus.top_document_frequency(top_df);
        tokens.insert(MASK_TOKEN.to_string());
        StopTokens { tokens }
    }

    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut tokens: BTreeSet<String> = tokens.into_iter().collect();
        tokens.insert(MASK_TOKEN.to_string());
        StopTokens { tokens }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn excludes(&self, token: &str, keywords: &HashSet<&str>) -> bool {
        self.tokens.contains(token) || is_punctuation_token(token) || keywords.contains(token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectParams {
    pub t: usize,
    pub stop_top_df: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            t: DEFAULT_T,
            stop_top_df: DEFAULT_STOP_TOP_DF,
        }
    }
}

/// Everything `detect` computed, for persistence and auditing.
#[derive(Debug, Clone)]
pub struct Detection {
    pub extraction: MaskedExtraction,
    pub filter: FilterOutcome,
    pub ranking: CandidateRanking,
}

/// Keeps the masked sentences whose top-`t` replacements include a
/// single-token target keyword.
pub fn filter_contexts(
    masked: &[MaskedSentence],
    keywords: &[TargetKeyword],
    handle: &BackendHandle,
    t: usize,
) -> Result<FilterOutcome> {
    if t == 0 {
        return Err(Error::InvalidInput("MLM threshold t must be >= 1".into()));
    }
    let vocab = handle.vocabulary();
    let keyword_idx: Vec<usize> = keywords
        .iter()
        .filter(|k| k.is_single_token())
        .filter_map(|k| vocab.index_of(&k.surface))
        .collect();
    let decisions: Vec<FilterDecision> = masked
        .par_iter()
        .map(|m| {
            let best = if keyword_idx.is_empty() {
                None
            } else {
                let dist = handle.distribution(m);
                keyword_idx.iter().map(|&k| rank_of(&dist, k)).min()
            };
            FilterDecision {
                masked: m.clone(),
                kept: best.is_some_and(|r| r <= t),
                best_keyword_rank: best,
            }
        })
        .collect();
    let kept = decisions
        .iter()
        .filter(|d| d.kept)
        .map(|d| d.masked.clone())
        .collect();
    Ok(FilterOutcome { kept, decisions })
}

/// Per-token summed probability and support over `kept`, in vocabulary order.
/// Sums run in input order regardless of thread count.
pub fn candidate_weights(kept: &[MaskedSentence], handle: &BackendHandle) -> (Vec<f64>, Vec<usize>) {
    let v = handle.vocabulary().len();
    let uniform = 1.0 / v as f64;
    let mut weights = vec![0.0; v];
    let mut support = vec![0usize; v];
    for chunk in kept.chunks(SCORE_CHUNK) {
        let dists: Vec<Vec<f64>> = chunk.par_iter().map(|m| handle.distribution(m)).collect();
        for dist in dists {
            for (i, p) in dist.into_iter().enumerate() {
                weights[i] += p;
                if p > uniform {
                    support[i] += 1;
                }
            }
        }
    }
    (weights, support)
}

/// Ranks vocabulary words by `w_c = sum over kept m of h(c, m)`.
pub fn generate_candidates(
    kept: &[MaskedSentence],
    handle: &BackendHandle,
    keywords: &[TargetKeyword],
    stop: &StopTokens,
) -> Result<CandidateRanking> {
    if kept.is_empty() {
        return Err(Error::NoInformativeContexts);
    }
    let (weights, support) = candidate_weights(kept, handle);
    let keyword_set: HashSet<&str> = keywords.iter().map(|k| k.surface.as_str()).collect();
    let vocab = handle.vocabulary();
    let mut entries: Vec<RankedCandidate> = vocab
        .iter()
        .enumerate()
        .filter(|(_, tok)| !stop.excludes(tok, &keyword_set))
        .map(|(i, tok)| RankedCandidate {
            word: tok.to_string(),
            weight: weights[i],
            support: support[i],
        })
        .collect();
    entries.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.word.cmp(&b.word)));
    Ok(CandidateRanking {
        entries,
        params: RankingParams {
            t: None,
            backend: handle.kind(),
            n_kept: kept.len(),
        },
    })
}

/// Context extraction, filtering and generation with one backend.
pub fn detect(
    corpus: &Corpus,
    keywords: &[TargetKeyword],
    handle: &BackendHandle,
    params: &DetectParams,
) -> Result<Detection> {
    detect_with(corpus, keywords, handle, handle, params)
}

/// Like [`detect`] but scores candidates with a separate generation backend
/// (for example the unadapted base model).
pub fn detect_with(
    corpus: &Corpus,
    keywords: &[TargetKeyword],
    filter_handle: &BackendHandle,
    generation_handle: &BackendHandle,
    params: &DetectParams,
) -> Result<Detection> {
    if keywords.is_empty() {
        return Err(Error::InvalidInput("keyword list is empty".into()));
    }
    let extraction = extract_masked_sentences(corpus, keywords);
    for k in extraction.missing_keywords() {
        tracing::warn!(keyword = %k.surface, "keyword does not occur in the corpus");
    }
    if extraction.masked.is_empty() {
        return Err(Error::NoKeywordOccurrences);
    }
    let filter = filter_contexts(&extraction.masked, keywords, filter_handle, params.t)?;
    tracing::info!(
        masked = extraction.masked.len(),
        kept = filter.kept.len(),
        t = params.t,
        "filtered keyword contexts"
    );
    let stop = StopTokens::for_corpus(corpus, params.stop_top_df);
    let mut ranking = generate_candidates(&filter.kept, generation_handle, keywords, &stop)?;
    ranking.params.t = Some(params.t);
    Ok(Detection {
        extraction,
        filter,
        ranking,
    })
}

/// Most frequent bigrams containing `word`, for reporting multi-word
/// euphemisms detected through their head token.
pub fn bigram_completions(corpus: &Corpus, word: &str, top: usize) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in corpus.sentences() {
        for pair in s.tokens.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if (a == word && !is_punctuation_token(b)) || (b == word && !is_punctuation_token(a)) {
                *counts.entry(format!("{a} {b}")).or_insert(0) += 1;
            }
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(top);
    out
}

/// Kept context of one candidate with the candidate's slot probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateContext {
    pub masked_id: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateContexts {
    pub word: String,
    pub contexts: Vec<CandidateContext>,
}

/// For each of the first `n_words` candidates, the `per_word` kept contexts
/// where the candidate scores highest.
pub fn top_contexts(
    ranking: &CandidateRanking,
    kept: &[MaskedSentence],
    handle: &BackendHandle,
    n_words: usize,
    per_word: usize,
) -> Vec<CandidateContexts> {
    let words: Vec<(String, Option<usize>)> = ranking
        .top(n_words)
        .iter()
        .map(|e| (e.word.clone(), handle.vocabulary().index_of(&e.word)))
        .collect();
    let scores: Vec<Vec<f64>> = kept
        .par_iter()
        .map(|m| {
            let dist = handle.distribution(m);
            words
                .iter()
                .map(|(_, idx)| idx.map_or(0.0, |i| dist[i]))
                .collect()
        })
        .collect();
    words
        .iter()
        .enumerate()
        .map(|(wi, (word, _))| {
            let mut order: Vec<usize> = (0..kept.len()).collect();
            order.sort_by(|&a, &b| scores[b][wi].total_cmp(&scores[a][wi]).then(a.cmp(&b)));
            CandidateContexts {
                word: word.clone(),
                contexts: order
                    .into_iter()
                    .take(per_word)
                    .map(|mi| CandidateContext {
                        masked_id: kept[mi].id.clone(),
                        text: kept[mi].text(),
                        score: scores[mi][wi],
                    })
                    .collect(),
            }
        })
        .collect()
}

/// `rank  word  weight  support`, preceded by `#` parameter lines.
pub fn ranking_to_tsv(ranking: &CandidateRanking) -> String {
    let mut out = String::new();
    let p = &ranking.params;
    if let Some(t) = p.t {
        let _ = writeln!(out, "# t\t{t}");
    }
    let _ = writeln!(out, "# backend\t{}", p.backend);
    let _ = writeln!(out, "# n_kept\t{}", p.n_kept);
    out.push_str("rank\tword\tweight\tsupport\n");
    for (i, e) in ranking.entries.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", i + 1, e.word, e.weight, e.support);
    }
    out
}

pub fn ranking_from_tsv(text: &str, origin: &Path) -> Result<CandidateRanking> {
    let bad = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut t = None;
    let mut backend = None;
    let mut n_kept = 0;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if let Some(meta) = line.strip_prefix("# ") {
            match meta.split_once('\t') {
                Some(("t", v)) => t = Some(v.parse().map_err(|_| bad(lineno, "bad t".into()))?),
                Some(("backend", v)) => backend = Some(v.parse::<BackendKind>()?),
                Some(("n_kept", v)) => {
                    n_kept = v.parse().map_err(|_| bad(lineno, "bad n_kept".into()))?
                }
                _ => {}
            }
            continue;
        }
        if line.is_empty() || line.starts_with("rank\t") {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        let [_, word, weight, support] = parts[..] else {
            return Err(bad(lineno, "expected rank, word, weight, support".into()));
        };
        entries.push(RankedCandidate {
            word: word.to_string(),
            weight: weight
                .parse()
                .map_err(|_| bad(lineno, format!("bad weight {weight:?}")))?,
            support: support
                .parse()
                .map_err(|_| bad(lineno, format!("bad support {support:?}")))?,
        });
    }
    Ok(CandidateRanking {
        entries,
        params: RankingParams {
            t,
            backend: backend.unwrap_or(BackendKind::CountOracle),
            n_kept,
        },
    })
}

pub fn write_ranking(path: &Path, ranking: &CandidateRanking) -> Result<()> {
    fs::write(path, ranking_to_tsv(ranking)).map_err(|e| Error::io(path, e))
}

pub fn read_ranking(path: &Path) -> Result<CandidateRanking> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ranking_from_tsv(&text, path)
}

pub fn write_decisions(path: &Path, decisions: &[FilterDecision]) -> Result<()> {
    let mut out = Vec::new();
    for d in decisions {
        serde_json::to_writer(&mut out, d)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_decisions(path: &Path) -> Result<Vec<FilterDecision>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
