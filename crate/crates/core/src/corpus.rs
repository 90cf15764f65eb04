//! Corpus ingestion, normalization and masked-context extraction.
//!
//! Text is lowercased and split on whitespace with punctuation detached into
//! its own tokens. Posts are split into sentences on `.`, `!` and `?` when
//! followed by whitespace or end of text. Exact duplicate sentences (same token
//! sequence) are dropped, and sentence ids are assigned in order of first
//! appearance so that lexicographic id order equals corpus order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placeholder token occupying the mask slot of a [`MaskedSentence`].
pub const MASK_TOKEN: &str = "[MASK]";

/// Longest masked sentence handed to a backend, mask slot included.
pub const MAX_SENTENCE_TOKENS: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub source_doc: String,
}

/// An immutable, deduplicated collection of tokenized sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    vocabulary: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    PlainLines,
    JsonLines,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain-lines" | "plain" | "txt" => Ok(CorpusFormat::PlainLines),
            "json-lines" | "jsonl" => Ok(CorpusFormat::JsonLines),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::PlainLines => "plain-lines",
            CorpusFormat::JsonLines => "json-lines",
        })
    }
}

/// A category-tagged keyword whose euphemisms are sought.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TargetKeyword {
    /// Normalized surface form, tokens joined by single spaces.
    pub surface: String,
    pub category: String,
}

impl TargetKeyword {
    /// Builds a keyword, normalizing the surface the same way corpus text is.
    pub fn new(surface: &str, category: &str) -> Result<Self> {
        let tokens = tokenize(surface);
        if tokens.is_empty() {
            return Err(Error::InvalidInput(format!(
                "keyword surface {surface:?} is empty after normalization"
            )));
        }
        Ok(TargetKeyword {
            surface: tokens.join(" "),
            category: category.trim().to_string(),
        })
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.surface.split(' ').collect()
    }

    pub fn is_single_token(&self) -> bool {
        !self.surface.contains(' ')
    }
}

impl fmt::Display for TargetKeyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface)
    }
}

/// A sentence with one occurrence of a phrase replaced by a single mask slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSentence {
    /// `<sentence id>@<start>+<len>` in origin-sentence coordinates.
    pub id: String,
    /// Tokens with [`MASK_TOKEN`] at `mask_index`.
    pub tokens: Vec<String>,
    pub mask_index: usize,
    pub origin_sentence_id: String,
    /// Index in the origin sentence of `tokens[0]`; nonzero only when the
    /// sentence was truncated to [`MAX_SENTENCE_TOKENS`].
    pub window_start: usize,
    pub masked_surface: String,
    pub origin_keyword: Option<TargetKeyword>,
}

impl MaskedSentence {
    /// Reinserts the masked surface, yielding the covered slice of the origin sentence.
    pub fn reconstruct(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.tokens.len() + 2);
        out.extend_from_slice(&self.tokens[..self.mask_index]);
        out.extend(self.masked_surface.split(' ').map(str::to_string));
        out.extend_from_slice(&self.tokens[self.mask_index + 1..]);
        out
    }

    /// Same sentence with `word` written into the mask slot.
    pub fn fill(&self, word: &str) -> String {
        let mut toks: Vec<&str> = self.tokens.iter().map(String::as_str).collect();
        toks[self.mask_index] = word;
        toks.join(" ")
    }

    pub fn left_context(&self) -> &[String] {
        &self.tokens[..self.mask_index]
    }

    pub fn right_context(&self) -> &[String] {
        &self.tokens[self.mask_index + 1..]
    }

    pub fn non_mask_len(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Tokens excluding the mask slot.
    pub fn context_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.mask_index)
            .map(|(_, t)| t.as_str())
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Output of [`extract_masked_sentences`].
#[derive(Debug, Clone, Default)]
pub struct MaskedExtraction {
    pub masked: Vec<MaskedSentence>,
    /// Occurrence count per keyword, in keyword-list order. Zero entries mark
    /// keywords that contribute nothing.
    pub occurrences: Vec<(TargetKeyword, usize)>,
}

impl MaskedExtraction {
    pub fn missing_keywords(&self) -> impl Iterator<Item = &TargetKeyword> {
        self.occurrences
            .iter()
            .filter(|(_, n)| *n == 0)
            .map(|(k, _)| k)
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '\u{2000}'..='\u{206F}' | '\u{3000}'..='\u{303F}' | '¡' | '¿' | '«' | '»')
}

pub fn is_punctuation_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punctuation)
}

/// Lowercases and splits text into whitespace-separated words, each
/// punctuation character becoming a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_lowercase().collect());
        } else {
            current.extend(c.to_lowercase());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Splits a post after runs of `.`, `!` or `?` that are followed by whitespace
/// or the end of the text. Decimal points and abbreviations glued to the next
/// character do not split.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if matches!(d, '.' | '!' | '?') {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let at_boundary = chars.peek().is_none_or(|&(_, d)| d.is_whitespace());
            if at_boundary {
                let piece = text[start..end].trim();
                if !piece.is_empty() {
                    out.push(piece);
                }
                start = end;
            }
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

impl Corpus {
    /// Builds a corpus from `(source_doc, text)` posts.
    pub fn from_documents<I, D, T>(documents: I) -> Result<Self>
    where
        I: IntoIterator<Item = (D, T)>,
        D: Into<String>,
        T: AsRef<str>,
    {
        let mut seen: HashSet<Vec<String>> = HashSet::new();
        let mut sentences = Vec::new();
        for (doc, text) in documents {
            let doc = doc.into();
            for piece in split_sentences(text.as_ref()) {
                let tokens = tokenize(piece);
                if tokens.is_empty() || !seen.insert(tokens.clone()) {
                    continue;
                }
                sentences.push(Sentence {
                    id: String::new(),
                    tokens,
                    source_doc: doc.clone(),
                });
            }
        }
        Self::from_sentences(sentences)
    }

    /// Builds a corpus from plain texts, tagging documents by position.
    pub fn from_texts<I, T>(texts: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        Self::from_documents(
            texts
                .into_iter()
                .enumerate()
                .map(|(i, t)| (format!("doc-{i}"), t)),
        )
    }

    /// Takes already tokenized sentences; ids are reassigned in input order.
    /// Exact duplicates and empty sentences are dropped.
    pub fn from_sentences(sentences: Vec<Sentence>) -> Result<Self> {
        let mut seen: HashSet<Vec<String>> = HashSet::new();
        let mut kept = Vec::with_capacity(sentences.len());
        for s in sentences {
            if s.tokens.is_empty() || !seen.insert(s.tokens.clone()) {
                continue;
            }
            kept.push(s);
        }
        if kept.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let width = kept.len().to_string().len().max(6);
        let mut vocabulary = BTreeMap::new();
        for (i, s) in kept.iter_mut().enumerate() {
            s.id = format!("s{i:0width$}");
            for t in &s.tokens {
                *vocabulary.entry(t.clone()).or_insert(0) += 1;
            }
        }
        Ok(Corpus {
            sentences: kept,
            vocabulary,
        })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Distinct tokens with their aggregate counts.
    pub fn vocabulary(&self) -> &BTreeMap<String, u64> {
        &self.vocabulary
    }

    pub fn token_count(&self, token: &str) -> u64 {
        self.vocabulary.get(token).copied().unwrap_or(0)
    }

    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.sentences
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.sentences[i])
    }

    /// Number of (possibly overlapping) start positions where `phrase` occurs.
    pub fn occurrence_count(&self, phrase: &str) -> usize {
        let needle = tokenize(phrase);
        self.sentences
            .iter()
            .map(|s| match_positions(&s.tokens, &needle).count())
            .sum()
    }

    /// Number of sentences containing each token at least once.
    pub fn document_frequencies(&self) -> BTreeMap<&str, usize> {
        let mut df = BTreeMap::new();
        for s in &self.sentences {
            let distinct: BTreeSet<&str> = s.tokens.iter().map(String::as_str).collect();
            for t in distinct {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        df
    }

    /// The `n` tokens with the highest document frequency, ties broken
    /// lexicographically.
    pub fn top_document_frequency(&self, n: usize) -> BTreeSet<String> {
        let mut df: Vec<(&str, usize)> = self.document_frequencies().into_iter().collect();
        df.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        df.into_iter().take(n).map(|(t, _)| t.to_string()).collect()
    }

    /// Whether the sentence contains any keyword surface as a contiguous run.
    pub fn sentence_contains_any(sentence: &Sentence, keywords: &[TargetKeyword]) -> bool {
        keywords.iter().any(|k| {
            let needle = k.tokens();
            let found = match_positions(&sentence.tokens, &needle).next().is_some();
            found
        })
    }
}

/// Reads a corpus file.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut docs: Vec<(String, String)> = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match format {
            CorpusFormat::PlainLines => docs.push((format!("line-{}", lineno + 1), line.to_string())),
            CorpusFormat::JsonLines => {
                let value: serde_json::Value =
                    serde_json::from_str(line).map_err(|e| Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        message: e.to_string(),
                    })?;
                let text = value.get("text").and_then(|v| v.as_str()).ok_or_else(|| {
                    Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        message: "missing string field \"text\"".into(),
                    }
                })?;
                let doc = match value.get("id") {
                    Some(serde_json::Value::String(s)) => s.clone(),
                    Some(serde_json::Value::Number(n)) => n.to_string(),
                    _ => format!("line-{}", lineno + 1),
                };
                docs.push((doc, text.to_string()));
            }
        }
    }
    Corpus::from_documents(docs)
}

/// Parses a keyword list: one `surface<TAB>category` per line, `#` comments.
pub fn parse_keywords(text: &str, origin: &Path) -> Result<Vec<TargetKeyword>> {
    let mut out: Vec<TargetKeyword> = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (surface, category) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message: "expected \"surface<TAB>category\"".into(),
        })?;
        let keyword = TargetKeyword::new(surface, category).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(keyword.surface.clone()) {
            return Err(Error::DuplicateKeyword(keyword.surface));
        }
        out.push(keyword);
    }
    Ok(out)
}

pub fn load_keywords(path: impl AsRef<Path>) -> Result<Vec<TargetKeyword>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let keywords = parse_keywords(&raw, path)?;
    if keywords.is_empty() {
        return Err(Error::InvalidInput(format!(
            "keyword list {} is empty",
            path.display()
        )));
    }
    Ok(keywords)
}

pub fn write_keywords(path: impl AsRef<Path>, keywords: &[TargetKeyword]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for k in keywords {
        out.push_str(&k.surface);
        out.push('\t');
        out.push_str(&k.category);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn match_positions<'a, S: AsRef<str>>(
    haystack: &'a [String],
    needle: &'a [S],
) -> impl Iterator<Item = usize> + 'a {
    let n = needle.len();
    let upper = if n == 0 || haystack.len() < n {
        0
    } else {
        haystack.len() - n + 1
    };
    (0..upper).filter(move |&i| {
        haystack[i..i + n]
            .iter()
            .zip(needle)
            .all(|(a, b)| a == b.as_ref())
    })
}

fn mask_at(
    sentence: &Sentence,
    start: usize,
    len: usize,
    origin_keyword: Option<&TargetKeyword>,
) -> MaskedSentence {
    let tokens = &sentence.tokens;
    let end = start + len;
    let budget = MAX_SENTENCE_TOKENS - 1;
    let right_avail = tokens.len() - end;
    let (left_take, right_take) = if start + right_avail <= budget {
        (start, right_avail)
    } else {
        let left = start.min(budget / 2);
        let right = right_avail.min(budget - left);
        (start.min(budget - right), right)
    };
    let window_start = start - left_take;
    let mut masked = Vec::with_capacity(left_take + right_take + 1);
    masked.extend_from_slice(&tokens[window_start..start]);
    masked.push(MASK_TOKEN.to_string());
    masked.extend_from_slice(&tokens[end..end + right_take]);
    MaskedSentence {
        id: format!("{}@{}+{}", sentence.id, start, len),
        tokens: masked,
        mask_index: left_take,
        origin_sentence_id: sentence.id.clone(),
        window_start,
        masked_surface: tokens[start..end].join(" "),
        origin_keyword: origin_keyword.cloned(),
    }
}

/// Masks every occurrence of every keyword surface, one masked sentence per
/// (keyword, occurrence). Ordered by sentence id, then position, then keyword
/// list order.
pub fn extract_masked_sentences(corpus: &Corpus, keywords: &[TargetKeyword]) -> MaskedExtraction {
    let needles: Vec<Vec<&str>> = keywords.iter().map(TargetKeyword::tokens).collect();
    let mut counts = vec![0usize; keywords.len()];
    let mut masked = Vec::new();
    for sentence in corpus.sentences() {
        let mut hits: Vec<(usize, usize)> = Vec::new();
        for (ki, needle) in needles.iter().enumerate() {
            for pos in match_positions(&sentence.tokens, needle) {
                hits.push((pos, ki));
            }
        }
        hits.sort_unstable();
        for (pos, ki) in hits {
            counts[ki] += 1;
            masked.push(mask_at(sentence, pos, needles[ki].len(), Some(&keywords[ki])));
        }
    }
    MaskedExtraction {
        masked,
        occurrences: keywords.iter().cloned().zip(counts).collect(),
    }
}

/// Masks every occurrence of an arbitrary word or phrase.
pub fn extract_word_contexts(corpus: &Corpus, word: &str) -> Vec<MaskedSentence> {
    let needle = tokenize(word);
    if needle.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for sentence in corpus.sentences() {
        for pos in match_positions(&sentence.tokens, &needle) {
            out.push(mask_at(sentence, pos, needle.len(), None));
        }
    }
    out
}
