//! P@k for detection rankings, Acc@k for identification, and report output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::{tokenize, TargetKeyword};
use crate::detection::CandidateRanking;
use crate::error::{Error, Result};
use crate::identification::EuphemismDistribution;

pub const DETECTION_KS: [usize; 8] = [10, 20, 30, 40, 50, 60, 80, 100];
pub const IDENTIFICATION_KS: [usize; 3] = [1, 2, 3];

/// Known euphemisms and the keyword(s) each stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub euphemism_to_keyword: BTreeMap<String, Vec<TargetKeyword>>,
    pub category: String,
}

impl GroundTruth {
    /// Builds a truth map from `(euphemism, keyword surface)` pairs; every
    /// surface must be in `keywords`.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
        keywords: &[TargetKeyword],
    ) -> Result<Self> {
        let mut map: BTreeMap<String, Vec<TargetKeyword>> = BTreeMap::new();
        for (e, k) in pairs {
            let (e, k) = (normalize(e), normalize(k));
            if e.is_empty() {
                return Err(Error::InvalidInput("empty euphemism".into()));
            }
            let kw = keywords
                .iter()
                .find(|x| x.surface == k)
                .ok_or_else(|| Error::InvalidInput(format!("truth keyword {k:?} is not in the keyword list")))?;
            let entry = map.entry(e).or_default();
            if !entry.contains(kw) {
                entry.push(kw.clone());
            }
        }
        if map.is_empty() {
            return Err(Error::EmptyTruth);
        }
        let categories: BTreeSet<&str> = map.values().flatten().map(|k| k.category.as_str()).collect();
        let category = categories.into_iter().collect::<Vec<_>>().join(",");
        Ok(GroundTruth {
            euphemism_to_keyword: map,
            category,
        })
    }

    pub fn len(&self) -> usize {
        self.euphemism_to_keyword.len()
    }

    pub fn is_empty(&self) -> bool {
        self.euphemism_to_keyword.is_empty()
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.euphemism_to_keyword.contains_key(phrase)
    }

    pub fn keywords_for(&self, phrase: &str) -> &[TargetKeyword] {
        self.euphemism_to_keyword.get(phrase).map_or(&[], Vec::as_slice)
    }

    /// True when `word` is one token of a multi-word truth phrase.
    pub fn is_partial_phrase(&self, word: &str) -> bool {
        self.euphemism_to_keyword
            .keys()
            .any(|p| p.contains(' ') && p.split(' ').any(|t| t == word))
    }

    pub fn tag(&self, word: &str) -> CandidateTag {
        if self.contains(word) {
            CandidateTag::Correct
        } else if self.is_partial_phrase(word) {
            CandidateTag::PartialPhrase
        } else {
            CandidateTag::Unknown
        }
    }
}

fn normalize(s: &str) -> String {
    tokenize(s).join(" ")
}

/// Parses `euphemism<TAB>target_keyword` lines; `#` starts a comment.
pub fn parse_truth(text: &str, origin: &Path, keywords: &[TargetKeyword]) -> Result<GroundTruth> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (e, k) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            message: "expected \"euphemism<TAB>target_keyword\"".into(),
        })?;
        pairs.push((n + 1, e, k));
    }
    for &(line, _, k) in &pairs {
        if !keywords.iter().any(|x| x.surface == normalize(k)) {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: format!("target keyword {:?} is not in the keyword list", k.trim()),
            });
        }
    }
    GroundTruth::from_pairs(pairs.into_iter().map(|(_, e, k)| (e, k)), keywords)
}

pub fn load_truth(path: impl AsRef<Path>, keywords: &[TargetKeyword]) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_truth(&text, path, keywords)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateTag {
    Correct,
    /// Matches only part of a multi-word euphemism; counted incorrect.
    PartialPhrase,
    Unknown,
}

impl fmt::Display for CandidateTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CandidateTag::Correct => "correct",
            CandidateTag::PartialPhrase => "partial-phrase",
            CandidateTag::Unknown => "unknown",
        })
    }
}

/// Fraction of the top `k` words that exactly match a truth euphemism. When
/// fewer than `k` words exist the fraction is taken over all of them.
pub fn precision_at_k_words<S: AsRef<str>>(words: &[S], truth: &GroundTruth, k: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let n = k.min(words.len());
    if n < k {
        warn!(k, len = words.len(), "ranking shorter than k; precision computed over all entries");
    }
    if n == 0 {
        return Ok(0.0);
    }
    let hits = words[..n].iter().filter(|w| truth.contains(w.as_ref())).count();
    Ok(hits as f64 / n as f64)
}

pub fn precision_at_k(ranking: &CandidateRanking, truth: &GroundTruth, k: usize) -> Result<f64> {
    let words: Vec<&str> = ranking.words().collect();
    precision_at_k_words(&words, truth, k)
}

/// Fraction of euphemisms whose true keyword is among the `k` most probable.
pub fn accuracy_at_k(dists: &[EuphemismDistribution], truth: &GroundTruth, k: usize) -> Result<f64> {
    if dists.is_empty() {
        return Err(Error::InvalidInput("no distributions to evaluate".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let mut hits = 0;
    for d in dists {
        let gold = truth.keywords_for(&d.word);
        if gold.is_empty() {
            return Err(Error::InvalidInput(format!("{:?} is not in the ground truth", d.word)));
        }
        if d.n_kept == 0 {
            continue;
        }
        if d.ranked_keywords()
            .into_iter()
            .take(k)
            .any(|w| gold.iter().any(|g| g.surface == w))
        {
            hits += 1;
        }
    }
    Ok(hits as f64 / dists.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedCandidate {
    pub rank: usize,
    pub word: String,
    pub weight: f64,
    pub tag: CandidateTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// `(k, P@k)` in ascending k.
    pub precision: Vec<(usize, f64)>,
    pub candidates: Vec<AnnotatedCandidate>,
    pub warnings: Vec<String>,
}

pub fn detection_report(ranking: &CandidateRanking, truth: &GroundTruth, ks: &[usize]) -> Result<DetectionReport> {
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut warnings = Vec::new();
    let mut precision = Vec::with_capacity(ks.len());
    for &k in &ks {
        if k > ranking.entries.len() {
            warnings.push(format!(
                "P@{k}: ranking has only {} entries; computed over all of them",
                ranking.entries.len()
            ));
        }
        precision.push((k, precision_at_k(ranking, truth, k)?));
    }
    let depth = ks.last().copied().unwrap_or(0);
    let candidates = ranking
        .top(depth)
        .iter()
        .enumerate()
        .map(|(i, e)| AnnotatedCandidate {
            rank: i + 1,
            word: e.word.clone(),
            weight: e.weight,
            tag: truth.tag(&e.word),
        })
        .collect();
    Ok(DetectionReport {
        precision,
        candidates,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedEuphemism {
    pub word: String,
    pub truth: Vec<String>,
    pub ranked_keywords: Vec<String>,
    pub n_kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub accuracy: Vec<(usize, f64)>,
    pub euphemisms: Vec<IdentifiedEuphemism>,
    /// Distributions skipped because their word is not in the ground truth.
    pub skipped: Vec<String>,
}

/// Evaluates the distributions whose word is in the truth; others are listed
/// as skipped.
pub fn identification_report(
    dists: &[EuphemismDistribution],
    truth: &GroundTruth,
    ks: &[usize],
) -> Result<IdentificationReport> {
    let (known, unknown): (Vec<_>, Vec<_>) = dists.iter().cloned().partition(|d| truth.contains(&d.word));
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let accuracy = ks
        .iter()
        .map(|&k| Ok((k, accuracy_at_k(&known, truth, k)?)))
        .collect::<Result<_>>()?;
    Ok(IdentificationReport {
        accuracy,
        euphemisms: known
            .iter()
            .map(|d| IdentifiedEuphemism {
                word: d.word.clone(),
                truth: truth.keywords_for(&d.word).iter().map(|k| k.surface.clone()).collect(),
                ranked_keywords: d.ranked_keywords().into_iter().map(str::to_string).collect(),
                n_kept: d.n_kept,
            })
            .collect(),
        skipped: unknown.into_iter().map(|d| d.word).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    detection: Option<&'a DetectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    identification: Option<&'a IdentificationReport>,
}

pub fn render_report(
    detection: Option<&DetectionReport>,
    identification: Option<&IdentificationReport>,
    format: ReportFormat,
) -> Result<String> {
    if detection.is_none() && identification.is_none() {
        return Err(Error::InvalidInput("no report to render".into()));
    }
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(&JsonReport {
                detection,
                identification,
            })?;
            out.push('\n');
        }
        ReportFormat::Csv => {
            out.push_str("metric,k,value\n");
            for (k, v) in detection.iter().flat_map(|d| &d.precision) {
                let _ = writeln!(out, "P@k,{k},{v}");
            }
            for (k, v) in identification.iter().flat_map(|r| &r.accuracy) {
                let _ = writeln!(out, "Acc@k,{k},{v}");
            }
        }
        ReportFormat::Markdown => {
            if let Some(d) = detection {
                out.push_str("## Euphemism detection\n\n");
                metric_table(&mut out, "P", &d.precision);
                for w in &d.warnings {
                    let _ = writeln!(out, "> warning: {w}");
                }
                if !d.warnings.is_empty() {
                    out.push('\n');
                }
                out.push_str("| Rank | Candidate | Weight | Tag |\n|---:|---|---:|---|\n");
                for c in &d.candidates {
                    let _ = writeln!(out, "| {} | {} | {:.6} | {} |", c.rank, c.word, c.weight, c.tag);
                }
                out.push('\n');
            }
            if let Some(r) = identification {
                out.push_str("## Euphemism identification\n\n");
                metric_table(&mut out, "Acc", &r.accuracy);
                out.push_str("| Euphemism | Truth | Ranked keywords | Contexts kept |\n|---|---|---|---:|\n");
                for e in &r.euphemisms {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} |",
                        e.word,
                        e.truth.join(", "),
                        e.ranked_keywords.join(", "),
                        e.n_kept
                    );
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

fn metric_table(out: &mut String, name: &str, values: &[(usize, f64)]) {
    out.push('|');
    for (k, _) in values {
        let _ = write!(out, " {name}@{k} |");
    }
    out.push_str("\n|");
    out.push_str(&"---:|".repeat(values.len()));
    out.push_str("\n|");
    for (_, v) in values {
        let _ = write!(out, " {v:.2} |");
    }
    out.push_str("\n\n");
}

/// Writes `report.<ext>` into `dir`.
pub fn emit_report(
    dir: &Path,
    detection: Option<&DetectionReport>,
    identification: Option<&IdentificationReport>,
    format: ReportFormat,
) -> Result<PathBuf> {
    let text = render_report(detection, identification, format)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("report.{}", format.extension()));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
