//! Synthetic corpora with planted euphemisms.
//!
//! Each target keyword gets a few private "signal" frames (two words either
//! side of the slot). Its euphemisms appear in those frames for a share of
//! their uses and in shared "cover" frames next to ordinary nouns for the
//! rest. Keywords also show up in "generic" frames crowded with frequent
//! nouns, so that the threshold filter has something to drop. Everything
//! else is filler text.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TargetKeyword};
use crate::error::{Error, Result};
use crate::evaluation::GroundTruth;

pub const CORPUS_FILE: &str = "corpus.txt";
pub const KEYWORDS_FILE: &str = "keywords.tsv";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const CATEGORY: &str = "drug";

const FAMILIES: [(&str, [&str; 5]); 3] = [
    ("heroin", ["boy", "dope", "smack", "tar", "junk"]),
    ("cocaine", ["snow", "blow", "coke", "flake", "yayo"]),
    ("marijuana", ["weed", "pot", "grass", "herb", "ganja"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Number of target keywords; the first three are real drug names.
    pub keywords: usize,
    pub euphemisms_per_keyword: usize,
    /// Keyword uses in its signal frames.
    pub keyword_occurrences: usize,
    /// Uses per euphemism, split between signal and cover frames.
    pub euphemism_occurrences: usize,
    /// Share of euphemism uses in the innocent cover sense.
    pub cover_ratio: f64,
    /// Extra keyword uses in generic frames, relative to `keyword_occurrences`.
    pub generic_ratio: f64,
    pub frames_per_keyword: usize,
    /// Chance that a signal-frame sentence gets a twin with a random filler
    /// in the slot.
    pub noise_rate: f64,
    pub filler_vocab: usize,
    pub background_sentences: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            keywords: 3,
            euphemisms_per_keyword: 5,
            keyword_occurrences: 40,
            euphemism_occurrences: 12,
            cover_ratio: 0.5,
            generic_ratio: 0.25,
            frames_per_keyword: 4,
            noise_rate: 0.05,
            filler_vocab: 300,
            background_sentences: 400,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.keywords == 0 || self.euphemisms_per_keyword == 0 || self.frames_per_keyword == 0 {
            return bad("keywords, euphemisms_per_keyword and frames_per_keyword must be >= 1");
        }
        if self.keyword_occurrences == 0 {
            return bad("keyword_occurrences must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.cover_ratio) || !(0.0..=1.0).contains(&self.noise_rate) {
            return bad("cover_ratio and noise_rate must lie in [0, 1]");
        }
        if !(self.generic_ratio >= 0.0) {
            return bad("generic_ratio must be >= 0");
        }
        if self.filler_vocab < 10 {
            return bad("filler_vocab must be >= 10");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub posts: Vec<String>,
    pub keywords: Vec<TargetKeyword>,
    /// `(euphemism, keyword surface)` pairs.
    pub truth: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPaths {
    pub corpus: PathBuf,
    pub keywords: PathBuf,
    pub truth: PathBuf,
}

impl SynthCorpus {
    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::from_texts(&self.posts)
    }

    pub fn ground_truth(&self) -> Result<GroundTruth> {
        GroundTruth::from_pairs(self.truth.iter().map(|(e, k)| (e.as_str(), k.as_str())), &self.keywords)
    }

    pub fn euphemisms_of(&self, keyword: &str) -> Vec<&str> {
        self.truth
            .iter()
            .filter(|(_, k)| k == keyword)
            .map(|(e, _)| e.as_str())
            .collect()
    }

    /// Writes `corpus.txt`, `keywords.tsv` and `truth.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<SynthPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths {
            corpus: dir.join(CORPUS_FILE),
            keywords: dir.join(KEYWORDS_FILE),
            truth: dir.join(TRUTH_FILE),
        };
        let mut text = self.posts.join("\n");
        text.push('\n');
        fs::write(&paths.corpus, text).map_err(|e| Error::io(&paths.corpus, e))?;
        crate::corpus::write_keywords(&paths.keywords, &self.keywords)?;
        let mut truth = String::from("# euphemism\ttarget_keyword\n");
        for (e, k) in &self.truth {
            truth.push_str(&format!("{e}\t{k}\n"));
        }
        fs::write(&paths.truth, truth).map_err(|e| Error::io(&paths.truth, e))?;
        Ok(paths)
    }
}

/// Pronounceable made-up words, never repeating and never colliding with
/// reserved words.
struct Mint {
    used: HashSet<String>,
}

impl Mint {
    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr"];
        const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
        loop {
            let n = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..n {
                w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
                w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

struct Frame {
    left: [String; 2],
    right: [String; 2],
}

struct Writer<'a> {
    rng: ChaCha8Rng,
    fillers: &'a [String],
    posts: Vec<String>,
}

impl Writer<'_> {
    fn filler(&mut self) -> &str {
        let u: f64 = self.rng.gen();
        let i = ((self.fillers.len() as f64) * u.powf(1.5)) as usize;
        &self.fillers[i.min(self.fillers.len() - 1)]
    }

    fn fillers(&mut self, lo: usize, hi: usize) -> Vec<String> {
        let n = self.rng.gen_range(lo..=hi);
        (0..n).map(|_| self.filler().to_string()).collect()
    }

    fn framed(&mut self, frame: &Frame, slot: &str) {
        let mut toks = self.fillers(1, 3);
        toks.extend(frame.left.iter().cloned());
        toks.push(slot.to_string());
        toks.extend(frame.right.iter().cloned());
        toks.extend(self.fillers(1, 3));
        self.posts.push(format!("{} .", toks.join(" ")));
    }

    fn background(&mut self) {
        let toks = self.fillers(4, 10);
        self.posts.push(format!("{} .", toks.join(" ")));
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mint = Mint {
        used: FAMILIES
            .iter()
            .flat_map(|(k, es)| std::iter::once(*k).chain(es.iter().copied()))
            .map(str::to_string)
            .collect(),
    };

    let mut families: Vec<(String, Vec<String>)> = Vec::new();
    for i in 0..config.keywords {
        let (keyword, mut euphemisms) = match FAMILIES.get(i) {
            Some((k, es)) => (k.to_string(), es.iter().map(|e| e.to_string()).collect::<Vec<_>>()),
            None => (mint.word(&mut rng), Vec::new()),
        };
        euphemisms.truncate(config.euphemisms_per_keyword);
        while euphemisms.len() < config.euphemisms_per_keyword {
            euphemisms.push(mint.word(&mut rng));
        }
        families.push((keyword, euphemisms));
    }

    let mut frame = |rng: &mut ChaCha8Rng| {
        let w = mint.words(4, rng);
        Frame {
            left: [w[0].clone(), w[1].clone()],
            right: [w[2].clone(), w[3].clone()],
        }
    };
    let signal: Vec<Vec<Frame>> = (0..config.keywords)
        .map(|_| (0..config.frames_per_keyword).map(|_| frame(&mut rng)).collect())
        .collect();
    let cover: Vec<Frame> = (0..6).map(|_| frame(&mut rng)).collect();
    let generic: Vec<Frame> = (0..2).map(|_| frame(&mut rng)).collect();
    let cover_nouns = mint.words(6, &mut rng);
    let generic_nouns = mint.words(8, &mut rng);
    let fillers = mint.words(config.filler_vocab, &mut rng);

    let mut w = Writer {
        rng,
        fillers: &fillers,
        posts: Vec::new(),
    };
    let mut generic_counts = vec![vec![0usize; config.keywords]; generic.len()];
    for (fi, (keyword, euphemisms)) in families.iter().enumerate() {
        let frames = &signal[fi];
        for n in 0..config.keyword_occurrences {
            let f = &frames[n % frames.len()];
            w.framed(f, keyword);
            if w.rng.gen_bool(config.noise_rate) {
                let noise = w.filler().to_string();
                w.framed(f, &noise);
            }
        }
        let n_generic = (config.keyword_occurrences as f64 * config.generic_ratio).round() as usize;
        for n in 0..n_generic {
            let g = n % generic.len();
            generic_counts[g][fi] += 1;
            w.framed(&generic[g], keyword);
        }
        let n_cover = (config.euphemism_occurrences as f64 * config.cover_ratio).round() as usize;
        for e in euphemisms {
            for n in 0..config.euphemism_occurrences {
                if n < n_cover {
                    let f = &cover[w.rng.gen_range(0..cover.len())];
                    w.framed(f, e);
                } else {
                    let f = &frames[w.rng.gen_range(0..frames.len())];
                    w.framed(f, e);
                }
            }
        }
    }
    for f in &cover {
        for noun in &cover_nouns {
            for _ in 0..2 {
                w.framed(f, noun);
            }
        }
    }
    // Crowd the generic frames so each keyword falls well below the top ranks.
    for (g, f) in generic.iter().enumerate() {
        let most = generic_counts[g].iter().copied().max().unwrap_or(0);
        for noun in &generic_nouns {
            for _ in 0..most + 2 {
                w.framed(f, noun);
            }
        }
    }
    for _ in 0..config.background_sentences {
        w.background();
    }

    let Writer { mut rng, mut posts, .. } = w;
    posts.shuffle(&mut rng);
    let keywords = families
        .iter()
        .map(|(k, _)| TargetKeyword::new(k, CATEGORY))
        .collect::<Result<Vec<_>>>()?;
    let truth = families
        .iter()
        .flat_map(|(k, es)| es.iter().map(move |e| (e.clone(), k.clone())))
        .collect();
    Ok(SynthCorpus {
        posts,
        keywords,
        truth,
    })
}
