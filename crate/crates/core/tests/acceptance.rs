//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use euphemism::corpus::{extract_word_contexts, Corpus, MaskedSentence, Sentence, TargetKeyword, MASK_TOKEN};
use euphemism::detection::{detect, filter_contexts, read_ranking, CandidateRanking, DetectParams, RankedCandidate, RankingParams};
use euphemism::evaluation::{accuracy_at_k, load_truth, precision_at_k, precision_at_k_words, GroundTruth};
use euphemism::identification::{
    build_coarse_training_set, build_fine_training_set, identify_many, read_distributions, train_coarse, train_fine,
    ClassifierOptions, CoarseClassifier, EuphemismDistribution, FineTrainingSet, IdentifyOptions, LabeledContext,
    SplitRatios, DEFAULT_MIN_CONTEXT_TOKENS,
};
use euphemism::mlm::{build_count_oracle, BackendHandle, BackendKind, DEFAULT_SMOOTHING, DEFAULT_WINDOW};
use euphemism::corpus::extract_masked_sentences;
use euphemism::pipeline::{cmd_detect, cmd_identify, cmd_synth, RunConfig, RunDir, WordSelection};
use euphemism::synth::{generate, SynthConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("detection-oracle-equivalence", oracle_equivalence),
        ("filter-monotonicity", filter_monotonicity),
        ("planted-euphemism-end-to-end", planted_end_to_end),
        ("metric-correctness", metric_correctness),
        ("coarse-classifier-separable", coarse_separable),
        ("fine-classifier-10-class", fine_ten_class),
        ("identification-normalization", identification_normalization),
        ("self-supervision-round-trip", self_supervision_round_trip),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<32} {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<32} {detail} ({secs:.2}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// Random corpora

struct RandomCorpus {
    corpus: Corpus,
    keywords: Vec<TargetKeyword>,
}

fn zipf_word(rng: &mut ChaCha8Rng, n: usize) -> String {
    let u: f64 = rng.gen();
    format!("w{:03}", ((u * u * n as f64) as usize).min(n - 1))
}

fn random_corpus(seed: u64, sentences: usize, vocab: usize) -> RandomCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surfaces = ["w020", "w031", "w045", "w007 w012"];
    let mut out = Vec::with_capacity(sentences);
    for i in 0..sentences {
        let len = rng.gen_range(3..14);
        let mut tokens: Vec<String> = (0..len).map(|_| zipf_word(&mut rng, vocab)).collect();
        if rng.gen_bool(0.4) {
            let kw = surfaces[rng.gen_range(0..surfaces.len())];
            let at = rng.gen_range(0..=tokens.len());
            tokens.splice(at..at, kw.split(' ').map(str::to_string));
        }
        out.push(Sentence {
            id: String::new(),
            tokens,
            source_doc: format!("d{i}"),
        });
    }
    RandomCorpus {
        corpus: Corpus::from_sentences(out).unwrap(),
        keywords: surfaces.iter().map(|s| TargetKeyword::new(s, "test").unwrap()).collect(),
    }
}

// Independent brute-force detection over the count oracle.

fn window_context(tokens: &[String], slot: usize, w: usize) -> (Vec<String>, Vec<String>) {
    let left = (1..=w)
        .rev()
        .map(|off| if slot >= off { tokens[slot - off].clone() } else { "<s>".into() })
        .collect();
    let right = (1..=w)
        .map(|off| tokens.get(slot + off).cloned().unwrap_or_else(|| "</s>".into()))
        .collect();
    (left, right)
}

fn brute_force_detect(corpus: &Corpus, keywords: &[TargetKeyword], t: usize, top_df: usize) -> Vec<RankedCandidate> {
    let w = DEFAULT_WINDOW;
    let s = DEFAULT_SMOOTHING;
    let sentences: Vec<&Vec<String>> = corpus.sentences().iter().map(|x| &x.tokens).collect();
    let vocab: Vec<String> = sentences.iter().flat_map(|t| t.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let v = vocab.len();

    // every (keyword, occurrence), ordered by sentence, position, keyword
    let mut contexts = Vec::new();
    for toks in &sentences {
        let mut hits = Vec::new();
        for (ki, k) in keywords.iter().enumerate() {
            let kt: Vec<&str> = k.surface.split(' ').collect();
            for pos in 0..toks.len() {
                if pos + kt.len() <= toks.len() && (0..kt.len()).all(|j| toks[pos + j] == kt[j]) {
                    hits.push((pos, ki));
                }
            }
        }
        hits.sort();
        for (pos, ki) in hits {
            let len = keywords[ki].surface.split(' ').count();
            let mut masked: Vec<String> = toks[..pos].to_vec();
            masked.push(MASK_TOKEN.into());
            masked.extend_from_slice(&toks[pos + len..]);
            contexts.push(window_context(&masked, pos, w));
        }
    }

    let distribution = |ctx: &(Vec<String>, Vec<String>)| -> Vec<f64> {
        let mut counts = vec![0u64; v];
        let mut total = 0u64;
        for toks in &sentences {
            for (i, tok) in toks.iter().enumerate() {
                if window_context(toks, i, w) == *ctx {
                    total += 1;
                    counts[vocab.binary_search(tok).unwrap()] += 1;
                }
            }
        }
        let denom = total as f64 + s * v as f64;
        counts.iter().map(|&c| (c as f64 + s) / denom).collect()
    };

    let keyword_idx: Vec<usize> = keywords
        .iter()
        .filter(|k| !k.surface.contains(' '))
        .filter_map(|k| vocab.binary_search(&k.surface).ok())
        .collect();
    let mut weights = vec![0.0f64; v];
    let mut support = vec![0usize; v];
    for ctx in &contexts {
        let dist = distribution(ctx);
        let kept = keyword_idx.iter().any(|&k| {
            let rank = 1 + (0..v).filter(|&j| dist[j] > dist[k] || (dist[j] == dist[k] && vocab[j] < vocab[k])).count();
            rank <= t
        });
        if kept {
            for j in 0..v {
                weights[j] += dist[j];
                if dist[j] > 1.0 / v as f64 {
                    support[j] += 1;
                }
            }
        }
    }

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for toks in &sentences {
        for tok in toks.iter().collect::<BTreeSet<_>>() {
            *df.entry(tok).or_default() += 1;
        }
    }
    let mut by_df: Vec<(&str, usize)> = df.into_iter().collect();
    by_df.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let stop: BTreeSet<&str> = by_df.iter().take(top_df).map(|x| x.0).collect();

    let mut out: Vec<RankedCandidate> = (0..v)
        .filter(|&j| !stop.contains(vocab[j].as_str()) && !keywords.iter().any(|k| k.surface == vocab[j]))
        .map(|j| RankedCandidate {
            word: vocab[j].clone(),
            weight: weights[j],
            support: support[j],
        })
        .collect();
    out.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap().then(a.word.cmp(&b.word)));
    out
}

fn oracle_equivalence() -> Outcome {
    let mut slowest = Duration::ZERO;
    let mut compared = 0;
    for seed in 0..20u64 {
        let rc = random_corpus(seed, 200, 120);
        let t = 1 + (seed as usize % 9);
        let params = DetectParams { t, ..DetectParams::default() };
        let start = Instant::now();
        let oracle = build_count_oracle(&rc.corpus, DEFAULT_WINDOW, DEFAULT_SMOOTHING).map_err(|e| e.to_string())?;
        let got = detect(&rc.corpus, &rc.keywords, &BackendHandle::new(oracle), &params).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        let want = brute_force_detect(&rc.corpus, &rc.keywords, t, params.stop_top_df);
        ensure!(got.ranking.entries.len() == want.len(), "seed {seed}: {} vs {} candidates", got.ranking.entries.len(), want.len());
        for (i, (g, w)) in got.ranking.entries.iter().zip(&want).enumerate() {
            ensure!(
                g.word == w.word && g.weight.to_bits() == w.weight.to_bits() && g.support == w.support,
                "seed {seed} rank {i}: got {g:?}, brute force {w:?}"
            );
        }
        compared += want.len();
    }
    ensure!(slowest < Duration::from_secs(10), "detect took {slowest:?}");
    Ok(format!("20 corpora x 200 sentences, {compared} ranked entries identical, slowest detect {:.3}s", slowest.as_secs_f64()))
}

fn filter_monotonicity() -> Outcome {
    let mut checked = 0;
    for seed in 100..200u64 {
        let rc = random_corpus(seed, 150, 60);
        let oracle = BackendHandle::new(build_count_oracle(&rc.corpus, DEFAULT_WINDOW, DEFAULT_SMOOTHING).unwrap());
        let masked = extract_masked_sentences(&rc.corpus, &rc.keywords).masked;
        let kept: Vec<Vec<bool>> = (1..=10)
            .map(|t| {
                filter_contexts(&masked, &rc.keywords, &oracle, t)
                    .unwrap()
                    .decisions
                    .iter()
                    .map(|d| d.kept)
                    .collect()
            })
            .collect();
        for t in 0..9 {
            for (i, (&a, &b)) in kept[t].iter().zip(&kept[t + 1]).enumerate() {
                ensure!(!a || b, "seed {seed}: {} kept at t={} but not at t={}", masked[i].id, t + 1, t + 2);
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (corpus, t) pairs, 0 violations"))
}

fn planted_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        seed: 2024,
        keywords: 3,
        euphemisms_per_keyword: 5,
        cover_ratio: 0.5,
        ..SynthConfig::default()
    };
    let start = Instant::now();
    let paths = cmd_synth(&synth, &dir.path().join("data")).map_err(|e| e.to_string())?;
    let mut rankings = Vec::new();
    for id in ["planted-a", "planted-b"] {
        let mut cfg = RunConfig::default();
        cfg.apply([
            ("corpus", paths.corpus.to_str().unwrap()),
            ("keywords", paths.keywords.to_str().unwrap()),
            ("truth", paths.truth.to_str().unwrap()),
            ("backend", "count-oracle"),
            ("run_id", id),
            ("runs_dir", dir.path().join("runs").to_str().unwrap()),
        ])
        .map_err(|e| e.to_string())?;
        cmd_detect(&cfg).map_err(|e| e.to_string())?;
        rankings.push(fs::read(RunDir::new(cfg.run_dir()).ranking()).unwrap());
    }
    let elapsed = start.elapsed();
    ensure!(rankings[0] == rankings[1], "reruns produced different rankings");
    let run = RunDir::new(dir.path().join("runs/planted-a"));
    let ranking = read_ranking(&run.ranking()).map_err(|e| e.to_string())?;
    let keywords = euphemism::corpus::load_keywords(&paths.keywords).unwrap();
    let truth = load_truth(&paths.truth, &keywords).map_err(|e| e.to_string())?;
    let p10 = precision_at_k(&ranking, &truth, 10).map_err(|e| e.to_string())?;
    ensure!(p10 >= 0.8, "P@10 = {p10:.2} < 0.80");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("P@10 = {p10:.2} (>= 0.80), reruns byte-identical"))
}

// Naive recounts for the metrics.

fn naive_precision(words: &[String], truth_phrases: &[String], k: usize) -> f64 {
    let n = if words.len() < k { words.len() } else { k };
    if n == 0 {
        return 0.0;
    }
    let mut hits = 0;
    for w in &words[..n] {
        if truth_phrases.iter().any(|p| p == w) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

fn naive_accuracy(dists: &[EuphemismDistribution], truth: &BTreeMap<String, Vec<String>>, k: usize) -> f64 {
    let mut hits = 0;
    for d in dists {
        if d.n_kept == 0 {
            continue;
        }
        let gold = &truth[&d.word];
        let hit = gold.iter().any(|g| {
            let Some(&pg) = d.probabilities.get(g) else { return false };
            let above = d
                .probabilities
                .iter()
                .filter(|(name, &p)| p > pg || (p == pg && name.as_str() < g.as_str()))
                .count();
            above < k
        });
        if hit {
            hits += 1;
        }
    }
    hits as f64 / dists.len() as f64
}

fn metric_correctness() -> Outcome {
    let keywords: Vec<TargetKeyword> = ["cigarette", "heroin", "cocaine", "marijuana"]
        .iter()
        .map(|s| TargetKeyword::new(s, "drug").unwrap())
        .collect();
    let pool = [
        "chinese", "tobacco", "chinese tobacco", "boy", "dope", "snow", "blow", "weed", "pot", "grass", "car", "tree",
        "house", "smack", "tar", "herb",
    ];

    let truth = GroundTruth::from_pairs([("chinese tobacco", "cigarette")], &keywords).unwrap();
    let p = precision_at_k_words(&["chinese", "tobacco"], &truth, 2).unwrap();
    ensure!(p == 0.0, "partial phrase counted as correct (P@2 = {p})");

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..1000 {
        let n_truth = rng.gen_range(1..8);
        let mut pairs: Vec<(String, String)> = Vec::new();
        for _ in 0..n_truth {
            let e = pool[rng.gen_range(0..pool.len())];
            let k = &keywords[rng.gen_range(0..keywords.len())].surface;
            pairs.push((e.into(), k.clone()));
        }
        let truth = GroundTruth::from_pairs(pairs.iter().map(|(e, k)| (e.as_str(), k.as_str())), &keywords).unwrap();
        let mut naive_truth: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (e, k) in &pairs {
            naive_truth.entry(e.clone()).or_default().push(k.clone());
        }
        let phrases: Vec<String> = naive_truth.keys().cloned().collect();

        let mut words: Vec<String> = pool.iter().map(|s| s.to_string()).collect();
        words.shuffle(&mut rng);
        words.truncate(rng.gen_range(0..=pool.len()));
        let ranking = CandidateRanking {
            entries: words
                .iter()
                .enumerate()
                .map(|(i, w)| RankedCandidate {
                    word: w.clone(),
                    weight: (words.len() - i) as f64,
                    support: 1,
                })
                .collect(),
            params: RankingParams {
                t: Some(5),
                backend: BackendKind::CountOracle,
                n_kept: 1,
            },
        };
        for k in [1, 2, 3, 5, 10, 20] {
            let got = precision_at_k(&ranking, &truth, k).unwrap();
            let want = naive_precision(&words, &phrases, k);
            ensure!(got == want, "case {case}: P@{k} = {got}, naive {want}");
        }

        let dists: Vec<EuphemismDistribution> = phrases
            .iter()
            .map(|e| {
                let counts: BTreeMap<String, u64> = if rng.gen_bool(0.15) {
                    BTreeMap::new()
                } else {
                    keywords.iter().map(|k| (k.surface.clone(), rng.gen_range(0..4))).collect()
                };
                EuphemismDistribution::from_counts(e, counts, 10)
            })
            .collect();
        for k in 1..=4 {
            let got = accuracy_at_k(&dists, &truth, k).unwrap();
            let want = naive_accuracy(&dists, &naive_truth, k);
            ensure!(got == want, "case {case}: Acc@{k} = {got}, naive {want}");
        }
    }
    Ok("1000 random cases, P@k and Acc@k identical to naive recount".into())
}

// Disjoint-vocabulary corpora for the classifiers.

const DRUGS: [&str; 10] = [
    "heroin", "cocaine", "marijuana", "meth", "ecstasy", "ketamine", "fentanyl", "oxycodone", "xanax", "lsd",
];

fn class_vocab(class: usize) -> Vec<String> {
    (0..15).map(|j| format!("c{class}v{j:02}")).collect()
}

/// Keyword sentences drawn from per-class vocabularies, background sentences
/// from a disjoint vocabulary, plus a few sentences over the length cap.
fn disjoint_corpus(seed: u64, classes: usize, per_class: usize, background: usize) -> (Corpus, Vec<TargetKeyword>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared: Vec<String> = ["the", "a", "of", "and", "to", "in", "my", "is"].iter().map(|s| s.to_string()).collect();
    let generic: Vec<String> = (0..60).map(|j| format!("g{j:02}")).collect();
    let mut texts = Vec::new();
    for c in 0..classes {
        let vocab = class_vocab(c);
        for _ in 0..per_class {
            let len = rng.gen_range(5..11);
            let mut toks: Vec<String> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.6) {
                        vocab.choose(&mut rng).unwrap().clone()
                    } else {
                        shared.choose(&mut rng).unwrap().clone()
                    }
                })
                .collect();
            let at = rng.gen_range(0..=toks.len());
            toks.insert(at, DRUGS[c].into());
            texts.push(toks.join(" "));
        }
    }
    for _ in 0..background {
        let len = rng.gen_range(5..11);
        let toks: Vec<String> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    generic.choose(&mut rng).unwrap().clone()
                } else {
                    shared.choose(&mut rng).unwrap().clone()
                }
            })
            .collect();
        texts.push(toks.join(" "));
    }
    for c in 0..classes.min(2) {
        let vocab = class_vocab(c);
        let mut toks: Vec<String> = (0..300).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
        toks.insert(rng.gen_range(0..300), DRUGS[c].into());
        texts.push(toks.join(" "));
    }
    texts.shuffle(&mut rng);
    let keywords = DRUGS[..classes].iter().map(|d| TargetKeyword::new(d, "drug").unwrap()).collect();
    (Corpus::from_texts(&texts).unwrap(), keywords)
}

fn coarse_separable() -> Outcome {
    let (corpus, keywords) = disjoint_corpus(5, 3, 150, 900);
    let fine = build_fine_training_set(&corpus, &keywords).map_err(|e| e.to_string())?;
    let set = build_coarse_training_set(&corpus, &keywords, &fine, 6).map_err(|e| e.to_string())?;
    let coarse = train_coarse(&set.positives, &set.negatives, &ClassifierOptions::default()).map_err(|e| e.to_string())?;
    let acc = coarse.metrics.test_acc.ok_or("no test split")?;
    ensure!(acc >= 0.95, "test accuracy {acc:.3} < 0.95");
    Ok(format!("test accuracy {acc:.3} on {} test contexts (>= 0.95)", coarse.metrics.n_test))
}

fn fine_ten_class() -> Outcome {
    let (corpus, keywords) = disjoint_corpus(11, 10, 60, 0);
    let fine = build_fine_training_set(&corpus, &keywords).map_err(|e| e.to_string())?;
    let model = train_fine(&fine.samples, &ClassifierOptions::default()).map_err(|e| e.to_string())?;
    ensure!(model.classes.len() == 10, "{} classes", model.classes.len());
    let acc = model.metrics.test_acc.ok_or("no test split")?;
    ensure!(acc >= 0.5, "test accuracy {acc:.3} < 0.50");
    Ok(format!("test accuracy {acc:.3} on {} test contexts, chance 0.10 (>= 0.50)", model.metrics.n_test))
}

fn check_distribution(d: &EuphemismDistribution) -> Result<(), String> {
    let kept: u64 = d.counts.values().sum();
    ensure!(kept as usize == d.n_kept, "{}: counts sum {kept} != n_kept {}", d.word, d.n_kept);
    ensure!(d.n_kept <= d.n_total, "{}: n_kept {} > n_total {}", d.word, d.n_kept, d.n_total);
    if d.n_kept > 0 {
        let mass = d.probability_mass();
        ensure!((mass - 1.0).abs() <= 1e-9, "{}: probabilities sum to {mass}", d.word);
    } else {
        ensure!(d.probabilities.is_empty() && d.note.is_some(), "{}: empty distribution without note", d.word);
    }
    Ok(())
}

fn identification_normalization() -> Outcome {
    let mut checked = 0;
    let mut nonempty = 0;
    for seed in [3u64, 8, 21] {
        let sc = generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let corpus = sc.corpus().unwrap();
        let fine_set = build_fine_training_set(&corpus, &sc.keywords).unwrap();
        let coarse_set = build_coarse_training_set(&corpus, &sc.keywords, &fine_set, seed).unwrap();
        let opts = ClassifierOptions::default();
        let coarse = train_coarse(&coarse_set.positives, &coarse_set.negatives, &opts).unwrap();
        let fine = train_fine(&fine_set.samples, &opts).unwrap();
        let mut words: Vec<String> = sc.truth.iter().map(|(e, _)| e.clone()).collect();
        words.extend(corpus.vocabulary().keys().step_by(7).cloned());
        for aggregation in [euphemism::identification::Aggregation::Hard, euphemism::identification::Aggregation::Soft] {
            let iopts = IdentifyOptions { aggregation, ..IdentifyOptions::default() };
            for (w, r) in words.iter().zip(identify_many(&words, &corpus, &coarse, &fine, &iopts)) {
                let d = r.map_err(|e| format!("{w}: {e}"))?;
                check_distribution(&d)?;
                let expected_kept = independent_kept(&corpus, w, &coarse);
                ensure!(d.n_total == extract_word_contexts(&corpus, w).len(), "{w}: n_total {}", d.n_total);
                ensure!(d.n_kept == expected_kept, "{w}: n_kept {} != recount {expected_kept}", d.n_kept);
                checked += 1;
                nonempty += usize::from(d.n_kept > 0);
            }
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let paths = cmd_synth(&SynthConfig::default(), &dir.path().join("data")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply([
        ("corpus", paths.corpus.to_str().unwrap()),
        ("keywords", paths.keywords.to_str().unwrap()),
        ("backend", "count-oracle"),
        ("run_id", "norm"),
        ("runs_dir", dir.path().join("runs").to_str().unwrap()),
    ])
    .unwrap();
    cmd_detect(&cfg).map_err(|e| e.to_string())?;
    cmd_identify(&cfg, &WordSelection::FromDetection(50)).map_err(|e| e.to_string())?;
    for d in read_distributions(&RunDir::new(cfg.run_dir()).distributions()).unwrap() {
        check_distribution(&d)?;
        checked += 1;
        nonempty += usize::from(d.n_kept > 0);
    }
    Ok(format!("{checked} distributions ({nonempty} non-empty) sum to 1 within 1e-9, counts conserved"))
}

fn independent_kept(corpus: &Corpus, word: &str, coarse: &CoarseClassifier) -> usize {
    extract_word_contexts(corpus, word)
        .iter()
        .filter(|m| m.tokens.iter().filter(|t| t.as_str() != MASK_TOKEN).count() >= DEFAULT_MIN_CONTEXT_TOKENS)
        .filter(|m| coarse.predict(m) >= coarse.decision_threshold)
        .count()
}

fn reconstructs(corpus: &Corpus, m: &MaskedSentence) -> bool {
    let Some(origin) = corpus.get(&m.origin_sentence_id) else { return false };
    let rebuilt = m.reconstruct();
    let end = m.window_start + rebuilt.len();
    end <= origin.tokens.len()
        && origin.tokens[m.window_start..end] == rebuilt[..]
        && (m.window_start > 0 || end < origin.tokens.len() || origin.tokens == rebuilt)
        && (origin.tokens.len() > 128 || origin.tokens == rebuilt)
}

fn self_supervision_round_trip() -> Outcome {
    let mut samples = 0;
    let mut sets = 0;
    let mut check = |corpus: &Corpus, keywords: &[TargetKeyword], seed: u64| -> Result<(), String> {
        let fine: FineTrainingSet = build_fine_training_set(corpus, keywords).map_err(|e| e.to_string())?;
        for LabeledContext { masked, label } in &fine.samples {
            ensure!(reconstructs(corpus, masked), "{} does not reconstruct", masked.id);
            ensure!(masked.masked_surface == label.surface, "{} labelled {}", masked.id, label.surface);
            samples += 1;
        }
        let coarse = build_coarse_training_set(corpus, keywords, &fine, seed).map_err(|e| e.to_string())?;
        ensure!(coarse.negatives.len() == coarse.positives.len(), "|neg| {} != |pos| {}", coarse.negatives.len(), coarse.positives.len());
        for m in &coarse.negatives {
            ensure!(reconstructs(corpus, m), "negative {} does not reconstruct", m.id);
        }
        sets += 1;
        Ok(())
    };
    for seed in 1..=5u64 {
        let sc = generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        check(&sc.corpus().unwrap(), &sc.keywords, seed)?;
        let (corpus, keywords) = disjoint_corpus(seed, 4, 40, 200);
        check(&corpus, &keywords, seed)?;
    }

    let ratios = SplitRatios::default();
    for n in 0..=2000usize {
        let (train, val, test) = ratios.sizes(n);
        let x = n as f64;
        ensure!(train + val + test == n, "n={n}: sizes do not add up");
        ensure!((train as f64 - 0.7 * x).abs() <= 0.5 + 1e-9, "n={n}: train {train}");
        ensure!((val as f64 - 0.1 * x).abs() <= 0.5 + 1e-9, "n={n}: val {val}");
        ensure!((test as f64 - 0.2 * x).abs() <= 1.0 + 1e-9, "n={n}: test {test}");
        let split = ratios.split(n, n as u64);
        ensure!(
            (split.train.len(), split.val.len(), split.test.len()) == (train, val, test),
            "n={n}: split disagrees with sizes"
        );
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
        all.sort_unstable();
        ensure!(all == (0..n).collect::<Vec<_>>(), "n={n}: split is not a partition");
    }
    Ok(format!("{samples} contexts reconstruct exactly, |neg| = |pos| in {sets} sets, 70/10/20 sizes exact for n <= 2000"))
}

