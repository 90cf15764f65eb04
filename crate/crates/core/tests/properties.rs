use std::collections::BTreeMap;

use proptest::prelude::*;

use euphemism::corpus::{extract_masked_sentences, Corpus, Sentence, TargetKeyword, MAX_SENTENCE_TOKENS};
use euphemism::detection::{candidate_weights, detect, DetectParams};
use euphemism::identification::{EuphemismDistribution, SplitRatios};
use euphemism::mlm::{build_count_oracle, BackendHandle, DEFAULT_SMOOTHING, DEFAULT_WINDOW};

fn corpus_strategy(max_len: usize) -> impl Strategy<Value = Vec<Vec<String>>> {
    let token = prop::sample::select(vec!["a", "b", "c", "d", "e", "kw", "x", "y"]).prop_map(str::to_string);
    prop::collection::vec(prop::collection::vec(token, 1..max_len), 1..40)
}

fn corpus_of(sentences: Vec<Vec<String>>) -> Corpus {
    Corpus::from_sentences(
        sentences
            .into_iter()
            .map(|tokens| Sentence {
                id: String::new(),
                tokens,
                source_doc: "p".into(),
            })
            .collect(),
    )
    .unwrap()
}

fn keywords() -> Vec<TargetKeyword> {
    vec![TargetKeyword::new("kw", "t").unwrap(), TargetKeyword::new("x y", "t").unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masked_sentences_reconstruct_and_count(sentences in corpus_strategy(200)) {
        let corpus = corpus_of(sentences);
        let extraction = extract_masked_sentences(&corpus, &keywords());
        let total: usize = extraction.occurrences.iter().map(|(_, n)| n).sum();
        prop_assert_eq!(total, extraction.masked.len());
        for m in &extraction.masked {
            prop_assert!(m.tokens.len() <= MAX_SENTENCE_TOKENS);
            let origin = &corpus.get(&m.origin_sentence_id).unwrap().tokens;
            let rebuilt = m.reconstruct();
            prop_assert_eq!(&origin[m.window_start..m.window_start + rebuilt.len()], &rebuilt[..]);
        }
    }

    #[test]
    fn weights_add_over_disjoint_context_sets(sentences in corpus_strategy(12), cut in 0usize..100) {
        let corpus = corpus_of(sentences);
        let handle = BackendHandle::new(build_count_oracle(&corpus, DEFAULT_WINDOW, DEFAULT_SMOOTHING).unwrap());
        let masked = extract_masked_sentences(&corpus, &keywords()).masked;
        let cut = cut.min(masked.len());
        let (all, _) = candidate_weights(&masked, &handle);
        let (left, _) = candidate_weights(&masked[..cut], &handle);
        let (right, _) = candidate_weights(&masked[cut..], &handle);
        for i in 0..all.len() {
            prop_assert!((all[i] - (left[i] + right[i])).abs() <= 1e-9 * (1.0 + all[i]));
        }
        let total: f64 = all.iter().sum();
        prop_assert!((total - masked.len() as f64).abs() <= 1e-9 * (1.0 + total));
    }

    #[test]
    fn detection_is_deterministic_and_sorted(sentences in corpus_strategy(12), t in 1usize..6) {
        let corpus = corpus_of(sentences);
        let params = DetectParams { t, stop_top_df: 2 };
        let run = || {
            let handle = BackendHandle::new(build_count_oracle(&corpus, DEFAULT_WINDOW, DEFAULT_SMOOTHING).unwrap());
            detect(&corpus, &keywords(), &handle, &params).map(|d| d.ranking)
        };
        match (run(), run()) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                for pair in a.entries.windows(2) {
                    prop_assert!(pair[0].weight > pair[1].weight
                        || (pair[0].weight == pair[1].weight && pair[0].word < pair[1].word));
                }
                prop_assert!(a.entries.iter().all(|e| e.word != "kw"));
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "runs disagree"),
        }
    }

    #[test]
    fn distributions_normalize(counts in prop::collection::btree_map("[a-e]", 0u64..50, 1..5), extra in 0usize..10) {
        let kept: u64 = counts.values().sum();
        let d = EuphemismDistribution::from_counts("w", counts.clone(), kept as usize + extra);
        prop_assert_eq!(d.n_kept as u64, kept);
        if kept > 0 {
            prop_assert!((d.probability_mass() - 1.0).abs() <= 1e-9);
            prop_assert_eq!(&d.counts, &counts);
            let ranked = d.ranked_keywords();
            prop_assert_eq!(ranked.len(), counts.len());
        } else {
            prop_assert!(d.probabilities.is_empty());
            prop_assert_eq!(d.counts, BTreeMap::new());
        }
    }

    #[test]
    fn splits_are_seeded_partitions(n in 0usize..500, seed in any::<u64>()) {
        let ratios = SplitRatios::default();
        let a = ratios.split(n, seed);
        prop_assert_eq!(&a, &ratios.split(n, seed));
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
