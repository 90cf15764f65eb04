//! Scores a hand-written ranking and identification output against ground
//! truth and prints the Markdown report.
//!
//!     cargo run -p euphemism --example evaluate_report

use std::collections::BTreeMap;

use euphemism::corpus::TargetKeyword;
use euphemism::detection::{CandidateRanking, RankedCandidate, RankingParams};
use euphemism::evaluation::{
    detection_report, identification_report, render_report, GroundTruth, ReportFormat, DETECTION_KS,
    IDENTIFICATION_KS,
};
use euphemism::identification::EuphemismDistribution;
use euphemism::mlm::BackendKind;

fn main() -> euphemism::Result<()> {
    let keywords = vec![
        TargetKeyword::new("heroin", "drug")?,
        TargetKeyword::new("cocaine", "drug")?,
        TargetKeyword::new("cigarette", "drug")?,
    ];
    let truth = GroundTruth::from_pairs(
        [("dope", "heroin"), ("snow", "cocaine"), ("chinese tobacco", "cigarette"), ("blow", "cocaine")],
        &keywords,
    )?;
    let words = ["dope", "chinese", "snow", "car", "blow", "tobacco"];
    let ranking = CandidateRanking {
        entries: words
            .iter()
            .enumerate()
            .map(|(i, w)| RankedCandidate {
                word: w.to_string(),
                weight: 10.0 - i as f64,
                support: 3,
            })
            .collect(),
        params: RankingParams {
            t: Some(5),
            backend: BackendKind::CountOracle,
            n_kept: 40,
        },
    };
    let dist = |word: &str, counts: &[(&str, u64)]| {
        let counts: BTreeMap<String, u64> = counts.iter().map(|(k, c)| (k.to_string(), *c)).collect();
        EuphemismDistribution::from_counts(word, counts, 20)
    };
    let dists = vec![
        dist("dope", &[("heroin", 9), ("cocaine", 3), ("cigarette", 0)]),
        dist("snow", &[("heroin", 2), ("cocaine", 5), ("cigarette", 1)]),
        dist("blow", &[("heroin", 4), ("cocaine", 3), ("cigarette", 1)]),
        dist("chinese tobacco", &[]),
    ];

    let det = detection_report(&ranking, &truth, &DETECTION_KS[..2])?;
    let id = identification_report(&dists, &truth, &IDENTIFICATION_KS)?;
    print!("{}", render_report(Some(&det), Some(&id), ReportFormat::Markdown)?);
    Ok(())
}
