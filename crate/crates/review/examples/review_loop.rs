//! Drives one review cycle through the store the HTTP API is built on:
//! confirm the top candidates, promote them into a new keyword list and
//! rerun detection with it.
//!
//!     cargo run -p euphemism-review --example review_loop

use std::collections::BTreeMap;

use euphemism::pipeline::{cmd_detect, RunConfig};
use euphemism::synth::{generate, SynthConfig};
use euphemism_review::{ReviewStore, Verdict};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("euphemism-review-example");
    let _ = std::fs::remove_dir_all(&root);
    let synth = generate(&SynthConfig::default())?;
    let paths = synth.write(&root.join("data"))?;

    let mut cfg = RunConfig::default();
    cfg.apply([
        ("corpus", paths.corpus.to_str().unwrap()),
        ("keywords", paths.keywords.to_str().unwrap()),
        ("backend", "count-oracle"),
        ("run_id", "base"),
        ("runs_dir", root.join("runs").to_str().unwrap()),
    ])?;
    cmd_detect(&cfg)?;

    let store = ReviewStore::new(root.join("runs"));
    let truth: BTreeMap<&str, &str> = synth.truth.iter().map(|(e, k)| (e.as_str(), k.as_str())).collect();
    let page = store.list_candidates("base", 1, 5)?;
    for item in &page.items {
        match truth.get(item.word.as_str()) {
            Some(k) => store.submit_verdict("base", &item.word, Verdict::Confirmed, Some(k), Some("example"))?,
            None => store.submit_verdict("base", &item.word, Verdict::Rejected, None, Some("example"))?,
        };
        println!("{:<10} {:?}", item.word, store.get_candidate("base", &item.word)?.status);
    }

    let promotion = store.promote_confirmed("base")?;
    println!("promoted {:?} into {}", promotion.added, promotion.keywords_file.display());

    let rerun = store.prepare_rerun("base", &BTreeMap::new())?;
    println!("{:?}", store.execute_rerun("base", &rerun));
    let status = store.status("base")?;
    println!("review counts {:?}", status.review);
    Ok(())
}
