//! Plants euphemisms in a synthetic corpus and recovers them with the
//! count-oracle backend.
//!
//!     cargo run -p euphemism --example detect_planted -- [seed]

use euphemism::detection::{detect, DetectParams};
use euphemism::evaluation::precision_at_k;
use euphemism::mlm::{build_count_oracle, BackendHandle, DEFAULT_SMOOTHING, DEFAULT_WINDOW};
use euphemism::synth::{generate, SynthConfig};

fn main() -> euphemism::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let synth = generate(&SynthConfig { seed, ..SynthConfig::default() })?;
    let corpus = synth.corpus()?;
    let handle = BackendHandle::new(build_count_oracle(&corpus, DEFAULT_WINDOW, DEFAULT_SMOOTHING)?);
    let detection = detect(&corpus, &synth.keywords, &handle, &DetectParams::default())?;
    let truth = synth.ground_truth()?;

    println!(
        "{} sentences, {} keyword contexts, {} kept",
        corpus.len(),
        detection.extraction.masked.len(),
        detection.filter.kept.len()
    );
    for (i, c) in detection.ranking.top(20).iter().enumerate() {
        let mark = if truth.contains(&c.word) { "*" } else { " " };
        println!("{:>3} {mark} {:<10} {:>9.4} {:>4}", i + 1, c.word, c.weight, c.support);
    }
    for k in [10, 20] {
        println!("P@{k} = {:.2}", precision_at_k(&detection.ranking, &truth, k)?);
    }
    Ok(())
}
