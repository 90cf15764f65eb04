//! Trains the contextual masked-token model on a synthetic corpus, persists
//! it, reloads it and runs detection with it.
//!
//!     cargo run --release -p euphemism --example contextual_finetune -- [epochs]

use euphemism::detection::{detect, DetectParams};
use euphemism::evaluation::precision_at_k;
use euphemism::mlm::{fine_tune, BackendHandle, BaseModelRef, FineTuneParams};
use euphemism::synth::{generate, SynthConfig};

fn main() -> euphemism::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let synth = generate(&SynthConfig::default())?;
    let corpus = synth.corpus()?;
    let base: BaseModelRef = "scratch:24:48:2".parse()?;
    let params = FineTuneParams {
        epochs,
        ..FineTuneParams::default()
    };

    let dir = std::env::temp_dir().join("euphemism-contextual-example");
    let handle = fine_tune(&corpus, &base, &params, Some(&dir))?;
    println!("model state in {}", dir.display());
    let handle = BackendHandle::load(handle.state_ref().unwrap_or(&dir))?;

    let detection = detect(&corpus, &synth.keywords, &handle, &DetectParams { t: 10, ..DetectParams::default() })?;
    let truth = synth.ground_truth()?;
    for c in detection.ranking.top(10) {
        let mark = if truth.contains(&c.word) { "*" } else { " " };
        println!("{mark} {:<10} {:.3}", c.word, c.weight);
    }
    println!("P@10 = {:.2}", precision_at_k(&detection.ranking, &truth, 10)?);
    Ok(())
}
