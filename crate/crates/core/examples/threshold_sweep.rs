//! How the MLM threshold `t` trades kept contexts against precision.
//!
//!     cargo run -p euphemism --example threshold_sweep

use euphemism::detection::{detect, DetectParams};
use euphemism::evaluation::precision_at_k;
use euphemism::mlm::{build_count_oracle, BackendHandle, DEFAULT_SMOOTHING, DEFAULT_WINDOW};
use euphemism::synth::{generate, SynthConfig};

fn main() -> euphemism::Result<()> {
    let synth = generate(&SynthConfig {
        noise_rate: 0.2,
        ..SynthConfig::default()
    })?;
    let corpus = synth.corpus()?;
    let truth = synth.ground_truth()?;
    let handle = BackendHandle::new(build_count_oracle(&corpus, DEFAULT_WINDOW, DEFAULT_SMOOTHING)?);

    println!("  t  kept   P@10  P@20");
    for t in [1, 2, 3, 5, 10, 20, 50] {
        let d = detect(&corpus, &synth.keywords, &handle, &DetectParams { t, ..DetectParams::default() })?;
        println!(
            "{t:>3} {:>5}  {:.2}  {:.2}",
            d.filter.kept.len(),
            precision_at_k(&d.ranking, &truth, 10)?,
            precision_at_k(&d.ranking, &truth, 20)?
        );
    }
    Ok(())
}
