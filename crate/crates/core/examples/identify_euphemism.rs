//! Trains the coarse and fine classifiers from keyword contexts, then maps
//! euphemisms to the keyword they stand for.
//!
//!     cargo run -p euphemism --example identify_euphemism -- [word ...]

use euphemism::identification::{
    build_coarse_training_set, build_fine_training_set, identify_many, train_coarse, train_fine, ClassifierOptions,
    IdentifyOptions,
};
use euphemism::synth::{generate, SynthConfig};

fn main() -> euphemism::Result<()> {
    let synth = generate(&SynthConfig::default())?;
    let corpus = synth.corpus()?;
    let opts = ClassifierOptions::default();

    let fine_set = build_fine_training_set(&corpus, &synth.keywords)?;
    let coarse_set = build_coarse_training_set(&corpus, &synth.keywords, &fine_set, 1)?;
    let coarse = train_coarse(&coarse_set.positives, &coarse_set.negatives, &opts)?;
    let fine = train_fine(&fine_set.samples, &opts)?;
    println!("coarse {:?}", coarse.metrics);
    println!("fine   {:?}", fine.metrics);

    let mut words: Vec<String> = std::env::args().skip(1).collect();
    if words.is_empty() {
        words = vec!["weed".into(), "snow".into(), "boy".into(), "tar".into()];
    }
    for (w, r) in words.iter().zip(identify_many(&words, &corpus, &coarse, &fine, &IdentifyOptions::default())) {
        match r {
            Ok(d) => {
                let probs: Vec<String> = d
                    .ranked_keywords()
                    .iter()
                    .map(|k| format!("{k}={:.2}", d.probabilities[*k]))
                    .collect();
                println!("{w:<8} kept {:>3}/{:<3} {}", d.n_kept, d.n_total, probs.join(" "));
            }
            Err(e) => println!("{w:<8} {e}"),
        }
    }
    Ok(())
}
