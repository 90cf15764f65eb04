//! Scores slot fillers with the count oracle and shows the replacement
//! ranking for each masked keyword occurrence.
//!
//!     cargo run -p euphemism --example count_oracle_scoring

use euphemism::corpus::{extract_masked_sentences, Corpus, TargetKeyword};
use euphemism::mlm::{build_count_oracle, BackendHandle, DEFAULT_SMOOTHING, DEFAULT_WINDOW};

fn main() -> euphemism::Result<()> {
    let corpus = Corpus::from_texts([
        "i am a former heroin addict from ohio.",
        "he is a former heroin addict now clean.",
        "she was a former dope addict for years.",
        "my uncle was a former boy addict too.",
        "we bought some heroin near the station.",
        "we bought some dope near the station yesterday.",
        "the boy played outside all day.",
    ])?;
    let keywords = [TargetKeyword::new("heroin", "drug")?];
    let oracle = build_count_oracle(&corpus, DEFAULT_WINDOW, DEFAULT_SMOOTHING)?;
    let handle = BackendHandle::new(oracle);

    for m in extract_masked_sentences(&corpus, &keywords).masked {
        println!("{}", m.text());
        for r in handle.rank_replacements(&m, 4)?.entries {
            println!("    {:<8} {:.4}", r.token, r.probability);
        }
    }
    Ok(())
}
