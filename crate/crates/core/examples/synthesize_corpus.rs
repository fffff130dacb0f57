//! Labeled 20-action windows from days that cycle through spoofing-agent
//! configurations.
//!
//! `cargo run --release --example synthesize_corpus [output_dir]`

use spoofsim::experiment::synthesize;
use spoofsim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::default();
    sc.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example-corpus".into()).into();
    sc.synthesis.days = 4;
    let corpus = synthesize(&sc)?;
    println!(
        "{} windows, {:.2}% positive; split {}/{}/{}",
        corpus.windows.len(),
        100.0 * corpus.positive_fraction(),
        corpus.split.train_base.len(),
        corpus.split.val.len(),
        corpus.split.test.len()
    );
    Ok(())
}
