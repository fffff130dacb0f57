//! Cross-validated MCC of every one- and two-feature subset.
//!
//! `cargo run --release --example feature_ablation [output_dir]`

use spoofsim::detector::Architecture;
use spoofsim::experiment::{ablate, synthesize};
use spoofsim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::default();
    sc.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example-ablation".into()).into();
    sc.synthesis.days = 4;
    sc.ablation.folds = 3;
    sc.ablation.max_windows = Some(10_000);
    let corpus = synthesize(&sc)?;
    for row in ablate(&sc, &corpus, &[Architecture::TemporalCnn])? {
        println!("{row}");
    }
    Ok(())
}
