//! Trains a detector, then the unconstrained learner and both detector-guided
//! learners at the comparison quantity.
//!
//! `cargo run --release --example guided_learners [output_dir]`

use std::sync::Arc;

use spoofsim::experiment::{
    normative_specs, summarize_all, synthesize, train_detector, train_q, unconstrained_specs, write_comparison_table,
    NORMATIVE, UNCONSTRAINED,
};
use spoofsim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::default();
    sc.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example-guided".into()).into();
    sc.learning.train_days = 4;
    sc.learning.eval_days = 3;
    let corpus = synthesize(&sc)?;
    let model = Arc::new(train_detector(&sc, &corpus)?.model);
    let mut specs = unconstrained_specs(&sc);
    specs.retain(|s| s.trader.passive_size == sc.learning.comparison_quantity);
    let mut cells = train_q(&sc, UNCONSTRAINED, &specs, Some(&model))?;
    cells.extend(train_q(&sc, NORMATIVE, &normative_specs(&sc), Some(&model))?);
    write_comparison_table(&summarize_all(&cells), &mut std::io::stdout())?;
    Ok(())
}
