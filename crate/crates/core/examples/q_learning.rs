//! Tabular Q-learning under each exploration strategy with the spoofing
//! actions withheld.
//!
//! `cargo run --release --example q_learning [output_dir]`

use spoofsim::experiment::{restricted_specs, summarize_all, train_q, write_comparison_table, RESTRICTED};
use spoofsim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::default();
    sc.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example-qlearning".into()).into();
    sc.learning.train_days = 3;
    sc.learning.eval_days = 2;
    let cells = train_q(&sc, RESTRICTED, &restricted_specs(&sc), None)?;
    write_comparison_table(&summarize_all(&cells), &mut std::io::stdout())?;
    Ok(())
}
