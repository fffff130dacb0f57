//! The honest and spoofing fixed policies over a few evaluation days.
//!
//! `cargo run --release --example fixed_policies [output_dir]`

use spoofsim::experiment::{run_fixed, summarize_all, write_comparison_table};
use spoofsim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::default();
    sc.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example-fixed".into()).into();
    sc.fixed_eval_days = 5;
    let cells = run_fixed(&sc, None)?;
    write_comparison_table(&summarize_all(&cells), &mut std::io::stdout())?;
    Ok(())
}
