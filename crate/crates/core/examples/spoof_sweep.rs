//! Spoofing-agent profits across quote sizes and depths, against the honest
//! variant on the same market days.
//!
//! `cargo run --release --example spoof_sweep [output_dir]`

use spoofsim::experiment::{summarize_all, sweep_spoof, write_comparison_table};
use spoofsim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::default();
    sc.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example-sweep".into()).into();
    sc.sweep.days_per_cell = 1;
    let cells = sweep_spoof(&sc, None)?;
    write_comparison_table(&summarize_all(&cells), &mut std::io::stdout())?;
    Ok(())
}
