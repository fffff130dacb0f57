//! The full desk-scale ladder followed by the box-plot report.
//!
//! `cargo run --release --example ladder [scenario.toml]`

use spoofsim::experiment::{run_ladder, write_comparison_table};
use spoofsim::report;
use spoofsim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = match std::env::args().nth(1) {
        Some(p) => Scenario::load(p.as_ref())?,
        None => Scenario::default(),
    };
    let out = run_ladder(&sc, false)?;
    println!("detector test {}", out.detector.test);
    write_comparison_table(&out.comparison, &mut std::io::stdout())?;
    report::build(&sc.output_dir)?.write(&sc.output_dir)?;
    Ok(())
}
