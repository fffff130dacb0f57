//! One market day with the scripted spoofing agent; writes the action log,
//! trade tape and per-agent profits.
//!
//! `cargo run --release --example simulate_day [output_dir]`

use spoofsim::experiment::simulate;
use spoofsim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::default();
    sc.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example-simulate".into()).into();
    for d in simulate(&sc, 1, true, false)? {
        println!("day {}: {} actions, {} trades, close {:.2}", d.day, d.actions, d.trades, d.close);
    }
    println!("outputs in {}", sc.output_dir.join("simulate").display());
    Ok(())
}
