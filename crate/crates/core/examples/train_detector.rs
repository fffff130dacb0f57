//! Synthesizes a corpus and trains the temporal CNN on direction and action
//! type.
//!
//! `cargo run --release --example train_detector [output_dir]`

use spoofsim::experiment::{synthesize, train_detector};
use spoofsim::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::default();
    sc.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example-detector".into()).into();
    sc.synthesis.days = 4;
    let corpus = synthesize(&sc)?;
    let out = train_detector(&sc, &corpus)?;
    for e in &out.history {
        println!("epoch {:>2}  train {:.5}  val {:.5}", e.epoch, e.train_loss, e.val_loss);
    }
    println!("best epoch {}, test {}", out.best_epoch, out.test);
    Ok(())
}
