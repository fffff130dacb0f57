//! Box-plot statistics over an existing run directory.
//!
//! `cargo run --release --example report <run_dir>`

use spoofsim::report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "runs/desk".into());
    let r = report::build(dir.as_ref())?;
    r.write(dir.as_ref())?;
    r.write_text(&mut std::io::stdout())?;
    Ok(())
}
