//! Runs the bundled ten-case experiment and prints the per-case table and
//! summary. Pass a directory to also write the artifacts.

use std::env;

use noduleguide::harness::{run_experiment, summary_text, table3_csv, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig { out_dir: env::args().nth(1).map(Into::into), ..Default::default() };
    let report = run_experiment(&cfg)?;
    print!("{}", table3_csv(&report)?);
    print!("{}", summary_text(&report));
    Ok(())
}
