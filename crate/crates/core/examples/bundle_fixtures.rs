//! Regenerates `fixtures/reports.json` and `fixtures/mock_responses.json`.
//!
//! cargo run --example bundle_fixtures

use std::fs;
use std::path::Path;

use noduleguide::corpus::{build_corpus, corpus_json, mock_fixtures_for};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let corpus = build_corpus()?;
    fs::write(dir.join("reports.json"), corpus_json(&corpus))?;
    fs::write(dir.join("mock_responses.json"), mock_fixtures_for(&corpus).to_json())?;
    println!("wrote {} reports to {}", corpus.len(), dir.display());
    Ok(())
}
