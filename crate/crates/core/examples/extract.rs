//! Extracts tumor phenotypes from free-text reports with the rule-based
//! and mock backends, or a chat endpoint when one is given.
//!
//! `cargo run --example extract -- [endpoint]` (reads `EXACT_API_KEY`)

use std::env;

use noduleguide::corpus::{bundled_mock_fixtures, bundled_reports};
use noduleguide::extract::{extract_phenotype, Backend, ChatClient, PromptTemplate};

fn main() {
    let mut backends = vec![Backend::RuleBased, Backend::mock(bundled_mock_fixtures())];
    if let Some(endpoint) = env::args().nth(1) {
        backends.push(Backend::Chat(ChatClient::from_env(endpoint, PromptTemplate::default())));
    }
    for r in bundled_reports().iter().take(5) {
        println!("{}\n{}", r.id, r.report);
        for b in &backends {
            match extract_phenotype(&r.report, b) {
                Ok(p) => println!("  {:<5} {p}", b.name()),
                Err(e) => println!("  {:<5} error: {e}", b.name()),
            }
        }
        println!("  truth {}\n", r.phenotype);
    }
}
