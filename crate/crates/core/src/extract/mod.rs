//! Report-to-phenotype extraction.
//!
//! Three interchangeable backends produce a [`TumorPhenotype`]: keyword
//! rules, a live chat-completion endpoint, and a mock that replays canned
//! chat answers through the same request and parsing path.

mod chat;
mod mock;
mod rules;

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lobe::LobeId;

pub use chat::{
    build_chat_request, parse_phenotype_response, ChatClient, ChatMessage, ChatRequest, ChatResponse,
    PromptTemplate, RetryPolicy, Role, API_KEY_ENV, DEFAULT_MODEL, LOBE_OPTIONS, LOBE_PROMPT, LYMPH_PROMPT,
};
pub use mock::{report_hash, MockEntry, MockFixtures};
pub use rules::{lobe_mentions, rule_extract, sentences, station_mentions};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("report is empty")]
    EmptyReport,
    #[error("no tumor lobe could be extracted")]
    EmptyLobes,
    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),
    #[error("response names a location that is not a lobe option: {0:?}")]
    InvalidOption(String),
    #[error("no lobe found in response: {0:?}")]
    Unparseable(String),
    #[error("malformed chat response: {0}")]
    MalformedResponse(String),
    #[error("endpoint returned HTTP {code}: {body}")]
    HttpStatus { code: u16, body: String },
    #[error("transport failed after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String },
    #[error("no mock fixture for report hash {0}")]
    MissingFixture(String),
    #[error("bad mock fixture file: {0}")]
    Fixture(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which question a chat request asks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Lobe,
    Lymph,
}

/// Confirmed tumor lobes and malignant lymph stations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TumorPhenotype {
    pub lobes: BTreeSet<LobeId>,
    pub lymph_stations: BTreeSet<String>,
}

impl TumorPhenotype {
    pub fn merge(&mut self, other: TumorPhenotype) {
        self.lobes.extend(other.lobes);
        self.lymph_stations.extend(other.lymph_stations);
    }
}

impl fmt::Display for TumorPhenotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lobes: Vec<&str> = self.lobes.iter().map(|l| l.abbreviation()).collect();
        let stations: Vec<&str> = self.lymph_stations.iter().map(String::as_str).collect();
        write!(f, "lobes=[{}] lymph=[{}]", lobes.join(","), stations.join(","))
    }
}

/// Extraction backend.
#[derive(Debug, Clone)]
pub enum Backend {
    RuleBased,
    Chat(ChatClient),
    Mock { fixtures: MockFixtures, template: PromptTemplate },
}

impl Backend {
    pub fn mock(fixtures: MockFixtures) -> Self {
        Backend::Mock { fixtures, template: PromptTemplate::default() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::RuleBased => "rule",
            Backend::Chat(_) => "chat",
            Backend::Mock { .. } => "mock",
        }
    }
}

/// Extracts a phenotype; an empty lobe set is an error.
pub fn extract_phenotype(report: &str, backend: &Backend) -> Result<TumorPhenotype, ExtractError> {
    let phenotype = match backend {
        Backend::RuleBased => rule_extract(report),
        Backend::Chat(client) => client.extract(report)?,
        Backend::Mock { fixtures, template } => fixtures.extract(report, template)?,
    };
    if phenotype.lobes.is_empty() {
        return Err(ExtractError::EmptyLobes);
    }
    Ok(phenotype)
}

/// Extracts many reports with at most `max_concurrency` in flight.
pub fn extract_batch(
    reports: &[String],
    backend: &Backend,
    max_concurrency: usize,
) -> Vec<Result<TumorPhenotype, ExtractError>> {
    let run = || reports.par_iter().map(|r| extract_phenotype(r, backend)).collect();
    match rayon::ThreadPoolBuilder::new().num_threads(max_concurrency.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => reports.iter().map(|r| extract_phenotype(r, backend)).collect(),
    }
}
