//! Offline chat backend: canned answers keyed by report hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chat::{build_chat_request, parse_phenotype_response, ChatResponse, PromptTemplate};
use super::{ExtractError, PromptKind, TumorPhenotype};

/// Lowercase hex SHA-256 of the report bytes.
pub fn report_hash(report: &str) -> String {
    hex::encode(Sha256::digest(report.as_bytes()))
}

/// A canned answer: a bare string answers the lobe prompt only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockEntry {
    Lobe(String),
    Both { lobe: String, lymph: String },
}

impl MockEntry {
    pub fn content(&self, kind: PromptKind) -> &str {
        match (self, kind) {
            (MockEntry::Lobe(s), PromptKind::Lobe) => s,
            (MockEntry::Lobe(_), PromptKind::Lymph) => "",
            (MockEntry::Both { lobe, .. }, PromptKind::Lobe) => lobe,
            (MockEntry::Both { lymph, .. }, PromptKind::Lymph) => lymph,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockFixtures {
    pub entries: BTreeMap<String, MockEntry>,
}

impl MockFixtures {
    pub fn from_json(text: &str) -> Result<Self, ExtractError> {
        serde_json::from_str(text).map_err(|e| ExtractError::Fixture(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExtractError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("fixtures serialize") + "\n"
    }

    pub fn insert(&mut self, report: &str, entry: MockEntry) {
        self.entries.insert(report_hash(report), entry);
    }

    /// Answer rendered the way a chat model might phrase a phenotype.
    pub fn entry_for(phenotype: &TumorPhenotype) -> MockEntry {
        let lobes: Vec<String> =
            phenotype.lobes.iter().map(|l| format!("{} ({})", l.full_name(), l.abbreviation())).collect();
        let lobe = format!("The determinate tumor involves the {}.", lobes.join(" and the "));
        let lymph = if phenotype.lymph_stations.is_empty() {
            "No malignant lymph stations are reported.".to_string()
        } else {
            let list: Vec<&str> = phenotype.lymph_stations.iter().map(String::as_str).collect();
            format!("Malignant stations: {}.", list.join(", "))
        };
        MockEntry::Both { lobe, lymph }
    }

    /// Runs both prompt kinds through request building and response parsing.
    pub fn extract(&self, report: &str, tpl: &PromptTemplate) -> Result<TumorPhenotype, ExtractError> {
        let hash = report_hash(report);
        let entry = self.entries.get(&hash).ok_or(ExtractError::MissingFixture(hash))?;
        let mut out = TumorPhenotype::default();
        for kind in [PromptKind::Lobe, PromptKind::Lymph] {
            let request = build_chat_request(report, kind, tpl)?;
            debug_assert!(!request.messages.is_empty());
            let response = ChatResponse { content: entry.content(kind).to_string() };
            out.merge(parse_phenotype_response(&response.content, kind)?);
        }
        Ok(out)
    }
}
