//! Chat-completion wire protocol: prompt templates, request building,
//! response parsing and a blocking HTTP client with bounded retries.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::thread;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize, Serializer};

use super::rules::{invalid_lobe_phrases, lobe_mentions, station_mentions};
use super::{ExtractError, PromptKind, TumorPhenotype};

pub const API_KEY_ENV: &str = "EXACT_API_KEY";

pub const LOBE_OPTIONS: &str = "Possible options: right upper lobe (RUL), right middle lobe (RML), \
right lower lobe (RLL), left upper lobe (LUL), left lower lobe (LLL)";
pub const LOBE_PROMPT: &str =
    "find the current lung lobe that the determinate tumor/carcinoma/malignancy is involving in this report:";
pub const LYMPH_PROMPT: &str = "find out what lymph station/node are malignant in this report:";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    /// Assistant turn listing the lobe options.
    pub assistant_context: String,
    pub user_prompt_lobe: String,
    pub user_prompt_lymph: String,
    pub temperature: f64,
    pub model_id: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            assistant_context: LOBE_OPTIONS.to_string(),
            user_prompt_lobe: LOBE_PROMPT.to_string(),
            user_prompt_lymph: LYMPH_PROMPT.to_string(),
            temperature: 0.0,
            model_id: DEFAULT_MODEL.to_string(),
        }
    }
}

impl PromptTemplate {
    /// The lobe prompt must ask for a current, determinate
    /// tumor/carcinoma/malignancy.
    pub fn validate(&self) -> Result<(), ExtractError> {
        let p = self.user_prompt_lobe.to_lowercase();
        let has_subject = ["tumor", "carcinoma", "malignancy"].iter().any(|k| p.contains(k));
        if !p.contains("current") || !p.contains("determinate") || !has_subject {
            return Err(ExtractError::InvalidTemplate("lobe prompt lacks a required keyword".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ExtractError::InvalidTemplate("temperature must be finite and non-negative".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(ExtractError::InvalidTemplate("empty model id".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Assistant,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Request body in wire order: model, temperature, messages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(serialize_with = "integral_as_int")]
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

fn integral_as_int<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        s.serialize_i64(*value as i64)
    } else {
        s.serialize_f64(*value)
    }
}

impl ChatRequest {
    /// Compact JSON body as sent over the wire.
    pub fn to_wire_json(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
}

impl ChatResponse {
    /// Reads `choices[0].message.content` from a completion body.
    pub fn from_wire_json(body: &str) -> Result<Self, ExtractError> {
        let v: serde_json::Value =
            serde_json::from_str(body).map_err(|e| ExtractError::MalformedResponse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(|c| ChatResponse { content: c.to_string() })
            .ok_or_else(|| ExtractError::MalformedResponse("missing choices[0].message.content".into()))
    }
}

pub fn build_chat_request(report: &str, kind: PromptKind, tpl: &PromptTemplate) -> Result<ChatRequest, ExtractError> {
    if report.trim().is_empty() {
        return Err(ExtractError::EmptyReport);
    }
    tpl.validate()?;
    let messages = match kind {
        PromptKind::Lobe => vec![
            ChatMessage { role: Role::Assistant, content: tpl.assistant_context.clone() },
            ChatMessage { role: Role::User, content: format!("{}\n{}", tpl.user_prompt_lobe, report) },
        ],
        PromptKind::Lymph => {
            vec![ChatMessage { role: Role::User, content: format!("{}\n{}", tpl.user_prompt_lymph, report) }]
        }
    };
    Ok(ChatRequest { model_id: tpl.model_id.clone(), temperature: tpl.temperature, messages })
}

fn non_option_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b(?:pancreas|pancreatic|liver|hepatic|kidneys?|renal|spleen|heart|brain|breast|colon|stomach|bones?|adrenal|thyroid|prostate|ovary|bladder|esophagus|mediastinum|pleura|trachea|lml|lingular?)\b",
        )
        .expect("static pattern")
    })
}

/// Validates and normalizes a model answer into a partial phenotype.
pub fn parse_phenotype_response(content: &str, kind: PromptKind) -> Result<TumorPhenotype, ExtractError> {
    match kind {
        PromptKind::Lobe => {
            if let Some(bad) = invalid_lobe_phrases(content).into_iter().next() {
                return Err(ExtractError::InvalidOption(bad));
            }
            let lobes = lobe_mentions(content);
            if lobes.is_empty() {
                return Err(match non_option_pattern().find(content) {
                    Some(m) => ExtractError::InvalidOption(m.as_str().to_string()),
                    None => ExtractError::Unparseable(content.to_string()),
                });
            }
            Ok(TumorPhenotype { lobes, lymph_stations: BTreeSet::new() })
        }
        PromptKind::Lymph => {
            Ok(TumorPhenotype { lobes: BTreeSet::new(), lymph_stations: station_mentions(content) })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, initial_backoff_ms: 1000 }
    }
}

impl RetryPolicy {
    /// Pause before retry number `retry` (1-based), doubling each time.
    pub fn backoff(&self, retry: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(1u64 << (retry - 1).min(30)))
    }
}

/// Blocking chat-completion client.
#[derive(Debug, Clone)]
pub struct ChatClient {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub template: PromptTemplate,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl ChatClient {
    /// Client for `endpoint`, reading the bearer token from `EXACT_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>, template: PromptTemplate) -> Self {
        ChatClient {
            endpoint: endpoint.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            template,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(60),
        }
    }

    /// Posts `request`, retrying transport failures, 429 and 5xx responses.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ExtractError> {
        let body = request.to_wire_json();
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                thread::sleep(self.retry.backoff(attempt - 1));
            }
            let mut req = ureq::post(&self.endpoint).timeout(self.timeout).set("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            match req.send_string(&body) {
                Ok(resp) => {
                    let text = resp.into_string().map_err(|e| ExtractError::MalformedResponse(e.to_string()))?;
                    return ChatResponse::from_wire_json(&text);
                }
                Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                    last = format!("HTTP {code}");
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let detail = resp.into_string().unwrap_or_default();
                    return Err(ExtractError::HttpStatus { code, body: detail });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(ExtractError::Transport { attempts, last })
    }

    /// Sends both prompt kinds and merges the parsed answers.
    pub fn extract(&self, report: &str) -> Result<TumorPhenotype, ExtractError> {
        let mut out = TumorPhenotype::default();
        for kind in [PromptKind::Lobe, PromptKind::Lymph] {
            let request = build_chat_request(report, kind, &self.template)?;
            let response = self.complete(&request)?;
            out.merge(parse_phenotype_response(&response.content, kind)?);
        }
        Ok(out)
    }
}
