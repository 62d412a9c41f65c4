//! Keyword rules over report sentences.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use super::TumorPhenotype;
use crate::lobe::LobeId;

fn regex(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static pattern"))
}

fn lobe_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(
        &RE,
        r"(?i)\b(?:(?:right|left)\s+(?:upper|middle|lower|inferior|superior)\s+lobe|rul|rml|rll|lul|lll|ril|lil)\b",
    )
}

fn malignancy_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)\b(?:tumou?rs?|carcinomas?|malignanc(?:y|ies)|malignant)\b")
}

fn indeterminate_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)\b(?:indeterminate|benign)\b")
}

fn history_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)\b(?:history|previously|prior|treated\s+in)\b")
}

fn malignant_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)\bmalignant\b")
}

fn negated_malignant_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)\b(?:not|no|negative\s+for|without)\s+(?:\w+\s+)?malignan")
}

fn station_list_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(
        &RE,
        r"(?i)\b(?:stations?|levels?):?\s+(\d{1,2}[rl]?(?:\s*(?:,\s*and|,|and|&|/|or)\s*\d{1,2}[rl]?)*)\b",
    )
}

fn station_node_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)\b(\d{1,2}[rl]?)\s+(?:lymph\s+)?nodes?\b")
}

fn station_code_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)\b(\d{1,2})([rl]?)\b")
}

fn bare_station_list_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)^\s*\d{1,2}[rl]?(?:\s*(?:,\s*and|,|and|&|/|or)\s*\d{1,2}[rl]?)*\s*\.?\s*$")
}

/// Splits text into sentences at `.`, `!`, `?` or `;` followed by
/// whitespace (or the end), and at line breaks. Decimal points survive.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, ch) in text.char_indices() {
        let boundary = match ch {
            '\n' | '\r' => true,
            '.' | '!' | '?' | ';' => bytes.get(i + 1).map_or(true, |b| b.is_ascii_whitespace()),
            _ => false,
        };
        if boundary {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + ch.len_utf8();
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Lobes named in `text`, by abbreviation or full name.
pub fn lobe_mentions(text: &str) -> BTreeSet<LobeId> {
    lobe_pattern().find_iter(text).filter_map(|m| LobeId::from_alias(m.as_str())).collect()
}

/// Lobe-like phrases that are not one of the five options
/// (e.g. "left middle lobe").
pub(crate) fn invalid_lobe_phrases(text: &str) -> Vec<String> {
    lobe_pattern()
        .find_iter(text)
        .filter(|m| LobeId::from_alias(m.as_str()).is_none())
        .map(|m| m.as_str().to_string())
        .collect()
}

fn normalize_station(num: &str, side: &str) -> Option<String> {
    let n: u32 = num.parse().ok()?;
    (1..=14).contains(&n).then(|| format!("{n}{}", side.to_ascii_uppercase()))
}

fn codes_in(list: &str) -> impl Iterator<Item = String> + '_ {
    station_code_pattern().captures_iter(list).filter_map(|c| normalize_station(&c[1], &c[2]))
}

/// Station codes tied to "station"/"node" wording in `text`, normalized to
/// forms like `4R` or `7`. Codes outside 1–14 are ignored.
pub fn station_mentions(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for cap in station_list_pattern().captures_iter(text) {
        out.extend(codes_in(cap.get(1).unwrap().as_str()));
    }
    for cap in station_node_pattern().captures_iter(text) {
        out.extend(codes_in(cap.get(1).unwrap().as_str()));
    }
    if out.is_empty() && bare_station_list_pattern().is_match(text) {
        out.extend(codes_in(text));
    }
    out
}

/// Rule-based phenotype extraction.
///
/// A sentence contributes its lobes when it names a lobe and a malignancy
/// term and carries neither an indeterminacy marker (`indeterminate`,
/// `benign`) nor a history marker (`history`, `previously`, `prior`,
/// `treated in`). Stations come from sentences that call a station or node
/// malignant.
pub fn rule_extract(report: &str) -> TumorPhenotype {
    let mut phenotype = TumorPhenotype::default();
    for sentence in sentences(report) {
        let is_history = history_pattern().is_match(sentence);
        let is_indeterminate = indeterminate_pattern().is_match(sentence);
        if malignancy_pattern().is_match(sentence) && !is_history && !is_indeterminate {
            phenotype.lobes.extend(lobe_mentions(sentence));
        }
        if malignant_pattern().is_match(sentence)
            && !negated_malignant_pattern().is_match(sentence)
            && !is_history
            && !is_indeterminate
        {
            let stations = station_list_pattern()
                .captures_iter(sentence)
                .chain(station_node_pattern().captures_iter(sentence))
                .flat_map(|c| codes_in(c.get(1).unwrap().as_str()).collect::<Vec<_>>());
            phenotype.lymph_stations.extend(stations);
        }
    }
    phenotype
}
