//! The five pulmonary lobes and their textual aliases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the five anatomical lung lobes.
///
/// The discriminant doubles as the label code stored in lobe label maps
/// (`0` is reserved for background).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
#[repr(u8)]
pub enum LobeId {
    Rul = 1,
    Rml = 2,
    Rll = 3,
    Lul = 4,
    Lll = 5,
}

impl LobeId {
    pub const ALL: [LobeId; 5] = [LobeId::Rul, LobeId::Rml, LobeId::Rll, LobeId::Lul, LobeId::Lll];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<LobeId> {
        match label {
            1 => Some(LobeId::Rul),
            2 => Some(LobeId::Rml),
            3 => Some(LobeId::Rll),
            4 => Some(LobeId::Lul),
            5 => Some(LobeId::Lll),
            _ => None,
        }
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            LobeId::Rul => "RUL",
            LobeId::Rml => "RML",
            LobeId::Rll => "RLL",
            LobeId::Lul => "LUL",
            LobeId::Lll => "LLL",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            LobeId::Rul => "right upper lobe",
            LobeId::Rml => "right middle lobe",
            LobeId::Rll => "right lower lobe",
            LobeId::Lul => "left upper lobe",
            LobeId::Lll => "left lower lobe",
        }
    }

    pub fn is_right(self) -> bool {
        matches!(self, LobeId::Rul | LobeId::Rml | LobeId::Rll)
    }

    /// Resolves an abbreviation or full name, case-insensitively.
    ///
    /// "inferior" is accepted as a synonym of "lower" (RIL, LIL).
    pub fn from_alias(text: &str) -> Option<LobeId> {
        let norm = text
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_ascii_lowercase();
        match norm.as_str() {
            "rul" | "right upper lobe" | "right superior lobe" => Some(LobeId::Rul),
            "rml" | "right middle lobe" => Some(LobeId::Rml),
            "rll" | "ril" | "right lower lobe" | "right inferior lobe" => Some(LobeId::Rll),
            "lul" | "left upper lobe" | "left superior lobe" => Some(LobeId::Lul),
            "lll" | "lil" | "left lower lobe" | "left inferior lobe" => Some(LobeId::Lll),
            _ => None,
        }
    }
}

impl fmt::Display for LobeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbreviation())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown lobe `{0}`")]
pub struct UnknownLobe(pub String);

impl FromStr for LobeId {
    type Err = UnknownLobe;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LobeId::from_alias(s).ok_or_else(|| UnknownLobe(s.to_string()))
    }
}

impl TryFrom<String> for LobeId {
    type Error = UnknownLobe;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<LobeId> for String {
    fn from(value: LobeId) -> Self {
        value.abbreviation().to_string()
    }
}
