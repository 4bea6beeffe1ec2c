use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AugmentError;

/// The three text augmentations. One kind per corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentationKind {
    Shorten,
    Rewriting,
    Expansion,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 3] = [Self::Shorten, Self::Rewriting, Self::Expansion];

    /// Stable tag used in cache keys and file formats.
    pub fn tag(self) -> &'static str {
        match self {
            Self::Shorten => "shorten",
            Self::Rewriting => "rewriting",
            Self::Expansion => "expansion",
        }
    }

    /// The instruction that follows the description sentence.
    pub fn instruction(self) -> &'static str {
        match self {
            Self::Shorten => "Please simplify and summarize the provided content in one short sentence.",
            Self::Rewriting => "Please rewrite the provided content to improve the spelling, grammar, clarity, concision, logical coherence, and overall readability.",
            Self::Expansion => "Please expand the provided content to give more related and necessary information.",
        }
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AugmentationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shorten" | "s" => Ok(Self::Shorten),
            "rewriting" | "rewrite" | "r" => Ok(Self::Rewriting),
            "expansion" | "expand" | "e" => Ok(Self::Expansion),
            other => Err(format!(
                "unknown augmentation kind {other:?} (expected shorten, rewriting or expansion)"
            )),
        }
    }
}

/// Prompt for one kind with the dataset's subject filled in, e.g. "a book".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: AugmentationKind,
    pub subject_hint: String,
}

impl PromptTemplate {
    pub fn new(kind: AugmentationKind, subject_hint: impl Into<String>) -> Self {
        Self {
            kind,
            subject_hint: subject_hint.into(),
        }
    }

    pub fn request_sentence(&self) -> String {
        format!(
            "The following content is the description of {}. {}",
            self.subject_hint,
            self.kind.instruction()
        )
    }

    pub fn render(&self, text: &str) -> Result<String, AugmentError> {
        if text.trim().is_empty() {
            return Err(AugmentError::EmptyText);
        }
        Ok(format!("Request: {}\nContent: {}", self.request_sentence(), text))
    }
}

pub fn render_prompt(kind: AugmentationKind, subject_hint: &str, text: &str) -> Result<String, AugmentError> {
    PromptTemplate::new(kind, subject_hint).render(text)
}

/// Offline stand-in for the LLM. Pure function of its inputs.
pub fn mock_augment(kind: AugmentationKind, text: &str) -> String {
    match kind {
        AugmentationKind::Shorten => {
            let head = match text.find('.') {
                Some(i) => &text[..=i],
                None => text,
            };
            format!("SUMMARY: {head}")
        }
        AugmentationKind::Rewriting => format!("REWRITTEN: {text}"),
        AugmentationKind::Expansion => {
            let mut tokens: Vec<&str> = text.split_whitespace().collect();
            tokens.sort_unstable();
            tokens.dedup();
            format!("{text} EXPANDED: {}", tokens.join(" "))
        }
    }
}
