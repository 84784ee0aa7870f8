//! The five road-user personas, their structured outputs, and prompt rendering.

mod extract;
pub mod prompts;
mod schema;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::extract_json_object;
pub use prompts::render_evaluation_prompt;
pub use schema::{
    count_words, validate_comparison, validate_deep_analysis, validate_discussion_reply,
    validate_driver_observations, validate_evaluation, validate_summary, ComparisonVerdict,
    DeepAnalysisReport, DesignScore, DiscussionReply, DriverCyclistSummary, DriverObservations,
    PersonaEvaluation, ProsCons, ValidationError, MAX_POINT_WORDS, MIN_POINT_WORDS, POINT_COUNT,
};

/// Persona identifiers in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PersonaId {
    StrongFearless,
    EnthusedConfident,
    InterestedConcerned,
    NoWayNoHow,
    Driver,
}

impl PersonaId {
    pub const ALL: [PersonaId; 5] = [
        PersonaId::StrongFearless,
        PersonaId::EnthusedConfident,
        PersonaId::InterestedConcerned,
        PersonaId::NoWayNoHow,
        PersonaId::Driver,
    ];

    pub const CYCLISTS: [PersonaId; 4] = [
        PersonaId::StrongFearless,
        PersonaId::EnthusedConfident,
        PersonaId::InterestedConcerned,
        PersonaId::NoWayNoHow,
    ];

    pub fn token(self) -> &'static str {
        match self {
            PersonaId::StrongFearless => "strong-fearless",
            PersonaId::EnthusedConfident => "enthused-confident",
            PersonaId::InterestedConcerned => "interested-concerned",
            PersonaId::NoWayNoHow => "no-way-no-how",
            PersonaId::Driver => "driver",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            PersonaId::StrongFearless => "Strong & Fearless",
            PersonaId::EnthusedConfident => "Enthused & Confident",
            PersonaId::InterestedConcerned => "Interested but Concerned",
            PersonaId::NoWayNoHow => "No Way No How",
            PersonaId::Driver => "Driver",
        }
    }

    pub fn is_cyclist(self) -> bool {
        self != PersonaId::Driver
    }

    /// Accepts the wire token or the display name, ignoring case and
    /// punctuation differences such as "No Way, No How".
    pub fn parse_lenient(s: &str) -> Option<PersonaId> {
        let norm = |s: &str| -> String {
            s.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect()
        };
        let wanted = norm(s);
        if wanted.is_empty() {
            return None;
        }
        PersonaId::ALL
            .into_iter()
            .find(|p| norm(p.token()) == wanted || norm(p.display_name()) == wanted)
    }
}

impl fmt::Display for PersonaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown persona {0:?}")]
pub struct UnknownPersona(pub String);

impl FromStr for PersonaId {
    type Err = UnknownPersona;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PersonaId::ALL
            .into_iter()
            .find(|p| p.token() == s)
            .ok_or_else(|| UnknownPersona(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaProfile {
    pub id: PersonaId,
    pub display_name: String,
    /// Prompt body describing who the persona is and what it prioritizes.
    pub description: String,
    pub focus_questions: Vec<String>,
    /// Lowercase tokens used by the offline relevance scorer.
    pub keywords: Vec<String>,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog io: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid catalog: {0}")]
    Invalid(String),
}

/// The five persona profiles, indexed by [`PersonaId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaCatalog {
    profiles: Vec<PersonaProfile>,
}

const BUILTIN_CATALOG: &str = include_str!("../../data/personas.json");

impl PersonaCatalog {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_CATALOG).expect("builtin persona catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let mut profiles: Vec<PersonaProfile> = serde_json::from_str(text)?;
        profiles.sort_by_key(|p| p.id);
        let ids: BTreeSet<_> = profiles.iter().map(|p| p.id).collect();
        if profiles.len() != 5 || ids.len() != 5 {
            return Err(CatalogError::Invalid(
                "catalog must contain exactly one profile per persona".into(),
            ));
        }
        for p in &profiles {
            if p.description.trim().is_empty() {
                return Err(CatalogError::Invalid(format!("{}: empty description", p.id)));
            }
            if p.id.is_cyclist() && p.focus_questions.len() < 3 {
                return Err(CatalogError::Invalid(format!(
                    "{}: cyclist profiles need at least 3 focus questions",
                    p.id
                )));
            }
            if p.keywords.iter().any(|k| k.chars().any(|c| c.is_uppercase())) {
                return Err(CatalogError::Invalid(format!("{}: keywords must be lowercase", p.id)));
            }
        }
        Ok(Self { profiles })
    }

    pub fn get(&self, id: PersonaId) -> &PersonaProfile {
        &self.profiles[id as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PersonaProfile> {
        self.profiles.iter()
    }
}

impl Default for PersonaCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChatRole {
    User,
    Persona,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChatChannel {
    Chat,
    Analysis,
}

/// One message in a persona's conversation log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub persona: PersonaId,
    pub role: ChatRole,
    pub channel: ChatChannel,
    pub text: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order() {
        let mut shuffled = vec![
            PersonaId::Driver,
            PersonaId::NoWayNoHow,
            PersonaId::StrongFearless,
            PersonaId::InterestedConcerned,
            PersonaId::EnthusedConfident,
        ];
        shuffled.sort();
        assert_eq!(shuffled, PersonaId::ALL.to_vec());
    }

    #[test]
    fn lenient_parsing() {
        assert_eq!(PersonaId::parse_lenient("No Way, No How"), Some(PersonaId::NoWayNoHow));
        assert_eq!(PersonaId::parse_lenient("strong-fearless"), Some(PersonaId::StrongFearless));
        assert_eq!(PersonaId::parse_lenient("Strong & Fearless"), Some(PersonaId::StrongFearless));
        assert_eq!(PersonaId::parse_lenient("pedestrian"), None);
        assert_eq!(PersonaId::parse_lenient("&&"), None);
        assert!("Driver".parse::<PersonaId>().is_err());
        assert_eq!("driver".parse::<PersonaId>().unwrap(), PersonaId::Driver);
    }

    #[test]
    fn builtin_catalog_is_complete() {
        let cat = PersonaCatalog::builtin();
        for id in PersonaId::ALL {
            let p = cat.get(id);
            assert_eq!(p.id, id);
            assert_eq!(p.display_name, id.display_name());
        }
        assert!(cat
            .get(PersonaId::StrongFearless)
            .focus_questions
            .iter()
            .any(|q| q == "Can I maintain speed and efficiency here?"));
    }

    #[test]
    fn catalog_rejects_missing_persona() {
        let mut all: Vec<serde_json::Value> = serde_json::from_str(BUILTIN_CATALOG).unwrap();
        all.pop();
        let err = PersonaCatalog::from_json(&serde_json::to_string(&all).unwrap()).unwrap_err();
        assert!(matches!(err, CatalogError::Invalid(_)));
    }
}
