use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::analytics::{detect_conflicts, iteration_delta, ConflictReport, IterationDelta, PreferencePartition};
use crate::design::{BufferLocation, DesignSpec};
use crate::geo::StreetContext;
use crate::images::ImageRef;
use crate::persona::{ChatMessage, ComparisonVerdict, PersonaEvaluation, PersonaId};
use crate::runtime::{Baseline, DiscussionTurn};

pub const SCHEMA_VERSION: u32 = 1;
/// Scenario id of the unmodified street.
pub const EXISTING: &str = "existing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub design_id: String,
    pub spec: DesignSpec,
    /// Location the designer asked for, kept even when the buffer type
    /// made it meaningless.
    pub requested_location: Option<BufferLocation>,
    pub warnings: Vec<String>,
    pub compiled_prompt_sha256: String,
    pub image: ImageRef,
    pub evaluations: Vec<PersonaEvaluation>,
    /// Score change relative to the previous iteration (or the baseline).
    pub delta: IterationDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub design_ids: Vec<String>,
    pub message: String,
    pub verdicts: Vec<ComparisonVerdict>,
    pub partition: PreferencePartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionRecord {
    pub question: String,
    pub design_ids: Vec<String>,
    pub turns: Vec<DiscussionTurn>,
}

/// Everything produced while designing for one location.
///
/// Equality ignores `created_at` so reruns of the same script compare equal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSession {
    pub schema_version: u32,
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub context: StreetContext,
    pub base_image: ImageRef,
    pub baseline: Baseline,
    #[serde(default)]
    pub iterations: Vec<Iteration>,
    #[serde(default)]
    pub chats: BTreeMap<PersonaId, Vec<ChatMessage>>,
    #[serde(default)]
    pub comparisons: Vec<ComparisonRecord>,
    #[serde(default)]
    pub discussions: Vec<DiscussionRecord>,
}

impl PartialEq for DesignSession {
    fn eq(&self, other: &Self) -> bool {
        self.schema_version == other.schema_version
            && self.id == other.id
            && self.context == other.context
            && self.base_image == other.base_image
            && self.baseline == other.baseline
            && self.iterations == other.iterations
            && self.chats == other.chats
            && self.comparisons == other.comparisons
            && self.discussions == other.discussions
    }
}

/// Inputs for one new design iteration.
#[derive(Debug, Clone)]
pub struct NewIteration {
    pub spec: DesignSpec,
    pub requested_location: Option<BufferLocation>,
    pub warnings: Vec<String>,
    pub compiled_prompt_sha256: String,
    pub image: ImageRef,
    pub evaluations: Vec<PersonaEvaluation>,
}

impl DesignSession {
    pub fn new(
        id: impl Into<String>,
        created_at: DateTime<Utc>,
        context: StreetContext,
        base_image: ImageRef,
        baseline: Baseline,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            id: id.into(),
            created_at,
            context,
            base_image,
            baseline,
            iterations: Vec::new(),
            chats: BTreeMap::new(),
            comparisons: Vec::new(),
            discussions: Vec::new(),
        }
    }

    pub fn next_design_id(&self) -> String {
        format!("d{}", self.iterations.len() + 1)
    }

    pub fn iteration(&self, design_id: &str) -> Option<&Iteration> {
        self.iterations.iter().find(|it| it.design_id == design_id)
    }

    pub fn latest_evaluations(&self) -> &[PersonaEvaluation] {
        self.iterations
            .last()
            .map(|it| it.evaluations.as_slice())
            .unwrap_or(&self.baseline.evaluations)
    }

    /// Scenario ids in order: `existing`, then each design.
    pub fn scenario_ids(&self) -> Vec<&str> {
        std::iter::once(EXISTING)
            .chain(self.iterations.iter().map(|it| it.design_id.as_str()))
            .collect()
    }

    pub fn scenario_evaluations(&self, scenario: &str) -> Option<&[PersonaEvaluation]> {
        if scenario == EXISTING {
            Some(&self.baseline.evaluations)
        } else {
            self.iteration(scenario).map(|it| it.evaluations.as_slice())
        }
    }

    pub fn scenario_image(&self, scenario: &str) -> Option<&ImageRef> {
        if scenario == EXISTING {
            Some(&self.base_image)
        } else {
            self.iteration(scenario).map(|it| &it.image)
        }
    }

    /// Appends an iteration, computing its delta against the latest scores.
    pub fn push_iteration(&mut self, new: NewIteration) -> Result<&Iteration, String> {
        let delta = iteration_delta(self.latest_evaluations(), &new.evaluations).map_err(|e| e.to_string())?;
        let design_id = self.next_design_id();
        self.iterations.push(Iteration {
            design_id,
            spec: new.spec,
            requested_location: new.requested_location,
            warnings: new.warnings,
            compiled_prompt_sha256: new.compiled_prompt_sha256,
            image: new.image,
            evaluations: new.evaluations,
            delta,
        });
        Ok(self.iterations.last().expect("just pushed"))
    }

    pub fn conflict_report(&self, scenario: &str, threshold: f64) -> Option<ConflictReport> {
        let evals = self.scenario_evaluations(scenario)?;
        detect_conflicts(evals, threshold).ok()
    }

    pub fn chat_history(&self, persona: PersonaId) -> &[ChatMessage] {
        self.chats.get(&persona).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every image the session points at.
    pub fn images(&self) -> Vec<&ImageRef> {
        std::iter::once(&self.base_image)
            .chain(self.iterations.iter().map(|it| &it.image))
            .collect()
    }

    /// Structural checks run on every load.
    pub fn check_integrity(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let mut ids = HashSet::new();
        let mut prev: &[PersonaEvaluation] = &self.baseline.evaluations;
        for it in &self.iterations {
            if it.design_id == EXISTING || !ids.insert(it.design_id.as_str()) {
                return Err(format!("design id {} is reused", it.design_id));
            }
            let recomputed = iteration_delta(prev, &it.evaluations)
                .map_err(|e| format!("iteration {}: {e}", it.design_id))?;
            if recomputed != it.delta {
                return Err(format!(
                    "iteration {} delta does not match its evaluations",
                    it.design_id
                ));
            }
            prev = &it.evaluations;
        }
        for (persona, messages) in &self.chats {
            if let Some(m) = messages.iter().find(|m| m.persona != *persona) {
                return Err(format!("{persona} chat holds a message for {}", m.persona));
            }
        }
        Ok(())
    }
}
