use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::session::{ComparisonRecord, DesignSession, EXISTING};
use crate::analytics::{persistent_conflicts, ConflictReport, IterationDelta, Metric};
use crate::design::DesignSpec;
use crate::geo::{Coordinates, StreetContext};
use crate::persona::{PersonaEvaluation, PersonaId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("unknown report format {0:?}; expected json or markdown")]
    UnknownFormat(String),
    #[error("cannot serialize report: {0}")]
    Serialize(String),
}

impl FromStr for ReportFormat {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub id: String,
    pub description: String,
    pub spec: Option<DesignSpec>,
    pub evaluations: Vec<PersonaEvaluation>,
    pub conflicts: Option<ConflictReport>,
    pub delta: Option<IterationDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub coords: Coordinates,
    pub context: StreetContext,
    pub threshold: f64,
    pub scenarios: Vec<ScenarioReport>,
    /// Metrics flagged in every design iteration.
    pub persistent_conflicts: Vec<Metric>,
    pub comparisons: Vec<ComparisonRecord>,
}

impl SessionReport {
    pub fn build(session: &DesignSession, threshold: f64) -> Self {
        let mut scenarios = vec![ScenarioReport {
            id: EXISTING.into(),
            description: "Existing street".into(),
            spec: None,
            evaluations: session.baseline.evaluations.clone(),
            conflicts: session.conflict_report(EXISTING, threshold),
            delta: None,
        }];
        for it in &session.iterations {
            scenarios.push(ScenarioReport {
                id: it.design_id.clone(),
                description: it.spec.describe(),
                spec: Some(it.spec.clone()),
                evaluations: it.evaluations.clone(),
                conflicts: session.conflict_report(&it.design_id, threshold),
                delta: Some(it.delta.clone()),
            });
        }
        let design_reports: Vec<ConflictReport> = scenarios[1..]
            .iter()
            .filter_map(|s| s.conflicts.clone())
            .collect();
        let persistent = if design_reports.is_empty() {
            Vec::new()
        } else {
            persistent_conflicts(&design_reports, design_reports.len())
        };
        Self {
            session_id: session.id.clone(),
            coords: session.context.coords,
            context: session.context.clone(),
            threshold,
            scenarios,
            persistent_conflicts: persistent,
            comparisons: session.comparisons.clone(),
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Design session {}\n", self.session_id);
        let _ = writeln!(out, "Location: {}, {}", self.coords.lat, self.coords.lon);
        let roads: Vec<String> = self
            .context
            .roads
            .iter()
            .map(|r| format!("{} ({})", r.name, r.road_type))
            .collect();
        if !roads.is_empty() {
            let _ = writeln!(out, "Roads: {}", roads.join(", "));
        }
        let _ = writeln!(
            out,
            "Existing bike infrastructure: {}\n",
            if self.context.has_bike_infrastructure { "yes" } else { "no" }
        );

        out.push_str("## Scenarios\n\n");
        for s in &self.scenarios {
            let _ = writeln!(out, "- **{}**: {}", s.id, s.description);
        }
        out.push('\n');

        for metric in Metric::ALL {
            let _ = writeln!(out, "## {} scores\n", capitalize(metric.name()));
            out.push_str("| Persona |");
            for s in &self.scenarios {
                let _ = write!(out, " {} |", column_label(&s.id));
            }
            out.push_str("\n|---|");
            for _ in &self.scenarios {
                out.push_str("---|");
            }
            out.push('\n');
            for persona in PersonaId::CYCLISTS {
                let _ = write!(out, "| {} |", persona.display_name());
                for s in &self.scenarios {
                    let cell = s
                        .evaluations
                        .iter()
                        .find(|e| e.persona() == persona)
                        .map(|e| e.score(metric).to_string())
                        .unwrap_or_else(|| "-".into());
                    let _ = write!(out, " {cell} |");
                }
                out.push('\n');
            }
            out.push('\n');
        }

        let _ = writeln!(out, "## Conflicts (threshold {})\n", self.threshold);
        out.push_str("| Scenario | Metric | Gap | Highest | Lowest | Flagged |\n|---|---|---|---|---|---|\n");
        for s in &self.scenarios {
            let Some(report) = &s.conflicts else { continue };
            for (metric, gap) in &report.per_metric {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} ({}) | {} ({}) | {} |",
                    column_label(&s.id),
                    metric.name(),
                    gap.gap,
                    gap.max_persona.display_name(),
                    gap.max,
                    gap.min_persona.display_name(),
                    gap.min,
                    if report.is_flagged(*metric) { "yes" } else { "no" },
                );
            }
        }
        out.push('\n');
        if !self.persistent_conflicts.is_empty() {
            let names: Vec<&str> = self.persistent_conflicts.iter().map(|m| m.name()).collect();
            let _ = writeln!(out, "Conflicts present in every design: {}\n", names.join(", "));
        }

        if !self.comparisons.is_empty() {
            out.push_str("## Preferences\n\n");
            for (i, c) in self.comparisons.iter().enumerate() {
                let _ = writeln!(out, "### Comparison {} ({})\n", i + 1, c.design_ids.join(" vs "));
                for v in &c.verdicts {
                    let _ = writeln!(out, "- {} prefers {}", v.persona().display_name(), v.preferred_design());
                }
                let _ = writeln!(
                    out,
                    "\nPersonas {}.\n",
                    if c.partition.disagreement { "disagree" } else { "agree" }
                );
            }
        }
        out
    }
}

fn column_label(id: &str) -> &str {
    if id == EXISTING {
        "Existing"
    } else {
        id
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn export_report(session: &DesignSession, format: ReportFormat, threshold: f64) -> Result<String, ReportError> {
    let report = SessionReport::build(session, threshold);
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(&report).map_err(|e| ReportError::Serialize(e.to_string()))
        }
        ReportFormat::Markdown => Ok(report.to_markdown()),
    }
}
