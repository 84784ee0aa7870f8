//! Structured agent outputs and their validators.
//!
//! Every validator takes the raw reply text, pulls out the first balanced
//! JSON object, and checks it field by field. Unknown fields are rejected.
//! The typed values can only be built through these checks, including when
//! they are deserialized from storage.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{extract_json_object, PersonaId};
use crate::analytics::Metric;
use crate::geo::byte_offset;

pub const POINT_COUNT: usize = 4;
pub const MIN_POINT_WORDS: usize = 3;
pub const MAX_POINT_WORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("schema error: {message}")]
    Schema { field: String, message: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl ValidationError {
    fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Whitespace-delimited token count; punctuation stays attached.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

fn parse_object(raw: &str) -> Result<Map<String, Value>, ValidationError> {
    let (start, slice) = extract_json_object(raw)?;
    match serde_json::from_str::<Value>(slice) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ValidationError::Parse {
            offset: start,
            message: "expected a JSON object".into(),
        }),
        Err(e) => Err(ValidationError::Parse {
            offset: start + byte_offset(slice, e.line(), e.column()),
            message: e.to_string(),
        }),
    }
}

fn only_fields(map: &Map<String, Value>, prefix: &str, allowed: &[&str]) -> Result<(), ValidationError> {
    if let Some(unknown) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(ValidationError::schema(
            format!("{prefix}{unknown}"),
            format!("unknown field {prefix}{unknown}"),
        ));
    }
    Ok(())
}

fn field<'a>(map: &'a Map<String, Value>, prefix: &str, name: &str) -> Result<&'a Value, ValidationError> {
    map.get(name).ok_or_else(|| {
        ValidationError::schema(format!("{prefix}{name}"), format!("missing field {prefix}{name}"))
    })
}

fn text(value: &Value, path: &str) -> Result<String, ValidationError> {
    match value {
        Value::String(s) if !s.trim().is_empty() => Ok(s.clone()),
        Value::String(_) => Err(ValidationError::schema(path, format!("{path} is empty"))),
        _ => Err(ValidationError::schema(path, format!("{path} must be a string"))),
    }
}

fn number(value: &Value, path: &str) -> Result<f64, ValidationError> {
    value
        .as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ValidationError::schema(path, format!("{path} must be a number")))
}

fn text_list(value: &Value, path: &str, min: usize, max: usize) -> Result<Vec<String>, ValidationError> {
    let items = value
        .as_array()
        .ok_or_else(|| ValidationError::schema(path, format!("{path} must be a list")))?;
    if items.len() < min || items.len() > max {
        let need = if min == max {
            min.to_string()
        } else {
            format!("{min}–{max}")
        };
        return Err(ValidationError::schema(
            path,
            format!("{path} length {}, need {need}", items.len()),
        ));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, v)| text(v, &format!("{path}[{i}]")))
        .collect()
}

fn persona_field(map: &Map<String, Value>) -> Result<PersonaId, ValidationError> {
    let name = text(field(map, "", "persona")?, "persona")?;
    PersonaId::parse_lenient(&name)
        .ok_or_else(|| ValidationError::schema("persona", format!("unknown persona {name:?}")))
}

fn check_score_range(path: &str, x: f64, lo: f64, hi: f64) -> Result<(), ValidationError> {
    if !x.is_finite() || x < lo || x > hi {
        return Err(ValidationError::schema(
            path,
            format!("{path} out of range: {x} not in [{lo}, {hi}]"),
        ));
    }
    Ok(())
}

fn check_points(points: &[String]) -> Result<(), ValidationError> {
    if points.len() != POINT_COUNT {
        return Err(ValidationError::schema(
            "points",
            format!("points length {}, need {POINT_COUNT}", points.len()),
        ));
    }
    for (i, p) in points.iter().enumerate() {
        let n = count_words(p);
        if !(MIN_POINT_WORDS..=MAX_POINT_WORDS).contains(&n) {
            return Err(ValidationError::schema(
                format!("points[{i}]"),
                format!("points[{i}]: {n} words, need {MIN_POINT_WORDS}–{MAX_POINT_WORDS}"),
            ));
        }
    }
    Ok(())
}

/// A cyclist persona's scores for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EvaluationRecord")]
pub struct PersonaEvaluation {
    persona: PersonaId,
    safety: f64,
    comfort: f64,
    total: f64,
    points: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluationRecord {
    persona: PersonaId,
    safety: f64,
    comfort: f64,
    total: f64,
    points: Vec<String>,
}

impl TryFrom<EvaluationRecord> for PersonaEvaluation {
    type Error = ValidationError;
    fn try_from(r: EvaluationRecord) -> Result<Self, Self::Error> {
        PersonaEvaluation::new(r.persona, r.safety, r.comfort, r.total, r.points)
    }
}

impl PersonaEvaluation {
    pub fn new(
        persona: PersonaId,
        safety: f64,
        comfort: f64,
        total: f64,
        points: Vec<String>,
    ) -> Result<Self, ValidationError> {
        if !persona.is_cyclist() {
            return Err(ValidationError::schema(
                "persona",
                "persona must be one of the four cyclist types",
            ));
        }
        check_score_range("safety", safety, 1.0, 10.0)?;
        check_score_range("comfort", comfort, 1.0, 10.0)?;
        check_score_range("total", total, 1.0, 10.0)?;
        check_points(&points)?;
        Ok(Self {
            persona,
            safety,
            comfort,
            total,
            points,
        })
    }

    pub fn persona(&self) -> PersonaId {
        self.persona
    }

    pub fn safety(&self) -> f64 {
        self.safety
    }

    pub fn comfort(&self) -> f64 {
        self.comfort
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn score(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Safety => self.safety,
            Metric::Comfort => self.comfort,
            Metric::Total => self.total,
        }
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }
}

pub fn validate_evaluation(raw: &str) -> Result<PersonaEvaluation, ValidationError> {
    let map = parse_object(raw)?;
    only_fields(&map, "", &["persona", "safety", "comfort", "total", "points"])?;
    let persona = persona_field(&map)?;
    let safety = number(field(&map, "", "safety")?, "safety")?;
    let comfort = number(field(&map, "", "comfort")?, "comfort")?;
    let total = number(field(&map, "", "total")?, "total")?;
    let points_value = field(&map, "", "points")?;
    let points = match points_value.as_array() {
        Some(items) => items
            .iter()
            .enumerate()
            .map(|(i, v)| text(v, &format!("points[{i}]")))
            .collect::<Result<Vec<_>, _>>()?,
        None => return Err(ValidationError::schema("points", "points must be a list")),
    };
    PersonaEvaluation::new(persona, safety, comfort, total, points)
}

/// Driver observations feeding the driver/cyclist summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DriverObservationsRecord")]
pub struct DriverObservations {
    points: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DriverObservationsRecord {
    points: Vec<String>,
}

impl TryFrom<DriverObservationsRecord> for DriverObservations {
    type Error = ValidationError;
    fn try_from(r: DriverObservationsRecord) -> Result<Self, Self::Error> {
        DriverObservations::new(r.points)
    }
}

impl DriverObservations {
    pub fn new(points: Vec<String>) -> Result<Self, ValidationError> {
        check_points(&points)?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }
}

pub fn validate_driver_observations(raw: &str) -> Result<DriverObservations, ValidationError> {
    let map = parse_object(raw)?;
    only_fields(&map, "", &["persona", "points"])?;
    if persona_field(&map)? != PersonaId::Driver {
        return Err(ValidationError::schema("persona", "persona must be Driver"));
    }
    let points_value = field(&map, "", "points")?;
    let points = text_list(points_value, "points", 0, usize::MAX)?;
    DriverObservations::new(points)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DeepAnalysisRecord")]
pub struct DeepAnalysisReport {
    persona: PersonaId,
    key_concerns: Vec<String>,
    recommendations: Vec<String>,
    non_negotiables: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeepAnalysisRecord {
    persona: PersonaId,
    key_concerns: Vec<String>,
    recommendations: Vec<String>,
    non_negotiables: Vec<String>,
}

impl TryFrom<DeepAnalysisRecord> for DeepAnalysisReport {
    type Error = ValidationError;
    fn try_from(r: DeepAnalysisRecord) -> Result<Self, Self::Error> {
        DeepAnalysisReport::new(r.persona, r.key_concerns, r.recommendations, r.non_negotiables)
    }
}

fn check_list_len(path: &str, items: &[String], min: usize, max: usize) -> Result<(), ValidationError> {
    let list = Value::Array(items.iter().cloned().map(Value::String).collect());
    text_list(&list, path, min, max).map(|_| ())
}

impl DeepAnalysisReport {
    pub fn new(
        persona: PersonaId,
        key_concerns: Vec<String>,
        recommendations: Vec<String>,
        non_negotiables: Vec<String>,
    ) -> Result<Self, ValidationError> {
        check_list_len("key_concerns", &key_concerns, 3, 5)?;
        check_list_len("recommendations", &recommendations, 3, 5)?;
        check_list_len("non_negotiables", &non_negotiables, 1, 2)?;
        Ok(Self {
            persona,
            key_concerns,
            recommendations,
            non_negotiables,
        })
    }

    pub fn persona(&self) -> PersonaId {
        self.persona
    }

    pub fn key_concerns(&self) -> &[String] {
        &self.key_concerns
    }

    pub fn recommendations(&self) -> &[String] {
        &self.recommendations
    }

    pub fn non_negotiables(&self) -> &[String] {
        &self.non_negotiables
    }
}

pub fn validate_deep_analysis(raw: &str) -> Result<DeepAnalysisReport, ValidationError> {
    let map = parse_object(raw)?;
    only_fields(
        &map,
        "",
        &["persona", "key_concerns", "recommendations", "non_negotiables"],
    )?;
    let persona = persona_field(&map)?;
    let key_concerns = text_list(field(&map, "", "key_concerns")?, "key_concerns", 3, 5)?;
    let recommendations = text_list(field(&map, "", "recommendations")?, "recommendations", 3, 5)?;
    let non_negotiables = text_list(field(&map, "", "non_negotiables")?, "non_negotiables", 1, 2)?;
    DeepAnalysisReport::new(persona, key_concerns, recommendations, non_negotiables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignScore {
    pub design_id: String,
    pub score: f64,
    pub rationale: String,
}

/// One persona's verdict over several designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComparisonRecord")]
pub struct ComparisonVerdict {
    persona: PersonaId,
    scores: Vec<DesignScore>,
    preferred_design: String,
    deal_breakers: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ComparisonRecord {
    persona: PersonaId,
    scores: Vec<DesignScore>,
    preferred_design: String,
    deal_breakers: Vec<String>,
}

impl TryFrom<ComparisonRecord> for ComparisonVerdict {
    type Error = ValidationError;
    fn try_from(r: ComparisonRecord) -> Result<Self, Self::Error> {
        let ids: Vec<String> = r.scores.iter().map(|s| s.design_id.clone()).collect();
        ComparisonVerdict::new(r.persona, r.scores, r.preferred_design, r.deal_breakers, &ids)
    }
}

fn check_presented(presented: &[String]) -> Result<(), ValidationError> {
    if presented.is_empty() {
        return Err(ValidationError::Precondition("no designs presented".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = presented.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(ValidationError::Precondition(format!(
            "design id {dup} presented twice"
        )));
    }
    Ok(())
}

impl ComparisonVerdict {
    pub fn new(
        persona: PersonaId,
        scores: Vec<DesignScore>,
        preferred_design: String,
        deal_breakers: Vec<String>,
        presented: &[String],
    ) -> Result<Self, ValidationError> {
        check_presented(presented)?;
        let mut seen = HashSet::new();
        for (i, s) in scores.iter().enumerate() {
            let path = format!("scores[{i}]");
            if !presented.contains(&s.design_id) {
                return Err(ValidationError::schema(
                    format!("{path}.design_id"),
                    format!("unknown design_id {:?}", s.design_id),
                ));
            }
            if !seen.insert(s.design_id.as_str()) {
                return Err(ValidationError::schema(
                    format!("{path}.design_id"),
                    format!("design {:?} scored more than once", s.design_id),
                ));
            }
            check_score_range(&format!("{path}.score"), s.score, 0.0, 1.0)?;
            if s.rationale.trim().is_empty() {
                return Err(ValidationError::schema(
                    format!("{path}.rationale"),
                    format!("{path}.rationale is empty"),
                ));
            }
        }
        if let Some(missing) = presented.iter().find(|id| !seen.contains(id.as_str())) {
            return Err(ValidationError::schema(
                "scores",
                format!("missing score for design {missing:?}"),
            ));
        }
        if !presented.contains(&preferred_design) {
            return Err(ValidationError::schema(
                "preferred_design",
                format!("preferred_design not presented: {preferred_design:?}"),
            ));
        }
        if deal_breakers.iter().any(|d| d.trim().is_empty()) {
            return Err(ValidationError::schema("deal_breakers", "deal_breakers contains an empty item"));
        }
        Ok(Self {
            persona,
            scores,
            preferred_design,
            deal_breakers,
        })
    }

    pub fn persona(&self) -> PersonaId {
        self.persona
    }

    pub fn scores(&self) -> &[DesignScore] {
        &self.scores
    }

    pub fn preferred_design(&self) -> &str {
        &self.preferred_design
    }

    pub fn deal_breakers(&self) -> &[String] {
        &self.deal_breakers
    }

    pub fn design_ids(&self) -> Vec<&str> {
        self.scores.iter().map(|s| s.design_id.as_str()).collect()
    }
}

pub fn validate_comparison(raw: &str, presented: &[String]) -> Result<ComparisonVerdict, ValidationError> {
    check_presented(presented)?;
    let map = parse_object(raw)?;
    only_fields(&map, "", &["persona", "scores", "preferred_design", "deal_breakers"])?;
    let persona = persona_field(&map)?;
    let items = field(&map, "", "scores")?
        .as_array()
        .ok_or_else(|| ValidationError::schema("scores", "scores must be a list"))?;
    let mut scores = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let prefix = format!("scores[{i}].");
        let obj = item
            .as_object()
            .ok_or_else(|| ValidationError::schema(format!("scores[{i}]"), "score entry must be an object"))?;
        only_fields(obj, &prefix, &["design_id", "score", "rationale"])?;
        scores.push(DesignScore {
            design_id: text(field(obj, &prefix, "design_id")?, &format!("{prefix}design_id"))?,
            score: number(field(obj, &prefix, "score")?, &format!("{prefix}score"))?,
            rationale: text(field(obj, &prefix, "rationale")?, &format!("{prefix}rationale"))?,
        });
    }
    let preferred = text(field(&map, "", "preferred_design")?, "preferred_design")?;
    let deal_breakers = text_list(field(&map, "", "deal_breakers")?, "deal_breakers", 0, usize::MAX)?;
    ComparisonVerdict::new(persona, scores, preferred, deal_breakers, presented)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsCons {
    pub pros: String,
    pub cons: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SummaryRecord")]
pub struct DriverCyclistSummary {
    pub driver: ProsCons,
    pub cyclist: ProsCons,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryRecord {
    driver: ProsCons,
    cyclist: ProsCons,
}

impl TryFrom<SummaryRecord> for DriverCyclistSummary {
    type Error = ValidationError;
    fn try_from(r: SummaryRecord) -> Result<Self, Self::Error> {
        DriverCyclistSummary::new(r.driver, r.cyclist)
    }
}

impl DriverCyclistSummary {
    pub fn new(driver: ProsCons, cyclist: ProsCons) -> Result<Self, ValidationError> {
        for (path, value) in [
            ("driver.pros", &driver.pros),
            ("driver.cons", &driver.cons),
            ("cyclist.pros", &cyclist.pros),
            ("cyclist.cons", &cyclist.cons),
        ] {
            if value.trim().is_empty() {
                return Err(ValidationError::schema(path, format!("{path} is empty")));
            }
        }
        Ok(Self { driver, cyclist })
    }
}

pub fn validate_summary(raw: &str) -> Result<DriverCyclistSummary, ValidationError> {
    let map = parse_object(raw)?;
    only_fields(&map, "", &["driver", "cyclist"])?;
    let side = |name: &str| -> Result<ProsCons, ValidationError> {
        let obj = field(&map, "", name)?
            .as_object()
            .ok_or_else(|| ValidationError::schema(name, format!("{name} must be an object")))?;
        let prefix = format!("{name}.");
        only_fields(obj, &prefix, &["pros", "cons"])?;
        Ok(ProsCons {
            pros: text(field(obj, &prefix, "pros")?, &format!("{prefix}pros"))?,
            cons: text(field(obj, &prefix, "cons")?, &format!("{prefix}cons"))?,
        })
    };
    DriverCyclistSummary::new(side("driver")?, side("cyclist")?)
}

/// A persona's contribution to a group discussion. `relevance` is only
/// present when the backend scores it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionReply {
    pub persona: PersonaId,
    pub reply: String,
    pub relevance: Option<f64>,
}

pub fn validate_discussion_reply(raw: &str) -> Result<DiscussionReply, ValidationError> {
    let map = parse_object(raw)?;
    only_fields(&map, "", &["persona", "reply", "relevance"])?;
    let persona = persona_field(&map)?;
    let reply = text(field(&map, "", "reply")?, "reply")?;
    let relevance = match map.get("relevance") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let r = number(v, "relevance")?;
            check_score_range("relevance", r, 0.0, 1.0)?;
            Some(r)
        }
    };
    Ok(DiscussionReply {
        persona,
        reply,
        relevance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn four_points() -> Value {
        json!([
            "Fast lane keeps momentum",
            "Few obstacles slow riding",
            "Overtaking room looks fine",
            "Signals interrupt steady pace"
        ])
    }

    fn eval_doc(overrides: Value) -> String {
        let mut base = json!({
            "persona": "Strong & Fearless",
            "safety": 7, "comfort": 7, "total": 7,
            "points": four_points()
        });
        for (k, v) in overrides.as_object().unwrap() {
            if v.is_null() {
                base.as_object_mut().unwrap().remove(k);
            } else {
                base[k] = v.clone();
            }
        }
        base.to_string()
    }

    fn schema_message(err: ValidationError) -> String {
        match err {
            ValidationError::Schema { message, .. } => message,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn evaluation_happy_path() {
        let e = validate_evaluation(&eval_doc(json!({}))).unwrap();
        assert_eq!(e.persona(), PersonaId::StrongFearless);
        assert_eq!((e.safety(), e.comfort(), e.total()), (7.0, 7.0, 7.0));
        assert_eq!(e.points().len(), 4);
    }

    #[test]
    fn evaluation_accepts_decimals_and_fences() {
        let doc = format!("```json\n{}\n```", eval_doc(json!({"safety": 6.5})));
        assert_eq!(validate_evaluation(&doc).unwrap().safety(), 6.5);
    }

    #[test]
    fn evaluation_range_error() {
        let msg = schema_message(validate_evaluation(&eval_doc(json!({"safety": 11}))).unwrap_err());
        assert!(msg.starts_with("safety out of range"), "{msg}");
        assert!(validate_evaluation(&eval_doc(json!({"comfort": 0.5}))).is_err());
        assert!(validate_evaluation(&eval_doc(json!({"total": "7"}))).is_err());
    }

    #[test]
    fn evaluation_point_rules() {
        let three = json!(["Fast lane keeps momentum", "Few obstacles slow riding", "Overtaking room looks fine"]);
        let msg = schema_message(validate_evaluation(&eval_doc(json!({"points": three}))).unwrap_err());
        assert_eq!(msg, "points length 3, need 4");

        let short = json!(["Fast lane keeps momentum", "Few obstacles slow riding", "Too short", "Signals interrupt steady pace"]);
        let msg = schema_message(validate_evaluation(&eval_doc(json!({"points": short}))).unwrap_err());
        assert_eq!(msg, "points[2]: 2 words, need 3–10");

        let long = json!(["one two three four five six seven eight nine ten eleven", "a b c", "a b c", "a b c"]);
        assert!(validate_evaluation(&eval_doc(json!({"points": long}))).is_err());
    }

    #[test]
    fn evaluation_rejects_unknown_and_missing_fields() {
        let err = validate_evaluation(&eval_doc(json!({"mood": "happy"}))).unwrap_err();
        assert!(matches!(err, ValidationError::Schema { ref field, .. } if field == "mood"));
        let err = validate_evaluation(&eval_doc(json!({"total": null}))).unwrap_err();
        assert!(matches!(err, ValidationError::Schema { ref field, .. } if field == "total"));
    }

    #[test]
    fn evaluation_rejects_driver() {
        assert!(validate_evaluation(&eval_doc(json!({"persona": "Driver"}))).is_err());
    }

    #[test]
    fn evaluation_parse_errors() {
        assert!(matches!(validate_evaluation("I cannot help"), Err(ValidationError::Parse { .. })));
        assert!(matches!(
            validate_evaluation("{\"persona\": \"Driver\", safety: 3}"),
            Err(ValidationError::Parse { offset, .. }) if offset > 0
        ));
    }

    fn analysis_doc(concerns: usize, recs: usize, nn: usize) -> String {
        let list = |n: usize, w: &str| (0..n).map(|i| format!("{w} {i}")).collect::<Vec<_>>();
        json!({
            "persona": "Interested but Concerned",
            "key_concerns": list(concerns, "concern"),
            "recommendations": list(recs, "recommendation"),
            "non_negotiables": list(nn, "requirement"),
        })
        .to_string()
    }

    #[test]
    fn deep_analysis_cardinalities() {
        assert!(validate_deep_analysis(&analysis_doc(3, 3, 1)).is_ok());
        assert!(validate_deep_analysis(&analysis_doc(5, 5, 2)).is_ok());
        assert!(validate_deep_analysis(&analysis_doc(6, 3, 1)).is_err());
        assert!(validate_deep_analysis(&analysis_doc(3, 2, 1)).is_err());
        let msg = schema_message(validate_deep_analysis(&analysis_doc(3, 3, 0)).unwrap_err());
        assert_eq!(msg, "non_negotiables length 0, need 1–2");
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn verdict_doc(scores: Value, preferred: &str) -> String {
        json!({
            "persona": "Interested but Concerned",
            "scores": scores,
            "preferred_design": preferred,
            "deal_breakers": ["no physical barrier"]
        })
        .to_string()
    }

    #[test]
    fn comparison_rules() {
        let scores = json!([
            {"design_id": "A", "score": 0.8, "rationale": "Bollards protect me."},
            {"design_id": "B", "score": 0.4, "rationale": "Paint only."}
        ]);
        let v = validate_comparison(&verdict_doc(scores.clone(), "A"), &ids(&["A", "B"])).unwrap();
        assert_eq!(v.preferred_design(), "A");

        let msg = schema_message(validate_comparison(&verdict_doc(scores.clone(), "C"), &ids(&["A", "B"])).unwrap_err());
        assert!(msg.starts_with("preferred_design not presented"));

        let high = json!([
            {"design_id": "A", "score": 1.2, "rationale": "x"},
            {"design_id": "B", "score": 0.4, "rationale": "y"}
        ]);
        let msg = schema_message(validate_comparison(&verdict_doc(high, "A"), &ids(&["A", "B"])).unwrap_err());
        assert!(msg.contains("out of range"));

        let missing = json!([{"design_id": "A", "score": 0.8, "rationale": "x"}]);
        let msg = schema_message(validate_comparison(&verdict_doc(missing, "A"), &ids(&["A", "B"])).unwrap_err());
        assert!(msg.contains("missing score for design \"B\""));

        let unknown = json!([
            {"design_id": "A", "score": 0.8, "rationale": "x"},
            {"design_id": "B", "score": 0.4, "rationale": "y"},
            {"design_id": "Z", "score": 0.4, "rationale": "z"}
        ]);
        assert!(validate_comparison(&verdict_doc(unknown, "A"), &ids(&["A", "B"])).is_err());

        assert!(matches!(
            validate_comparison(&verdict_doc(scores.clone(), "A"), &ids(&["A", "A"])),
            Err(ValidationError::Precondition(_))
        ));
        assert!(matches!(
            validate_comparison(&verdict_doc(scores, "A"), &[]),
            Err(ValidationError::Precondition(_))
        ));
    }

    #[test]
    fn summary_requires_all_fields() {
        let ok = json!({"driver": {"pros": "a", "cons": "b"}, "cyclist": {"pros": "c", "cons": "d"}});
        assert!(validate_summary(&ok.to_string()).is_ok());
        let missing = json!({"driver": {"pros": "a"}, "cyclist": {"pros": "c", "cons": "d"}});
        let err = validate_summary(&missing.to_string()).unwrap_err();
        assert!(matches!(err, ValidationError::Schema { ref field, .. } if field == "driver.cons"));
        let empty = json!({"driver": {"pros": "a", "cons": " "}, "cyclist": {"pros": "c", "cons": "d"}});
        assert!(validate_summary(&empty.to_string()).is_err());
    }

    #[test]
    fn discussion_reply_relevance_optional() {
        let r = validate_discussion_reply(r#"{"persona":"Driver","reply":"Fine by me."}"#).unwrap();
        assert_eq!(r.relevance, None);
        let r = validate_discussion_reply(r#"{"persona":"Driver","reply":"Fine.","relevance":0.4}"#).unwrap();
        assert_eq!(r.relevance, Some(0.4));
        assert!(validate_discussion_reply(r#"{"persona":"Driver","reply":"Fine.","relevance":1.4}"#).is_err());
        assert!(validate_discussion_reply(r#"{"persona":"Driver","reply":""}"#).is_err());
    }

    #[test]
    fn stored_values_revalidate_on_deserialize() {
        let bad = json!({"persona": "strong-fearless", "safety": 12, "comfort": 7, "total": 7, "points": four_points()});
        assert!(serde_json::from_value::<PersonaEvaluation>(bad).is_err());
        let good = json!({"persona": "strong-fearless", "safety": 7.0, "comfort": 6.5, "total": 7.0, "points": four_points()});
        let e: PersonaEvaluation = serde_json::from_value(good.clone()).unwrap();
        assert_eq!(serde_json::to_value(&e).unwrap(), good);
    }

    #[test]
    fn word_counting() {
        assert_eq!(count_words("  a  b\tc\n"), 3);
        assert_eq!(count_words("bike-lane, green!"), 2);
        assert_eq!(count_words(""), 0);
    }
}
