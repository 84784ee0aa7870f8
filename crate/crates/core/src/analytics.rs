//! Cross-persona conflict detection, iteration deltas, and corpus statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{BufferLocation, BufferType, DesignSpec, LaneColor, LaneWidth};
use crate::persona::{ComparisonVerdict, PersonaEvaluation, PersonaId};
use crate::store::DesignSession;

/// Flag gaps of at least this many points unless configured otherwise.
pub const DEFAULT_CONFLICT_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Safety,
    Comfort,
    Total,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Safety, Metric::Comfort, Metric::Total];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Safety => "safety",
            Metric::Comfort => "comfort",
            Metric::Total => "total",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("persona sets differ: {0}")]
    PersonaMismatch(String),
    #[error("verdicts cover different design sets")]
    InconsistentDesigns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGap {
    pub gap: f64,
    pub max: f64,
    pub min: f64,
    pub max_persona: PersonaId,
    pub min_persona: PersonaId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub per_metric: BTreeMap<Metric, MetricGap>,
    pub flagged: Vec<Metric>,
    pub threshold: f64,
}

impl ConflictReport {
    pub fn gap(&self, metric: Metric) -> f64 {
        self.per_metric[&metric].gap
    }

    pub fn is_flagged(&self, metric: Metric) -> bool {
        self.flagged.contains(&metric)
    }
}

fn check_distinct(evals: &[PersonaEvaluation]) -> Result<(), AnalyticsError> {
    let mut seen = BTreeSet::new();
    for e in evals {
        if !seen.insert(e.persona()) {
            return Err(AnalyticsError::Precondition(format!(
                "persona {} appears twice",
                e.persona()
            )));
        }
    }
    Ok(())
}

/// Per-metric max-minus-min across personas. Ties on the extremes go to the
/// persona that comes first in canonical order.
pub fn detect_conflicts(evals: &[PersonaEvaluation], threshold: f64) -> Result<ConflictReport, AnalyticsError> {
    if evals.len() < 2 {
        return Err(AnalyticsError::Precondition(format!(
            "need at least 2 evaluations, got {}",
            evals.len()
        )));
    }
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(AnalyticsError::Precondition(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    check_distinct(evals)?;
    let mut ordered: Vec<&PersonaEvaluation> = evals.iter().collect();
    ordered.sort_by_key(|e| e.persona());

    let mut per_metric = BTreeMap::new();
    let mut flagged = Vec::new();
    for metric in Metric::ALL {
        let first = ordered[0];
        let (mut hi, mut lo) = (first, first);
        for e in &ordered[1..] {
            if e.score(metric) > hi.score(metric) {
                hi = e;
            }
            if e.score(metric) < lo.score(metric) {
                lo = e;
            }
        }
        let gap = hi.score(metric) - lo.score(metric);
        if gap >= threshold {
            flagged.push(metric);
        }
        per_metric.insert(
            metric,
            MetricGap {
                gap,
                max: hi.score(metric),
                min: lo.score(metric),
                max_persona: hi.persona(),
                min_persona: lo.persona(),
            },
        );
    }
    Ok(ConflictReport {
        per_metric,
        flagged,
        threshold,
    })
}

/// Metrics flagged in each of the last `iterations` reports. Fewer reports
/// than requested means nothing has persisted yet.
pub fn persistent_conflicts(reports: &[ConflictReport], iterations: usize) -> Vec<Metric> {
    if iterations == 0 || reports.len() < iterations {
        return Vec::new();
    }
    let window = &reports[reports.len() - iterations..];
    Metric::ALL
        .into_iter()
        .filter(|m| window.iter().all(|r| r.is_flagged(*m)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDelta {
    pub safety: f64,
    pub comfort: f64,
    pub total: f64,
}

impl ScoreDelta {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Safety => self.safety,
            Metric::Comfort => self.comfort,
            Metric::Total => self.total,
        }
    }
}

/// Signed score change per persona between two evaluation sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IterationDelta {
    pub per_persona: BTreeMap<PersonaId, ScoreDelta>,
}

impl IterationDelta {
    pub fn get(&self, persona: PersonaId, metric: Metric) -> Option<f64> {
        self.per_persona.get(&persona).map(|d| d.get(metric))
    }

    pub fn negated(&self) -> IterationDelta {
        IterationDelta {
            per_persona: self
                .per_persona
                .iter()
                .map(|(p, d)| {
                    (
                        *p,
                        ScoreDelta {
                            safety: -d.safety,
                            comfort: -d.comfort,
                            total: -d.total,
                        },
                    )
                })
                .collect(),
        }
    }
}

pub fn iteration_delta(prev: &[PersonaEvaluation], next: &[PersonaEvaluation]) -> Result<IterationDelta, AnalyticsError> {
    check_distinct(prev)?;
    check_distinct(next)?;
    let before: BTreeMap<_, _> = prev.iter().map(|e| (e.persona(), e)).collect();
    let after: BTreeMap<_, _> = next.iter().map(|e| (e.persona(), e)).collect();
    if before.keys().ne(after.keys()) {
        let fmt = |m: &BTreeMap<PersonaId, &PersonaEvaluation>| {
            m.keys().map(|p| p.token()).collect::<Vec<_>>().join(",")
        };
        return Err(AnalyticsError::PersonaMismatch(format!(
            "[{}] vs [{}]",
            fmt(&before),
            fmt(&after)
        )));
    }
    let per_persona = after
        .iter()
        .map(|(p, new)| {
            let old = before[p];
            (
                *p,
                ScoreDelta {
                    safety: new.safety() - old.safety(),
                    comfort: new.comfort() - old.comfort(),
                    total: new.total() - old.total(),
                },
            )
        })
        .collect();
    Ok(IterationDelta { per_persona })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePartition {
    /// design id → personas preferring it, in canonical persona order.
    pub cells: BTreeMap<String, Vec<PersonaId>>,
    pub disagreement: bool,
}

pub fn preference_disagreement(verdicts: &[ComparisonVerdict]) -> Result<PreferencePartition, AnalyticsError> {
    let first = verdicts
        .first()
        .ok_or_else(|| AnalyticsError::Precondition("no verdicts".into()))?;
    let design_set: BTreeSet<&str> = first.design_ids().into_iter().collect();
    let mut personas = BTreeSet::new();
    let mut cells: BTreeMap<String, Vec<PersonaId>> = BTreeMap::new();
    for v in verdicts {
        if !personas.insert(v.persona()) {
            return Err(AnalyticsError::Precondition(format!(
                "persona {} gave more than one verdict",
                v.persona()
            )));
        }
        let ids: BTreeSet<&str> = v.design_ids().into_iter().collect();
        if ids != design_set {
            return Err(AnalyticsError::InconsistentDesigns);
        }
        cells
            .entry(v.preferred_design().to_string())
            .or_default()
            .push(v.persona());
    }
    for members in cells.values_mut() {
        members.sort();
    }
    let disagreement = cells.len() > 1;
    Ok(PreferencePartition {
        cells,
        disagreement,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationScope {
    All,
    Baseline,
    Design,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCell {
    pub value: String,
    pub count: usize,
    /// count / n_designs, unrounded.
    pub fraction: f64,
    /// Percentage rounded half-up to one decimal.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFrequency {
    pub dimension: String,
    pub cells: Vec<FrequencyCell>,
}

impl DimensionFrequency {
    pub fn cell(&self, value: &str) -> Option<&FrequencyCell> {
        self.cells.iter().find(|c| c.value == value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (divisor n-1); absent below two values.
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaDistribution {
    pub persona: PersonaId,
    pub scope: EvaluationScope,
    pub n: usize,
    pub metrics: BTreeMap<Metric, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_designs: usize,
    pub n_evaluations: usize,
    pub parameter_frequencies: Vec<DimensionFrequency>,
    pub persona_distributions: Vec<PersonaDistribution>,
}

/// One design choice as selected on the parameter panel. `location` keeps a
/// location the designer picked even when the spec dropped it.
#[derive(Debug, Clone, Copy)]
pub struct DesignChoice<'a> {
    pub spec: &'a DesignSpec,
    pub location: Option<BufferLocation>,
}

/// Percentage of `count` out of `n`, rounded half-up to one decimal using
/// integer arithmetic.
pub fn percent_one_decimal(count: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let tenths = (count as u128 * 2000 + n as u128) / (2 * n as u128);
    tenths as f64 / 10.0
}

pub fn mean_and_sd(values: &[f64]) -> Option<MetricSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    Some(MetricSummary { mean, sd })
}

fn frequency(dimension: &str, values: &[&str], n: usize, counts: &BTreeMap<String, usize>) -> DimensionFrequency {
    let mut cells: Vec<FrequencyCell> = values
        .iter()
        .map(|v| {
            let count = counts.get(*v).copied().unwrap_or(0);
            FrequencyCell {
                value: v.to_string(),
                count,
                fraction: if n == 0 { 0.0 } else { count as f64 / n as f64 },
                percent: percent_one_decimal(count, n),
            }
        })
        .collect();
    for (v, &count) in counts {
        if !values.contains(&v.as_str()) {
            cells.push(FrequencyCell {
                value: v.clone(),
                count,
                fraction: count as f64 / n as f64,
                percent: percent_one_decimal(count, n),
            });
        }
    }
    DimensionFrequency {
        dimension: dimension.to_string(),
        cells,
    }
}

fn tokens<T: Copy>(all: &[T], f: fn(T) -> &'static str) -> Vec<&'static str> {
    all.iter().map(|v| f(*v)).collect()
}

/// Frequencies and score distributions over explicit designs and
/// evaluations. Dimensions come out in the order width, color, buffer type,
/// buffer location.
pub fn aggregate_parts<'a>(
    designs: &[DesignChoice<'a>],
    evaluations: &[(&'a PersonaEvaluation, EvaluationScope)],
) -> CorpusStats {
    let n = designs.len();
    let mut parameter_frequencies = Vec::new();
    if n > 0 {
        let mut width = BTreeMap::new();
        let mut color = BTreeMap::new();
        let mut buffer = BTreeMap::new();
        let mut location = BTreeMap::new();
        for d in designs {
            *width.entry(d.spec.lane_width().token().to_string()).or_insert(0) += 1;
            *color.entry(d.spec.lane_color().token().to_string()).or_insert(0) += 1;
            *buffer.entry(d.spec.buffer_type().token().to_string()).or_insert(0) += 1;
            let loc = d
                .spec
                .buffer_location()
                .or(d.location)
                .map(|l| l.token())
                .unwrap_or("unspecified");
            *location.entry(loc.to_string()).or_insert(0) += 1;
        }
        parameter_frequencies = vec![
            frequency("lane_width", &tokens(LaneWidth::ALL, LaneWidth::token), n, &width),
            frequency("lane_color", &tokens(LaneColor::ALL, LaneColor::token), n, &color),
            frequency("buffer_type", &tokens(BufferType::ALL, BufferType::token), n, &buffer),
            frequency(
                "buffer_location",
                &tokens(BufferLocation::ALL, BufferLocation::token),
                n,
                &location,
            ),
        ];
    }

    let mut persona_distributions = Vec::new();
    for persona in PersonaId::CYCLISTS {
        for scope in [EvaluationScope::All, EvaluationScope::Baseline, EvaluationScope::Design] {
            let selected: Vec<&PersonaEvaluation> = evaluations
                .iter()
                .filter(|(e, s)| e.persona() == persona && (scope == EvaluationScope::All || *s == scope))
                .map(|(e, _)| *e)
                .collect();
            if selected.is_empty() {
                continue;
            }
            let metrics = Metric::ALL
                .into_iter()
                .filter_map(|m| {
                    let values: Vec<f64> = selected.iter().map(|e| e.score(m)).collect();
                    mean_and_sd(&values).map(|s| (m, s))
                })
                .collect();
            persona_distributions.push(PersonaDistribution {
                persona,
                scope,
                n: selected.len(),
                metrics,
            });
        }
    }
    CorpusStats {
        n_designs: n,
        n_evaluations: evaluations.len(),
        parameter_frequencies,
        persona_distributions,
    }
}

pub fn aggregate_corpus(sessions: &[DesignSession]) -> CorpusStats {
    let mut designs = Vec::new();
    let mut evaluations = Vec::new();
    for s in sessions {
        for e in &s.baseline.evaluations {
            evaluations.push((e, EvaluationScope::Baseline));
        }
        for it in &s.iterations {
            designs.push(DesignChoice {
                spec: &it.spec,
                location: it.requested_location,
            });
            for e in &it.evaluations {
                evaluations.push((e, EvaluationScope::Design));
            }
        }
    }
    aggregate_parts(&designs, &evaluations)
}

impl CorpusStats {
    pub fn dimension(&self, name: &str) -> Option<&DimensionFrequency> {
        self.parameter_frequencies.iter().find(|d| d.dimension == name)
    }

    pub fn distribution(&self, persona: PersonaId, scope: EvaluationScope) -> Option<&PersonaDistribution> {
        self.persona_distributions
            .iter()
            .find(|d| d.persona == persona && d.scope == scope)
    }

    /// Plain-text report: parameter frequencies then score distributions.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Design parameter frequencies (n_designs = {})", self.n_designs);
        for dim in &self.parameter_frequencies {
            let _ = writeln!(out, "{}", dim.dimension);
            for c in &dim.cells {
                let _ = writeln!(
                    out,
                    "  {:<18} {:>4}/{:<4} {:>5.1}%",
                    c.value, c.count, self.n_designs, c.percent
                );
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Persona score distributions (n_evaluations = {})",
            self.n_evaluations
        );
        let _ = writeln!(
            out,
            "  {:<26} {:<9} {:>4}  {:>13}  {:>13}  {:>13}",
            "persona", "scope", "n", "safety M(SD)", "comfort M(SD)", "total M(SD)"
        );
        for d in &self.persona_distributions {
            let cell = |m: Metric| match d.metrics.get(&m) {
                Some(s) => match s.sd {
                    Some(sd) => format!("{:.2} ({:.2})", s.mean, sd),
                    None => format!("{:.2} (-)", s.mean),
                },
                None => "-".into(),
            };
            let scope = match d.scope {
                EvaluationScope::All => "all",
                EvaluationScope::Baseline => "baseline",
                EvaluationScope::Design => "design",
            };
            let _ = writeln!(
                out,
                "  {:<26} {:<9} {:>4}  {:>13}  {:>13}  {:>13}",
                d.persona.display_name(),
                scope,
                d.n,
                cell(Metric::Safety),
                cell(Metric::Comfort),
                cell(Metric::Total)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::DesignScore;

    fn ev(p: PersonaId, s: f64, c: f64, t: f64) -> PersonaEvaluation {
        PersonaEvaluation::new(
            p,
            s,
            c,
            t,
            vec!["one two three".into(); 4],
        )
        .unwrap()
    }

    #[test]
    fn six_point_safety_gap() {
        let evals = [
            ev(PersonaId::StrongFearless, 9.0, 5.0, 5.0),
            ev(PersonaId::NoWayNoHow, 3.0, 5.0, 5.0),
        ];
        let r = detect_conflicts(&evals, 3.0).unwrap();
        assert_eq!(r.gap(Metric::Safety), 6.0);
        assert_eq!(r.flagged, vec![Metric::Safety]);
        assert_eq!(r.per_metric[&Metric::Safety].max_persona, PersonaId::StrongFearless);
        assert_eq!(r.per_metric[&Metric::Safety].min_persona, PersonaId::NoWayNoHow);
    }

    #[test]
    fn equal_scores_no_conflict_and_canonical_ties() {
        let evals = [
            ev(PersonaId::NoWayNoHow, 5.0, 5.0, 5.0),
            ev(PersonaId::EnthusedConfident, 5.0, 5.0, 5.0),
            ev(PersonaId::StrongFearless, 5.0, 5.0, 5.0),
        ];
        let r = detect_conflicts(&evals, 3.0).unwrap();
        assert!(r.flagged.is_empty());
        for m in Metric::ALL {
            assert_eq!(r.gap(m), 0.0);
            assert_eq!(r.per_metric[&m].max_persona, PersonaId::StrongFearless);
            assert_eq!(r.per_metric[&m].min_persona, PersonaId::StrongFearless);
        }
    }

    #[test]
    fn conflict_preconditions() {
        assert!(detect_conflicts(&[ev(PersonaId::StrongFearless, 5.0, 5.0, 5.0)], 3.0).is_err());
        let dup = [
            ev(PersonaId::StrongFearless, 5.0, 5.0, 5.0),
            ev(PersonaId::StrongFearless, 6.0, 5.0, 5.0),
        ];
        assert!(detect_conflicts(&dup, 3.0).is_err());
        let ok = [
            ev(PersonaId::StrongFearless, 5.0, 5.0, 5.0),
            ev(PersonaId::NoWayNoHow, 6.0, 5.0, 5.0),
        ];
        assert!(detect_conflicts(&ok, 0.0).is_err());
    }

    #[test]
    fn persistent_window() {
        let hi = [
            ev(PersonaId::StrongFearless, 9.0, 9.0, 9.0),
            ev(PersonaId::NoWayNoHow, 3.0, 7.0, 3.0),
        ];
        let lo = [
            ev(PersonaId::StrongFearless, 5.0, 5.0, 5.0),
            ev(PersonaId::NoWayNoHow, 4.0, 5.0, 3.0),
        ];
        let a = detect_conflicts(&hi, 3.0).unwrap();
        let b = detect_conflicts(&lo, 3.0).unwrap();
        assert_eq!(persistent_conflicts(&[a.clone(), a.clone()], 2), vec![Metric::Safety, Metric::Total]);
        assert!(persistent_conflicts(&[a.clone(), b.clone()], 2).is_empty());
        assert_eq!(persistent_conflicts(&[b, a.clone()], 1), vec![Metric::Safety, Metric::Total]);
        assert!(persistent_conflicts(&[a], 2).is_empty());
    }

    #[test]
    fn delta_rules() {
        let before = [ev(PersonaId::InterestedConcerned, 3.0, 4.0, 3.0)];
        let after = [ev(PersonaId::InterestedConcerned, 5.0, 4.0, 4.0)];
        let d = iteration_delta(&before, &after).unwrap();
        assert_eq!(d.get(PersonaId::InterestedConcerned, Metric::Safety), Some(2.0));
        assert_eq!(iteration_delta(&after, &before).unwrap(), d.negated());
        let zero = iteration_delta(&after, &after).unwrap();
        assert!(zero.per_persona.values().all(|s| s.safety == 0.0 && s.comfort == 0.0 && s.total == 0.0));
        let other = [ev(PersonaId::NoWayNoHow, 3.0, 4.0, 3.0)];
        assert!(matches!(iteration_delta(&before, &other), Err(AnalyticsError::PersonaMismatch(_))));
    }

    fn verdict(p: PersonaId, ids: &[&str], preferred: &str) -> ComparisonVerdict {
        let presented: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
        let scores = ids
            .iter()
            .map(|id| DesignScore {
                design_id: id.to_string(),
                score: 0.5,
                rationale: "fine".into(),
            })
            .collect();
        ComparisonVerdict::new(p, scores, preferred.into(), vec![], &presented).unwrap()
    }

    #[test]
    fn preference_partitions() {
        let all_b = [
            verdict(PersonaId::StrongFearless, &["A", "B"], "B"),
            verdict(PersonaId::InterestedConcerned, &["A", "B"], "B"),
        ];
        let p = preference_disagreement(&all_b).unwrap();
        assert_eq!(p.cells.len(), 1);
        assert!(!p.disagreement);

        let split = [
            verdict(PersonaId::InterestedConcerned, &["A", "B"], "B"),
            verdict(PersonaId::StrongFearless, &["A", "B"], "A"),
        ];
        let p = preference_disagreement(&split).unwrap();
        assert!(p.disagreement);
        assert_eq!(p.cells["A"], vec![PersonaId::StrongFearless]);

        assert!(preference_disagreement(&[]).is_err());
        let mixed = [
            verdict(PersonaId::StrongFearless, &["A", "B"], "A"),
            verdict(PersonaId::Driver, &["A", "C"], "A"),
        ];
        assert_eq!(preference_disagreement(&mixed), Err(AnalyticsError::InconsistentDesigns));
    }

    #[test]
    fn mean_sd_constant_series() {
        let s = mean_and_sd(&[7.0, 7.0, 7.0]).unwrap();
        assert_eq!(s.mean, 7.0);
        assert_eq!(s.sd, Some(0.0));
        assert_eq!(mean_and_sd(&[4.0]).unwrap().sd, None);
        assert!(mean_and_sd(&[]).is_none());
        // 2, 4, 4, 4, 5, 5, 7, 9: sample variance 32/7
        let s = mean_and_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(s.mean, 5.0);
        assert!((s.sd.unwrap() - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn percent_rounding_half_up() {
        assert_eq!(percent_one_decimal(41, 48), 85.4);
        assert_eq!(percent_one_decimal(7, 48), 14.6);
        assert_eq!(percent_one_decimal(18, 48), 37.5);
        assert_eq!(percent_one_decimal(1, 8), 12.5);
        // 1/16 = 6.25% rounds half-up to 6.3
        assert_eq!(percent_one_decimal(1, 16), 6.3);
        assert_eq!(percent_one_decimal(0, 0), 0.0);
    }

    #[test]
    fn empty_corpus() {
        let stats = aggregate_corpus(&[]);
        assert_eq!(stats.n_designs, 0);
        assert!(stats.parameter_frequencies.is_empty());
        assert!(stats.persona_distributions.is_empty());
    }
}
