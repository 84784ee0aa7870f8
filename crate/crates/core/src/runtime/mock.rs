//! Deterministic offline backend.
//!
//! Scores follow a fixed rule table so tests and demos can check exact
//! numbers. Text replies are canned per persona.

use async_trait::async_trait;
use serde_json::json;

use super::backend::{
    AgentBackend, BackendError, BackendMetadata, BackendOutput, BackendRequest, RequestKind,
};
use crate::design::{BufferLocation, BufferType, DesignSpec, LaneColor, LaneWidth};
use crate::geo::StreetContext;
use crate::images::synthetic_png;
use crate::persona::PersonaId;

pub const MOCK_IMAGE_SIZE: u32 = 64;

/// Rule-table scores for a cyclist persona: `(safety, comfort, total)`.
/// Returns `None` for the driver, who does not score.
pub fn mock_scores(
    persona: PersonaId,
    context: &StreetContext,
    spec: Option<&DesignSpec>,
) -> Option<(f64, f64, f64)> {
    use PersonaId::*;
    let (mut safety, mut comfort): (i32, i32) = match persona {
        StrongFearless => (7, 7),
        EnthusedConfident => (6, 6),
        InterestedConcerned => (4, 4),
        NoWayNoHow => (3, 2),
        Driver => return None,
    };
    if persona != NoWayNoHow {
        if context.has_bike_infrastructure {
            safety += 1;
        }
        if let Some(spec) = spec {
            let (ds, dc) = design_adjustment(persona, spec);
            safety += ds;
            comfort += dc;
        }
    }
    let safety = safety.clamp(1, 10);
    let comfort = comfort.clamp(1, 10);
    // half-up rounding of the mean of two integers
    let total = (safety + comfort + 1) / 2;
    Some((safety as f64, comfort as f64, total as f64))
}

fn design_adjustment(persona: PersonaId, spec: &DesignSpec) -> (i32, i32) {
    use PersonaId::*;
    let (mut ds, mut dc) = match spec.lane_width() {
        LaneWidth::Widen => (1, 1),
        LaneWidth::Narrow => (-1, -1),
        LaneWidth::StaySame => (0, 0),
    };
    let cautious = matches!(persona, EnthusedConfident | InterestedConcerned);
    if cautious && spec.lane_color() == LaneColor::Green {
        ds += 1;
    }
    match (persona, spec.buffer_type()) {
        (InterestedConcerned, BufferType::Standard) => {
            ds += 1;
            dc += 1;
        }
        (InterestedConcerned, BufferType::NarrowBollards | BufferType::NarrowArmadillo) => {
            ds += 2;
            dc += 1;
        }
        (EnthusedConfident, BufferType::NarrowBollards | BufferType::NarrowArmadillo) => ds += 1,
        _ => {}
    }
    if cautious && spec.buffer_location() == Some(BufferLocation::ParkedCars) {
        dc += 1;
    }
    (ds, dc)
}

/// Driver preference for a design on the 1–10 scale used by mock comparisons.
pub fn mock_driver_total(spec: &DesignSpec) -> f64 {
    let mut total: i32 = 7;
    total += match spec.lane_width() {
        LaneWidth::Widen => -1,
        LaneWidth::Narrow => 1,
        LaneWidth::StaySame => 0,
    };
    total -= match spec.buffer_type() {
        BufferType::NarrowBollards => 2,
        BufferType::NarrowArmadillo => 1,
        _ => 0,
    };
    if spec.buffer_location() == Some(BufferLocation::MovingCars) {
        total -= 1;
    }
    total.clamp(1, 10) as f64
}

fn baseline_points(persona: PersonaId) -> [&'static str; 4] {
    use PersonaId::*;
    match persona {
        StrongFearless => [
            "Shared lane keeps my speed up",
            "Parked cars force occasional swerving",
            "Enough room to overtake slower riders",
            "Signals interrupt an otherwise fast route",
        ],
        EnthusedConfident => [
            "No marked space for cycling here",
            "Door zone risk along parked cars",
            "I ride predictably but feel squeezed",
            "Drivers may not see me as legitimate",
        ],
        InterestedConcerned => [
            "No physical protection from passing cars",
            "Traffic feels too close and fast",
            "I would avoid riding here alone",
            "Need clear separation before I ride",
        ],
        NoWayNoHow => [
            "Cars are far too close to me",
            "Nothing here compares to sidewalk safety",
            "I would never cycle on this street",
            "Complete separation from vehicles is missing",
        ],
        Driver => DRIVER_POINTS,
    }
}

const DRIVER_POINTS: [&str; 4] = [
    "Parked cars limit sight lines at driveways",
    "Turning right across cyclists needs care",
    "Travel lane width feels adequate today",
    "Signals keep traffic flow fairly steady",
];

fn design_points(persona: PersonaId, spec: &DesignSpec) -> [&'static str; 4] {
    use PersonaId::*;
    let width = match spec.lane_width() {
        LaneWidth::Narrow => "Narrower lane leaves little room",
        LaneWidth::StaySame => "Lane width feels about the same",
        LaneWidth::Widen => "Wider lane gives more breathing room",
    };
    let color = match spec.lane_color() {
        LaneColor::Green => "Green paint makes the lane obvious",
        LaneColor::NoPaint => "Unpainted lane is easy to miss",
    };
    let buffer = match spec.buffer_type() {
        BufferType::NoBuffer => "No buffer between me and cars",
        BufferType::Standard => "Striped buffer adds some distance",
        BufferType::NarrowBollards => "Bollards physically keep cars out",
        BufferType::NarrowArmadillo => "Armadillos discourage cars drifting in",
    };
    let closing = match persona {
        StrongFearless => "I can keep my usual pace",
        EnthusedConfident => "I can ride predictably here now",
        InterestedConcerned => "Protection level decides whether I ride",
        NoWayNoHow => "Still not as safe as sidewalk",
        Driver => "Watch for cyclists when turning",
    };
    [width, color, buffer, closing]
}

fn chat_reply(persona: PersonaId) -> &'static str {
    use PersonaId::*;
    match persona {
        StrongFearless => "Honestly, I'm fine riding here as long as I can hold my speed. What slows me down is stop-and-go traffic and cars pulling out, not the lack of paint.",
        EnthusedConfident => "I ride this kind of street regularly, but I want a clear, predictable space of my own and room to stay out of the door zone.",
        InterestedConcerned => "I'd love to bike here, but without something physical between me and the traffic I just don't feel safe enough to try.",
        NoWayNoHow => "I wouldn't ride here. Unless I'm completely separated from cars, like on a sidewalk-level path, it's simply too dangerous for me.",
        Driver => "From behind the wheel, I mostly care about seeing cyclists early, predictable turns across the bike lane, and keeping traffic moving.",
    }
}

fn stance(persona: PersonaId) -> &'static str {
    use PersonaId::*;
    match persona {
        StrongFearless => "I care most about keeping my speed and not getting boxed in.",
        EnthusedConfident => "I want a predictable, clearly marked space away from opening doors.",
        InterestedConcerned => "Physical separation from traffic is what gets me on a bike here.",
        NoWayNoHow => "Only full separation from cars would make me consider riding.",
        Driver => "I need good visibility at turns and steady traffic flow.",
    }
}

struct Analysis {
    concerns: [&'static str; 3],
    recommendations: [&'static str; 3],
    non_negotiable: &'static str,
}

fn analysis(persona: PersonaId) -> Analysis {
    use PersonaId::*;
    match persona {
        StrongFearless => Analysis {
            concerns: ["debris in narrow lanes", "slow riders blocking passing", "frequent signal stops"],
            recommendations: [
                "Keep the lane wide enough to pass",
                "Avoid vertical elements that trap riders",
                "Time signals for steady cycling speed",
            ],
            non_negotiable: "Room to overtake within the lane",
        },
        EnthusedConfident => Analysis {
            concerns: ["door zone next to parking", "unclear lane markings", "merging at intersections"],
            recommendations: [
                "Add a striped buffer on the parking side",
                "Paint the lane green through conflict zones",
                "Mark bike boxes at signalized intersections",
            ],
            non_negotiable: "A buffer outside the door zone",
        },
        InterestedConcerned => Analysis {
            concerns: ["close passing traffic", "no physical barrier", "door zone exposure"],
            recommendations: [
                "Add vertical bollards along the traffic side",
                "Widen the buffer between lane and cars",
                "Paint the lane green for visibility",
            ],
            non_negotiable: "Physical separation from moving cars",
        },
        NoWayNoHow => Analysis {
            concerns: ["any exposure to moving cars", "crossing busy driveways", "high traffic speed"],
            recommendations: [
                "Raise the lane to sidewalk level",
                "Use a continuous curb as separation",
                "Reduce vehicle speeds on the corridor",
            ],
            non_negotiable: "Complete separation from vehicle traffic",
        },
        Driver => Analysis {
            concerns: ["sight lines at turns", "narrowed travel lanes", "loading and parking access"],
            recommendations: [
                "Keep vertical elements back from driveways",
                "Mark conflict zones where cars cross",
                "Preserve a full-width travel lane",
            ],
            non_negotiable: "Clear visibility of cyclists at turns",
        },
    }
}

fn deal_breakers(persona: PersonaId) -> &'static [&'static str] {
    use PersonaId::*;
    match persona {
        StrongFearless => &["Lanes too narrow to pass"],
        EnthusedConfident => &["Lane placed inside the door zone"],
        InterestedConcerned => &["No physical separation from traffic"],
        NoWayNoHow => &["Any shared space with moving cars"],
        Driver => &["Blocked sight lines at turns"],
    }
}

/// Offline backend answering from the rule table and canned text.
#[derive(Debug, Clone, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        Self
    }

    fn persona(request: &BackendRequest) -> Result<PersonaId, BackendError> {
        request
            .persona
            .ok_or_else(|| BackendError::Unsupported(format!("{:?} request without persona", request.kind)))
    }

    fn context(request: &BackendRequest) -> Result<&StreetContext, BackendError> {
        request
            .hints
            .context
            .as_ref()
            .ok_or_else(|| BackendError::Unsupported(format!("{:?} request without street context", request.kind)))
    }

    fn design_score(persona: PersonaId, context: &StreetContext, spec: &DesignSpec) -> f64 {
        let total = match mock_scores(persona, context, Some(spec)) {
            Some((_, _, total)) => total,
            None => mock_driver_total(spec),
        };
        total / 10.0
    }

    fn evaluate(request: &BackendRequest) -> Result<String, BackendError> {
        let persona = Self::persona(request)?;
        let context = Self::context(request)?;
        let spec = request.hints.spec.as_ref();
        let points = match spec {
            Some(spec) => design_points(persona, spec),
            None => baseline_points(persona),
        };
        let value = match mock_scores(persona, context, spec) {
            Some((safety, comfort, total)) => json!({
                "persona": persona.display_name(),
                "safety": safety,
                "comfort": comfort,
                "total": total,
                "points": points,
            }),
            None => json!({ "persona": persona.display_name(), "points": points }),
        };
        Ok(value.to_string())
    }

    fn compare(request: &BackendRequest) -> Result<String, BackendError> {
        let persona = Self::persona(request)?;
        let context = Self::context(request)?;
        let designs = &request.hints.designs;
        if designs.is_empty() {
            return Err(BackendError::Unsupported("compare request without designs".into()));
        }
        let scored: Vec<(&str, f64)> = designs
            .iter()
            .map(|(id, spec)| (id.as_str(), Self::design_score(persona, context, spec)))
            .collect();
        let mut preferred = scored[0];
        for candidate in &scored[1..] {
            if candidate.1 > preferred.1 {
                preferred = *candidate;
            }
        }
        let scores: Vec<_> = scored
            .iter()
            .map(|(id, score)| {
                json!({
                    "design_id": id,
                    "score": score,
                    "rationale": format!("Design {id} rates {:.0}/10 for me overall.", score * 10.0),
                })
            })
            .collect();
        Ok(json!({
            "persona": persona.display_name(),
            "scores": scores,
            "preferred_design": preferred.0,
            "deal_breakers": deal_breakers(persona),
        })
        .to_string())
    }

    fn discuss(request: &BackendRequest) -> Result<String, BackendError> {
        let persona = Self::persona(request)?;
        let mut reply = stance(persona).to_string();
        if !request.hints.designs.is_empty() {
            let context = Self::context(request)?;
            let mut best: Option<(&str, f64)> = None;
            for (id, spec) in &request.hints.designs {
                let score = Self::design_score(persona, context, spec);
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((id.as_str(), score));
                }
            }
            if let Some((id, score)) = best {
                reply.push_str(&format!(" I prefer design {id}, which I rate {:.0}/10.", score * 10.0));
            }
        }
        Ok(json!({ "persona": persona.display_name(), "reply": reply }).to_string())
    }

    fn summarize(request: &BackendRequest) -> Result<String, BackendError> {
        let hints = &request.hints;
        if hints.driver_points.len() < 4 || hints.evaluations.is_empty() {
            return Err(BackendError::Unsupported("summary request without agent outputs".into()));
        }
        let first: Vec<&str> = hints.evaluations.iter().filter_map(|e| e.points().first().map(String::as_str)).collect();
        let last: Vec<&str> = hints.evaluations.iter().filter_map(|e| e.points().last().map(String::as_str)).collect();
        Ok(json!({
            "driver": {
                "pros": format!("{}.", hints.driver_points[..2].join("; ")),
                "cons": format!("{}.", hints.driver_points[2..4].join("; ")),
            },
            "cyclist": {
                "pros": format!("{}.", first.join("; ")),
                "cons": format!("{}.", last.join("; ")),
            },
        })
        .to_string())
    }
}

#[async_trait]
impl AgentBackend for MockBackend {
    fn metadata(&self) -> BackendMetadata {
        BackendMetadata {
            name: "mock".into(),
            deterministic: true,
        }
    }

    async fn complete(&self, request: &BackendRequest) -> Result<BackendOutput, BackendError> {
        let text = match request.kind {
            RequestKind::Evaluate => Self::evaluate(request)?,
            RequestKind::Compare => Self::compare(request)?,
            RequestKind::Discuss => Self::discuss(request)?,
            RequestKind::Summarize => Self::summarize(request)?,
            RequestKind::Chat => chat_reply(Self::persona(request)?).to_string(),
            RequestKind::DeepAnalysis => {
                let persona = Self::persona(request)?;
                let a = analysis(persona);
                json!({
                    "persona": persona.display_name(),
                    "key_concerns": a.concerns,
                    "recommendations": a.recommendations,
                    "non_negotiables": [a.non_negotiable],
                })
                .to_string()
            }
            RequestKind::RenderImage => {
                let base = &request.images[0];
                let seed = format!("{}\n{}", base.id, request.prompt);
                return Ok(BackendOutput::Image(synthetic_png(
                    seed.as_bytes(),
                    MOCK_IMAGE_SIZE,
                    MOCK_IMAGE_SIZE,
                )));
            }
        };
        Ok(BackendOutput::Text(text))
    }
}
