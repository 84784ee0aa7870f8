//! Prompt text for every persona interaction. All functions are pure.

use std::fmt::Write;

use serde_json::json;

use super::{ChatMessage, ChatRole, DriverCyclistSummary, PersonaEvaluation, PersonaId, PersonaProfile};
use crate::design::DesignSpec;
use crate::geo::{Coordinates, StreetContext};

const NONE: &str = "(none)";

fn yes_no(flag: bool) -> &'static str {
    if flag {
        "Yes"
    } else {
        "No"
    }
}

/// Road list and counts as they appear in every persona prompt.
pub fn road_information(ctx: &StreetContext) -> String {
    let mut out = String::from("Road Information:\n");
    if ctx.roads.is_empty() {
        out.push_str("- No named roads found\n");
    }
    for road in &ctx.roads {
        let _ = writeln!(out, "- {} ({})", road.name, road.road_type);
    }
    let _ = writeln!(out, "- Buildings nearby: {}", ctx.buildings);
    let _ = writeln!(out, "- Traffic signals: {}", ctx.traffic_signals);
    let _ = write!(
        out,
        "- Has bike infrastructure: {}",
        yes_no(ctx.has_bike_infrastructure)
    );
    out
}

pub fn context_summary(ctx: &StreetContext) -> String {
    format!(
        "Location Context:\n- Coordinates: {}, {}\n- Search radius: {} m\n\n{}",
        ctx.coords.lat,
        ctx.coords.lon,
        ctx.radius_m,
        road_information(ctx)
    )
}

fn focus_block(profile: &PersonaProfile) -> String {
    let mut out = String::from("Focus on:\n");
    for q in &profile.focus_questions {
        let _ = writeln!(out, "- {q}");
    }
    out.trim_end().to_string()
}

fn conversation(history: &[ChatMessage]) -> String {
    if history.is_empty() {
        return NONE.to_string();
    }
    history
        .iter()
        .map(|m| match m.role {
            ChatRole::User => format!("Designer: {}", m.text),
            ChatRole::Persona => format!("{}: {}", m.persona.display_name(), m.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn evaluation_schema(name: &str) -> String {
    format!(
        "Respond with ONLY valid JSON:\n{{\n  \"persona\": \"{name}\",\n  \"safety\": <number 1-10>,\n  \"comfort\": <number 1-10>,\n  \"total\": <number 1-10>,\n  \"points\": [\"<exactly 4 points, each 3-10 words>\"]\n}}"
    )
}

fn generic_evaluation_schema(name: &str) -> String {
    format!(
        "You must respond ONLY with valid JSON in this exact format:\n{{\n  \"persona\": \"{name}\",\n  \"safety\": <number between 1 and 10>,\n  \"comfort\": <number between 1 and 10>,\n  \"total\": <number between 1 and 10 - overall assessment, NOT just average>,\n  \"points\": [\"<3-10 word point>\", \"<3-10 word point>\", \"<3-10 word point>\", \"<3-10 word point>\"]\n}}"
    )
}

const GENERIC_CHECKLIST: &str = "\
Make sure to:
- Give realistic scores based on the actual design visible in the image
- Consider the design specifications provided
- Write from the first-person perspective of the cyclist type
- Provide exactly 4 key points
- Each point must be 3-10 words
- Focus on the specific concerns mentioned in the persona description
- The total score should be your overall assessment, not just the average of safety and comfort";

/// Evaluation prompt for one persona. Without a design spec this is the
/// persona's baseline prompt; with one it is the generic design template.
/// The Driver profile gets an observations-only schema.
pub fn render_evaluation_prompt(
    profile: &PersonaProfile,
    context: &StreetContext,
    spec: Option<&DesignSpec>,
) -> String {
    let name = profile.id.display_name();
    let street = context_summary(context);
    let focus = focus_block(profile);
    if profile.id == PersonaId::Driver {
        let specs = spec.map(DesignSpec::describe).unwrap_or_else(|| NONE.into());
        return format!(
            "{desc}\nYou do NOT know other personas' evaluations.\n\n\
             INPUT:\n- Street view image: the attached image\n- Design specifications (optional): {specs}\n- Private context (optional): {NONE}\n\n\
             {street}\n\n{focus}\n\n\
             Respond with ONLY valid JSON:\n{{\n  \"persona\": \"{name}\",\n  \"points\": [\"<exactly 4 points, each 3-10 words>\"]\n}}\n",
            desc = profile.description,
        );
    }
    match spec {
        None => format!(
            "{desc}\nYou do NOT know other personas' evaluations.\n\n\
             INPUT:\n- Street view image: the attached image\n- Design specifications (optional): {NONE}\n- Private context (optional): {NONE}\n\n\
             {street}\n\n{focus}\n\n{schema}\n",
            desc = profile.description,
            schema = evaluation_schema(name),
        ),
        Some(spec) => format!(
            "You are evaluating a generated bike lane design from the perspective of a specific type of cyclist.\n\
             Persona description and criteria:\n{desc}\n{focus}\n\n\
             INPUT:\n- Design image: the attached image\n- Design specifications: {specs}\n- Private context (optional): {NONE}\n\n\
             {street}\n\n{schema}\n\n{GENERIC_CHECKLIST}\n",
            desc = profile.description,
            specs = spec.describe(),
            schema = generic_evaluation_schema(name),
        ),
    }
}

pub fn render_deep_analysis_prompt(
    profile: &PersonaProfile,
    design_description: &str,
    history: &[ChatMessage],
    user_message: &str,
) -> String {
    format!(
        "You are an independent evaluation agent representing the following persona:\n{desc}\n\n\
         You are analyzing ONE bike lane design.\n\
         You do NOT know other personas' opinions or internal reasoning.\n\
         Do NOT attempt to balance or compromise with other personas.\n\
         If private context is provided, treat it as reliable and persona-specific.\n\n\
         CURRENT DESIGN BEING ANALYZED: {design_description}\n\
         PROVIDED IMAGE: the attached image (street view of the current location)\n\
         RECENT CONVERSATION (for continuity only): {conv}\n\
         USER MESSAGE: \"{user_message}\"\n\
         PRIVATE CONTEXT (optional): {NONE}\n\n\
         TASK:\n\
         Provide specific, actionable recommendations for improving THIS design,\n\
         strictly from your persona's priorities. Be specific about infrastructure\n\
         elements (bollards, paint, buffers, signals, curb separation, lane width, etc.).\n\n\
         Respond with ONLY valid JSON:\n{{\n  \"persona\": \"{name}\",\n  \"key_concerns\": [\"<3-5 short phrases>\"],\n  \"recommendations\": [\"<3-5 actionable suggestions>\"],\n  \"non_negotiables\": [\"<1-2 required elements>\"]\n}}\n",
        desc = profile.description,
        conv = conversation(history),
        name = profile.id.display_name(),
    )
}

/// One design option shown to a persona for comparison or discussion.
#[derive(Debug, Clone, Copy)]
pub struct DesignOption<'a> {
    pub id: &'a str,
    pub spec: &'a DesignSpec,
}

fn design_list(designs: &[DesignOption<'_>]) -> String {
    designs
        .iter()
        .map(|d| format!("\n- Design {}: {}", d.id, d.spec.describe()))
        .collect()
}

pub fn render_comparison_prompt(
    profile: &PersonaProfile,
    designs: &[DesignOption<'_>],
    history: &[ChatMessage],
    user_message: &str,
) -> String {
    let images = designs
        .iter()
        .enumerate()
        .map(|(i, d)| format!("attached image {} shows design {}", i + 1, d.id))
        .collect::<Vec<_>>()
        .join("; ");
    format!(
        "You represent the following persona:\n{desc}\n\n\
         You are comparing MULTIPLE bike lane design alternatives.\n\
         You do NOT know how other personas will evaluate them.\n\
         Do NOT attempt to average across perspectives.\n\n\
         AVAILABLE DESIGNS: {list}\n\
         PROVIDED IMAGES: {images}\n\
         RECENT CONVERSATION (for continuity only): {conv}\n\
         USER MESSAGE: \"{user_message}\"\n\
         PRIVATE CONTEXT (optional): {NONE}\n\n\
         TASK:\n\
         1) Analyze visual differences in the images relevant to your persona's priorities.\n\
         2) Score each design option from 0.0 to 1.0.\n\
         3) Select a preferred design and explain trade-offs from your persona's perspective.\n\
         4) List persona-specific deal-breakers.\n\n\
         Respond with ONLY valid JSON:\n{{\n  \"persona\": \"{name}\",\n  \"scores\": [\n    {{ \"design_id\": \"<id>\", \"score\": <0.0-1.0>, \"rationale\": \"<1-2 sentences>\" }}\n  ],\n  \"preferred_design\": \"<id>\",\n  \"deal_breakers\": [\"<list>\"]\n}}\n",
        desc = profile.description,
        list = design_list(designs),
        conv = conversation(history),
        name = profile.id.display_name(),
    )
}

fn evaluation_json(e: &PersonaEvaluation) -> serde_json::Value {
    json!({
        "persona": e.persona().display_name(),
        "safety": e.safety(),
        "comfort": e.comfort(),
        "total": e.total(),
        "points": e.points(),
    })
}

pub fn render_summary_prompt(
    context: &StreetContext,
    driver_points: &[String],
    cyclists: &[PersonaEvaluation],
) -> String {
    let driver = json!({ "persona": "Driver", "points": driver_points });
    let cyclist: Vec<_> = cyclists.iter().map(evaluation_json).collect();
    format!(
        "You are summarizing outputs from independent agents.\n\
         Do NOT add new observations not supported by agent outputs.\n\n\
         INPUT:\n- Context summary: {ctx}\n- Driver agent output: {driver}\n- Cyclist agent outputs (one or more): {cyclist}\n\n\
         TASK:\n\
         Provide pros and cons for each user type based on the agent outputs.\n\
         Keep observations practical and specific.\n\n\
         Respond with ONLY valid JSON:\n{{\n  \"driver\": {{\n    \"pros\": \"<1-2 sentences about driving advantages>\",\n    \"cons\": \"<1-2 sentences about driving challenges>\"\n  }},\n  \"cyclist\": {{\n    \"pros\": \"<1-2 sentences about cycling advantages>\",\n    \"cons\": \"<1-2 sentences about cycling challenges>\"\n  }}\n}}\n",
        ctx = context_summary(context).replace('\n', " "),
        cyclist = serde_json::Value::Array(cyclist),
    )
}

/// Session facts a persona sees when chatting.
#[derive(Debug, Clone)]
pub struct ChatGrounding<'a> {
    pub coords: Coordinates,
    pub context: &'a StreetContext,
    /// The persona's own baseline evaluation; absent for the driver.
    pub evaluation: Option<&'a PersonaEvaluation>,
    pub driver_points: &'a [String],
    pub summary: &'a DriverCyclistSummary,
}

pub fn render_chat_prompt(
    profile: &PersonaProfile,
    grounding: &ChatGrounding<'_>,
    history: &[ChatMessage],
    user_message: &str,
) -> String {
    let opening = if profile.id.is_cyclist() {
        format!("You are roleplaying as a {} cyclist.", profile.display_name)
    } else {
        format!("You are roleplaying as a {}.", profile.display_name)
    };
    let score = |f: fn(&PersonaEvaluation) -> f64| {
        grounding
            .evaluation
            .map(|e| format!("{}/10", f(e)))
            .unwrap_or_else(|| "not rated".into())
    };
    let points = match grounding.evaluation {
        Some(e) => e.points().join("; "),
        None if profile.id == PersonaId::Driver => grounding.driver_points.join("; "),
        None => NONE.into(),
    };
    format!(
        "{opening}\n{desc}\nYou do NOT have access to other personas' private memories or internal reasoning.\n\n\
         Location Context:\n- Coordinates: {lat}, {lon}\n- Your safety score for this location: {safety}\n- Your comfort score for this location: {comfort}\n- Your evaluation points: {points}\n\n\
         {roads}\n\n\
         Driver perspective summary (from Driver agent):\n{dp}\n{dc}\n\n\
         Cyclist perspective summary (from cyclist agents):\n{cp}\n{cc}\n\n\
         Stay in character and respond from this persona's perspective.\n\
         Be specific about this location and refer to the actual conditions visible in the street view.\n\
         Keep responses conversational and under 150 words.\n\n\
         RECENT CONVERSATION: {conv}\n\
         USER MESSAGE: \"{user_message}\"\n",
        desc = profile.description,
        lat = grounding.coords.lat,
        lon = grounding.coords.lon,
        safety = score(PersonaEvaluation::safety),
        comfort = score(PersonaEvaluation::comfort),
        roads = road_information(grounding.context),
        dp = grounding.summary.driver.pros,
        dc = grounding.summary.driver.cons,
        cp = grounding.summary.cyclist.pros,
        cc = grounding.summary.cyclist.cons,
        conv = conversation(history),
    )
}

pub fn render_discussion_prompt(
    profile: &PersonaProfile,
    context: &StreetContext,
    designs: &[DesignOption<'_>],
    question: &str,
) -> String {
    let list = if designs.is_empty() {
        NONE.to_string()
    } else {
        design_list(designs)
    };
    format!(
        "You represent the following persona:\n{desc}\n\n\
         You are one voice in a moderated discussion about bike lane designs for this street.\n\
         Answer the designer's question strictly from your persona's priorities, state which design you prefer and why,\n\
         and reference specific elements (buffer zones, lane visibility, physical protection).\n\
         Keep your reply under 150 words.\n\n\
         {street}\n\n\
         DESIGNS UNDER DISCUSSION: {list}\n\
         QUESTION: \"{question}\"\n\n\
         Respond with ONLY valid JSON:\n{{\n  \"persona\": \"{name}\",\n  \"relevance\": <0.0-1.0, how relevant the question is to your priorities>,\n  \"reply\": \"<your answer>\"\n}}\n",
        desc = profile.description,
        street = context_summary(context),
        name = profile.id.display_name(),
    )
}
