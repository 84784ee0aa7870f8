//! Street context: map queries, attribute parsing, and street-level imagery.

mod client;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{
    FixtureGeo, GeoProvider, LiveGeo, OverpassClient, ResponseCache, SharedGeo, StreetViewClient,
    ViewParams,
    DEFAULT_OVERPASS_URL, DEFAULT_STREET_VIEW_URL,
};

/// Query radius used when the caller does not pick one.
pub const DEFAULT_RADIUS_M: f64 = 100.0;
pub const MIN_RADIUS_M: f64 = 10.0;
pub const MAX_RADIUS_M: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("transport error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("no imagery available: {0}")]
    NotFound(String),
    #[error("cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] crate::images::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoordinates")]
pub struct Coordinates {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Deserialize)]
struct RawCoordinates {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawCoordinates> for Coordinates {
    type Error = GeoError;
    fn try_from(raw: RawCoordinates) -> Result<Self, Self::Error> {
        Coordinates::new(raw.lat, raw.lon)
    }
}

impl Coordinates {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Validation(format!(
                "lat {lat} out of range [-90, 90]"
            )));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Validation(format!(
                "lon {lon} out of range [-180, 180]"
            )));
        }
        // fold -0.0 so the query text never shows "-0"
        Ok(Self {
            lat: lat + 0.0,
            lon: lon + 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Road {
    pub name: String,
    #[serde(rename = "type")]
    pub road_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetContext {
    pub coords: Coordinates,
    pub roads: Vec<Road>,
    pub buildings: u32,
    pub traffic_signals: u32,
    pub has_bike_infrastructure: bool,
    pub radius_m: f64,
}

/// One element of an Overpass JSON response. Only the fields the parser
/// needs are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapElement {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub id: i64,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl MapElement {
    fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }
}

fn check_radius(radius_m: f64) -> Result<(), GeoError> {
    if !radius_m.is_finite() || !(MIN_RADIUS_M..=MAX_RADIUS_M).contains(&radius_m) {
        return Err(GeoError::Validation(format!(
            "radius {radius_m} m out of range [{MIN_RADIUS_M}, {MAX_RADIUS_M}]"
        )));
    }
    Ok(())
}

/// Overpass QL selecting highway ways, signal nodes and building ways around
/// a point, with JSON output.
pub fn build_overpass_query(coords: Coordinates, radius_m: f64) -> Result<String, GeoError> {
    let coords = Coordinates::new(coords.lat, coords.lon)?;
    check_radius(radius_m)?;
    let around = format!("around:{},{},{}", radius_m, coords.lat, coords.lon);
    Ok(format!(
        "[out:json][timeout:25];\n\
         (\n  way[\"highway\"]({around});\n  node[\"highway\"=\"traffic_signals\"]({around});\n  way[\"building\"]({around});\n);\n\
         out tags;\n"
    ))
}

/// Per-element bike infrastructure predicate.
pub fn element_has_bike_infrastructure(element: &MapElement) -> bool {
    if element.tag("highway") == Some("cycleway") {
        return true;
    }
    if element.tag("bicycle") == Some("designated") {
        return true;
    }
    element
        .tags
        .iter()
        .any(|(k, v)| (k == "cycleway" || k.starts_with("cycleway:")) && v != "no")
}

pub fn detect_bike_infrastructure(elements: &[MapElement]) -> bool {
    elements.iter().any(element_has_bike_infrastructure)
}

#[derive(Deserialize)]
struct OverpassDocument {
    elements: Vec<MapElement>,
}

/// Parse the raw element list of an Overpass JSON document.
pub fn parse_elements(document: &str) -> Result<Vec<MapElement>, GeoError> {
    serde_json::from_str::<OverpassDocument>(document)
        .map(|d| d.elements)
        .map_err(|e| GeoError::Parse {
            offset: byte_offset(document, e.line(), e.column()),
            message: e.to_string(),
        })
}

pub fn parse_street_context(
    document: &str,
    coords: Coordinates,
    radius_m: f64,
) -> Result<StreetContext, GeoError> {
    check_radius(radius_m)?;
    let elements = parse_elements(document)?;
    Ok(summarize_elements(&elements, coords, radius_m))
}

pub fn summarize_elements(elements: &[MapElement], coords: Coordinates, radius_m: f64) -> StreetContext {
    let mut seen = HashSet::new();
    let mut roads = Vec::new();
    let mut buildings = 0u32;
    let mut traffic_signals = 0u32;
    for el in elements {
        match el.kind.as_str() {
            "way" => {
                if let (Some(highway), Some(name)) = (el.tag("highway"), el.tag("name")) {
                    let road = Road {
                        name: name.to_string(),
                        road_type: highway.to_string(),
                    };
                    if seen.insert(road.clone()) {
                        roads.push(road);
                    }
                }
                if el.tags.contains_key("building") {
                    buildings += 1;
                }
            }
            "node" if el.tag("highway") == Some("traffic_signals") => traffic_signals += 1,
            _ => {}
        }
    }
    StreetContext {
        coords,
        roads,
        buildings,
        traffic_signals,
        has_bike_infrastructure: detect_bike_infrastructure(elements),
        radius_m,
    }
}

/// Convert serde_json's 1-based line/column into a byte offset.
pub(crate) fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
