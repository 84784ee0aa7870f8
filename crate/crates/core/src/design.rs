//! Bike-lane design parameters and the conditional image-editing prompt.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DesignError {
    #[error("unknown {field} token {token:?}; expected one of {expected}")]
    UnknownToken {
        field: &'static str,
        token: String,
        expected: String,
    },
    #[error("buffer_location required when buffer_type is {0}")]
    MissingLocation(BufferType),
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident, $field:literal, { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $token)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }
        }

        impl FromStr for $name {
            type Err = DesignError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($token => Ok($name::$variant),)+
                    other => Err(DesignError::UnknownToken {
                        field: $field,
                        token: other.to_string(),
                        expected: [$($token),+].join(", "),
                    }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }
    };
}

token_enum!(LaneWidth, "lane_width", {
    Narrow => "narrow",
    StaySame => "stay-same",
    Widen => "widen",
});

token_enum!(LaneColor, "lane_color", {
    Green => "green",
    NoPaint => "no-paint",
});

token_enum!(BufferType, "buffer_type", {
    NoBuffer => "no-buffer",
    Standard => "standard",
    NarrowBollards => "narrow-bollards",
    NarrowArmadillo => "narrow-armadillo",
});

token_enum!(
    /// Which side of the lane the buffer sits on: moving traffic (left) or
    /// parked cars (right).
    BufferLocation, "buffer_location", {
    MovingCars => "moving-cars",
    ParkedCars => "parked-cars",
});

impl LaneWidth {
    pub fn feet(self) -> u32 {
        lane_width_feet(self)
    }
}

pub fn lane_width_feet(width: LaneWidth) -> u32 {
    match width {
        LaneWidth::Narrow => 4,
        LaneWidth::StaySame => 5,
        LaneWidth::Widen => 6,
    }
}

/// A validated design. `buffer_location` is present iff the buffer type is
/// not `no-buffer`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDesignSpec", into = "RawDesignSpec")]
pub struct DesignSpec {
    lane_width: LaneWidth,
    lane_color: LaneColor,
    buffer_type: BufferType,
    buffer_location: Option<BufferLocation>,
    free_text: Option<String>,
}

/// Unvalidated wire form of a design spec.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDesignSpec {
    pub lane_width: String,
    pub lane_color: String,
    pub buffer_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedSpec {
    pub spec: DesignSpec,
    pub warnings: Vec<String>,
    /// Location supplied with `no-buffer` and dropped during normalization.
    pub dropped_location: Option<BufferLocation>,
}

pub fn validate_design_spec(raw: &RawDesignSpec) -> Result<ValidatedSpec, DesignError> {
    let lane_width: LaneWidth = raw.lane_width.trim().parse()?;
    let lane_color: LaneColor = raw.lane_color.trim().parse()?;
    let buffer_type: BufferType = raw.buffer_type.trim().parse()?;
    let location = raw
        .buffer_location
        .as_deref()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse::<BufferLocation>)
        .transpose()?;
    let free_text = raw
        .free_text
        .as_deref()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string);

    let mut warnings = Vec::new();
    let mut dropped_location = None;
    let buffer_location = match (buffer_type, location) {
        (BufferType::NoBuffer, Some(loc)) => {
            warnings.push(format!(
                "buffer_location {loc} ignored because buffer_type is no-buffer"
            ));
            dropped_location = Some(loc);
            None
        }
        (BufferType::NoBuffer, None) => None,
        (_, Some(loc)) => Some(loc),
        (bt, None) => return Err(DesignError::MissingLocation(bt)),
    };
    Ok(ValidatedSpec {
        spec: DesignSpec {
            lane_width,
            lane_color,
            buffer_type,
            buffer_location,
            free_text,
        },
        warnings,
        dropped_location,
    })
}

impl TryFrom<RawDesignSpec> for DesignSpec {
    type Error = DesignError;
    fn try_from(raw: RawDesignSpec) -> Result<Self, Self::Error> {
        validate_design_spec(&raw).map(|v| v.spec)
    }
}

impl From<DesignSpec> for RawDesignSpec {
    fn from(spec: DesignSpec) -> Self {
        RawDesignSpec {
            lane_width: spec.lane_width.token().into(),
            lane_color: spec.lane_color.token().into(),
            buffer_type: spec.buffer_type.token().into(),
            buffer_location: spec.buffer_location.map(|l| l.token().into()),
            free_text: spec.free_text,
        }
    }
}

impl DesignSpec {
    pub fn new(
        lane_width: LaneWidth,
        lane_color: LaneColor,
        buffer_type: BufferType,
        buffer_location: Option<BufferLocation>,
    ) -> Result<Self, DesignError> {
        match (buffer_type, buffer_location) {
            (BufferType::NoBuffer, _) => Ok(Self {
                lane_width,
                lane_color,
                buffer_type,
                buffer_location: None,
                free_text: None,
            }),
            (bt, None) => Err(DesignError::MissingLocation(bt)),
            (_, loc) => Ok(Self {
                lane_width,
                lane_color,
                buffer_type,
                buffer_location: loc,
                free_text: None,
            }),
        }
    }

    pub fn with_free_text(mut self, text: impl Into<String>) -> Self {
        let text = text.into();
        let trimmed = text.trim();
        self.free_text = (!trimmed.is_empty()).then(|| trimmed.to_string());
        self
    }

    pub fn lane_width(&self) -> LaneWidth {
        self.lane_width
    }

    pub fn lane_color(&self) -> LaneColor {
        self.lane_color
    }

    pub fn buffer_type(&self) -> BufferType {
        self.buffer_type
    }

    pub fn buffer_location(&self) -> Option<BufferLocation> {
        self.buffer_location
    }

    pub fn free_text(&self) -> Option<&str> {
        self.free_text.as_deref()
    }

    /// File-name-safe identifier, e.g. `widen-green-narrow-bollards-parked-cars`.
    pub fn slug(&self) -> String {
        let mut parts = vec![
            self.lane_width.token(),
            self.lane_color.token(),
            self.buffer_type.token(),
        ];
        if let Some(loc) = self.buffer_location {
            parts.push(loc.token());
        }
        parts.join("-")
    }

    /// Plain-language description used inside persona prompts.
    pub fn describe(&self) -> String {
        let width = format!(
            "Bike lane width: {} (approximately {} feet wide)",
            self.lane_width.token(),
            self.lane_width.feet()
        );
        let color = match self.lane_color {
            LaneColor::Green => "Lane color: green painted bike lane",
            LaneColor::NoPaint => "Lane color: no paint (standard road surface)",
        };
        let buffer = match self.buffer_type {
            BufferType::NoBuffer => "Buffer type: no buffer",
            BufferType::Standard => "Buffer type: standard striped buffer",
            BufferType::NarrowBollards => "Buffer type: narrow buffer with bollards",
            BufferType::NarrowArmadillo => "Buffer type: narrow buffer with armadillo dividers",
        };
        let mut lines = vec![width, color.to_string(), buffer.to_string()];
        if let Some(loc) = self.buffer_location {
            lines.push(match loc {
                BufferLocation::MovingCars => "Buffer location: next to moving cars".to_string(),
                BufferLocation::ParkedCars => "Buffer location: next to parked cars".to_string(),
            });
        }
        if let Some(text) = &self.free_text {
            lines.push(format!("Additional requirements: {text}"));
        }
        lines.join("; ")
    }
}

/// Prompt text compiled from a [`DesignSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledPrompt {
    pub text: String,
    pub spec: DesignSpec,
}

impl CompiledPrompt {
    pub fn sha256(&self) -> String {
        crate::sha256_hex(&self.text)
    }
}

const PREAMBLE: &str = "\
You are a helpful vision assistant specialized in urban road infrastructure analysis and modification.

First, carefully observe the provided street view image and identify the right-hand side of the roadway. Look for any existing cycling infrastructure such as: bike lanes (marked by white lines, possibly painted green), buffer zones (painted areas with diagonal stripes), curbs, sidewalk edges, or physical separators like bollards or raised barriers. If no dedicated bike lane exists, identify the rightmost portion of the roadway where a bike lane could be placed.

Based on your observation, your task is to modify the image to clearly depict a bike lane located along the right-hand side of the road.";

const GREEN_CLAUSE: &str = "Fully paint only the updated bike lane area green.";
const NO_PAINT_CLAUSE: &str =
    "Do not paint the updated bike lane green; use only the standard road surface color.";

const BOUNDARY_INTRO: &str = "Clearly mark both boundaries of the updated bike lane as follows:";

const NO_BUFFER_BLOCK: &str = "\
1. Left boundary: a prominent, continuous solid white line.
2. Right boundary: a prominent, continuous solid white line.
Ensure these white boundary lines strictly contain and distinctly outline the bike lane area.";

const STANDARD_MOVING_BLOCK: &str = "\
1. Left Boundary: A buffer zone adjacent to the bike lane on its left side, clearly marked with prominent diagonal white stripes, bounded on both sides by solid white lines. Do not apply any green paint within this buffer zone.
2. Right Boundary: A prominent, continuous solid white line marking the right-hand edge of the bike lane.";

const BOLLARDS_MOVING_BLOCK: &str = "\
1. Left Boundary: A narrow buffer zone adjacent to the bike lane on its left side. This buffer zone should:
  - Be bounded on both sides by solid white lines.
  - Be filled with prominent diagonal white stripes.
  - Include vertical red-and-white striped bollards placed at regular intervals, explicitly positioned in the center of the buffer zone.
  - Do not apply any green paint within this buffer zone.
2. Right Boundary: A prominent, continuous solid white line.";

const ARMADILLO_MOVING_BLOCK: &str = "\
1. Left Boundary: A narrow buffer zone adjacent to the bike lane on its left side. This buffer zone should:
  - Be bounded on both sides by solid white lines.
  - Be filled with prominent diagonal white stripes.
  - Include rounded, semi-flexible rubber lane dividers (often called 'armadillos'), evenly spaced along the center of the buffer zone. The dividers should be dome-shaped, black with white reflective stripes, placed centrally along the buffer zone.
  - Do not apply any green paint within this buffer zone.
2. Right Boundary: A prominent, continuous solid white line.";

const STANDARD_PARKED_BLOCK: &str = "\
1. Left boundary: a prominent, continuous solid white line.
2. Right boundary: A clearly marked buffer zone adjacent to the bike lane, filled with prominent diagonal white stripes, and bounded on both sides by solid white lines.";

const BOLLARDS_PARKED_BLOCK: &str = "\
1. Left boundary: a prominent, continuous solid white line.
2. Right boundary: A clearly marked narrow buffer zone immediately adjacent to the bike lane. This buffer zone should:
  - Be bounded on both sides by solid white lines.
  - Be filled with prominent diagonal white stripes.
  - Distinctly feature vertical red-and-white striped bollards placed at regular intervals.";

const ARMADILLO_PARKED_BLOCK: &str = "\
1. Left boundary: a prominent, continuous solid white line.
2. Right boundary: narrow buffer zone adjacent to the bike lane. This buffer zone should:
  - Be bounded on both sides by solid white lines.
  - Be filled with prominent diagonal white stripes.
  - Within this buffer zone, clearly place individual black-and-white striped armadillo lane dividers, positioned as separate, regularly spaced units.";

const CLOSING: &str = "\
Ensure the updated bike lane is clearly defined by solid white lines, distinctly separated from the striped buffer zone.

Do not allow any green paint to extend beyond the white boundary lines.
Strictly contain the green paint between the two prominent, continuous, solid white boundary lines.
Exclude any painted street names on the roadway.";

fn boundary_block(buffer: BufferType, location: Option<BufferLocation>) -> &'static str {
    use BufferLocation::*;
    use BufferType::*;
    match (buffer, location.unwrap_or(ParkedCars)) {
        (NoBuffer, _) => NO_BUFFER_BLOCK,
        (Standard, MovingCars) => STANDARD_MOVING_BLOCK,
        (NarrowBollards, MovingCars) => BOLLARDS_MOVING_BLOCK,
        (NarrowArmadillo, MovingCars) => ARMADILLO_MOVING_BLOCK,
        (Standard, ParkedCars) => STANDARD_PARKED_BLOCK,
        (NarrowBollards, ParkedCars) => BOLLARDS_PARKED_BLOCK,
        (NarrowArmadillo, ParkedCars) => ARMADILLO_PARKED_BLOCK,
    }
}

pub fn compile_image_prompt(spec: &DesignSpec) -> CompiledPrompt {
    let width = format!(
        "The updated bike lane should be approximately {} feet wide.",
        spec.lane_width.feet()
    );
    let color = match spec.lane_color {
        LaneColor::Green => GREEN_CLAUSE,
        LaneColor::NoPaint => NO_PAINT_CLAUSE,
    };
    let mut sections = vec![
        PREAMBLE.to_string(),
        width,
        color.to_string(),
        BOUNDARY_INTRO.to_string(),
        boundary_block(spec.buffer_type, spec.buffer_location).to_string(),
        CLOSING.to_string(),
    ];
    if let Some(text) = &spec.free_text {
        sections.push(format!("Additional requirements from the designer:\n{text}"));
    }
    let mut text = sections.join("\n\n");
    text.push('\n');
    CompiledPrompt {
        text,
        spec: spec.clone(),
    }
}

/// Every valid spec without free text, in declaration order of the enums.
pub fn enumerate_distinct_specs() -> Vec<DesignSpec> {
    let mut out = Vec::with_capacity(42);
    for &width in LaneWidth::ALL {
        for &color in LaneColor::ALL {
            for &buffer in BufferType::ALL {
                let locations: Vec<Option<BufferLocation>> = if buffer == BufferType::NoBuffer {
                    vec![None]
                } else {
                    BufferLocation::ALL.iter().copied().map(Some).collect()
                };
                for loc in locations {
                    out.push(DesignSpec::new(width, color, buffer, loc).expect("constructed valid"));
                }
            }
        }
    }
    out
}
