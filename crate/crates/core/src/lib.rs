//! Street design evaluation engine.
//!
//! Grounds a location in map and imagery context, asks five simulated road-user
//! personas for structured evaluations, compiles bike-lane redesign prompts for
//! an image-editing backend, and reports where the personas disagree.

pub mod analytics;
pub mod design;
pub mod fsutil;
pub mod geo;
pub mod images;
pub mod persona;
pub mod runtime;
pub mod store;

pub use analytics::{ConflictReport, CorpusStats, IterationDelta, Metric};
pub use design::{BufferLocation, BufferType, CompiledPrompt, DesignSpec, LaneColor, LaneWidth};
pub use geo::{Coordinates, StreetContext};
pub use images::{ImageRef, ImageSource, ImageStore};
pub use persona::{PersonaCatalog, PersonaId, PersonaProfile};
pub use runtime::{AgentBackend, AgentRuntime, MockBackend, RetryPolicy};
pub use store::{DesignSession, SessionStore};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes.as_ref()))
}
