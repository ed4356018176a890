//! Immutable OpenStreetMap document model: parsing raw Overpass-style
//! JSON, assembling element geometries, and applying structured edits.

mod edit;
mod geometry;
mod model;
mod parse;

pub use edit::{apply_edit, diff_documents, ChangeSet, EditOp, EditScript};
pub use geometry::{resolve_geometry, ring_area, Geometry, Ring};
pub use model::{ElementData, ElementKind, Member, OsmDocument, OsmElement, TagMap};
pub use parse::{document_to_json, parse_osm_json};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OsmError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("element {index}: {message}")]
    Schema { index: usize, message: String },
    #[error("element {index}: coordinate out of range ({message})")]
    Range { index: usize, message: String },
    #[error("way references missing node {0}")]
    MissingNode(i64),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("edit op {op_index}: {message}")]
    Edit { op_index: usize, message: String },
    #[error("element {id} ({kind:?}) not found")]
    NotFound { id: i64, kind: ElementKind },
    #[error("invalid tag map: {0}")]
    Tags(String),
}
