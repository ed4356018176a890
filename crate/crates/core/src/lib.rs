//! Compiles raw OpenStreetMap JSON into multimodal conditioning bundles
//! (class-index masks, location/time embeddings, text prompts), applies
//! structured map edits to produce co-registered before/after pairs, and
//! implements DDPM/DDIM schedule math with DDIM inversion against
//! pluggable denoisers.

pub mod diffusion;
pub mod encoders;
pub mod geo;
pub mod ingest;
pub mod osm;
pub mod raster;
pub mod taxonomy;
