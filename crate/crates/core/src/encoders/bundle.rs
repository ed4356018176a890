//! The assembled condition set for one tile and its on-disk manifest
//! format: one JSON file referencing mask PNG/raw files and embedding
//! files by relative path.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::{
    build_prompt, encode_location, encode_time, Embedding, EmbeddingKind, EncoderError,
    EncoderWeights, TimeStamp6D,
};
use crate::geo::{tile_bounds, TileRef};
use crate::osm::OsmDocument;
use crate::raster::{
    encode_indexed_png, general_palette, specific_histogram, specific_palette, MaskGrid, MaskPair,
    MaskSidecar,
};
use crate::taxonomy::ClassificationRules;

/// The full condition set for one tile: mask pair, location and time
/// embeddings, prompt text, and an optional externally computed text
/// embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    pub masks: MaskPair,
    pub e_loc: Embedding,
    pub e_time: Embedding,
    pub prompt: String,
    pub e_text: Option<Embedding>,
    pub tile: TileRef,
    pub timestamp: TimeStamp6D,
    pub country: String,
}

/// Render masks, compute embeddings, and build the prompt for one tile.
pub fn assemble_bundle(
    doc: &OsmDocument,
    tile: &TileRef,
    ts: &TimeStamp6D,
    country: &str,
    rules: &ClassificationRules,
    weights: &EncoderWeights,
) -> ConditioningBundle {
    let masks = crate::raster::render_masks(doc, tile, rules);
    let summary = summary_from_masks(&masks, rules);
    let prompt = build_prompt(&summary, country);
    let center = tile_bounds(tile).center();
    ConditioningBundle {
        e_loc: encode_location(&center, weights),
        e_time: encode_time(ts, weights),
        prompt,
        e_text: None,
        tile: *tile,
        timestamp: *ts,
        country: country.to_string(),
        masks,
    }
}

/// Salient-category summary from an already-rendered mask pair, ordered
/// by descending pixel area with alphabetical tie-break, top-k.
pub fn summary_from_masks(masks: &MaskPair, rules: &ClassificationRules) -> Vec<String> {
    let counts = specific_histogram(&masks.specific);
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter_map(|(idx, n)| rules.specific_by_index(idx).map(|s| (s.name.clone(), n)))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(rules.summary_top_k);
    entries.into_iter().map(|(name, _)| name).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRef {
    pub path: String,
    pub dim: usize,
    pub kind: EmbeddingKind,
}

/// On-disk manifest referencing the bundle's component files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub tile: TileRef,
    pub timestamp: TimeStamp6D,
    pub country: String,
    pub prompt: String,
    pub palette_version: String,
    pub general_png: String,
    pub specific_png: String,
    pub general_raw: String,
    pub specific_raw: String,
    pub general_sidecar: String,
    pub specific_sidecar: String,
    pub e_loc: EmbeddingRef,
    pub e_time: EmbeddingRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_text: Option<EmbeddingRef>,
}

fn write_embedding(dir: &Path, name: &str, e: &Embedding) -> Result<EmbeddingRef, EncoderError> {
    let path = format!("{name}.f64");
    let mut bytes = Vec::with_capacity(8 * e.values.len());
    for v in &e.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(&path), bytes)?;
    Ok(EmbeddingRef {
        path,
        dim: e.dim(),
        kind: e.kind,
    })
}

fn read_embedding(dir: &Path, r: &EmbeddingRef) -> Result<Embedding, EncoderError> {
    let bytes = fs::read(dir.join(&r.path))?;
    if bytes.len() != 8 * r.dim {
        return Err(EncoderError::Bundle(format!(
            "embedding {} has {} bytes, expected {}",
            r.path,
            bytes.len(),
            8 * r.dim
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Embedding {
        kind: r.kind,
        values,
    })
}

impl ConditioningBundle {
    /// Write the bundle into `dir` (created if missing): mask PNGs and
    /// raw bytes with sidecars, embedding files, and `bundle.json`.
    pub fn save_to_dir(&self, dir: &Path, rules: &ClassificationRules) -> Result<(), EncoderError> {
        fs::create_dir_all(dir)?;
        let enc = |grid: &MaskGrid, pal: &[[u8; 3]]| {
            encode_indexed_png(grid, pal).map_err(|e| EncoderError::Bundle(e.to_string()))
        };
        fs::write(
            dir.join("general.png"),
            enc(&self.masks.general, &general_palette(rules))?,
        )?;
        fs::write(
            dir.join("specific.png"),
            enc(&self.masks.specific, &specific_palette(rules))?,
        )?;
        fs::write(dir.join("general.raw"), self.masks.general.data())?;
        fs::write(dir.join("specific.raw"), self.masks.specific.data())?;
        for (kind, grid, name) in [
            ("general", &self.masks.general, "general.json"),
            ("specific", &self.masks.specific, "specific.json"),
        ] {
            let sidecar = MaskSidecar {
                width: grid.width(),
                height: grid.height(),
                palette_version: rules.version.clone(),
                tile: self.tile.to_string(),
                kind: kind.to_string(),
            };
            fs::write(dir.join(name), serde_json::to_vec_pretty(&sidecar).unwrap())?;
        }

        let manifest = BundleManifest {
            tile: self.tile,
            timestamp: self.timestamp,
            country: self.country.clone(),
            prompt: self.prompt.clone(),
            palette_version: rules.version.clone(),
            general_png: "general.png".into(),
            specific_png: "specific.png".into(),
            general_raw: "general.raw".into(),
            specific_raw: "specific.raw".into(),
            general_sidecar: "general.json".into(),
            specific_sidecar: "specific.json".into(),
            e_loc: write_embedding(dir, "e_loc", &self.e_loc)?,
            e_time: write_embedding(dir, "e_time", &self.e_time)?,
            e_text: match &self.e_text {
                Some(e) => Some(write_embedding(dir, "e_text", e)?),
                None => None,
            },
        };
        fs::write(
            dir.join("bundle.json"),
            serde_json::to_vec_pretty(&manifest).map_err(|e| EncoderError::Bundle(e.to_string()))?,
        )?;
        Ok(())
    }

    /// Load a bundle previously written by [`ConditioningBundle::save_to_dir`].
    pub fn load_from_dir(dir: &Path) -> Result<Self, EncoderError> {
        let manifest: BundleManifest =
            serde_json::from_slice(&fs::read(dir.join("bundle.json"))?)
                .map_err(|e| EncoderError::Bundle(e.to_string()))?;
        let read_grid = |raw: &str, sidecar: &str| -> Result<MaskGrid, EncoderError> {
            let sc: MaskSidecar = serde_json::from_slice(&fs::read(dir.join(sidecar))?)
                .map_err(|e| EncoderError::Bundle(e.to_string()))?;
            let data = fs::read(dir.join(raw))?;
            MaskGrid::from_raw(sc.width, sc.height, data)
                .map_err(|e| EncoderError::Bundle(e.to_string()))
        };
        Ok(ConditioningBundle {
            masks: MaskPair {
                general: read_grid(&manifest.general_raw, &manifest.general_sidecar)?,
                specific: read_grid(&manifest.specific_raw, &manifest.specific_sidecar)?,
                tile: manifest.tile,
            },
            e_loc: read_embedding(dir, &manifest.e_loc)?,
            e_time: read_embedding(dir, &manifest.e_time)?,
            e_text: match &manifest.e_text {
                Some(r) => Some(read_embedding(dir, r)?),
                None => None,
            },
            prompt: manifest.prompt,
            tile: manifest.tile,
            timestamp: manifest.timestamp,
            country: manifest.country,
        })
    }
}
