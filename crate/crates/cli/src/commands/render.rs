//! `forge render`: rasterize the cached OSM data for a tile into the
//! general and specific class masks (indexed PNG + raw bytes +
//! sidecars).

use anyhow::{Context, Result};
use forge_core::geo::TileRef;
use forge_core::raster::{
    encode_indexed_png, general_palette, render_masks, specific_palette, MaskPair, MaskSidecar,
};
use forge_core::taxonomy::ClassificationRules;
use std::path::{Path, PathBuf};

use crate::config::PipelineConfig;
use crate::manifest::{hash_file, FileHash, ManifestBuilder};
use crate::util::load_cached_doc;

/// Write the six mask artifacts for one pair into `dir`; returns the
/// written paths.
pub fn write_mask_files(
    dir: &Path,
    masks: &MaskPair,
    rules: &ClassificationRules,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (kind, grid, palette) in [
        ("general", &masks.general, general_palette(rules)),
        ("specific", &masks.specific, specific_palette(rules)),
    ] {
        let png = encode_indexed_png(grid, &palette).context("encoding mask PNG")?;
        let png_path = dir.join(format!("{kind}.png"));
        std::fs::write(&png_path, png)?;
        let raw_path = dir.join(format!("{kind}.raw"));
        std::fs::write(&raw_path, grid.data())?;
        let sidecar = MaskSidecar {
            width: grid.width(),
            height: grid.height(),
            palette_version: rules.version.clone(),
            tile: masks.tile.to_string(),
            kind: kind.to_string(),
        };
        let sidecar_path = dir.join(format!("{kind}.json"));
        std::fs::write(&sidecar_path, serde_json::to_vec_pretty(&sidecar)?)?;
        written.extend([png_path, raw_path, sidecar_path]);
    }
    Ok(written)
}

pub fn run(
    tile: TileRef,
    config: &PipelineConfig,
    config_path: &Path,
    out: &Path,
) -> Result<i32> {
    let (doc, raw) = load_cached_doc(config, tile)?;
    let rules = ClassificationRules::default_rules();
    let masks = render_masks(&doc, &tile, &rules);

    let mut mb = ManifestBuilder::new("render", config.to_value());
    mb.add_input(hash_file(Path::new("."), config_path)?);
    mb.add_input(FileHash {
        path: format!("osm:{tile}"),
        sha256: crate::manifest::sha256_hex(&raw),
    });
    for path in write_mask_files(out, &masks, &rules)? {
        mb.add_output_file(out, &path)?;
    }
    let manifest = mb.write(out)?;
    println!(
        "rendered tile {tile}: {} outputs in {}",
        manifest.outputs.len(),
        out.display()
    );
    Ok(0)
}
