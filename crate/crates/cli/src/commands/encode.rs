//! `forge encode`: assemble the full conditioning bundle (masks,
//! location/time embeddings, prompt) for one tile and write it with
//! its manifest.

use anyhow::Result;
use forge_core::encoders::{assemble_bundle, TimeStamp6D};
use forge_core::geo::TileRef;
use forge_core::taxonomy::ClassificationRules;
use std::path::Path;

use crate::config::PipelineConfig;
use crate::manifest::{hash_file, FileHash, ManifestBuilder};
use crate::util::{load_cached_doc, load_weights};

#[allow(clippy::too_many_arguments)]
pub fn run(
    tile: TileRef,
    ts: &TimeStamp6D,
    country: &str,
    config: &PipelineConfig,
    config_path: &Path,
    out: &Path,
) -> Result<i32> {
    let (doc, raw) = load_cached_doc(config, tile)?;
    let rules = ClassificationRules::default_rules();
    let weights = load_weights(config)?;
    let bundle = assemble_bundle(&doc, &tile, ts, country, &rules, &weights);
    bundle.save_to_dir(out, &rules)?;

    let mut mb = ManifestBuilder::new("encode", config.to_value());
    mb.add_input(hash_file(Path::new("."), config_path)?);
    mb.add_input(FileHash {
        path: format!("osm:{tile}"),
        sha256: crate::manifest::sha256_hex(&raw),
    });
    for name in [
        "bundle.json",
        "general.png",
        "general.raw",
        "general.json",
        "specific.png",
        "specific.raw",
        "specific.json",
        "e_loc.f64",
        "e_time.f64",
    ] {
        mb.add_output_file(out, &out.join(name))?;
    }
    let manifest = mb.write(out)?;
    println!(
        "encoded tile {tile}: prompt {:?}, {} outputs in {}",
        bundle.prompt,
        manifest.outputs.len(),
        out.display()
    );
    Ok(0)
}
