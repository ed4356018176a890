//! `forge pair`: apply an edit script to a tile's cached map data and
//! emit co-registered before/after conditioning bundles, the pixel
//! change mask, and a locality report comparing changed pixels to the
//! edited geometry.

use anyhow::{Context, Result};
use forge_core::encoders::{assemble_bundle, TimeStamp6D};
use forge_core::geo::{geo_to_pixel, GeoPoint, TileRef, DEFAULT_TILE_SIZE};
use forge_core::osm::{apply_edit, resolve_geometry, EditOp, EditScript, Geometry, OsmDocument};
use forge_core::raster::{encode_indexed_png, mask_diff, ChangeMask, MaskGrid};
use forge_core::taxonomy::ClassificationRules;
use serde::Serialize;
use std::path::Path;

use crate::config::PipelineConfig;
use crate::manifest::{hash_file, FileHash, ManifestBuilder};
use crate::util::{load_cached_doc, load_weights};

/// Pixel-space bounding box, inclusive, possibly extending off-tile.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PixelBox {
    pub min_col: f64,
    pub min_row: f64,
    pub max_col: f64,
    pub max_row: f64,
}

impl PixelBox {
    fn from_points(points: &[(f64, f64)]) -> Option<Self> {
        let first = points.first()?;
        let mut b = PixelBox {
            min_col: first.0,
            min_row: first.1,
            max_col: first.0,
            max_row: first.1,
        };
        for &(c, r) in points {
            b.min_col = b.min_col.min(c);
            b.min_row = b.min_row.min(r);
            b.max_col = b.max_col.max(c);
            b.max_row = b.max_row.max(r);
        }
        Some(b)
    }

    fn dilated(&self, radius: f64) -> Self {
        PixelBox {
            min_col: self.min_col - radius,
            min_row: self.min_row - radius,
            max_col: self.max_col + radius,
            max_row: self.max_row + radius,
        }
    }

    fn contains(&self, col: u32, row: u32) -> bool {
        let (c, r) = (col as f64 + 0.5, row as f64 + 0.5);
        c >= self.min_col && c <= self.max_col && r >= self.min_row && r <= self.max_row
    }
}

#[derive(Debug, Serialize)]
pub struct LocalityReport {
    pub changed_pixels: usize,
    pub change_bbox: Option<(u32, u32, u32, u32)>,
    /// One dilated pixel box per edited feature.
    pub regions: Vec<PixelBox>,
    pub dilation_px: f64,
    pub all_changes_within_regions: bool,
}

fn geometry_points(g: &Geometry) -> Vec<(f64, f64)> {
    match g {
        Geometry::Point { lon, lat } => vec![(*lon, *lat)],
        Geometry::Polyline(pts) => pts.clone(),
        Geometry::Polygon { outer, holes } => {
            let mut pts = outer.clone();
            for h in holes {
                pts.extend(h.iter().copied());
            }
            pts
        }
    }
}

fn project(points: &[(f64, f64)], tile: &TileRef) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|&(lon, lat)| {
            let p = GeoPoint {
                lon,
                lat: lat.clamp(-85.0511, 85.0511),
            };
            let px = geo_to_pixel(&p, tile, DEFAULT_TILE_SIZE).expect("clamped latitude");
            (px.col, px.row)
        })
        .collect()
}

/// Widest configured stroke at this zoom; edits to line features can
/// change pixels up to this far from their geometry.
pub fn max_stroke_width(rules: &ClassificationRules, z: u8) -> f64 {
    let mut w = rules.stroke_width(None, z);
    for class in rules.specific_classes() {
        w = w.max(rules.stroke_width(Some(&class.name), z));
    }
    w
}

/// One dilated pixel box per feature the script touches, using the
/// post-edit document for additions and the pre-edit document
/// otherwise.
pub fn edit_regions(
    script: &EditScript,
    before: &OsmDocument,
    after: &OsmDocument,
    tile: &TileRef,
    rules: &ClassificationRules,
) -> Vec<PixelBox> {
    let radius = max_stroke_width(rules, tile.z);
    let is_area = |tags: &forge_core::osm::TagMap| rules.is_area(tags);
    let mut regions = Vec::new();
    let mut push_geom = |doc: &OsmDocument, id: i64, kind| {
        if let Ok(g) = resolve_geometry(doc, id, kind, is_area) {
            if let Some(b) = PixelBox::from_points(&project(&geometry_points(&g), tile)) {
                regions.push(b.dilated(radius));
            }
        }
    };
    for op in &script.ops {
        match op {
            EditOp::AddFeature(els) => {
                for el in els {
                    push_geom(after, el.id, el.kind());
                }
            }
            EditOp::RemoveFeature { id, kind } => push_geom(before, *id, *kind),
            EditOp::ChangeTags { id, kind, .. } => push_geom(before, *id, *kind),
        }
    }
    regions
}

pub fn locality_report(change: &ChangeMask, regions: Vec<PixelBox>, radius: f64) -> LocalityReport {
    let mut all_within = true;
    'scan: for row in 0..change.height {
        for col in 0..change.width {
            if change.data[(row * change.width + col) as usize] != 0
                && !regions.iter().any(|r| r.contains(col, row))
            {
                all_within = false;
                break 'scan;
            }
        }
    }
    LocalityReport {
        changed_pixels: change.changed_pixels(),
        change_bbox: change.bounding_box(),
        regions,
        dilation_px: radius,
        all_changes_within_regions: all_within,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    tile: TileRef,
    script_path: &Path,
    ts: &TimeStamp6D,
    country: &str,
    config: &PipelineConfig,
    config_path: &Path,
    out: &Path,
) -> Result<i32> {
    let (doc, raw) = load_cached_doc(config, tile)?;
    let script_bytes = std::fs::read(script_path)
        .with_context(|| format!("reading edit script {}", script_path.display()))?;
    let script = EditScript::from_json(&script_bytes).context("parsing edit script")?;
    let after_doc = apply_edit(&doc, &script)?;

    let rules = ClassificationRules::default_rules();
    let weights = load_weights(config)?;
    let before = assemble_bundle(&doc, &tile, ts, country, &rules, &weights);
    let after = assemble_bundle(&after_doc, &tile, ts, country, &rules, &weights);
    let change = mask_diff(&before.masks, &after.masks)?;

    std::fs::create_dir_all(out)?;
    before.save_to_dir(&out.join("before"), &rules)?;
    after.save_to_dir(&out.join("after"), &rules)?;

    let change_grid = MaskGrid::from_raw(change.width, change.height, change.data.clone())?;
    let change_png = encode_indexed_png(&change_grid, &[[0, 0, 0], [255, 255, 255]])?;
    std::fs::write(out.join("change.png"), change_png)?;
    std::fs::write(out.join("change.raw"), change_grid.data())?;

    let radius = max_stroke_width(&rules, tile.z);
    let regions = edit_regions(&script, &doc, &after_doc, &tile, &rules);
    let report = locality_report(&change, regions, radius);
    std::fs::write(out.join("locality.json"), serde_json::to_vec_pretty(&report)?)?;

    let mut mb = ManifestBuilder::new("pair", config.to_value());
    mb.add_input(hash_file(Path::new("."), config_path)?);
    mb.add_input(hash_file(Path::new("."), script_path)?);
    mb.add_input(FileHash {
        path: format!("osm:{tile}"),
        sha256: crate::manifest::sha256_hex(&raw),
    });
    let bundle_files = [
        "bundle.json",
        "general.png",
        "general.raw",
        "general.json",
        "specific.png",
        "specific.raw",
        "specific.json",
        "e_loc.f64",
        "e_time.f64",
    ];
    for sub in ["before", "after"] {
        for name in bundle_files {
            mb.add_output_file(out, &out.join(sub).join(name))?;
        }
    }
    for name in ["change.png", "change.raw", "locality.json"] {
        mb.add_output_file(out, &out.join(name))?;
    }
    mb.write(out)?;
    println!(
        "pair for tile {tile}: {} changed pixels, locality {}",
        report.changed_pixels,
        if report.all_changes_within_regions {
            "ok"
        } else {
            "VIOLATED"
        }
    );
    Ok(0)
}
