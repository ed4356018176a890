//! Scanline rasterization of classified geometries into class-index
//! masks, mask diffing, and indexed-PNG export.
//!
//! Fill uses pixel-center sampling with the even-odd rule; strokes are
//! distance-to-segment discs (round joins and caps). Rendering is
//! bitwise deterministic for fixed inputs.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::geo::{geo_to_pixel, GeoPoint, TileRef, DEFAULT_TILE_SIZE};
use crate::osm::{resolve_geometry, ring_area, Geometry, OsmDocument};
use crate::taxonomy::{effective_classes, ClassificationRules, GeneralClass, GeomKind};

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    Shape(u32, u32, u32, u32),
    #[error("png encoding failed: {0}")]
    Png(String),
}

/// Row-major 8-bit class-index raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGrid {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl MaskGrid {
    pub fn new(width: u32, height: u32) -> Self {
        MaskGrid {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, col: u32, row: u32) -> u8 {
        self.data[(row * self.width + col) as usize]
    }

    pub fn set(&mut self, col: u32, row: u32, value: u8) {
        self.data[(row * self.width + col) as usize] = value;
    }

    pub fn count_value(&self, value: u8) -> usize {
        self.data.iter().filter(|&&v| v == value).count()
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        if data.len() != (width * height) as usize {
            return Err(RasterError::Shape(width, height, data.len() as u32, 1));
        }
        Ok(MaskGrid {
            width,
            height,
            data,
        })
    }
}

/// General + specific class-index masks for one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub general: MaskGrid,
    pub specific: MaskGrid,
    pub tile: TileRef,
}

/// Per-pixel binary indicator of class changes between two mask pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
    /// (before, after) tile labels.
    pub provenance: (String, String),
}

impl ChangeMask {
    pub fn changed_pixels(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Bounding box of changed pixels as (min_col, min_row, max_col,
    /// max_row), inclusive; `None` when nothing changed.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bbox: Option<(u32, u32, u32, u32)> = None;
        for row in 0..self.height {
            for col in 0..self.width {
                if self.data[(row * self.width + col) as usize] != 0 {
                    bbox = Some(match bbox {
                        None => (col, row, col, row),
                        Some((c0, r0, c1, r1)) => {
                            (c0.min(col), r0.min(row), c1.max(col), r1.max(row))
                        }
                    });
                }
            }
        }
        bbox
    }
}

// Project a (lon, lat) ring into the tile's pixel frame. Latitudes are
// clamped just inside the Mercator range so polar vertices stay finite.
fn project_ring(ring: &[(f64, f64)], tile: &TileRef, tile_size: u32) -> Vec<(f64, f64)> {
    ring.iter()
        .map(|&(lon, lat)| {
            let p = GeoPoint {
                lon,
                lat: lat.clamp(-85.0511, 85.0511),
            };
            let px = geo_to_pixel(&p, tile, tile_size).expect("clamped latitude is in range");
            (px.col, px.row)
        })
        .collect()
}

/// Signed shoelace area of a projected ring, px^2.
pub fn projected_ring_area(ring: &[(f64, f64)], tile: &TileRef, tile_size: u32) -> f64 {
    ring_area(&project_ring(ring, tile, tile_size))
}

// Even-odd crossing columns for one scanline over a set of rings.
fn row_crossings(rings_px: &[Vec<(f64, f64)>], y: f64, out: &mut Vec<f64>) {
    out.clear();
    for ring in rings_px {
        for w in ring.windows(2) {
            let (x1, y1) = w[0];
            let (x2, y2) = w[1];
            if (y1 <= y) != (y2 <= y) {
                out.push(x1 + (y - y1) * (x2 - x1) / (y2 - y1));
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
}

// Scanline fill calling `write(col, row)` for every covered pixel center.
fn fill_rings<F: FnMut(u32, u32)>(rings_px: &[Vec<(f64, f64)>], width: u32, height: u32, mut write: F) {
    let mut crossings = Vec::new();
    for row in 0..height {
        let y = row as f64 + 0.5;
        row_crossings(rings_px, y, &mut crossings);
        for pair in crossings.chunks(2) {
            if pair.len() < 2 {
                break;
            }
            // Pixel center c+0.5 is inside iff start <= c+0.5 < end.
            let start = (pair[0] - 0.5).ceil().max(0.0) as i64;
            let end = (pair[1] - 0.5).ceil().min(width as f64) as i64;
            for col in start..end {
                write(col as u32, row as u32);
            }
        }
    }
}

// Stroke one polyline at the given width, calling `write` per pixel.
fn stroke_polyline<F: FnMut(u32, u32)>(
    pts_px: &[(f64, f64)],
    width_px: f64,
    width: u32,
    height: u32,
    mut write: F,
) {
    let r = width_px / 2.0;
    let r2 = r * r;
    if pts_px.len() == 1 {
        stamp_disc(pts_px[0], r, width, height, &mut write);
        return;
    }
    for seg in pts_px.windows(2) {
        let (ax, ay) = seg[0];
        let (bx, by) = seg[1];
        let min_c = ((ax.min(bx) - r - 0.5).floor().max(0.0)) as i64;
        let max_c = ((ax.max(bx) + r + 0.5).ceil().min(width as f64 - 1.0)) as i64;
        let min_r = ((ay.min(by) - r - 0.5).floor().max(0.0)) as i64;
        let max_r = ((ay.max(by) + r + 0.5).ceil().min(height as f64 - 1.0)) as i64;
        if max_c < min_c || max_r < min_r {
            continue;
        }
        let dx = bx - ax;
        let dy = by - ay;
        let len2 = dx * dx + dy * dy;
        for row in min_r..=max_r {
            let py = row as f64 + 0.5;
            for col in min_c..=max_c {
                let px = col as f64 + 0.5;
                let t = if len2 == 0.0 {
                    0.0
                } else {
                    ((px - ax) * dx + (py - ay) * dy) / len2
                }
                .clamp(0.0, 1.0);
                let cx = ax + t * dx;
                let cy = ay + t * dy;
                let d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
                if d2 <= r2 {
                    write(col as u32, row as u32);
                }
            }
        }
    }
}

fn stamp_disc<F: FnMut(u32, u32)>(center: (f64, f64), r: f64, width: u32, height: u32, write: &mut F) {
    let (cx, cy) = center;
    let min_c = ((cx - r - 0.5).floor().max(0.0)) as i64;
    let max_c = ((cx + r + 0.5).ceil().min(width as f64 - 1.0)) as i64;
    let min_r = ((cy - r - 0.5).floor().max(0.0)) as i64;
    let max_r = ((cy + r + 0.5).ceil().min(height as f64 - 1.0)) as i64;
    for row in min_r..=max_r {
        for col in min_c..=max_c {
            let px = col as f64 + 0.5;
            let py = row as f64 + 0.5;
            let d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
            if d2 <= r * r {
                write(col as u32, row as u32);
            }
        }
    }
}

/// Scanline-fill a polygon (outer ring minus holes, even-odd) into a
/// single grid. Degenerate rings are a warned no-op.
pub fn rasterize_polygon(
    outer: &[(f64, f64)],
    holes: &[Vec<(f64, f64)>],
    class_index: u8,
    grid: &mut MaskGrid,
    tile: &TileRef,
) {
    let size = grid.width;
    let mut rings_px = vec![project_ring(outer, tile, size)];
    for h in holes {
        rings_px.push(project_ring(h, tile, size));
    }
    if ring_area(&rings_px[0]).abs() < 1e-12 {
        log::warn!("skipping zero-area polygon on tile {tile}");
        return;
    }
    let (w, h) = (grid.width, grid.height);
    fill_rings(&rings_px, w, h, |c, r| grid.set(c, r, class_index));
}

/// Stroke a polyline at `width_px` (round joins/caps) into a grid.
pub fn rasterize_polyline(
    line: &[(f64, f64)],
    class_index: u8,
    width_px: f64,
    grid: &mut MaskGrid,
    tile: &TileRef,
) {
    let pts = project_ring(line, tile, grid.width);
    let (w, h) = (grid.width, grid.height);
    stroke_polyline(&pts, width_px, w, h, |c, r| grid.set(c, r, class_index));
}

enum DrawGeom {
    Polygon {
        rings_px: Vec<Vec<(f64, f64)>>,
        area_px: f64,
    },
    Line {
        pts_px: Vec<(f64, f64)>,
        width_px: f64,
    },
    Point {
        center_px: (f64, f64),
        radius_px: f64,
    },
}

struct DrawItem {
    geom: DrawGeom,
    general: u8,
    specific: u8,
    seq: usize,
}

/// Render both masks for one tile.
///
/// Z-order: larger-area polygons first, then smaller, then lines, then
/// points, so small features are never occluded by large surfaces. Each
/// drawn pixel receives the element's (general, specific) class pair
/// together, which keeps the parent-consistency invariant.
pub fn render_masks(doc: &OsmDocument, tile: &TileRef, rules: &ClassificationRules) -> MaskPair {
    render_masks_sized(doc, tile, rules, DEFAULT_TILE_SIZE)
}

pub fn render_masks_sized(
    doc: &OsmDocument,
    tile: &TileRef,
    rules: &ClassificationRules,
    tile_size: u32,
) -> MaskPair {
    let mut items: Vec<DrawItem> = Vec::new();
    for (seq, el) in doc.elements().iter().enumerate() {
        let (general, specific) = effective_classes(&el.tags, rules);
        if general.is_none() && specific.is_none() {
            continue;
        }
        let geometry = match resolve_geometry(doc, el.id, el.kind(), |t| rules.is_area(t)) {
            Ok(g) => g,
            Err(e) => {
                log::warn!("skipping element {} {}: {e}", el.kind(), el.id);
                continue;
            }
        };
        let specific_name = specific.map(|s| s.name.as_str());
        let stroke = rules.stroke_width(specific_name, tile.z);
        let geom = match geometry {
            Geometry::Polygon { outer, holes } => {
                let mut rings_px = vec![project_ring(&outer, tile, tile_size)];
                for h in &holes {
                    rings_px.push(project_ring(h, tile, tile_size));
                }
                let area_px = ring_area(&rings_px[0]).abs();
                if area_px < 1e-12 {
                    log::warn!("skipping zero-area polygon {} {}", el.kind(), el.id);
                    continue;
                }
                DrawGeom::Polygon { rings_px, area_px }
            }
            Geometry::Polyline(pts) => DrawGeom::Line {
                pts_px: project_ring(&pts, tile, tile_size),
                width_px: stroke,
            },
            Geometry::Point { lon, lat } => {
                // Point features only render when a point-kind specific
                // class matches; bare tagged nodes are not surfaces.
                let renders_as_point = specific
                    .map(|s| s.geometry == GeomKind::Point)
                    .unwrap_or(false);
                if !renders_as_point {
                    continue;
                }
                let px = match geo_to_pixel(&GeoPoint { lon, lat }, tile, tile_size) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                DrawGeom::Point {
                    center_px: (px.col, px.row),
                    radius_px: stroke / 2.0,
                }
            }
        };
        items.push(DrawItem {
            geom,
            general: general.map(GeneralClass::index).unwrap_or(0),
            specific: specific.map(|s| s.index).unwrap_or(0),
            seq,
        });
    }

    // Polygons by descending area, then lines, then points; document
    // order breaks ties so rendering stays deterministic.
    items.sort_by(|a, b| {
        fn rank(g: &DrawGeom) -> u8 {
            match g {
                DrawGeom::Polygon { .. } => 0,
                DrawGeom::Line { .. } => 1,
                DrawGeom::Point { .. } => 2,
            }
        }
        rank(&a.geom).cmp(&rank(&b.geom)).then_with(|| {
            match (&a.geom, &b.geom) {
                (DrawGeom::Polygon { area_px: aa, .. }, DrawGeom::Polygon { area_px: ab, .. }) => {
                    ab.partial_cmp(aa).unwrap()
                }
                _ => std::cmp::Ordering::Equal,
            }
            .then(a.seq.cmp(&b.seq))
        })
    });

    let mut general = MaskGrid::new(tile_size, tile_size);
    let mut specific = MaskGrid::new(tile_size, tile_size);
    for item in &items {
        let (g, s) = (item.general, item.specific);
        let mut write = |c: u32, r: u32| {
            general.set(c, r, g);
            specific.set(c, r, s);
        };
        match &item.geom {
            DrawGeom::Polygon { rings_px, .. } => {
                fill_rings(rings_px, tile_size, tile_size, write)
            }
            DrawGeom::Line { pts_px, width_px } => {
                stroke_polyline(pts_px, *width_px, tile_size, tile_size, write)
            }
            DrawGeom::Point {
                center_px,
                radius_px,
            } => stamp_disc(*center_px, *radius_px, tile_size, tile_size, &mut write),
        }
    }

    MaskPair {
        general,
        specific,
        tile: *tile,
    }
}

/// Per-pixel inequality of (general, specific) class pairs.
pub fn mask_diff(before: &MaskPair, after: &MaskPair) -> Result<ChangeMask, RasterError> {
    let (w, h) = (before.general.width, before.general.height);
    if after.general.width != w || after.general.height != h {
        return Err(RasterError::Shape(
            w,
            h,
            after.general.width,
            after.general.height,
        ));
    }
    let data = before
        .general
        .data
        .iter()
        .zip(&after.general.data)
        .zip(before.specific.data.iter().zip(&after.specific.data))
        .map(|((gb, ga), (sb, sa))| u8::from(gb != ga || sb != sa))
        .collect();
    Ok(ChangeMask {
        width: w,
        height: h,
        data,
        provenance: (before.tile.to_string(), after.tile.to_string()),
    })
}

/// JSON sidecar accompanying raw mask exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub width: u32,
    pub height: u32,
    pub palette_version: String,
    pub tile: String,
    pub kind: String,
}

/// Encode a grid as an 8-bit indexed-color PNG using the given palette
/// (index -> RGB).
pub fn encode_indexed_png(grid: &MaskGrid, palette: &[[u8; 3]]) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, grid.width, grid.height);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        let flat: Vec<u8> = palette.iter().flatten().copied().collect();
        enc.set_palette(flat);
        let mut writer = enc
            .write_header()
            .map_err(|e| RasterError::Png(e.to_string()))?;
        writer
            .write_image_data(&grid.data)
            .map_err(|e| RasterError::Png(e.to_string()))?;
    }
    Ok(out)
}

/// 256-entry palettes for the two masks, unused entries black.
pub fn general_palette(rules: &ClassificationRules) -> Vec<[u8; 3]> {
    let mut pal = vec![[0u8; 3]; 256];
    for class in GeneralClass::ALL {
        pal[class.index() as usize] = rules.general_color(class);
    }
    pal
}

pub fn specific_palette(rules: &ClassificationRules) -> Vec<[u8; 3]> {
    let mut pal = vec![[0u8; 3]; 256];
    for sc in rules.specific_classes() {
        pal[sc.index as usize] = sc.color;
    }
    pal
}

/// Rasterized-footprint pixel counts per specific class index.
pub fn specific_histogram(mask: &MaskGrid) -> HashMap<u8, u64> {
    let mut counts = HashMap::new();
    for &v in &mask.data {
        if v != 0 {
            *counts.entry(v).or_insert(0u64) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::tile_bounds;
    use crate::osm::parse_osm_json;

    fn tile() -> TileRef {
        TileRef {
            z: 18,
            x: 74975,
            y: 100281,
        }
    }

    // Fraction f in [0,1] of the tile extent, as lon/lat.
    fn frac(t: &TileRef, fx: f64, fy: f64) -> (f64, f64) {
        let b = tile_bounds(t);
        (
            b.west + fx * (b.east - b.west),
            b.north + fy * (b.south - b.north),
        )
    }

    #[test]
    fn full_cover_polygon() {
        let t = tile();
        let ring = vec![
            frac(&t, -0.1, -0.1),
            frac(&t, 1.1, -0.1),
            frac(&t, 1.1, 1.1),
            frac(&t, -0.1, 1.1),
            frac(&t, -0.1, -0.1),
        ];
        let mut grid = MaskGrid::new(256, 256);
        rasterize_polygon(&ring, &[], 4, &mut grid, &t);
        assert_eq!(grid.count_value(4), 256 * 256);
    }

    #[test]
    fn zero_area_polygon_is_noop() {
        let t = tile();
        let p = frac(&t, 0.5, 0.5);
        let ring = vec![p, p, p, p];
        let mut grid = MaskGrid::new(256, 256);
        rasterize_polygon(&ring, &[], 4, &mut grid, &t);
        assert_eq!(grid.count_value(0), 256 * 256);
    }

    #[test]
    fn left_half_square_exact_pixel_count() {
        let t = tile();
        // Covers columns 0..128 exactly: the boundary at col=128 excludes
        // centers at 128.5 under the half-open rule.
        let ring = vec![
            frac(&t, 0.0, 0.0),
            frac(&t, 0.5, 0.0),
            frac(&t, 0.5, 1.0),
            frac(&t, 0.0, 1.0),
            frac(&t, 0.0, 0.0),
        ];
        let mut grid = MaskGrid::new(256, 256);
        rasterize_polygon(&ring, &[], 1, &mut grid, &t);
        let count = grid.count_value(1);
        // Mercator vertical mapping is not affine in latitude but the tile
        // edges are exact; expect exactly half the tile.
        assert_eq!(count, 128 * 256);
    }

    #[test]
    fn horizontal_width1_line_single_row() {
        let t = tile();
        let line = vec![frac(&t, -0.05, 0.4001953125), frac(&t, 1.05, 0.4001953125)];
        let mut grid = MaskGrid::new(256, 256);
        rasterize_polyline(&line, 1, 1.0, &mut grid, &t);
        let count = grid.count_value(1);
        assert_eq!(count, 256, "expected one full row, got {count}");
    }

    #[test]
    fn offtile_polyline_is_noop() {
        let t = tile();
        let line = vec![frac(&t, 2.0, 2.0), frac(&t, 3.0, 3.0)];
        let mut grid = MaskGrid::new(256, 256);
        rasterize_polyline(&line, 1, 3.0, &mut grid, &t);
        assert_eq!(grid.count_value(0), 256 * 256);
    }

    #[test]
    fn diagonal_stroke_area_near_analytic() {
        // A generic diagonal angle: at exactly 45 degrees pixel centers
        // resonate with the lattice and the covered count quantizes away
        // from the continuous area, so use an incommensurate slope.
        let t = tile();
        let a = frac(&t, 0.1, 0.13);
        let b = frac(&t, 0.9, 0.71);
        let mut grid = MaskGrid::new(256, 256);
        let w = 3.0;
        rasterize_polyline(&[a, b], 1, w, &mut grid, &t);
        let count = grid.count_value(1) as f64;
        // Projected endpoint distance in px.
        let pa = geo_to_pixel(&GeoPoint { lon: a.0, lat: a.1 }, &t, 256).unwrap();
        let pb = geo_to_pixel(&GeoPoint { lon: b.0, lat: b.1 }, &t, 256).unwrap();
        let len = ((pa.col - pb.col).powi(2) + (pa.row - pb.row).powi(2)).sqrt();
        let analytic = len * w + std::f64::consts::PI * (w / 2.0) * (w / 2.0);
        let rel = (count - analytic).abs() / analytic;
        assert!(rel < 0.02, "relative error {rel}");
    }

    #[test]
    fn stroke_matches_brute_force_distance_oracle() {
        // Every stroked pixel, and only those, has its center within
        // w/2 of the segment — checked per pixel independently.
        let t = tile();
        let a = frac(&t, 0.1, 0.1);
        let b = frac(&t, 0.9, 0.9);
        let w = 3.0;
        let mut grid = MaskGrid::new(256, 256);
        rasterize_polyline(&[a, b], 1, w, &mut grid, &t);
        let pa = geo_to_pixel(&GeoPoint { lon: a.0, lat: a.1 }, &t, 256).unwrap();
        let pb = geo_to_pixel(&GeoPoint { lon: b.0, lat: b.1 }, &t, 256).unwrap();
        let (ax, ay, dx, dy) = (pa.col, pa.row, pb.col - pa.col, pb.row - pa.row);
        let len2 = dx * dx + dy * dy;
        let r = w / 2.0;
        for row in 0..256u32 {
            for col in 0..256u32 {
                let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
                let u = (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0);
                let (cx, cy) = (ax + u * dx, ay + u * dy);
                let d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
                let expected = if d2 <= r * r { 1 } else { 0 };
                assert_eq!(grid.get(col, row), expected, "pixel ({col}, {row})");
            }
        }
    }

    #[test]
    fn empty_document_renders_background() {
        let doc = parse_osm_json(br#"{"elements":[]}"#).unwrap();
        let rules = ClassificationRules::default_rules();
        let masks = render_masks(&doc, &tile(), &rules);
        assert_eq!(masks.general.count_value(0), 256 * 256);
        assert_eq!(masks.specific.count_value(0), 256 * 256);
    }

    fn lake_and_road_doc(t: &TileRef) -> OsmDocument {
        // Lake over most of the tile, road crossing it horizontally.
        let l1 = frac(t, 0.1, 0.1);
        let l2 = frac(t, 0.9, 0.1);
        let l3 = frac(t, 0.9, 0.9);
        let l4 = frac(t, 0.1, 0.9);
        let r1 = frac(t, 0.0, 0.5);
        let r2 = frac(t, 1.0, 0.5);
        let json = format!(
            r#"{{"elements":[
            {{"type":"node","id":1,"lon":{},"lat":{}}},
            {{"type":"node","id":2,"lon":{},"lat":{}}},
            {{"type":"node","id":3,"lon":{},"lat":{}}},
            {{"type":"node","id":4,"lon":{},"lat":{}}},
            {{"type":"node","id":5,"lon":{},"lat":{}}},
            {{"type":"node","id":6,"lon":{},"lat":{}}},
            {{"type":"way","id":10,"nodes":[1,2,3,4,1],"tags":{{"natural":"water","water":"lake"}}}},
            {{"type":"way","id":11,"nodes":[5,6],"tags":{{"highway":"residential"}}}}
        ]}}"#,
            l1.0, l1.1, l2.0, l2.1, l3.0, l3.1, l4.0, l4.1, r1.0, r1.1, r2.0, r2.1
        );
        parse_osm_json(json.as_bytes()).unwrap()
    }

    #[test]
    fn road_overrides_lake_along_centerline() {
        let t = tile();
        let rules = ClassificationRules::default_rules();
        let doc = lake_and_road_doc(&t);
        let masks = render_masks(&doc, &t, &rules);
        let road = GeneralClass::Road.index();
        let water = GeneralClass::Water.index();
        // Mid row carries road pixels; rows well away from it carry water.
        let mid = masks.general.get(128, 128);
        assert_eq!(mid, road);
        assert_eq!(masks.general.get(128, 60), water);
        // Specific mask: lake where water, minor road along centerline.
        let lake_idx = rules.specific_by_name("lake").unwrap().index;
        let minor = rules.specific_by_name("minor road").unwrap().index;
        assert_eq!(masks.specific.get(128, 60), lake_idx);
        assert_eq!(masks.specific.get(128, 128), minor);
    }

    #[test]
    fn render_is_deterministic() {
        let t = tile();
        let rules = ClassificationRules::default_rules();
        let doc = lake_and_road_doc(&t);
        let a = render_masks(&doc, &t, &rules);
        let b = render_masks(&doc, &t, &rules);
        assert_eq!(a, b);
    }

    #[test]
    fn parent_consistency_on_masks() {
        let t = tile();
        let rules = ClassificationRules::default_rules();
        let doc = lake_and_road_doc(&t);
        let masks = render_masks(&doc, &t, &rules);
        for i in 0..masks.specific.data().len() {
            let s = masks.specific.data()[i];
            if s != 0 {
                let parent = rules.specific_by_index(s).unwrap().parent.index();
                assert_eq!(masks.general.data()[i], parent);
            }
        }
    }

    #[test]
    fn diff_of_identical_masks_is_zero() {
        let t = tile();
        let rules = ClassificationRules::default_rules();
        let doc = lake_and_road_doc(&t);
        let m = render_masks(&doc, &t, &rules);
        let d = mask_diff(&m, &m).unwrap();
        assert_eq!(d.changed_pixels(), 0);
    }

    #[test]
    fn diff_dimension_mismatch() {
        let t = tile();
        let a = MaskPair {
            general: MaskGrid::new(256, 256),
            specific: MaskGrid::new(256, 256),
            tile: t,
        };
        let b = MaskPair {
            general: MaskGrid::new(64, 64),
            specific: MaskGrid::new(64, 64),
            tile: t,
        };
        assert!(matches!(mask_diff(&a, &b), Err(RasterError::Shape(..))));
    }

    #[test]
    fn indexed_png_roundtrip_size() {
        let rules = ClassificationRules::default_rules();
        let mut grid = MaskGrid::new(64, 64);
        grid.set(10, 10, 4);
        let bytes = encode_indexed_png(&grid, &general_palette(&rules)).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
        // Same input encodes to identical bytes.
        let again = encode_indexed_png(&grid, &general_palette(&rules)).unwrap();
        assert_eq!(bytes, again);
    }
}
