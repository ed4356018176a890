//! `forge fetch`: resolve each point in a CSV to a tile and pull its
//! raw OSM JSON (and imagery, when a template is configured) into the
//! cache.

use anyhow::{Context, Result};
use forge_core::encoders::TimeStamp6D;
use forge_core::geo::{tile_index, GeoPoint, TileRef};
use forge_core::ingest::{FetchKind, FetchRequest, FetchTarget};
use std::path::Path;
use std::sync::Mutex;

use crate::config::PipelineConfig;
use crate::manifest::{hash_file, ManifestBuilder};
use crate::util::{build_client, parallel_for_each};

#[derive(Debug, Clone)]
pub struct PointRow {
    pub row: usize,
    pub tile: TileRef,
}

/// Parse the points CSV (`lon,lat,zoom,date,country`; optional
/// header). Invalid rows are returned as error strings naming the row.
pub fn parse_points(path: &Path) -> Result<(Vec<PointRow>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening points file {}", path.display()))?;
    let mut points = Vec::new();
    let mut errors = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.with_context(|| format!("row {row}"))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if row == 1 && record.get(0).map_or(false, |f| f.parse::<f64>().is_err()) {
            continue; // header line
        }
        match parse_row(&record) {
            Ok(tile) => points.push(PointRow { row, tile }),
            Err(e) => errors.push(format!("row {row}: {e}")),
        }
    }
    Ok((points, errors))
}

fn parse_row(record: &csv::StringRecord) -> Result<TileRef, String> {
    if record.len() < 5 {
        return Err(format!("expected 5 fields lon,lat,zoom,date,country, got {}", record.len()));
    }
    let lon: f64 = record[0].parse().map_err(|_| format!("bad longitude {:?}", &record[0]))?;
    let lat: f64 = record[1].parse().map_err(|_| format!("bad latitude {:?}", &record[1]))?;
    let zoom: u8 = record[2].parse().map_err(|_| format!("bad zoom {:?}", &record[2]))?;
    TimeStamp6D::parse(&record[3]).map_err(|e| format!("bad date: {e}"))?;
    if record[4].is_empty() {
        return Err("empty country".into());
    }
    let p = GeoPoint::new(lon, lat).map_err(|e| e.to_string())?;
    tile_index(&p, zoom).map_err(|e| e.to_string())
}

pub fn run(
    points_path: &Path,
    config: &PipelineConfig,
    config_path: &Path,
    out: &Path,
    offline: bool,
    jobs: usize,
) -> Result<i32> {
    let (points, mut failures) = parse_points(points_path)?;
    for f in &failures {
        log::error!("skipping {f}");
    }
    let client = build_client(config, offline)?;
    let jobs = if jobs == 0 { config.jobs } else { jobs };
    let want_imagery = config.endpoint.imagery_template.is_some();

    let fetched: Mutex<Vec<FetchRequest>> = Mutex::new(Vec::new());
    let fetch_failures: Mutex<Vec<String>> = Mutex::new(Vec::new());
    parallel_for_each(points.len(), jobs.max(1), |i| {
        let point = &points[i];
        let mut kinds = vec![FetchKind::Osm];
        if want_imagery {
            kinds.push(FetchKind::Imagery);
        }
        for kind in kinds {
            let req = FetchRequest {
                target: FetchTarget::Tile(point.tile),
                kind,
            };
            match client.fetch(&req) {
                Ok(_) => fetched.lock().unwrap().push(req),
                Err(e) => fetch_failures
                    .lock()
                    .unwrap()
                    .push(format!("row {}: tile {}: {e}", point.row, point.tile)),
            }
        }
        Ok(())
    })?;
    let fetched = fetched.into_inner().unwrap();
    let fetch_failures = fetch_failures.into_inner().unwrap();
    for f in &fetch_failures {
        log::error!("{f}");
    }
    failures.extend(fetch_failures);

    let mut mb = ManifestBuilder::new("fetch", config.to_value());
    mb.add_input(hash_file(Path::new("."), config_path)?);
    mb.add_input(hash_file(Path::new("."), points_path)?);
    let mut entries: Vec<_> = fetched
        .iter()
        .map(|req| client.cache().entry_path(&config.endpoint.id, req))
        .collect();
    entries.sort();
    entries.dedup();
    for path in entries {
        mb.add_output(hash_file(client.cache().root(), &path)?);
    }
    let manifest = mb.write(out)?;
    println!(
        "fetched {} cache entries for {} points ({} failures)",
        manifest.outputs.len(),
        points.len(),
        failures.len()
    );
    Ok(if failures.is_empty() { 0 } else { 1 })
}
