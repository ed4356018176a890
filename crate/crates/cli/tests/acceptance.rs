//! Acceptance: the full offline pipeline (fetch -> render -> encode ->
//! pair) run twice produces byte-identical outputs, proven by the
//! output hashes each run's manifest records.

use std::path::{Path, PathBuf};
use std::process::Command;

use forge_core::geo::{tile_bounds, TileRef};
use forge_core::osm::{document_to_json, EditOp, EditScript, OsmDocument, OsmElement, TagMap};

fn forge() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_forge"));
    cmd.env_remove("FORGE_CACHE_ROOT");
    cmd
}

fn tile() -> TileRef {
    TileRef {
        z: 18,
        x: 74975,
        y: 100281,
    }
}

fn square(way_id: i64, node_base: i64, f0: (f64, f64), f1: (f64, f64), tags: TagMap) -> Vec<OsmElement> {
    let b = tile_bounds(&tile());
    let geo = |fx: f64, fy: f64| {
        (
            b.west + fx * (b.east - b.west),
            b.north + fy * (b.south - b.north),
        )
    };
    let corners = [geo(f0.0, f0.1), geo(f1.0, f0.1), geo(f1.0, f1.1), geo(f0.0, f1.1)];
    let mut els: Vec<OsmElement> = corners
        .iter()
        .enumerate()
        .map(|(i, &(lon, lat))| OsmElement::node(node_base + i as i64, lon, lat, TagMap::default()).unwrap())
        .collect();
    els.push(
        OsmElement::way(
            way_id,
            vec![node_base, node_base + 1, node_base + 2, node_base + 3, node_base],
            tags,
        )
        .unwrap(),
    );
    els
}

fn tags(pairs: &[(&str, &str)]) -> TagMap {
    TagMap::from_pairs(pairs.iter().map(|&(k, v)| (k, v))).unwrap()
}

/// Write config, cached OSM fixture, points CSV, and an edit script
/// into `dir`; returns the config path.
pub fn setup_fixture(dir: &Path) -> PathBuf {
    let t = tile();
    let cache_root = dir.join("cache");
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_vec_pretty(&serde_json::json!({
            "endpoint": {"id": "fix", "overpass_url": "http://localhost/unused"},
            "cache_root": cache_root,
            "offline": true,
            "encoder_seed": 42
        }))
        .unwrap(),
    )
    .unwrap();

    let mut els = Vec::new();
    els.extend(square(100, 1000, (0.05, 0.05), (0.30, 0.30), tags(&[("natural", "water"), ("water", "lake")])));
    els.extend(square(101, 1010, (0.55, 0.55), (0.95, 0.95), tags(&[("landuse", "farmland")])));
    els.extend(square(102, 1020, (0.40, 0.10), (0.46, 0.16), tags(&[("building", "residential")])));
    let doc = OsmDocument::from_elements(els).unwrap();
    let fixture_path = cache_root
        .join("fix")
        .join(t.z.to_string())
        .join(t.x.to_string())
        .join(format!("{}.json", t.y));
    std::fs::create_dir_all(fixture_path.parent().unwrap()).unwrap();
    std::fs::write(&fixture_path, serde_json::to_vec_pretty(&document_to_json(&doc)).unwrap()).unwrap();

    let center = tile_bounds(&t).center();
    std::fs::write(
        dir.join("points.csv"),
        format!("lon,lat,zoom,date,country\n{},{},18,2021-07-04,USA\n", center.lon, center.lat),
    )
    .unwrap();

    let script = EditScript::new(vec![EditOp::AddFeature(square(
        910,
        9100,
        (0.60, 0.10),
        (0.80, 0.30),
        tags(&[("leisure", "stadium")]),
    ))]);
    std::fs::write(dir.join("script.json"), serde_json::to_vec_pretty(&script.to_json()).unwrap()).unwrap();
    config_path
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed ({:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_pipeline(dir: &Path, config: &Path, out_root: &Path) {
    run_ok(forge()
        .args(["fetch", "--offline"])
        .arg("--points").arg(dir.join("points.csv"))
        .arg("--config").arg(config)
        .arg("--out").arg(out_root.join("fetch")));
    run_ok(forge()
        .args(["render", "--tile", "18/74975/100281"])
        .arg("--config").arg(config)
        .arg("--out").arg(out_root.join("render")));
    run_ok(forge()
        .args(["encode", "--tile", "18/74975/100281", "--date", "2021-07-04", "--country", "USA"])
        .arg("--config").arg(config)
        .arg("--out").arg(out_root.join("encode")));
    run_ok(forge()
        .args(["pair", "--tile", "18/74975/100281", "--date", "2021-07-04", "--country", "USA"])
        .arg("--script").arg(dir.join("script.json"))
        .arg("--config").arg(config)
        .arg("--out").arg(out_root.join("pair")));
}

fn manifest_outputs(path: &Path) -> serde_json::Value {
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    v["outputs"].clone()
}

#[test]
fn criterion_10_pipeline_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup_fixture(dir.path());
    let (run1, run2) = (dir.path().join("run1"), dir.path().join("run2"));
    run_pipeline(dir.path(), &config, &run1);
    run_pipeline(dir.path(), &config, &run2);

    let mut compared_files = 0;
    for step in ["fetch", "render", "encode", "pair"] {
        let m1 = manifest_outputs(&run1.join(step).join("manifest.json"));
        let m2 = manifest_outputs(&run2.join(step).join("manifest.json"));
        assert_eq!(m1, m2, "manifest output hashes differ for {step}");
        // Also verify the bytes themselves, not just the recorded hashes.
        for entry in m1.as_array().unwrap() {
            let rel = entry["path"].as_str().unwrap();
            let (p1, p2) = (run1.join(step).join(rel), run2.join(step).join(rel));
            if p1.is_file() && p2.is_file() {
                assert_eq!(
                    std::fs::read(&p1).unwrap(),
                    std::fs::read(&p2).unwrap(),
                    "bytes differ: {step}/{rel}"
                );
                compared_files += 1;
            }
        }
    }
    assert!(compared_files >= 20, "only {compared_files} files compared");
    println!(
        "ACCEPT criterion 10 PASS: fetch/render/encode/pair rerun byte-identical ({compared_files} files)"
    );
}
