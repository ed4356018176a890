//! Shared command plumbing: argument parsing helpers, cache-backed
//! document loading, and encoder weight resolution.

use anyhow::{anyhow, bail, Context, Result};
use forge_core::encoders::EncoderWeights;
use forge_core::geo::TileRef;
use forge_core::ingest::{
    Cache, FetchKind, FetchRequest, FetchTarget, IngestClient, ReqwestTransport, SystemClock,
};
use forge_core::osm::{parse_osm_json, OsmDocument};

use crate::config::PipelineConfig;

/// Marker for configuration/usage failures, mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage_error(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

/// Parse a tile reference written as `z/x/y`.
pub fn parse_tile(s: &str) -> Result<TileRef> {
    let parts: Vec<&str> = s.split('/').collect();
    let err = || usage_error(format!("tile must be z/x/y, got {s:?}"));
    if parts.len() != 3 {
        return Err(err());
    }
    let z: u8 = parts[0].parse().map_err(|_| err())?;
    let x: u32 = parts[1].parse().map_err(|_| err())?;
    let y: u32 = parts[2].parse().map_err(|_| err())?;
    TileRef::new(z, x, y).map_err(|e| usage_error(e.to_string()))
}

pub fn build_client(config: &PipelineConfig, offline: bool) -> Result<IngestClient> {
    let cache = Cache::new(&config.cache_root);
    let transport = ReqwestTransport::new().context("building HTTP client")?;
    IngestClient::new(
        config.endpoint.clone(),
        cache,
        Box::new(transport),
        Box::new(SystemClock),
        offline || config.offline,
    )
    .map_err(|e| usage_error(e.to_string()))
}

pub fn osm_request(tile: TileRef) -> FetchRequest {
    FetchRequest {
        target: FetchTarget::Tile(tile),
        kind: FetchKind::Osm,
    }
}

/// Load and parse the cached OSM JSON for a tile; never touches the
/// network (commands that consume data treat the cache as a fixture).
pub fn load_cached_doc(config: &PipelineConfig, tile: TileRef) -> Result<(OsmDocument, Vec<u8>)> {
    let cache = Cache::new(&config.cache_root);
    let req = osm_request(tile);
    let body = cache
        .get(&config.endpoint.id, &req)?
        .ok_or_else(|| {
            anyhow!(
                "no cached fixture for tile {tile}: expected {}",
                cache.entry_path(&config.endpoint.id, &req).display()
            )
        })?;
    let doc = parse_osm_json(&body).with_context(|| format!("parsing OSM JSON for {tile}"))?;
    Ok((doc, body))
}

/// Weights from the configured file, or the seeded default.
pub fn load_weights(config: &PipelineConfig) -> Result<EncoderWeights> {
    match &config.weights_path {
        Some(path) => EncoderWeights::load_from_path(path)
            .with_context(|| format!("loading weights {}", path.display())),
        None => Ok(EncoderWeights::seeded_default(config.encoder_seed)),
    }
}

/// Run `work(i)` for `i in 0..n` across up to `jobs` threads.
pub fn parallel_for_each<F>(n: usize, jobs: usize, work: F) -> Result<()>
where
    F: Fn(usize) -> Result<()> + Sync,
{
    if n == 0 {
        return Ok(());
    }
    let jobs = jobs.clamp(1, n);
    if jobs == 1 {
        for i in 0..n {
            work(i)?;
        }
        return Ok(());
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let failure = std::sync::Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n || failure.lock().unwrap().is_some() {
                    break;
                }
                if let Err(e) = work(i) {
                    *failure.lock().unwrap() = Some(e);
                    break;
                }
            });
        }
    });
    match failure.into_inner().unwrap() {
        Some(e) => bail!(e),
        None => Ok(()),
    }
}
