//! Fetching of raw OSM JSON (Overpass) and z/x/y imagery tiles with a
//! content-addressed on-disk cache, a token-per-interval rate limiter,
//! bounded retries with exponential backoff, and an offline fixture
//! mode. All network and time access is behind injectable traits so
//! the suite runs with no real network.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use thiserror::Error;

use crate::geo::{tile_bounds, GeoBounds, GeoError, TileRef};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("HTTP status {status} from {url}")]
    Http { status: u16, url: String },
    #[error("network failure after {attempts} attempts: {message}")]
    Fetch { attempts: u32, message: String },
    #[error("offline mode and no cached fixture for {0}")]
    FixtureMiss(String),
    #[error("cache entry corrupt at {path}: {message}")]
    CacheCorrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What to fetch for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FetchTarget {
    Tile(TileRef),
    Bounds(GeoBounds),
}

impl FetchTarget {
    pub fn bounds(&self) -> GeoBounds {
        match self {
            FetchTarget::Tile(t) => tile_bounds(t),
            FetchTarget::Bounds(b) => *b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FetchKind {
    Osm,
    Imagery,
}

impl FetchKind {
    fn extension(self) -> &'static str {
        match self {
            FetchKind::Osm => "json",
            FetchKind::Imagery => "png",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchRequest {
    pub target: FetchTarget,
    pub kind: FetchKind,
}

/// One endpoint set: an Overpass URL for OSM data and a z/x/y URL
/// template for imagery (no provider hard-coded).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub id: String,
    pub overpass_url: String,
    /// URL template containing `{z}`, `{x}`, `{y}`.
    #[serde(default)]
    pub imagery_template: Option<String>,
    /// Maximum requests per second reaching the transport.
    #[serde(default = "default_rate")]
    pub rate_limit_per_sec: f64,
    /// Retries after the first attempt.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff interval; doubles per retry.
    #[serde(default = "default_backoff")]
    pub backoff_base_secs: f64,
}

fn default_rate() -> f64 {
    1.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> f64 {
    0.5
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(IngestError::Config(format!(
                "endpoint id {:?} must be non-empty [A-Za-z0-9_-]",
                self.id
            )));
        }
        if !(self.rate_limit_per_sec > 0.0) {
            return Err(IngestError::Config(
                "rate_limit_per_sec must be positive".into(),
            ));
        }
        if let Some(t) = &self.imagery_template {
            for token in ["{z}", "{x}", "{y}"] {
                if !t.contains(token) {
                    return Err(IngestError::Config(format!(
                        "imagery template is missing {token}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Overpass QL selecting all nodes, ways, and relations intersecting
/// the box, with member recursion so way geometries are resolvable.
/// Bbox order is (south, west, north, east).
pub fn build_overpass_query(b: &GeoBounds) -> Result<String, IngestError> {
    if b.west >= b.east || b.south >= b.north {
        return Err(IngestError::Config(format!(
            "degenerate bounds [{}, {}, {}, {}]",
            b.west, b.south, b.east, b.north
        )));
    }
    let bbox = format!(
        "{:.7},{:.7},{:.7},{:.7}",
        b.south, b.west, b.north, b.east
    );
    Ok(format!(
        "[out:json];(node({bbox});way({bbox});relation({bbox}););out body; >; out skel;"
    ))
}

// ---------------------------------------------------------------------
// Transport and clock abstractions

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HttpMethod {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub method: HttpMethod,
    pub url: String,
    pub body: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// The sole path to the network; tests inject scripted fakes.
pub trait Transport: Send + Sync {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, String>;
}

/// Production transport over a blocking HTTP client.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .user_agent("forge/0.1")
            .build()
            .map_err(|e| IngestError::Config(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, String> {
        let builder = match req.method {
            HttpMethod::Get => self.client.get(&req.url),
            HttpMethod::Post => {
                let b = self.client.post(&req.url);
                match &req.body {
                    Some(body) => b.body(body.clone()),
                    None => b,
                }
            }
        };
        let resp = builder.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.bytes().map_err(|e| e.to_string())?.to_vec();
        Ok(HttpResponse { status, body })
    }
}

/// Injectable time source so rate limiting and backoff are testable
/// without real sleeps.
pub trait Clock: Send + Sync {
    /// Seconds since an arbitrary fixed origin.
    fn now(&self) -> f64;
    fn sleep(&self, secs: f64);
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_secs_f64()
    }
    fn sleep(&self, secs: f64) {
        if secs > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
    }
}

/// Clock whose time only moves when slept; records total sleep.
pub struct VirtualClock {
    now: Mutex<f64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        VirtualClock {
            now: Mutex::new(0.0),
        }
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> f64 {
        *self.now.lock().unwrap()
    }
    fn sleep(&self, secs: f64) {
        if secs > 0.0 {
            *self.now.lock().unwrap() += secs;
        }
    }
}

/// Enforces a minimum interval of `1/rate` between permitted sends.
pub struct RateLimiter {
    min_interval: f64,
    last: Mutex<Option<f64>>,
}

impl RateLimiter {
    pub fn new(rate_per_sec: f64) -> Self {
        assert!(rate_per_sec > 0.0);
        RateLimiter {
            min_interval: 1.0 / rate_per_sec,
            last: Mutex::new(None),
        }
    }

    /// Blocks (via the clock) until a send is permitted, then records it.
    pub fn acquire(&self, clock: &dyn Clock) {
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let wait = prev + self.min_interval - clock.now();
            if wait > 0.0 {
                clock.sleep(wait);
            }
        }
        *last = Some(clock.now());
    }
}

// ---------------------------------------------------------------------
// Cache

/// Sidecar written next to each cached body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheMeta {
    pub sha256: String,
    pub fetched_at: String,
    pub url: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// On-disk cache: `cache/<endpoint-id>/<z>/<x>/<y>.<ext>` for tile
/// targets; bounding-box targets go under a `bbox/` hash subdirectory.
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    /// Root from the argument, overridable by `FORGE_CACHE_ROOT`.
    pub fn new(root: &Path) -> Self {
        let root = std::env::var_os("FORGE_CACHE_ROOT")
            .map(PathBuf::from)
            .unwrap_or_else(|| root.to_path_buf());
        Cache { root }
    }

    pub fn at(root: PathBuf) -> Self {
        Cache { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, endpoint_id: &str, req: &FetchRequest) -> PathBuf {
        let ext = req.kind.extension();
        match &req.target {
            FetchTarget::Tile(t) => self
                .root
                .join(endpoint_id)
                .join(t.z.to_string())
                .join(t.x.to_string())
                .join(format!("{}.{ext}", t.y)),
            FetchTarget::Bounds(b) => {
                let key = format!("{:.7},{:.7},{:.7},{:.7}", b.south, b.west, b.north, b.east);
                let hash = &sha256_hex(key.as_bytes())[..16];
                self.root
                    .join(endpoint_id)
                    .join("bbox")
                    .join(format!("{hash}.{ext}"))
            }
        }
    }

    fn meta_path(body_path: &Path) -> PathBuf {
        let mut name = body_path.file_name().unwrap().to_os_string();
        name.push(".meta.json");
        body_path.with_file_name(name)
    }

    /// Returns the cached body if present, verifying its content hash.
    pub fn get(&self, endpoint_id: &str, req: &FetchRequest) -> Result<Option<Vec<u8>>, IngestError> {
        let path = self.entry_path(endpoint_id, req);
        if !path.is_file() {
            return Ok(None);
        }
        let body = fs::read(&path)?;
        let meta_path = Self::meta_path(&path);
        if meta_path.is_file() {
            let meta: CacheMeta = serde_json::from_slice(&fs::read(&meta_path)?).map_err(|e| {
                IngestError::CacheCorrupt {
                    path: meta_path.clone(),
                    message: e.to_string(),
                }
            })?;
            if meta.sha256 != sha256_hex(&body) {
                return Err(IngestError::CacheCorrupt {
                    path,
                    message: "content hash mismatch".into(),
                });
            }
        }
        Ok(Some(body))
    }

    /// Persists body and metadata; the body write lands before return.
    pub fn put(
        &self,
        endpoint_id: &str,
        req: &FetchRequest,
        url: &str,
        body: &[u8],
        fetched_at: &str,
    ) -> Result<PathBuf, IngestError> {
        let path = self.entry_path(endpoint_id, req);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, body)?;
        let meta = CacheMeta {
            sha256: sha256_hex(body),
            fetched_at: fetched_at.to_string(),
            url: url.to_string(),
        };
        fs::write(
            Self::meta_path(&path),
            serde_json::to_vec_pretty(&meta).unwrap(),
        )?;
        Ok(path)
    }
}

// ---------------------------------------------------------------------
// Client

/// Cache-first fetcher with rate limiting, retries, and offline mode.
pub struct IngestClient {
    endpoint: EndpointConfig,
    cache: Cache,
    transport: Box<dyn Transport>,
    clock: Box<dyn Clock>,
    limiter: RateLimiter,
    offline: bool,
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl IngestClient {
    pub fn new(
        endpoint: EndpointConfig,
        cache: Cache,
        transport: Box<dyn Transport>,
        clock: Box<dyn Clock>,
        offline: bool,
    ) -> Result<Self, IngestError> {
        endpoint.validate()?;
        let limiter = RateLimiter::new(endpoint.rate_limit_per_sec);
        Ok(IngestClient {
            endpoint,
            cache,
            transport,
            clock,
            limiter,
            offline,
        })
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    fn build_request(&self, req: &FetchRequest) -> Result<HttpRequest, IngestError> {
        match req.kind {
            FetchKind::Osm => {
                let query = build_overpass_query(&req.target.bounds())?;
                Ok(HttpRequest {
                    method: HttpMethod::Post,
                    url: self.endpoint.overpass_url.clone(),
                    body: Some(query.into_bytes()),
                })
            }
            FetchKind::Imagery => {
                let t = match &req.target {
                    FetchTarget::Tile(t) => t,
                    FetchTarget::Bounds(_) => {
                        return Err(IngestError::Config(
                            "imagery fetches require a tile target".into(),
                        ))
                    }
                };
                let template = self.endpoint.imagery_template.as_ref().ok_or_else(|| {
                    IngestError::Config("no imagery template configured".into())
                })?;
                let url = template
                    .replace("{z}", &t.z.to_string())
                    .replace("{x}", &t.x.to_string())
                    .replace("{y}", &t.y.to_string());
                Ok(HttpRequest {
                    method: HttpMethod::Get,
                    url,
                    body: None,
                })
            }
        }
    }

    /// Cache-first fetch. On a miss, goes to the transport with bounded
    /// retries (429 and 5xx statuses and network errors retry with
    /// exponential backoff) and persists the response before returning.
    pub fn fetch(&self, req: &FetchRequest) -> Result<Vec<u8>, IngestError> {
        if let Some(body) = self.cache.get(&self.endpoint.id, req)? {
            return Ok(body);
        }
        if self.offline {
            return Err(IngestError::FixtureMiss(format!(
                "{}",
                self.cache.entry_path(&self.endpoint.id, req).display()
            )));
        }
        let http_req = self.build_request(req)?;
        let attempts = self.endpoint.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.endpoint.backoff_base_secs * f64::powi(2.0, attempt as i32 - 1);
                self.clock.sleep(backoff);
            }
            self.limiter.acquire(self.clock.as_ref());
            match self.transport.execute(&http_req) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    let fetched_at = format!("{:.3}", self.clock.now());
                    self.cache.put(
                        &self.endpoint.id,
                        req,
                        &http_req.url,
                        &resp.body,
                        &fetched_at,
                    )?;
                    return Ok(resp.body);
                }
                Ok(resp) if retryable(resp.status) => {
                    last_error = format!("HTTP {}", resp.status);
                }
                Ok(resp) => {
                    return Err(IngestError::Http {
                        status: resp.status,
                        url: http_req.url,
                    });
                }
                Err(e) => last_error = e,
            }
        }
        Err(IngestError::Fetch {
            attempts,
            message: last_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::tile_bounds;

    fn endpoint() -> EndpointConfig {
        EndpointConfig {
            id: "test".into(),
            overpass_url: "http://overpass.invalid/api".into(),
            imagery_template: Some("http://tiles.invalid/{z}/{x}/{y}.png".into()),
            rate_limit_per_sec: 10.0,
            max_retries: 3,
            backoff_base_secs: 0.5,
        }
    }

    /// Transport that replays a script of responses and records calls.
    struct ScriptedTransport {
        script: Mutex<Vec<Result<HttpResponse, String>>>,
        calls: Mutex<Vec<HttpRequest>>,
    }

    impl ScriptedTransport {
        fn new(script: Vec<Result<HttpResponse, String>>) -> Self {
            ScriptedTransport {
                script: Mutex::new(script),
                calls: Mutex::new(Vec::new()),
            }
        }
    }

    impl Transport for ScriptedTransport {
        fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, String> {
            self.calls.lock().unwrap().push(req.clone());
            let mut script = self.script.lock().unwrap();
            if script.is_empty() {
                return Err("script exhausted".into());
            }
            script.remove(0)
        }
    }

    fn ok(body: &[u8]) -> Result<HttpResponse, String> {
        Ok(HttpResponse {
            status: 200,
            body: body.to_vec(),
        })
    }

    fn status(code: u16) -> Result<HttpResponse, String> {
        Ok(HttpResponse {
            status: code,
            body: Vec::new(),
        })
    }

    fn tile_req() -> FetchRequest {
        FetchRequest {
            target: FetchTarget::Tile(TileRef {
                z: 18,
                x: 74975,
                y: 100281,
            }),
            kind: FetchKind::Osm,
        }
    }

    fn client_with(
        script: Vec<Result<HttpResponse, String>>,
        cache_root: PathBuf,
        offline: bool,
    ) -> (IngestClient, std::sync::Arc<ScriptedTransport>) {
        let transport = std::sync::Arc::new(ScriptedTransport::new(script));
        struct Shared(std::sync::Arc<ScriptedTransport>);
        impl Transport for Shared {
            fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, String> {
                self.0.execute(req)
            }
        }
        let client = IngestClient::new(
            endpoint(),
            Cache::at(cache_root),
            Box::new(Shared(transport.clone())),
            Box::new(VirtualClock::new()),
            offline,
        )
        .unwrap();
        (client, transport)
    }

    #[test]
    fn overpass_query_syntax() {
        let b = GeoBounds::new(-180.0, -85.0, 180.0, 85.0).unwrap();
        let q = build_overpass_query(&b).unwrap();
        assert!(q.contains("-85.0000000,-180.0000000,85.0000000,180.0000000"));
        assert!(q.contains("out body; >; out skel;"));
        assert!(q.starts_with("[out:json];"));
    }

    #[test]
    fn overpass_query_uses_tile_bounds() {
        let t = TileRef {
            z: 18,
            x: 74975,
            y: 100281,
        };
        let b = tile_bounds(&t);
        let q = build_overpass_query(&b).unwrap();
        let expected = format!(
            "{:.7},{:.7},{:.7},{:.7}",
            b.south, b.west, b.north, b.east
        );
        assert!(q.contains(&expected), "{q}");
    }

    #[test]
    fn overpass_query_rejects_degenerate_bounds() {
        let b = GeoBounds {
            west: 10.0,
            south: 20.0,
            east: 10.0,
            north: 20.0,
        };
        assert!(matches!(
            build_overpass_query(&b),
            Err(IngestError::Config(_))
        ));
    }

    #[test]
    fn second_fetch_hits_cache_with_zero_network() {
        let dir = tempfile::tempdir().unwrap();
        let (client, transport) = client_with(vec![ok(b"{\"elements\":[]}")], dir.path().into(), false);
        let req = tile_req();
        let first = client.fetch(&req).unwrap();
        let second = client.fetch(&req).unwrap();
        assert_eq!(first, second);
        assert_eq!(transport.calls.lock().unwrap().len(), 1);
        // Layout: cache/<endpoint-id>/<z>/<x>/<y>.<ext> plus meta sidecar.
        let body_path = dir.path().join("test/18/74975/100281.json");
        assert!(body_path.is_file());
        let meta: CacheMeta =
            serde_json::from_slice(&fs::read(dir.path().join("test/18/74975/100281.json.meta.json")).unwrap())
                .unwrap();
        assert_eq!(meta.sha256, sha256_hex(b"{\"elements\":[]}"));
    }

    #[test]
    fn retry_429_then_200_takes_two_attempts() {
        let dir = tempfile::tempdir().unwrap();
        let (client, transport) = client_with(vec![status(429), ok(b"payload")], dir.path().into(), false);
        let body = client.fetch(&tile_req()).unwrap();
        assert_eq!(body, b"payload");
        assert_eq!(transport.calls.lock().unwrap().len(), 2);
    }

    #[test]
    fn network_errors_exhaust_retries() {
        let dir = tempfile::tempdir().unwrap();
        let (client, transport) = client_with(
            vec![
                Err("refused".into()),
                Err("refused".into()),
                Err("refused".into()),
                Err("refused".into()),
            ],
            dir.path().into(),
            false,
        );
        let err = client.fetch(&tile_req()).unwrap_err();
        assert!(matches!(err, IngestError::Fetch { attempts: 4, .. }));
        assert_eq!(transport.calls.lock().unwrap().len(), 4);
    }

    #[test]
    fn non_retryable_status_fails_fast() {
        let dir = tempfile::tempdir().unwrap();
        let (client, transport) = client_with(vec![status(404)], dir.path().into(), false);
        let err = client.fetch(&tile_req()).unwrap_err();
        assert!(matches!(err, IngestError::Http { status: 404, .. }));
        assert_eq!(transport.calls.lock().unwrap().len(), 1);
    }

    #[test]
    fn offline_miss_and_fixture_hit() {
        let dir = tempfile::tempdir().unwrap();
        let (client, transport) = client_with(vec![], dir.path().into(), true);
        let err = client.fetch(&tile_req()).unwrap_err();
        assert!(matches!(err, IngestError::FixtureMiss(_)));
        assert!(transport.calls.lock().unwrap().is_empty());

        // Seed a fixture, then the same request succeeds offline.
        client
            .cache()
            .put("test", &tile_req(), "fixture://", b"fixture bytes", "0")
            .unwrap();
        assert_eq!(client.fetch(&tile_req()).unwrap(), b"fixture bytes");
        assert!(transport.calls.lock().unwrap().is_empty());
    }

    #[test]
    fn corrupt_cache_entry_detected() {
        let dir = tempfile::tempdir().unwrap();
        let (client, _) = client_with(vec![], dir.path().into(), true);
        client
            .cache()
            .put("test", &tile_req(), "fixture://", b"original", "0")
            .unwrap();
        fs::write(dir.path().join("test/18/74975/100281.json"), b"tampered").unwrap();
        let err = client.fetch(&tile_req()).unwrap_err();
        assert!(matches!(err, IngestError::CacheCorrupt { .. }));
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let clock = VirtualClock::new();
        let limiter = RateLimiter::new(2.0); // min interval 0.5 s
        let mut times = Vec::new();
        for _ in 0..5 {
            limiter.acquire(&clock);
            times.push(clock.now());
        }
        for w in times.windows(2) {
            assert!(w[1] - w[0] >= 0.5 - 1e-12, "{times:?}");
        }
        // Five sends at 2/s complete in exactly 2 virtual seconds.
        assert!((times[4] - times[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn imagery_url_from_template() {
        let dir = tempfile::tempdir().unwrap();
        let (client, transport) = client_with(vec![ok(b"pngbytes")], dir.path().into(), false);
        let req = FetchRequest {
            target: FetchTarget::Tile(TileRef { z: 3, x: 4, y: 5 }),
            kind: FetchKind::Imagery,
        };
        client.fetch(&req).unwrap();
        let calls = transport.calls.lock().unwrap();
        assert_eq!(calls[0].url, "http://tiles.invalid/3/4/5.png");
        assert_eq!(calls[0].method, HttpMethod::Get);
    }

    #[test]
    fn endpoint_validation() {
        let mut e = endpoint();
        e.id = "bad id!".into();
        assert!(e.validate().is_err());
        let mut e = endpoint();
        e.imagery_template = Some("http://tiles.invalid/{z}/{x}.png".into());
        assert!(e.validate().is_err());
        let mut e = endpoint();
        e.rate_limit_per_sec = 0.0;
        assert!(e.validate().is_err());
    }
}
