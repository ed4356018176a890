//! Non-mask conditions: prompt text, periodic time embedding, sinusoidal
//! location embedding, and assembly of the full conditioning bundle.

mod bundle;
mod weights;

pub use bundle::{assemble_bundle, BundleManifest, ConditioningBundle};
pub use weights::{Affine, ChannelWeights, EncoderWeights, LocationWeights, Nonlinearity, TimeWeights};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid calendar date {0}")]
    Date(String),
    #[error("weight file error: {0}")]
    Weights(String),
    #[error("bundle io error: {0}")]
    Bundle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Calendar-validated 6-D timestamp (yyyy-mm-dd hh:mm:ss).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeStamp6D {
    pub year: i32,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if is_leap(year) {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

impl TimeStamp6D {
    pub fn new(
        year: i32,
        month: u8,
        day: u8,
        hour: u8,
        minute: u8,
        second: u8,
    ) -> Result<Self, EncoderError> {
        if !(1..=12).contains(&month)
            || day == 0
            || day > days_in_month(year, month)
            || hour > 23
            || minute > 59
            || second > 59
        {
            return Err(EncoderError::Date(format!(
                "{year:04}-{month:02}-{day:02} {hour:02}:{minute:02}:{second:02}"
            )));
        }
        Ok(TimeStamp6D {
            year,
            month,
            day,
            hour,
            minute,
            second,
        })
    }

    /// Parse `YYYY-MM-DD` or `YYYY-MM-DDTHH:MM:SS`.
    pub fn parse(s: &str) -> Result<Self, EncoderError> {
        let (date, time) = match s.split_once('T') {
            Some((d, t)) => (d, Some(t)),
            None => (s, None),
        };
        let mut dp = date.splitn(3, '-');
        let bad = || EncoderError::Date(s.to_string());
        let year: i32 = dp.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let month: u8 = dp.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let day: u8 = dp.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let (hour, minute, second) = match time {
            None => (0, 0, 0),
            Some(t) => {
                let mut tp = t.splitn(3, ':');
                (
                    tp.next().ok_or_else(bad)?.parse().map_err(|_| bad())?,
                    tp.next().ok_or_else(bad)?.parse().map_err(|_| bad())?,
                    tp.next().unwrap_or("0").parse().map_err(|_| bad())?,
                )
            }
        };
        TimeStamp6D::new(year, month, day, hour, minute, second)
    }

    /// Normalized channel vector fed to the time encoder. Months, days
    /// and clock fields are scaled to roughly [0, 1]; years by 1e-4.
    pub fn normalized_channels(&self) -> [f64; 6] {
        [
            self.year as f64 / 10_000.0,
            self.month as f64 / 12.0,
            self.day as f64 / 31.0,
            self.hour as f64 / 24.0,
            self.minute as f64 / 60.0,
            self.second as f64 / 60.0,
        ]
    }
}

impl std::fmt::Display for TimeStamp6D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}",
            self.year, self.month, self.day, self.hour, self.minute, self.second
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Location,
    Time,
    Text,
}

/// A finite real vector of a configured dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub kind: EmbeddingKind,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Time2Vec-style encoding: per input channel, unit 0 is the linear
/// component `w*tau + phi` and the remaining units are `sin(w*tau + phi)`.
pub fn encode_time(ts: &TimeStamp6D, w: &EncoderWeights) -> Embedding {
    let channels = ts.normalized_channels();
    let mut values = Vec::with_capacity(w.time.output_dim());
    for (tau, ch) in channels.iter().zip(&w.time.channels) {
        for (i, (&omega, &phi)) in ch.omega.iter().zip(&ch.phi).enumerate() {
            let arg = omega * tau + phi;
            values.push(if i == 0 { arg } else { arg.sin() });
        }
    }
    Embedding {
        kind: EmbeddingKind::Time,
        values,
    }
}

/// Multi-scale sinusoidal basis of a lon/lat pair:
/// `[sin(2^k lam), cos(2^k lam)]_k` then the same for `phi`, radians.
pub fn location_basis(p: &GeoPoint, num_scales: usize) -> Vec<f64> {
    let lam = p.lon.to_radians();
    let phi = p.lat.to_radians();
    let mut basis = Vec::with_capacity(4 * num_scales);
    for coord in [lam, phi] {
        for k in 0..num_scales {
            let scaled = 2f64.powi(k as i32) * coord;
            basis.push(scaled.sin());
            basis.push(scaled.cos());
        }
    }
    basis
}

/// Sinusoidal basis refined by a two-layer MLP. The longitude is
/// wrapped into [-180, 180) first, so the embedding is periodic in
/// whole-world shifts.
pub fn encode_location(p: &GeoPoint, w: &EncoderWeights) -> Embedding {
    let wrapped = GeoPoint::wrapped(p.lon, p.lat).unwrap_or(*p);
    let basis = location_basis(&wrapped, w.location.num_scales);
    let hidden = w.location.nonlinearity.apply(w.location.layer1.forward(&basis));
    let out = w.location.layer2.forward(&hidden);
    Embedding {
        kind: EmbeddingKind::Location,
        values: out,
    }
}

/// Instantiate the prompt template. An empty summary omits the
/// highlighting clause entirely (no dangling comma).
pub fn build_prompt(summary: &[String], country: &str) -> String {
    if summary.is_empty() {
        format!("Generate a high-resolution satellite image in {country}.")
    } else {
        format!(
            "Generate a high-resolution satellite image in {country}, using semantic masks highlighting {}.",
            summary.join(", ")
        )
    }
}

/// Deterministic hash-based stand-in for an external text embedding,
/// for plumbing tests only.
pub fn pseudo_text_embedding(prompt: &str, dim: usize) -> Embedding {
    use rand::{Rng, SeedableRng};
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(prompt.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = rand_chacha::ChaCha20Rng::from_seed(seed);
    let values = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Embedding {
        kind: EmbeddingKind::Text,
        values,
    }
}
