//! Encoder parameter containers and their binary file format:
//! a little-endian u64 header length, a JSON header listing named
//! array shapes plus a SHA-256 checksum, then the f32 payload.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

use super::EncoderError;

pub const DEFAULT_EMBED_DIM: usize = 256;
pub const DEFAULT_NUM_SCALES: usize = 16;
pub const DEFAULT_HIDDEN_DIM: usize = 256;

/// Per-channel Time2Vec parameters; index 0 is the linear unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelWeights {
    pub omega: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeWeights {
    pub channels: Vec<ChannelWeights>,
}

impl TimeWeights {
    pub fn output_dim(&self) -> usize {
        self.channels.iter().map(|c| c.omega.len()).sum()
    }
}

/// Dense affine layer; `weight[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.weight
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    pub fn identity(dim: usize) -> Self {
        Affine {
            weight: (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            bias: vec![0.0; dim],
        }
    }

    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Affine {
            weight: vec![vec![0.0; in_dim]; out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn random(rng: &mut ChaCha20Rng, out_dim: usize, in_dim: usize) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let normal = Normal::new(0.0, scale).unwrap();
        Affine {
            weight: (0..out_dim)
                .map(|_| (0..in_dim).map(|_| normal.sample(rng)).collect())
                .collect(),
            bias: vec![0.0; out_dim],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    Tanh,
    Identity,
}

impl Nonlinearity {
    pub fn apply(&self, mut v: Vec<f64>) -> Vec<f64> {
        match self {
            Nonlinearity::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Nonlinearity::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Nonlinearity::Identity => {}
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationWeights {
    /// Number of frequency-ladder scales K; basis dim is 4K.
    pub num_scales: usize,
    pub layer1: Affine,
    pub layer2: Affine,
    pub nonlinearity: Nonlinearity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub time: TimeWeights,
    pub location: LocationWeights,
}

// Split `total` units across `parts` channels as evenly as possible.
fn split_units(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

impl EncoderWeights {
    /// All-zero weights (tests and plumbing).
    pub fn zeros(time_dim: usize, num_scales: usize, hidden: usize, loc_dim: usize) -> Self {
        let channels = split_units(time_dim, 6)
            .into_iter()
            .map(|n| ChannelWeights {
                omega: vec![0.0; n],
                phi: vec![0.0; n],
            })
            .collect();
        EncoderWeights {
            time: TimeWeights { channels },
            location: LocationWeights {
                num_scales,
                layer1: Affine::zeros(hidden, 4 * num_scales),
                layer2: Affine::zeros(loc_dim, hidden),
                nonlinearity: Nonlinearity::Relu,
            },
        }
    }

    /// Identity location encoder: the MLP passes the raw basis through.
    pub fn identity_location(num_scales: usize) -> Self {
        let mut w = Self::zeros(DEFAULT_EMBED_DIM, num_scales, 4 * num_scales, 4 * num_scales);
        w.location.layer1 = Affine::identity(4 * num_scales);
        w.location.layer2 = Affine::identity(4 * num_scales);
        w.location.nonlinearity = Nonlinearity::Identity;
        w
    }

    /// Deterministic seeded defaults shipped so the whole pipeline runs
    /// offline: D=256 embeddings, K=16 scales. Pretrained weights can
    /// replace these through [`EncoderWeights::load`].
    pub fn seeded_default(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let channels = split_units(DEFAULT_EMBED_DIM, 6)
            .into_iter()
            .map(|n| ChannelWeights {
                // Periodic frequencies log-spread across a few decades so
                // the default sinusoids stay well-conditioned on the
                // normalized channels.
                omega: (0..n)
                    .map(|_| 10f64.powf(rng.gen_range(-0.5..2.5)) * std::f64::consts::TAU)
                    .collect(),
                phi: (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect(),
            })
            .collect();
        EncoderWeights {
            time: TimeWeights { channels },
            location: LocationWeights {
                num_scales: DEFAULT_NUM_SCALES,
                layer1: Affine::random(&mut rng, DEFAULT_HIDDEN_DIM, 4 * DEFAULT_NUM_SCALES),
                layer2: Affine::random(&mut rng, DEFAULT_EMBED_DIM, DEFAULT_HIDDEN_DIM),
                nonlinearity: Nonlinearity::Relu,
            },
        }
    }

    pub fn time_dim(&self) -> usize {
        self.time.output_dim()
    }

    pub fn location_dim(&self) -> usize {
        self.location.layer2.bias.len()
    }
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct WeightHeader {
    arrays: Vec<ArrayEntry>,
    /// SHA-256 of the f32 payload bytes, hex.
    checksum: String,
    nonlinearity: Nonlinearity,
    num_scales: usize,
}

fn push_array(
    header: &mut Vec<ArrayEntry>,
    payload: &mut Vec<u8>,
    name: &str,
    shape: Vec<usize>,
    values: impl Iterator<Item = f64>,
) {
    header.push(ArrayEntry {
        name: name.to_string(),
        shape,
    });
    for v in values {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

impl EncoderWeights {
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), EncoderError> {
        let mut arrays = Vec::new();
        let mut payload = Vec::new();
        for (i, ch) in self.time.channels.iter().enumerate() {
            push_array(
                &mut arrays,
                &mut payload,
                &format!("time.ch{i}.omega"),
                vec![ch.omega.len()],
                ch.omega.iter().copied(),
            );
            push_array(
                &mut arrays,
                &mut payload,
                &format!("time.ch{i}.phi"),
                vec![ch.phi.len()],
                ch.phi.iter().copied(),
            );
        }
        for (name, layer) in [("loc.layer1", &self.location.layer1), ("loc.layer2", &self.location.layer2)] {
            let rows = layer.weight.len();
            let cols = layer.weight.first().map(Vec::len).unwrap_or(0);
            push_array(
                &mut arrays,
                &mut payload,
                &format!("{name}.weight"),
                vec![rows, cols],
                layer.weight.iter().flatten().copied(),
            );
            push_array(
                &mut arrays,
                &mut payload,
                &format!("{name}.bias"),
                vec![layer.bias.len()],
                layer.bias.iter().copied(),
            );
        }
        let header = WeightHeader {
            arrays,
            checksum: hex_digest(&payload),
            nonlinearity: self.location.nonlinearity,
            num_scales: self.location.num_scales,
        };
        let header_bytes = serde_json::to_vec(&header).map_err(|e| EncoderError::Weights(e.to_string()))?;
        out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        out.write_all(&header_bytes)?;
        out.write_all(&payload)?;
        Ok(())
    }

    pub fn save_to_path(&self, path: &Path) -> Result<(), EncoderError> {
        let file = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(file))
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self, EncoderError> {
        let mut len_bytes = [0u8; 8];
        input.read_exact(&mut len_bytes)?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        input.read_exact(&mut header_bytes)?;
        let header: WeightHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| EncoderError::Weights(format!("bad header: {e}")))?;
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        if hex_digest(&payload) != header.checksum {
            return Err(EncoderError::Weights("payload checksum mismatch".into()));
        }

        let mut offset = 0usize;
        let mut take = |shape: &[usize]| -> Result<Vec<f64>, EncoderError> {
            let count: usize = shape.iter().product();
            let bytes = payload
                .get(offset..offset + 4 * count)
                .ok_or_else(|| EncoderError::Weights("payload truncated".into()))?;
            offset += 4 * count;
            Ok(bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect())
        };

        let mut channels: Vec<ChannelWeights> = Vec::new();
        let mut layers: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        for entry in &header.arrays {
            let values = take(&entry.shape)?;
            if let Some(rest) = entry.name.strip_prefix("time.ch") {
                let (idx_str, field) = rest
                    .split_once('.')
                    .ok_or_else(|| EncoderError::Weights(format!("bad array name {}", entry.name)))?;
                let idx: usize = idx_str
                    .parse()
                    .map_err(|_| EncoderError::Weights(format!("bad array name {}", entry.name)))?;
                while channels.len() <= idx {
                    channels.push(ChannelWeights {
                        omega: Vec::new(),
                        phi: Vec::new(),
                    });
                }
                match field {
                    "omega" => channels[idx].omega = values,
                    "phi" => channels[idx].phi = values,
                    _ => return Err(EncoderError::Weights(format!("bad array name {}", entry.name))),
                }
            } else {
                layers.push((entry.shape.clone(), values));
            }
        }
        if layers.len() != 4 {
            return Err(EncoderError::Weights("expected 4 location arrays".into()));
        }
        let to_affine = |wshape: &[usize], w: &[f64], b: Vec<f64>| -> Result<Affine, EncoderError> {
            if wshape.len() != 2 || wshape[0] * wshape[1] != w.len() || b.len() != wshape[0] {
                return Err(EncoderError::Weights("inconsistent layer shapes".into()));
            }
            Ok(Affine {
                weight: w.chunks(wshape[1]).map(|c| c.to_vec()).collect(),
                bias: b,
            })
        };
        let layer1 = to_affine(&layers[0].0, &layers[0].1, layers[1].1.clone())?;
        let layer2 = to_affine(&layers[2].0, &layers[2].1, layers[3].1.clone())?;
        for ch in &channels {
            if ch.omega.len() != ch.phi.len() {
                return Err(EncoderError::Weights("omega/phi length mismatch".into()));
            }
        }
        if layer1.weight.first().map(Vec::len) != Some(4 * header.num_scales) {
            return Err(EncoderError::Weights("layer1 width != 4*num_scales".into()));
        }
        Ok(EncoderWeights {
            time: TimeWeights { channels },
            location: LocationWeights {
                num_scales: header.num_scales,
                layer1,
                layer2,
                nonlinearity: header.nonlinearity,
            },
        })
    }

    pub fn load_from_path(path: &Path) -> Result<Self, EncoderError> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
