//! DDPM/DDIM schedule mathematics against a pluggable denoiser
//! interface: forward marginals, the sigma-policy family, deterministic
//! DDIM steps, classifier-free guidance, DDIM inversion to a chosen
//! depth, and re-denoising under a new condition.
//!
//! The cumulative product `alpha_bar` is used throughout; per-step
//! quantities are derived from it (`alpha_bar(0) = 1`).

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid sigma policy: {0}")]
    Policy(String),
}

/// Variance schedule specification.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaSpec {
    Linear { min: f64, max: f64 },
    Explicit(Vec<f64>),
}

/// The noise schedule: T, beta_t, and the cumulative alpha_bar_t.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub const DEFAULT_T: usize = 1000;
pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 0.02;

pub fn make_schedule(t_max: usize, spec: &BetaSpec) -> Result<DiffusionSchedule, DiffusionError> {
    if t_max == 0 {
        return Err(DiffusionError::Schedule("T must be >= 1".into()));
    }
    let betas: Vec<f64> = match spec {
        BetaSpec::Linear { min, max } => {
            if !(0.0 < *min && *min <= *max && *max < 1.0) {
                return Err(DiffusionError::Schedule(format!(
                    "need 0 < beta_min <= beta_max < 1, got [{min}, {max}]"
                )));
            }
            if t_max == 1 {
                vec![*min]
            } else {
                (0..t_max)
                    .map(|i| min + (max - min) * i as f64 / (t_max - 1) as f64)
                    .collect()
            }
        }
        BetaSpec::Explicit(b) => {
            if b.len() != t_max {
                return Err(DiffusionError::Schedule(format!(
                    "explicit schedule has {} entries, T = {t_max}",
                    b.len()
                )));
            }
            if b.iter().any(|&x| !(0.0 < x && x < 1.0)) {
                return Err(DiffusionError::Schedule("beta_t outside (0, 1)".into()));
            }
            b.clone()
        }
    };
    let mut alpha_bars = Vec::with_capacity(t_max);
    let mut acc = 1.0;
    for &b in &betas {
        acc *= 1.0 - b;
        alpha_bars.push(acc);
    }
    Ok(DiffusionSchedule { betas, alpha_bars })
}

/// T=1000, linear beta in [1e-4, 0.02] (the standard DDPM schedule;
/// configurable everywhere it is consumed).
pub fn default_schedule() -> DiffusionSchedule {
    make_schedule(
        DEFAULT_T,
        &BetaSpec::Linear {
            min: DEFAULT_BETA_MIN,
            max: DEFAULT_BETA_MAX,
        },
    )
    .expect("default schedule is valid")
}

impl DiffusionSchedule {
    pub fn t_max(&self) -> usize {
        self.betas.len()
    }

    /// beta_t for t in 1..=T.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// alpha_bar_t for t in 0..=T; alpha_bar_0 is defined as 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Stable fingerprint used to pair inversion and re-denoising runs.
    pub fn checksum(&self) -> u64 {
        let mut hasher = Sha256::new();
        for b in &self.betas {
            hasher.update(b.to_le_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

fn check_dims(a: usize, b: usize) -> Result<(), DiffusionError> {
    if a != b {
        return Err(DiffusionError::Shape {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// Sample location of the forward marginal:
/// `sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps`.
pub fn forward_marginal(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    s: &DiffusionSchedule,
) -> Result<Vec<f64>, DiffusionError> {
    check_dims(x0.len(), eps.len())?;
    let ab = s.alpha_bar(t);
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| sa * x + sb * e).collect())
}

/// Algebraic inverse of the forward marginal given a noise prediction:
/// `(x_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t)`.
pub fn predict_x0(
    x_t: &[f64],
    eps_pred: &[f64],
    t: usize,
    s: &DiffusionSchedule,
) -> Result<Vec<f64>, DiffusionError> {
    check_dims(x_t.len(), eps_pred.len())?;
    let ab = s.alpha_bar(t);
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_t
        .iter()
        .zip(eps_pred)
        .map(|(x, e)| (x - sb * e) / sa)
        .collect())
}

/// DDPM noise scale between consecutive steps:
/// `sigma_t = sqrt((1-ab_{t-1})/(1-ab_t)) sqrt(1 - ab_t/ab_{t-1})`.
pub fn ddpm_sigma(s: &DiffusionSchedule, t: usize) -> f64 {
    ddpm_sigma_between(s, t, t - 1)
}

fn ddpm_sigma_between(s: &DiffusionSchedule, t: usize, t_prev: usize) -> f64 {
    let ab_t = s.alpha_bar(t);
    let ab_prev = s.alpha_bar(t_prev);
    (((1.0 - ab_prev) / (1.0 - ab_t)) * (1.0 - ab_t / ab_prev)).sqrt()
}

/// Per-step noise scale family interpolating between deterministic DDIM
/// (`sigma_t = 0`) and the stochastic DDPM sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    Ddim,
    Ddpm,
    /// eta in [0, 1] multiplying the DDPM sigma_t.
    Scaled(f64),
}

impl SigmaPolicy {
    pub fn sigma(&self, s: &DiffusionSchedule, t: usize, t_prev: usize) -> f64 {
        match self {
            SigmaPolicy::Ddim => 0.0,
            SigmaPolicy::Ddpm => ddpm_sigma_between(s, t, t_prev),
            SigmaPolicy::Scaled(eta) => eta * ddpm_sigma_between(s, t, t_prev),
        }
    }
}

/// Opaque condition token; equality is decidable so reference vs target
/// conditions compare cleanly.
#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Unconditional,
    /// Toy condition carrying a target data mean for analytic denoisers.
    Toy { mean: Vec<f64> },
    /// Reference to an external conditioning bundle by identifier.
    Bundle(String),
}

/// The noise-prediction interface; deterministic for fixed inputs and
/// safe for concurrent read-only use.
pub trait Denoiser: Sync {
    fn eps_predict(&self, x: &[f64], t: usize, c: &Condition) -> Vec<f64>;
}

/// State-independent noise prediction; makes inversion exactly
/// invertible.
#[derive(Debug, Clone)]
pub struct ConstantDenoiser(pub Vec<f64>);

impl Denoiser for ConstantDenoiser {
    fn eps_predict(&self, x: &[f64], _t: usize, _c: &Condition) -> Vec<f64> {
        if self.0.len() == 1 {
            vec![self.0[0]; x.len()]
        } else {
            self.0.clone()
        }
    }
}

/// Posterior-optimal noise prediction for data `x0 ~ N(mean, s2 I)`:
/// `E[x0|x_t] = (sqrt(ab_t) s2 x_t + (1-ab_t) mean) / (ab_t s2 + 1-ab_t)`
/// and `eps = (x_t - sqrt(ab_t) E[x0|x_t]) / sqrt(1-ab_t)`.
///
/// A `Condition::Toy { mean }` overrides the base mean, giving a toy
/// conditional denoiser for edit experiments.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianDenoiser {
    pub mean: Vec<f64>,
    pub s2: f64,
    schedule: DiffusionSchedule,
}

pub fn analytic_gaussian_denoiser(
    mean: Vec<f64>,
    s2: f64,
    schedule: &DiffusionSchedule,
) -> AnalyticGaussianDenoiser {
    assert!(s2 > 0.0, "data variance must be positive");
    AnalyticGaussianDenoiser {
        mean,
        s2,
        schedule: schedule.clone(),
    }
}

impl Denoiser for AnalyticGaussianDenoiser {
    fn eps_predict(&self, x: &[f64], t: usize, c: &Condition) -> Vec<f64> {
        if t == 0 {
            // No noise at depth zero; the prediction limit is zero.
            return vec![0.0; x.len()];
        }
        let mean: &[f64] = match c {
            Condition::Toy { mean } => mean,
            _ => &self.mean,
        };
        let ab = self.schedule.alpha_bar(t);
        let (sa, one_m) = (ab.sqrt(), 1.0 - ab);
        let denom = ab * self.s2 + one_m;
        x.iter()
            .enumerate()
            .map(|(i, &xt)| {
                let mu = if mean.len() == 1 { mean[0] } else { mean[i % mean.len()] };
                let post_mean = (sa * self.s2 * xt + one_m * mu) / denom;
                (xt - sa * post_mean) / one_m.sqrt()
            })
            .collect()
    }
}

/// Classifier-free guidance blend:
/// `eps_uncond + w (eps_cond - eps_uncond)`.
pub fn cfg_combine(
    eps_cond: &[f64],
    eps_uncond: &[f64],
    w: f64,
) -> Result<Vec<f64>, DiffusionError> {
    check_dims(eps_cond.len(), eps_uncond.len())?;
    Ok(eps_cond
        .iter()
        .zip(eps_uncond)
        .map(|(c, u)| u + w * (c - u))
        .collect())
}

/// One reverse update from step `t` to `t_prev < t`:
/// `x_prev = sqrt(ab_prev) x0_pred + sqrt(1-ab_prev-sigma^2) eps + sigma eps_t`.
pub fn ddim_step_between(
    x_t: &[f64],
    t: usize,
    t_prev: usize,
    c: &Condition,
    d: &dyn Denoiser,
    s: &DiffusionSchedule,
    policy: SigmaPolicy,
    noise: Option<&[f64]>,
) -> Result<Vec<f64>, DiffusionError> {
    let eps = d.eps_predict(x_t, t, c);
    check_dims(x_t.len(), eps.len())?;
    let sigma = policy.sigma(s, t, t_prev);
    let ab_prev = s.alpha_bar(t_prev);
    let radicand = 1.0 - ab_prev - sigma * sigma;
    if radicand < -1e-15 {
        return Err(DiffusionError::Policy(format!(
            "sigma^2 = {} exceeds 1 - alpha_bar_{t_prev} = {}",
            sigma * sigma,
            1.0 - ab_prev
        )));
    }
    let x0 = predict_x0(x_t, &eps, t, s)?;
    let dir = radicand.max(0.0).sqrt();
    let sab = ab_prev.sqrt();
    let mut out: Vec<f64> = x0
        .iter()
        .zip(&eps)
        .map(|(x, e)| sab * x + dir * e)
        .collect();
    if sigma > 0.0 {
        let n = noise.ok_or_else(|| {
            DiffusionError::Policy("sigma > 0 requires a noise vector".into())
        })?;
        check_dims(out.len(), n.len())?;
        for (o, z) in out.iter_mut().zip(n) {
            *o += sigma * z;
        }
    }
    Ok(out)
}

/// One reverse update from `t` to `t-1`.
pub fn ddim_step(
    x_t: &[f64],
    t: usize,
    c: &Condition,
    d: &dyn Denoiser,
    s: &DiffusionSchedule,
    policy: SigmaPolicy,
    noise: Option<&[f64]>,
) -> Result<Vec<f64>, DiffusionError> {
    ddim_step_between(x_t, t, t - 1, c, d, s, policy, noise)
}

/// A strictly increasing sub-sequence of step indices in 1..=T; coarse
/// grids give DDIM step-skipping. Inversion and re-denoising must use
/// the identical grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepGrid(Vec<usize>);

impl TimestepGrid {
    pub fn full(t_max: usize) -> Self {
        TimestepGrid((1..=t_max).collect())
    }

    /// About `steps` evenly spaced indices ending at `t_max`.
    pub fn strided(t_max: usize, steps: usize) -> Result<Self, DiffusionError> {
        if steps == 0 || steps > t_max {
            return Err(DiffusionError::Schedule(format!(
                "step count {steps} invalid for T = {t_max}"
            )));
        }
        let mut ts: Vec<usize> = (1..=steps)
            .map(|i| (i as f64 * t_max as f64 / steps as f64).round() as usize)
            .collect();
        ts.dedup();
        Ok(TimestepGrid(ts))
    }

    pub fn from_steps(steps: Vec<usize>, t_max: usize) -> Result<Self, DiffusionError> {
        if steps.is_empty()
            || steps.windows(2).any(|w| w[0] >= w[1])
            || steps[0] == 0
            || *steps.last().unwrap() > t_max
        {
            return Err(DiffusionError::Schedule(
                "grid must be strictly increasing within 1..=T".into(),
            ));
        }
        Ok(TimestepGrid(steps))
    }

    pub fn steps(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, t: usize) -> bool {
        self.0.binary_search(&t).is_ok()
    }
}

/// A state vector at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub x: Vec<f64>,
    pub t: usize,
}

impl LatentState {
    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub x_checksum: String,
    pub eps_checksum: String,
}

fn vec_checksum(v: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for x in v {
        hasher.update(x.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Write per-step trajectory records as line-delimited JSON.
pub fn dump_trajectory<W: Write>(records: &[TrajectoryRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Result of an inversion pass: the endpoint latent plus the schedule
/// fingerprint and grid the matching re-denoising run must reuse.
#[derive(Debug, Clone)]
pub struct InversionResult {
    pub state: LatentState,
    pub schedule_checksum: u64,
    pub grid: TimestepGrid,
    pub trajectory: Option<Vec<TrajectoryRecord>>,
}

/// Deterministic DDIM forward (noise-adding) updates from the observed
/// sample up to depth `t_star` under the reference condition. `t_star`
/// of 0 returns the input unchanged.
pub fn ddim_invert(
    x_obs: &[f64],
    c_ref: &Condition,
    t_star: usize,
    d: &dyn Denoiser,
    s: &DiffusionSchedule,
    grid: &TimestepGrid,
    record_trajectory: bool,
) -> Result<InversionResult, DiffusionError> {
    if t_star > s.t_max() {
        return Err(DiffusionError::Schedule(format!(
            "t_star {t_star} exceeds T = {}",
            s.t_max()
        )));
    }
    if t_star != 0 && !grid.contains(t_star) {
        return Err(DiffusionError::Schedule(format!(
            "t_star {t_star} is not on the timestep grid"
        )));
    }
    let mut x = x_obs.to_vec();
    let mut t_cur = 0usize;
    let mut trajectory = record_trajectory.then(Vec::new);
    for &t_next in grid.steps().iter().take_while(|&&t| t <= t_star) {
        let eps = d.eps_predict(&x, t_cur, c_ref);
        check_dims(x.len(), eps.len())?;
        let ab_cur = s.alpha_bar(t_cur);
        let ab_next = s.alpha_bar(t_next);
        let (sa_cur, sb_cur) = (ab_cur.sqrt(), (1.0 - ab_cur).sqrt());
        let (sa_next, sb_next) = (ab_next.sqrt(), (1.0 - ab_next).sqrt());
        x = x
            .iter()
            .zip(&eps)
            .map(|(xt, e)| sa_next * (xt - sb_cur * e) / sa_cur + sb_next * e)
            .collect();
        if let Some(tr) = trajectory.as_mut() {
            tr.push(TrajectoryRecord {
                t: t_next,
                x_checksum: vec_checksum(&x),
                eps_checksum: vec_checksum(&eps),
            });
        }
        t_cur = t_next;
    }
    Ok(InversionResult {
        state: LatentState { x, t: t_star },
        schedule_checksum: s.checksum(),
        grid: grid.clone(),
        trajectory,
    })
}

/// DDIM updates from the inversion endpoint down to 0 under a target
/// condition. With `c_new == c_ref` this approximately reconstructs the
/// observed sample (exactly, for state-independent denoisers).
///
/// `noise_source` must be provided when the policy yields sigma > 0;
/// it is called once per step with the state dimension.
pub fn redenoise(
    inv: &InversionResult,
    c_new: &Condition,
    d: &dyn Denoiser,
    s: &DiffusionSchedule,
    policy: SigmaPolicy,
    mut noise_source: Option<&mut dyn FnMut(usize) -> Vec<f64>>,
) -> Result<Vec<f64>, DiffusionError> {
    if inv.schedule_checksum != s.checksum() {
        return Err(DiffusionError::Schedule(
            "inversion was produced with a different schedule".into(),
        ));
    }
    let steps: Vec<usize> = inv
        .grid
        .steps()
        .iter()
        .copied()
        .filter(|&t| t <= inv.state.t)
        .collect();
    let mut x = inv.state.x.clone();
    for (i, &t) in steps.iter().enumerate().rev() {
        let t_prev = if i == 0 { 0 } else { steps[i - 1] };
        let sigma = policy.sigma(s, t, t_prev);
        let noise_vec = if sigma > 0.0 {
            let f = noise_source
                .as_deref_mut()
                .ok_or_else(|| DiffusionError::Policy("sigma > 0 requires a noise source".into()))?;
            Some(f(x.len()))
        } else {
            None
        };
        x = ddim_step_between(&x, t, t_prev, c_new, d, s, policy, noise_vec.as_deref())?;
    }
    Ok(x)
}

/// Draw one DDPM sample by running the stochastic sampler from pure
/// noise at T down to 0.
pub fn sample_ddpm(
    dim: usize,
    c: &Condition,
    d: &dyn Denoiser,
    s: &DiffusionSchedule,
    grid: &TimestepGrid,
    mut normal: impl FnMut() -> f64,
) -> Result<Vec<f64>, DiffusionError> {
    let mut x: Vec<f64> = (0..dim).map(|_| normal()).collect();
    let steps = grid.steps();
    for (i, &t) in steps.iter().enumerate().rev() {
        let t_prev = if i == 0 { 0 } else { steps[i - 1] };
        let sigma = SigmaPolicy::Ddpm.sigma(s, t, t_prev);
        let noise: Option<Vec<f64>> = if sigma > 0.0 {
            Some((0..dim).map(|_| normal()).collect())
        } else {
            None
        };
        x = ddim_step_between(&x, t, t_prev, c, d, s, SigmaPolicy::Ddpm, noise.as_deref())?;
    }
    Ok(x)
}
