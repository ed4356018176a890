//! `forge invert-demo`: run the analytic-denoiser inversion
//! experiments — reconstruction error across an edit-depth sweep and a
//! conditional mean shift — and emit a JSON metrics report plus an SVG
//! plot of error versus depth.

use anyhow::Result;
use forge_core::diffusion::{
    analytic_gaussian_denoiser, ddim_invert, make_schedule, redenoise, BetaSpec, Condition,
    ConstantDenoiser, Denoiser, SigmaPolicy, TimestepGrid,
};
use serde::Serialize;
use std::path::Path;

use crate::config::PipelineConfig;
use crate::manifest::ManifestBuilder;
use crate::util::usage_error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DemoMode {
    /// Posterior-optimal denoiser for a Gaussian toy target.
    Analytic,
    /// State-independent noise prediction (exact round trips).
    Constant,
}

#[derive(Debug, Serialize)]
struct SweepPoint {
    t_star: usize,
    rel_error: f64,
}

#[derive(Debug, Serialize)]
struct Metrics {
    mode: String,
    dim: usize,
    t_max: usize,
    steps: usize,
    seed: u64,
    sweep: Vec<SweepPoint>,
    /// Mean displacement toward the shifted target when re-denoising
    /// under a new condition from full depth.
    conditional_mean_shift: f64,
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Simple deterministic normal generator (Box-Muller over splitmix64)
/// so the demo needs no RNG state beyond the seed.
struct NormalSource {
    state: u64,
    spare: Option<f64>,
}

impl NormalSource {
    fn new(seed: u64) -> Self {
        NormalSource {
            state: seed.wrapping_add(0x9e3779b97f4a7c15),
            spare: None,
        }
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (u1, u2) = (self.uniform().max(f64::MIN_POSITIVE), self.uniform());
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

fn write_error_plot(path: &Path, sweep: &[SweepPoint], t_max: usize) -> Result<()> {
    let (w, h, margin) = (480.0, 320.0, 48.0);
    let max_err = sweep.iter().map(|p| p.rel_error).fold(1e-12, f64::max);
    let sx = |t: f64| margin + t / t_max as f64 * (w - 2.0 * margin);
    let sy = |e: f64| h - margin - e / max_err * (h - 2.0 * margin);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<line x1=\"{m}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        m = margin,
        y0 = h - margin,
        x1 = w - margin
    ));
    let points: Vec<String> = sweep
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p.t_star as f64), sy(p.rel_error)))
        .collect();
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n",
        points.join(" ")
    ));
    for p in sweep {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>\n",
            sx(p.t_star as f64),
            sy(p.rel_error)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"12\">inversion depth t*</text>\n<text x=\"8\" y=\"{:.0}\" font-size=\"12\">relative reconstruction error (max {:.3e})</text>\n</svg>\n",
        w / 2.0 - 40.0,
        h - margin / 3.0,
        margin / 2.0,
        max_err
    ));
    std::fs::write(path, svg)?;
    Ok(())
}

pub fn run(
    dim: usize,
    t_max: usize,
    steps: usize,
    seed: u64,
    mode: DemoMode,
    config: &PipelineConfig,
    out: &Path,
) -> Result<i32> {
    if dim == 0 || dim > 64 {
        return Err(usage_error("dim must be in 1..=64"));
    }
    if t_max == 0 {
        return Err(usage_error("t-max must be >= 1"));
    }
    let steps = if steps == 0 { t_max } else { steps };
    let schedule = make_schedule(
        t_max,
        &BetaSpec::Linear {
            min: 1e-3,
            max: 0.15f64.min(0.999),
        },
    )
    .map_err(|e| usage_error(e.to_string()))?;
    let grid = TimestepGrid::strided(t_max, steps).map_err(|e| usage_error(e.to_string()))?;

    let mut rng = NormalSource::new(seed);
    let mu: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let analytic = analytic_gaussian_denoiser(mu.clone(), 1.0, &schedule);
    let constant = ConstantDenoiser(vec![0.3]);
    let denoiser: &dyn Denoiser = match mode {
        DemoMode::Analytic => &analytic,
        DemoMode::Constant => &constant,
    };
    let c_ref = Condition::Toy { mean: mu.clone() };
    let x_obs: Vec<f64> = mu.iter().map(|m| m + rng.normal()).collect();

    // Error-vs-depth sweep, always including t* = 0 (identity) and the
    // grid points closest to {T/10, T/4, T/2, T}.
    let mut targets: Vec<usize> = vec![0];
    for frac in [10, 4, 2, 1] {
        let want = t_max / frac;
        let on_grid = grid
            .steps()
            .iter()
            .copied()
            .min_by_key(|&t| t.abs_diff(want.max(1)))
            .unwrap();
        if !targets.contains(&on_grid) {
            targets.push(on_grid);
        }
    }
    targets.sort_unstable();
    let mut sweep = Vec::new();
    for &t_star in &targets {
        let inv = ddim_invert(&x_obs, &c_ref, t_star, denoiser, &schedule, &grid, false)?;
        let back = redenoise(&inv, &c_ref, denoiser, &schedule, SigmaPolicy::Ddim, None)?;
        sweep.push(SweepPoint {
            t_star,
            rel_error: rel_l2(&back, &x_obs),
        });
    }

    // Conditional shift: re-denoise from full depth toward a target
    // mean displaced by +2 in every coordinate.
    let shifted: Vec<f64> = mu.iter().map(|m| m + 2.0).collect();
    let c_new = Condition::Toy { mean: shifted };
    let inv = ddim_invert(&x_obs, &c_ref, t_max, denoiser, &schedule, &grid, false)?;
    let edited = redenoise(&inv, &c_new, denoiser, &schedule, SigmaPolicy::Ddim, None)?;
    let conditional_mean_shift =
        edited.iter().zip(&x_obs).map(|(a, b)| a - b).sum::<f64>() / dim as f64;

    let metrics = Metrics {
        mode: format!("{mode:?}").to_lowercase(),
        dim,
        t_max,
        steps,
        seed,
        sweep,
        conditional_mean_shift,
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("metrics.json"), serde_json::to_vec_pretty(&metrics)?)?;
    write_error_plot(&out.join("error_vs_depth.svg"), &metrics.sweep, t_max)?;

    let mut mb = ManifestBuilder::new("invert-demo", config.to_value());
    for name in ["metrics.json", "error_vs_depth.svg"] {
        mb.add_output_file(out, &out.join(name))?;
    }
    mb.write(out)?;
    for p in &metrics.sweep {
        println!("t* = {:>6}: relative error {:.6e}", p.t_star, p.rel_error);
    }
    println!("conditional mean shift: {conditional_mean_shift:.4}");
    Ok(0)
}
