//! `forge` — command-line pipeline over the map-conditioning library:
//! fetch raw data, render class masks, assemble conditioning bundles,
//! build before/after edit pairs, and run the inversion demo.
//!
//! Exit codes: 0 success, 1 partial/runtime failure, 2 usage or
//! configuration error.

mod commands;
mod config;
mod manifest;
mod util;

use anyhow::Result;
use clap::{Parser, Subcommand};
use forge_core::encoders::TimeStamp6D;
use std::path::PathBuf;

use commands::invert_demo::DemoMode;
use config::PipelineConfig;
use util::{parse_tile, usage_error, UsageError};

#[derive(Parser)]
#[command(name = "forge", version, about = "Map-conditioning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch raw OSM JSON (and imagery) for each point in a CSV.
    Fetch {
        /// Points CSV: lon,lat,zoom,date,country (optional header).
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Never touch the network; cache misses are errors.
        #[arg(long)]
        offline: bool,
        /// Parallel fetch bound (0 = config default).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Render the general/specific masks for one cached tile.
    Render {
        /// Tile as z/x/y.
        #[arg(long)]
        tile: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble the full conditioning bundle for one cached tile.
    Encode {
        #[arg(long)]
        tile: String,
        /// Capture timestamp, ISO `YYYY-MM-DD[THH:MM:SS]`.
        #[arg(long)]
        date: String,
        #[arg(long)]
        country: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply an edit script and emit before/after bundles + change mask.
    Pair {
        #[arg(long)]
        tile: String,
        /// JSON edit script (array of add/remove/change operations).
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        date: String,
        #[arg(long)]
        country: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the toy-denoiser inversion experiments and emit metrics.
    InvertDemo {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Schedule length T.
        #[arg(long, default_value_t = 50)]
        t_max: usize,
        /// Grid step count (0 = one step per t).
        #[arg(long, default_value_t = 0)]
        steps: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DemoMode::Analytic)]
        mode: DemoMode,
        /// Optional pipeline config recorded in the manifest.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &std::path::Path) -> Result<PipelineConfig> {
    PipelineConfig::load(path).map_err(|e| usage_error(format!("{e:#}")))
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Fetch {
            points,
            config,
            out,
            offline,
            jobs,
        } => {
            let cfg = load_config(&config)?;
            commands::fetch::run(&points, &cfg, &config, &out, offline, jobs)
        }
        Command::Render { tile, config, out } => {
            let cfg = load_config(&config)?;
            commands::render::run(parse_tile(&tile)?, &cfg, &config, &out)
        }
        Command::Encode {
            tile,
            date,
            country,
            config,
            out,
        } => {
            let cfg = load_config(&config)?;
            let ts = TimeStamp6D::parse(&date).map_err(|e| usage_error(e.to_string()))?;
            commands::encode::run(parse_tile(&tile)?, &ts, &country, &cfg, &config, &out)
        }
        Command::Pair {
            tile,
            script,
            date,
            country,
            config,
            out,
        } => {
            let cfg = load_config(&config)?;
            let ts = TimeStamp6D::parse(&date).map_err(|e| usage_error(e.to_string()))?;
            commands::pair::run(
                parse_tile(&tile)?,
                &script,
                &ts,
                &country,
                &cfg,
                &config,
                &out,
            )
        }
        Command::InvertDemo {
            dim,
            t_max,
            steps,
            seed,
            mode,
            config,
            out,
        } => {
            let cfg = match config {
                Some(path) => load_config(&path)?,
                None => default_demo_config(),
            };
            commands::invert_demo::run(dim, t_max, steps, seed, mode, &cfg, &out)
        }
    }
}

/// Minimal in-memory config for commands that need none.
fn default_demo_config() -> PipelineConfig {
    serde_json::from_value(serde_json::json!({
        "endpoint": {
            "id": "demo",
            "overpass_url": "http://localhost/unused"
        }
    }))
    .expect("demo config is valid")
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    };
    std::process::exit(code);
}
