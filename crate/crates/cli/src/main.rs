mod config;
mod error;
mod pipeline;
mod series;

use clap::{Parser, Subcommand};
use config::RunConfig;
use error::{io, CliError};
use multiflat::lattice::{lattice_report, max_admissible_depth};
use multiflat::measures::{ad_regularity_report, generate_measure, load_measure, save_measure, RegularityProbe};
use multiflat::{build_lattice, MeasureSpec};
use pipeline::{write_json, RunFlags};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

/// Multiscale flatness coefficients and inequality checks on discrete measures.
#[derive(Debug, Parser)]
#[command(name = "multiflat", version)]
struct Cli {
    /// Seed for all sampling (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fail instead of computing a stage whose output is not cached.
    #[arg(long, global = true)]
    no_compute: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the checks of a config (TOML, or a previous manifest.json).
    Run { config: PathBuf },
    /// Extract plot data from the reports under a directory.
    Series { dir: PathBuf, kind: series::SeriesKind },
    /// Generate or inspect measure files.
    Measure {
        #[command(subcommand)]
        cmd: MeasureCmd,
    },
    /// Build or verify dyadic lattices.
    Lattice {
        #[command(subcommand)]
        cmd: LatticeCmd,
    },
}

#[derive(Debug, Subcommand)]
enum MeasureCmd {
    /// Write a generated measure, e.g. --spec '{"kind":"cantor4","generation":4}'.
    Gen {
        #[arg(long)]
        spec: String,
        /// Destination file (default: measure.txt in --out or the cwd).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Size, mass and empirical regularity constants of a measure file.
    Info {
        file: PathBuf,
        /// Probe centres per radius.
        #[arg(long, default_value_t = 64)]
        centers: usize,
    },
}

#[derive(Debug, Subcommand)]
enum LatticeCmd {
    /// Build a lattice and write it as JSON.
    Build {
        file: PathBuf,
        #[arg(long)]
        depth: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Include member index lists.
        #[arg(long)]
        members: bool,
    },
    /// Build a lattice and report its axiom constants; exit 2 on violations.
    Verify {
        file: PathBuf,
        #[arg(long)]
        depth: u32,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| error::invalid("--threads", e.to_string()))?;
    }
    match cli.cmd {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?.resolve(cli.seed, cli.out);
            let code = pipeline::run(&cfg, &RunFlags { no_compute: cli.no_compute })?;
            println!("reports and manifest written to {}", cfg.output.display());
            Ok(code as u8)
        }
        Command::Series { dir, kind } => {
            for p in series::series(&dir, kind)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Measure { cmd: MeasureCmd::Gen { spec, output } } => {
            let spec: MeasureSpec = serde_json::from_str(&spec).map_err(|e| error::invalid("--spec", e.to_string()))?;
            let m = generate_measure(&spec)?;
            let path = output.unwrap_or_else(|| cli.out.unwrap_or_default().join("measure.txt"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(io(dir))?;
            }
            save_measure(&m, &path)?;
            println!("{}: {} points, total mass {}", path.display(), m.len(), m.total_mass());
            Ok(0)
        }
        Command::Measure { cmd: MeasureCmd::Info { file, centers } } => {
            let m = load_measure(&file)?;
            let (h, diam) = (m.resolution(), m.diameter());
            // dyadic radii from the resolution floor up to half the diameter
            let mut radii = Vec::new();
            let mut r = 4.0 * h;
            while r <= diam / 2.0 && radii.len() < 12 {
                radii.push(r);
                r *= 2.0;
            }
            let regularity = if radii.is_empty() {
                None
            } else {
                let probe = RegularityProbe { radii, centers, seed: cli.seed.unwrap_or(0), tolerance: 4.0 };
                Some(ad_regularity_report(&m, &probe)?)
            };
            let info = json!({
                "label": m.label,
                "points": m.len(),
                "ambient_dim": m.ambient_dim(),
                "intrinsic_dim": m.intrinsic_dim(),
                "resolution": h,
                "total_mass": m.total_mass(),
                "diameter": diam,
                "max_depth": max_admissible_depth(diam, h),
                "regularity": regularity,
            });
            println!("{}", serde_json::to_string_pretty(&info)?);
            Ok(0)
        }
        Command::Lattice { cmd: LatticeCmd::Build { file, depth, output, members } } => {
            let l = build_lattice(&load_measure(&file)?, depth)?;
            let path = output.unwrap_or_else(|| cli.out.unwrap_or_default().join("lattice.json"));
            write_json(&path, &l.export(members))?;
            println!("{}: {} cubes, depth {depth}", path.display(), l.len());
            Ok(0)
        }
        Command::Lattice { cmd: LatticeCmd::Verify { file, depth } } => {
            let l = build_lattice(&load_measure(&file)?, depth)?;
            let rep = lattice_report(&l);
            println!("{}", serde_json::to_string_pretty(&rep)?);
            Ok(if rep.partition_violations + rep.nesting_violations == 0 { 0 } else { 2 })
        }
    }
}
