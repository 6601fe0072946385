use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use secure_isac::experiments::{self, parse_schemes, GridSpec, RunManifest};

#[derive(Parser)]
#[command(name = "secure-isac", version, about = "Secure UAV ISAC trajectory and beamforming design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize every scheme and write trajectory, power, trace and summary files.
    Run(Common),
    /// Beampattern gain of one slot over a ground grid.
    Beampattern {
        #[command(flatten)]
        common: Common,
        /// 1-based slot index.
        #[arg(long, default_value_t = 10)]
        slot: usize,
        /// `nx,ny` or `nx,ny,x0,x1,y0,y1`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Monte Carlo secrecy rate against the antenna count.
    SweepAntennas {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        /// Comma separated antenna counts.
        #[arg(long, value_delimiter = ',')]
        antennas: Option<Vec<usize>>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON scenario, optionally with manifest keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma separated scheme names; empty for none.
    #[arg(long)]
    schemes: Option<String>,
}

impl Common {
    fn manifest(&self) -> Result<RunManifest> {
        let mut m = match &self.config {
            Some(p) => RunManifest::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunManifest::default(),
        };
        if let Some(s) = self.seed {
            m.seed = s;
        }
        if let Some(o) = &self.out {
            m.out_dir = o.clone();
        }
        if let Some(s) = &self.schemes {
            m.schemes = parse_schemes(s)?;
        }
        Ok(m)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(common) => {
            let m = common.manifest()?;
            let s = experiments::cmd_run(&m)?;
            for r in &s.schemes {
                match r.clamped {
                    Some(v) => println!("{:<20} {:>9.4} bps/Hz  {:?}", r.scheme.name(), v, r.status),
                    None => println!("{:<20} {:>9}  {:?} at slots {:?}", r.scheme.name(), "-", r.status, r.infeasible_slots),
                }
            }
            for w in &s.dominance_warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Beampattern { common, slot, grid } => {
            let m = common.manifest()?;
            let grid = match grid {
                Some(g) => g.parse::<GridSpec>()?,
                None => GridSpec::default(),
            };
            let rows = experiments::cmd_beampattern(&m, slot, &grid)?;
            println!("{} rows -> {}", rows.len(), m.out_dir.join(experiments::BEAMPATTERN_FILE).display());
        }
        Command::SweepAntennas { common, runs, antennas } => {
            let mut m = common.manifest()?;
            if let Some(r) = runs {
                m.sweep.runs = r;
            }
            if let Some(a) = antennas {
                m.sweep.antennas = a;
            }
            for r in experiments::cmd_sweep_antennas(&m)? {
                println!("M={:<2} {:<20} {:>8.4} ± {:.4} (n={})", r.antennas, r.scheme.name(), r.mean, r.std, r.runs);
            }
        }
    }
    Ok(())
}
