use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcsbp::config::{RunConfig, StudyKind};
use pcsbp::run::cmd_build;
use pcsbp::studies::cmd_study;

/// Exit status for a configuration that fails validation (clap uses the
/// same for bad arguments).
const EXIT_USAGE: u8 = 2;
/// Exit status when the norm LP gives no positive-definite norm.
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "pcsbp", version, about = "Summation-by-parts operators on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build operators and write m.csv, Sx.mtx, Sy.mtx, A.mtx, boundary.json and report.json.
    Build(Common),
    /// Run the study named in the configuration and write CSV tables.
    Study(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated seeds replacing the configuration's.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    seed: Option<Vec<u64>>,
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = &self.seed {
            cfg.seeds = s.clone();
            cfg.validate()?;
        }
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        Ok(cfg)
    }
}

fn usage(e: anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    ExitCode::from(EXIT_USAGE)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Build(c) => {
            let cfg = match c.load() {
                Ok(cfg) => cfg,
                Err(e) => return Ok(usage(e)),
            };
            let mut infeasible = false;
            for &seed in &cfg.seeds {
                let dir = if cfg.seeds.len() == 1 { c.out.clone() } else { c.out.join(format!("seed-{seed}")) };
                let outcome = cmd_build(&cfg, seed, &dir)?;
                let r = &outcome.report;
                println!(
                    "{}: N = {}, cells = {}, norm {}, min m = {:.3e}, accuracy {:.1e}/{:.1e}",
                    dir.display(),
                    r.n_nodes,
                    r.n_cells,
                    r.status,
                    r.min_m,
                    r.residuals_x.accuracy,
                    r.residuals_y.accuracy
                );
                infeasible |= outcome.infeasible();
            }
            Ok(if infeasible { ExitCode::from(EXIT_INFEASIBLE) } else { ExitCode::SUCCESS })
        }
        Command::Study(c) => {
            let cfg = match c.load() {
                Ok(cfg) if cfg.study == StudyKind::Build => return Ok(usage(anyhow::anyhow!("configuration names no study"))),
                Ok(cfg) => cfg,
                Err(e) => return Ok(usage(e)),
            };
            for path in cmd_study(&cfg, &c.out)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
