//! `oodsim`: render datasets, calibrate detectors, run braking scenarios and
//! analyse the resulting logs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use oodsim::analysis::AnalysisError;
use oodsim::sim::SimError;

/// Seed used when neither `--seed` nor the config file sets one.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(
    name = "oodsim",
    version,
    about = "OOD-guarded emergency braking simulator"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Vae,
    Oracle,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario config (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub scorer: Option<ScorerArg>,
    /// Encoder weight file for the vae scorer.
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long = "emit-svg", global = true)]
    pub emit_svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render numbered PPM frames plus index.csv for training.
    RenderDataset {
        /// Empty-lane frames.
        #[arg(long, default_value_t = 200)]
        clean: usize,
        /// Frames per obstacle kind with the obstacle inside the risk zone.
        #[arg(long, default_value_t = 25)]
        ood: usize,
        /// Also write mask, edge and Hough accumulator images per frame.
        #[arg(long)]
        debug: bool,
    },
    /// Score in-distribution frames and write the detector configuration.
    Calibrate {
        /// Dataset directory (index.csv); rendered frames when omitted.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Number of rendered calibration frames.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Rank latent dimensions by mean calibration KL and keep the top k.
    SelectDetectors {
        /// Dataset directory (index.csv); rendered frames when omitted.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Number of rendered calibration frames.
        #[arg(long)]
        n: Option<usize>,
        /// Dimensions to keep; the config's k when omitted.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run one scenario.
    Simulate {
        /// Detector configuration written by `calibrate`.
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Run on the wall clock, with simulated seconds scaled by this factor.
        #[arg(long)]
        realtime: Option<f64>,
    },
    /// Run many seeded scenarios across obstacle kinds.
    Campaign {
        /// Number of runs, split evenly across the obstacle kinds.
        #[arg(long, default_value_t = 40)]
        runs: usize,
        /// Comma-separated obstacle kinds.
        #[arg(long, value_delimiter = ',', default_value = "duck,cone,block,bot")]
        obstacles: Vec<String>,
        /// Detector configuration written by `calibrate`.
        #[arg(long)]
        detector: Option<PathBuf>,
    },
    /// Project stopping distances for alternative thresholds.
    Sweep {
        /// Directory holding run_*.json logs.
        #[arg(long)]
        logs: PathBuf,
        /// Comma-separated thresholds; spread over the recorded score range
        /// when omitted.
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
    },
    /// Stopping statistics and per-hop timing over a directory of logs.
    Report {
        /// Directory holding run_*.json logs.
        #[arg(long)]
        logs: PathBuf,
    },
    /// Re-validate a stage CSV and print its hop latencies.
    Replay {
        /// A run_NNN.csv stage log.
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Debug)]
pub struct Invariant(pub String);

impl std::fmt::Display for Invariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invariant violated: {}", self.0)
    }
}

impl std::error::Error for Invariant {}

/// 3 for broken internal invariants, 2 for everything else (bad data,
/// unreadable files, invalid configs).
fn exit_code(err: &anyhow::Error) -> u8 {
    let internal = err.chain().any(|e| {
        e.is::<Invariant>()
            || matches!(e.downcast_ref::<SimError>(), Some(SimError::Invariant(_)))
            || matches!(
                e.downcast_ref::<AnalysisError>(),
                Some(AnalysisError::Invariant(_))
            )
    });
    if internal {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OODSIM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariant_errors_map_to_three() {
        let e = anyhow::Error::from(SimError::Invariant("x".into())).context("running");
        assert_eq!(exit_code(&e), 3);
        assert_eq!(
            exit_code(&anyhow::Error::from(AnalysisError::Invariant("y".into()))),
            3
        );
        assert_eq!(exit_code(&anyhow::Error::from(Invariant("z".into()))), 3);
        assert_eq!(
            exit_code(&anyhow::Error::from(SimError::Config("c".into()))),
            2
        );
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 2);
    }

    #[test]
    fn global_flags_parse_after_subcommand() {
        let cli = Cli::try_parse_from([
            "oodsim", "campaign", "--runs", "3", "--seed", "9", "--scorer", "oracle",
        ])
        .unwrap();
        assert_eq!(cli.common.seed, Some(9));
        assert_eq!(cli.common.scorer, Some(ScorerArg::Oracle));
        assert!(matches!(cli.command, Command::Campaign { runs: 3, .. }));
        let cli = Cli::try_parse_from(["oodsim", "sweep", "--logs", "d", "--thresholds", "0,1.5"])
            .unwrap();
        match cli.command {
            Command::Sweep { thresholds, .. } => assert_eq!(thresholds, vec![0.0, 1.5]),
            _ => unreachable!(),
        }
    }
}
