use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridloc::cli::{self, CompareOptions, LayerFlags, Options, RunOptions, Variant};
use hybridloc::FilterChoice;

#[derive(Parser)]
#[command(
    name = "hybridloc",
    version,
    about = "Hybrid EKF/UKF mmWave localization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML, or `preset:pedestrian|vehicular|accelerating`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Pin height and vertical velocity.
    #[arg(long)]
    flat: bool,
}

impl Common {
    fn options(self) -> Options {
        Options {
            config: self.config,
            seed: self.seed,
            out: self.out,
            flat: self.flat,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground truth and measurements as CSV.
    Simulate(Common),
    /// Run the pipeline on a scenario and write a report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV to process instead of simulating.
        #[arg(long)]
        input: Option<PathBuf>,
        /// ekf, ukf, ckf or hybrid.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        no_gating: bool,
        #[arg(long)]
        no_adapt: bool,
        #[arg(long)]
        no_smooth: bool,
    },
    /// Average ATE/RPE/NEES/RMSE per filter variant over several seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        /// `N`, `A..B` or a comma list.
        #[arg(long, default_value = "0..10")]
        seeds: String,
        /// Comma list of ekf, ukf, ckf, optimized-ekf, optimized-ukf, hybrid.
        #[arg(long)]
        variants: Option<String>,
    },
}

fn dispatch(cli: Cli) -> hybridloc::Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let m = cli::cmd_simulate(&common.options())?;
            println!(
                "wrote {} files to {}",
                m.artifacts.len(),
                m.out_dir.display()
            );
        }
        Command::Run {
            common,
            input,
            filter,
            no_gating,
            no_adapt,
            no_smooth,
        } => {
            let filter = filter.map(|f| f.parse::<FilterChoice>()).transpose()?;
            let opts = RunOptions {
                common: common.options(),
                input,
                filter,
                layers: LayerFlags {
                    no_gating,
                    no_adapt,
                    no_smooth,
                },
            };
            let (m, doc) = cli::cmd_run(&opts)?;
            println!(
                "{}: ATE {:.3} m, RPE {:.3} m, NEES {:.2}, RMSE {:.3} m ({})",
                doc.filter,
                doc.metrics.ate,
                doc.metrics.rpe,
                doc.metrics.nees,
                doc.metrics.rmse,
                m.out_dir.display()
            );
        }
        Command::Compare {
            common,
            seeds,
            variants,
        } => {
            let variants = match variants {
                Some(v) => v
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<hybridloc::Result<_>>()?,
                None => Variant::ALL.to_vec(),
            };
            let opts = CompareOptions {
                common: common.options(),
                seeds: cli::parse_seeds(&seeds)?,
                variants,
            };
            let (_, rows) = cli::cmd_compare(&opts)?;
            println!(
                "{:<14} {:>8} {:>8} {:>10} {:>8}",
                "variant", "ATE", "RPE", "NEES", "RMSE"
            );
            for r in rows {
                println!(
                    "{:<14} {:>8.3} {:>8.3} {:>10.2} {:>8.3}",
                    r.variant, r.ate, r.rpe, r.nees, r.rmse
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
