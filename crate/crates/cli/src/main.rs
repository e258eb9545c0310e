use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use plkg::baselines::BaselineKind;
use plkg::experiment::{
    apply_env_overrides, default_sweep_values, load_config, parse_sweep_values, predict_train,
    run_baseline, run_experiment, sweep, ExperimentConfig, SweepAxis,
};

#[derive(Parser)]
#[command(
    name = "plkg",
    version,
    about = "Beamforming agents for secret-key generation and data transmission"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides run.seed and PLKG_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.output_dir and PLKG_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the agents and evaluate the reference policies.
    Run(Common),
    /// Run one training per value of a configuration axis and merge the results.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// lambda_k, n_antennas (N), power (P) or observation_mode.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; defaults to the grid in the config.
        #[arg(long)]
        values: Option<String>,
    },
    /// Evaluate a reference policy without training.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// random or oracle-svd.
        #[arg(long)]
        kind: String,
    },
    /// Pretrain the eavesdropper predictor only.
    PredictTrain(Common),
}

fn resolve(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let mut c = ExperimentConfig::default();
            c.resolve()?;
            c
        }
    };
    apply_env_overrides(&mut cfg)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.run.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = resolve(&common)?;
            let s = run_experiment(&cfg)?;
            let sac = s.sac.expect("training run reports agent means");
            println!(
                "reward {:.4}  rk {:.4}  rd {:.4}  (random {:.4}, oracle {:.4})  -> {}",
                sac.reward,
                sac.rk,
                sac.rd,
                s.random.map_or(f64::NAN, |m| m.reward),
                s.oracle.map_or(f64::NAN, |m| m.reward),
                cfg.run.output_dir.display()
            );
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let cfg = resolve(&common)?;
            let axis =
                SweepAxis::parse(&axis).ok_or_else(|| anyhow!("unknown sweep axis {axis:?}"))?;
            let values = match values {
                Some(v) => parse_sweep_values(axis, &v)?,
                None => default_sweep_values(&cfg, axis),
            };
            let rows = sweep(&cfg, axis, &values)?;
            let mut failed = 0;
            for r in &rows {
                match r.mean_reward {
                    Some(x) if r.status == "ok" => println!("{axis}={:<18} reward {x:.4}", r.value),
                    _ => {
                        failed += 1;
                        eprintln!("{axis}={:<18} {}", r.value, r.status);
                    }
                }
            }
            if failed > 0 {
                return Err(anyhow!("{failed} of {} sweep points failed", rows.len()));
            }
        }
        Command::Baseline { common, kind } => {
            let cfg = resolve(&common)?;
            let kind =
                BaselineKind::parse(&kind).ok_or_else(|| anyhow!("unknown baseline {kind:?}"))?;
            let s = run_baseline(&cfg, kind)?;
            let m = s
                .random
                .or(s.oracle)
                .expect("baseline summary has one policy");
            println!(
                "{kind}: reward {:.4}  rk {:.4}  rd {:.4}",
                m.reward, m.rk, m.rd
            );
        }
        Command::PredictTrain(common) => {
            let cfg = resolve(&common)?;
            let m = predict_train(&cfg)?;
            println!(
                "val accuracy {:.4} (base rate {:.4})  val R2 {:.4}",
                m.val_accuracy, m.base_rate, m.val_r2
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
