use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spacemimo::accel::{quantize_params, write_quantized};
use spacemimo::experiment::{
    self, history_artifacts, load_config, load_model, resolve_out_dir, run_eval, run_latency,
    run_quant_compare, run_sweep, run_sweep_retrained, sweep_chart, write_artifact,
    ExperimentConfig, PowerPolicy, SweepVariable, OUT_DIR_ENV,
};
use spacemimo::train::{train, write_checkpoint, Checkpoint};
use spacemimo::{beamform::Scheme, Result};

#[derive(Parser)]
#[command(
    name = "spacemimo",
    version,
    about = "Multi-satellite beamforming experiments"
)]
struct Cli {
    /// TOML configuration; omitted keys take the reference defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [env: SPACEMIMO_OUT, then `run.out_dir`, then ./out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variable {
    P,
    K,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Fixed,
    Split,
    Pooled,
}

#[derive(Subcommand)]
enum Command {
    /// Train the GNN beamformer and write `model.ck` and the history.
    Train {
        /// Overrides `train.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate the configured schemes on the seeded evaluation set.
    Eval,
    /// Mean WSR across transmit power or satellite count.
    Sweep {
        #[arg(long, value_enum, default_value = "p")]
        variable: Variable,
        /// Sweep values; defaults to `run.sweep_P_dBW` or `run.sweep_K`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "fixed")]
        policy: Vec<Policy>,
        /// Train a fresh model at every value instead of reusing the checkpoint.
        #[arg(long)]
        retrain: bool,
    },
    /// Compare float and 8/16-bit fixed-point inference.
    Quant,
    /// Accelerator latency reports at 8 and 16 bits.
    Latency,
}

fn needs_model(cfg: &ExperimentConfig) -> bool {
    cfg.run.schemes.contains(&Scheme::GnnLocal)
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let env = std::env::var(OUT_DIR_ENV).ok();
    let out = resolve_out_dir(cli.out.as_deref(), env.as_deref(), &cfg);
    log::info!("config hash {}, output in {}", cfg.hash(), out.display());

    match cli.command {
        Command::Train { epochs } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.train.validate()?;
            let outcome = train(&cfg.train)?;
            std::fs::create_dir_all(&out)?;
            let ck = experiment::checkpoint_path(&cfg, &out);
            write_checkpoint(
                &ck,
                &Checkpoint {
                    model: outcome.best.clone(),
                    state: None,
                },
            )?;
            report(&ck);
            let last = out.join("last.ck");
            write_checkpoint(
                &last,
                &Checkpoint {
                    model: outcome.last,
                    state: Some(outcome.state),
                },
            )?;
            report(&last);
            let (csv, svg) = history_artifacts(&cfg, &outcome.history)?;
            report(&write_artifact(&out, "history.csv", &csv)?);
            report(&write_artifact(&out, "history.svg", &svg)?);
            let best = &outcome.history[outcome.best_epoch - 1];
            println!(
                "best epoch {} test WSR {:.4} Mbit/s",
                best.epoch,
                best.test_wsr / 1e6
            );
        }
        Command::Eval => {
            let model = if needs_model(&cfg) {
                Some(load_model(&cfg, &out)?)
            } else {
                None
            };
            let r = run_eval(&cfg, model.as_ref())?;
            report(&write_artifact(&out, "eval.csv", &r.csv)?);
            for s in &r.summary {
                println!(
                    "{:<12} {:>12.4} +- {:.4} Mbit/s",
                    s.scheme.name(),
                    s.mean / 1e6,
                    s.std / 1e6
                );
            }
        }
        Command::Sweep {
            variable,
            values,
            policy,
            retrain,
        } => {
            let (var, values) = match variable {
                Variable::P => (
                    SweepVariable::PowerDbw,
                    if values.is_empty() {
                        cfg.run.sweep_p_dbw.clone()
                    } else {
                        values
                    },
                ),
                Variable::K => (
                    SweepVariable::Satellites,
                    if values.is_empty() {
                        cfg.run.sweep_k.iter().map(|&k| k as f64).collect()
                    } else {
                        values
                    },
                ),
            };
            let policies: Vec<PowerPolicy> = policy
                .iter()
                .map(|p| match p {
                    Policy::Fixed => PowerPolicy::FixedPerSatellite,
                    Policy::Split => PowerPolicy::SplitTotal,
                    Policy::Pooled => PowerPolicy::PooledAntennas,
                })
                .collect();
            let r = if retrain {
                run_sweep_retrained(&cfg, var, &values, &policies)?
            } else {
                let model = if needs_model(&cfg) {
                    Some(load_model(&cfg, &out)?)
                } else {
                    None
                };
                run_sweep(&cfg, var, &values, &policies, model.as_ref())?
            };
            let stem = format!("sweep_{}", var.name());
            report(&write_artifact(&out, &format!("{stem}.csv"), &r.csv)?);
            report(&write_artifact(
                &out,
                &format!("{stem}.svg"),
                &sweep_chart(&r),
            )?);
        }
        Command::Quant => {
            let model = load_model(&cfg, &out)?;
            let r = run_quant_compare(&cfg, &model)?;
            report(&write_artifact(&out, "quant.csv", &r.csv)?);
            for bits in [8, 16] {
                let q = quantize_params(model.for_satellite(0)?, bits)?;
                let path = out.join(format!("model_int{bits}.smgp"));
                write_quantized(&path, &q)?;
                report(&path);
            }
            println!(
                "mean WSR ratio vs float: int8 {:.4}, int16 {:.4}",
                r.ratio_of_means_8, r.ratio_of_means_16
            );
        }
        Command::Latency => {
            let r = run_latency(&cfg)?;
            report(&write_artifact(&out, "latency.csv", &r.summary_csv)?);
            report(&write_artifact(&out, "latency_layers.csv", &r.layers_csv)?);
            for (bits, m, rep) in &r.reports {
                println!("{bits:>2}-bit M={m:<3} {}", rep.summary());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
