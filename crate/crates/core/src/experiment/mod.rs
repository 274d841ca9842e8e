//! Configuration and runners behind the command-line subcommands.

mod config;
mod plot;
mod run;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{
    db_to_linear, dbm_to_watts, linear_to_db, load_config, parse_config, watts_to_dbm,
    ExperimentConfig, RunConfig,
};
pub use plot::{line_chart, Series};
pub use run::{
    csv_header, eval_ensemble, run_eval, run_latency, run_quant_compare, run_sweep,
    run_sweep_retrained, scheme_beamformers, EvalResult, GnnTraining, LatencySweep, PowerPolicy,
    QuantCompare, SchemeSummary, SweepResult, SweepRow, SweepVariable, REFERENCE_MS_16BIT,
    REFERENCE_MS_8BIT,
};

use crate::error::Result;
use crate::gnn::MultiGnn;
use crate::train::{read_checkpoint, write_history_csv, EpochRecord};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPACEMIMO_OUT";

/// Output directory: explicit flag, then environment, then config, then `./out`.
pub fn resolve_out_dir(flag: Option<&Path>, env: Option<&str>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.run.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn checkpoint_path(cfg: &ExperimentConfig, out_dir: &Path) -> PathBuf {
    cfg.run
        .checkpoint
        .clone()
        .unwrap_or_else(|| out_dir.join("model.ck"))
}

/// Trained model from the configured checkpoint.
pub fn load_model(cfg: &ExperimentConfig, out_dir: &Path) -> Result<MultiGnn> {
    Ok(read_checkpoint(&checkpoint_path(cfg, out_dir))?.model)
}

/// Write `contents` to `dir/name`, creating `dir` if needed.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Training history as CSV (WSR in Mbit/s) and as an SVG chart.
pub fn history_artifacts(
    cfg: &ExperimentConfig,
    history: &[EpochRecord],
) -> Result<(String, String)> {
    let mut body = Vec::new();
    write_history_csv(&mut body, history)?;
    let csv =
        csv_header("history", "wsr in Mbit/s", cfg) + &String::from_utf8(body).expect("ascii");
    let series = |label: &str, pick: fn(&EpochRecord) -> f64| Series {
        label: label.into(),
        points: history
            .iter()
            .map(|r| (r.epoch as f64, pick(r) / 1e6))
            .collect(),
    };
    let svg = line_chart(
        "Training",
        "epoch",
        "WSR (Mbit/s)",
        &[
            series("train", |r| r.train_wsr),
            series("test", |r| r.test_wsr),
        ],
    );
    Ok((csv, svg))
}

/// One line per scheme and policy, WSR in Mbit/s.
pub fn sweep_chart(result: &SweepResult) -> String {
    let mut series: Vec<Series> = Vec::new();
    for r in &result.rows {
        let label = format!(
            "{} {} {}",
            r.scheme.name(),
            r.policy.name(),
            r.training.name()
        );
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((r.value, r.mean / 1e6)),
            None => series.push(Series {
                label,
                points: vec![(r.value, r.mean / 1e6)],
            }),
        }
    }
    let x = match result.variable {
        SweepVariable::PowerDbw => "P (dBW)",
        SweepVariable::Satellites => "K",
    };
    line_chart("WSR sweep", x, "WSR (Mbit/s)", &series)
}
