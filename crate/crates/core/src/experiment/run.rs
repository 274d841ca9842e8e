use std::fmt::Write as _;

use crate::accel::{latency_model, quantize_params, quantized_beamformers, LatencyReport};
use crate::beamform::{wsr, BeamformerSet, Scheme};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::gnn::MultiGnn;
use crate::rng;
use crate::train::{mean, train, SystemConfig, TrainConfig};

use super::config::{db_to_linear, ExperimentConfig};

/// Reference cycle-time ranges of the hardware design, in milliseconds.
pub const REFERENCE_MS_8BIT: (f64, f64) = (3.863, 5.883);
pub const REFERENCE_MS_16BIT: (f64, f64) = (7.192, 10.504);

/// Comment line opening every CSV artifact.
pub fn csv_header(kind: &str, units: &str, cfg: &ExperimentConfig) -> String {
    format!(
        "# spacemimo {kind} v1; {units}; config_hash={}\n",
        cfg.hash()
    )
}

fn std_dev(values: &[f64]) -> f64 {
    let mu = mean(values);
    (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Seeded evaluation ensemble of the configured system.
pub fn eval_ensemble(
    sys: &SystemConfig,
    cfg: &ExperimentConfig,
    count: usize,
) -> Result<Vec<ChannelRealization>> {
    sys.ensemble(rng::derive(cfg.run.seed, rng::tag::EVAL), count)
}

/// Beamformers of `scheme` with per-satellite budget `power`.
pub fn scheme_beamformers(
    scheme: Scheme,
    sample: &ChannelRealization,
    power: f64,
    sys: &SystemConfig,
    model: Option<&MultiGnn>,
) -> Result<BeamformerSet> {
    match scheme.baseline(&sample.h, power, sys.noise_var) {
        Some(w) => w,
        None => {
            let model = model.ok_or_else(|| {
                Error::MissingArtifact(
                    "GNN-Local needs a trained checkpoint; run the `train` subcommand first".into(),
                )
            })?;
            model.beamformers(&sample.h, power)
        }
    }
}

fn scheme_wsr(
    scheme: Scheme,
    sample: &ChannelRealization,
    power: f64,
    sys: &SystemConfig,
    model: Option<&MultiGnn>,
) -> Result<f64> {
    let w = scheme_beamformers(scheme, sample, power, sys, model)?;
    Ok(wsr(&sample.h, &w, &sys.link_budget())?.weighted_sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    /// Mean WSR in bit/s.
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// `(sample, scheme, wsr in bit/s)`.
    pub rows: Vec<(usize, Scheme, f64)>,
    pub summary: Vec<SchemeSummary>,
    pub csv: String,
}

impl EvalResult {
    pub fn mean_of(&self, scheme: Scheme) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.scheme == scheme)
            .map(|s| s.mean)
    }
}

/// Mean and spread of each configured scheme over the evaluation ensemble.
pub fn run_eval(cfg: &ExperimentConfig, model: Option<&MultiGnn>) -> Result<EvalResult> {
    let sys = cfg.system();
    let samples = eval_ensemble(sys, cfg, cfg.run.eval_samples)?;
    let mut rows = Vec::with_capacity(samples.len() * cfg.run.schemes.len());
    let mut summary = Vec::with_capacity(cfg.run.schemes.len());
    for &scheme in &cfg.run.schemes {
        let values = samples
            .iter()
            .map(|s| scheme_wsr(scheme, s, sys.power, sys, model))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(values.iter().enumerate().map(|(i, &v)| (i, scheme, v)));
        summary.push(SchemeSummary {
            scheme,
            mean: mean(&values),
            std: std_dev(&values),
        });
    }
    let mut csv = csv_header("eval", "wsr in Mbit/s", cfg);
    csv.push_str("kind,sample,scheme,wsr,std\n");
    for (i, scheme, v) in &rows {
        writeln!(csv, "sample,{i},{},{},", scheme.name(), v / 1e6).unwrap();
    }
    for s in &summary {
        writeln!(
            csv,
            "summary,,{},{},{}",
            s.scheme.name(),
            s.mean / 1e6,
            s.std / 1e6
        )
        .unwrap();
    }
    Ok(EvalResult { rows, summary, csv })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Per-satellite power in dBW.
    PowerDbw,
    /// Number of satellites.
    Satellites,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PowerDbw => "P_dBW",
            SweepVariable::Satellites => "K",
        }
    }
}

/// How the transmit budget scales with the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerPolicy {
    /// Every satellite spends `P`.
    FixedPerSatellite,
    /// The cluster spends `P` in total, `P / K` each.
    SplitTotal,
    /// The cluster acts as one `NK`-antenna transmitter with budget `K P`.
    PooledAntennas,
}

impl PowerPolicy {
    pub const ALL: [PowerPolicy; 3] = [
        PowerPolicy::FixedPerSatellite,
        PowerPolicy::SplitTotal,
        PowerPolicy::PooledAntennas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PowerPolicy::FixedPerSatellite => "fixed-per-satellite",
            PowerPolicy::SplitTotal => "split-total",
            PowerPolicy::PooledAntennas => "pooled-antennas",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        PowerPolicy::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().replace('-', "_") == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub scheme: Scheme,
    pub policy: PowerPolicy,
    pub training: GnnTraining,
    /// Mean WSR in bit/s.
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub rows: Vec<SweepRow>,
    pub csv: String,
}

impl SweepResult {
    /// Means of one scheme in sweep order.
    pub fn series(&self, scheme: Scheme, policy: PowerPolicy) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.policy == policy)
            .map(|r| (r.value, r.mean))
            .collect()
    }
}

/// Where the learned model in a sweep comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnnTraining {
    /// One checkpoint evaluated at every sweep value.
    Shared,
    /// A fresh model trained at each sweep value.
    PerValue,
}

impl GnnTraining {
    pub fn name(self) -> &'static str {
        match self {
            GnnTraining::Shared => "shared",
            GnnTraining::PerValue => "per-value",
        }
    }
}

fn sweep_system(
    cfg: &ExperimentConfig,
    variable: SweepVariable,
    value: f64,
) -> Result<SystemConfig> {
    let mut sys = cfg.system().clone();
    match variable {
        SweepVariable::PowerDbw => sys.power = db_to_linear(value),
        SweepVariable::Satellites => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::invalid(format!(
                    "satellite count must be a positive integer, got {value}"
                )));
            }
            sys.satellites = value as usize;
        }
    }
    sys.validate()?;
    Ok(sys)
}

fn sweep_value(
    cfg: &ExperimentConfig,
    sys: &SystemConfig,
    value: f64,
    policies: &[PowerPolicy],
    model: Option<&MultiGnn>,
    training: GnnTraining,
    rows: &mut Vec<SweepRow>,
) -> Result<()> {
    let samples = eval_ensemble(sys, cfg, cfg.run.eval_samples)?;
    let k = sys.satellites as f64;
    for &policy in policies {
        let (eval_sys, samples, power) = match policy {
            PowerPolicy::FixedPerSatellite => (sys.clone(), samples.clone(), sys.power),
            PowerPolicy::SplitTotal => (sys.clone(), samples.clone(), sys.power / k),
            PowerPolicy::PooledAntennas => {
                let pooled_sys = SystemConfig {
                    satellites: 1,
                    antennas: sys.antennas * sys.satellites,
                    ..sys.clone()
                };
                let pooled = samples
                    .iter()
                    .map(|s| ChannelRealization {
                        h: s.h.pooled(),
                        seed: s.seed,
                    })
                    .collect::<Vec<_>>();
                (pooled_sys, pooled, sys.power * k)
            }
        };
        for &scheme in &cfg.run.schemes {
            if scheme == Scheme::GnnLocal {
                if let Some(m) = model {
                    if m.dims().n_antennas != eval_sys.antennas
                        || (!m.is_tied() && m.sets.len() != eval_sys.satellites)
                    {
                        log::warn!(
                            "skipping {} at {value} ({}): model does not fit",
                            scheme.name(),
                            policy.name()
                        );
                        continue;
                    }
                }
            }
            let v = samples
                .iter()
                .map(|s| scheme_wsr(scheme, s, power, &eval_sys, model))
                .collect::<Result<Vec<_>>>()?;
            rows.push(SweepRow {
                value,
                scheme,
                policy,
                training,
                mean: mean(&v),
                std: std_dev(&v),
            });
        }
    }
    Ok(())
}

fn sweep_result(
    cfg: &ExperimentConfig,
    variable: SweepVariable,
    rows: Vec<SweepRow>,
) -> SweepResult {
    let mut csv = csv_header("sweep", "wsr in Mbit/s, P in dBW", cfg);
    writeln!(
        csv,
        "{},scheme,policy,gnn_training,mean_wsr,std_wsr",
        variable.name()
    )
    .unwrap();
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.value,
            r.scheme.name(),
            r.policy.name(),
            r.training.name(),
            r.mean / 1e6,
            r.std / 1e6
        )
        .unwrap();
    }
    SweepResult {
        variable,
        rows,
        csv,
    }
}

fn check_sweep(values: &[f64], policies: &[PowerPolicy]) -> Result<()> {
    if values.is_empty() || policies.is_empty() {
        return Err(Error::invalid(
            "sweep needs at least one value and one policy",
        ));
    }
    Ok(())
}

/// Mean WSR of every configured scheme at each sweep value.
///
/// Samples are drawn from the same seeds at every value; channels of the
/// first satellites are shared across `K` values. Under the pooled policy a
/// learned model is evaluated only if it was built for `N K` antennas.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    variable: SweepVariable,
    values: &[f64],
    policies: &[PowerPolicy],
    model: Option<&MultiGnn>,
) -> Result<SweepResult> {
    check_sweep(values, policies)?;
    let mut rows = Vec::new();
    for &value in values {
        let sys = sweep_system(cfg, variable, value)?;
        sweep_value(
            cfg,
            &sys,
            value,
            policies,
            model,
            GnnTraining::Shared,
            &mut rows,
        )?;
    }
    Ok(sweep_result(cfg, variable, rows))
}

/// Like [`run_sweep`], but trains a new model at every sweep value with the
/// configured optimizer settings.
pub fn run_sweep_retrained(
    cfg: &ExperimentConfig,
    variable: SweepVariable,
    values: &[f64],
    policies: &[PowerPolicy],
) -> Result<SweepResult> {
    check_sweep(values, policies)?;
    let mut rows = Vec::new();
    for &value in values {
        let sys = sweep_system(cfg, variable, value)?;
        let model = if cfg.run.schemes.contains(&Scheme::GnnLocal) {
            let tc = TrainConfig {
                system: sys.clone(),
                ..cfg.train.clone()
            };
            log::info!("training at {}={value}", variable.name());
            Some(train(&tc)?.best)
        } else {
            None
        };
        sweep_value(
            cfg,
            &sys,
            value,
            policies,
            model.as_ref(),
            GnnTraining::PerValue,
            &mut rows,
        )?;
    }
    Ok(sweep_result(cfg, variable, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantCompare {
    /// `(float, 8-bit, 16-bit)` WSR per sample in bit/s.
    pub rows: Vec<(f64, f64, f64)>,
    pub mean_ratio_8: f64,
    pub mean_ratio_16: f64,
    /// Ratio of mean quantized WSR to mean float WSR.
    pub ratio_of_means_8: f64,
    pub ratio_of_means_16: f64,
    pub csv: String,
}

/// Float versus fixed-point WSR of the learned beamformer.
pub fn run_quant_compare(cfg: &ExperimentConfig, model: &MultiGnn) -> Result<QuantCompare> {
    let sys = cfg.system();
    let samples = eval_ensemble(sys, cfg, cfg.run.quant_samples)?;
    let budget = sys.link_budget();
    let q8 = model
        .sets
        .iter()
        .map(|p| quantize_params(p, 8))
        .collect::<Result<Vec<_>>>()?;
    let q16 = model
        .sets
        .iter()
        .map(|p| quantize_params(p, 16))
        .collect::<Result<Vec<_>>>()?;
    let (a8, a16) = (cfg.accel.with_bits(8), cfg.accel.with_bits(16));
    let mut rows = Vec::with_capacity(samples.len());
    for s in &samples {
        let float = wsr(&s.h, &model.beamformers(&s.h, sys.power)?, &budget)?.weighted_sum;
        let w8 = wsr(
            &s.h,
            &quantized_beamformers(&q8, &s.h, sys.power, &a8)?,
            &budget,
        )?
        .weighted_sum;
        let w16 = wsr(
            &s.h,
            &quantized_beamformers(&q16, &s.h, sys.power, &a16)?,
            &budget,
        )?
        .weighted_sum;
        rows.push((float, w8, w16));
    }
    let ratios =
        |pick: fn(&(f64, f64, f64)) -> f64| rows.iter().map(|r| pick(r) / r.0).collect::<Vec<_>>();
    let r8 = ratios(|r| r.1);
    let r16 = ratios(|r| r.2);
    let col = |pick: fn(&(f64, f64, f64)) -> f64| mean(&rows.iter().map(pick).collect::<Vec<_>>());
    let (mf, m8, m16) = (col(|r| r.0), col(|r| r.1), col(|r| r.2));

    let mut csv = csv_header("quant", "wsr in Mbit/s, ratio = quantized / float", cfg);
    csv.push_str("kind,sample,float_wsr,int8_wsr,int16_wsr,ratio8,ratio16\n");
    for (i, (r, (x8, x16))) in rows.iter().zip(r8.iter().zip(&r16)).enumerate() {
        writeln!(
            csv,
            "sample,{i},{},{},{},{x8},{x16}",
            r.0 / 1e6,
            r.1 / 1e6,
            r.2 / 1e6
        )
        .unwrap();
    }
    writeln!(csv, "mean_ratio,,,,,{},{}", mean(&r8), mean(&r16)).unwrap();
    writeln!(
        csv,
        "ratio_of_means,,{},{},{},{},{}",
        mf / 1e6,
        m8 / 1e6,
        m16 / 1e6,
        m8 / mf,
        m16 / mf
    )
    .unwrap();
    Ok(QuantCompare {
        mean_ratio_8: mean(&r8),
        mean_ratio_16: mean(&r16),
        ratio_of_means_8: m8 / mf,
        ratio_of_means_16: m16 / mf,
        rows,
        csv,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySweep {
    /// `(bits, users, report)`.
    pub reports: Vec<(u32, usize, LatencyReport)>,
    /// Per-layer rows.
    pub layers_csv: String,
    /// One row per `(bits, users)` with the reference annotation columns.
    pub summary_csv: String,
}

/// Latency reports at 8 and 16 bits for every configured user count.
pub fn run_latency(cfg: &ExperimentConfig) -> Result<LatencySweep> {
    let dims = cfg.latency_dims();
    let mut reports = Vec::new();
    for bits in [8, 16] {
        for &m in &cfg.run.latency_users {
            reports.push((
                bits,
                m,
                latency_model(&dims, m, &cfg.accel.with_bits(bits))?,
            ));
        }
    }
    let mut layers_csv = csv_header("latency-layers", "cycles", cfg);
    layers_csv.push_str(
        "users,layer,rows,cols,bits,compute_cycles,memory_cycles,effective_cycles,bound_tag\n",
    );
    let mut summary_csv = csv_header("latency", "cycles, ms", cfg);
    summary_csv.push_str("bits,users,total_cycles,total_ms,ref_8bit_ms_lo,ref_8bit_ms_hi,ref_16bit_ms_lo,ref_16bit_ms_hi\n");
    for (bits, m, r) in &reports {
        let mut body = Vec::new();
        r.write_csv(&mut body)?;
        for line in String::from_utf8(body).expect("ascii").lines().skip(1) {
            writeln!(layers_csv, "{m},{line}").unwrap();
        }
        writeln!(
            summary_csv,
            "{bits},{m},{},{},{},{},{},{}",
            r.total_cycles,
            r.total_ms,
            REFERENCE_MS_8BIT.0,
            REFERENCE_MS_8BIT.1,
            REFERENCE_MS_16BIT.0,
            REFERENCE_MS_16BIT.1
        )
        .unwrap();
    }
    Ok(LatencySweep {
        reports,
        layers_csv,
        summary_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::parse_config;

    fn quick() -> ExperimentConfig {
        parse_config(
            "[run]\neval_samples = 40\nquant_samples = 6\nschemes = [\"mrt\", \"zf_local\"]\n",
        )
        .unwrap()
    }

    #[test]
    fn eval_is_deterministic_and_consistent() {
        let c = quick();
        let a = run_eval(&c, None).unwrap();
        assert_eq!(a.csv, run_eval(&c, None).unwrap().csv);
        assert_eq!(a.summary.len(), 2);
        assert_eq!(a.rows.len(), 80);
        for s in &a.summary {
            let vals: Vec<f64> = a
                .rows
                .iter()
                .filter(|r| r.1 == s.scheme)
                .map(|r| r.2)
                .collect();
            assert!((mean(&vals) - s.mean).abs() <= 1e-12 * s.mean);
        }
        assert!(a.csv.starts_with("# spacemimo eval v1"));
        assert!(a.csv.contains(&c.hash()));
    }

    #[test]
    fn gnn_without_model_is_missing_artifact() {
        let c = parse_config("[run]\neval_samples = 2\nschemes = [\"gnn\"]\n").unwrap();
        let e = run_eval(&c, None).unwrap_err();
        assert_eq!(e.exit_code(), 4);
        assert!(e.to_string().contains("train"));
    }

    #[test]
    fn single_k_sweep_matches_eval() {
        let mut c = quick();
        c.train.system.satellites = 1;
        let e = run_eval(&c, None).unwrap();
        let s = run_sweep(
            &c,
            SweepVariable::Satellites,
            &[1.0],
            &[PowerPolicy::FixedPerSatellite],
            None,
        )
        .unwrap();
        for sum in &e.summary {
            assert_eq!(
                s.series(sum.scheme, PowerPolicy::FixedPerSatellite),
                vec![(1.0, sum.mean)]
            );
        }
    }

    #[test]
    fn mrt_grows_with_power() {
        let c = quick();
        let s = run_sweep(
            &c,
            SweepVariable::PowerDbw,
            &[-10.0, -5.0, 0.0, 5.0, 10.0],
            &[PowerPolicy::FixedPerSatellite],
            None,
        )
        .unwrap();
        let ys: Vec<f64> = s
            .series(Scheme::MrtLocal, PowerPolicy::FixedPerSatellite)
            .iter()
            .map(|p| p.1)
            .collect();
        assert!(ys.windows(2).all(|w| w[1] > w[0]), "{ys:?}");
        assert!(run_sweep(
            &c,
            SweepVariable::Satellites,
            &[0.5],
            &[PowerPolicy::SplitTotal],
            None
        )
        .is_err());
    }

    #[test]
    fn retrained_sweep_labels_rows() {
        let mut c = parse_config("[run]\neval_samples = 4\nschemes = [\"gnn\", \"mrt\"]\n[train]\nepochs = 1\nsamples_per_epoch = 20\nbatch_size = 10\ntest_samples = 4\n").unwrap();
        c.train.dims = crate::gnn::GnnDims::scaled(4, 32);
        let s = run_sweep_retrained(
            &c,
            SweepVariable::Satellites,
            &[1.0, 2.0],
            &[PowerPolicy::SplitTotal],
        )
        .unwrap();
        assert_eq!(s.rows.len(), 4);
        assert!(s.rows.iter().all(|r| r.training == GnnTraining::PerValue));
        assert!(s.csv.lines().nth(2).unwrap().contains(",per-value,"));
    }

    #[test]
    fn latency_annotations_and_ordering() {
        let c = ExperimentConfig::default();
        let l = run_latency(&c).unwrap();
        let n = c.run.latency_users.len();
        assert_eq!(l.reports.len(), 2 * n);
        for i in 0..n {
            assert!(l.reports[i].2.total_cycles < l.reports[n + i].2.total_cycles);
            let r = &l.reports[i].2;
            assert!((r.total_ms - r.total_cycles as f64 * 10e-6).abs() < 1e-12);
        }
        let first = l.summary_csv.lines().nth(2).unwrap();
        assert!(first.ends_with(",3.863,5.883,7.192,10.504"), "{first}");
    }
}
