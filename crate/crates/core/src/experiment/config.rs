//! Experiment configuration in TOML.
//!
//! Every key is optional; absent keys take the reference scenario values
//! and are listed in one log notice. Decibel quantities are converted at
//! load time:
//!
//! ```text
//! P [W]       = 10^(P_dBW / 10)
//! sigma^2 [W] = 10^((sigma2_dBm - 30) / 10)
//! b_max       = 10^(b_max_dBi / 10)
//! ```

use std::fmt::Debug;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::accel::AcceleratorConfig;
use crate::beamform::Scheme;
use crate::channel::{ChannelParams, FadingParams};
use crate::error::{Error, Result};
use crate::gnn::GnnDims;
use crate::train::{AdamConfig, EarlyStop, Sharing, SystemConfig, TrainConfig};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    system: Option<RawSystem>,
    fading: Option<RawFading>,
    gnn: Option<RawGnn>,
    train: Option<RawTrain>,
    accel: Option<RawAccel>,
    run: Option<RawRun>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(rename = "K")]
    k: Option<usize>,
    #[serde(rename = "M")]
    m: Option<usize>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "P_dBW")]
    p_dbw: Option<f64>,
    #[serde(rename = "sigma2_dBm")]
    sigma2_dbm: Option<f64>,
    #[serde(rename = "B_Hz")]
    bandwidth: Option<f64>,
    omega: Option<Vec<f64>>,
    phi_deg: Option<f64>,
    #[serde(rename = "phi_3dB_deg")]
    phi_3db_deg: Option<f64>,
    #[serde(rename = "b_max_dBi")]
    b_max_dbi: Option<f64>,
    d0_km: Option<f64>,
    dh_km: Option<f64>,
    #[serde(rename = "carrier_GHz")]
    carrier_ghz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFading {
    b: Option<f64>,
    m: Option<f64>,
    omega: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGnn {
    scale_factor: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    batch_size: Option<usize>,
    samples_per_epoch: Option<usize>,
    epochs: Option<usize>,
    lr0: Option<f64>,
    decay: Option<f64>,
    decay_every: Option<u64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
    test_samples: Option<usize>,
    early_stop: Option<bool>,
    early_stop_window: Option<usize>,
    early_stop_min_gain: Option<f64>,
    sharing: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAccel {
    sa_size: Option<usize>,
    bus_bytes_per_cycle: Option<usize>,
    clock_period_ns: Option<f64>,
    tile_m: Option<usize>,
    tile_k: Option<usize>,
    tile_n: Option<usize>,
    bits: Option<u32>,
    scale_factor: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    schemes: Option<Vec<String>>,
    eval_samples: Option<usize>,
    quant_samples: Option<usize>,
    latency_users: Option<Vec<usize>>,
    #[serde(rename = "sweep_P_dBW")]
    sweep_p_dbw: Option<Vec<f64>>,
    #[serde(rename = "sweep_K")]
    sweep_k: Option<Vec<usize>>,
}

/// Settings that steer the experiment runners rather than the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory from the file; the command line and environment
    /// take precedence.
    pub out_dir: Option<PathBuf>,
    /// Checkpoint path; defaults to `model.ck` in the output directory.
    pub checkpoint: Option<PathBuf>,
    pub schemes: Vec<Scheme>,
    pub eval_samples: usize,
    pub quant_samples: usize,
    pub latency_users: Vec<usize>,
    pub sweep_p_dbw: Vec<f64>,
    pub sweep_k: Vec<usize>,
}

/// Fully resolved configuration with linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Holds the system, network dims and optimizer settings.
    pub train: TrainConfig,
    pub accel: AcceleratorConfig,
    /// Width divisor of the network whose latency is modeled.
    pub accel_scale_factor: usize,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn system(&self) -> &SystemConfig {
        &self.train.system
    }

    /// Transmit power per satellite in dBW.
    pub fn p_dbw(&self) -> f64 {
        linear_to_db(self.train.system.power)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.run.seed = seed;
        self.train.seed = seed;
    }

    /// SHA-256 over everything that shapes an artifact (all settings but
    /// the output location), hex encoded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.out_dir = None;
        c.run.checkpoint = None;
        let digest = Sha256::digest(format!("{c:?}").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn latency_dims(&self) -> GnnDims {
        GnnDims::scaled(self.train.system.antennas, self.accel_scale_factor)
    }
}

struct Resolver {
    defaulted: Vec<String>,
}

impl Resolver {
    fn get<T>(&mut self, key: &str, value: Option<T>, default: T) -> T {
        value.unwrap_or_else(|| {
            self.defaulted.push(key.to_string());
            default
        })
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn positive<T: PartialOrd + Default + Copy + Debug>(key: &str, v: T) -> Result<T> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v:?}")))
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawFile = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let mut r = Resolver {
        defaulted: Vec::new(),
    };
    let table = ChannelParams::default();
    let fading_default = FadingParams::default();

    let s = raw.system.unwrap_or_default();
    let k = positive("system.K", r.get("system.K", s.k, 2))?;
    let m = positive("system.M", r.get("system.M", s.m, 4))?;
    let n = positive("system.N", r.get("system.N", s.n, 4))?;
    let p_dbw = r.get("system.P_dBW", s.p_dbw, 0.0);
    let sigma2_dbm = r.get("system.sigma2_dBm", s.sigma2_dbm, -90.0);
    let bandwidth = positive("system.B_Hz", r.get("system.B_Hz", s.bandwidth, 50e6))?;
    let weights = r.get("system.omega", s.omega, vec![1.0; m]);
    if weights.len() != m {
        return Err(Error::config(
            "system.omega",
            format!("needs {m} entries, got {}", weights.len()),
        ));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::config(
            "system.omega",
            "weights must be finite and non-negative",
        ));
    }
    let phi = r.get("system.phi_deg", s.phi_deg, 0.01).to_radians();
    let phi_3db = r.get("system.phi_3dB_deg", s.phi_3db_deg, 0.4).to_radians();
    let b_max = db_to_linear(r.get("system.b_max_dBi", s.b_max_dbi, 52.0));
    let d0 = positive("system.d0_km", r.get("system.d0_km", s.d0_km, 600.0))? * 1e3;
    let dh = r.get("system.dh_km", s.dh_km, 0.0) * 1e3;
    let carrier = positive(
        "system.carrier_GHz",
        r.get("system.carrier_GHz", s.carrier_ghz, 20.0),
    )? * 1e9;

    let f = raw.fading.unwrap_or_default();
    let fading = FadingParams::new(
        r.get("fading.b", f.b, fading_default.b),
        r.get("fading.m", f.m, fading_default.m),
        r.get("fading.omega", f.omega, fading_default.omega),
    );
    fading.validate().map_err(|e| Error::config("fading", e))?;

    let channel = ChannelParams {
        d0,
        dh,
        carrier_freq: carrier,
        b_max,
        phi,
        phi_3db,
        fading,
        ..table
    };
    channel.validate().map_err(|e| Error::config("system", e))?;
    let system = SystemConfig {
        satellites: k,
        users: m,
        antennas: n,
        power: db_to_linear(p_dbw),
        noise_var: dbm_to_watts(sigma2_dbm),
        bandwidth,
        weights,
        channel,
    };

    let g = raw.gnn.unwrap_or_default();
    let scale_factor = positive(
        "gnn.scale_factor",
        r.get("gnn.scale_factor", g.scale_factor, 8),
    )?;
    let dims = GnnDims::scaled(n, scale_factor);

    let rn = raw.run.unwrap_or_default();
    let seed = r.get("run.seed", rn.seed, 0);

    let t = raw.train.unwrap_or_default();
    let base = TrainConfig::default();
    let sharing = match r.get("train.sharing", t.sharing, "tied".into()).as_str() {
        "tied" => Sharing::Tied,
        "per-satellite" | "per_satellite" => Sharing::PerSatellite,
        other => {
            return Err(Error::config(
                "train.sharing",
                format!("expected `tied` or `per-satellite`, got `{other}`"),
            ))
        }
    };
    let early = r.get("train.early_stop", t.early_stop, true);
    let stop_default = EarlyStop::default();
    let early_stop = EarlyStop {
        window: r.get(
            "train.early_stop_window",
            t.early_stop_window,
            stop_default.window,
        ),
        min_gain: r.get(
            "train.early_stop_min_gain",
            t.early_stop_min_gain,
            stop_default.min_gain,
        ),
    };
    let train = TrainConfig {
        batch_size: r.get("train.batch_size", t.batch_size, base.batch_size),
        samples_per_epoch: r.get(
            "train.samples_per_epoch",
            t.samples_per_epoch,
            base.samples_per_epoch,
        ),
        epochs: r.get("train.epochs", t.epochs, base.epochs),
        lr0: r.get("train.lr0", t.lr0, base.lr0),
        decay: r.get("train.decay", t.decay, base.decay),
        decay_every: r.get("train.decay_every", t.decay_every, base.decay_every),
        adam: AdamConfig {
            beta1: r.get("train.beta1", t.beta1, base.adam.beta1),
            beta2: r.get("train.beta2", t.beta2, base.adam.beta2),
            eps: r.get("train.eps", t.eps, base.adam.eps),
        },
        seed,
        test_samples: r.get("train.test_samples", t.test_samples, base.test_samples),
        early_stop: early.then_some(early_stop),
        sharing,
        dims,
        system,
    };
    train.validate().map_err(|e| Error::config("train", e))?;

    let a = raw.accel.unwrap_or_default();
    let ad = AcceleratorConfig::default();
    let accel = AcceleratorConfig {
        sa_size: r.get("accel.sa_size", a.sa_size, ad.sa_size),
        bus_bytes_per_cycle: r.get(
            "accel.bus_bytes_per_cycle",
            a.bus_bytes_per_cycle,
            ad.bus_bytes_per_cycle,
        ),
        clock_period_ns: r.get(
            "accel.clock_period_ns",
            a.clock_period_ns,
            ad.clock_period_ns,
        ),
        tile_m: r.get("accel.tile_m", a.tile_m, ad.tile_m),
        tile_k: r.get("accel.tile_k", a.tile_k, ad.tile_k),
        tile_n: r.get("accel.tile_n", a.tile_n, ad.tile_n),
        bits: r.get("accel.bits", a.bits, ad.bits),
    };
    accel.validate().map_err(|e| Error::config("accel", e))?;
    let accel_scale_factor = positive(
        "accel.scale_factor",
        r.get("accel.scale_factor", a.scale_factor, 1),
    )?;

    let schemes = match rn.schemes {
        Some(names) => names
            .iter()
            .map(|s| {
                Scheme::parse(s)
                    .ok_or_else(|| Error::config("run.schemes", format!("unknown scheme `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => {
            r.defaulted.push("run.schemes".into());
            Scheme::ALL.to_vec()
        }
    };
    let run = RunConfig {
        seed,
        out_dir: rn.out_dir,
        checkpoint: rn.checkpoint,
        schemes,
        eval_samples: positive(
            "run.eval_samples",
            r.get("run.eval_samples", rn.eval_samples, 2000),
        )?,
        quant_samples: positive(
            "run.quant_samples",
            r.get("run.quant_samples", rn.quant_samples, 500),
        )?,
        latency_users: r.get("run.latency_users", rn.latency_users, vec![1, 2, 4, 8, 16]),
        sweep_p_dbw: r.get(
            "run.sweep_P_dBW",
            rn.sweep_p_dbw,
            vec![-10.0, -5.0, 0.0, 5.0, 10.0],
        ),
        sweep_k: r.get("run.sweep_K", rn.sweep_k, vec![1, 2, 3, 4]),
    };
    if run.latency_users.contains(&0) {
        return Err(Error::config(
            "run.latency_users",
            "user counts must be positive",
        ));
    }
    if run.sweep_k.contains(&0) {
        return Err(Error::config(
            "run.sweep_K",
            "satellite counts must be positive",
        ));
    }
    if !r.defaulted.is_empty() {
        log::info!("using reference defaults for {}", r.defaulted.join(", "));
    }
    Ok(ExperimentConfig {
        train,
        accel,
        accel_scale_factor,
        run,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_scenario() {
        let c = parse_config("").unwrap();
        let s = c.system();
        assert_eq!(s.dims(), (2, 4, 4));
        assert_eq!(s.power, 1.0);
        assert!((s.noise_var - 1e-12).abs() < 1e-24);
        assert_eq!(s.bandwidth, 50e6);
        assert_eq!(s.weights, vec![1.0; 4]);
        assert_eq!(s.channel.d0, 600e3);
        assert_eq!(s.channel.carrier_freq, 20e9);
        assert!((s.channel.b_max - 10f64.powf(5.2)).abs() < 1e-6);
        assert!((s.channel.phi - 0.01f64.to_radians()).abs() < 1e-15);
        assert!((s.channel.phi_3db - 0.4f64.to_radians()).abs() < 1e-15);
        assert_eq!(s.channel.fading, FadingParams::new(0.063, 2.0, 8.97e-4));
        assert_eq!(c.train.dims, GnnDims::scaled(4, 8));
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn zero_satellites_names_key() {
        let e = parse_config("[system]\nK = 0\n").unwrap_err();
        assert!(e.to_string().contains("system.K"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn power_in_dbw() {
        let c = parse_config("[system]\nP_dBW = 10\n").unwrap();
        assert!((c.system().power - 10.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_and_syntax_errors_carry_lines() {
        match parse_config("[system]\nK = 2\nbogus = 1\n").unwrap_err() {
            Error::Config { line, message } => {
                assert_eq!(line, Some(3));
                assert!(message.contains("bogus"), "{message}");
            }
            e => panic!("{e:?}"),
        }
        match parse_config("[train]\nepochs = 3\nlr0 = = 1\n").unwrap_err() {
            Error::Config { line, .. } => assert_eq!(line, Some(3)),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn db_round_trips() {
        for x in [-90.0, -10.0, 0.0, 3.0, 52.0] {
            assert!((linear_to_db(db_to_linear(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
            assert!((watts_to_dbm(dbm_to_watts(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.run.out_dir = Some("/elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.set_seed(9);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(parse_config("[system]\nomega = [1.0]\n").is_err());
        assert!(parse_config("[run]\nschemes = [\"nope\"]\n").is_err());
        assert!(parse_config("[accel]\nbits = 12\n").is_err());
        assert!(parse_config("[train]\nsharing = \"half\"\n").is_err());
        let c = parse_config("[run]\nschemes = [\"mrt\", \"zf_local\"]\n").unwrap();
        assert_eq!(c.run.schemes, vec![Scheme::MrtLocal, Scheme::ZfLocal]);
    }
}
