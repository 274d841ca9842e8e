//! Unsupervised training of the per-satellite networks.
//!
//! The loss is the negative batch-mean weighted sum rate. Every satellite
//! runs a network on its own channels; the rate couples them, so gradients
//! flow back through all `K` forward passes into the shared parameters (or
//! into each satellite's own set when weights are not tied).

mod adam;
mod backprop;
mod checkpoint;

use std::io::Write;

use ndarray::Array2;

use crate::beamform::{effective_gains, wsr, LinkBudget, ZERO_POWER};
use crate::channel::{
    generate_channel, generate_ensemble, sample_seed, ChannelParams, ChannelRealization,
};
use crate::error::{Error, Result};
use crate::gnn::{embed, init_params, GnnDims, GnnParams, MultiGnn};
use crate::rng;
use crate::tensor::CTensor3;
use crate::Complex64;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

/// The physical scenario: cluster size, budgets and channel statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// `K`.
    pub satellites: usize,
    /// `M`.
    pub users: usize,
    /// `N`.
    pub antennas: usize,
    /// Transmit power of one satellite in watts.
    pub power: f64,
    pub noise_var: f64,
    pub bandwidth: f64,
    /// Per-user rate weights `omega_m`.
    pub weights: Vec<f64>,
    pub channel: ChannelParams,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            satellites: 2,
            users: 4,
            antennas: 4,
            power: 1.0,
            noise_var: 1e-12,
            bandwidth: 50e6,
            weights: vec![1.0; 4],
            channel: ChannelParams::default(),
        }
    }
}

impl SystemConfig {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.satellites, self.users, self.antennas)
    }

    pub fn link_budget(&self) -> LinkBudget {
        LinkBudget {
            noise_var: self.noise_var,
            bandwidth: self.bandwidth,
            weights: self.weights.clone(),
        }
    }

    /// Copy with `K` satellites.
    pub fn with_satellites(&self, k: usize) -> Self {
        Self {
            satellites: k,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.satellites == 0 || self.users == 0 || self.antennas == 0 {
            return Err(Error::invalid(format!(
                "K, M and N must be positive, got {:?}",
                self.dims()
            )));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::invalid(format!(
                "transmit power must be positive, got {}",
                self.power
            )));
        }
        if !(self.noise_var > 0.0) || !(self.bandwidth > 0.0) {
            return Err(Error::invalid(
                "noise variance and bandwidth must be positive",
            ));
        }
        if self.weights.len() != self.users {
            return Err(Error::invalid(format!(
                "{} rate weights for {} users",
                self.weights.len(),
                self.users
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(
                "rate weights must be finite and non-negative",
            ));
        }
        self.channel.validate()
    }

    /// Feature multiplier that brings channel entries to unit RMS.
    pub fn input_scale(&self) -> f64 {
        1.0 / self.channel.mean_entry_power().sqrt()
    }

    pub fn draw(&self, seed: u64) -> Result<ChannelRealization> {
        generate_channel(
            &self.channel,
            self.satellites,
            self.users,
            self.antennas,
            seed,
        )
    }

    pub fn ensemble(&self, base_seed: u64, count: usize) -> Result<Vec<ChannelRealization>> {
        generate_ensemble(&self.channel, self.dims(), base_seed, count)
    }
}

/// Whether satellites share one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sharing {
    #[default]
    Tied,
    PerSatellite,
}

/// Stop once the best test WSR has gained less than `min_gain` (relative)
/// over the last `window` epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub window: usize,
    pub min_gain: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            window: 10,
            min_gain: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub samples_per_epoch: usize,
    pub epochs: usize,
    pub lr0: f64,
    /// Learning-rate factor applied every `decay_every` steps.
    pub decay: f64,
    pub decay_every: u64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub test_samples: usize,
    pub early_stop: Option<EarlyStop>,
    pub sharing: Sharing,
    pub dims: GnnDims,
    pub system: SystemConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 200,
            samples_per_epoch: 10_000,
            epochs: 200,
            lr0: 1e-3,
            decay: 0.995,
            decay_every: 100,
            adam: AdamConfig::default(),
            seed: 0,
            test_samples: 2000,
            early_stop: Some(EarlyStop::default()),
            sharing: Sharing::Tied,
            dims: GnnDims::scaled(4, 8),
            system: SystemConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || !self.samples_per_epoch.is_multiple_of(self.batch_size)
            || self.samples_per_epoch == 0
        {
            return Err(Error::invalid(format!(
                "batch size {} must divide samples per epoch {}",
                self.batch_size, self.samples_per_epoch
            )));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::invalid("initial learning rate must be positive"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) || self.decay_every == 0 {
            return Err(Error::invalid(
                "decay must lie in (0, 1] with a positive period",
            ));
        }
        if self.epochs == 0 || self.test_samples == 0 {
            return Err(Error::invalid("epochs and test samples must be positive"));
        }
        if self.dims.n_antennas != self.system.antennas {
            return Err(Error::invalid(format!(
                "network built for {} antennas, system has {}",
                self.dims.n_antennas, self.system.antennas
            )));
        }
        self.dims.validate()?;
        self.system.validate()
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.samples_per_epoch / self.batch_size
    }

    /// `lr0 * decay^floor(step / decay_every)`.
    pub fn lr_at(&self, step: u64) -> f64 {
        self.lr0 * self.decay.powi((step / self.decay_every) as i32)
    }

    /// Freshly initialized model for this configuration.
    pub fn init_model(&self) -> Result<MultiGnn> {
        let scale = self.system.input_scale();
        let base = rng::derive(self.seed, rng::tag::INIT);
        let count = match self.sharing {
            Sharing::Tied => 1,
            Sharing::PerSatellite => self.system.satellites,
        };
        let sets = (0..count as u64)
            .map(|s| Ok(init_params(self.dims, rng::derive(base, s))?.with_input_scale(scale)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiGnn { sets })
    }
}

/// Satellites served by parameter set `s`.
fn satellites_of(model: &MultiGnn, s: usize, k: usize) -> Vec<usize> {
    if model.is_tied() {
        (0..k).collect()
    } else {
        vec![s]
    }
}

fn check_batch(model: &MultiGnn, batch: &[ChannelRealization], sys: &SystemConfig) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(bad) = batch.iter().find(|r| r.dims() != sys.dims()) {
        return Err(Error::invalid(format!(
            "sample has dims {:?}, system expects {:?}",
            bad.dims(),
            sys.dims()
        )));
    }
    if !model.is_tied() && model.sets.len() != sys.satellites {
        return Err(Error::invalid(format!(
            "{} parameter sets for {} satellites",
            model.sets.len(),
            sys.satellites
        )));
    }
    if model.dims().n_antennas != sys.antennas {
        return Err(Error::invalid(
            "network antenna count does not match the system",
        ));
    }
    Ok(())
}

/// Negative batch-mean WSR through the public per-satellite forward path.
pub fn batch_loss(
    model: &MultiGnn,
    batch: &[ChannelRealization],
    sys: &SystemConfig,
) -> Result<f64> {
    check_batch(model, batch, sys)?;
    let budget = sys.link_budget();
    let mut total = 0.0;
    for sample in batch {
        let w = model.beamformers(&sample.h, sys.power)?;
        total += wsr(&sample.h, &w, &budget)?.weighted_sum;
    }
    Ok(-total / batch.len() as f64)
}

struct BatchPass {
    tapes: Vec<backprop::Tape>,
    /// Normalization gain and raw power per set and graph.
    norms: Vec<Vec<(f64, f64)>>,
    w: Vec<CTensor3>,
}

fn run_batch(
    model: &MultiGnn,
    batch: &[ChannelRealization],
    sys: &SystemConfig,
) -> Result<BatchPass> {
    let (k, m, n) = sys.dims();
    let mut w = vec![CTensor3::zeros(k, m, n); batch.len()];
    let mut tapes = Vec::with_capacity(model.sets.len());
    let mut norms = Vec::with_capacity(model.sets.len());
    for (s, params) in model.sets.iter().enumerate() {
        let sats = satellites_of(model, s, k);
        let mut x0 = Array2::zeros((batch.len() * sats.len() * m, 2 * n));
        for (t, sample) in batch.iter().enumerate() {
            for (slot, &kk) in sats.iter().enumerate() {
                let hk = ndarray::ArrayView2::from_shape((m, n), sample.h.block(kk))
                    .expect("block shape");
                let row = (t * sats.len() + slot) * m;
                x0.slice_mut(ndarray::s![row..row + m, ..])
                    .assign(&embed(hk));
            }
        }
        x0 *= params.input_scale;
        let tape = backprop::forward(params, x0, m)?;
        let mut set_norms = Vec::with_capacity(batch.len() * sats.len());
        for (t, wt) in w.iter_mut().enumerate() {
            for (slot, &kk) in sats.iter().enumerate() {
                let row = (t * sats.len() + slot) * m;
                let raw = tape.out.slice(ndarray::s![row..row + m, ..]);
                let r: f64 = raw.iter().map(|v| v * v).sum();
                let c = if r < ZERO_POWER {
                    0.0
                } else {
                    (sys.power / r).sqrt()
                };
                for i in 0..m {
                    let dst = wt.vector_mut(kk, i);
                    for (nn, z) in dst.iter_mut().enumerate() {
                        *z = Complex64::new(c * raw[(i, nn)], c * raw[(i, n + nn)]);
                    }
                }
                set_norms.push((c, r));
            }
        }
        tapes.push(tape);
        norms.push(set_norms);
    }
    Ok(BatchPass { tapes, norms, w })
}

/// WSR of one sample and its gradient with respect to the beamformers, as
/// `dR/dRe w + j dR/dIm w`.
fn wsr_gradient(h: &CTensor3, w: &CTensor3, sys: &SystemConfig) -> (f64, CTensor3) {
    let (k, m, n) = h.dims();
    let a = effective_gains(h, w);
    let scale = sys.bandwidth / std::f64::consts::LN_2;
    let mut total = 0.0;
    // dWSR / da, same conjugate convention as above.
    let mut g_a = vec![Complex64::new(0.0, 0.0); m * m];
    for mm in 0..m {
        let row = &a[mm * m..(mm + 1) * m];
        let all: f64 = row.iter().map(|z| z.norm_sqr()).sum::<f64>() + sys.noise_var;
        let rest = all - row[mm].norm_sqr();
        let omega = sys.weights[mm];
        total += omega * sys.bandwidth * (all / rest).log2();
        for i in 0..m {
            let d = if i == mm {
                1.0 / all
            } else {
                1.0 / all - 1.0 / rest
            };
            g_a[mm * m + i] = row[i] * (2.0 * omega * scale * d);
        }
    }
    let mut g_w = CTensor3::zeros(k, m, n);
    for kk in 0..k {
        for i in 0..m {
            for mm in 0..m {
                let ga = g_a[mm * m + i];
                let hv = h.vector(kk, mm);
                for (dst, &hz) in g_w.vector_mut(kk, i).iter_mut().zip(hv) {
                    *dst += ga * hz;
                }
            }
        }
    }
    (total, g_w)
}

/// Gradients of [`batch_loss`] with respect to every parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub sets: Vec<GnnParams>,
    pub loss: f64,
    /// WSR of each sample in bit/s.
    pub sample_wsr: Vec<f64>,
}

impl GradientSet {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
            && self
                .sets
                .iter()
                .all(|p| p.layers.iter().all(|l| l.is_finite()))
    }
}

/// Exact reverse-mode gradient of the negative batch-mean WSR.
pub fn gradients(
    model: &MultiGnn,
    batch: &[ChannelRealization],
    sys: &SystemConfig,
) -> Result<GradientSet> {
    check_batch(model, batch, sys)?;
    let (k, m, n) = sys.dims();
    let pass = run_batch(model, batch, sys)?;
    let inv_t = 1.0 / batch.len() as f64;
    let mut sample_wsr = Vec::with_capacity(batch.len());
    let mut g_w = Vec::with_capacity(batch.len());
    for (sample, w) in batch.iter().zip(&pass.w) {
        let (r, g) = wsr_gradient(&sample.h, w, sys);
        sample_wsr.push(r);
        g_w.push(g);
    }
    let loss = -sample_wsr.iter().sum::<f64>() * inv_t;

    let mut sets = Vec::with_capacity(model.sets.len());
    for (s, params) in model.sets.iter().enumerate() {
        let sats = satellites_of(model, s, k);
        let tape = &pass.tapes[s];
        let mut g_out = Array2::zeros((tape.rows(), 2 * n));
        for (t, gw) in g_w.iter().enumerate() {
            for (slot, &kk) in sats.iter().enumerate() {
                let graph = t * sats.len() + slot;
                let (c, r) = pass.norms[s][graph];
                if r < ZERO_POWER {
                    continue;
                }
                let row = graph * m;
                let raw = tape.out.slice(ndarray::s![row..row + m, ..]);
                // Loss gradient at the normalized output, real layout.
                let mut g = Array2::zeros((m, 2 * n));
                for i in 0..m {
                    for (nn, z) in gw.vector(kk, i).iter().enumerate() {
                        g[(i, nn)] = -inv_t * z.re;
                        g[(i, n + nn)] = -inv_t * z.im;
                    }
                }
                // d(c o)/do with c = sqrt(P / |o|^2).
                let proj: f64 = raw.iter().zip(g.iter()).map(|(o, gv)| o * gv).sum();
                let mut dst = g_out.slice_mut(ndarray::s![row..row + m, ..]);
                ndarray::Zip::from(&mut dst)
                    .and(&g)
                    .and(raw)
                    .for_each(|d, &gv, &o| *d = c * (gv - o * proj / r));
            }
        }
        let mut grads = params.zeros_like();
        backprop::backward(params, tape, g_out, &mut grads);
        sets.push(grads);
    }
    Ok(GradientSet {
        sets,
        loss,
        sample_wsr,
    })
}

/// Per-sample WSR in bit/s, computed with the batched forward pass.
pub fn evaluate(
    model: &MultiGnn,
    ensemble: &[ChannelRealization],
    sys: &SystemConfig,
) -> Result<Vec<f64>> {
    check_batch(model, ensemble, sys)?;
    let budget = sys.link_budget();
    let mut out = Vec::with_capacity(ensemble.len());
    for chunk in ensemble.chunks(500) {
        let pass = run_batch(model, chunk, sys)?;
        for (sample, w) in chunk.iter().zip(pass.w) {
            let set = crate::beamform::BeamformerSet::new(
                w,
                sys.power,
                crate::beamform::PowerScope::PerSatellite,
            );
            out.push(wsr(&sample.h, &set, &budget)?.weighted_sum);
        }
    }
    Ok(out)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// One line of training history. WSR values in bit/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    /// Mean batch WSR over the epoch, measured before each update.
    pub train_wsr: f64,
    /// Standard error of `train_wsr` across the epoch's batches.
    pub train_wsr_stderr: f64,
    pub test_wsr: f64,
}

/// Optimizer position, enough to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub adam: AdamState,
    pub step: u64,
    /// Training samples drawn so far; sample `i` uses seed
    /// `sample_seed(derive(seed, TRAIN), i)`, so this is the whole RNG state.
    pub samples_seen: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best test WSR.
    pub best: MultiGnn,
    pub best_epoch: usize,
    pub last: MultiGnn,
    pub state: TrainState,
    pub history: Vec<EpochRecord>,
}

/// Train from scratch.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let sys = &cfg.system;
    let mut model = cfg.init_model()?;
    let mut state = TrainState {
        adam: AdamState::new(&model),
        step: 0,
        samples_seen: 0,
    };
    let train_base = rng::derive(cfg.seed, rng::tag::TRAIN);
    let test = sys.ensemble(rng::derive(cfg.seed, rng::tag::TEST), cfg.test_samples)?;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::NEG_INFINITY, model.clone(), 0);
    let mut best_so_far = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let lr_first = cfg.lr_at(state.step);
        let mut batch_wsr = Vec::with_capacity(cfg.steps_per_epoch());
        for _ in 0..cfg.steps_per_epoch() {
            let batch = (0..cfg.batch_size as u64)
                .map(|i| sys.draw(sample_seed(train_base, state.samples_seen + i)))
                .collect::<Result<Vec<_>>>()?;
            let diverged = |model: &MultiGnn, step| Error::Diverged {
                step,
                last_good: Box::new(model.sets.clone()),
            };
            let grads = match gradients(&model, &batch, sys) {
                Ok(g) if g.is_finite() => g,
                Ok(_) | Err(Error::NonFinite { .. }) => return Err(diverged(&model, state.step)),
                Err(e) => return Err(e),
            };
            adam_step(
                &mut model,
                &grads.sets,
                &mut state.adam,
                cfg.lr_at(state.step),
                &cfg.adam,
            )?;
            state.step += 1;
            state.samples_seen += cfg.batch_size as u64;
            batch_wsr.push(-grads.loss);
        }
        let test_wsr = match evaluate(&model, &test, sys) {
            Ok(v) => mean(&v),
            Err(Error::NonFinite { .. }) => f64::NAN,
            Err(e) => return Err(e),
        };
        if !test_wsr.is_finite() {
            return Err(Error::Diverged {
                step: state.step,
                last_good: Box::new(best.1.sets),
            });
        }
        let train_wsr = mean(&batch_wsr);
        let spread = batch_wsr
            .iter()
            .map(|v| (v - train_wsr).powi(2))
            .sum::<f64>()
            / batch_wsr.len().max(2) as f64;
        let rec = EpochRecord {
            epoch,
            lr: lr_first,
            train_wsr,
            train_wsr_stderr: (spread / batch_wsr.len() as f64).sqrt(),
            test_wsr,
        };
        log::info!(
            "epoch {epoch:4}  lr {:.3e}  train {:.3} Mbit/s  test {:.3} Mbit/s",
            rec.lr,
            rec.train_wsr / 1e6,
            rec.test_wsr / 1e6
        );
        history.push(rec);
        if test_wsr > best.0 {
            best = (test_wsr, model.clone(), epoch);
        }
        best_so_far.push(best.0);
        if let Some(stop) = cfg.early_stop {
            if epoch > stop.window
                && best.0 < best_so_far[epoch - 1 - stop.window] * (1.0 + stop.min_gain)
            {
                log::info!(
                    "test WSR gained < {:.2}% over {} epochs, stopping",
                    stop.min_gain * 100.0,
                    stop.window
                );
                break;
            }
        }
    }
    Ok(TrainOutcome {
        best: best.1,
        best_epoch: best.2,
        last: model,
        state,
        history,
    })
}

/// History as CSV: `epoch,lr,train_wsr,test_wsr` with WSR in Mbit/s.
pub fn write_history_csv<W: Write>(mut out: W, history: &[EpochRecord]) -> Result<()> {
    writeln!(out, "epoch,lr,train_wsr,test_wsr")?;
    for r in history {
        writeln!(
            out,
            "{},{:e},{:.6},{:.6}",
            r.epoch,
            r.lr,
            r.train_wsr / 1e6,
            r.test_wsr / 1e6
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        let system = SystemConfig {
            satellites: 2,
            users: 2,
            antennas: 2,
            weights: vec![1.0; 2],
            ..Default::default()
        };
        TrainConfig {
            batch_size: 8,
            samples_per_epoch: 16,
            epochs: 3,
            test_samples: 16,
            dims: GnnDims::scaled(2, 32),
            system,
            ..Default::default()
        }
    }

    #[test]
    fn lr_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 1e-3);
        assert_eq!(c.lr_at(99), 1e-3);
        assert!((c.lr_at(100) - 0.000995).abs() < 1e-18);
        assert!((c.lr_at(1000) - 1e-3 * 0.995f64.powi(10)).abs() < 1e-18);
    }

    #[test]
    fn config_guards() {
        let mut c = small();
        c.batch_size = 5;
        assert!(c.validate().is_err());
        let mut c = small();
        c.decay = 0.0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.lr0 = -1.0;
        assert!(c.validate().is_err());
        assert!(small().validate().is_ok());
    }

    #[test]
    fn loss_of_one_sample_is_negative_wsr() {
        let c = small();
        let model = c.init_model().unwrap();
        let s = c.system.draw(11).unwrap();
        let w = model.beamformers(&s.h, c.system.power).unwrap();
        let r = wsr(&s.h, &w, &c.system.link_budget()).unwrap();
        assert_eq!(
            batch_loss(&model, std::slice::from_ref(&s), &c.system).unwrap(),
            -r.weighted_sum
        );
        let mut doubled = c.system.clone();
        doubled.weights = vec![2.0; 2];
        let l2 = batch_loss(&model, std::slice::from_ref(&s), &doubled).unwrap();
        assert!((l2 + 2.0 * r.weighted_sum).abs() <= 1e-12 * r.weighted_sum);
    }

    #[test]
    fn batched_loss_agrees_with_public_path() {
        let c = small();
        let model = c.init_model().unwrap();
        let batch = c.system.ensemble(3, 6).unwrap();
        let g = gradients(&model, &batch, &c.system).unwrap();
        let l = batch_loss(&model, &batch, &c.system).unwrap();
        assert!((g.loss - l).abs() <= 1e-12 * l.abs());
        let e = evaluate(&model, &batch, &c.system).unwrap();
        assert!((mean(&e) + l).abs() <= 1e-12 * l.abs());
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let mut c = small();
        c.system.weights = vec![0.0; 2];
        let model = c.init_model().unwrap();
        let batch = c.system.ensemble(5, 3).unwrap();
        let g = gradients(&model, &batch, &c.system).unwrap();
        assert!(g.sets[0].flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_unit_gets_no_gradient() {
        let c = small();
        let mut model = c.init_model().unwrap();
        model.sets[0].layers[0].bias[3] = -1e9;
        let batch = c.system.ensemble(5, 4).unwrap();
        let g = gradients(&model, &batch, &c.system).unwrap();
        let l0 = &g.sets[0].layers[0];
        assert_eq!(l0.bias[3], 0.0);
        assert!(l0.weight.column(3).iter().all(|&v| v == 0.0));
        assert!(l0.weight.column(2).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn tied_gradient_is_sum_of_satellite_parts() {
        let c = small();
        let tied = c.init_model().unwrap();
        let split = MultiGnn {
            sets: vec![tied.sets[0].clone(), tied.sets[0].clone()],
        };
        let batch = c.system.ensemble(9, 4).unwrap();
        let gt = gradients(&tied, &batch, &c.system).unwrap();
        let gs = gradients(&split, &batch, &c.system).unwrap();
        assert_eq!(gt.sets.len(), 1);
        let mut sum = gs.sets[0].clone();
        sum.add_scaled(&gs.sets[1], 1.0);
        let scale = gt.sets[0].flat().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in gt.sets[0].flat().iter().zip(sum.flat()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut c = small();
        c.early_stop = None;
        let a = train(&c).unwrap();
        let b = train(&c).unwrap();
        assert_eq!(a.history.len(), 3);
        assert_eq!(a.history, b.history);
        assert_eq!(a.best, b.best);
        assert_eq!(a.state.step, 6);
        let rec = a.history[a.best_epoch - 1];
        assert!(a.history.iter().all(|r| r.test_wsr <= rec.test_wsr));
        let mut csv = Vec::new();
        write_history_csv(&mut csv, &a.history).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn per_satellite_sharing_trains_k_sets() {
        let mut c = small();
        c.sharing = Sharing::PerSatellite;
        c.epochs = 1;
        let out = train(&c).unwrap();
        assert_eq!(out.best.sets.len(), 2);
        assert_ne!(out.last.sets[0], out.last.sets[1]);
    }
}
