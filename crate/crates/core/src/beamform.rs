//! Weighted-sum-rate evaluation and the linear baseline beamformers.
//!
//! User `m` receives `sum_k h_{k,m}^H w_{k,m} s_m` plus interference from the
//! other streams, so its rate is
//!
//! ```text
//! R_m = B log2(1 + |sum_k h_{k,m}^H w_{k,m}|^2
//!                  / (sum_{i != m} |sum_k h_{k,m}^H w_{k,i}|^2 + sigma^2))
//! ```
//!
//! Local schemes see only one satellite's `N x M` channel matrix and spend
//! that satellite's budget `P`. Global schemes stack all satellites into one
//! `NK`-antenna array and spend `K P` in total.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::CTensor3;

/// Largest tolerated condition number of a channel matrix before
/// zero-forcing reports it singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Block powers below this are treated as zero by [`enforce_power`].
pub const ZERO_POWER: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerScope {
    /// Every satellite spends exactly its own budget `P`.
    PerSatellite,
    /// The whole cluster spends `K P`, shared freely.
    Total,
}

/// Beamforming vectors `w_{k,m}` for every satellite and stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub w: CTensor3,
    /// Budget of one satellite in watts.
    pub power_budget: f64,
    pub scope: PowerScope,
}

impl BeamformerSet {
    pub fn new(w: CTensor3, power_budget: f64, scope: PowerScope) -> Self {
        Self {
            w,
            power_budget,
            scope,
        }
    }

    /// Whether the set respects its budget, with relative slack `tol`.
    pub fn satisfies_budget(&self, tol: f64) -> bool {
        let k = self.w.satellites();
        match self.scope {
            PowerScope::PerSatellite => {
                (0..k).all(|kk| self.w.block_power(kk) <= self.power_budget * (1.0 + tol))
            }
            PowerScope::Total => self.w.total_power() <= k as f64 * self.power_budget * (1.0 + tol),
        }
    }
}

/// Per-user rates and their weighted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Rates in bit/s.
    pub per_user_rates: Vec<f64>,
    pub weighted_sum: f64,
    pub weights: Vec<f64>,
    pub bandwidth: f64,
    pub noise_var: f64,
}

impl RateReport {
    /// `seed,scheme,K,M,N,P_dBW,rate_0,..,rate_{M-1},weighted_sum`, rates in bit/s.
    pub fn csv_header(users: usize) -> String {
        let rates: Vec<String> = (0..users).map(|m| format!("rate_{m}")).collect();
        format!("seed,scheme,K,M,N,P_dBW,{},weighted_sum", rates.join(","))
    }

    pub fn csv_row(
        &self,
        seed: u64,
        scheme: Scheme,
        (k, m, n): (usize, usize, usize),
        p_dbw: f64,
    ) -> String {
        let rates: Vec<String> = self.per_user_rates.iter().map(|r| r.to_string()).collect();
        format!(
            "{seed},{},{k},{m},{n},{p_dbw},{},{}",
            scheme.name(),
            rates.join(","),
            self.weighted_sum
        )
    }
}

/// Everything the rate formula needs besides channels and beamformers.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    /// Noise variance `sigma^2` in watts.
    pub noise_var: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    /// Per-user weights; length `M`.
    pub weights: Vec<f64>,
}

impl LinkBudget {
    pub fn unit_weights(noise_var: f64, bandwidth: f64, users: usize) -> Self {
        Self {
            noise_var,
            bandwidth,
            weights: vec![1.0; users],
        }
    }
}

/// Effective gains `a[m][i] = sum_k h_{k,m}^H w_{k,i}`, row-major `M x M`.
pub fn effective_gains(h: &CTensor3, w: &CTensor3) -> Vec<Complex64> {
    let (k, m, _) = h.dims();
    let mut a = vec![Complex64::new(0.0, 0.0); m * m];
    for mm in 0..m {
        for i in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for kk in 0..k {
                acc += h
                    .vector(kk, mm)
                    .iter()
                    .zip(w.vector(kk, i))
                    .map(|(hv, wv)| hv.conj() * wv)
                    .sum::<Complex64>();
            }
            a[mm * m + i] = acc;
        }
    }
    a
}

/// Per-user SINR values.
pub fn sinr(h: &CTensor3, w: &CTensor3, noise_var: f64) -> Vec<f64> {
    let m = h.users();
    let a = effective_gains(h, w);
    (0..m)
        .map(|mm| {
            let signal = a[mm * m + mm].norm_sqr();
            let interference: f64 = (0..m)
                .filter(|&i| i != mm)
                .map(|i| a[mm * m + i].norm_sqr())
                .sum();
            signal / (interference + noise_var)
        })
        .collect()
}

/// Weighted sum rate of beamformers `w` over channel `h`.
pub fn wsr(h: &CTensor3, w: &BeamformerSet, budget: &LinkBudget) -> Result<RateReport> {
    if h.dims() != w.w.dims() {
        return Err(Error::invalid(format!(
            "channel shape {:?} does not match beamformer shape {:?}",
            h.dims(),
            w.w.dims()
        )));
    }
    if budget.weights.len() != h.users() {
        return Err(Error::invalid(format!(
            "{} weights for {} users",
            budget.weights.len(),
            h.users()
        )));
    }
    if !(budget.noise_var > 0.0) || !(budget.bandwidth > 0.0) {
        return Err(Error::invalid(
            "noise variance and bandwidth must be positive",
        ));
    }
    let per_user_rates: Vec<f64> = sinr(h, &w.w, budget.noise_var)
        .into_iter()
        .map(|s| budget.bandwidth * (1.0 + s).log2())
        .collect();
    let weighted_sum = per_user_rates
        .iter()
        .zip(&budget.weights)
        .map(|(r, wt)| r * wt)
        .sum();
    Ok(RateReport {
        per_user_rates,
        weighted_sum,
        weights: budget.weights.clone(),
        bandwidth: budget.bandwidth,
        noise_var: budget.noise_var,
    })
}

/// Scale beamformers so that each satellite (or the whole set) spends
/// exactly its budget. Blocks whose power is below [`ZERO_POWER`] become
/// zero.
pub fn enforce_power(w: &CTensor3, power: f64, scope: PowerScope) -> BeamformerSet {
    let mut out = w.clone();
    match scope {
        PowerScope::PerSatellite => {
            for k in 0..out.satellites() {
                let current = out.block_power(k);
                let gain = if current < ZERO_POWER {
                    0.0
                } else {
                    (power / current).sqrt()
                };
                out.block_mut(k).iter_mut().for_each(|z| *z *= gain);
            }
        }
        PowerScope::Total => {
            let target = power * out.satellites() as f64;
            let current = out.total_power();
            let gain = if current < ZERO_POWER {
                0.0
            } else {
                (target / current).sqrt()
            };
            out.as_mut_slice().iter_mut().for_each(|z| *z *= gain);
        }
    }
    BeamformerSet::new(out, power, scope)
}

/// How zero-forcing columns share the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZfNormalization {
    /// Every stream gets `P / M`.
    #[default]
    EqualStream,
    /// The pseudo-inverse is scaled as a whole to trace `P`.
    Trace,
}

/// Channel matrix `[h_{k,1} ... h_{k,M}]` of one satellite, `N x M`.
fn satellite_matrix(h: &CTensor3, k: usize) -> DMatrix<Complex64> {
    let (_, m, n) = h.dims();
    DMatrix::from_fn(n, m, |row, col| h[(k, col, row)])
}

fn write_columns(w: &mut CTensor3, k: usize, mat: &DMatrix<Complex64>) {
    for col in 0..mat.ncols() {
        let dst = w.vector_mut(k, col);
        for (row, z) in dst.iter_mut().enumerate() {
            *z = mat[(row, col)];
        }
    }
}

/// Right pseudo-inverse `H (H^H H)^{-1}` computed as `Q R^{-H}` from a
/// Householder QR of `H`.
fn right_pseudo_inverse(hmat: &DMatrix<Complex64>, satellite: usize) -> Result<DMatrix<Complex64>> {
    let (rows, cols) = hmat.shape();
    if cols > rows {
        return Err(Error::Singular {
            satellite,
            condition: f64::INFINITY,
        });
    }
    let sv = hmat.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition <= SINGULAR_CONDITION) {
        return Err(Error::Singular {
            satellite,
            condition,
        });
    }
    let qr = hmat.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let identity = DMatrix::<Complex64>::identity(cols, cols);
    let r_inv_h = r
        .adjoint()
        .solve_lower_triangular(&identity)
        .ok_or(Error::Singular {
            satellite,
            condition,
        })?;
    Ok(q * r_inv_h)
}

/// Regularized inverse `H (H^H H + alpha I)^{-1}`, which equals
/// `(H H^H + alpha I)^{-1} H`.
fn regularized_inverse(hmat: &DMatrix<Complex64>, alpha: f64) -> DMatrix<Complex64> {
    let cols = hmat.ncols();
    let gram = hmat.adjoint() * hmat
        + DMatrix::<Complex64>::identity(cols, cols) * Complex64::new(alpha, 0.0);
    match gram.clone().cholesky() {
        Some(ch) => hmat * ch.inverse(),
        // Only reachable for alpha = 0 on a deficient channel.
        None => {
            hmat * gram
                .lu()
                .try_inverse()
                .unwrap_or_else(|| DMatrix::zeros(cols, cols))
        }
    }
}

fn normalize_columns(mat: &mut DMatrix<Complex64>, column_power: f64) {
    for mut col in mat.column_iter_mut() {
        let p: f64 = col.iter().map(|z| z.norm_sqr()).sum();
        let gain = if p < ZERO_POWER {
            0.0
        } else {
            (column_power / p).sqrt()
        };
        col.iter_mut().for_each(|z| *z *= gain);
    }
}

fn scale_to_trace(mat: &mut DMatrix<Complex64>, power: f64) {
    let p: f64 = mat.iter().map(|z| z.norm_sqr()).sum();
    let gain = if p < ZERO_POWER {
        0.0
    } else {
        (power / p).sqrt()
    };
    mat.iter_mut().for_each(|z| *z *= gain);
}

/// Maximum ratio transmission with equal power per stream.
pub fn mrt_local(h: &CTensor3, power: f64) -> BeamformerSet {
    let (k, m, _) = h.dims();
    let mut w = h.clone();
    let stream = (power / m as f64).sqrt();
    for kk in 0..k {
        for mm in 0..m {
            let v = w.vector_mut(kk, mm);
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let gain = if norm * norm < ZERO_POWER {
                0.0
            } else {
                stream / norm
            };
            v.iter_mut().for_each(|z| *z *= gain);
        }
    }
    BeamformerSet::new(w, power, PowerScope::PerSatellite)
}

pub fn zf_local(h: &CTensor3, power: f64) -> Result<BeamformerSet> {
    zf_local_with(h, power, ZfNormalization::EqualStream)
}

/// Zero forcing on each satellite's own channel matrix.
pub fn zf_local_with(h: &CTensor3, power: f64, norm: ZfNormalization) -> Result<BeamformerSet> {
    let (k, m, _) = h.dims();
    let mut w = CTensor3::zeros(k, m, h.antennas());
    for kk in 0..k {
        let mut dirs = right_pseudo_inverse(&satellite_matrix(h, kk), kk)?;
        match norm {
            ZfNormalization::EqualStream => normalize_columns(&mut dirs, power / m as f64),
            ZfNormalization::Trace => scale_to_trace(&mut dirs, power),
        }
        write_columns(&mut w, kk, &dirs);
    }
    Ok(BeamformerSet::new(w, power, PowerScope::PerSatellite))
}

/// Regularized zero forcing with regularizer `M sigma^2 / P` on each
/// satellite, scaled to exactly `P` per satellite.
pub fn mmse_local(h: &CTensor3, power: f64, noise_var: f64) -> BeamformerSet {
    let (k, m, _) = h.dims();
    let alpha = m as f64 * noise_var / power;
    let mut w = CTensor3::zeros(k, m, h.antennas());
    for kk in 0..k {
        let dirs = regularized_inverse(&satellite_matrix(h, kk), alpha);
        write_columns(&mut w, kk, &dirs);
    }
    enforce_power(&w, power, PowerScope::PerSatellite)
}

pub fn zf_global(h: &CTensor3, power: f64) -> Result<BeamformerSet> {
    zf_global_with(h, power, ZfNormalization::EqualStream)
}

/// Zero forcing on the stacked `NK x M` channel with total budget `K P`.
pub fn zf_global_with(h: &CTensor3, power: f64, norm: ZfNormalization) -> Result<BeamformerSet> {
    let k = h.satellites();
    let pooled = h.pooled();
    let total = power * k as f64;
    let w = zf_local_with(&pooled, total, norm)?.w.unpool(k);
    Ok(BeamformerSet::new(w, power, PowerScope::Total))
}

/// Regularized zero forcing on the stacked channel with total budget `K P`.
pub fn mmse_global(h: &CTensor3, power: f64, noise_var: f64) -> BeamformerSet {
    let k = h.satellites();
    let total = power * k as f64;
    let w = mmse_local(&h.pooled(), total, noise_var).w.unpool(k);
    BeamformerSet::new(w, power, PowerScope::Total)
}

/// The baseline and learned schemes by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    MrtLocal,
    ZfLocal,
    MmseLocal,
    ZfGlobal,
    MmseGlobal,
    GnnLocal,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::GnnLocal,
        Scheme::MmseGlobal,
        Scheme::ZfGlobal,
        Scheme::MmseLocal,
        Scheme::ZfLocal,
        Scheme::MrtLocal,
    ];
    pub const BASELINES: [Scheme; 5] = [
        Scheme::MmseGlobal,
        Scheme::ZfGlobal,
        Scheme::MmseLocal,
        Scheme::ZfLocal,
        Scheme::MrtLocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::MrtLocal => "MRT-Local",
            Scheme::ZfLocal => "ZF-Local",
            Scheme::MmseLocal => "MMSE-Local",
            Scheme::ZfGlobal => "ZF-Global",
            Scheme::MmseGlobal => "MMSE-Global",
            Scheme::GnnLocal => "GNN-Local",
        }
    }

    /// Accepts the display name or a short form such as `mrt`, `zf_local`.
    pub fn parse(s: &str) -> Option<Scheme> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        Some(match key.as_str() {
            "mrt" | "mrtlocal" => Scheme::MrtLocal,
            "zf" | "zflocal" => Scheme::ZfLocal,
            "mmse" | "mmselocal" => Scheme::MmseLocal,
            "zfglobal" => Scheme::ZfGlobal,
            "mmseglobal" => Scheme::MmseGlobal,
            "gnn" | "gnnlocal" => Scheme::GnnLocal,
            _ => return None,
        })
    }

    pub fn is_global(self) -> bool {
        matches!(self, Scheme::ZfGlobal | Scheme::MmseGlobal)
    }

    /// Baseline beamformers; `None` for the learned scheme.
    pub fn baseline(
        self,
        h: &CTensor3,
        power: f64,
        noise_var: f64,
    ) -> Option<Result<BeamformerSet>> {
        Some(match self {
            Scheme::MrtLocal => Ok(mrt_local(h, power)),
            Scheme::ZfLocal => zf_local(h, power),
            Scheme::MmseLocal => Ok(mmse_local(h, power, noise_var)),
            Scheme::ZfGlobal => zf_global(h, power),
            Scheme::MmseGlobal => Ok(mmse_global(h, power, noise_var)),
            Scheme::GnnLocal => return None,
        })
    }
}
