//! Satellite-to-ground channel synthesis.
//!
//! Each link is `h = C_L * sqrt(b(phi)) * h~` where `C_L` is the free-space
//! path-loss coefficient, `b(phi)` the Bessel beam pattern and `h~` a
//! Shadowed-Rician fading draw: a Rayleigh scatter term `A exp(j psi)` plus a
//! Nakagami-m line-of-sight term `Z exp(j phi_los)`.
//!
//! The scalar model is applied independently to every antenna element.
//!
//! # Ensemble file formats
//!
//! Binary (`.smch`, little endian):
//!
//! ```text
//! magic  b"SMCH"   version u32 = 1
//! K u32, M u32, N u32, count u64
//! count x { seed u64, K*M*N x (re f64, im f64) }   // k-major, then m, then n
//! ```
//!
//! CSV: a `# spacemimo channel ensemble v1 K=.. M=.. N=..` comment line, a
//! header `seed,re_0_0_0,im_0_0_0,...` and one row per realization with the
//! entries in the same k, m, n order, real and imaginary parts interleaved.

use std::f64::consts::PI;
use std::io::{BufRead, Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::CTensor3;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Constant placing `u` at the -3 dB point of the beam pattern.
pub const BEAM_U_CONSTANT: f64 = 2.07123;

/// Shadowed-Rician parameters `(b, m, Omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingParams {
    /// Half the average scatter power, `E[A^2] = 2b`.
    pub b: f64,
    /// Nakagami shape of the LOS amplitude.
    pub m: f64,
    /// Average LOS power, `E[Z^2] = Omega`.
    pub omega: f64,
}

impl FadingParams {
    pub const fn new(b: f64, m: f64, omega: f64) -> Self {
        Self { b, m, omega }
    }

    /// Mean power of one fading draw, `E|h~|^2 = 2b + Omega` when the LOS
    /// phase is zero.
    pub fn mean_power(&self) -> f64 {
        2.0 * self.b + self.omega
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(Error::invalid(format!(
                "fading b must be >= 0, got {}",
                self.b
            )));
        }
        if !(self.m >= 0.5 && self.m.is_finite()) {
            return Err(Error::invalid(format!(
                "fading m must be >= 0.5, got {}",
                self.m
            )));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::invalid(format!(
                "fading omega must be >= 0, got {}",
                self.omega
            )));
        }
        Ok(())
    }
}

impl Default for FadingParams {
    fn default() -> Self {
        Self::new(0.063, 2.0, 8.97e-4)
    }
}

/// Support of the stationary scatter phase `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScatterPhase {
    /// Uniform on `[0, pi)`.
    #[default]
    HalfTurn,
    /// Uniform on `[0, 2 pi)`.
    FullTurn,
}

impl ScatterPhase {
    fn span(self) -> f64 {
        match self {
            ScatterPhase::HalfTurn => PI,
            ScatterPhase::FullTurn => 2.0 * PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Satellite altitude in meters.
    pub d0: f64,
    /// Distance between the coverage center and the beam center in meters.
    pub dh: f64,
    pub carrier_freq: f64,
    /// Peak antenna gain, linear.
    pub b_max: f64,
    /// Beam angle in radians, applied to every user unless `per_user_phi`
    /// is set.
    pub phi: f64,
    pub phi_3db: f64,
    pub fading: FadingParams,
    /// Deterministic LOS phase in radians.
    pub phase_phi: f64,
    pub scatter_phase: ScatterPhase,
    pub per_user_phi: Option<Vec<f64>>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            d0: 600e3,
            dh: 0.0,
            carrier_freq: 20e9,
            b_max: 10f64.powf(5.2),
            phi: 0.01f64.to_radians(),
            phi_3db: 0.4f64.to_radians(),
            fading: FadingParams::default(),
            phase_phi: 0.0,
            scatter_phase: ScatterPhase::HalfTurn,
            per_user_phi: None,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) {
            return Err(Error::invalid(format!(
                "d0 must be positive, got {}",
                self.d0
            )));
        }
        if !(self.dh >= 0.0) {
            return Err(Error::invalid(format!("dh must be >= 0, got {}", self.dh)));
        }
        if !(self.carrier_freq > 0.0) {
            return Err(Error::invalid("carrier frequency must be positive"));
        }
        if !(self.b_max > 0.0) {
            return Err(Error::invalid("b_max must be positive"));
        }
        if !(self.phi_3db > 0.0 && self.phi_3db < PI / 2.0) {
            return Err(Error::invalid("phi_3db must lie in (0, pi/2)"));
        }
        let check_phi = |phi: f64| {
            if (0.0..PI / 2.0).contains(&phi) {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "beam angle {phi} outside [0, pi/2)"
                )))
            }
        };
        check_phi(self.phi)?;
        if let Some(list) = &self.per_user_phi {
            list.iter().try_for_each(|&p| check_phi(p))?;
        }
        self.fading.validate()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Deterministic amplitude `C_L * sqrt(b(phi))` of the link to user `m`.
    pub fn link_amplitude(&self, user: usize) -> f64 {
        let phi = match &self.per_user_phi {
            Some(list) => list[user % list.len()],
            None => self.phi,
        };
        path_loss_coeff(self.d0, self.dh, self.carrier_freq)
            * beam_gain(phi, self.phi_3db, self.b_max).sqrt()
    }

    /// Per-entry mean channel power `C_L^2 b(phi) (2b + Omega)` for the
    /// common beam angle.
    pub fn mean_entry_power(&self) -> f64 {
        let c = path_loss_coeff(self.d0, self.dh, self.carrier_freq);
        c * c * beam_gain(self.phi, self.phi_3db, self.b_max) * self.fading.mean_power()
    }
}

/// Bessel function of the first kind, orders 1 and 3.
///
/// Uses Bessel's integral `J_n(x) = (1/pi) int_0^pi cos(n t - x sin t) dt`
/// with the trapezoid rule. The integrand extends to a smooth periodic
/// function, so the rule converges geometrically once the node count exceeds
/// `x + n`.
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    if order != 1 && order != 3 {
        return Err(Error::invalid(format!(
            "Bessel order {order} not supported (1 or 3)"
        )));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::invalid(format!(
            "Bessel argument must be finite and >= 0, got {x}"
        )));
    }
    Ok(bessel_integral(order, x))
}

fn bessel_integral(order: u32, x: f64) -> f64 {
    let nodes = 48 + 2 * x.ceil() as usize;
    let h = PI / nodes as f64;
    let n = order as f64;
    let f = |t: f64| (n * t - x * t.sin()).cos();
    let mut sum = 0.5 * (f(0.0) + f(PI));
    for i in 1..nodes {
        sum += f(i as f64 * h);
    }
    sum * h / PI
}

/// `J1(u)/(2u) + 36 J3(u)/u^3`, continuous through `u = 0` where it equals 1.
fn pattern_factor(u: f64) -> f64 {
    let u = u.abs();
    if u < 2.0 {
        // Ascending series of both terms in (u/2)^2; no cancellation here.
        let q = 0.25 * u * u;
        let (mut t1, mut t3) = (0.25, 36.0 / 48.0);
        let (mut s1, mut s3) = (t1, t3);
        for k in 1..40 {
            let kf = k as f64;
            t1 *= -q / (kf * (kf + 1.0));
            t3 *= -q / (kf * (kf + 3.0));
            s1 += t1;
            s3 += t3;
            if t1.abs() + t3.abs() < 1e-18 {
                break;
            }
        }
        s1 + s3
    } else {
        bessel_integral(1, u) / (2.0 * u) + 36.0 * bessel_integral(3, u) / (u * u * u)
    }
}

/// Beam gain `b(phi) = b_max (J1(u)/(2u) + 36 J3(u)/u^3)^2` with
/// `u = 2.07123 sin(phi) / sin(phi_3db)`.
pub fn beam_gain(phi: f64, phi_3db: f64, b_max: f64) -> f64 {
    let u = BEAM_U_CONSTANT * phi.sin() / phi_3db.sin();
    let f = pattern_factor(u);
    b_max * f * f
}

/// Free-space path-loss amplitude `lambda / (4 pi sqrt(d0^2 + dh^2))`.
pub fn path_loss_coeff(d0: f64, dh: f64, carrier_freq: f64) -> f64 {
    let lambda = SPEED_OF_LIGHT / carrier_freq;
    lambda / (4.0 * PI * d0.hypot(dh))
}

/// Rayleigh amplitude with `E[A^2] = 2b`.
pub fn sample_rayleigh<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    Exp::new(1.0 / (2.0 * b))
        .expect("positive rate")
        .sample(rng)
        .sqrt()
}

/// Nakagami-m amplitude with `E[Z^2] = omega`.
pub fn sample_nakagami<R: Rng + ?Sized>(m: f64, omega: f64, rng: &mut R) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    Gamma::new(m, omega / m)
        .expect("valid gamma")
        .sample(rng)
        .sqrt()
}

/// One Shadowed-Rician fading coefficient `A exp(j psi) + Z exp(j phase_phi)`.
pub fn sample_shadowed_rician<R: Rng + ?Sized>(
    fading: &FadingParams,
    phase_phi: f64,
    scatter: ScatterPhase,
    rng: &mut R,
) -> Complex64 {
    let a = sample_rayleigh(fading.b, rng);
    let psi = rng.random::<f64>() * scatter.span();
    let z = sample_nakagami(fading.m, fading.omega, rng);
    Complex64::from_polar(a, psi) + Complex64::from_polar(z, phase_phi)
}

/// One channel draw for all satellites, users and antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CTensor3,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.h.dims()
    }
}

/// Draw a `K x M x N` channel. Entry `(k, m, n)` uses its own ChaCha stream
/// seeded by `rng::derive(seed, flat index)`.
pub fn generate_channel(
    params: &ChannelParams,
    k: usize,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<ChannelRealization> {
    if k == 0 || m == 0 || n == 0 {
        return Err(Error::invalid(format!(
            "channel dims must be positive, got K={k} M={m} N={n}"
        )));
    }
    params.validate()?;
    if n < m {
        log::warn!("N={n} antennas serve M={m} users; zero-forcing baselines need N >= M");
    }
    let amplitudes: Vec<f64> = (0..m).map(|u| params.link_amplitude(u)).collect();
    let mut h = CTensor3::zeros(k, m, n);
    for kk in 0..k {
        for mm in 0..m {
            for nn in 0..n {
                let flat = ((kk * m + mm) * n + nn) as u64;
                let mut r = rng::stream(rng::derive(seed, flat));
                let fade = sample_shadowed_rician(
                    &params.fading,
                    params.phase_phi,
                    params.scatter_phase,
                    &mut r,
                );
                h[(kk, mm, nn)] = fade * amplitudes[mm];
            }
        }
    }
    Ok(ChannelRealization { h, seed })
}

/// Seed of sample `index` in an ensemble rooted at `base_seed`.
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    rng::derive(base_seed, index)
}

/// `count` independent realizations; sample `i` uses `sample_seed(base, i)`.
pub fn generate_ensemble(
    params: &ChannelParams,
    (k, m, n): (usize, usize, usize),
    base_seed: u64,
    count: usize,
) -> Result<Vec<ChannelRealization>> {
    (0..count as u64)
        .map(|i| generate_channel(params, k, m, n, sample_seed(base_seed, i)))
        .collect()
}

const ENSEMBLE_MAGIC: &[u8; 4] = b"SMCH";

pub fn write_ensemble_binary<W: Write>(mut out: W, ensemble: &[ChannelRealization]) -> Result<()> {
    let (k, m, n) = ensemble.first().map(|r| r.dims()).unwrap_or((0, 0, 0));
    out.write_all(ENSEMBLE_MAGIC)?;
    out.write_all(&1u32.to_le_bytes())?;
    for d in [k, m, n] {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    out.write_all(&(ensemble.len() as u64).to_le_bytes())?;
    for r in ensemble {
        if r.dims() != (k, m, n) {
            return Err(Error::invalid("ensemble members differ in shape"));
        }
        out.write_all(&r.seed.to_le_bytes())?;
        for z in r.h.as_slice() {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_ensemble_binary<R: Read>(mut input: R) -> Result<Vec<ChannelRealization>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != ENSEMBLE_MAGIC {
        return Err(Error::Format("not a channel ensemble file".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |input: &mut R| -> Result<u32> {
        input.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut input)?;
    if version != 1 {
        return Err(Error::Format(format!(
            "unsupported ensemble version {version}"
        )));
    }
    let k = read_u32(&mut input)? as usize;
    let m = read_u32(&mut input)? as usize;
    let n = read_u32(&mut input)? as usize;
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let mut data = Vec::with_capacity(k * m * n);
        for _ in 0..k * m * n {
            input.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            input.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            data.push(Complex64::new(re, im));
        }
        out.push(ChannelRealization {
            h: CTensor3::from_vec(k, m, n, data),
            seed,
        });
    }
    Ok(out)
}

pub fn write_ensemble_csv<W: Write>(mut out: W, ensemble: &[ChannelRealization]) -> Result<()> {
    let (k, m, n) = ensemble.first().map(|r| r.dims()).unwrap_or((0, 0, 0));
    writeln!(out, "# spacemimo channel ensemble v1 K={k} M={m} N={n}")?;
    write!(out, "seed")?;
    for kk in 0..k {
        for mm in 0..m {
            for nn in 0..n {
                write!(out, ",re_{kk}_{mm}_{nn},im_{kk}_{mm}_{nn}")?;
            }
        }
    }
    writeln!(out)?;
    for r in ensemble {
        write!(out, "{}", r.seed)?;
        for z in r.h.as_slice() {
            // `{:e}` prints the shortest representation that round-trips.
            write!(out, ",{:e},{:e}", z.re, z.im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_ensemble_csv<R: BufRead>(input: R) -> Result<Vec<ChannelRealization>> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format("empty ensemble csv".into()))??;
    let dims: Vec<usize> = first
        .split_whitespace()
        .filter_map(|tok| tok.split_once('=').map(|(_, v)| v))
        .map(|v| v.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("bad dims line: {e}")))?;
    let [k, m, n] = dims[..] else {
        return Err(Error::Format("ensemble csv missing K/M/N".into()));
    };
    lines.next();
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("row {}: {what}", idx + 1));
        let mut fields = line.split(',');
        let seed = fields
            .next()
            .ok_or_else(|| bad("missing seed"))?
            .parse::<u64>()
            .map_err(|_| bad("bad seed"))?;
        let vals: Vec<f64> = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad number"))?;
        if vals.len() != 2 * k * m * n {
            return Err(bad("wrong field count"));
        }
        let data = vals
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        out.push(ChannelRealization {
            h: CTensor3::from_vec(k, m, n, data),
            seed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Ascending power series, 30 terms.
    fn series_j(order: u32, x: f64) -> f64 {
        let half = x / 2.0;
        let mut term = half.powi(order as i32) / (1..=order).map(f64::from).product::<f64>();
        let mut sum = term;
        for k in 1..30 {
            let kf = k as f64;
            term *= -half * half / (kf * (kf + order as f64));
            sum += term;
        }
        sum
    }

    #[test]
    fn bessel_examples() {
        assert!(bessel_j(1, 0.0).unwrap().abs() < 1e-15);
        assert!((bessel_j(1, 1.0).unwrap() - 0.4400505857).abs() < 1e-9);
        assert!((bessel_j(3, 2.0).unwrap() - 0.1289432495).abs() < 1e-9);
        assert!(matches!(bessel_j(2, 1.0), Err(Error::InvalidArgument(_))));
        assert!(bessel_j(1, -1.0).is_err());
    }

    #[test]
    fn bessel_matches_series_on_grid() {
        for i in 0..100 {
            let x = 5.0 * i as f64 / 99.0;
            for order in [1, 3] {
                let got = bessel_j(order, x).unwrap();
                assert!((got - series_j(order, x)).abs() < 1e-9, "J{order}({x})");
            }
        }
    }

    #[test]
    fn bessel_accurate_to_twenty() {
        // Tabulated values.
        assert!((bessel_j(1, 10.0).unwrap() - 0.0434727461688616).abs() < 1e-12);
        assert!((bessel_j(1, 20.0).unwrap() - 0.06683312417584993).abs() < 1e-12);
        assert!((bessel_j(3, 20.0).unwrap() - (-0.09890139456044958)).abs() < 1e-12);
    }

    #[test]
    fn beam_gain_limits() {
        let b_max = 7.5;
        let p3 = 0.4f64.to_radians();
        assert_relative_eq!(beam_gain(0.0, p3, b_max), b_max, max_relative = 1e-15);
        assert!((beam_gain(1e-8, p3, b_max) - b_max).abs() < 1e-6 * b_max);
        let half = beam_gain(p3, p3, 1.0);
        assert!((half - 0.5).abs() < 0.01, "gain at 3 dB angle = {half}");
        // Frozen from an independent Bessel evaluation (u = 0.05178).
        let g = beam_gain(0.01f64.to_radians(), p3, 1.0);
        assert!((g - 0.9995811279424685).abs() < 1e-12, "{g}");
    }

    #[test]
    fn beam_gain_series_agrees_with_bessel_path() {
        for u in [0.5, 1.0, 1.5, 1.999] {
            let direct = series_j(1, u) / (2.0 * u) + 36.0 * series_j(3, u) / u.powi(3);
            assert!((pattern_factor(u) - direct).abs() < 1e-12);
        }
        let u = 2.0;
        let direct = series_j(1, u) / (2.0 * u) + 36.0 * series_j(3, u) / u.powi(3);
        assert!((pattern_factor(u) - direct).abs() < 1e-10);
    }

    #[test]
    fn beam_gain_bounded_in_main_lobe() {
        let p3 = 0.4f64.to_radians();
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let phi = p3 * i as f64 / 200.0;
            let g = beam_gain(phi, p3, 3.0);
            assert!(g <= 3.0 * (1.0 + 1e-15));
            assert!(g <= prev + 1e-15);
            prev = g;
        }
    }

    #[test]
    fn path_loss_examples() {
        let f = 20e9;
        let lambda = SPEED_OF_LIGHT / f;
        assert_relative_eq!(
            path_loss_coeff(600e3, 0.0, f),
            lambda / (4.0 * PI * 600e3),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            path_loss_coeff(1200e3, 0.0, f),
            0.5 * path_loss_coeff(600e3, 0.0, f),
            max_relative = 1e-15
        );
        assert!((path_loss_coeff(600e3, 0.0, f) - 1.988e-9).abs() < 1e-12);
    }

    #[test]
    fn zero_fading_is_zero() {
        let mut r = rng::stream(1);
        let z = sample_shadowed_rician(
            &FadingParams::new(0.0, 2.0, 0.0),
            0.3,
            ScatterPhase::HalfTurn,
            &mut r,
        );
        assert_eq!(z, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn nakagami_concentrates_for_large_m() {
        let mut r = rng::stream(2);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| sample_nakagami(500.0, 1.0, &mut r))
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(var.sqrt() < 0.05);
    }

    #[test]
    fn generate_shape_and_reproducibility() {
        let p = ChannelParams::default();
        let a = generate_channel(&p, 2, 4, 4, 11).unwrap();
        assert_eq!(a.dims(), (2, 4, 4));
        let b = generate_channel(&p, 2, 4, 4, 11).unwrap();
        assert_eq!(a, b);
        assert!(a
            .h
            .as_slice()
            .iter()
            .zip(b.h.as_slice())
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits()));
        assert!(a.h.is_finite());
        assert!(generate_channel(&p, 0, 4, 4, 1).is_err());
        // The same entry does not depend on tensor size.
        let c = generate_channel(&p, 3, 4, 4, 11).unwrap();
        assert_eq!(c.h.block(1), a.h.block(1));
    }

    #[test]
    fn per_user_phi_changes_amplitude() {
        let p3 = 0.4f64.to_radians();
        let p = ChannelParams {
            per_user_phi: Some(vec![0.0, p3]),
            ..Default::default()
        };
        assert!(p.link_amplitude(1) < p.link_amplitude(0));
        assert_relative_eq!(p.link_amplitude(2), p.link_amplitude(0));
    }

    #[test]
    fn ensemble_io_round_trips() {
        let p = ChannelParams::default();
        let ens = generate_ensemble(&p, (2, 3, 2), 5, 4).unwrap();
        let mut bin = Vec::new();
        write_ensemble_binary(&mut bin, &ens).unwrap();
        assert_eq!(read_ensemble_binary(&bin[..]).unwrap(), ens);
        let mut csv = Vec::new();
        write_ensemble_csv(&mut csv, &ens).unwrap();
        assert_eq!(read_ensemble_csv(&csv[..]).unwrap(), ens);
    }
}
