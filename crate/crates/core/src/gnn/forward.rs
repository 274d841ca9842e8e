use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use super::conv::{run_conv, ConvSchedule, Instrument};
use super::{embed, init_params, layer, GnnDims, GnnParams};
use crate::beamform::{BeamformerSet, PowerScope, ZERO_POWER};
use crate::error::{Error, Result};
use crate::tensor::CTensor3;

/// Real representation of local channels: row `m` is
/// `[Re h_{k,m}, Im h_{k,m}]`.
pub fn embed_input(hk: ArrayView2<Complex64>) -> Array2<f64> {
    embed(hk)
}

/// Inverse of [`embed_input`]: row `[a, b]` becomes `a + j b`.
pub fn complex_output(rows: ArrayView2<f64>) -> Array2<Complex64> {
    let (m, width) = rows.dim();
    let n = width / 2;
    Array2::from_shape_fn((m, n), |(i, j)| {
        Complex64::new(rows[(i, j)], rows[(i, n + j)])
    })
}

fn check(x: &Array2<f64>, layer_idx: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer: layer::NAMES[layer_idx].to_string(),
        })
    }
}

/// Beamformers of one satellite from its local channels `H_k` (`M x N`),
/// scaled to trace power `power`.
pub fn forward_satellite(
    params: &GnnParams,
    hk: ArrayView2<Complex64>,
    power: f64,
) -> Result<Array2<Complex64>> {
    forward_satellite_with(
        params,
        hk,
        power,
        ConvSchedule::Hoisted,
        &mut Instrument::default(),
    )
}

pub fn forward_satellite_with(
    params: &GnnParams,
    hk: ArrayView2<Complex64>,
    power: f64,
    schedule: ConvSchedule,
    inst: &mut Instrument,
) -> Result<Array2<Complex64>> {
    let n = params.dims.n_antennas;
    if hk.ncols() != n {
        return Err(Error::invalid(format!(
            "network expects {n} antennas, channel has {}",
            hk.ncols()
        )));
    }
    if !(power > 0.0) {
        return Err(Error::invalid("power budget must be positive"));
    }
    let mut x = embed(hk) * params.input_scale;
    check(&x, layer::INPUT[0])?;
    for (&idx, l) in layer::INPUT.iter().zip(params.input_mlp()) {
        inst.macs += (x.nrows() * l.fan_in() * l.fan_out()) as u64;
        x = l.apply(x.view(), true);
        check(&x, idx)?;
    }
    for c in 0..2 {
        x = run_conv(params.conv(c), x.view(), schedule, inst);
        check(&x, layer::CONV[c][3])?;
    }
    let out = params.output();
    inst.macs += (x.nrows() * out.fan_in() * out.fan_out()) as u64;
    let y = out.apply(x.view(), false);
    check(&y, layer::OUTPUT)?;
    let mut w = complex_output(y.view());
    let current: f64 = w.iter().map(|z| z.norm_sqr()).sum();
    let gain = if current < ZERO_POWER {
        0.0
    } else {
        (power / current).sqrt()
    };
    w.mapv_inplace(|z| z * gain);
    Ok(w)
}

/// The networks deployed on a cluster: one shared parameter set, or one set
/// per satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiGnn {
    pub sets: Vec<GnnParams>,
}

impl MultiGnn {
    pub fn tied(params: GnnParams) -> Self {
        Self { sets: vec![params] }
    }

    pub fn is_tied(&self) -> bool {
        self.sets.len() == 1
    }

    pub fn dims(&self) -> GnnDims {
        self.sets[0].dims
    }

    pub fn for_satellite(&self, k: usize) -> Result<&GnnParams> {
        if self.is_tied() {
            return Ok(&self.sets[0]);
        }
        self.sets.get(k).ok_or_else(|| {
            Error::invalid(format!(
                "model has {} per-satellite sets, satellite {k} requested",
                self.sets.len()
            ))
        })
    }

    /// Every satellite runs its own network on its own channels.
    pub fn beamformers(&self, h: &CTensor3, power: f64) -> Result<BeamformerSet> {
        self.beamformers_with(h, power, |p, hk, pw| forward_satellite(p, hk, pw))
    }

    pub(crate) fn beamformers_with<F>(
        &self,
        h: &CTensor3,
        power: f64,
        mut forward: F,
    ) -> Result<BeamformerSet>
    where
        F: FnMut(&GnnParams, ArrayView2<Complex64>, f64) -> Result<Array2<Complex64>>,
    {
        let (k, m, n) = h.dims();
        let mut w = CTensor3::zeros(k, m, n);
        for kk in 0..k {
            let hk = ArrayView2::from_shape((m, n), h.block(kk)).expect("block shape");
            let wk = forward(self.for_satellite(kk)?, hk, power)?;
            w.block_mut(kk)
                .iter_mut()
                .zip(wk.iter())
                .for_each(|(d, s)| *d = *s);
        }
        Ok(BeamformerSet::new(w, power, PowerScope::PerSatellite))
    }
}

/// Multiply-accumulate tallies of one forward pass of one network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacReport {
    pub input_mlp: u64,
    /// Per graph convolution, per-pair schedule.
    pub conv_per_pair: [u64; 2],
    /// Per graph convolution, hoisted schedule.
    pub conv_hoisted: [u64; 2],
    pub output: u64,
    pub total_per_pair: u64,
    pub total_hoisted: u64,
    /// Instrumented counts from actually running each schedule.
    pub measured_per_pair: u64,
    pub measured_hoisted: u64,
    /// The alternative closed form `2M [M(M-1)(L3 L4 + L4 L5) + M(L6 L7 + L7 L8)]`
    /// for both convolutions together, using the first convolution's widths.
    pub conv_leading_2m: u64,
}

/// Analytic and measured MAC counts for `m` users.
pub fn mac_count(m: usize, dims: GnnDims) -> Result<MacReport> {
    dims.validate()?;
    let mu = m as u64;
    let n2 = 2 * dims.n_antennas as u64;
    let (l1, l2) = (dims.input_hidden as u64, dims.input_out as u64);
    let (l4, l5) = (dims.mlp1_hidden as u64, dims.mlp1_out as u64);
    let (l7, l8) = (dims.mlp2_hidden as u64, dims.mlp2_out as u64);
    let input_mlp = mu * n2 * l1 + mu * l1 * l2;
    let conv_terms = |c: usize| {
        let l3 = dims.conv_input(c) as u64;
        let l6 = dims.combined_width(c) as u64;
        (l3 * l4 + l4 * l5, l6 * l7 + l7 * l8)
    };
    let conv_per_pair = [0, 1].map(|c| {
        let (a, b) = conv_terms(c);
        mu * mu.saturating_sub(1) * a + mu * b
    });
    let conv_hoisted = [0, 1].map(|c| {
        let (a, b) = conv_terms(c);
        mu * a + mu * b
    });
    let output = mu * l8 * n2;
    let (a0, b0) = conv_terms(0);
    let conv_leading_2m = 2 * mu * (mu.saturating_sub(1) * mu * a0 + mu * b0);

    let params = init_params(dims, 0)?;
    let hk = Array2::from_shape_fn((m, dims.n_antennas), |(i, j)| {
        Complex64::new(1.0 + i as f64, 0.5 - j as f64)
    });
    let mut measured = [0u64; 2];
    for (slot, schedule) in measured
        .iter_mut()
        .zip([ConvSchedule::PerPair, ConvSchedule::Hoisted])
    {
        let mut inst = Instrument::default();
        forward_satellite_with(&params, hk.view(), 1.0, schedule, &mut inst)?;
        *slot = inst.macs;
    }
    Ok(MacReport {
        input_mlp,
        conv_per_pair,
        conv_hoisted,
        output,
        total_per_pair: input_mlp + conv_per_pair.iter().sum::<u64>() + output,
        total_hoisted: input_mlp + conv_hoisted.iter().sum::<u64>() + output,
        measured_per_pair: measured[0],
        measured_hoisted: measured[1],
        conv_leading_2m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, ChannelParams};

    #[test]
    fn embed_examples() {
        let h = Array2::from_elem((1, 1), Complex64::new(1.0, 2.0));
        assert_eq!(
            embed_input(h.view()),
            Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap()
        );
        let real = Array2::from_shape_fn((2, 3), |(i, j)| Complex64::new((i + j) as f64, 0.0));
        let e = embed_input(real.view());
        assert!(e.slice(ndarray::s![.., 3..]).iter().all(|&v| v == 0.0));
        assert_eq!(complex_output(e.view()), real);
    }

    #[test]
    fn forward_respects_power_and_shape() {
        let dims = GnnDims::scaled(4, 8);
        let p = init_params(dims, 1).unwrap().with_input_scale(1e7);
        let ch = generate_channel(&ChannelParams::default(), 1, 4, 4, 3).unwrap();
        let hk = ArrayView2::from_shape((4, 4), ch.h.block(0)).unwrap();
        let w = forward_satellite(&p, hk, 2.5).unwrap();
        assert_eq!(w.dim(), (4, 4));
        let power: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        assert!((power - 2.5).abs() <= 1e-9 * 2.5);
    }

    #[test]
    fn forward_rejects_wrong_antenna_count() {
        let p = init_params(GnnDims::scaled(4, 16), 1).unwrap();
        let hk = Array2::from_elem((2, 3), Complex64::new(1.0, 0.0));
        assert!(matches!(
            forward_satellite(&p, hk.view(), 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn forward_names_non_finite_layer() {
        let mut p = init_params(GnnDims::scaled(2, 16), 1).unwrap();
        p.layers[layer::CONV[1][3]].bias[0] = f64::INFINITY;
        let hk = Array2::from_elem((2, 2), Complex64::new(1.0, 1.0));
        match forward_satellite(&p, hk.view(), 1.0) {
            Err(Error::NonFinite { layer }) => assert!(layer.starts_with("conv2"), "{layer}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mac_counts_match_instrumentation() {
        for m in 1..=5 {
            for dims in [GnnDims::scaled(4, 8), GnnDims::scaled(3, 32)] {
                let r = mac_count(m, dims).unwrap();
                assert_eq!(r.measured_per_pair, r.total_per_pair);
                assert_eq!(r.measured_hoisted, r.total_hoisted);
            }
        }
        let one = mac_count(1, GnnDims::full(4)).unwrap();
        assert_eq!(
            one.conv_per_pair,
            one.conv_hoisted.map(|c| c - (512 * 512 + 512 * 512))
        );
    }

    #[test]
    fn table_dims_totals() {
        let r = mac_count(4, GnnDims::full(4)).unwrap();
        // Input: 4*8*1024 + 4*1024*512; each conv: 12*(2*512^2) + 4*(1024*512 + 512^2);
        // output: 4*512*8.
        assert_eq!(r.input_mlp, 32_768 + 2_097_152);
        assert_eq!(r.conv_per_pair[0], 12 * 524_288 + 4 * 786_432);
        assert_eq!(r.output, 16_384);
        assert_eq!(r.total_per_pair, 2_129_920 + 2 * 9_437_184 + 16_384);
        assert_eq!(r.total_hoisted, 2_129_920 + 2 * 5_242_880 + 16_384);
        assert_eq!(r, mac_count(4, GnnDims::full(4)).unwrap());
    }
}
