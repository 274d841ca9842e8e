use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::Dense;

/// Borrowed weights of one graph convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvParams<'a> {
    pub mlp1: [&'a Dense; 2],
    pub mlp2: [&'a Dense; 2],
}

impl ConvParams<'_> {
    fn mlp1_row(&self, x: ArrayView1<f64>, inst: &mut Instrument) -> Array1<f64> {
        inst.mlp1_calls += 1;
        mlp_row(&self.mlp1, x, inst)
    }

    fn mlp2_row(&self, x: ArrayView1<f64>, inst: &mut Instrument) -> Array1<f64> {
        mlp_row(&self.mlp2, x, inst)
    }
}

fn mlp_row(layers: &[&Dense; 2], x: ArrayView1<f64>, inst: &mut Instrument) -> Array1<f64> {
    let mut h = x.to_owned();
    for l in layers {
        inst.macs += (l.fan_in() * l.fan_out()) as u64;
        h = l.apply_row(h.view(), true);
    }
    h
}

/// Counters filled in by instrumented forward passes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Instrument {
    /// Number of MLP1 evaluations on one node vector.
    pub mlp1_calls: u64,
    /// Multiply-accumulates performed by FC layers.
    pub macs: u64,
}

/// Order in which a graph convolution evaluates MLP1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvSchedule {
    /// Recompute every neighbor's MLP1 for each receiving node:
    /// `M (M - 1)` evaluations.
    PerPair,
    /// Evaluate MLP1 once per node, then aggregate, then combine.
    #[default]
    Hoisted,
}

/// Element-wise maximum over all rows except `skip`; zeros when no row is
/// left.
fn max_except(rows: &[Array1<f64>], skip: usize, width: usize) -> Array1<f64> {
    let mut acc: Option<Array1<f64>> = None;
    for (j, r) in rows.iter().enumerate() {
        if j == skip {
            continue;
        }
        match acc.as_mut() {
            None => acc = Some(r.clone()),
            Some(a) => a.zip_mut_with(r, |x, &y| {
                if y > *x {
                    *x = y
                }
            }),
        }
    }
    acc.unwrap_or_else(|| Array1::zeros(width))
}

/// Graph convolution, neighbor transform recomputed per receiving node.
///
/// For node `i`: `a_i = max_{j != i} MLP1(x_j)`, `out_i = MLP2([x_i, a_i])`.
pub fn graph_conv(conv: ConvParams<'_>, x: ArrayView2<f64>, inst: &mut Instrument) -> Array2<f64> {
    let m = x.nrows();
    let width = conv.mlp1[1].fan_out();
    let mut out = Array2::zeros((m, conv.mlp2[1].fan_out()));
    for i in 0..m {
        let mut transformed = Vec::with_capacity(m);
        for j in 0..m {
            if j != i {
                transformed.push(conv.mlp1_row(x.row(j), inst));
            }
        }
        // `transformed` holds only neighbors, so nothing is skipped.
        let agg = max_except(&transformed, usize::MAX, width);
        let combined = concatenate(Axis(0), &[x.row(i), agg.view()]).expect("row concat");
        out.row_mut(i).assign(&conv.mlp2_row(combined.view(), inst));
    }
    out
}

/// Same result as [`graph_conv`] with MLP1 evaluated once per node.
pub fn graph_conv_refactored(
    conv: ConvParams<'_>,
    x: ArrayView2<f64>,
    inst: &mut Instrument,
) -> Array2<f64> {
    let m = x.nrows();
    let width = conv.mlp1[1].fan_out();
    let transformed: Vec<Array1<f64>> = (0..m).map(|i| conv.mlp1_row(x.row(i), inst)).collect();
    let aggregated: Vec<Array1<f64>> = (0..m).map(|i| max_except(&transformed, i, width)).collect();
    let mut out = Array2::zeros((m, conv.mlp2[1].fan_out()));
    for i in 0..m {
        let combined = concatenate(Axis(0), &[x.row(i), aggregated[i].view()]).expect("row concat");
        out.row_mut(i).assign(&conv.mlp2_row(combined.view(), inst));
    }
    out
}

pub(crate) fn run_conv(
    conv: ConvParams<'_>,
    x: ArrayView2<f64>,
    schedule: ConvSchedule,
    inst: &mut Instrument,
) -> Array2<f64> {
    match schedule {
        ConvSchedule::PerPair => graph_conv(conv, x, inst),
        ConvSchedule::Hoisted => graph_conv_refactored(conv, x, inst),
    }
}
