//! Batched forward pass that records activations, and its reverse sweep.
//!
//! Rows are nodes: a batch of `G` graphs with `M` users each is one
//! `G M x width` matrix, so every dense layer is a single GEMM. Graph `g`
//! occupies rows `g M .. (g + 1) M`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::gnn::{layer, Dense, GnnParams};

const NO_SOURCE: usize = usize::MAX;

struct ConvTape {
    x: Array2<f64>,
    u1: Array2<f64>,
    u: Array2<f64>,
    /// Row that supplied each aggregated entry, `NO_SOURCE` for lone nodes.
    source: Vec<usize>,
    combined: Array2<f64>,
    v1: Array2<f64>,
    y: Array2<f64>,
}

/// Activations of one batched forward pass.
pub(crate) struct Tape {
    x0: Array2<f64>,
    a1: Array2<f64>,
    a2: Array2<f64>,
    convs: Vec<ConvTape>,
    /// Raw output rows `[Re | Im]` before power normalization.
    pub out: Array2<f64>,
}

fn dense_forward(l: &Dense, x: &Array2<f64>, relu: bool, idx: usize) -> Result<Array2<f64>> {
    let y = l.apply(x.view(), relu);
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(Error::NonFinite {
            layer: layer::NAMES[idx].to_string(),
        })
    }
}

/// Element-wise max over the other nodes of each graph. Ties go to the
/// lowest node index.
fn max_pool(u: &Array2<f64>, users: usize) -> (Array2<f64>, Vec<usize>) {
    let (rows, width) = u.dim();
    let src = u.as_slice().expect("standard layout");
    let mut agg = vec![0.0; rows * width];
    let mut source = vec![NO_SOURCE; rows * width];
    for g in 0..rows / users {
        for i in 0..users {
            let row = g * users + i;
            let out = &mut agg[row * width..(row + 1) * width];
            let who = &mut source[row * width..(row + 1) * width];
            for j in (0..users).filter(|&j| j != i) {
                let other = g * users + j;
                for (f, &v) in src[other * width..(other + 1) * width].iter().enumerate() {
                    if who[f] == NO_SOURCE || v > out[f] {
                        out[f] = v;
                        who[f] = other;
                    }
                }
            }
        }
    }
    (
        Array2::from_shape_vec((rows, width), agg).expect("shape"),
        source,
    )
}

fn conv_forward(params: &GnnParams, c: usize, x: Array2<f64>, users: usize) -> Result<ConvTape> {
    let [ia, ib, id, ie] = layer::CONV[c];
    let u1 = dense_forward(&params.layers[ia], &x, true, ia)?;
    let u = dense_forward(&params.layers[ib], &u1, true, ib)?;
    let (agg, source) = max_pool(&u, users);
    let combined =
        ndarray::concatenate(Axis(1), &[x.view(), agg.view()]).expect("row counts agree");
    let v1 = dense_forward(&params.layers[id], &combined, true, id)?;
    let y = dense_forward(&params.layers[ie], &v1, true, ie)?;
    Ok(ConvTape {
        x,
        u1,
        u,
        source,
        combined,
        v1,
        y,
    })
}

/// Run the network on `x0` (already scaled features), keeping everything the
/// reverse sweep needs.
pub(crate) fn forward(params: &GnnParams, x0: Array2<f64>, users: usize) -> Result<Tape> {
    debug_assert_eq!(x0.nrows() % users, 0);
    let [i0, i1] = layer::INPUT;
    let a1 = dense_forward(&params.layers[i0], &x0, true, i0)?;
    let a2 = dense_forward(&params.layers[i1], &a1, true, i1)?;
    let c0 = conv_forward(params, 0, a2.clone(), users)?;
    let c1 = conv_forward(params, 1, c0.y.clone(), users)?;
    let out = dense_forward(params.output(), &c1.y, false, layer::OUTPUT)?;
    Ok(Tape {
        x0,
        a1,
        a2,
        convs: vec![c0, c1],
        out,
    })
}

/// Accumulate parameter gradients of one layer and return the gradient with
/// respect to its input when asked. `g` is the gradient at the activation.
fn dense_backward(
    l: &Dense,
    x: &Array2<f64>,
    a: &Array2<f64>,
    mut g: Array2<f64>,
    relu: bool,
    grad: &mut Dense,
    want_input: bool,
) -> Option<Array2<f64>> {
    if relu {
        // Subgradient zero at the kink.
        Zip::from(&mut g).and(a).for_each(|g, &a| {
            if !(a > 0.0) {
                *g = 0.0
            }
        });
    }
    general_mat_mul(1.0, &x.t(), &g, 1.0, &mut grad.weight);
    grad.bias += &g.sum_axis(Axis(0));
    want_input.then(|| g.dot(&l.weight.t()))
}

fn conv_backward(
    params: &GnnParams,
    c: usize,
    t: &ConvTape,
    g: Array2<f64>,
    grads: &mut GnnParams,
) -> Array2<f64> {
    let [ia, ib, id, ie] = layer::CONV[c];
    let g_v1 = dense_backward(
        &params.layers[ie],
        &t.v1,
        &t.y,
        g,
        true,
        &mut grads.layers[ie],
        true,
    )
    .unwrap();
    let g_comb = dense_backward(
        &params.layers[id],
        &t.combined,
        &t.v1,
        g_v1,
        true,
        &mut grads.layers[id],
        true,
    )
    .unwrap();
    let l3 = t.x.ncols();
    let mut g_x = g_comb.slice(s![.., ..l3]).to_owned();
    let g_agg = g_comb.slice(s![.., l3..]);

    let width = t.u.ncols();
    let mut g_u = Array2::<f64>::zeros(t.u.dim());
    {
        let dst = g_u.as_slice_mut().expect("standard layout");
        for ((row, f), &v) in g_agg.indexed_iter() {
            let from = t.source[row * width + f];
            if from != NO_SOURCE {
                dst[from * width + f] += v;
            }
        }
    }
    let g_u1 = dense_backward(
        &params.layers[ib],
        &t.u1,
        &t.u,
        g_u,
        true,
        &mut grads.layers[ib],
        true,
    )
    .unwrap();
    let g_xm = dense_backward(
        &params.layers[ia],
        &t.x,
        &t.u1,
        g_u1,
        true,
        &mut grads.layers[ia],
        true,
    )
    .unwrap();
    g_x += &g_xm;
    g_x
}

/// Reverse sweep: gradients of all weights given the gradient of the raw
/// output rows. Adds into `grads`.
pub(crate) fn backward(params: &GnnParams, tape: &Tape, g_out: Array2<f64>, grads: &mut GnnParams) {
    let last = &tape.convs[1];
    let mut g = dense_backward(
        params.output(),
        &last.y,
        &tape.out,
        g_out,
        false,
        &mut grads.layers[layer::OUTPUT],
        true,
    )
    .unwrap();
    for c in (0..2).rev() {
        g = conv_backward(params, c, &tape.convs[c], g, grads);
    }
    let [i0, i1] = layer::INPUT;
    let g = dense_backward(
        &params.layers[i1],
        &tape.a1,
        &tape.a2,
        g,
        true,
        &mut grads.layers[i1],
        true,
    )
    .unwrap();
    dense_backward(
        &params.layers[i0],
        &tape.x0,
        &tape.a1,
        g,
        true,
        &mut grads.layers[i0],
        false,
    );
}

impl Tape {
    pub fn rows(&self) -> usize {
        self.out.nrows()
    }
}
