//! Per-satellite graph neural network.
//!
//! Users are graph nodes whose features are their channel vectors. One
//! network maps the local channels `H_k` (`M x N`) of satellite `k` to its
//! beamformers `W_k`:
//!
//! ```text
//! [Re h, Im h] -> FC -> ReLU -> FC -> ReLU                 input MLP
//!   -> graph conv -> graph conv                            max-pool aggregation
//!   -> FC                                                  2N outputs per node
//!   -> [Re w | Im w] -> scale to trace power P
//! ```
//!
//! A graph convolution transforms every node with MLP1, takes the
//! element-wise maximum over the *other* nodes, concatenates that aggregate
//! to the node's own input and applies MLP2. Both MLPs are two FC layers with
//! ReLU after each.

pub(crate) mod container;
mod conv;
mod forward;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub use container::{
    read_params, read_params_from, write_params, write_params_to, DataType, PARAMS_MAGIC,
};
pub use conv::{graph_conv, graph_conv_refactored, ConvParams, ConvSchedule, Instrument};
pub use forward::{
    complex_output, embed_input, forward_satellite, forward_satellite_with, mac_count, MacReport,
    MultiGnn,
};

/// Layer widths. Defaults follow the reference network:
/// `2N -> 1024 -> 512`, conv MLP1 `512 -> 512 -> 512`, conv MLP2
/// `1024 -> 512 -> 512`, output `512 -> 2N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GnnDims {
    pub n_antennas: usize,
    /// L1
    pub input_hidden: usize,
    /// L2
    pub input_out: usize,
    /// L4
    pub mlp1_hidden: usize,
    /// L5
    pub mlp1_out: usize,
    /// L7
    pub mlp2_hidden: usize,
    /// L8
    pub mlp2_out: usize,
    /// Divisor already applied to the hidden widths (1 = full size).
    pub scale_factor: usize,
}

pub const LAYER_COUNT: usize = 11;

/// Indices into [`GnnParams::layers`].
pub mod layer {
    pub const INPUT: [usize; 2] = [0, 1];
    /// `[mlp1.fc1, mlp1.fc2, mlp2.fc1, mlp2.fc2]` for each conv layer.
    pub const CONV: [[usize; 4]; 2] = [[2, 3, 4, 5], [6, 7, 8, 9]];
    pub const OUTPUT: usize = 10;

    pub const NAMES: [&str; super::LAYER_COUNT] = [
        "input.fc1",
        "input.fc2",
        "conv1.mlp1.fc1",
        "conv1.mlp1.fc2",
        "conv1.mlp2.fc1",
        "conv1.mlp2.fc2",
        "conv2.mlp1.fc1",
        "conv2.mlp1.fc2",
        "conv2.mlp2.fc1",
        "conv2.mlp2.fc2",
        "output.fc",
    ];
}

impl GnnDims {
    /// Full-size widths for `n` antennas.
    pub fn full(n_antennas: usize) -> Self {
        Self {
            n_antennas,
            input_hidden: 1024,
            input_out: 512,
            mlp1_hidden: 512,
            mlp1_out: 512,
            mlp2_hidden: 512,
            mlp2_out: 512,
            scale_factor: 1,
        }
    }

    /// Full-size widths divided by `factor` (rounded up).
    pub fn scaled(n_antennas: usize, factor: usize) -> Self {
        let f = factor.max(1);
        let s = |w: usize| w.div_ceil(f);
        let full = Self::full(n_antennas);
        Self {
            n_antennas,
            input_hidden: s(full.input_hidden),
            input_out: s(full.input_out),
            mlp1_hidden: s(full.mlp1_hidden),
            mlp1_out: s(full.mlp1_out),
            mlp2_hidden: s(full.mlp2_hidden),
            mlp2_out: s(full.mlp2_out),
            scale_factor: f,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.n_antennas,
            self.input_hidden,
            self.input_out,
            self.mlp1_hidden,
            self.mlp1_out,
            self.mlp2_hidden,
            self.mlp2_out,
        ];
        if widths.contains(&0) {
            return Err(Error::invalid(format!(
                "all GNN widths must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Input width of graph convolution `c` (L3).
    pub fn conv_input(&self, c: usize) -> usize {
        if c == 0 {
            self.input_out
        } else {
            self.mlp2_out
        }
    }

    /// Input width of MLP2 in conv `c` (L6 = L3 + L5).
    pub fn combined_width(&self, c: usize) -> usize {
        self.conv_input(c) + self.mlp1_out
    }

    /// `(fan_in, fan_out)` of every FC layer in storage order.
    pub fn layer_shapes(&self) -> [(usize, usize); LAYER_COUNT] {
        let n2 = 2 * self.n_antennas;
        let conv = |c: usize| {
            [
                (self.conv_input(c), self.mlp1_hidden),
                (self.mlp1_hidden, self.mlp1_out),
                (self.combined_width(c), self.mlp2_hidden),
                (self.mlp2_hidden, self.mlp2_out),
            ]
        };
        let [a, b, c, d] = conv(0);
        let [e, f, g, h] = conv(1);
        [
            (n2, self.input_hidden),
            (self.input_hidden, self.input_out),
            a,
            b,
            c,
            d,
            e,
            f,
            g,
            h,
            (self.mlp2_out, n2),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One fully connected layer, `y = x W + b` with `W` of shape
/// `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    /// Single row through the layer; returns the activation.
    pub fn apply_row(&self, x: ArrayView1<f64>, relu: bool) -> Array1<f64> {
        let mut y = x.dot(&self.weight) + &self.bias;
        if relu {
            y.mapv_inplace(relu_keep_nan);
        }
        y
    }

    /// All rows of `x` through the layer.
    pub fn apply(&self, x: ArrayView2<f64>, relu: bool) -> Array2<f64> {
        let mut y = x.dot(&self.weight) + self.bias.view().insert_axis(Axis(0));
        if relu {
            y.mapv_inplace(relu_keep_nan);
        }
        y
    }

    pub fn is_finite(&self) -> bool {
        self.weight
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.is_finite())
    }
}

/// ReLU that lets NaN through so non-finite values stay detectable.
pub(crate) fn relu_keep_nan(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

/// Weights and biases of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub dims: GnnDims,
    /// Multiplier applied to the real channel features before the first
    /// layer. Satellite channels have amplitudes around 1e-7, so trained
    /// models store a scale that brings features to unit RMS.
    pub input_scale: f64,
    pub layers: Vec<Dense>,
}

impl GnnParams {
    pub fn zeros(dims: GnnDims) -> Self {
        let layers = dims
            .layer_shapes()
            .iter()
            .map(|&(i, o)| Dense::zeros(i, o))
            .collect();
        Self {
            dims,
            input_scale: 1.0,
            layers,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            input_scale: self.input_scale,
            ..Self::zeros(self.dims)
        }
    }

    pub fn with_input_scale(mut self, scale: f64) -> Self {
        self.input_scale = scale;
        self
    }

    pub fn input_mlp(&self) -> [&Dense; 2] {
        layer::INPUT.map(|i| &self.layers[i])
    }

    pub fn conv(&self, c: usize) -> ConvParams<'_> {
        let [a, b, d, e] = layer::CONV[c];
        ConvParams {
            mlp1: [&self.layers[a], &self.layers[b]],
            mlp2: [&self.layers[d], &self.layers[e]],
        }
    }

    pub fn output(&self) -> &Dense {
        &self.layers[layer::OUTPUT]
    }

    /// Check shapes against `dims` and that every entry is finite.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.layers.len() != LAYER_COUNT {
            return Err(Error::invalid(format!(
                "expected {LAYER_COUNT} layers, found {}",
                self.layers.len()
            )));
        }
        for ((layer, &(i, o)), name) in self
            .layers
            .iter()
            .zip(&self.dims.layer_shapes())
            .zip(layer::NAMES)
        {
            if layer.weight.dim() != (i, o) || layer.bias.len() != o {
                return Err(Error::invalid(format!(
                    "layer {name} has shape {:?}, expected ({i}, {o})",
                    layer.weight.dim()
                )));
            }
            if !layer.is_finite() {
                return Err(Error::NonFinite {
                    layer: name.to_string(),
                });
            }
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::invalid("input scale must be positive and finite"));
        }
        Ok(())
    }

    /// All scalars in storage order: each layer's weights row-major, then
    /// its biases.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.dims.parameter_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mutable access to the scalar at flat position `idx`.
    pub fn get_mut(&mut self, mut idx: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weight.len();
            if idx < nw {
                return layer
                    .weight
                    .as_slice_mut()
                    .expect("standard layout")
                    .get_mut(idx)
                    .unwrap();
            }
            idx -= nw;
            let nb = layer.bias.len();
            if idx < nb {
                return &mut layer.bias[idx];
            }
            idx -= nb;
        }
        panic!("parameter index out of range");
    }

    pub fn get(&self, idx: usize) -> f64 {
        let mut rest = idx;
        for layer in &self.layers {
            let nw = layer.weight.len();
            if rest < nw {
                return layer.weight.as_slice().expect("standard layout")[rest];
            }
            rest -= nw;
            if rest < layer.bias.len() {
                return layer.bias[rest];
            }
            rest -= layer.bias.len();
        }
        panic!("parameter index {idx} out of range");
    }

    /// `self += alpha * other`, layer by layer.
    pub fn add_scaled(&mut self, other: &GnnParams, alpha: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(alpha, &b.weight);
            a.bias.scaled_add(alpha, &b.bias);
        }
    }
}

/// Glorot-uniform weights, zero biases. Layer `i` draws from the stream
/// `derive(derive(seed, INIT), i)`.
pub fn init_params(dims: GnnDims, seed: u64) -> Result<GnnParams> {
    dims.validate()?;
    let mut params = GnnParams::zeros(dims);
    let base = rng::derive(seed, rng::tag::INIT);
    for (i, layer) in params.layers.iter_mut().enumerate() {
        let mut r = rng::stream(rng::derive(base, i as u64));
        let bound = glorot_bound(layer.fan_in(), layer.fan_out());
        layer.weight.mapv_inplace(|_| r.random_range(-bound..bound));
    }
    Ok(params)
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Rows of `H_k` as real features `[Re h_m, Im h_m]` (`M x 2N`).
pub(crate) fn embed(hk: ArrayView2<Complex64>) -> Array2<f64> {
    let (m, n) = hk.dim();
    Array2::from_shape_fn((m, 2 * n), |(row, col)| {
        if col < n {
            hk[(row, col)].re
        } else {
            hk[(row, col - n)].im
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_dims_chain() {
        let d = GnnDims::full(4);
        let shapes = d.layer_shapes();
        assert_eq!(shapes[0], (8, 1024));
        assert_eq!(shapes[1], (1024, 512));
        assert_eq!(shapes[2], (512, 512));
        assert_eq!(shapes[4], (1024, 512));
        assert_eq!(shapes[8], (1024, 512));
        assert_eq!(shapes[10], (512, 8));
        for w in shapes.windows(2) {
            // Every layer consumes what the previous one produced, except
            // MLP2's first FC which also takes the conv input.
            assert!(w[1].0 == w[0].1 || w[1].0 == w[0].1 + 512 || w[1].0 == 512);
        }
        let s = GnnDims::scaled(4, 8);
        assert_eq!((s.input_hidden, s.input_out, s.mlp2_out), (128, 64, 64));
        assert_eq!(s.combined_width(0), 128);
    }

    #[test]
    fn init_is_reproducible_and_bounded() {
        let dims = GnnDims::scaled(4, 8);
        let a = init_params(dims, 5).unwrap();
        assert_eq!(a, init_params(dims, 5).unwrap());
        assert_ne!(a, init_params(dims, 6).unwrap());
        for l in &a.layers {
            assert!(l.bias.iter().all(|&b| b == 0.0));
            let bound = glorot_bound(l.fan_in(), l.fan_out());
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
        }
        a.validate().unwrap();
    }

    #[test]
    fn flat_indexing_agrees() {
        let mut p = init_params(GnnDims::scaled(2, 64), 1).unwrap();
        let flat = p.flat();
        assert_eq!(flat.len(), p.len());
        for idx in [0, 7, flat.len() / 2, flat.len() - 1] {
            assert_eq!(p.get(idx), flat[idx]);
        }
        *p.get_mut(3) = 42.0;
        assert_eq!(p.flat()[3], 42.0);
    }

    #[test]
    fn validate_flags_non_finite_layer() {
        let mut p = init_params(GnnDims::scaled(2, 64), 1).unwrap();
        p.layers[4].bias[0] = f64::NAN;
        match p.validate() {
            Err(Error::NonFinite { layer }) => assert_eq!(layer, "conv1.mlp2.fc1"),
            other => panic!("{other:?}"),
        }
    }
}
