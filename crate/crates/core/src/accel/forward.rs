use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use super::quant::{accumulator_bits, quantize, quantize_any, sa_gemm, QuantizedTensor};
use super::{layer_shapes, AcceleratorConfig, LatencyReport, LayerLatency};
use crate::beamform::{BeamformerSet, PowerScope, ZERO_POWER};
use crate::error::{Error, Result};
use crate::gnn::container::{read_f64, read_header, read_u32, write_header, DataType};
use crate::gnn::{complex_output, embed_input, layer, GnnDims, GnnParams, LAYER_COUNT};
use crate::tensor::CTensor3;
use crate::Complex64;

/// Weights at the activation bit-width, biases as 32-bit codes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub weight: QuantizedTensor,
    pub bias: QuantizedTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedParams {
    pub dims: GnnDims,
    pub input_scale: f64,
    pub bits: u32,
    pub layers: Vec<QuantizedLayer>,
}

pub fn quantize_params(params: &GnnParams, bits: u32) -> Result<QuantizedParams> {
    params.validate()?;
    let layers = params
        .layers
        .iter()
        .map(|l| {
            Ok(QuantizedLayer {
                weight: quantize(l.weight.view(), bits)?,
                bias: quantize_any(l.bias.view().insert_axis(Axis(0)), 32)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedParams {
        dims: params.dims,
        input_scale: params.input_scale,
        bits,
        layers,
    })
}

/// Beamformers plus the cycle accounting of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantOutput {
    pub w: Array2<Complex64>,
    pub report: LatencyReport,
    /// MLP1 evaluations on one node vector, over both convolutions.
    pub mlp1_calls: u64,
}

struct Run<'a> {
    params: &'a QuantizedParams,
    cfg: &'a AcceleratorConfig,
    compute: [u64; LAYER_COUNT],
}

impl Run<'_> {
    /// Integer GEMM, bias add and optional ReLU in the accumulator domain.
    /// Returns the accumulators and their scale.
    fn dense(&mut self, idx: usize, x: &QuantizedTensor, relu: bool) -> Result<(Array2<i64>, f64)> {
        let l = &self.params.layers[idx];
        let r = sa_gemm(x, &l.weight, self.cfg)?;
        self.compute[idx] = r.cycles;
        let scale = x.scale * l.weight.scale;
        let limit = ((1i128 << (accumulator_bits(self.params.bits) - 1)) - 1) as i64;
        let bias: Vec<i64> = l
            .bias
            .codes
            .iter()
            .map(|&b| {
                (b as f64 * l.bias.scale / scale)
                    .round()
                    .clamp(-limit as f64, limit as f64) as i64
            })
            .collect();
        let mut acc = r.acc;
        for mut row in acc.rows_mut() {
            for (a, &b) in row.iter_mut().zip(&bias) {
                *a = (*a + b).clamp(-limit, limit);
                if relu && *a < 0 {
                    *a = 0;
                }
            }
        }
        Ok((acc, scale))
    }

    fn requantize(&self, acc: &Array2<i64>, scale: f64) -> Result<QuantizedTensor> {
        quantize_any(acc.mapv(|a| a as f64 * scale).view(), self.params.bits)
    }

    fn dense_q(&mut self, idx: usize, x: &QuantizedTensor) -> Result<QuantizedTensor> {
        let (acc, scale) = self.dense(idx, x, true)?;
        self.requantize(&acc, scale)
    }

    /// Graph convolution with MLP1 run once per node.
    fn conv(&mut self, c: usize, x: &QuantizedTensor, calls: &mut u64) -> Result<QuantizedTensor> {
        let [ia, ib, id, ie] = layer::CONV[c];
        let m = x.shape().0;
        let u = self.dense_q(ia, x)?;
        let u = self.dense_q(ib, &u)?;
        *calls += m as u64;
        // One shared scale, so the maximum can be taken on codes.
        let width = u.shape().1;
        let agg = Array2::from_shape_fn((m, width), |(i, f)| {
            (0..m)
                .filter(|&j| j != i)
                .map(|j| u.codes[(j, f)])
                .max()
                .unwrap_or(0)
        });
        let agg = QuantizedTensor {
            codes: agg,
            scale: u.scale,
            bits: u.bits,
        };
        let joined = concatenate(Axis(1), &[x.dequantize().view(), agg.dequantize().view()])
            .expect("rows agree");
        let combined = quantize_any(joined.view(), self.params.bits)?;
        let v = self.dense_q(id, &combined)?;
        self.dense_q(ie, &v)
    }
}

impl QuantizedParams {
    /// Fixed-point forward pass of one satellite.
    pub fn forward(
        &self,
        hk: ArrayView2<Complex64>,
        power: f64,
        cfg: &AcceleratorConfig,
    ) -> Result<QuantOutput> {
        cfg.validate()?;
        if cfg.bits != self.bits {
            return Err(Error::invalid(format!(
                "parameters are {}-bit, accelerator is {}-bit",
                self.bits, cfg.bits
            )));
        }
        let (m, n) = hk.dim();
        if n != self.dims.n_antennas {
            return Err(Error::invalid(format!(
                "network expects {} antennas, channel has {n}",
                self.dims.n_antennas
            )));
        }
        if m == 0 || !(power > 0.0) {
            return Err(Error::invalid(
                "need at least one user and a positive power budget",
            ));
        }
        let mut run = Run {
            params: self,
            cfg,
            compute: [0; LAYER_COUNT],
        };
        let x = quantize_any((embed_input(hk) * self.input_scale).view(), self.bits)?;
        let x = run.dense_q(layer::INPUT[0], &x)?;
        let mut x = run.dense_q(layer::INPUT[1], &x)?;
        let mut mlp1_calls = 0;
        for c in 0..2 {
            x = run.conv(c, &x, &mut mlp1_calls)?;
        }
        let (acc, scale) = run.dense(layer::OUTPUT, &x, false)?;

        // Post-processing in floating point.
        let y = acc.mapv(|a| a as f64 * scale);
        let mut w = complex_output(y.view());
        let current: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        let gain = if current < ZERO_POWER {
            0.0
        } else {
            (power / current).sqrt()
        };
        w.mapv_inplace(|z| z * gain);

        let shapes = layer_shapes(&self.dims, m);
        let layers = shapes
            .iter()
            .zip(layer::NAMES)
            .zip(run.compute)
            .map(|((s, name), compute)| LayerLatency::new(name, s, compute, cfg))
            .collect();
        Ok(QuantOutput {
            w,
            report: LatencyReport::assemble(layers, &shapes[0], cfg),
            mlp1_calls,
        })
    }
}

/// Quantize `params` to `cfg.bits` and run one satellite.
pub fn quantized_forward(
    params: &GnnParams,
    hk: ArrayView2<Complex64>,
    power: f64,
    cfg: &AcceleratorConfig,
) -> Result<QuantOutput> {
    quantize_params(params, cfg.bits)?.forward(hk, power, cfg)
}

/// Fixed-point beamformers of every satellite. `sets` holds one entry when
/// weights are tied.
pub fn quantized_beamformers(
    sets: &[QuantizedParams],
    h: &CTensor3,
    power: f64,
    cfg: &AcceleratorConfig,
) -> Result<BeamformerSet> {
    let (k, m, n) = h.dims();
    if sets.is_empty() || (sets.len() != 1 && sets.len() != k) {
        return Err(Error::invalid(format!(
            "{} parameter sets for {k} satellites",
            sets.len()
        )));
    }
    let mut w = CTensor3::zeros(k, m, n);
    for kk in 0..k {
        let hk = ArrayView2::from_shape((m, n), h.block(kk)).expect("block shape");
        let out = sets[if sets.len() == 1 { 0 } else { kk }].forward(hk, power, cfg)?;
        w.block_mut(kk)
            .iter_mut()
            .zip(out.w.iter())
            .for_each(|(d, s)| *d = *s);
    }
    Ok(BeamformerSet::new(w, power, PowerScope::PerSatellite))
}

pub fn write_quantized_to<W: Write>(mut out: W, q: &QuantizedParams) -> Result<()> {
    let dtype = if q.bits == 8 {
        DataType::Int8
    } else {
        DataType::Int16
    };
    write_header(&mut out, &q.dims, q.input_scale, dtype, q.layers.len())?;
    for l in &q.layers {
        let (rows, cols) = l.weight.shape();
        out.write_all(&(rows as u32).to_le_bytes())?;
        out.write_all(&(cols as u32).to_le_bytes())?;
        out.write_all(&l.weight.scale.to_le_bytes())?;
        out.write_all(&l.bias.scale.to_le_bytes())?;
        for &c in &l.weight.codes {
            if q.bits == 8 {
                out.write_all(&(c as i8).to_le_bytes())?;
            } else {
                out.write_all(&(c as i16).to_le_bytes())?;
            }
        }
        for &c in &l.bias.codes {
            out.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_quantized_from<R: Read>(mut input: R) -> Result<QuantizedParams> {
    let header = read_header(&mut input)?;
    let bits = match header.dtype {
        DataType::Int8 => 8,
        DataType::Int16 => 16,
        DataType::F64 => return Err(Error::Format("container holds float parameters".into())),
    };
    let mut layers = Vec::with_capacity(header.layers);
    for &(fan_in, fan_out) in &header.dims.layer_shapes() {
        let rows = read_u32(&mut input)? as usize;
        let cols = read_u32(&mut input)? as usize;
        if (rows, cols) != (fan_in, fan_out) {
            return Err(Error::Format(format!(
                "layer shape ({rows}, {cols}) does not match dims"
            )));
        }
        let w_scale = read_f64(&mut input)?;
        let b_scale = read_f64(&mut input)?;
        let mut codes = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            codes.push(if bits == 8 {
                let mut b = [0u8; 1];
                input.read_exact(&mut b)?;
                i8::from_le_bytes(b) as i32
            } else {
                let mut b = [0u8; 2];
                input.read_exact(&mut b)?;
                i16::from_le_bytes(b) as i32
            });
        }
        let mut bias = Vec::with_capacity(cols);
        for _ in 0..cols {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            bias.push(i32::from_le_bytes(b));
        }
        layers.push(QuantizedLayer {
            weight: QuantizedTensor {
                codes: Array2::from_shape_vec((rows, cols), codes).expect("shape"),
                scale: w_scale,
                bits,
            },
            bias: QuantizedTensor {
                codes: Array2::from_shape_vec((1, cols), bias).expect("shape"),
                scale: b_scale,
                bits: 32,
            },
        });
    }
    Ok(QuantizedParams {
        dims: header.dims,
        input_scale: header.input_scale,
        bits,
        layers,
    })
}

pub fn write_quantized(path: &Path, q: &QuantizedParams) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_quantized_to(&mut out, q)?;
    out.flush()?;
    Ok(())
}

pub fn read_quantized(path: &Path) -> Result<QuantizedParams> {
    read_quantized_from(BufReader::new(File::open(path)?))
}
