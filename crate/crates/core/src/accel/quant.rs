use ndarray::{Array2, ArrayView2};

use super::AcceleratorConfig;
use crate::error::{Error, Result};

/// Symmetric per-tensor fixed point: `value = code * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub codes: Array2<i32>,
    pub scale: f64,
    pub bits: u32,
}

impl QuantizedTensor {
    pub fn shape(&self) -> (usize, usize) {
        self.codes.dim()
    }

    pub fn max_code(&self) -> i32 {
        self.codes.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn dequantize(&self) -> Array2<f64> {
        self.codes.mapv(|c| c as f64 * self.scale)
    }
}

/// Largest representable code magnitude.
pub fn max_code(bits: u32) -> i64 {
    (1i64 << (bits - 1)) - 1
}

pub(crate) fn quantize_any(x: ArrayView2<f64>, bits: u32) -> Result<QuantizedTensor> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            layer: "quantizer input".into(),
        });
    }
    let peak = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let q = max_code(bits) as f64;
    let scale = if peak == 0.0 { 1.0 } else { peak / q };
    // f64::round rounds half away from zero.
    let codes = x.mapv(|v| (v / scale).round().clamp(-q, q) as i32);
    Ok(QuantizedTensor { codes, scale, bits })
}

/// Quantize to 8 or 16 bits.
pub fn quantize(x: ArrayView2<f64>, bits: u32) -> Result<QuantizedTensor> {
    if bits != 8 && bits != 16 {
        return Err(Error::invalid(format!(
            "bit width must be 8 or 16, got {bits}"
        )));
    }
    quantize_any(x, bits)
}

/// Accumulator width used for products of `bits`-bit codes.
///
/// 8-bit codes accumulate in 32 bits. A 32-bit accumulator would cap 16-bit
/// products at an inner dimension of 2, so 16-bit codes get 64 bits.
pub fn accumulator_bits(bits: u32) -> u32 {
    if bits <= 8 {
        32
    } else {
        64
    }
}

/// Longest inner dimension whose worst-case sum fits the accumulator.
pub fn max_inner_dim(bits: u32) -> u64 {
    let per_product = 1u128 << (2 * (bits - 1));
    ((1u128 << (accumulator_bits(bits) - 1)) / per_product).min(u64::MAX as u128) as u64
}

/// Integer product and its modeled cycle count.
#[derive(Debug, Clone, PartialEq)]
pub struct GemmResult {
    pub acc: Array2<i64>,
    pub cycles: u64,
}

/// Output-stationary systolic-array cycles for an `m x k` by `k x n`
/// product: each output tile of at most `T_m x T_n` takes
/// `ceil(tm/S) ceil(tn/S)` array passes per `k`-chunk of at most `T_k`, and
/// each pass costs the chunk length plus `2S - 2` fill and drain.
pub fn gemm_cycles(m: usize, k: usize, n: usize, cfg: &AcceleratorConfig) -> u64 {
    let s = cfg.sa_size;
    let chunks = |len: usize, tile: usize| {
        (0..len)
            .step_by(tile)
            .map(move |start| tile.min(len - start))
    };
    let mut cycles = 0u64;
    for tm in chunks(m, cfg.tile_m) {
        for tn in chunks(n, cfg.tile_n) {
            let passes = (tm.div_ceil(s) * tn.div_ceil(s)) as u64;
            for tk in chunks(k, cfg.tile_k) {
                cycles += passes * (tk + 2 * s - 2) as u64;
            }
        }
    }
    cycles
}

/// Exact integer product of code matrices on the modeled array.
pub fn sa_gemm(
    a: &QuantizedTensor,
    b: &QuantizedTensor,
    cfg: &AcceleratorConfig,
) -> Result<GemmResult> {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    if k != k2 {
        return Err(Error::invalid(format!(
            "inner dimensions differ: {k} vs {k2}"
        )));
    }
    let bits = a.bits.max(b.bits);
    if k as u64 > max_inner_dim(bits) {
        return Err(Error::Capacity(format!(
            "inner dimension {k} overflows a {}-bit accumulator for {bits}-bit codes",
            accumulator_bits(bits)
        )));
    }
    let mut acc = Array2::<i64>::zeros((m, n));
    for i in 0..m {
        let mut row = acc.row_mut(i);
        for p in 0..k {
            let av = a.codes[(i, p)] as i64;
            if av == 0 {
                continue;
            }
            for (dst, &bv) in row.iter_mut().zip(b.codes.row(p)) {
                *dst += av * bv as i64;
            }
        }
    }
    Ok(GemmResult {
        acc,
        cycles: gemm_cycles(m, k, n, cfg),
    })
}
