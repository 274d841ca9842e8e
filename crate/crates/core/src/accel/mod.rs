//! Behavioral model of a fixed-point GNN accelerator.
//!
//! Weights and activations are quantized per tensor, every dense layer runs
//! as an integer GEMM on an `S x S` output-stationary systolic array, and
//! latency is accounted per layer as `max(compute, memory)` since weight
//! tiles are double buffered. Inter-layer activations stay on chip, so only
//! the network input and output cross the bus besides parameters.

mod forward;
mod quant;

use std::io::Write;

pub use forward::{
    quantize_params, quantized_beamformers, quantized_forward, read_quantized, read_quantized_from,
    write_quantized, write_quantized_to, QuantOutput, QuantizedLayer, QuantizedParams,
};
pub use quant::{
    accumulator_bits, gemm_cycles, max_code, max_inner_dim, quantize, sa_gemm, GemmResult,
    QuantizedTensor,
};

use crate::error::{Error, Result};
use crate::gnn::{layer, GnnDims, LAYER_COUNT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceleratorConfig {
    /// PE grid is `sa_size x sa_size`.
    pub sa_size: usize,
    /// Off-chip bytes per cycle.
    pub bus_bytes_per_cycle: usize,
    pub clock_period_ns: f64,
    pub tile_m: usize,
    pub tile_k: usize,
    pub tile_n: usize,
    pub bits: u32,
}

impl Default for AcceleratorConfig {
    fn default() -> Self {
        Self {
            sa_size: 16,
            bus_bytes_per_cycle: 8,
            clock_period_ns: 10.0,
            tile_m: 16,
            tile_k: 64,
            tile_n: 16,
            bits: 8,
        }
    }
}

impl AcceleratorConfig {
    pub fn with_bits(self, bits: u32) -> Self {
        Self { bits, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sa_size == 0 || self.tile_m == 0 || self.tile_k == 0 || self.tile_n == 0 {
            return Err(Error::invalid(
                "array size and tile dims must be at least 1",
            ));
        }
        if self.bus_bytes_per_cycle == 0 {
            return Err(Error::invalid("bus width must be positive"));
        }
        if !(self.clock_period_ns > 0.0) {
            return Err(Error::invalid("clock period must be positive"));
        }
        if self.bits != 8 && self.bits != 16 {
            return Err(Error::invalid(format!(
                "bit width must be 8 or 16, got {}",
                self.bits
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Compute,
    Memory,
}

impl Bound {
    pub fn tag(self) -> &'static str {
        match self {
            Bound::Compute => "compute-bound",
            Bound::Memory => "memory-bound",
        }
    }
}

/// One dense layer as the accelerator sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    /// Activation rows per inference (the number of nodes).
    pub batch: usize,
    pub rows: usize,
    pub cols: usize,
    /// Input activations come from off-chip memory.
    pub loads_input: bool,
    /// Output activations go back to off-chip memory.
    pub stores_output: bool,
}

impl LayerShape {
    /// Weight-only layer with a single activation row and no activation
    /// traffic.
    pub fn weights(rows: usize, cols: usize) -> Self {
        Self {
            batch: 1,
            rows,
            cols,
            loads_input: false,
            stores_output: false,
        }
    }

    /// Bytes crossing the bus: weights at `bits`, biases at accumulator
    /// width, plus boundary activations at `bits`.
    pub fn bytes_moved(&self, bits: u32) -> u64 {
        let word = |count: usize, width: u32| (count as u64 * width as u64).div_ceil(8);
        let mut bytes =
            word(self.rows * self.cols, bits) + word(self.cols, quant::accumulator_bits(bits));
        if self.loads_input {
            bytes += word(self.batch * self.rows, bits);
        }
        if self.stores_output {
            bytes += word(self.batch * self.cols, bits);
        }
        bytes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerLatency {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub bits: u32,
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub effective_cycles: u64,
    pub bound: Bound,
}

impl LayerLatency {
    pub(crate) fn new(
        name: &str,
        shape: &LayerShape,
        compute_cycles: u64,
        cfg: &AcceleratorConfig,
    ) -> Self {
        let memory_cycles = shape
            .bytes_moved(cfg.bits)
            .div_ceil(cfg.bus_bytes_per_cycle as u64);
        let bound = if memory_cycles > compute_cycles {
            Bound::Memory
        } else {
            Bound::Compute
        };
        Self {
            name: name.to_string(),
            rows: shape.rows,
            cols: shape.cols,
            bits: cfg.bits,
            compute_cycles,
            memory_cycles,
            effective_cycles: compute_cycles.max(memory_cycles),
            bound,
        }
    }
}

/// `(compute_cycles, memory_cycles)` of one layer.
pub fn layer_latency(shape: &LayerShape, cfg: &AcceleratorConfig) -> (u64, u64) {
    let l = LayerLatency::new(
        "",
        shape,
        gemm_cycles(shape.batch, shape.rows, shape.cols, cfg),
        cfg,
    );
    (l.compute_cycles, l.memory_cycles)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub layers: Vec<LayerLatency>,
    /// First weight tile load, which nothing can hide.
    pub prologue_cycles: u64,
    pub total_cycles: u64,
    pub total_ms: f64,
    pub clock_period_ns: f64,
}

impl LatencyReport {
    pub(crate) fn assemble(
        layers: Vec<LayerLatency>,
        first: &LayerShape,
        cfg: &AcceleratorConfig,
    ) -> Self {
        let tile =
            (cfg.tile_k.min(first.rows) * cfg.tile_n.min(first.cols)) as u64 * cfg.bits as u64;
        let prologue_cycles = tile.div_ceil(8).div_ceil(cfg.bus_bytes_per_cycle as u64);
        let total_cycles = prologue_cycles + layers.iter().map(|l| l.effective_cycles).sum::<u64>();
        Self {
            layers,
            prologue_cycles,
            total_cycles,
            total_ms: total_cycles as f64 * cfg.clock_period_ns * 1e-6,
            clock_period_ns: cfg.clock_period_ns,
        }
    }

    /// `layer,rows,cols,bits,compute_cycles,memory_cycles,effective_cycles,bound_tag`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "layer,rows,cols,bits,compute_cycles,memory_cycles,effective_cycles,bound_tag"
        )?;
        for l in &self.layers {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                l.name,
                l.rows,
                l.cols,
                l.bits,
                l.compute_cycles,
                l.memory_cycles,
                l.effective_cycles,
                l.bound.tag()
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "total_cycles={} total_ms={:.6}",
            self.total_cycles, self.total_ms
        )
    }
}

/// Shapes of the eleven dense layers for `m` nodes.
pub fn layer_shapes(dims: &GnnDims, m: usize) -> [LayerShape; LAYER_COUNT] {
    let shapes = dims.layer_shapes();
    std::array::from_fn(|i| LayerShape {
        batch: m,
        rows: shapes[i].0,
        cols: shapes[i].1,
        loads_input: i == 0,
        stores_output: i == layer::OUTPUT,
    })
}

/// Analytic latency of one inference with `m` users.
pub fn latency_model(dims: &GnnDims, m: usize, cfg: &AcceleratorConfig) -> Result<LatencyReport> {
    dims.validate()?;
    cfg.validate()?;
    if m == 0 {
        return Err(Error::invalid("at least one user is required"));
    }
    let shapes = layer_shapes(dims, m);
    let layers = shapes
        .iter()
        .zip(layer::NAMES)
        .map(|(s, name)| LayerLatency::new(name, s, gemm_cycles(s.batch, s.rows, s.cols, cfg), cfg))
        .collect();
    Ok(LatencyReport::assemble(layers, &shapes[0], cfg))
}
