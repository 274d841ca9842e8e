//! Flat binary container for network parameters (little endian).
//!
//! ```text
//! magic b"SMGP"  version u32 = 1  dtype u8 (0 = f64, 8 = int8, 16 = int16)
//! n_antennas L1 L2 L4 L5 L7 L8 scale_factor   (u32 each)
//! input_scale f64
//! layer_count u32
//! per layer, in storage order:
//!   rows u32, cols u32
//!   dtype f64:      rows*cols weights f64 (row-major), cols biases f64
//!   dtype int8/16:  weight_scale f64, bias_scale f64,
//!                   rows*cols weight codes (i8 / i16), cols bias codes i32
//!                   (biases carry their own 32-bit scale)
//! ```
//!
//! The quantized variants are produced by the accelerator model.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Dense, GnnDims, GnnParams, LAYER_COUNT};
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 4] = b"SMGP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    F64,
    Int8,
    Int16,
}

impl DataType {
    pub fn tag(self) -> u8 {
        match self {
            DataType::F64 => 0,
            DataType::Int8 => 8,
            DataType::Int16 => 16,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(DataType::F64),
            8 => Ok(DataType::Int8),
            16 => Ok(DataType::Int16),
            t => Err(Error::Format(format!("unknown data type tag {t}"))),
        }
    }
}

pub(crate) fn write_header<W: Write>(
    out: &mut W,
    dims: &GnnDims,
    input_scale: f64,
    dtype: DataType,
    layers: usize,
) -> Result<()> {
    out.write_all(PARAMS_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[dtype.tag()])?;
    for v in [
        dims.n_antennas,
        dims.input_hidden,
        dims.input_out,
        dims.mlp1_hidden,
        dims.mlp1_out,
        dims.mlp2_hidden,
        dims.mlp2_out,
        dims.scale_factor,
    ] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    out.write_all(&input_scale.to_le_bytes())?;
    out.write_all(&(layers as u32).to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) struct Header {
    pub dims: GnnDims,
    pub input_scale: f64,
    pub dtype: DataType,
    pub layers: usize,
}

pub(crate) fn read_header<R: Read>(input: &mut R) -> Result<Header> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != PARAMS_MAGIC {
        return Err(Error::Format("not a parameter container".into()));
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version}"
        )));
    }
    let mut tag = [0u8; 1];
    input.read_exact(&mut tag)?;
    let dtype = DataType::from_tag(tag[0])?;
    let mut v = [0usize; 8];
    for slot in &mut v {
        *slot = read_u32(input)? as usize;
    }
    let dims = GnnDims {
        n_antennas: v[0],
        input_hidden: v[1],
        input_out: v[2],
        mlp1_hidden: v[3],
        mlp1_out: v[4],
        mlp2_hidden: v[5],
        mlp2_out: v[6],
        scale_factor: v[7],
    };
    let input_scale = read_f64(input)?;
    let layers = read_u32(input)? as usize;
    if layers != LAYER_COUNT {
        return Err(Error::Format(format!(
            "expected {LAYER_COUNT} layers, header says {layers}"
        )));
    }
    Ok(Header {
        dims,
        input_scale,
        dtype,
        layers,
    })
}

pub fn write_params_to<W: Write>(mut out: W, params: &GnnParams) -> Result<()> {
    write_header(
        &mut out,
        &params.dims,
        params.input_scale,
        DataType::F64,
        params.layers.len(),
    )?;
    for l in &params.layers {
        out.write_all(&(l.fan_in() as u32).to_le_bytes())?;
        out.write_all(&(l.fan_out() as u32).to_le_bytes())?;
        for v in l.weight.iter().chain(l.bias.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params_from<R: Read>(mut input: R) -> Result<GnnParams> {
    let header = read_header(&mut input)?;
    if header.dtype != DataType::F64 {
        return Err(Error::Format("container holds quantized parameters".into()));
    }
    let shapes = header.dims.layer_shapes();
    let mut layers = Vec::with_capacity(header.layers);
    for &(fan_in, fan_out) in &shapes {
        let rows = read_u32(&mut input)? as usize;
        let cols = read_u32(&mut input)? as usize;
        if (rows, cols) != (fan_in, fan_out) {
            return Err(Error::Format(format!(
                "layer shape ({rows}, {cols}) does not match dims ({fan_in}, {fan_out})"
            )));
        }
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weights.push(read_f64(&mut input)?);
        }
        let mut bias = Vec::with_capacity(cols);
        for _ in 0..cols {
            bias.push(read_f64(&mut input)?);
        }
        layers.push(Dense {
            weight: Array2::from_shape_vec((rows, cols), weights).expect("shape"),
            bias: Array1::from(bias),
        });
    }
    let params = GnnParams {
        dims: header.dims,
        input_scale: header.input_scale,
        layers,
    };
    params.validate()?;
    Ok(params)
}

pub fn write_params(path: &Path, params: &GnnParams) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_params_to(&mut out, params)?;
    out.flush()?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<GnnParams> {
    read_params_from(BufReader::new(File::open(path)?))
}
