//! Model plus optimizer state (little endian).
//!
//! ```text
//! magic b"SMCK"  version u32 = 1  set_count u32
//! set_count parameter containers (SMGP, f64)
//! has_state u8
//! if has_state: step u64, samples_seen u64, adam_t u64,
//!               per set: first moments then second moments, f64 in
//!               parameter storage order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AdamState, TrainState};
use crate::error::{Error, Result};
use crate::gnn::{read_params_from, write_params_to, GnnParams, MultiGnn};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SMCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MultiGnn,
    pub state: Option<TrainState>,
}

fn write_flat<W: Write>(out: &mut W, p: &GnnParams) -> Result<()> {
    for v in p.flat() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_flat_into<R: Read>(input: &mut R, p: &mut GnnParams) -> Result<()> {
    let mut b = [0u8; 8];
    for i in 0..p.len() {
        input.read_exact(&mut b)?;
        *p.get_mut(i) = f64::from_le_bytes(b);
    }
    Ok(())
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(ck.model.sets.len() as u32).to_le_bytes())?;
    for p in &ck.model.sets {
        write_params_to(&mut out, p)?;
    }
    match &ck.state {
        None => out.write_all(&[0])?,
        Some(st) => {
            out.write_all(&[1])?;
            for v in [st.step, st.samples_seen, st.adam.t] {
                out.write_all(&v.to_le_bytes())?;
            }
            for (m, v) in st.adam.m.iter().zip(&st.adam.v) {
                write_flat(&mut out, m)?;
                write_flat(&mut out, v)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(format!(
            "no checkpoint at {}; run the `train` subcommand first",
            path.display()
        )),
        _ => Error::Io(e),
    })?;
    let mut input = BufReader::new(file);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a checkpoint",
            path.display()
        )));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    input.read_exact(&mut word)?;
    let count = u32::from_le_bytes(word) as usize;
    if count == 0 {
        return Err(Error::Format("checkpoint holds no parameter sets".into()));
    }
    let sets = (0..count)
        .map(|_| read_params_from(&mut input))
        .collect::<Result<Vec<_>>>()?;
    let mut flag = [0u8; 1];
    input.read_exact(&mut flag)?;
    let model = MultiGnn { sets };
    let state = match flag[0] {
        0 => None,
        1 => {
            let step = read_u64(&mut input)?;
            let samples_seen = read_u64(&mut input)?;
            let mut adam = AdamState::new(&model);
            adam.t = read_u64(&mut input)?;
            for (m, v) in adam.m.iter_mut().zip(adam.v.iter_mut()) {
                read_flat_into(&mut input, m)?;
                read_flat_into(&mut input, v)?;
            }
            Some(TrainState {
                adam,
                step,
                samples_seen,
            })
        }
        f => return Err(Error::Format(format!("bad state flag {f}"))),
    };
    Ok(Checkpoint { model, state })
}
