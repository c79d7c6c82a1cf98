//! Self-describing binary checkpoints.
//!
//! Layout: 4-byte magic, 1-byte format version, 3 reserved bytes, u32 LE
//! header length, JSON header, then three raw f64 LE blobs (parameters,
//! first moments, second moments). Floats are stored by bit pattern, so a
//! save/load cycle is exact, and a resumed run draws the same random
//! sequence it would have drawn uninterrupted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Adam, DiffusionError, Result};

const MAGIC: [u8; 4] = *b"DVDC";
const VERSION: u8 = 1;
const MAX_HEADER_LEN: usize = 64 << 20;

#[derive(Serialize, Deserialize)]
struct OptimizerState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    clip: f64,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: [u8; 32],
    word_pos: u128,
    stream: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: serde_json::Value,
    step: u64,
    optimizer: OptimizerState,
    rng: RngState,
    params_len: u64,
}

/// Everything needed to resume a run exactly where it stopped.
#[derive(Debug, Clone)]
pub struct CheckpointData {
    pub config: serde_json::Value,
    pub params: Vec<f64>,
    pub optimizer: Adam,
    pub rng: ChaCha8Rng,
    pub step: u64,
}

pub fn save_checkpoint(
    path: &Path,
    config: &serde_json::Value,
    params: &[f64],
    opt: &Adam,
    rng: &ChaCha8Rng,
    step: u64,
) -> Result<()> {
    if opt.len() != params.len() {
        return Err(DiffusionError::InvalidArgument(format!(
            "optimizer sized for {} params, saving {}",
            opt.len(),
            params.len()
        )));
    }
    let header = Header {
        config: config.clone(),
        step,
        optimizer: OptimizerState {
            lr: opt.lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            clip: opt.clip,
            step: opt.step_count(),
        },
        rng: RngState {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
            stream: rng.get_stream(),
        },
        params_len: params.len() as u64,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| DiffusionError::Checkpoint(format!("header encode: {e}")))?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION, 0, 0, 0])?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    write_f64s(&mut w, params)?;
    let (m, v) = opt.moments();
    write_f64s(&mut w, m)?;
    write_f64s(&mut w, v)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointData> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(DiffusionError::Checkpoint(format!(
            "bad magic {magic:?}, not a checkpoint file"
        )));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    if ver[0] != VERSION {
        return Err(DiffusionError::Checkpoint(format!(
            "unsupported format version {}",
            ver[0]
        )));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    if header_len > MAX_HEADER_LEN {
        return Err(DiffusionError::Checkpoint(format!(
            "implausible header length {header_len}"
        )));
    }
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| DiffusionError::Checkpoint(format!("header decode: {e}")))?;

    let n = header.params_len as usize;
    let params = read_f64s(&mut r, n)?;
    let m = read_f64s(&mut r, n)?;
    let v = read_f64s(&mut r, n)?;

    let o = &header.optimizer;
    let optimizer = Adam::from_state(o.lr, o.beta1, o.beta2, o.eps, o.clip, m, v, o.step)?;

    let mut rng = ChaCha8Rng::from_seed(header.rng.seed);
    rng.set_stream(header.rng.stream);
    rng.set_word_pos(header.rng.word_pos);

    Ok(CheckpointData {
        config: header.config,
        params,
        optimizer,
        rng,
        step: header.step,
    })
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}
