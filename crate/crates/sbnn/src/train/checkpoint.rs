//! Sidecar checkpoint holding the full-precision training state: latent
//! weights, domain parameters, and batchnorm buffers as 32-bit floats,
//! layer-ordered, so a run can resume where it stopped.
//!
//! Layout: magic "SBLT", u8 version, u8 layer count; per layer u16 out,
//! u16 in, f32 alpha'', f32 beta'', f32 eps, f32 momentum, then gamma,
//! beta, running mean, running var (out each) and the latent matrix
//! (out*in, row-major); trailer f32 target_ec, f32 gamma, u32 epochs done,
//! u64 seed. Little-endian throughout. Optimizer state is not persisted;
//! a resumed run restarts its moment estimates.

use super::{BatchNorm1d, LatentLayer, LatentModel};
use crate::error::{Result, SbnnError};
use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SBLT";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone)]
pub struct LatentCheckpoint {
    pub model: LatentModel,
    pub target_ec: f32,
    pub gamma: f32,
    pub epochs_done: u32,
    pub seed: u64,
}

fn put_f32s(w: &mut impl Write, vals: &[f32]) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_latent(ckpt: &LatentCheckpoint, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    let n = u8::try_from(ckpt.model.layers.len())
        .map_err(|_| SbnnError::Format("more than 255 layers".into()))?;
    w.write_all(&[n])?;
    for layer in &ckpt.model.layers {
        let out = u16::try_from(layer.out_dim())
            .map_err(|_| SbnnError::Format("layer too large for checkpoint".into()))?;
        let inp = u16::try_from(layer.in_dim())
            .map_err(|_| SbnnError::Format("layer too large for checkpoint".into()))?;
        w.write_all(&out.to_le_bytes())?;
        w.write_all(&inp.to_le_bytes())?;
        put_f32s(w, &[layer.alpha, layer.beta, layer.bn.eps, layer.bn.momentum])?;
        put_f32s(w, &layer.bn.gamma)?;
        put_f32s(w, &layer.bn.beta)?;
        put_f32s(w, &layer.bn.running_mean)?;
        put_f32s(w, &layer.bn.running_var)?;
        put_f32s(w, layer.latent.as_slice().unwrap())?;
    }
    put_f32s(w, &[ckpt.target_ec, ckpt.gamma])?;
    w.write_all(&ckpt.epochs_done.to_le_bytes())?;
    w.write_all(&ckpt.seed.to_le_bytes())?;
    Ok(())
}

pub fn read_latent(r: &mut impl Read) -> Result<LatentCheckpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SbnnError::Format(format!("bad checkpoint magic {magic:02x?}")));
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head)?;
    if head[0] != VERSION {
        return Err(SbnnError::Format(format!("unsupported checkpoint version {}", head[0])));
    }
    let n_layers = head[1] as usize;
    if n_layers == 0 {
        return Err(SbnnError::Format("checkpoint has no layers".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut d = [0u8; 4];
        r.read_exact(&mut d)?;
        let out = u16::from_le_bytes([d[0], d[1]]) as usize;
        let inp = u16::from_le_bytes([d[2], d[3]]) as usize;
        let head = get_f32s(r, 4)?;
        let gamma = get_f32s(r, out)?;
        let beta = get_f32s(r, out)?;
        let running_mean = get_f32s(r, out)?;
        let running_var = get_f32s(r, out)?;
        let latent = get_f32s(r, out * inp)?;
        layers.push(LatentLayer {
            latent: Array2::from_shape_vec((out, inp), latent)
                .map_err(|e| SbnnError::Format(e.to_string()))?,
            alpha: head[0],
            beta: head[1],
            bn: BatchNorm1d {
                gamma,
                beta,
                running_mean,
                running_var,
                eps: head[2],
                momentum: head[3],
            },
        });
    }
    let trailer = get_f32s(r, 2)?;
    let mut e = [0u8; 4];
    r.read_exact(&mut e)?;
    let mut s = [0u8; 8];
    r.read_exact(&mut s)?;
    let input_dim = layers[0].in_dim();
    Ok(LatentCheckpoint {
        model: LatentModel { layers, input_dim },
        target_ec: trailer[0],
        gamma: trailer[1],
        epochs_done: u32::from_le_bytes(e),
        seed: u64::from_le_bytes(s),
    })
}

pub fn write_latent_file(ckpt: &LatentCheckpoint, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_latent(ckpt, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn read_latent_file(path: &Path) -> Result<LatentCheckpoint> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_latent(&mut f)
}
