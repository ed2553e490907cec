//! The model container file format.
//!
//! Layout (all multi-byte integers little-endian):
//!
//! ```text
//! magic "SBNN" | u8 version (1) | u8 codec id | u8 layer count
//! per layer:
//!   u8 D | D x u16 dimension sizes | f32 alpha' | f32 beta'
//!   per-output-neuron f32 thresholds, then comparator direction bits
//!     (1 = Ge), LSB-first, padded to a byte (absent for the output layer)
//!   codec metadata: RLE -> u16 chunk width;
//!                   HE  -> u16 table length + (u32 symbol, u8 code length) entries
//!   u32 payload bit length | payload bytes
//! after the last layer:
//!   per output neuron f32 scale, f32 bias (the folded output batchnorm)
//!   f32 target_ec | f32 gamma | u32 epochs | u64 seed
//! ```

use crate::bitio::BitPayload;
use crate::codecs::{self, Codec, EncodedLayer};
use crate::domain::AffineBinaryDomain;
use crate::error::{Result, SbnnError};
use crate::model::{Comparator, ModelMetadata, OutputAffine, SbnnLayer, SbnnModel};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"SBNN";
pub const VERSION: u8 = 1;

fn put_u16(w: &mut impl Write, v: u16) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32(w: &mut impl Write, v: f32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn get_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

pub fn write_model(model: &SbnnModel, codec: Codec, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, codec.id()])?;
    let n_layers = u8::try_from(model.layers().len())
        .map_err(|_| SbnnError::Format("more than 255 layers".into()))?;
    w.write_all(&[n_layers])?;

    for layer in model.layers() {
        let enc = codecs::encode(layer.weights(), codec)?;
        write_layer(layer, &enc, w)?;
    }

    let out = model.layers().last().unwrap();
    let affine = out
        .output_affine()
        .ok_or_else(|| SbnnError::Format("output layer missing folded batchnorm".into()))?;
    for i in 0..out.out_dim() {
        put_f32(w, affine.scale[i])?;
        put_f32(w, affine.bias[i])?;
    }

    let md = model.metadata();
    put_f32(w, md.target_ec)?;
    put_f32(w, md.gamma)?;
    put_u32(w, md.epochs)?;
    w.write_all(&md.seed.to_le_bytes())?;
    Ok(())
}

fn write_layer(layer: &SbnnLayer, enc: &EncodedLayer, w: &mut impl Write) -> Result<()> {
    let dims = layer.weights().dims();
    let d = u8::try_from(dims.len())
        .map_err(|_| SbnnError::Format("more than 255 dimensions".into()))?;
    w.write_all(&[d])?;
    for &dim in dims {
        let dim16 = u16::try_from(dim)
            .map_err(|_| SbnnError::Format(format!("dimension {dim} exceeds 16 bits")))?;
        put_u16(w, dim16)?;
    }
    put_f32(w, layer.domain().alpha())?;
    put_f32(w, layer.domain().beta())?;

    if !layer.is_output() {
        for &t in layer.thresholds() {
            put_f32(w, t)?;
        }
        let mut packed = vec![0u8; layer.out_dim().div_ceil(8)];
        for (i, c) in layer.comparators().iter().enumerate() {
            if c.bit() {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        w.write_all(&packed)?;
    }

    match enc.codec {
        Codec::Ne | Codec::Ie => {}
        Codec::Rle => {
            let c = enc
                .rle_c
                .ok_or_else(|| SbnnError::Format("RLE layer missing chunk width".into()))?;
            put_u16(w, c)?;
        }
        Codec::He => {
            let table = enc
                .huffman_table
                .as_ref()
                .ok_or_else(|| SbnnError::Format("HE layer missing code table".into()))?;
            put_u16(w, table.len() as u16)?;
            for &(sym, len) in table {
                put_u32(w, sym)?;
                w.write_all(&[len])?;
            }
        }
    }

    let bit_len = u32::try_from(enc.payload.bit_len)
        .map_err(|_| SbnnError::Format("payload exceeds 32-bit bit length".into()))?;
    put_u32(w, bit_len)?;
    w.write_all(&enc.payload.bytes)?;
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<SbnnModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SbnnError::Format(format!("bad magic {magic:02x?}")));
    }
    let version = get_u8(r)?;
    if version != VERSION {
        return Err(SbnnError::Format(format!("unsupported version {version}")));
    }
    let codec = Codec::from_id(get_u8(r)?)?;
    let n_layers = get_u8(r)? as usize;
    if n_layers == 0 {
        return Err(SbnnError::Format("container has no layers".into()));
    }

    struct RawLayer {
        enc: EncodedLayer,
        domain: AffineBinaryDomain,
        thresholds: Vec<f32>,
        comparators: Vec<Comparator>,
    }

    let mut raw = Vec::with_capacity(n_layers);
    for idx in 0..n_layers {
        let is_output = idx == n_layers - 1;
        let d = get_u8(r)? as usize;
        if d == 0 {
            return Err(SbnnError::Format(format!("layer {idx} has zero dimensions")));
        }
        let mut dims = Vec::with_capacity(d);
        for _ in 0..d {
            dims.push(get_u16(r)? as usize);
        }
        let alpha = get_f32(r)?;
        let beta = get_f32(r)?;
        let domain = AffineBinaryDomain::zero_one(alpha, beta)?;

        let out_dim = dims[0];
        let (thresholds, comparators) = if is_output {
            (Vec::new(), Vec::new())
        } else {
            let mut t = Vec::with_capacity(out_dim);
            for _ in 0..out_dim {
                t.push(get_f32(r)?);
            }
            let mut packed = vec![0u8; out_dim.div_ceil(8)];
            r.read_exact(&mut packed)?;
            let c = (0..out_dim)
                .map(|i| Comparator::from_bit(packed[i / 8] >> (i % 8) & 1 == 1))
                .collect();
            (t, c)
        };

        let mut rle_c = None;
        let mut huffman_table = None;
        match codec {
            Codec::Ne | Codec::Ie => {}
            Codec::Rle => rle_c = Some(get_u16(r)?),
            Codec::He => {
                let len = get_u16(r)? as usize;
                let mut table = Vec::with_capacity(len);
                for _ in 0..len {
                    let sym = get_u32(r)?;
                    let bits = get_u8(r)?;
                    table.push((sym, bits));
                }
                huffman_table = Some(table);
            }
        }

        let bit_len = get_u32(r)? as usize;
        let mut bytes = vec![0u8; bit_len.div_ceil(8)];
        r.read_exact(&mut bytes)?;
        raw.push(RawLayer {
            enc: EncodedLayer {
                codec,
                dims,
                payload: BitPayload { bytes, bit_len },
                rle_c,
                huffman_table,
            },
            domain,
            thresholds,
            comparators,
        });
    }

    let last_out = raw.last().unwrap().enc.dims[0];
    let mut scale = Vec::with_capacity(last_out);
    let mut bias = Vec::with_capacity(last_out);
    for _ in 0..last_out {
        scale.push(get_f32(r)?);
        bias.push(get_f32(r)?);
    }

    let metadata = ModelMetadata {
        target_ec: get_f32(r)?,
        gamma: get_f32(r)?,
        epochs: get_u32(r)?,
        seed: get_u64(r)?,
    };

    let n = raw.len();
    let mut layers = Vec::with_capacity(n);
    for (idx, rl) in raw.into_iter().enumerate() {
        let weights = codecs::decode(&rl.enc)?;
        let layer = if idx == n - 1 {
            SbnnLayer::output(
                weights,
                rl.domain,
                OutputAffine {
                    scale: std::mem::take(&mut scale),
                    bias: std::mem::take(&mut bias),
                },
            )?
        } else {
            SbnnLayer::hidden(weights, rl.domain, rl.thresholds, rl.comparators)?
        };
        layers.push(layer);
    }
    SbnnModel::new(layers, metadata)
}

pub fn write_model_file(model: &SbnnModel, codec: Codec, path: &std::path::Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(model, codec, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn read_model_file(path: &std::path::Path) -> Result<SbnnModel> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_model(&mut f)
}

/// Codec id recorded in a container file without decoding the whole model.
pub fn peek_codec(path: &std::path::Path) -> Result<Codec> {
    let mut f = std::fs::File::open(path)?;
    let mut head = [0u8; 6];
    f.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(SbnnError::Format("bad magic".into()));
    }
    Codec::from_id(head[5])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::PackedBitMatrix;
    use rand::{Rng, SeedableRng};

    fn toy_model(seed: u64) -> SbnnModel {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let mut bern = |rows: usize, cols: usize, p: f64| {
            let dense: Vec<u8> = (0..rows * cols)
                .map(|_| u8::from(rng.random::<f64>() < p))
                .collect();
            PackedBitMatrix::pack_bits(&dense, &[rows, cols]).unwrap()
        };
        let hidden = SbnnLayer::hidden(
            bern(6, 12, 0.3),
            AffineBinaryDomain::zero_one(-0.5, 2.0).unwrap(),
            (0..6).map(|i| i as f32 * 0.25 - 0.5).collect(),
            (0..6)
                .map(|i| if i % 2 == 0 { Comparator::Ge } else { Comparator::Le })
                .collect(),
        )
        .unwrap();
        let output = SbnnLayer::output(
            bern(3, 6, 0.5),
            AffineBinaryDomain::zero_one(-0.25, 0.4).unwrap(),
            OutputAffine {
                scale: vec![1.0, 0.5, 2.0],
                bias: vec![0.0, -0.125, 0.75],
            },
        )
        .unwrap();
        SbnnModel::new(
            vec![hidden, output],
            ModelMetadata {
                target_ec: 0.3,
                gamma: 0.1,
                epochs: 7,
                seed,
            },
        )
        .unwrap()
    }

    fn assert_models_equal(a: &SbnnModel, b: &SbnnModel) {
        assert_eq!(a.layers().len(), b.layers().len());
        assert_eq!(a.input_dim(), b.input_dim());
        assert_eq!(a.metadata(), b.metadata());
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            assert_eq!(la.weights(), lb.weights());
            assert_eq!(la.domain(), lb.domain());
            assert_eq!(la.thresholds(), lb.thresholds());
            assert_eq!(la.comparators(), lb.comparators());
            assert_eq!(la.output_affine(), lb.output_affine());
        }
    }

    #[test]
    fn roundtrip_all_codecs() {
        let model = toy_model(1);
        for codec in codecs::ALL_CODECS {
            let mut buf = Vec::new();
            write_model(&model, codec, &mut buf).unwrap();
            let back = read_model(&mut buf.as_slice()).unwrap();
            assert_models_equal(&model, &back);
        }
    }

    #[test]
    fn write_is_deterministic() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_model(&toy_model(2), Codec::He, &mut a).unwrap();
        write_model(&toy_model(2), Codec::He, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut buf = Vec::new();
        write_model(&toy_model(3), Codec::Ne, &mut buf).unwrap();
        buf[0] = b'X';
        assert!(read_model(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn bad_version_rejected() {
        let mut buf = Vec::new();
        write_model(&toy_model(3), Codec::Ne, &mut buf).unwrap();
        buf[4] = 99;
        assert!(read_model(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn truncation_rejected() {
        let mut buf = Vec::new();
        write_model(&toy_model(3), Codec::Rle, &mut buf).unwrap();
        buf.truncate(buf.len() - 9);
        assert!(read_model(&mut buf.as_slice()).is_err());
    }
}
