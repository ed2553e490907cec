//! Index encoding: per row, the number of one-valued columns followed by
//! their indexes in ascending order.
//!
//! Rows are the slices over the last dimension. Indexes take
//! n_bits = ceil(log2(cols)) bits (forced to 1 when cols == 1, where the
//! true ceiling of 0 would make the stream unreadable); the per-row count
//! field takes n_bits + 1 bits so the full-row count `cols` is
//! representable. A count field is emitted even for empty rows.

use super::{ceil_log2, Codec, EncodedLayer};
use crate::bitio::{BitReader, BitWriter};
use crate::bits::PackedBitMatrix;
use crate::error::{Result, SbnnError};

fn index_bits(cols: usize) -> u32 {
    ceil_log2(cols as u64).max(1)
}

pub fn ie_encode(m: &PackedBitMatrix) -> Result<EncodedLayer> {
    if m.dims().len() < 2 {
        return Err(SbnnError::Size(format!(
            "index encoding needs at least 2 dims, got {:?}",
            m.dims()
        )));
    }
    let cols = m.index_cols();
    if cols == 0 {
        return Err(SbnnError::Size("last dimension must be nonzero".into()));
    }
    let rows = m.index_rows();
    let n_bits = index_bits(cols);
    let mut w = BitWriter::new();
    for r in 0..rows {
        let base = r * cols;
        let indexes: Vec<usize> = (0..cols).filter(|&i| m.bit(base + i)).collect();
        w.write_bits(indexes.len() as u64, n_bits + 1);
        for idx in indexes {
            w.write_bits(idx as u64, n_bits);
        }
    }
    Ok(EncodedLayer {
        codec: Codec::Ie,
        dims: m.dims().to_vec(),
        payload: w.into_payload(),
        rle_c: None,
        huffman_table: None,
    })
}

pub fn ie_decode(e: &EncodedLayer) -> Result<PackedBitMatrix> {
    if e.codec != Codec::Ie {
        return Err(SbnnError::Format("not an IE layer".into()));
    }
    if e.dims.len() < 2 || *e.dims.last().unwrap() == 0 {
        return Err(SbnnError::Size(format!("bad IE dims {:?}", e.dims)));
    }
    let cols = *e.dims.last().unwrap();
    let rows: usize = e.dims[..e.dims.len() - 1].iter().product();
    let n_bits = index_bits(cols);
    let mut r = BitReader::new(&e.payload);
    let mut dense = vec![0u8; rows * cols];
    for row in 0..rows {
        let count = r.read_bits(n_bits + 1)? as usize;
        if count > cols {
            return Err(SbnnError::corrupt(
                r.pos(),
                format!("row {row} claims {count} indexes in {cols} columns"),
            ));
        }
        let mut prev: Option<usize> = None;
        for _ in 0..count {
            let idx = r.read_bits(n_bits)? as usize;
            if idx >= cols {
                return Err(SbnnError::corrupt(
                    r.pos(),
                    format!("index {idx} out of range for {cols} columns"),
                ));
            }
            if prev.is_some_and(|p| idx <= p) {
                return Err(SbnnError::corrupt(
                    r.pos(),
                    format!("index {idx} not strictly ascending in row {row}"),
                ));
            }
            prev = Some(idx);
            dense[row * cols + idx] = 1;
        }
    }
    r.expect_exhausted()?;
    PackedBitMatrix::pack_bits(&dense, &e.dims)
}
