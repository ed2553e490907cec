//! Run-length encoding of the zero runs, chunked into c-bit groups.
//!
//! Only zero runs are stored. A run length that fits in c bits is written
//! as one c-bit group followed by a 1 terminator bit; longer counts are
//! split into c-bit groups, most significant group first, each non-final
//! group followed by a 0 continuation bit and the last by the 1 terminator.
//! Each sub-matrix is prefixed with a 32-bit count of its encoded runs.

use super::{ceil_log2, extract_zero_runs, rebuild_row, Codec, EncodedLayer};
use crate::bitio::{BitReader, BitWriter};
use crate::bits::PackedBitMatrix;
use crate::error::{Result, SbnnError};

/// Upper limit on the chunk width; run lengths are far below 2^32 for any
/// layer the container can hold.
const MAX_C: u16 = 32;

fn value_bits(v: u64) -> u32 {
    if v == 0 {
        1
    } else {
        64 - v.leading_zeros()
    }
}

fn chunk_cost_bits(v: u64, c: u16) -> u64 {
    let groups = value_bits(v).div_ceil(c as u32) as u64;
    groups * (c as u64 + 1)
}

fn write_chunked(w: &mut BitWriter, v: u64, c: u16) {
    let groups = value_bits(v).div_ceil(c as u32);
    for g in (0..groups).rev() {
        let part = (v >> (g * c as u32)) & ((1u64 << c) - 1);
        w.write_bits(part, c as u32);
        w.write_bit(g == 0);
    }
}

fn read_chunked(r: &mut BitReader, c: u16) -> Result<u64> {
    let mut v = 0u64;
    let mut used = 0u32;
    loop {
        let part = r.read_bits(c as u32)?;
        used += c as u32;
        if used > 64 {
            return Err(SbnnError::corrupt(r.pos(), "run-length exceeds 64 bits"));
        }
        v = (v << c) | part;
        if r.read_bit()? {
            return Ok(v);
        }
    }
}

pub fn rle_encode(m: &PackedBitMatrix, c: u16) -> Result<EncodedLayer> {
    if c == 0 || c > MAX_C {
        return Err(SbnnError::Config(format!(
            "chunk width must be in 1..={MAX_C}, got {c}"
        )));
    }
    let runs = extract_zero_runs(m);
    let mut w = BitWriter::new();
    let mut cursor = 0usize;
    for &count in &runs.per_row {
        w.write_bits(count as u64, 32);
        for &run in &runs.runs[cursor..cursor + count as usize] {
            write_chunked(&mut w, run, c);
        }
        cursor += count as usize;
    }
    Ok(EncodedLayer {
        codec: Codec::Rle,
        dims: m.dims().to_vec(),
        payload: w.into_payload(),
        rle_c: Some(c),
        huffman_table: None,
    })
}

/// Picks the chunk width minimizing the encoded size over the candidate set
/// {1, ..., ceil(log2(largest run))}, ties toward the smaller width.
pub fn choose_rle_c(m: &PackedBitMatrix) -> Result<u16> {
    if m.is_empty() {
        return Err(SbnnError::Size("cannot choose c for an empty matrix".into()));
    }
    let runs = extract_zero_runs(m);
    let c_max = (ceil_log2(runs.max_run).max(1) as u16).min(MAX_C);
    let mut best = (u64::MAX, 1u16);
    for c in 1..=c_max {
        let total: u64 = runs.runs.iter().map(|&r| chunk_cost_bits(r, c)).sum();
        if total < best.0 {
            best = (total, c);
        }
    }
    Ok(best.1)
}

pub fn rle_decode(e: &EncodedLayer) -> Result<PackedBitMatrix> {
    if e.codec != Codec::Rle {
        return Err(SbnnError::Format("not an RLE layer".into()));
    }
    let c = e
        .rle_c
        .ok_or_else(|| SbnnError::Format("RLE layer missing chunk width".into()))?;
    if c == 0 || c > MAX_C {
        return Err(SbnnError::Format(format!("bad RLE chunk width {c}")));
    }
    let n: usize = e.dims.iter().product();
    let rows = e.dims[0];
    let row_len = n.checked_div(rows).unwrap_or(0);
    let mut r = BitReader::new(&e.payload);
    let mut dense = Vec::with_capacity(n);
    for row in 0..rows {
        let declared = r.read_bits(32)? as u32;
        let got = rebuild_row(&mut dense, row_len, || {
            read_chunked(&mut r, c).map(|v| (v, r.pos()))
        })?;
        if got != declared {
            return Err(SbnnError::corrupt(
                r.pos(),
                format!("row {row} declared {declared} runs, stream encoded {got}"),
            ));
        }
    }
    r.expect_exhausted()?;
    PackedBitMatrix::pack_bits(&dense, &e.dims)
}
