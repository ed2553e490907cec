//! Canonical Huffman coding over the zero-run-length alphabet.
//!
//! Runs are extracted exactly as for RLE. The code table is stored as
//! (symbol, code length) pairs in canonical order; codes are reassigned
//! canonically on decode, so only lengths travel. Rows are self-delimiting:
//! decoding stops when the reconstructed sub-matrix reaches its known
//! length, so no per-row counts are stored.

use super::{extract_zero_runs, rebuild_row, Codec, EncodedLayer};
use crate::bitio::{BitReader, BitWriter};
use crate::bits::PackedBitMatrix;
use crate::error::{Result, SbnnError};
use std::collections::BTreeMap;

/// Code lengths from symbol frequencies, by pairwise merging of the two
/// lightest subtrees. A single-symbol alphabet gets a 1-bit code.
fn code_lengths(freqs: &BTreeMap<u64, u64>) -> Vec<(u64, u8)> {
    assert!(!freqs.is_empty());
    if freqs.len() == 1 {
        let (&sym, _) = freqs.iter().next().unwrap();
        return vec![(sym, 1)];
    }

    // leaves first, then merge nodes; ties broken by insertion order so the
    // lengths are deterministic
    #[derive(PartialEq, Eq)]
    struct Node {
        weight: u64,
        order: usize,
        idx: usize,
    }
    impl Ord for Node {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // reversed for a min-heap
            (other.weight, other.order).cmp(&(self.weight, self.order))
        }
    }
    impl PartialOrd for Node {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let syms: Vec<u64> = freqs.keys().copied().collect();
    let mut parent: Vec<usize> = vec![usize::MAX; syms.len()];
    let mut heap = std::collections::BinaryHeap::new();
    for (i, (_, &w)) in freqs.iter().enumerate() {
        heap.push(Node {
            weight: w,
            order: i,
            idx: i,
        });
    }
    let mut order = syms.len();
    while heap.len() > 1 {
        let a = heap.pop().unwrap();
        let b = heap.pop().unwrap();
        let merged = parent.len();
        parent.push(usize::MAX);
        parent[a.idx] = merged;
        parent[b.idx] = merged;
        heap.push(Node {
            weight: a.weight + b.weight,
            order,
            idx: merged,
        });
        order += 1;
    }

    let mut lengths = Vec::with_capacity(syms.len());
    for (i, &sym) in syms.iter().enumerate() {
        let mut depth = 0u8;
        let mut n = i;
        while parent[n] != usize::MAX {
            depth += 1;
            n = parent[n];
        }
        lengths.push((sym, depth));
    }
    lengths
}

/// Canonical code assignment over (length, symbol)-sorted entries.
fn canonical_codes(table: &[(u32, u8)]) -> Result<Vec<(u32, u64, u8)>> {
    let mut out = Vec::with_capacity(table.len());
    let mut code = 0u64;
    let mut prev_len = 0u8;
    for &(sym, len) in table {
        if len == 0 || len > 63 {
            return Err(SbnnError::Format(format!("bad code length {len}")));
        }
        if len < prev_len {
            return Err(SbnnError::Format("table not in canonical order".into()));
        }
        code <<= len - prev_len;
        if prev_len > 0 {
            // overflow of the canonical counter means the lengths
            // oversubscribe the code space
            if code >= 1u64 << len {
                return Err(SbnnError::Format("code lengths oversubscribed".into()));
            }
        }
        out.push((sym, code, len));
        code += 1;
        prev_len = len;
    }
    Ok(out)
}

pub fn huffman_encode(m: &PackedBitMatrix) -> Result<EncodedLayer> {
    if m.is_empty() {
        return Err(SbnnError::Size("cannot Huffman-encode an empty matrix".into()));
    }
    let runs = extract_zero_runs(m);
    let mut freqs: BTreeMap<u64, u64> = BTreeMap::new();
    for &r in &runs.runs {
        *freqs.entry(r).or_insert(0) += 1;
    }
    let mut table: Vec<(u32, u8)> = code_lengths(&freqs)
        .into_iter()
        .map(|(sym, len)| {
            u32::try_from(sym)
                .map(|s| (s, len))
                .map_err(|_| SbnnError::Size(format!("run length {sym} exceeds 32 bits")))
        })
        .collect::<Result<_>>()?;
    table.sort_by_key(|&(sym, len)| (len, sym));
    if table.len() > u16::MAX as usize {
        return Err(SbnnError::Size("code table exceeds 16-bit count".into()));
    }

    let codes = canonical_codes(&table)?;
    let by_sym: BTreeMap<u32, (u64, u8)> = codes
        .iter()
        .map(|&(sym, code, len)| (sym, (code, len)))
        .collect();
    let mut w = BitWriter::new();
    for &r in &runs.runs {
        let (code, len) = by_sym[&(r as u32)];
        w.write_bits(code, len as u32);
    }
    Ok(EncodedLayer {
        codec: Codec::He,
        dims: m.dims().to_vec(),
        payload: w.into_payload(),
        rle_c: None,
        huffman_table: Some(table),
    })
}

struct CanonicalDecoder {
    /// codes counted per length, 1-indexed
    counts: Vec<u64>,
    /// symbols in canonical order
    symbols: Vec<u32>,
    /// first canonical code value per length
    first_code: Vec<u64>,
    /// index into `symbols` of the first code per length
    first_index: Vec<u64>,
}

impl CanonicalDecoder {
    fn new(table: &[(u32, u8)]) -> Result<Self> {
        let codes = canonical_codes(table)?;
        {
            let mut seen: Vec<u32> = table.iter().map(|&(s, _)| s).collect();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(SbnnError::Format("duplicate symbol in code table".into()));
            }
        }
        let max_len = table.iter().map(|&(_, l)| l).max().unwrap_or(0) as usize;
        let mut counts = vec![0u64; max_len + 1];
        for &(_, len) in table {
            counts[len as usize] += 1;
        }
        let mut first_code = vec![0u64; max_len + 1];
        let mut first_index = vec![0u64; max_len + 1];
        let mut idx = 0u64;
        for len in 1..=max_len {
            first_index[len] = idx;
            idx += counts[len];
            let pos = codes.iter().position(|&(_, _, l)| l as usize == len);
            if let Some(p) = pos {
                first_code[len] = codes[p].1;
            }
        }
        Ok(Self {
            counts,
            symbols: table.iter().map(|&(s, _)| s).collect(),
            first_code,
            first_index,
        })
    }

    fn decode_symbol(&self, r: &mut BitReader) -> Result<u32> {
        let mut code = 0u64;
        let mut len = 0usize;
        loop {
            code = (code << 1) | r.read_bit()? as u64;
            len += 1;
            if len >= self.counts.len() {
                return Err(SbnnError::corrupt(r.pos(), "code exceeds table depth"));
            }
            let n = self.counts[len];
            if n > 0 && code >= self.first_code[len] && code < self.first_code[len] + n {
                let idx = self.first_index[len] + (code - self.first_code[len]);
                return Ok(self.symbols[idx as usize]);
            }
        }
    }
}

pub fn huffman_decode(e: &EncodedLayer) -> Result<PackedBitMatrix> {
    if e.codec != Codec::He {
        return Err(SbnnError::Format("not a Huffman layer".into()));
    }
    let table = e
        .huffman_table
        .as_ref()
        .ok_or_else(|| SbnnError::Format("Huffman layer missing code table".into()))?;
    if table.is_empty() {
        return Err(SbnnError::Format("empty Huffman table".into()));
    }
    let dec = CanonicalDecoder::new(table)?;
    let n: usize = e.dims.iter().product();
    let rows = e.dims[0];
    let row_len = n.checked_div(rows).unwrap_or(0);
    let mut r = BitReader::new(&e.payload);
    let mut dense = Vec::with_capacity(n);
    for _ in 0..rows {
        rebuild_row(&mut dense, row_len, || {
            dec.decode_symbol(&mut r).map(|s| (u64::from(s), r.pos()))
        })?;
    }
    r.expect_exhausted()?;
    PackedBitMatrix::pack_bits(&dense, &e.dims)
}
