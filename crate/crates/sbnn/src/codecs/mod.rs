//! Bit-exact codecs for sparse binary weight tensors.
//!
//! Three encoders over the packed 0/1 weights, plus the raw no-encoder
//! baseline:
//!
//! - NE: the bits themselves, one per weight.
//! - IE: per row (last-dimension slices), the count of one-indexes followed
//!   by the column indexes, each in ceil(log2(cols)) bits.
//! - RLE: per sub-matrix (first-dimension slices), the lengths of zero runs
//!   in c-bit chunks with continuation/terminator bits.
//! - HE: a canonical Huffman code over the same zero-run alphabet.
//!
//! Decoding is exact for all four; corrupt streams fail with the offending
//! bit position.

mod huffman;
mod ie;
mod rle;

pub use huffman::{huffman_decode, huffman_encode};
pub use ie::{ie_decode, ie_encode};
pub use rle::{choose_rle_c, rle_decode, rle_encode};

use crate::bitio::{BitPayload, BitReader, BitWriter};
use crate::bits::PackedBitMatrix;
use crate::error::{Result, SbnnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Codec {
    Ne,
    Ie,
    Rle,
    He,
}

pub const ALL_CODECS: [Codec; 4] = [Codec::Ne, Codec::Ie, Codec::Rle, Codec::He];

impl Codec {
    pub fn id(self) -> u8 {
        match self {
            Codec::Ne => 0,
            Codec::Ie => 1,
            Codec::Rle => 2,
            Codec::He => 3,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        Ok(match id {
            0 => Codec::Ne,
            1 => Codec::Ie,
            2 => Codec::Rle,
            3 => Codec::He,
            other => return Err(SbnnError::Format(format!("unknown codec id {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Codec::Ne => "ne",
            Codec::Ie => "ie",
            Codec::Rle => "rle",
            Codec::He => "he",
        }
    }
}

impl std::str::FromStr for Codec {
    type Err = SbnnError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ne" => Codec::Ne,
            "ie" => Codec::Ie,
            "rle" => Codec::Rle,
            "he" => Codec::He,
            other => return Err(SbnnError::Config(format!("unknown codec '{other}'"))),
        })
    }
}

/// One layer's encoded weights: the payload bitstream plus the codec
/// metadata needed to invert it. Dimensions stay authoritative for shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedLayer {
    pub codec: Codec,
    pub dims: Vec<usize>,
    pub payload: BitPayload,
    /// RLE chunk width; present for `Codec::Rle` only.
    pub rle_c: Option<u16>,
    /// Canonical code table as (symbol, code length), sorted by
    /// (length, symbol); present for `Codec::He` only.
    pub huffman_table: Option<Vec<(u32, u8)>>,
}

pub fn encode(m: &PackedBitMatrix, codec: Codec) -> Result<EncodedLayer> {
    match codec {
        Codec::Ne => Ok(ne_encode(m)),
        Codec::Ie => ie_encode(m),
        Codec::Rle => {
            let c = choose_rle_c(m)?;
            rle_encode(m, c)
        }
        Codec::He => huffman_encode(m),
    }
}

pub fn decode(e: &EncodedLayer) -> Result<PackedBitMatrix> {
    match e.codec {
        Codec::Ne => ne_decode(e),
        Codec::Ie => ie_decode(e),
        Codec::Rle => rle_decode(e),
        Codec::He => huffman_decode(e),
    }
}

/// Raw storage: one payload bit per weight, in row-major order.
pub fn ne_encode(m: &PackedBitMatrix) -> EncodedLayer {
    let mut w = BitWriter::new();
    for i in 0..m.len() {
        w.write_bit(m.bit(i));
    }
    EncodedLayer {
        codec: Codec::Ne,
        dims: m.dims().to_vec(),
        payload: w.into_payload(),
        rle_c: None,
        huffman_table: None,
    }
}

pub fn ne_decode(e: &EncodedLayer) -> Result<PackedBitMatrix> {
    let n: usize = e.dims.iter().product();
    if e.payload.bit_len != n {
        return Err(SbnnError::corrupt(
            e.payload.bit_len.min(n),
            format!("NE payload has {} bits, dims need {n}", e.payload.bit_len),
        ));
    }
    let mut r = BitReader::new(&e.payload);
    let m = PackedBitMatrix::from_bit_iter(&e.dims, (0..n).map(|_| r.read_bit().unwrap()))?;
    Ok(m)
}

/// Total measured size of an encoded layer: payload plus the per-layer
/// header accounting (16 bits per dimension size, 32 bits each for alpha'
/// and beta') plus codec metadata (16 bits for the RLE chunk width; the
/// serialized code table for HE).
pub fn encoded_size_bits(e: &EncodedLayer) -> u64 {
    let header = 16 * e.dims.len() as u64 + 64;
    let meta = match e.codec {
        Codec::Ne | Codec::Ie => 0,
        Codec::Rle => 16,
        Codec::He => 16 + 40 * e.huffman_table.as_ref().map_or(0, |t| t.len() as u64),
    };
    header + meta + e.payload.bit_len as u64
}

pub(crate) fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Zero-run decomposition used by RLE and HE: per first-dimension
/// sub-matrix, the zero-run length before each 1 plus a trailing run, so a
/// slice with k ones always yields k + 1 runs.
#[derive(Debug)]
pub(crate) struct ZeroRuns {
    pub per_row: Vec<u32>,
    pub runs: Vec<u64>,
    pub max_run: u64,
}

pub(crate) fn extract_zero_runs(m: &PackedBitMatrix) -> ZeroRuns {
    let rows = m.submatrix_count();
    let row_len = m.submatrix_len();
    let mut per_row = Vec::with_capacity(rows);
    let mut runs = Vec::new();
    let mut max_run = 0u64;
    for r in 0..rows {
        let base = r * row_len;
        let before = runs.len();
        let mut run = 0u64;
        for i in 0..row_len {
            if m.bit(base + i) {
                runs.push(run);
                max_run = max_run.max(run);
                run = 0;
            } else {
                run += 1;
            }
        }
        runs.push(run);
        max_run = max_run.max(run);
        per_row.push((runs.len() - before) as u32);
    }
    ZeroRuns {
        per_row,
        runs,
        max_run,
    }
}

/// Rebuilds one sub-matrix from a run decoder closure. Used by the RLE and
/// HE decoders: runs and interleaved ones are appended to `out` until the
/// row reaches `row_len` exactly; anything else is a corrupt stream. The
/// closure yields (run length, stream bit position) pairs.
pub(crate) fn rebuild_row(
    out: &mut Vec<u8>,
    row_len: usize,
    mut next_run: impl FnMut() -> Result<(u64, usize)>,
) -> Result<u32> {
    let mut pos = 0usize;
    let mut nruns = 0u32;
    loop {
        let (run, stream_pos) = next_run()?;
        nruns += 1;
        if run > (row_len - pos) as u64 {
            return Err(SbnnError::corrupt(
                stream_pos,
                format!("run of {run} zeros overruns row of length {row_len}"),
            ));
        }
        out.extend(std::iter::repeat_n(0u8, run as usize));
        pos += run as usize;
        if pos == row_len {
            return Ok(nruns);
        }
        out.push(1);
        pos += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_of_examples() {
        // 00100001 -> runs 2, 4, 0
        let m = PackedBitMatrix::pack_bits(&[0, 0, 1, 0, 0, 0, 0, 1], &[1, 8]).unwrap();
        let z = extract_zero_runs(&m);
        assert_eq!(z.runs, vec![2, 4, 0]);
        assert_eq!(z.per_row, vec![3]);

        // 11111 -> six runs, all zero
        let m = PackedBitMatrix::pack_bits(&[1; 5], &[1, 5]).unwrap();
        let z = extract_zero_runs(&m);
        assert_eq!(z.runs, vec![0; 6]);

        // all-zero row of length n -> single run of n
        let m = PackedBitMatrix::zeros(&[1, 9]).unwrap();
        let z = extract_zero_runs(&m);
        assert_eq!(z.runs, vec![9]);
    }

    #[test]
    fn ne_roundtrip() {
        let dense: Vec<u8> = (0..50).map(|i| u8::from(i % 3 == 0)).collect();
        let m = PackedBitMatrix::pack_bits(&dense, &[5, 10]).unwrap();
        let e = ne_encode(&m);
        assert_eq!(e.payload.bit_len, 50);
        assert_eq!(encoded_size_bits(&e), 50 + 16 * 2 + 64);
        assert_eq!(ne_decode(&e).unwrap(), m);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(784), 10);
        assert_eq!(ceil_log2(1024), 10);
    }

    #[test]
    fn edge_shapes_roundtrip_every_codec() {
        let cases: Vec<PackedBitMatrix> = vec![
            PackedBitMatrix::pack_bits(&[0], &[1, 1]).unwrap(),
            PackedBitMatrix::pack_bits(&[1], &[1, 1]).unwrap(),
            PackedBitMatrix::zeros(&[1, 333]).unwrap(),
            PackedBitMatrix::pack_bits(&vec![1; 333], &[1, 333]).unwrap(),
            PackedBitMatrix::pack_bits(&vec![1; 77], &[77, 1]).unwrap(),
            PackedBitMatrix::zeros(&[77, 1]).unwrap(),
        ];
        for m in &cases {
            for codec in ALL_CODECS {
                let e = encode(m, codec).unwrap();
                assert_eq!(&decode(&e).unwrap(), m, "{codec:?} dims {:?}", m.dims());
            }
        }
    }

    #[test]
    fn huffman_payload_never_beats_optimal_rle_chunks() {
        // both code the same run alphabet; the chunked encoding is itself a
        // prefix code, so the optimal prefix code cannot lose
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(31);
        for i in 0..40 {
            let p = [0.02, 0.1, 0.3, 0.7][i % 4];
            let dense: Vec<u8> = (0..24 * 200)
                .map(|_| u8::from(rng.random::<f64>() < p))
                .collect();
            let m = PackedBitMatrix::pack_bits(&dense, &[24, 200]).unwrap();
            let c = choose_rle_c(&m).unwrap();
            let rle = rle_encode(&m, c).unwrap();
            let he = huffman_encode(&m).unwrap();
            let rle_run_bits = rle.payload.bit_len - 32 * m.submatrix_count();
            assert!(
                he.payload.bit_len <= rle_run_bits,
                "case {i}: HE {} vs RLE runs {rle_run_bits}",
                he.payload.bit_len
            );
        }
    }

    #[test]
    fn rle_size_audit() {
        // payload = 32 bits per sub-matrix plus the chunked run costs
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(32);
        let dense: Vec<u8> = (0..16 * 500)
            .map(|_| u8::from(rng.random::<f64>() < 0.07))
            .collect();
        let m = PackedBitMatrix::pack_bits(&dense, &[16, 500]).unwrap();
        let c = choose_rle_c(&m).unwrap();
        let e = rle_encode(&m, c).unwrap();
        let runs = extract_zero_runs(&m);
        let run_bits: usize = runs
            .runs
            .iter()
            .map(|&r| {
                let bits = if r == 0 { 1 } else { 64 - r.leading_zeros() };
                (bits.div_ceil(c as u32) * (c as u32 + 1)) as usize
            })
            .sum();
        assert_eq!(e.payload.bit_len, 32 * 16 + run_bits);
        assert_eq!(encoded_size_bits(&e), (32 * 16 + run_bits) as u64 + 16 * 2 + 64 + 16);
    }
}
