//! Bit-packed storage for binary weight tensors.
//!
//! A set bit marks a connection (a one-valued weight). Bits are packed
//! LSB-first into 64-bit words over the row-major flattening of the tensor
//! dimensions. Pad bits in the final word are always zero, so whole-word
//! popcounts and word-wise AND are safe without masking.

use crate::error::{Result, SbnnError};

pub const WORD_BITS: usize = 64;

/// Largest size a single dimension may take; dimension sizes are stored as
/// 16-bit integers in the container format and oversized layers are rejected
/// rather than silently widened.
pub const MAX_DIM: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBitMatrix {
    dims: Vec<usize>,
    words: Vec<u64>,
    popcount_total: usize,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(SbnnError::Size("dims must not be empty".into()));
    }
    for &d in dims {
        if d > MAX_DIM {
            return Err(SbnnError::Size(format!(
                "dimension {d} exceeds the 16-bit limit {MAX_DIM}"
            )));
        }
    }
    Ok(dims.iter().product())
}

pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

impl PackedBitMatrix {
    /// Packs a dense 0/1 vector in row-major order.
    pub fn pack_bits(dense: &[u8], dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        if dense.len() != n {
            return Err(SbnnError::Size(format!(
                "dense length {} does not match dims product {n}",
                dense.len()
            )));
        }
        let mut words = vec![0u64; words_for(n)];
        let mut ones = 0usize;
        for (i, &v) in dense.iter().enumerate() {
            match v {
                0 => {}
                1 => {
                    words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
                    ones += 1;
                }
                other => {
                    return Err(SbnnError::Size(format!(
                        "entry {i} is {other}, expected 0 or 1"
                    )))
                }
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            words,
            popcount_total: ones,
        })
    }

    /// Builds a matrix from an exact-length bit iterator.
    pub fn from_bit_iter<I>(dims: &[usize], bits: I) -> Result<Self>
    where
        I: IntoIterator<Item = bool>,
    {
        let n = check_dims(dims)?;
        let mut words = vec![0u64; words_for(n)];
        let mut count = 0usize;
        let mut ones = 0usize;
        for b in bits {
            if count >= n {
                return Err(SbnnError::Size(format!(
                    "bit iterator longer than dims product {n}"
                )));
            }
            if b {
                words[count / WORD_BITS] |= 1u64 << (count % WORD_BITS);
                ones += 1;
            }
            count += 1;
        }
        if count != n {
            return Err(SbnnError::Size(format!(
                "bit iterator yielded {count} bits, expected {n}"
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            words,
            popcount_total: ones,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            words: vec![0u64; words_for(n)],
            popcount_total: 0,
        })
    }

    /// Inverse of `pack_bits`.
    pub fn unpack_bits(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.bit(i) as u8).collect()
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn popcount_total(&self) -> usize {
        self.popcount_total
    }

    /// Rows when the tensor is viewed as (everything-but-last, last): the
    /// shape the index encoder works on.
    pub fn index_rows(&self) -> usize {
        self.dims[..self.dims.len() - 1].iter().product()
    }

    /// Length of an index-encoder row (the last dimension).
    pub fn index_cols(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Sub-matrices for run-length extraction: slices over the first
    /// dimension (rows of a linear layer, output channels of a convolution).
    pub fn submatrix_count(&self) -> usize {
        self.dims[0]
    }

    pub fn submatrix_len(&self) -> usize {
        self.len().checked_div(self.dims[0]).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pack_example() {
        let m = PackedBitMatrix::pack_bits(&[1, 0, 1, 1], &[1, 4]).unwrap();
        assert_eq!(m.words()[0], 0b1101); // LSB-first: bit 0 set, bit 1 clear, bits 2,3 set
        assert_eq!(m.popcount_total(), 3);
        assert_eq!(m.unpack_bits(), vec![1, 0, 1, 1]);
    }

    #[test]
    fn pack_empty() {
        let m = PackedBitMatrix::pack_bits(&[], &[0, 4]).unwrap();
        assert_eq!(m.len(), 0);
        assert_eq!(m.popcount_total(), 0);
        assert!(m.unpack_bits().is_empty());
    }

    #[test]
    fn unpack_all_zeros() {
        let m = PackedBitMatrix::zeros(&[8, 8]).unwrap();
        assert_eq!(m.unpack_bits(), vec![0u8; 64]);
    }

    #[test]
    fn pack_rejects_bad_length() {
        assert!(PackedBitMatrix::pack_bits(&[1, 0], &[1, 4]).is_err());
    }

    #[test]
    fn pack_rejects_non_binary() {
        assert!(PackedBitMatrix::pack_bits(&[1, 2, 0, 0], &[1, 4]).is_err());
    }

    #[test]
    fn rejects_oversized_dim() {
        assert!(PackedBitMatrix::zeros(&[1, 70000]).is_err());
    }

    #[test]
    fn roundtrip_len_97() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(97);
        let dense: Vec<u8> = (0..97).map(|_| rng.random_range(0..=1u8)).collect();
        let m = PackedBitMatrix::pack_bits(&dense, &[97]).unwrap();
        assert_eq!(m.unpack_bits(), dense);
    }

    #[test]
    fn pad_bits_stay_zero() {
        let dense = vec![1u8; 97];
        let m = PackedBitMatrix::pack_bits(&dense, &[97]).unwrap();
        // last word holds 33 live bits; the upper 31 must be zero
        assert_eq!(m.words()[1] >> 33, 0);
        assert_eq!(m.popcount_total(), 97);
    }

    proptest! {
        #[test]
        fn roundtrip_sparse(rows in 1usize..20, cols in 1usize..80, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let dense: Vec<u8> = (0..rows * cols)
                .map(|_| u8::from(rng.random::<f64>() < 0.05))
                .collect();
            let m = PackedBitMatrix::pack_bits(&dense, &[rows, cols]).unwrap();
            prop_assert_eq!(m.unpack_bits(), dense.clone());
            let ones: usize = dense.iter().map(|&b| b as usize).sum();
            prop_assert_eq!(m.popcount_total(), ones);
            let word_ones: u32 = m.words().iter().map(|w| w.count_ones()).sum();
            prop_assert_eq!(word_ones as usize, ones);
        }
    }
}
