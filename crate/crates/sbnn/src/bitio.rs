//! Bit-level stream writer and reader used by the codecs.
//!
//! The stream is a sequence of bits; bit k lives in byte k/8 at position
//! 7 - (k % 8), i.e. the first bit written is the most significant bit of
//! the first byte. Multi-bit fields are written most-significant-bit first,
//! so a value rendered in binary reads left-to-right in a hex dump.

use crate::error::{Result, SbnnError};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitPayload {
    pub bytes: Vec<u8>,
    pub bit_len: usize,
}

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn write_bit(&mut self, bit: bool) {
        let pos = self.bit_len % 8;
        if pos == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 1 << (7 - pos);
        }
        self.bit_len += 1;
    }

    /// Writes the low `width` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value < (1u64 << width));
        for i in (0..width).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn into_payload(self) -> BitPayload {
        BitPayload {
            bytes: self.bytes,
            bit_len: self.bit_len,
        }
    }
}

#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit_len: usize,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(payload: &'a BitPayload) -> Self {
        Self {
            bytes: &payload.bytes,
            bit_len: payload.bit_len,
            pos: 0,
        }
    }

    pub fn from_bytes(bytes: &'a [u8], bit_len: usize) -> Self {
        Self {
            bytes,
            bit_len,
            pos: 0,
        }
    }

    #[inline]
    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.bit_len {
            return Err(SbnnError::corrupt(self.pos, "read past end of payload"));
        }
        let byte = self.bytes[self.pos / 8];
        let bit = (byte >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    /// Reads `width` bits, most significant first.
    pub fn read_bits(&mut self, width: u32) -> Result<u64> {
        debug_assert!(width <= 64);
        if self.pos + width as usize > self.bit_len {
            return Err(SbnnError::corrupt(
                self.pos,
                format!("need {width} bits, stream has {}", self.bit_len - self.pos),
            ));
        }
        let mut v = 0u64;
        for _ in 0..width {
            let byte = self.bytes[self.pos / 8];
            let bit = (byte >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        Ok(v)
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bit_len - self.pos
    }

    /// Fails unless every payload bit was consumed.
    pub fn expect_exhausted(&self) -> Result<()> {
        if self.pos != self.bit_len {
            return Err(SbnnError::corrupt(
                self.pos,
                format!("{} unread bits at end of payload", self.remaining()),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first_layout() {
        let mut w = BitWriter::new();
        w.write_bits(0b001, 3); // count = 1 in 3 bits
        w.write_bits(0b01, 2); // index = 1 in 2 bits
        w.write_bits(0b000, 3);
        let p = w.into_payload();
        assert_eq!(p.bit_len, 8);
        assert_eq!(p.bytes, vec![0b0010_1000]);
    }

    #[test]
    fn read_past_end_fails() {
        let p = BitWriter::new().into_payload();
        let mut r = BitReader::new(&p);
        assert!(r.read_bit().is_err());
    }

    proptest! {
        #[test]
        fn write_read_symmetry(fields in prop::collection::vec((0u64..u64::MAX, 1u32..=64), 0..64)) {
            let mut w = BitWriter::new();
            for &(v, width) in &fields {
                let v = if width == 64 { v } else { v & ((1u64 << width) - 1) };
                w.write_bits(v, width);
            }
            let p = w.into_payload();
            let mut r = BitReader::new(&p);
            for &(v, width) in &fields {
                let v = if width == 64 { v } else { v & ((1u64 << width) - 1) };
                prop_assert_eq!(r.read_bits(width).unwrap(), v);
            }
            prop_assert!(r.expect_exhausted().is_ok());
        }
    }
}
