use alloc::vec::Vec;

use crate::{Error, Result};

/// A bit sequence packed most-significant-bit first. Padding bits in the
/// last byte are zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitStream {
    payload: Vec<u8>,
    bit_len: u64,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps bytes read from storage, checking the length and zero padding.
    pub fn from_parts(payload: Vec<u8>, bit_len: u64) -> Result<Self> {
        if payload.len() as u64 != bit_len.div_ceil(8) {
            return Err(Error::Corrupt("payload length does not match bit length"));
        }
        let used = (bit_len % 8) as u32;
        if used != 0 {
            let last = payload[payload.len() - 1];
            if last & (0xff >> used) != 0 {
                return Err(Error::Corrupt("non-zero padding bits"));
            }
        }
        Ok(Self { payload, bit_len })
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }

    /// Appends the low `len` bits of `code`, most significant first.
    pub fn push_bits(&mut self, code: u64, len: u8) {
        debug_assert!(len <= 64);
        for shift in (0..len).rev() {
            let bit = (code >> shift) & 1;
            let offset = (self.bit_len % 8) as u32;
            if offset == 0 {
                self.payload.push(0);
            }
            if bit == 1 {
                *self.payload.last_mut().unwrap() |= 0x80 >> offset;
            }
            self.bit_len += 1;
        }
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { stream: self, pos: 0 }
    }
}

pub struct BitReader<'a> {
    stream: &'a BitStream,
    pos: u64,
}

impl BitReader<'_> {
    pub fn read_bit(&mut self) -> Option<u8> {
        if self.pos >= self.stream.bit_len {
            return None;
        }
        let byte = self.stream.payload[(self.pos / 8) as usize];
        let bit = (byte >> (7 - (self.pos % 8))) & 1;
        self.pos += 1;
        Some(bit)
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.stream.bit_len - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn msb_first_packing() {
        let mut s = BitStream::new();
        s.push_bits(0b1, 1);
        s.push_bits(0b01, 2);
        s.push_bits(0b11111, 5);
        s.push_bits(0b1, 1);
        assert_eq!(s.payload(), &[0b1011_1111, 0b1000_0000]);
        assert_eq!(s.bit_len(), 9);
        let mut r = s.reader();
        let bits: Vec<u8> = core::iter::from_fn(|| r.read_bit()).collect();
        assert_eq!(bits, [1, 0, 1, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn from_parts_checks_framing() {
        assert!(BitStream::from_parts(vec![0x80], 1).is_ok());
        assert!(BitStream::from_parts(vec![0x40], 1).is_err());
        assert!(BitStream::from_parts(vec![0x80, 0], 1).is_err());
        assert!(BitStream::from_parts(vec![], 0).is_ok());
    }
}
