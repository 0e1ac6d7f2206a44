//! Canonical Huffman coding of bucket-index streams.
//!
//! Only code lengths travel with the data; both sides rebuild the codes with
//! [`CodeTable::from_lengths`]. Ties in the merge are resolved from the
//! count sequence alone, which is what lets [`CodeTableCache`] hand out a
//! cached table that is identical to a fresh build.

mod bits;
mod cache;
mod table;

use alloc::vec;
use alloc::vec::Vec;

pub use bits::{BitReader, BitStream};
pub use cache::{CacheKeyMode, CodeTableCache};
pub use table::{build_code_table, CodeTable, MAX_CODE_LEN};

use crate::{Error, Result};

pub fn encode(symbols: &[u16], table: &CodeTable) -> Result<BitStream> {
    let alphabet = table.lengths().map(|(s, _)| s as usize + 1).max().unwrap_or(0);
    let mut dense = vec![None; alphabet];
    for (s, _) in table.lengths() {
        dense[s as usize] = table.code(s);
    }
    let mut out = BitStream::new();
    for &s in symbols {
        let (code, len) = dense
            .get(s as usize)
            .copied()
            .flatten()
            .ok_or(Error::UnknownSymbol(s))?;
        out.push_bits(code, len);
    }
    Ok(out)
}

/// Decodes exactly `n` symbols and requires the stream to end right there.
pub fn decode(stream: &BitStream, table: &CodeTable, n: usize) -> Result<Vec<u16>> {
    let decoder = Decoder::new(table);
    let mut reader = stream.reader();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(decoder.next(&mut reader)?);
    }
    if reader.remaining() != 0 {
        return Err(Error::Corrupt("trailing bits after the last symbol"));
    }
    Ok(out)
}

/// Per-length canonical decoding tables.
struct Decoder {
    // Indexed by code length.
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<u64>,
    symbols: Vec<u16>,
}

impl Decoder {
    fn new(table: &CodeTable) -> Self {
        let max = table.max_len() as usize;
        let mut first_code = vec![0u64; max + 1];
        let mut first_index = vec![0usize; max + 1];
        let mut count = vec![0u64; max + 1];
        let sorted = table.sorted_codes();
        for (i, &(code, len, _)) in sorted.iter().enumerate() {
            let l = len as usize;
            if count[l] == 0 {
                first_code[l] = code;
                first_index[l] = i;
            }
            count[l] += 1;
        }
        let symbols = sorted.iter().map(|&(_, _, s)| s).collect();
        Self { first_code, first_index, count, symbols }
    }

    fn next(&self, reader: &mut BitReader<'_>) -> Result<u16> {
        let mut code = 0u64;
        for len in 1..self.count.len() {
            let bit = reader
                .read_bit()
                .ok_or(Error::Corrupt("stream ended before all symbols were decoded"))?;
            code = (code << 1) | u64::from(bit);
            let offset = code.wrapping_sub(self.first_code[len]);
            if self.count[len] > 0 && code >= self.first_code[len] && offset < self.count[len] {
                return Ok(self.symbols[self.first_index[len] + offset as usize]);
            }
        }
        Err(Error::Corrupt("bit pattern matches no code"))
    }
}

/// Shannon entropy in bits per symbol of a count vector (zeros ignored).
pub fn shannon_entropy(counts: impl IntoIterator<Item = u64>) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * libm::log2(p)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: u16 = 0;
    const B: u16 = 1;
    const C: u16 = 2;
    const D: u16 = 3;

    fn lengths(t: &CodeTable) -> Vec<(u16, u8)> {
        t.lengths().collect()
    }

    #[test]
    fn skewed_example() {
        let freqs = [(A, 5), (B, 2), (C, 1), (D, 1)];
        let t = build_code_table(&freqs).unwrap();
        assert_eq!(lengths(&t), [(A, 1), (B, 2), (C, 3), (D, 3)]);
        assert_eq!(t.total_bits(&freqs).unwrap(), 15);
        assert_eq!(t.kraft_sum(), 1.0);
    }

    #[test]
    fn single_symbol_gets_one_bit() {
        let t = build_code_table(&[(A, 7)]).unwrap();
        assert_eq!(lengths(&t), [(A, 1)]);
        let s = encode(&[A; 7], &t).unwrap();
        assert_eq!(s.bit_len(), 7);
        assert_eq!(decode(&s, &t, 7).unwrap(), [A; 7]);
    }

    #[test]
    fn uniform_is_balanced() {
        let t = build_code_table(&[(A, 1), (B, 1), (C, 1), (D, 1)]).unwrap();
        assert!(t.lengths().all(|(_, l)| l == 2));
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(build_code_table(&[]).is_err());
        assert!(build_code_table(&[(A, 0)]).is_err());
        assert!(build_code_table(&[(A, 1), (A, 2)]).is_err());
    }

    #[test]
    fn canonical_codes() {
        let t = CodeTable::from_lengths([(A, 1), (B, 2), (C, 3), (D, 3)]).unwrap();
        assert_eq!(t.code(A), Some((0b0, 1)));
        assert_eq!(t.code(B), Some((0b10, 2)));
        assert_eq!(t.code(C), Some((0b110, 3)));
        assert_eq!(t.code(D), Some((0b111, 3)));
        assert!(CodeTable::from_lengths([(A, 1), (B, 1), (C, 1)]).is_err());
        assert!(CodeTable::from_lengths([(A, 0)]).is_err());
        assert!(CodeTable::from_lengths([(A, 1), (A, 2)]).is_err());
    }

    #[test]
    fn encode_examples() {
        let t = CodeTable::from_lengths([(A, 1), (B, 2), (C, 2)]).unwrap();
        let empty = encode(&[], &t).unwrap();
        assert_eq!(empty.bit_len(), 0);
        assert_eq!(decode(&empty, &t, 0).unwrap(), []);
        let s = encode(&[A, A, B], &t).unwrap();
        assert_eq!(s.bit_len(), 4);
        assert_eq!(encode(&[D], &t).unwrap_err(), Error::UnknownSymbol(D));
    }

    #[test]
    fn decode_rejects_truncation_and_trailing_bits() {
        let freqs = [(A, 5), (B, 2), (C, 1), (D, 1)];
        let t = build_code_table(&freqs).unwrap();
        let msg = [A, C, A, B, D, A, A, B, A];
        let s = encode(&msg, &t).unwrap();
        assert_eq!(s.bit_len(), 15);
        assert_eq!(decode(&s, &t, msg.len()).unwrap(), msg);
        // Too few symbols requested: leftover bits.
        assert!(matches!(decode(&s, &t, msg.len() - 1), Err(Error::Corrupt(_))));
        // Truncated stream.
        let mut short = BitStream::new();
        for &sym in &msg[..msg.len() - 1] {
            let (c, l) = t.code(sym).unwrap();
            short.push_bits(c, l);
        }
        assert!(matches!(decode(&short, &t, msg.len()), Err(Error::Corrupt(_))));
    }

    #[test]
    fn incomplete_code_rejects_unused_patterns() {
        let t = CodeTable::from_lengths([(A, 1), (B, 2)]).unwrap();
        let mut s = BitStream::new();
        s.push_bits(0b11, 2);
        assert!(decode(&s, &t, 1).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(shannon_entropy([4, 4]), 1.0);
        assert_eq!(shannon_entropy([9]), 0.0);
        assert_eq!(shannon_entropy([1, 1, 1, 1, 0]), 2.0);
    }

    proptest! {
        #[test]
        fn round_trip(msg in prop::collection::vec(0u16..12, 0..400)) {
            let mut counts = [0u64; 12];
            for &s in &msg { counts[s as usize] += 1; }
            let freqs: Vec<(u16, u64)> = counts.iter().enumerate()
                .filter(|(_, &c)| c > 0).map(|(s, &c)| (s as u16, c)).collect();
            prop_assume!(!freqs.is_empty());
            let t = build_code_table(&freqs).unwrap();
            let s = encode(&msg, &t).unwrap();
            prop_assert_eq!(s.bit_len(), t.total_bits(&freqs).unwrap());
            prop_assert_eq!(decode(&s, &t, msg.len()).unwrap(), msg);
        }

        #[test]
        fn kraft_and_entropy_sandwich(counts in prop::collection::vec(1u64..1000, 2..40)) {
            let freqs: Vec<(u16, u64)> = counts.iter().enumerate().map(|(s, &c)| (s as u16, c)).collect();
            let t = build_code_table(&freqs).unwrap();
            prop_assert!((t.kraft_sum() - 1.0).abs() < 1e-12);
            let total: u64 = counts.iter().sum();
            let avg = t.total_bits(&freqs).unwrap() as f64 / total as f64;
            let h = shannon_entropy(counts.iter().copied());
            prop_assert!(h <= avg + 1e-12 && avg < h + 1.0);
        }

        #[test]
        fn lengths_round_trip_through_alphabet(counts in prop::collection::vec(0u64..50, 1..30)) {
            let freqs: Vec<(u16, u64)> = counts.iter().enumerate()
                .filter(|(_, &c)| c > 0).map(|(s, &c)| (s as u16, c)).collect();
            prop_assume!(!freqs.is_empty());
            let t = build_code_table(&freqs).unwrap();
            let dense = t.alphabet_lengths(counts.len());
            prop_assert_eq!(CodeTable::from_alphabet_lengths(&dense).unwrap(), t);
        }
    }
}
