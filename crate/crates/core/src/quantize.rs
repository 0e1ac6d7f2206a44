//! Exponent-based quantization and priority promotion.
//!
//! [`quantize`] groups delta elements by `(sign, exponent)` and represents
//! each group by the midpoint of its smallest and largest member. [`promote`]
//! then keeps only the `2^x - 1` classes with the largest exponents and folds
//! every other element into a bucket whose representative is exactly `0.0`;
//! those elements stay in the residual and are picked up by a later delta
//! once they have grown.
//!
//! Bucket order is part of the output: non-zero classes sorted by exponent
//! (largest first, positive before negative on ties), then the zero bucket.

use alloc::vec;
use alloc::vec::Vec;

use crate::float::{biased_exponent, unbiased_exponent, Sign, ZERO_EXPONENT};
use crate::state::{DeltaVector, Segment};
use crate::{Error, Result};

/// Largest promotion width accepted; indices are `u16`.
pub const MAX_PROMOTION_BITS: u8 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BucketKey {
    /// Exact zeros and subnormals, or everything merged by promotion.
    Zero,
    Exponent { sign: Sign, exponent: i16 },
    /// The i-th interval (ascending) of a rate-distortion partition.
    Interval(u16),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    pub key: BucketKey,
    pub representative: f32,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketTable {
    buckets: Vec<Bucket>,
    zero_index: Option<usize>,
}

impl BucketTable {
    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn zero_index(&self) -> Option<usize> {
        self.zero_index
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn representatives(&self) -> impl Iterator<Item = f32> + '_ {
        self.buckets.iter().map(|b| b.representative)
    }

    pub fn counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.buckets.iter().map(|b| b.count)
    }
}

/// Which quantizer produced a [`QuantizedDelta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Exponent,
    RateDistortion,
}

/// Bucket table plus one bucket index per delta element.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDelta {
    table: BucketTable,
    indices: Vec<u16>,
    promotion_bits: u8,
    source_buckets: u16,
    scheme: Scheme,
}

impl QuantizedDelta {
    /// Rebuilds a quantized delta from its persisted parts, recomputing
    /// bucket keys and counts. Used by decoders; validates every invariant.
    pub fn from_parts(
        scheme: Scheme,
        representatives: Vec<f32>,
        indices: Vec<u16>,
        promotion_bits: u8,
        source_buckets: u16,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Corrupt("quantized delta has no elements"));
        }
        if representatives.is_empty() {
            return Err(Error::Corrupt("bucket table is empty"));
        }
        if promotion_bits > MAX_PROMOTION_BITS {
            return Err(Error::Corrupt("promotion width out of range"));
        }
        if promotion_bits > 0 && representatives.len() > 1usize << promotion_bits {
            return Err(Error::Corrupt("more buckets than the promotion width allows"));
        }
        if (source_buckets as usize) < representatives.len() - usize::from(promotion_bits > 0) {
            return Err(Error::Corrupt("source bucket count smaller than the table"));
        }
        let mut counts = vec![0u64; representatives.len()];
        for &i in &indices {
            *counts
                .get_mut(i as usize)
                .ok_or(Error::Corrupt("bucket index out of range"))? += 1;
        }
        let mut buckets = Vec::with_capacity(representatives.len());
        let mut zero_index = None;
        for (i, (&representative, count)) in representatives.iter().zip(counts).enumerate() {
            if !representative.is_finite() {
                return Err(Error::Corrupt("non-finite bucket representative"));
            }
            let key = match scheme {
                Scheme::RateDistortion => BucketKey::Interval(i as u16),
                Scheme::Exponent if representative.to_bits() == 0 => {
                    if zero_index.replace(i).is_some() {
                        return Err(Error::Corrupt("duplicate zero bucket"));
                    }
                    BucketKey::Zero
                }
                Scheme::Exponent => {
                    let exponent = unbiased_exponent(representative);
                    if exponent == ZERO_EXPONENT {
                        return Err(Error::Corrupt("subnormal bucket representative"));
                    }
                    if count == 0 {
                        return Err(Error::Corrupt("empty exponent bucket"));
                    }
                    BucketKey::Exponent { sign: Sign::of(representative), exponent }
                }
            };
            buckets.push(Bucket { key, representative, count });
        }
        if scheme == Scheme::Exponent {
            let mut keys: Vec<_> = buckets.iter().map(|b| rank(&b.key)).collect();
            let sorted = keys.windows(2).all(|w| w[0] < w[1]);
            keys.dedup();
            if keys.len() != buckets.len() || !sorted {
                return Err(Error::Corrupt("exponent buckets are duplicated or out of order"));
            }
        }
        Ok(Self {
            table: BucketTable { buckets, zero_index },
            indices,
            promotion_bits,
            source_buckets,
            scheme,
        })
    }

    pub(crate) fn from_table(
        scheme: Scheme,
        buckets: Vec<Bucket>,
        zero_index: Option<usize>,
        indices: Vec<u16>,
    ) -> Self {
        let source_buckets = buckets.len() as u16;
        Self {
            table: BucketTable { buckets, zero_index },
            indices,
            promotion_bits: 0,
            source_buckets,
            scheme,
        }
    }

    pub fn table(&self) -> &BucketTable {
        &self.table
    }

    pub fn indices(&self) -> &[u16] {
        &self.indices
    }

    pub fn promotion_bits(&self) -> u8 {
        self.promotion_bits
    }

    /// Bucket count before promotion (equal to the table size when unpromoted).
    pub fn source_buckets(&self) -> u16 {
        self.source_buckets
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of buckets with at least one element.
    pub fn occupied_buckets(&self) -> usize {
        self.table.buckets.iter().filter(|b| b.count > 0).count()
    }

    /// `(symbol, count)` for every occupied bucket, in symbol order.
    pub fn frequencies(&self) -> Vec<(u16, u64)> {
        self.table
            .buckets
            .iter()
            .enumerate()
            .filter(|(_, b)| b.count > 0)
            .map(|(i, b)| (i as u16, b.count))
            .collect()
    }

    /// Bitwise structural equality (representatives compared by bits).
    pub fn bit_eq(&self, other: &QuantizedDelta) -> bool {
        self.scheme == other.scheme
            && self.promotion_bits == other.promotion_bits
            && self.source_buckets == other.source_buckets
            && self.indices == other.indices
            && self.table.zero_index == other.table.zero_index
            && self.table.buckets.len() == other.table.buckets.len()
            && self.table.buckets.iter().zip(&other.table.buckets).all(|(a, b)| {
                a.key == b.key && a.count == b.count && a.representative.to_bits() == b.representative.to_bits()
            })
    }
}

/// Sort key for exponent buckets: larger exponent first, positive before
/// negative, zero bucket last.
fn rank(key: &BucketKey) -> (u8, i16, Sign) {
    match *key {
        BucketKey::Exponent { sign, exponent } => (0, -exponent, sign),
        BucketKey::Zero => (1, 0, Sign::Positive),
        BucketKey::Interval(i) => (2, i as i16, Sign::Positive),
    }
}

const CLASS_SLOTS: usize = 2 * 256;

#[derive(Clone, Copy)]
struct Accum {
    min: f32,
    max: f32,
    count: u64,
}

/// Exponent/sign bucketing with midrange representatives. No promotion.
pub fn quantize(delta: &DeltaVector) -> Result<QuantizedDelta> {
    let values = delta.values();
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if values.len() > u32::MAX as usize {
        return Err(Error::Domain("delta too long"));
    }
    // Slot = sign * 256 + biased exponent; biased exponent 0 is the zero class.
    let mut accum = vec![Accum { min: f32::INFINITY, max: f32::NEG_INFINITY, count: 0 }; CLASS_SLOTS];
    let mut slots = Vec::with_capacity(values.len());
    let mut zeros = 0u64;
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        let biased = biased_exponent(v);
        if biased == 0 {
            zeros += 1;
            slots.push(u16::MAX);
            continue;
        }
        let slot = (usize::from(v.is_sign_negative()) << 8) | biased as usize;
        let a = &mut accum[slot];
        a.min = a.min.min(v);
        a.max = a.max.max(v);
        a.count += 1;
        slots.push(slot as u16);
    }

    // Walk exponents from largest to smallest, positive before negative.
    let mut slot_to_bucket = [u16::MAX; CLASS_SLOTS];
    let mut buckets = Vec::new();
    for biased in (1..=254usize).rev() {
        for (neg, sign) in [(0usize, Sign::Positive), (1, Sign::Negative)] {
            let slot = (neg << 8) | biased;
            let a = accum[slot];
            if a.count == 0 {
                continue;
            }
            slot_to_bucket[slot] = buckets.len() as u16;
            buckets.push(Bucket {
                key: BucketKey::Exponent { sign, exponent: biased as i16 - 127 },
                representative: midrange(a.min, a.max),
                count: a.count,
            });
        }
    }
    let zero_index = if zeros > 0 {
        buckets.push(Bucket { key: BucketKey::Zero, representative: 0.0, count: zeros });
        Some(buckets.len() - 1)
    } else {
        None
    };
    let zero_symbol = zero_index.map(|z| z as u16).unwrap_or(u16::MAX);
    let indices = slots
        .into_iter()
        .map(|s| if s == u16::MAX { zero_symbol } else { slot_to_bucket[s as usize] })
        .collect();
    Ok(QuantizedDelta::from_table(Scheme::Exponent, buckets, zero_index, indices))
}

/// `(min + max) / 2`, computed exactly in f64 and rounded once. `min` and
/// `max` share an exponent, so the result does too.
fn midrange(min: f32, max: f32) -> f32 {
    ((f64::from(min) + f64::from(max)) / 2.0) as f32
}

/// Keeps the `2^bits - 1` buckets with the largest exponents and merges the
/// rest, along with any existing zero bucket, into a single zero bucket. The
/// output always has a zero bucket, possibly empty, in last position.
pub fn promote(q: &QuantizedDelta, bits: u8) -> Result<QuantizedDelta> {
    if bits == 0 || bits > MAX_PROMOTION_BITS {
        return Err(Error::Domain("promotion width must be between 1 and 15 bits"));
    }
    if q.scheme != Scheme::Exponent {
        return Err(Error::Domain("priority promotion needs exponent buckets"));
    }
    let keep = (1usize << bits) - 1;
    let mut order: Vec<usize> = (0..q.table.buckets.len())
        .filter(|&i| q.table.buckets[i].key != BucketKey::Zero)
        .collect();
    order.sort_by_key(|&i| rank(&q.table.buckets[i].key));

    let mut remap = vec![u16::MAX; q.table.buckets.len()];
    let mut buckets = Vec::with_capacity(keep.min(order.len()) + 1);
    for &old in order.iter().take(keep) {
        remap[old] = buckets.len() as u16;
        buckets.push(q.table.buckets[old].clone());
    }
    let zero = buckets.len() as u16;
    let merged: u64 = q
        .table
        .buckets
        .iter()
        .zip(&remap)
        .filter(|(_, &r)| r == u16::MAX)
        .map(|(b, _)| b.count)
        .sum();
    buckets.push(Bucket { key: BucketKey::Zero, representative: 0.0, count: merged });
    for r in remap.iter_mut().filter(|r| **r == u16::MAX) {
        *r = zero;
    }
    let indices = q.indices.iter().map(|&i| remap[i as usize]).collect();
    Ok(QuantizedDelta {
        table: BucketTable { buckets, zero_index: Some(zero as usize) },
        indices,
        promotion_bits: bits,
        source_buckets: q.source_buckets,
        scheme: Scheme::Exponent,
    })
}

pub fn dequantize(q: &QuantizedDelta) -> DeltaVector {
    let reps: Vec<f32> = q.table.representatives().collect();
    DeltaVector::new(q.indices.iter().map(|&i| reps[i as usize]).collect())
}

/// Per-segment quantization: one bucket table per segment, optionally promoted.
pub fn quantize_segments(
    delta: &DeltaVector,
    segments: &[Segment],
    promotion_bits: Option<u8>,
) -> Result<Vec<QuantizedDelta>> {
    let covered: usize = segments.iter().map(|s| s.len).sum();
    if covered != delta.len() {
        return Err(Error::Shape { expected: delta.len(), found: covered });
    }
    segments
        .iter()
        .map(|seg| {
            let part = delta
                .values()
                .get(seg.range())
                .ok_or(Error::Segments("segment outside the delta"))?;
            let q = quantize(&DeltaVector::new(part.to_vec()))?;
            match promotion_bits {
                Some(bits) => promote(&q, bits),
                None => Ok(q),
            }
        })
        .collect()
}

/// Inverse of [`quantize_segments`]: concatenates the dequantized segments.
pub fn dequantize_segments(parts: &[QuantizedDelta]) -> DeltaVector {
    DeltaVector::new(parts.iter().flat_map(|q| dequantize(q).into_values()).collect())
}

/// Bits needed to index `k` buckets with a fixed-width code: `ceil(log2 k)`.
pub fn index_width(k: u64) -> u32 {
    if k <= 1 {
        0
    } else {
        64 - (k - 1).leading_zeros()
    }
}

/// Size in bits of `n` fixed-width indices plus `k` representatives of `b` bits.
pub fn raw_compressed_bits(n: u64, k: u64, b: u32) -> Result<u64> {
    if n == 0 {
        return Err(Error::Domain("n must be positive"));
    }
    if k == 0 {
        return Err(Error::Domain("bucket count must be positive"));
    }
    if b != 32 && b != 64 {
        return Err(Error::Domain("float width must be 32 or 64 bits"));
    }
    Ok(n * u64::from(index_width(k)) + k * u64::from(b))
}

/// `n b / (n ceil(log2 k) + k b)`.
pub fn raw_compression_rate(n: u64, k: u64, b: u32) -> Result<f64> {
    let compressed = raw_compressed_bits(n, k, b)?;
    Ok((n * u64::from(b)) as f64 / compressed as f64)
}

/// Mean squared reconstruction error of `q` against the original delta.
pub fn mse(delta: &DeltaVector, q: &QuantizedDelta) -> Result<f64> {
    if delta.len() != q.len() {
        return Err(Error::Shape { expected: q.len(), found: delta.len() });
    }
    let approx = dequantize(q);
    let sum: f64 = delta
        .values()
        .iter()
        .zip(approx.values())
        .map(|(a, b)| {
            let d = f64::from(*a) - f64::from(*b);
            d * d
        })
        .sum();
    Ok(sum / delta.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::format;

    fn q(values: &[f32]) -> QuantizedDelta {
        quantize(&DeltaVector::new(values.to_vec())).unwrap()
    }

    fn exp_key(sign: Sign, exponent: i16) -> BucketKey {
        BucketKey::Exponent { sign, exponent }
    }

    #[test]
    fn quantize_four_element_example() {
        // 1.5 = 1.5*2^0, 1.75 = 1.75*2^0, 0.5 = 1*2^-1, -0.25 = -1*2^-2
        let out = q(&[1.5, 1.75, 0.5, -0.25]);
        let b = out.table().buckets();
        assert_eq!(b.len(), 3);
        assert_eq!((b[0].key, b[0].representative, b[0].count), (exp_key(Sign::Positive, 0), 1.625, 2));
        assert_eq!((b[1].key, b[1].representative, b[1].count), (exp_key(Sign::Positive, -1), 0.5, 1));
        assert_eq!((b[2].key, b[2].representative, b[2].count), (exp_key(Sign::Negative, -2), -0.25, 1));
        assert_eq!(out.indices(), &[0, 0, 1, 2]);
        assert_eq!(out.promotion_bits(), 0);
        assert_eq!(dequantize(&out).values(), &[1.625, 1.625, 0.5, -0.25]);
    }

    #[test]
    fn zeros_make_a_single_zero_bucket() {
        let out = q(&[0.0, 0.0]);
        assert_eq!(out.table().len(), 1);
        assert_eq!(out.table().zero_index(), Some(0));
        assert_eq!(out.table().buckets()[0].representative.to_bits(), 0);
        let out = q(&[-0.0, f32::from_bits(3), 1.0]);
        assert_eq!(out.table().len(), 2);
        assert_eq!(out.table().buckets()[1].count, 2);
    }

    #[test]
    fn constant_input_is_one_bucket() {
        let c = 0.3f32;
        let out = q(&[c, c, c]);
        assert_eq!(out.table().len(), 1);
        assert_eq!(out.table().buckets()[0].representative, c);
        assert_eq!(dequantize(&q(&[c, c])).values(), &[c, c]);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert_eq!(quantize(&DeltaVector::new(vec![])).unwrap_err(), Error::Empty);
        assert_eq!(
            quantize(&DeltaVector::new(vec![1.0, f32::NAN])).unwrap_err(),
            Error::NonFinite { index: 1 }
        );
    }

    #[test]
    fn promote_keeps_largest_exponents() {
        // exponents 1, 0, -1, -3, -6
        let out = q(&[3.0, 1.0, 0.75, 0.125, 0.02]);
        assert_eq!(out.table().len(), 5);
        let p = promote(&out, 2).unwrap();
        let b = p.table().buckets();
        assert_eq!(b.len(), 4);
        let kept: Vec<_> = b[..3].iter().map(|b| b.key).collect();
        assert_eq!(
            kept,
            [exp_key(Sign::Positive, 1), exp_key(Sign::Positive, 0), exp_key(Sign::Positive, -1)]
        );
        assert_eq!((b[3].key, b[3].representative, b[3].count), (BucketKey::Zero, 0.0, 2));
        assert_eq!(dequantize(&p).values(), &[3.0, 1.0, 0.75, 0.0, 0.0]);
        assert_eq!(p.source_buckets(), 5);
    }

    #[test]
    fn promote_with_room_appends_empty_zero_bucket() {
        let out = q(&[3.0, 1.0, -0.75]);
        let p = promote(&out, 4).unwrap();
        assert_eq!(p.table().len(), 4);
        assert_eq!(&p.table().buckets()[..3], out.table().buckets());
        assert_eq!(p.table().buckets()[3].count, 0);
        assert_eq!(p.indices(), out.indices());
    }

    #[test]
    fn promote_single_bucket_one_bit() {
        let out = q(&[2.0, 2.5]);
        let p = promote(&out, 1).unwrap();
        assert_eq!(p.table().len(), 2);
        assert_eq!(p.table().buckets()[1].count, 0);
        assert_eq!(dequantize(&p).values(), &[2.25, 2.25]);
    }

    #[test]
    fn promote_one_bit_zeroes_everything_else() {
        let out = q(&[-4.0, 4.0, 1.0, -1.0, 0.25]);
        let p = promote(&out, 1).unwrap();
        // +4 outranks -4 on the tie.
        assert_eq!(dequantize(&p).values(), &[0.0, 4.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn promote_rejects_bad_width() {
        let out = q(&[1.0]);
        assert!(promote(&out, 0).is_err());
        assert!(promote(&out, 16).is_err());
    }

    #[test]
    fn figure_one_rate() {
        // n = 10 single-precision floats in 5 buckets: 10*3 + 5*32 = 190 bits.
        assert_eq!(raw_compressed_bits(10, 5, 32).unwrap(), 190);
        let r = raw_compression_rate(10, 5, 32).unwrap();
        assert!((r - 320.0 / 190.0).abs() < 1e-12);
        assert_eq!(format!("{r:.2}"), "1.68");
    }

    #[test]
    fn rate_edge_cases() {
        assert_eq!(raw_compression_rate(7, 1, 32).unwrap(), 7.0);
        let r = raw_compression_rate(100, 4, 32).unwrap();
        assert!((r - 3200.0 / 328.0).abs() < 1e-12);
        assert!(raw_compression_rate(10, 0, 32).is_err());
        assert!(raw_compression_rate(10, 2, 16).is_err());
        assert_eq!(index_width(1), 0);
        assert_eq!(index_width(2), 1);
        assert_eq!(index_width(5), 3);
        assert_eq!(index_width(512), 9);
    }

    #[test]
    fn segmented_quantization_round_trips() {
        let delta = DeltaVector::new(vec![1.0, 1.5, -8.0, 0.001, 0.0]);
        let segs = [Segment::new("a", 0, 2), Segment::new("b", 2, 3)];
        let parts = quantize_segments(&delta, &segs, None).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].table().len(), 1);
        let back = dequantize_segments(&parts);
        assert_eq!(back.values(), &[1.25, 1.25, -8.0, 0.001, 0.0]);
        assert!(quantize_segments(&delta, &segs[..1], None).is_err());
    }

    #[test]
    fn from_parts_rejects_corruption() {
        let ok = QuantizedDelta::from_parts(Scheme::Exponent, vec![2.0, 0.0], vec![0, 1], 1, 3).unwrap();
        assert_eq!(ok.table().zero_index(), Some(1));
        let bad_index = QuantizedDelta::from_parts(Scheme::Exponent, vec![2.0, 0.0], vec![0, 2], 1, 3);
        assert!(bad_index.is_err());
        let too_many = QuantizedDelta::from_parts(Scheme::Exponent, vec![4.0, 2.0, 1.0], vec![0, 1, 2], 1, 3);
        assert!(too_many.is_err());
        let unordered = QuantizedDelta::from_parts(Scheme::Exponent, vec![1.0, 2.0], vec![0, 1], 0, 2);
        assert!(unordered.is_err());
        let nan = QuantizedDelta::from_parts(Scheme::RateDistortion, vec![f32::NAN], vec![0], 0, 1);
        assert!(nan.is_err());
    }

    fn finite_f32() -> impl Strategy<Value = f32> {
        any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite())
    }

    fn mixed_f32() -> impl Strategy<Value = f32> {
        prop_oneof![finite_f32(), -4.0f32..4.0, Just(0.0f32), (0u32..1 << 23).prop_map(f32::from_bits)]
    }

    proptest! {
        #[test]
        fn bucket_invariants(values in prop::collection::vec(mixed_f32(), 1..200)) {
            let out = q(&values);
            let table = out.table();
            prop_assert!(table.len() <= 512);
            let keys: Vec<_> = table.buckets().iter().map(|b| b.key).collect();
            for (i, k) in keys.iter().enumerate() {
                prop_assert!(!keys[i + 1..].contains(k));
            }
            for (v, &i) in values.iter().zip(out.indices()) {
                let b = &table.buckets()[i as usize];
                match b.key {
                    BucketKey::Zero => {
                        prop_assert_eq!(unbiased_exponent(*v), ZERO_EXPONENT);
                        prop_assert_eq!(b.representative.to_bits(), 0);
                    }
                    BucketKey::Exponent { sign, exponent } => {
                        prop_assert_eq!(Sign::of(*v), sign);
                        prop_assert_eq!(unbiased_exponent(*v), exponent);
                        prop_assert_eq!(unbiased_exponent(b.representative), exponent);
                        let err = (f64::from(*v) - f64::from(b.representative)).abs();
                        prop_assert!(err < (exponent as f64).exp2());
                    }
                    BucketKey::Interval(_) => prop_assert!(false),
                }
            }
            let total: u64 = table.counts().sum();
            prop_assert_eq!(total as usize, values.len());
        }

        #[test]
        fn midrange_error_bound(values in prop::collection::vec(-4.0f32..4.0, 1..100)) {
            let out = q(&values);
            let table = out.table();
            for (bi, b) in table.buckets().iter().enumerate() {
                let members: Vec<f32> = values.iter().zip(out.indices())
                    .filter(|(_, &i)| i as usize == bi).map(|(v, _)| *v).collect();
                let lo = members.iter().cloned().fold(f32::INFINITY, f32::min);
                let hi = members.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                if b.key == BucketKey::Zero { continue; }
                prop_assert!(lo <= b.representative && b.representative <= hi);
                let half_ulp = f64::from(hi.abs()) * f64::from(f32::EPSILON) / 2.0;
                for m in members {
                    let err = (f64::from(m) - f64::from(b.representative)).abs();
                    prop_assert!(err <= (f64::from(hi) - f64::from(lo)) / 2.0 + half_ulp);
                }
            }
        }

        #[test]
        fn promotion_properties(values in prop::collection::vec(mixed_f32(), 1..200), bits in 1u8..6) {
            let base = q(&values);
            let p = promote(&base, bits).unwrap();
            prop_assert!(p.table().len() <= 1 << bits);
            prop_assert_eq!(p.table().zero_index(), Some(p.table().len() - 1));
            // Idempotent.
            prop_assert!(promote(&p, bits).unwrap().bit_eq(&p));
            // Merged elements all sit below every retained exponent.
            let kept_min = p.table().buckets().iter().filter_map(|b| match b.key {
                BucketKey::Exponent { exponent, .. } => Some(exponent), _ => None }).min();
            for (j, (v, &i)) in values.iter().zip(p.indices()).enumerate() {
                let e = unbiased_exponent(*v);
                if p.table().buckets()[i as usize].key == BucketKey::Zero {
                    if let Some(cut) = kept_min { prop_assert!(e <= cut); }
                } else {
                    // Retained elements keep their pre-promotion value.
                    let before = base.table().buckets()[base.indices()[j] as usize].representative;
                    prop_assert_eq!(p.table().buckets()[i as usize].representative.to_bits(), before.to_bits());
                }
            }
        }

        #[test]
        fn dequantize_is_a_projection(values in prop::collection::vec(-100.0f32..100.0, 1..200)) {
            let first = q(&values);
            let again = quantize(&dequantize(&first)).unwrap();
            let reps = |x: &QuantizedDelta| x.table().buckets().iter()
                .filter(|b| b.count > 0).map(|b| (b.key, b.representative.to_bits())).collect::<Vec<_>>();
            prop_assert_eq!(reps(&again), reps(&first));
            prop_assert_eq!(again.indices(), first.indices());
        }
    }
}
