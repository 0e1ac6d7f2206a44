//! Model states, deltas and chain reconstruction.
//!
//! All arithmetic is element-wise f32 in index order and chain order, so a
//! decoder replaying the same deltas lands on the encoder's shadow state bit
//! for bit.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A named, contiguous slice of the flat parameter vector (one layer, say).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn new(name: impl Into<String>, offset: usize, len: usize) -> Self {
        Self { name: name.into(), offset, len }
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Flat f32 parameter vector. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    values: Vec<f32>,
    segments: Vec<Segment>,
}

impl ModelState {
    /// Builds a state with one segment, `"all"`, covering every value.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        let len = values.len();
        Self::with_segments(values, vec![Segment::new("all", 0, len)])
    }

    pub fn with_segments(values: Vec<f32>, segments: Vec<Segment>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        check_finite(&values)?;
        check_tiling(&segments, values.len())?;
        Ok(Self { values, segments })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Values of the named segment, if present.
    pub fn segment_values(&self, name: &str) -> Option<&[f32]> {
        self.segments.iter().find(|s| s.name == name).map(|s| &self.values[s.range()])
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &ModelState) -> bool {
        bit_eq(&self.values, &other.values)
    }
}

/// Difference between a state and the shadow it is tracked against.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaVector {
    values: Vec<f32>,
}

impl DeltaVector {
    /// Wraps raw values. Deltas may contain anything; the quantizers reject
    /// non-finite elements themselves.
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn bit_eq(&self, other: &DeltaVector) -> bool {
        bit_eq(&self.values, &other.values)
    }
}

pub fn compute_delta(current: &ModelState, shadow: &ModelState) -> Result<DeltaVector> {
    check_len(shadow.len(), current.len())?;
    let values = current.values.iter().zip(&shadow.values).map(|(c, s)| c - s).collect();
    Ok(DeltaVector { values })
}

/// `shadow + delta`, element-wise. The result keeps the shadow's segments.
pub fn apply_delta(shadow: &ModelState, delta: &DeltaVector) -> Result<ModelState> {
    check_len(shadow.len(), delta.len())?;
    let values: Vec<f32> = shadow.values.iter().zip(&delta.values).map(|(s, d)| s + d).collect();
    check_finite(&values)?;
    Ok(ModelState { values, segments: shadow.segments.clone() })
}

/// Left fold of [`apply_delta`] over `deltas`, in order.
pub fn reconstruct<'a, I>(initial: &ModelState, deltas: I) -> Result<ModelState>
where
    I: IntoIterator<Item = &'a DeltaVector>,
{
    let mut state = initial.clone();
    for delta in deltas {
        check_len(state.len(), delta.len())?;
        for (s, d) in state.values.iter_mut().zip(&delta.values) {
            *s += d;
        }
    }
    check_finite(&state.values)?;
    Ok(state)
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Shape { expected, found });
    }
    Ok(())
}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_tiling(segments: &[Segment], len: usize) -> Result<()> {
    let mut next = 0;
    for seg in segments {
        if seg.offset != next {
            return Err(Error::Segments("segments overlap or leave a gap"));
        }
        if seg.len == 0 {
            return Err(Error::Segments("empty segment"));
        }
        next = seg.offset.checked_add(seg.len).ok_or(Error::Segments("segment overflows"))?;
    }
    if next != len {
        return Err(Error::Segments("segments do not cover the state"));
    }
    Ok(())
}

fn bit_eq(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(v: &[f32]) -> ModelState {
        ModelState::new(v.to_vec()).unwrap()
    }

    #[test]
    fn delta_examples() {
        let d = compute_delta(&state(&[1.0, 2.0]), &state(&[1.0, 2.0])).unwrap();
        assert_eq!(d.values(), &[0.0, 0.0]);
        let d = compute_delta(&state(&[3.0, 0.5]), &state(&[1.0, 1.0])).unwrap();
        assert_eq!(d.values(), &[2.0, -0.5]);
    }

    #[test]
    fn delta_matches_hardware_subtraction() {
        // Frozen from numpy: float32(0.1) - float32(0.3) == -0.20000002 (0xbe4cccce),
        // one ulp away from the f32 nearest to -0.2.
        let d = compute_delta(&state(&[0.1]), &state(&[0.3])).unwrap();
        let expected = f32::from_bits(0xbe4c_ccce);
        assert_eq!(d.values()[0].to_bits(), expected.to_bits());
        assert_ne!(d.values()[0], -0.2f32);
    }

    #[test]
    fn apply_examples() {
        let s = apply_delta(&state(&[1.0]), &DeltaVector::new(vec![0.0])).unwrap();
        assert_eq!(s.values(), &[1.0]);
        let s = apply_delta(&state(&[1.0, -2.0]), &DeltaVector::new(vec![0.5, 2.0])).unwrap();
        assert_eq!(s.values(), &[1.5, 0.0]);
    }

    #[test]
    fn reconstruct_examples() {
        let init = state(&[1.0]);
        assert!(reconstruct(&init, []).unwrap().bit_eq(&init));
        let deltas = [DeltaVector::new(vec![1.0]), DeltaVector::new(vec![2.0])];
        let out = reconstruct(&state(&[0.0]), &deltas).unwrap();
        assert_eq!(out.values(), &[3.0]);
    }

    #[test]
    fn shape_errors() {
        let err = compute_delta(&state(&[1.0]), &state(&[1.0, 2.0])).unwrap_err();
        assert_eq!(err, Error::Shape { expected: 2, found: 1 });
        assert!(apply_delta(&state(&[1.0]), &DeltaVector::new(vec![])).is_err());
        let deltas = [DeltaVector::new(vec![1.0, 1.0])];
        assert!(reconstruct(&state(&[0.0]), &deltas).is_err());
    }

    #[test]
    fn rejects_bad_states() {
        assert_eq!(ModelState::new(vec![]).unwrap_err(), Error::Empty);
        assert_eq!(ModelState::new(vec![1.0, f32::NAN]).unwrap_err(), Error::NonFinite { index: 1 });
        assert!(ModelState::new(vec![f32::INFINITY]).is_err());
        let overflow = apply_delta(&state(&[f32::MAX]), &DeltaVector::new(vec![f32::MAX]));
        assert!(matches!(overflow, Err(Error::NonFinite { index: 0 })));
    }

    #[test]
    fn segment_tiling() {
        let v = vec![0.0; 5];
        let ok = ModelState::with_segments(v.clone(), vec![Segment::new("a", 0, 2), Segment::new("b", 2, 3)]);
        assert_eq!(ok.unwrap().segment_values("b").unwrap().len(), 3);
        let gap = ModelState::with_segments(v.clone(), vec![Segment::new("a", 0, 2), Segment::new("b", 3, 2)]);
        assert!(gap.is_err());
        let overlap = ModelState::with_segments(v.clone(), vec![Segment::new("a", 0, 3), Segment::new("b", 2, 3)]);
        assert!(overlap.is_err());
        let short = ModelState::with_segments(v, vec![Segment::new("a", 0, 4)]);
        assert!(short.is_err());
    }

    #[test]
    fn apply_keeps_segments() {
        let s = ModelState::with_segments(vec![1.0, 2.0], vec![Segment::new("w", 0, 1), Segment::new("b", 1, 1)]).unwrap();
        let out = apply_delta(&s, &DeltaVector::new(vec![1.0, 1.0])).unwrap();
        assert_eq!(out.segments(), s.segments());
    }

    // Dyadic values k / 2^10 with |k| < 2^20: every difference is exact in f32.
    fn dyadic() -> impl Strategy<Value = f32> {
        (-(1i32 << 20)..(1i32 << 20)).prop_map(|k| k as f32 / 1024.0)
    }

    proptest! {
        #[test]
        fn apply_inverts_compute_when_exact(pairs in prop::collection::vec((dyadic(), dyadic()), 1..64)) {
            let (cur, sh): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
            let current = ModelState::new(cur).unwrap();
            let shadow = ModelState::new(sh).unwrap();
            let delta = compute_delta(&current, &shadow).unwrap();
            prop_assert!(apply_delta(&shadow, &delta).unwrap().bit_eq(&current));
        }

        #[test]
        fn reconstruct_is_sequential_apply(init in prop::collection::vec(-1e3f32..1e3, 8),
                                           steps in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 8), 0..10)) {
            let base = ModelState::new(init).unwrap();
            let deltas: Vec<DeltaVector> = steps.into_iter().map(DeltaVector::new).collect();
            let mut seq = base.clone();
            for d in &deltas {
                seq = apply_delta(&seq, d).unwrap();
            }
            prop_assert!(reconstruct(&base, &deltas).unwrap().bit_eq(&seq));
        }
    }
}
