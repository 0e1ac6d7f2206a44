use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::table::{lengths_in_merge_order, merge_order};
use super::CodeTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CacheKeyMode {
    /// Key on the bucket count plus the sorted frequency vector. Hits are
    /// identical to a fresh build.
    #[default]
    SortedFrequencies,
    /// Key on the bucket count alone. Cheaper, but a hit may reuse lengths
    /// that are suboptimal for the current counts.
    BucketCount,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Sorted(Vec<u64>),
    Count(usize),
}

/// Memoizes Huffman code lengths across steps.
///
/// Lengths are stored by merge position, so a hit is remapped onto whatever
/// symbols occupy those positions now.
#[derive(Debug, Clone, Default)]
pub struct CodeTableCache {
    mode: CacheKeyMode,
    entries: BTreeMap<Key, Vec<u8>>,
    hits: u64,
    misses: u64,
}

impl CodeTableCache {
    pub fn new(mode: CacheKeyMode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn mode(&self) -> CacheKeyMode {
        self.mode
    }

    /// Returns the table and whether it came from the cache.
    pub fn lookup_or_build(&mut self, freqs: &[(u16, u64)]) -> Result<(CodeTable, bool)> {
        if freqs.is_empty() {
            return Err(Error::Domain("frequency list is empty"));
        }
        if freqs.iter().any(|&(_, c)| c == 0) {
            return Err(Error::Domain("frequencies must be positive"));
        }
        let order = merge_order(freqs);
        let counts: Vec<u64> = order.iter().map(|&(_, c)| c).collect();
        let key = match self.mode {
            CacheKeyMode::SortedFrequencies => Key::Sorted(counts.clone()),
            CacheKeyMode::BucketCount => Key::Count(counts.len()),
        };
        let (lengths, hit) = match self.entries.get(&key) {
            Some(l) => {
                self.hits += 1;
                (l.clone(), true)
            }
            None => {
                self.misses += 1;
                let l = lengths_in_merge_order(&counts)?;
                self.entries.insert(key, l.clone());
                (l, false)
            }
        };
        let table = CodeTable::from_lengths(order.iter().zip(lengths).map(|(&(s, _), l)| (s, l)))
            .map_err(|_| Error::Domain("duplicate symbol in frequency list"))?;
        Ok((table, hit))
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
