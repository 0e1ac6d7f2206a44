use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const MAX_CODE_LEN: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    symbol: u16,
    len: u8,
    code: u64,
}

/// Canonical prefix code. Codes are assigned in `(length, symbol)` order, so
/// the table is fully determined by its code lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeTable {
    // Sorted by symbol.
    entries: Vec<Entry>,
}

impl CodeTable {
    /// Canonical table from `(symbol, length)` pairs. Lengths must be in
    /// `1..=64`, symbols distinct, and the Kraft sum at most one.
    pub fn from_lengths<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u16, u8)>,
    {
        let mut entries: Vec<Entry> = pairs
            .into_iter()
            .map(|(symbol, len)| Entry { symbol, len, code: 0 })
            .collect();
        if entries.is_empty() {
            return Err(Error::Domain("code table needs at least one symbol"));
        }
        if entries.iter().any(|e| e.len == 0 || e.len > MAX_CODE_LEN) {
            return Err(Error::Corrupt("code length out of range"));
        }
        // Kraft sum scaled by 2^64.
        let kraft: u128 = entries.iter().map(|e| 1u128 << (64 - e.len)).sum();
        if kraft > 1u128 << 64 {
            return Err(Error::Corrupt("code lengths violate the Kraft inequality"));
        }
        entries.sort_by_key(|e| (e.len, e.symbol));
        let mut code = 0u64;
        let mut prev_len = entries[0].len;
        for (i, e) in entries.iter_mut().enumerate() {
            if i > 0 {
                code = (code + 1) << (e.len - prev_len);
            }
            e.code = code;
            prev_len = e.len;
        }
        entries.sort_by_key(|e| e.symbol);
        if entries.windows(2).any(|w| w[0].symbol == w[1].symbol) {
            return Err(Error::Corrupt("duplicate symbol in code table"));
        }
        Ok(Self { entries })
    }

    /// Table from a dense per-symbol length array; zero marks an unused symbol.
    pub fn from_alphabet_lengths(lengths: &[u8]) -> Result<Self> {
        Self::from_lengths(
            lengths
                .iter()
                .enumerate()
                .filter(|(_, &l)| l > 0)
                .map(|(s, &l)| (s as u16, l)),
        )
    }

    /// Dense length array over an alphabet of `alphabet` symbols.
    pub fn alphabet_lengths(&self, alphabet: usize) -> Vec<u8> {
        let mut out = vec![0u8; alphabet];
        for e in &self.entries {
            if let Some(slot) = out.get_mut(e.symbol as usize) {
                *slot = e.len;
            }
        }
        out
    }

    /// `(symbol, code length)` in symbol order.
    pub fn lengths(&self) -> impl Iterator<Item = (u16, u8)> + '_ {
        self.entries.iter().map(|e| (e.symbol, e.len))
    }

    /// `(code, length)` for `symbol`.
    pub fn code(&self, symbol: u16) -> Option<(u64, u8)> {
        self.entries
            .binary_search_by_key(&symbol, |e| e.symbol)
            .ok()
            .map(|i| (self.entries[i].code, self.entries[i].len))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_len(&self) -> u8 {
        self.entries.iter().map(|e| e.len).max().unwrap_or(0)
    }

    /// Total encoded size of a multiset given as `(symbol, count)`.
    pub fn total_bits(&self, freqs: &[(u16, u64)]) -> Result<u64> {
        freqs.iter().try_fold(0u64, |acc, &(s, c)| {
            let (_, len) = self.code(s).ok_or(Error::UnknownSymbol(s))?;
            Ok(acc + c * u64::from(len))
        })
    }

    /// Kraft sum `sum 2^-len`.
    pub fn kraft_sum(&self) -> f64 {
        self.entries.iter().map(|e| libm::exp2(-f64::from(e.len))).sum()
    }

    pub(crate) fn sorted_codes(&self) -> Vec<(u64, u8, u16)> {
        let mut v: Vec<_> = self.entries.iter().map(|e| (e.code, e.len, e.symbol)).collect();
        v.sort_by_key(|&(_, len, sym)| (len, sym));
        v
    }
}

/// Symbols in the order the Huffman merge consumes them: ascending count,
/// then ascending symbol id.
pub(crate) fn merge_order(freqs: &[(u16, u64)]) -> Vec<(u16, u64)> {
    let mut v = freqs.to_vec();
    v.sort_by_key(|&(s, c)| (c, s));
    v
}

/// Huffman code lengths for counts already in [`merge_order`]. The result
/// depends only on the count sequence: ties between a leaf and a merged node
/// go to the leaf, ties among leaves follow their position.
pub(crate) fn lengths_in_merge_order(counts: &[u64]) -> Result<Vec<u8>> {
    let m = counts.len();
    if m == 1 {
        return Ok(vec![1]);
    }
    // Nodes 0..m are leaves, m.. are merged nodes in creation order.
    let mut weight: Vec<u128> = counts.iter().map(|&c| u128::from(c)).collect();
    let mut parent = vec![usize::MAX; 2 * m - 1];
    let (mut leaf, mut merged) = (0usize, m);
    let mut take = |weight: &Vec<u128>| -> usize {
        let use_leaf = leaf < m && (merged >= weight.len() || weight[leaf] <= weight[merged]);
        if use_leaf {
            leaf += 1;
            leaf - 1
        } else {
            merged += 1;
            merged - 1
        }
    };
    for _ in 0..m - 1 {
        let a = take(&weight);
        let b = take(&weight);
        let node = weight.len();
        weight.push(weight[a] + weight[b]);
        parent[a] = node;
        parent[b] = node;
    }
    let mut depth = vec![0u32; 2 * m - 1];
    for node in (0..2 * m - 2).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    depth[..m]
        .iter()
        .map(|&d| {
            if d > u32::from(MAX_CODE_LEN) {
                Err(Error::Domain("Huffman code longer than 64 bits"))
            } else {
                Ok(d as u8)
            }
        })
        .collect()
}

/// Optimal (Huffman) canonical code for `(symbol, count)` pairs.
pub fn build_code_table(freqs: &[(u16, u64)]) -> Result<CodeTable> {
    if freqs.is_empty() {
        return Err(Error::Domain("frequency list is empty"));
    }
    if freqs.iter().any(|&(_, c)| c == 0) {
        return Err(Error::Domain("frequencies must be positive"));
    }
    let order = merge_order(freqs);
    if has_duplicate_symbols(freqs) {
        return Err(Error::Domain("duplicate symbol in frequency list"));
    }
    let counts: Vec<u64> = order.iter().map(|&(_, c)| c).collect();
    let lengths = lengths_in_merge_order(&counts)?;
    CodeTable::from_lengths(order.iter().zip(lengths).map(|(&(s, _), l)| (s, l)))
}

fn has_duplicate_symbols(freqs: &[(u16, u64)]) -> bool {
    let mut syms: Vec<u16> = freqs.iter().map(|&(s, _)| s).collect();
    syms.sort_unstable();
    syms.windows(2).any(|w| w[0] == w[1])
}
