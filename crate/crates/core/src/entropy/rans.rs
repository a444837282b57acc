//! Byte-renormalized rANS with a 32-bit state and a semi-static frequency
//! table serialized ahead of the payload.
//!
//! Table layout: LEB128 symbol count K, one byte of scale bits, then K
//! LEB128 (value, frequency) pairs in ascending value order. The payload
//! follows: the final encoder state as 4 little-endian bytes and then the
//! renormalization bytes in decoding order.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Lower bound of the normalized state interval.
pub const RANS_L: u32 = 1 << 23;
/// Default frequency resolution; raised only when the alphabet needs more
/// slots.
pub const DEFAULT_SCALE_BITS: u8 = 12;
const MAX_SCALE_BITS: u8 = 23;

/// Quantized symbol frequencies summing to `2^scale_bits`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RansTable {
    pub scale_bits: u8,
    pub values: Vec<u32>,
    pub freqs: Vec<u32>,
    cum: Vec<u32>,
}

impl RansTable {
    /// Builds the table from symbol occurrences.
    pub fn from_symbols(symbols: &[u32]) -> Result<Self> {
        let mut hist: BTreeMap<u32, u64> = BTreeMap::new();
        for &s in symbols {
            *hist.entry(s).or_default() += 1;
        }
        let k = hist.len();
        let mut scale_bits = DEFAULT_SCALE_BITS;
        while (1usize << scale_bits) < k {
            scale_bits += 1;
        }
        if scale_bits > MAX_SCALE_BITS {
            return Err(Error::InvalidArgument(format!(
                "rANS alphabet of {k} symbols exceeds the table resolution"
            )));
        }
        let target = 1u64 << scale_bits;
        let total = symbols.len() as u64;
        let values: Vec<u32> = hist.keys().copied().collect();
        let counts: Vec<u64> = hist.values().copied().collect();
        let mut freqs: Vec<u32> = counts
            .iter()
            .map(|&c| (((c * target) as f64 / total as f64).round() as u32).max(1))
            .collect();
        let mut sum: i64 = freqs.iter().map(|&f| f as i64).sum();
        // Settle the rounding surplus on the most frequent symbols first.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        while sum != target as i64 {
            let mut changed = false;
            for &i in &order {
                if sum > target as i64 && freqs[i] > 1 {
                    freqs[i] -= 1;
                    sum -= 1;
                    changed = true;
                } else if sum < target as i64 {
                    freqs[i] += 1;
                    sum += 1;
                    changed = true;
                }
                if sum == target as i64 {
                    break;
                }
            }
            debug_assert!(changed);
        }
        Ok(Self::with_freqs(scale_bits, values, freqs))
    }

    fn with_freqs(scale_bits: u8, values: Vec<u32>, freqs: Vec<u32>) -> Self {
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cum.push(0);
        for &f in &freqs {
            acc += f;
            cum.push(acc);
        }
        Self {
            scale_bits,
            values,
            freqs,
            cum,
        }
    }

    pub fn serialize(&self, out: &mut Vec<u8>) {
        leb128::write::unsigned(out, self.values.len() as u64).expect("vec write");
        out.push(self.scale_bits);
        for (&v, &f) in self.values.iter().zip(&self.freqs) {
            leb128::write::unsigned(out, v as u64).expect("vec write");
            leb128::write::unsigned(out, f as u64).expect("vec write");
        }
    }

    /// Parses a table and returns it with the number of bytes consumed.
    pub fn deserialize(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut cursor = bytes;
        let bad = |detail: &str| Error::corrupt("rANS table", detail);
        let read = |c: &mut &[u8]| -> Result<u64> {
            leb128::read::unsigned(c).map_err(|_| bad("malformed integer"))
        };
        let k = read(&mut cursor)? as usize;
        let (&scale_bits, rest) = cursor.split_first().ok_or_else(|| bad("missing scale"))?;
        cursor = rest;
        if !(1..=MAX_SCALE_BITS).contains(&scale_bits) || k == 0 || k > (1 << scale_bits) {
            return Err(bad("invalid header"));
        }
        let mut values = Vec::with_capacity(k);
        let mut freqs = Vec::with_capacity(k);
        let mut sum = 0u64;
        for _ in 0..k {
            let v = read(&mut cursor)?;
            let f = read(&mut cursor)?;
            if v > u32::MAX as u64 || f == 0 {
                return Err(bad("invalid entry"));
            }
            if values.last().is_some_and(|&last: &u32| last as u64 >= v) {
                return Err(bad("values not ascending"));
            }
            sum += f;
            values.push(v as u32);
            freqs.push(f as u32);
        }
        if sum != 1u64 << scale_bits {
            return Err(bad("frequencies do not sum to the scale"));
        }
        let used = bytes.len() - cursor.len();
        Ok((Self::with_freqs(scale_bits, values, freqs), used))
    }

    fn slot_of(&self, value: u32) -> usize {
        self.values.binary_search(&value).expect("symbol in table")
    }

    fn symbol_at(&self, slot: u32) -> usize {
        self.cum.partition_point(|&c| c <= slot) - 1
    }
}

/// Encodes `symbols` as table followed by payload. Empty input gives no bytes.
pub fn rans_encode(symbols: &[u32]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    if symbols.is_empty() {
        return Ok(out);
    }
    let table = RansTable::from_symbols(symbols)?;
    table.serialize(&mut out);
    let scale = table.scale_bits as u32;
    let mut rev = Vec::new();
    let mut x = RANS_L;
    for &s in symbols.iter().rev() {
        let i = table.slot_of(s);
        let freq = table.freqs[i];
        let x_max = ((RANS_L >> scale) << 8) * freq;
        while x >= x_max {
            rev.push(x as u8);
            x >>= 8;
        }
        x = ((x / freq) << scale) + (x % freq) + table.cum[i];
    }
    out.extend_from_slice(&x.to_le_bytes());
    out.extend(rev.iter().rev());
    Ok(out)
}

/// Decodes `count` symbols produced by [`rans_encode`].
pub fn rans_decode(bytes: &[u8], count: usize) -> Result<Vec<u32>> {
    if count == 0 {
        if bytes.is_empty() {
            return Ok(Vec::new());
        }
        return Err(Error::corrupt("rANS stream", "payload for zero symbols"));
    }
    let (table, used) = RansTable::deserialize(bytes)?;
    let body = &bytes[used..];
    if body.len() < 4 {
        return Err(Error::Truncated("rANS state".into()));
    }
    let scale = table.scale_bits as u32;
    let mask = (1u32 << scale) - 1;
    let mut x = u32::from_le_bytes(body[..4].try_into().expect("4 bytes"));
    let mut pos = 4;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let slot = x & mask;
        let i = table.symbol_at(slot);
        out.push(table.values[i]);
        x = table.freqs[i] * (x >> scale) + slot - table.cum[i];
        while x < RANS_L {
            let b = *body
                .get(pos)
                .ok_or_else(|| Error::corrupt("rANS stream", "read past end of payload"))?;
            x = (x << 8) | b as u32;
            pos += 1;
        }
    }
    if x != RANS_L || pos != body.len() {
        return Err(Error::corrupt("rANS stream", "final state mismatch"));
    }
    Ok(out)
}
