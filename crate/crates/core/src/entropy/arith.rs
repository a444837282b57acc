//! Integer arithmetic coder with an adaptive frequency model.
//!
//! The coder is the classic 32-bit low/high scheme with pending-bit
//! underflow handling. The model starts with only an escape symbol; unseen
//! values are sent as an escape followed by 32 raw bits (two uniform 16-bit
//! halves) and then join the model.

use std::collections::HashMap;

use super::bitio::{BitReader, BitWriter};
use crate::error::{Error, Result};

/// Count added to a symbol each time it is coded.
pub const COUNT_INCREMENT: u32 = 32;
/// Counts are halved once their total reaches this value.
pub const MAX_TOTAL: u32 = 1 << 16;
/// Fixed weight of the escape symbol.
pub const ESCAPE_COUNT: u32 = 32;

const TOP: u64 = 0xFFFF_FFFF;
const HALF: u64 = 1 << 31;
const QUARTER: u64 = 1 << 30;
const RAW_TOTAL: u32 = 1 << 16;
/// Bits the decoder may read past the end of a valid stream.
const OVERREAD_ALLOWANCE: usize = 64;

/// Adaptive counts over an open alphabet. Slot 0 is the escape symbol.
#[derive(Clone, Debug)]
pub struct FrequencyModel {
    index: HashMap<u32, usize>,
    values: Vec<u32>,
    counts: Vec<u32>,
    // Fenwick tree over `counts`, 1-based.
    tree: Vec<u32>,
    total: u32,
}

impl Default for FrequencyModel {
    fn default() -> Self {
        Self::new()
    }
}

impl FrequencyModel {
    pub fn new() -> Self {
        let mut m = Self {
            index: HashMap::new(),
            values: vec![0],
            counts: Vec::new(),
            tree: vec![0],
            total: 0,
        };
        m.push_slot(ESCAPE_COUNT);
        m
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn alphabet_len(&self) -> usize {
        self.values.len() - 1
    }

    fn push_slot(&mut self, count: u32) {
        self.counts.push(count);
        let i = self.counts.len();
        // node i covers (i - lowbit(i), i]
        let low = i - (i & i.wrapping_neg());
        let mut sum = count;
        let mut j = i - 1;
        while j > low {
            sum += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        self.tree.push(sum);
        self.total += count;
    }

    fn add(&mut self, slot: usize, delta: u32) {
        self.counts[slot] += delta;
        self.total += delta;
        let mut i = slot + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of counts of slots before `slot`.
    fn cumulative(&self, slot: usize) -> u32 {
        let mut i = slot;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Slot whose interval contains `target` (< total).
    fn find(&self, target: u32) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut rem = target;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }

    fn interval(&self, slot: usize) -> (u32, u32) {
        let lo = self.cumulative(slot);
        (lo, lo + self.counts[slot])
    }

    fn rebuild(&mut self) {
        let counts = std::mem::take(&mut self.counts);
        self.tree = vec![0];
        self.total = 0;
        for c in counts {
            self.push_slot(c);
        }
    }

    fn update(&mut self, slot: usize) {
        self.add(slot, COUNT_INCREMENT);
        self.halve_if_full();
    }

    fn insert(&mut self, value: u32) {
        self.index.insert(value, self.values.len());
        self.values.push(value);
        self.push_slot(COUNT_INCREMENT);
        self.halve_if_full();
    }

    fn halve_if_full(&mut self) {
        if self.total >= MAX_TOTAL {
            for (i, c) in self.counts.iter_mut().enumerate() {
                *c = if i == 0 { ESCAPE_COUNT } else { (*c / 2).max(1) };
            }
            self.rebuild();
        }
    }
}

struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    out: BitWriter,
}

impl Encoder {
    fn new() -> Self {
        Self {
            low: 0,
            high: TOP,
            pending: 0,
            out: BitWriter::new(),
        }
    }

    fn emit(&mut self, bit: bool) {
        self.out.write_bit(bit);
        for _ in 0..self.pending {
            self.out.write_bit(!bit);
        }
        self.pending = 0;
    }

    fn encode(&mut self, lo: u32, hi: u32, total: u32) {
        let range = self.high - self.low + 1;
        self.high = self.low + range * hi as u64 / total as u64 - 1;
        self.low += range * lo as u64 / total as u64;
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < HALF + QUARTER {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        self.pending += 1;
        let bit = self.low >= QUARTER;
        self.emit(bit);
        self.out.finish()
    }
}

struct Decoder<'a> {
    low: u64,
    high: u64,
    value: u64,
    input: BitReader<'a>,
    len_bits: usize,
    overread: usize,
}

impl<'a> Decoder<'a> {
    fn new(bytes: &'a [u8]) -> Result<Self> {
        let mut d = Self {
            low: 0,
            high: TOP,
            value: 0,
            input: BitReader::new(bytes),
            len_bits: bytes.len() * 8,
            overread: 0,
        };
        for _ in 0..32 {
            d.value = (d.value << 1) | d.next_bit()? as u64;
        }
        Ok(d)
    }

    fn next_bit(&mut self) -> Result<bool> {
        if self.input.bits_read() < self.len_bits {
            self.input.read_bit()
        } else {
            self.overread += 1;
            if self.overread > OVERREAD_ALLOWANCE {
                return Err(Error::corrupt("arithmetic stream", "read past end of payload"));
            }
            Ok(false)
        }
    }

    fn target(&self, total: u32) -> u32 {
        let range = self.high - self.low + 1;
        (((self.value - self.low + 1) * total as u64 - 1) / range) as u32
    }

    fn consume(&mut self, lo: u32, hi: u32, total: u32) -> Result<()> {
        let range = self.high - self.low + 1;
        self.high = self.low + range * hi as u64 / total as u64 - 1;
        self.low += range * lo as u64 / total as u64;
        loop {
            if self.high < HALF {
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < HALF + QUARTER {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = (self.value << 1) | self.next_bit()? as u64;
        }
        Ok(())
    }
}

/// Encodes `symbols` with a fresh adaptive model.
pub fn ac_encode(symbols: &[u32]) -> Vec<u8> {
    if symbols.is_empty() {
        return Vec::new();
    }
    let mut model = FrequencyModel::new();
    let mut enc = Encoder::new();
    for &s in symbols {
        match model.index.get(&s) {
            Some(&slot) => {
                let (lo, hi) = model.interval(slot);
                enc.encode(lo, hi, model.total);
                model.update(slot);
            }
            None => {
                enc.encode(0, ESCAPE_COUNT, model.total);
                enc.encode(s >> 16, (s >> 16) + 1, RAW_TOTAL);
                enc.encode(s & 0xFFFF, (s & 0xFFFF) + 1, RAW_TOTAL);
                model.insert(s);
            }
        }
    }
    enc.finish()
}

/// Decodes `count` symbols produced by [`ac_encode`].
pub fn ac_decode(bytes: &[u8], count: usize) -> Result<Vec<u32>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut model = FrequencyModel::new();
    let mut dec = Decoder::new(bytes)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let t = dec.target(model.total);
        if t >= model.total {
            return Err(Error::corrupt("arithmetic stream", "code value outside model range"));
        }
        let slot = model.find(t);
        let (lo, hi) = model.interval(slot);
        dec.consume(lo, hi, model.total)?;
        if slot == 0 {
            let hi16 = dec.target(RAW_TOTAL);
            dec.consume(hi16, hi16 + 1, RAW_TOTAL)?;
            let lo16 = dec.target(RAW_TOTAL);
            dec.consume(lo16, lo16 + 1, RAW_TOTAL)?;
            let s = (hi16 << 16) | lo16;
            if model.index.contains_key(&s) {
                return Err(Error::corrupt("arithmetic stream", "escape for a known symbol"));
            }
            model.insert(s);
            out.push(s);
        } else {
            out.push(model.values[slot]);
            model.update(slot);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_find_matches_intervals() {
        let mut m = FrequencyModel::new();
        for v in [5u32, 9, 1, 5, 5, 9] {
            match m.index.get(&v) {
                Some(&s) => m.update(s),
                None => m.insert(v),
            }
        }
        for slot in 0..m.counts.len() {
            let (lo, hi) = m.interval(slot);
            assert_eq!(m.find(lo), slot);
            assert_eq!(m.find(hi - 1), slot);
        }
        assert_eq!(m.total(), m.counts.iter().sum::<u32>());
    }

    #[test]
    fn empty_stream() {
        assert!(ac_encode(&[]).is_empty());
        assert!(ac_decode(&[], 0).unwrap().is_empty());
    }

    #[test]
    fn repeated_symbol_is_tiny() {
        let s = vec![7u32; 1000];
        let bytes = ac_encode(&s);
        assert!(bytes.len() <= 32, "{} bytes", bytes.len());
        assert_eq!(ac_decode(&bytes, 1000).unwrap(), s);
    }

    #[test]
    fn halving_keeps_roundtrip() {
        let s: Vec<u32> = (0..50_000u32).map(|i| (i * 7919) % 13 + (i % 3) * 1000).collect();
        let bytes = ac_encode(&s);
        assert_eq!(ac_decode(&bytes, s.len()).unwrap(), s);
    }

    #[test]
    fn extreme_values() {
        let s = vec![u32::MAX, 0, u32::MAX, 1 << 31, 65535, 65536];
        assert_eq!(ac_decode(&ac_encode(&s), s.len()).unwrap(), s);
    }

    #[test]
    fn overread_is_corruption() {
        let s: Vec<u32> = (0..200).collect();
        let bytes = ac_encode(&s);
        assert!(ac_decode(&bytes[..4], s.len()).is_err());
    }
}
