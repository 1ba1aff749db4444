//! Fixed-length bit strings used as computational-basis labels.
//!
//! Bit 0 is the leftmost character of the textual form, so `"011"` has bit 0
//! clear and bits 1 and 2 set. Ordering is lexicographic on that textual form
//! (shorter strings first), which keeps every map keyed by basis strings in a
//! stable, human-readable order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use smallvec::SmallVec;

use crate::error::{Error, Result};

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    len: usize,
    // bit k lives in words[k / 64], counted from the most significant end,
    // so comparing words compares the textual forms; unused low bits are zero
    words: SmallVec<[u64; 2]>,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        let mut words = SmallVec::new();
        words.resize(len.div_ceil(WORD), 0);
        BitString { len, words }
    }

    pub fn empty() -> Self {
        Self::zeros(0)
    }

    /// The `width`-bit big-endian encoding of `value` (bit 0 is the most
    /// significant bit).
    pub fn from_uint(value: u64, width: usize) -> Self {
        let mut out = Self::zeros(width);
        if (1..=WORD).contains(&width) {
            let v = if width < WORD { value & ((1u64 << width) - 1) } else { value };
            out.words[0] = v << (WORD - width);
            return out;
        }
        for k in 0..width.min(WORD) {
            if (value >> k) & 1 == 1 {
                out.set(width - 1 - k, true);
            }
        }
        out
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let bits: Vec<bool> = bits.into_iter().collect();
        let mut out = Self::zeros(bits.len());
        for (k, b) in bits.into_iter().enumerate() {
            if b {
                out.set(k, true);
            }
        }
        out
    }

    /// Characteristic vector of a set of positions.
    pub fn with_ones(len: usize, ones: &[usize]) -> Self {
        let mut out = Self::zeros(len);
        for &k in ones {
            out.set(k, true);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, k: usize) -> bool {
        assert!(k < self.len, "bit {k} out of range for length {}", self.len);
        (self.words[k / WORD] >> (WORD - 1 - k % WORD)) & 1 == 1
    }

    pub fn set(&mut self, k: usize, value: bool) {
        assert!(k < self.len, "bit {k} out of range for length {}", self.len);
        let mask = 1u64 << (WORD - 1 - k % WORD);
        if value {
            self.words[k / WORD] |= mask;
        } else {
            self.words[k / WORD] &= !mask;
        }
    }

    pub fn flip(&mut self, k: usize) {
        let v = self.get(k);
        self.set(k, !v);
    }

    // Up to 64 bits starting at `start`, as a `count`-bit value whose most
    // significant bit is bit `start`.
    fn chunk(&self, start: usize, count: usize) -> u64 {
        debug_assert!(count <= WORD && start + count <= self.len);
        if count == 0 {
            return 0;
        }
        let (w, off) = (start / WORD, start % WORD);
        let mut v = self.words[w] << off;
        if off != 0 && off + count > WORD {
            v |= self.words[w + 1] >> (WORD - off);
        }
        v >> (WORD - count)
    }

    fn put_chunk(&mut self, start: usize, count: usize, value: u64) {
        debug_assert!(count <= WORD && start + count <= self.len);
        if count == 0 {
            return;
        }
        // left-align the value
        let v = value << (WORD - count);
        let (w, off) = (start / WORD, start % WORD);
        let low_count = count.min(WORD - off);
        let low_mask = (u64::MAX << (WORD - low_count)) >> off;
        self.words[w] = (self.words[w] & !low_mask) | ((v >> off) & low_mask);
        if low_count < count {
            let high_mask = u64::MAX << (WORD - (count - low_count));
            self.words[w + 1] = (self.words[w + 1] & !high_mask) | ((v << low_count) & high_mask);
        }
    }

    /// Copy of bits `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> BitString {
        assert!(start + len <= self.len, "slice {start}+{len} exceeds length {}", self.len);
        let mut out = Self::zeros(len);
        let mut done = 0;
        while done < len {
            let c = (len - done).min(WORD);
            out.put_chunk(done, c, self.chunk(start + done, c));
            done += c;
        }
        out
    }

    /// Overwrite bits `start..start + src.len()` with `src`.
    pub fn splice(&mut self, start: usize, src: &BitString) {
        assert!(start + src.len <= self.len, "splice overruns length {}", self.len);
        let mut done = 0;
        while done < src.len {
            let c = (src.len - done).min(WORD);
            self.put_chunk(start + done, c, src.chunk(done, c));
            done += c;
        }
    }

    /// Concatenation of the given bit ranges, in order.
    pub fn gather(&self, ranges: &[std::ops::Range<usize>]) -> BitString {
        let mut out = Self::zeros(ranges.iter().map(|r| r.len()).sum());
        let mut at = 0;
        for r in ranges {
            assert!(r.end <= self.len, "range {r:?} exceeds length {}", self.len);
            let mut done = 0;
            while done < r.len() {
                let c = (r.len() - done).min(WORD);
                out.put_chunk(at + done, c, self.chunk(r.start + done, c));
                done += c;
            }
            at += r.len();
        }
        out
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = Self::zeros(self.len + other.len);
        out.splice(0, self);
        out.splice(self.len, other);
        out
    }

    pub fn concat_all<'a, I: IntoIterator<Item = &'a BitString>>(parts: I) -> BitString {
        parts.into_iter().fold(BitString::empty(), |acc, p| acc.concat(p))
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(self.len, other.len, "xor of bit strings with different lengths");
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(other.words.iter()) {
            *a ^= b;
        }
        out
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitString) -> bool {
        assert_eq!(self.len, other.len, "inner product of bit strings with different lengths");
        self.words
            .iter()
            .zip(other.words.iter())
            .map(|(a, b)| (a & b).count_ones())
            .sum::<u32>()
            % 2
            == 1
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Big-endian value of the string; `None` beyond 64 bits.
    pub fn to_uint(&self) -> Option<u64> {
        if self.len > WORD {
            return None;
        }
        Some(if self.len == 0 { 0 } else { self.words[0] >> (WORD - self.len) })
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |k| self.get(k))
    }

    pub fn ones(&self) -> Vec<usize> {
        (0..self.len).filter(|&k| self.get(k)).collect()
    }
}

impl Ord for BitString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len.cmp(&other.len).then_with(|| self.words.as_slice().cmp(other.words.as_slice()))
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(\"{self}\")")
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("invalid bit character {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BitString::from_bits(bits))
    }
}

impl serde::Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
