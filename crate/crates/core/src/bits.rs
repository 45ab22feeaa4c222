//! Packed bit strings.
//!
//! Position 0 is the least significant bit of the first word; a `Bits` parsed
//! from text reads left to right as positions 0, 1, 2, ... Truth tables, seeds,
//! and simulator basis indices all share this indexing.

use std::fmt;
use std::str::FromStr;

use crate::rng::Stream;

/// Fixed-length packed bit string. Unused high bits of the last word stay zero,
/// so equality and hashing work on the raw words.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits {
    len: usize,
    words: Vec<u64>,
}

fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits { len, words: vec![0; word_count(len)] }
    }

    /// The low `len` bits of `value`, position i = bit i.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64, "from_u64 holds at most 64 bits");
        let mut b = Bits::zeros(len);
        if len > 0 {
            let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
            if !b.words.is_empty() {
                b.words[0] = value & mask;
            }
        }
        b
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = Bits::zeros(bits.len());
        for (i, &v) in bits.iter().enumerate() {
            b.set(i, v);
        }
        b
    }

    /// Uniformly random string of the given length.
    pub fn random(len: usize, rng: &mut Stream) -> Self {
        let mut b = Bits::zeros(len);
        for w in &mut b.words {
            *w = rng.next_u64();
        }
        b.mask_tail();
        b
    }

    fn mask_tail(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        if self.len == 0 {
            self.words.clear();
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let (w, s) = (i / 64, i % 64);
        if v {
            self.words[w] |= 1 << s;
        } else {
            self.words[w] &= !(1 << s);
        }
    }

    pub fn flip(&mut self, i: usize) {
        let v = self.get(i);
        self.set(i, !v);
    }

    /// Value as an integer; requires len <= 64.
    pub fn to_u64(&self) -> u64 {
        assert!(self.len <= 64, "to_u64 requires length <= 64, got {}", self.len);
        self.words.first().copied().unwrap_or(0)
    }

    /// Value of the `len` bits at [start, start+len) without allocating;
    /// requires len <= 64. `window(0, self.len())` agrees with `to_u64`.
    pub fn window(&self, start: usize, len: usize) -> u64 {
        assert!(len <= 64, "window holds at most 64 bits");
        assert!(start + len <= self.len, "window out of range");
        if len == 0 {
            return 0;
        }
        let (w, off) = (start / 64, start % 64);
        let mut v = self.words[w] >> off;
        if off != 0 && w + 1 < self.words.len() {
            v |= self.words[w + 1] << (64 - off);
        }
        if len < 64 {
            v &= (1u64 << len) - 1;
        }
        v
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn parity(&self) -> bool {
        self.count_ones() % 2 == 1
    }

    /// Bitwise XOR; lengths must match.
    pub fn xor(&self, other: &Bits) -> Bits {
        assert_eq!(self.len, other.len, "xor length mismatch");
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Bits { len: self.len, words }
    }

    pub fn concat(&self, other: &Bits) -> Bits {
        let mut out = Bits::zeros(self.len + other.len);
        for i in 0..self.len {
            out.set(i, self.get(i));
        }
        for i in 0..other.len {
            out.set(self.len + i, other.get(i));
        }
        out
    }

    /// Contiguous sub-string [start, start+len).
    pub fn slice(&self, start: usize, len: usize) -> Bits {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = Bits::zeros(len);
        for i in 0..len {
            out.set(i, self.get(start + i));
        }
        out
    }

    /// Restriction to the given positions, in the order listed.
    pub fn select(&self, positions: &[usize]) -> Bits {
        let mut out = Bits::zeros(positions.len());
        for (i, &p) in positions.iter().enumerate() {
            out.set(i, self.get(p));
        }
        out
    }

    /// Appends the low `width` bits of `value`.
    pub fn push_low(&mut self, value: u64, width: usize) {
        assert!(width <= 64);
        if width == 0 {
            return;
        }
        let masked = if width == 64 { value } else { value & ((1u64 << width) - 1) };
        let old = self.len;
        self.len += width;
        self.words.resize(word_count(self.len), 0);
        let (w, off) = (old / 64, old % 64);
        self.words[w] |= masked << off;
        if off != 0 && off + width > 64 {
            self.words[w + 1] |= masked >> (64 - off);
        }
    }

    pub fn push(&mut self, v: bool) {
        self.push_low(v as u64, 1);
    }

    /// Resets to the empty string, keeping the allocation for reuse.
    pub fn clear(&mut self) {
        self.len = 0;
        self.words.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Bits::zeros(len);
        for w in &mut b.words {
            *w = u64::MAX;
        }
        b.mask_tail();
        b
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl serde::Serialize for Bits {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Bits {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid bit character {0:?}; expected '0' or '1'")]
pub struct ParseBitsError(pub char);

impl FromStr for Bits {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut b = Bits::zeros(s.chars().count());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => b.set(i, true),
                other => return Err(ParseBitsError(other)),
            }
        }
        Ok(b)
    }
}
