//! Fixed-length bit strings used as literal payload values.

use std::fmt;
use std::ops::Range;

use rand::Rng;

/// A bit string of fixed length, packed little-endian into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bits {
    len: usize,
    words: Vec<u64>,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut b = Bits::zeros(len);
        for w in b.words.iter_mut() {
            *w = rng.gen();
        }
        b.mask_tail();
        b
    }

    /// Builds a string from `width`-bit little-endian fields.
    pub fn from_fields(width: usize, fields: &[u64]) -> Self {
        let mut b = Bits::zeros(width * fields.len());
        for (k, &f) in fields.iter().enumerate() {
            b.set_field(k * width, width, f);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let m = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    /// Reads `width <= 64` bits starting at `off`.
    pub fn field(&self, off: usize, width: usize) -> u64 {
        assert!(width <= 64 && off + width <= self.len);
        if width == 0 {
            return 0;
        }
        let (w, sh) = (off / 64, off % 64);
        let mut v = self.words[w] >> sh;
        if sh + width > 64 {
            v |= self.words[w + 1] << (64 - sh);
        }
        if width == 64 {
            v
        } else {
            v & ((1u64 << width) - 1)
        }
    }

    pub fn set_field(&mut self, off: usize, width: usize, val: u64) {
        assert!(width <= 64 && off + width <= self.len);
        for k in 0..width {
            self.set(off + k, (val >> k) & 1 == 1);
        }
    }

    pub fn fields(&self, width: usize) -> Vec<u64> {
        (0..self.len / width).map(|k| self.field(k * width, width)).collect()
    }

    pub fn slice(&self, r: Range<usize>) -> Bits {
        let mut out = Bits::zeros(r.len());
        let mut k = 0;
        while k < r.len() {
            let width = (r.len() - k).min(64);
            let v = self.field(r.start + k, width);
            out.set_field(k, width, v);
            k += width;
        }
        out
    }

    /// Overwrites bits `[off, off + src.len())` with `src`.
    pub fn splice(&mut self, off: usize, src: &Bits) {
        let mut k = 0;
        while k < src.len {
            let width = (src.len - k).min(64);
            self.set_field(off + k, width, src.field(k, width));
            k += width;
        }
    }

    pub fn xor(&self, other: &Bits) -> Bits {
        assert_eq!(self.len, other.len);
        Bits {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
        }
    }

    fn mask_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits[{}](", self.len)?;
        for i in 0..self.len.min(128) {
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        if self.len > 128 {
            write!(f, "...")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fields_cross_word_boundaries() {
        let mut b = Bits::zeros(200);
        b.set_field(60, 16, 0xBEEF);
        assert_eq!(b.field(60, 16), 0xBEEF);
        assert_eq!(b.field(64, 8), 0xEE);
    }

    #[test]
    fn slice_then_splice_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Bits::random(300, &mut rng);
        let mut c = Bits::zeros(300);
        c.splice(0, &a.slice(0..137));
        c.splice(137, &a.slice(137..300));
        assert_eq!(a, c);
    }
}
