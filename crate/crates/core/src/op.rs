//! Associative combining operators over fixed-size bit strings.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpError {
    #[error("operand size {size} does not fit operator `{op}`: {why}")]
    BadSize {
        op: &'static str,
        size: usize,
        why: String,
    },
    #[error("grain size {grain} is not a positive multiple of {natural} bits")]
    BadGrain { grain: usize, natural: usize },
    #[error("unknown operator `{0}`")]
    Unknown(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    /// Bitwise exclusive or.
    Xor,
    /// Lane-wise addition modulo `modulus`, each lane `lane_bits` wide.
    AddMod { lane_bits: u32, modulus: u64 },
    /// Product of 2x2 matrices over GF(2), stored row-major in 4 bits.
    MatMul2,
    /// Composition of maps on {0..7}: `(a . b)[x] = b[a[x]]` (apply `a` first).
    Compose8,
}

/// An associative operator with a unit, a commutativity flag and a grain
/// partition. The default partition is a single grain (holistic use); a finer
/// partition must consist of multiples of the operator's natural grain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombineOp {
    kind: OpKind,
    size: usize,
    grains: Vec<Range<usize>>,
}

impl CombineOp {
    pub fn new(kind: OpKind, size: usize) -> Result<Self, OpError> {
        let bad = |why: &str| OpError::BadSize {
            op: kind_name(kind),
            size,
            why: why.to_string(),
        };
        match kind {
            OpKind::Xor if size == 0 => return Err(bad("must be positive")),
            OpKind::AddMod { lane_bits, modulus } => {
                let w = lane_bits as usize;
                if w == 0 || w > 63 || size == 0 || size % w != 0 {
                    return Err(bad("must be a positive multiple of the lane width"));
                }
                if modulus < 2 || (modulus - 1) >> lane_bits != 0 {
                    return Err(bad("modulus must be at least 2 and fit a lane"));
                }
            }
            OpKind::MatMul2 if size != 4 => return Err(bad("2x2 GF(2) matrices take 4 bits")),
            OpKind::Compose8 if size != 24 => return Err(bad("maps on 8 elements take 24 bits")),
            _ => {}
        }
        Ok(CombineOp {
            kind,
            size,
            grains: vec![0..size],
        })
    }

    pub fn xor(size: usize) -> Result<Self, OpError> {
        CombineOp::new(OpKind::Xor, size)
    }

    /// Addition modulo `2^lane_bits` on `size / lane_bits` lanes.
    pub fn add_pow2(lane_bits: u32, size: usize) -> Result<Self, OpError> {
        CombineOp::new(
            OpKind::AddMod {
                lane_bits,
                modulus: 1u64 << lane_bits,
            },
            size,
        )
    }

    /// Addition modulo `modulus` on `lanes` lanes of `ceil(log2 modulus)` bits.
    pub fn add_mod(modulus: u64, lanes: usize) -> Result<Self, OpError> {
        let lane_bits = lane_bits_for(modulus);
        CombineOp::new(OpKind::AddMod { lane_bits, modulus }, lanes * lane_bits as usize)
    }

    pub fn matmul2() -> Self {
        CombineOp::new(OpKind::MatMul2, 4).expect("fixed size")
    }

    pub fn compose8() -> Self {
        CombineOp::new(OpKind::Compose8, 24).expect("fixed size")
    }

    /// Parses the names used on the command line. `size` is ignored by the
    /// fixed-size operators.
    pub fn by_name(name: &str, size: usize) -> Result<Self, OpError> {
        match name {
            "xor" => CombineOp::xor(size),
            "add" => CombineOp::add_pow2(16, size),
            "matmul2" => Ok(CombineOp::matmul2()),
            "compose8" => Ok(CombineOp::compose8()),
            other => Err(OpError::Unknown(other.to_string())),
        }
    }

    /// Splits the operand into grains of `grain` bits (the last may be shorter).
    pub fn with_grain(mut self, grain: usize) -> Result<Self, OpError> {
        let natural = self.natural_grain();
        if grain == 0 || grain % natural != 0 {
            return Err(OpError::BadGrain { grain, natural });
        }
        self.grains = (0..self.size)
            .step_by(grain)
            .map(|a| a..(a + grain).min(self.size))
            .collect();
        Ok(self)
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        kind_name(self.kind)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn grains(&self) -> &[Range<usize>] {
        &self.grains
    }

    /// Largest grain of the current partition.
    pub fn grain_size(&self) -> usize {
        self.grains.iter().map(|g| g.len()).max().unwrap_or(0)
    }

    /// Smallest piece the operator can act on independently.
    pub fn natural_grain(&self) -> usize {
        match self.kind {
            OpKind::Xor => 1,
            OpKind::AddMod { lane_bits, .. } => lane_bits as usize,
            OpKind::MatMul2 | OpKind::Compose8 => self.size,
        }
    }

    pub fn is_commutative(&self) -> bool {
        matches!(self.kind, OpKind::Xor | OpKind::AddMod { .. })
    }

    pub fn unit(&self) -> Bits {
        match self.kind {
            OpKind::Xor | OpKind::AddMod { .. } => Bits::zeros(self.size),
            OpKind::MatMul2 => Bits::from_fields(1, &[1, 0, 0, 1]),
            OpKind::Compose8 => Bits::from_fields(3, &[0, 1, 2, 3, 4, 5, 6, 7]),
        }
    }

    /// A uniformly random valid operand.
    pub fn random_operand<R: Rng + ?Sized>(&self, rng: &mut R) -> Bits {
        match self.kind {
            OpKind::Xor | OpKind::MatMul2 => Bits::random(self.size, rng),
            OpKind::AddMod { lane_bits, modulus } => {
                let lanes: Vec<u64> = (0..self.size / lane_bits as usize)
                    .map(|_| rng.gen_range(0..modulus))
                    .collect();
                Bits::from_fields(lane_bits as usize, &lanes)
            }
            OpKind::Compose8 => {
                let map: Vec<u64> = (0..8).map(|_| rng.gen_range(0..8)).collect();
                Bits::from_fields(3, &map)
            }
        }
    }

    pub fn apply(&self, a: &Bits, b: &Bits) -> Bits {
        self.apply_range(a, b, 0..self.size)
    }

    /// Bits `range` of `a (x) b`, computed from bits `range` of the operands.
    /// `range` must be aligned to the natural grain.
    pub fn apply_range(&self, a: &Bits, b: &Bits, range: Range<usize>) -> Bits {
        assert_eq!(a.len(), self.size);
        assert_eq!(b.len(), self.size);
        assert!(self.is_aligned(&range), "range {range:?} not grain aligned");
        match self.kind {
            OpKind::Xor => a.slice(range.clone()).xor(&b.slice(range)),
            OpKind::AddMod { lane_bits, modulus } => {
                let w = lane_bits as usize;
                let lanes: Vec<u64> = range
                    .clone()
                    .step_by(w)
                    .map(|off| (a.field(off, w) + b.field(off, w)) % modulus)
                    .collect();
                Bits::from_fields(w, &lanes)
            }
            OpKind::MatMul2 => {
                let m = |x: &Bits, r: usize, c: usize| x.field(2 * r + c, 1);
                let mut out = [0u64; 4];
                for r in 0..2 {
                    for c in 0..2 {
                        out[2 * r + c] = (m(a, r, 0) & m(b, 0, c)) ^ (m(a, r, 1) & m(b, 1, c));
                    }
                }
                Bits::from_fields(1, &out)
            }
            OpKind::Compose8 => {
                let out: Vec<u64> = (0..8)
                    .map(|x| b.field(3 * a.field(3 * x, 3) as usize, 3))
                    .collect();
                Bits::from_fields(3, &out)
            }
        }
    }

    pub fn is_aligned(&self, range: &Range<usize>) -> bool {
        let g = self.natural_grain();
        range.start <= range.end
            && range.end <= self.size
            && range.start % g == 0
            && (range.end % g == 0 || range.end == self.size)
    }

    /// Left fold `x_0 (x) x_1 (x) ... (x) x_{n-1}`; the unit for no inputs.
    pub fn fold<'a>(&self, xs: impl IntoIterator<Item = &'a Bits>) -> Bits {
        xs.into_iter()
            .fold(self.unit(), |acc, x| self.apply(&acc, x))
    }
}

/// Bits needed for a residue modulo `modulus`.
pub fn lane_bits_for(modulus: u64) -> u32 {
    (64 - (modulus.max(2) - 1).leading_zeros()).max(1)
}

fn kind_name(kind: OpKind) -> &'static str {
    match kind {
        OpKind::Xor => "xor",
        OpKind::AddMod { .. } => "add",
        OpKind::MatMul2 => "matmul2",
        OpKind::Compose8 => "compose8",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn battery() -> Vec<CombineOp> {
        vec![
            CombineOp::xor(40).unwrap(),
            CombineOp::add_pow2(16, 64).unwrap(),
            CombineOp::add_mod(10, 5).unwrap(),
            CombineOp::matmul2(),
            CombineOp::compose8(),
        ]
    }

    #[test]
    fn lane_width_is_ceil_log2() {
        assert_eq!(lane_bits_for(2), 1);
        assert_eq!(lane_bits_for(10), 4);
        assert_eq!(lane_bits_for(16), 4);
        assert_eq!(lane_bits_for(17), 5);
        assert_eq!(lane_bits_for(1 << 16), 16);
    }

    #[test]
    fn matmul_is_not_commutative() {
        let op = CombineOp::matmul2();
        let a = Bits::from_fields(1, &[1, 1, 0, 1]);
        let b = Bits::from_fields(1, &[1, 0, 1, 1]);
        assert_ne!(op.apply(&a, &b), op.apply(&b, &a));
        // [[1,1],[0,1]] * [[1,0],[1,1]] = [[0,1],[1,1]] over GF(2)
        assert_eq!(op.apply(&a, &b), Bits::from_fields(1, &[0, 1, 1, 1]));
    }

    #[test]
    fn compose_applies_left_operand_first() {
        let op = CombineOp::compose8();
        let shift = Bits::from_fields(3, &[1, 2, 3, 4, 5, 6, 7, 0]);
        let double = Bits::from_fields(3, &[0, 2, 4, 6, 0, 2, 4, 6]);
        let c = op.apply(&shift, &double);
        // x -> 2 (x + 1) mod 8
        assert_eq!(c.fields(3), vec![2, 4, 6, 0, 2, 4, 6, 0]);
    }

    #[test]
    fn grain_must_be_natural_multiple() {
        assert!(CombineOp::add_pow2(16, 64).unwrap().with_grain(8).is_err());
        let op = CombineOp::xor(20).unwrap().with_grain(8).unwrap();
        assert_eq!(op.grains(), &[0..8, 8..16, 16..20]);
    }

    proptest! {
        #[test]
        fn unit_and_associativity(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for op in battery() {
                let (a, b, c) = (
                    op.random_operand(&mut rng),
                    op.random_operand(&mut rng),
                    op.random_operand(&mut rng),
                );
                prop_assert_eq!(op.apply(&op.unit(), &a), a.clone());
                prop_assert_eq!(op.apply(&a, &op.unit()), a.clone());
                prop_assert_eq!(
                    op.apply(&op.apply(&a, &b), &c),
                    op.apply(&a, &op.apply(&b, &c))
                );
            }
        }

        #[test]
        fn grain_products_concatenate(seed in any::<u64>(), g in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for op in [CombineOp::xor(37).unwrap(), CombineOp::add_pow2(8, 64).unwrap()] {
                let op = op.clone().with_grain(g * op.natural_grain()).unwrap();
                let (a, b) = (op.random_operand(&mut rng), op.random_operand(&mut rng));
                let mut joined = Bits::zeros(op.size());
                for r in op.grains() {
                    joined.splice(r.start, &op.apply_range(&a, &b, r.clone()));
                }
                prop_assert_eq!(joined, op.apply(&a, &b));
            }
        }
    }
}
