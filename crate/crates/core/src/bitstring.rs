//! Bit-string solutions, the OneMax_z fitness family and seeded random streams.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fixed-length binary solution.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    bits: Vec<bool>,
}

impl BitVector {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "problem size must be at least 1");
        Self { bits: vec![false; n] }
    }

    pub fn ones(n: usize) -> Self {
        assert!(n >= 1, "problem size must be at least 1");
        Self { bits: vec![true; n] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::contract("bit vector must have length >= 1"));
        }
        Ok(Self { bits })
    }

    /// Every bit independently one with probability 1/2.
    pub fn sample_uniform(n: usize, rng: &mut RngStream) -> Self {
        assert!(n >= 1, "problem size must be at least 1");
        let mut bits = Vec::with_capacity(n);
        let mut word = 0u64;
        for i in 0..n {
            if i % 64 == 0 {
                word = rng.next_u64();
            }
            bits.push(word & 1 == 1);
            word >>= 1;
        }
        Self { bits }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub(crate) fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self { bits: self.bits.iter().map(|b| !b).collect() }
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self { bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect() })
    }

    pub fn hamming(&self, other: &Self) -> Result<usize> {
        check_len(self.len(), other.len())?;
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::contract(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(bits)
    }
}

/// Hidden target of OneMax_z. The classical OneMax uses the all-ones target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target(BitVector);

impl Target {
    pub fn all_ones(n: usize) -> Self {
        Self(BitVector::ones(n))
    }

    pub fn new(z: BitVector) -> Self {
        Self(z)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bits(&self) -> &BitVector {
        &self.0
    }

    /// Whether position `i` of `x` agrees with the target.
    #[inline]
    pub(crate) fn agrees(&self, x: &BitVector, i: usize) -> bool {
        x.get(i) == self.0.get(i)
    }
}

/// Number of positions where `x` agrees with the target.
pub fn fitness(x: &BitVector, z: &Target) -> Result<usize> {
    check_len(x.len(), z.len())?;
    Ok(x.bits.iter().zip(&z.0.bits).filter(|(a, b)| a == b).count())
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::contract(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Seeded random stream identified by `(master_seed, stream_index)`.
///
/// Backed by ChaCha8 with the master seed expanded through `seed_from_u64`
/// and the stream index selecting ChaCha's 64-bit stream counter, so distinct
/// indices under one master seed never overlap. Only reproducibility within
/// this implementation is promised.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self { master_seed, stream_index, rng }
    }

    /// Re-open a stream at a position previously read with [`RngStream::word_pos`].
    pub fn resume(master_seed: u64, stream_index: u64, word_pos: u128) -> Self {
        let mut s = Self::new(master_seed, stream_index);
        s.rng.set_word_pos(word_pos);
        s
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Bernoulli draw; `p` outside [0, 1] saturates.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            self.random::<f64>() < p
        }
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer, used to derive independent master seeds from a
/// parent seed and a tag (repetitions, evaluation batches, ...).
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    let mut z = parent ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
