//! Finite bit strings, extended description lengths and exact dyadic rationals.
//!
//! Every weight handled by the constructions is a finite sum of terms `2^{-l}`,
//! so [`Dyadic`] never rounds: comparisons between lemma bounds are exact.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitError {
    #[error("dyadic subtraction would be negative")]
    NegativeResult,
    #[error("invalid bit string {0:?}: only '0' and '1' are allowed")]
    InvalidBitString(String),
    #[error("invalid dyadic {0:?}: expected \"numerator/2^exponent\"")]
    InvalidDyadic(String),
}

const WORD: usize = 64;

/// A finite binary string, packed most-significant-bit first.
///
/// Unused low bits of the last word are always zero, so derived equality and
/// hashing agree with bitwise equality.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(WORD)],
            len,
        }
    }

    /// The string of length `len` whose 1-positions are exactly `ones`.
    /// Positions `>= len` are ignored.
    pub fn from_ones<I: IntoIterator<Item = u64>>(len: usize, ones: I) -> Self {
        let mut s = Self::zeros(len);
        for p in ones {
            if (p as usize) < len {
                s.set(p as usize, true);
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        self.words[i / WORD] >> (WORD - 1 - i % WORD) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        let mask = 1u64 << (WORD - 1 - i % WORD);
        if bit {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % WORD == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Positions holding a 1, ascending.
    pub fn ones(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let lz = w.leading_zeros() as usize;
                w &= !(1u64 << (WORD - 1 - lz));
                Some((wi * WORD + lz) as u64)
            })
        })
    }

    /// The first `n` bits. Panics if `n > len`.
    pub fn prefix(&self, n: usize) -> BitString {
        assert!(n <= self.len);
        let mut words = self.words[..n.div_ceil(WORD)].to_vec();
        if n % WORD != 0 {
            let last = words.len() - 1;
            words[last] &= !0u64 << (WORD - n % WORD);
        }
        BitString { words, len: n }
    }

    /// True iff `self` is an initial segment of `other` (including equality).
    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        if self.len > other.len {
            return false;
        }
        let full = self.len / WORD;
        if self.words[..full] != other.words[..full] {
            return false;
        }
        let rem = self.len % WORD;
        if rem == 0 {
            return true;
        }
        let mask = !0u64 << (WORD - rem);
        self.words[full] == other.words[full] & mask
    }

    /// `self` followed by `bit`.
    pub fn child(&self, bit: bool) -> BitString {
        let mut c = self.clone();
        c.push(bit);
        c
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut c = self.clone();
        for b in other.iter() {
            c.push(b);
        }
        c
    }
}

/// Length-then-lexicographic order.
pub fn compare(a: &BitString, b: &BitString) -> Ordering {
    a.cmp(b)
}

/// Whether `a` is an initial segment of `b`.
pub fn is_prefix(a: &BitString, b: &BitString) -> bool {
    a.is_prefix_of(b)
}

impl Ord for BitString {
    fn cmp(&self, other: &Self) -> Ordering {
        // equal lengths share the zero padding, so wordwise order is lexicographic
        self.len
            .cmp(&other.len)
            .then_with(|| self.words.cmp(&other.words))
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

impl FromStr for BitString {
    type Err = BitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = BitString::new();
        for c in s.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                _ => return Err(BitError::InvalidBitString(s.to_string())),
            }
        }
        Ok(out)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A description length, or `Infinite` when no description exists yet.
///
/// `Finite` sorts before `Infinite`, and `Infinite == Infinite`, so
/// `Infinite > Infinite` is false.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExtendedLength {
    Finite(u32),
    Infinite,
}

impl ExtendedLength {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedLength::Finite(_))
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            ExtendedLength::Finite(l) => Some(l),
            ExtendedLength::Infinite => None,
        }
    }

    /// `2^{-self}`, with `2^{-INFINITE} = 0`.
    pub fn weight(self) -> Dyadic {
        match self {
            ExtendedLength::Finite(l) => Dyadic::pow2_neg(l),
            ExtendedLength::Infinite => Dyadic::zero(),
        }
    }

    /// `self + c`; infinite stays infinite.
    pub fn plus(self, c: u32) -> ExtendedLength {
        match self {
            ExtendedLength::Finite(l) => ExtendedLength::Finite(l + c),
            ExtendedLength::Infinite => ExtendedLength::Infinite,
        }
    }
}

impl From<u32> for ExtendedLength {
    fn from(v: u32) -> Self {
        ExtendedLength::Finite(v)
    }
}

impl fmt::Display for ExtendedLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedLength::Finite(l) => write!(f, "{l}"),
            ExtendedLength::Infinite => f.write_str("inf"),
        }
    }
}

/// A nonnegative dyadic rational `numerator / 2^exponent` in canonical form:
/// the numerator is odd, or zero with exponent zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: BigUint,
    exp: u32,
}

impl Dyadic {
    pub fn zero() -> Self {
        Dyadic {
            num: BigUint::zero(),
            exp: 0,
        }
    }

    pub fn one() -> Self {
        Dyadic {
            num: BigUint::one(),
            exp: 0,
        }
    }

    /// `2^{-l}`.
    pub fn pow2_neg(l: u32) -> Self {
        Dyadic {
            num: BigUint::one(),
            exp: l,
        }
    }

    pub fn new(num: BigUint, exp: u32) -> Self {
        let mut d = Dyadic { num, exp };
        d.normalize();
        d
    }

    pub fn from_parts(num: u64, exp: u32) -> Self {
        Self::new(BigUint::from(num), exp)
    }

    pub fn numerator(&self) -> &BigUint {
        &self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    fn normalize(&mut self) {
        if self.num.is_zero() {
            self.exp = 0;
            return;
        }
        let tz = self.num.trailing_zeros().unwrap_or(0);
        let shift = tz.min(self.exp as u64);
        if shift > 0 {
            self.num >>= shift as usize;
            self.exp -= shift as u32;
        }
    }

    /// Numerators of `self` and `other` over the common denominator `2^max(exp)`.
    fn aligned(&self, other: &Dyadic) -> (BigUint, BigUint, u32) {
        let e = self.exp.max(other.exp);
        let a = &self.num << (e - self.exp) as usize;
        let b = &other.num << (e - other.exp) as usize;
        (a, b, e)
    }

    pub fn checked_sub(&self, other: &Dyadic) -> Result<Dyadic, BitError> {
        let (a, b, e) = self.aligned(other);
        if a < b {
            return Err(BitError::NegativeResult);
        }
        Ok(Dyadic::new(a - b, e))
    }

    /// `max(self - other, 0)`.
    pub fn saturating_sub(&self, other: &Dyadic) -> Dyadic {
        self.checked_sub(other).unwrap_or_else(|_| Dyadic::zero())
    }

    /// `self * 2^{-k}`.
    pub fn shr(&self, k: u32) -> Dyadic {
        if self.is_zero() {
            return Dyadic::zero();
        }
        Dyadic {
            num: self.num.clone(),
            exp: self.exp + k,
        }
    }

    /// `self * m` for a natural multiplier.
    pub fn mul_nat(&self, m: u64) -> Dyadic {
        Dyadic::new(&self.num * BigUint::from(m), self.exp)
    }
}

/// Exact addition.
pub fn dyadic_add(a: &Dyadic, b: &Dyadic) -> Dyadic {
    let (x, y, e) = a.aligned(b);
    Dyadic::new(x + y, e)
}

/// Exact subtraction; fails when `b > a`.
pub fn dyadic_sub(a: &Dyadic, b: &Dyadic) -> Result<Dyadic, BitError> {
    a.checked_sub(b)
}

pub fn dyadic_cmp(a: &Dyadic, b: &Dyadic) -> Ordering {
    a.cmp(b)
}

pub fn pow2_neg(l: u32) -> Dyadic {
    Dyadic::pow2_neg(l)
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.exp == other.exp {
            return self.num.cmp(&other.num);
        }
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        dyadic_add(self, rhs)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        dyadic_add(&self, &rhs)
    }
}

impl AddAssign<&Dyadic> for Dyadic {
    fn add_assign(&mut self, rhs: &Dyadic) {
        *self = dyadic_add(self, rhs);
    }
}

impl std::iter::Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::zero(), |acc, d| &acc + &d)
    }
}

impl<'a> std::iter::Sum<&'a Dyadic> for Dyadic {
    fn sum<I: Iterator<Item = &'a Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::zero(), |acc, d| &acc + d)
    }
}

impl Default for Dyadic {
    fn default() -> Self {
        Dyadic::zero()
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^{}", self.num, self.exp)
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Dyadic {
    type Err = BitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BitError::InvalidDyadic(s.to_string());
        let (n, e) = s.split_once("/2^").ok_or_else(bad)?;
        let num: BigUint = n.parse().map_err(|_| bad())?;
        let exp: u32 = e.parse().map_err(|_| bad())?;
        Ok(Dyadic::new(num, exp))
    }
}

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
