//! Fixed-width bitsets and a Fenwick tree of dyadic weights, indexed by
//! description length.

use crate::bitcore::Dyadic;

#[derive(Debug, Clone)]
pub(crate) struct Bits {
    words: Vec<u64>,
    width: usize,
}

impl Bits {
    pub fn new(width: usize) -> Self {
        Bits {
            words: vec![0; width.div_ceil(64)],
            width,
        }
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        debug_assert!(i < self.width);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    /// Clears every index `>= from`.
    pub fn clear_from(&mut self, from: usize) {
        if from >= self.width {
            return;
        }
        let w = from / 64;
        self.words[w] &= (1u64 << (from % 64)) - 1;
        self.words[w + 1..].iter_mut().for_each(|x| *x = 0);
    }

    /// Least `i < bound` set in `self` and clear in `minus`.
    pub fn first_diff(&self, minus: &Bits, bound: usize) -> Option<usize> {
        let bound = bound.min(self.width);
        for (w, (&a, &b)) in self.words.iter().zip(&minus.words).enumerate() {
            if w * 64 >= bound {
                break;
            }
            let x = a & !b;
            if x != 0 {
                let i = w * 64 + x.trailing_zeros() as usize;
                return (i < bound).then_some(i);
            }
        }
        None
    }

    /// Set indices in `[lo, hi)`, ascending.
    pub fn ones_in(&self, lo: usize, hi: usize) -> Vec<usize> {
        let hi = hi.min(self.width);
        let mut out = Vec::new();
        let mut i = lo;
        while i < hi {
            let w = self.words[i / 64] >> (i % 64);
            if w == 0 {
                i = (i / 64 + 1) * 64;
                continue;
            }
            i += w.trailing_zeros() as usize;
            if i < hi {
                out.push(i);
            }
            i += 1;
        }
        out
    }
}

/// Prefix sums over `[0, width)`.
#[derive(Debug, Clone)]
pub(crate) struct Fenwick {
    tree: Vec<Dyadic>,
}

impl Fenwick {
    pub fn new(width: usize) -> Self {
        Fenwick {
            tree: vec![Dyadic::zero(); width + 1],
        }
    }

    pub fn add(&mut self, i: usize, w: &Dyadic) {
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += w;
            j += j & j.wrapping_neg();
        }
    }

    /// Removes weight previously added at `i`.
    pub fn sub(&mut self, i: usize, w: &Dyadic) {
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] = self.tree[j]
                .checked_sub(w)
                .expect("removed weight was added before");
            j += j & j.wrapping_neg();
        }
    }

    /// Sum over `[0, end)`.
    pub fn prefix(&self, end: usize) -> Dyadic {
        let mut j = end.min(self.tree.len() - 1);
        let mut acc = Dyadic::zero();
        while j > 0 {
            acc += &self.tree[j];
            j &= j - 1;
        }
        acc
    }

    /// Sum over indices `j` with `lo < j <= hi`.
    pub fn range_open_closed(&self, lo: u64, hi: u64) -> Dyadic {
        if lo >= hi {
            return Dyadic::zero();
        }
        let end = usize::try_from(hi.saturating_add(1)).unwrap_or(usize::MAX);
        let start = usize::try_from(lo.saturating_add(1)).unwrap_or(usize::MAX);
        let width = self.tree.len() - 1;
        if start >= width {
            return Dyadic::zero();
        }
        self.prefix(end)
            .checked_sub(&self.prefix(start))
            .expect("prefix sums are monotone")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bits_basics() {
        let mut b = Bits::new(130);
        for i in [0, 63, 64, 100, 129] {
            b.set(i, true);
        }
        assert_eq!(b.ones_in(0, 130), vec![0, 63, 64, 100, 129]);
        assert_eq!(b.ones_in(1, 100), vec![63, 64]);
        let empty = Bits::new(130);
        assert_eq!(b.first_diff(&empty, 130), Some(0));
        assert_eq!(empty.first_diff(&b, 130), None);
        b.clear_from(64);
        assert_eq!(b.ones_in(0, 130), vec![0, 63]);
        let mut m = Bits::new(130);
        m.set(0, true);
        assert_eq!(b.first_diff(&m, 63), None);
        assert_eq!(b.first_diff(&m, 64), Some(63));
    }

    proptest! {
        #[test]
        fn fenwick_matches_direct_sums(
            ops in prop::collection::vec((0usize..40, 1u32..20), 1..60),
            lo in 0u64..45, hi in 0u64..45,
        ) {
            let mut f = Fenwick::new(40);
            let mut direct: Vec<Option<u32>> = vec![None; 40];
            for (i, l) in ops {
                if let Some(old) = direct[i] {
                    f.sub(i, &Dyadic::pow2_neg(old));
                }
                f.add(i, &Dyadic::pow2_neg(l));
                direct[i] = Some(l);
            }
            let want: Dyadic = direct
                .iter()
                .enumerate()
                .filter(|&(j, _)| (j as u64) > lo && (j as u64) <= hi)
                .filter_map(|(_, l)| l.map(Dyadic::pow2_neg))
                .sum();
            prop_assert_eq!(f.range_open_closed(lo, hi), want);
        }
    }
}
