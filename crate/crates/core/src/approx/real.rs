//! Left-c.e. reals as bit-vector approximations, and their coding into a c.e.
//! set with one block of positions per bit.

use thiserror::Error;

use super::CESetApprox;
use crate::bitcore::BitString;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RealError {
    #[error("stage {stage} has width {found}, expected {expected}")]
    Width {
        stage: usize,
        expected: usize,
        found: usize,
    },
    #[error("bit {bit} drops at stage {stage} without a lower bit rising")]
    NotMonotone { stage: usize, bit: usize },
    #[error("bit {bit} changes more than 2^{bit} times")]
    BlockOverflow { bit: usize },
    #[error("bit {0} is too high to code")]
    BitTooHigh(usize),
}

/// `stages[s]` holds `A(0)[s] A(1)[s] ...`; bit 0 is the most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CERealApprox {
    width: usize,
    stages: Vec<BitString>,
}

impl CERealApprox {
    /// Checks equal widths, the carry rule (a bit only drops when some higher
    /// bit rises) and the `2^k` change bound for bit `k`.
    pub fn new(stages: Vec<BitString>) -> Result<Self, RealError> {
        let width = stages.first().map_or(0, BitString::len);
        // positions of block `width - 1` must fit in u64
        if width > 63 {
            return Err(RealError::BitTooHigh(width - 1));
        }
        let mut changes = vec![0u64; width];
        let mut prev = BitString::zeros(width);
        for (s, cur) in stages.iter().enumerate() {
            if cur.len() != width {
                return Err(RealError::Width {
                    stage: s,
                    expected: width,
                    found: cur.len(),
                });
            }
            for n in 0..width {
                if prev.get(n) && !cur.get(n) && !(0..n).any(|i| !prev.get(i) && cur.get(i)) {
                    return Err(RealError::NotMonotone { stage: s, bit: n });
                }
                if prev.get(n) != cur.get(n) {
                    changes[n] += 1;
                    if changes[n] > 1u64 << n {
                        return Err(RealError::BlockOverflow { bit: n });
                    }
                }
            }
            prev = cur.clone();
        }
        Ok(CERealApprox { width, stages })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn stages(&self) -> &[BitString] {
        &self.stages
    }

    /// Parses one bit-vector per non-empty line.
    pub fn parse(text: &str) -> Result<Self, String> {
        let stages = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, l)| l.parse().map_err(|e| format!("line {}: {e}", i + 1)))
            .collect::<Result<Vec<BitString>, String>>()?;
        CERealApprox::new(stages).map_err(|e| e.to_string())
    }
}

/// First position of block `k`; the block is `[2^k - 1, 2^{k+1} - 1)`.
pub(crate) fn block_start(k: usize) -> u64 {
    (1u64 << k) - 1
}

/// Codes the real into a c.e. set: the `j`-th change of bit `k` (counting from
/// zero, the initial value being all zeros) enumerates position
/// `2^{k+1} - 2 - j` at the stage of the change.
pub fn encode_real(real: &CERealApprox) -> CESetApprox {
    let mut out = CESetApprox::new();
    let mut changes = vec![0u64; real.width];
    let mut prev = BitString::zeros(real.width);
    for (s, cur) in real.stages.iter().enumerate() {
        for (k, count) in changes.iter_mut().enumerate() {
            if prev.get(k) != cur.get(k) {
                let top = block_start(k + 1) - 1;
                out.enumerate(top - *count, s as u64)
                    .expect("block positions are used once");
                *count += 1;
            }
        }
        prev = cur.clone();
    }
    out
}

/// Reads `A↾n` at `stage` back from the parity of each block's count.
pub fn decode_real(set: &CESetApprox, stage: u64, n: usize) -> BitString {
    let mut out = BitString::zeros(n);
    for k in 0..n {
        let lo = block_start(k);
        let hi = block_start(k + 1);
        let count = (lo..hi).filter(|&p| set.contains(p, stage)).count();
        out.set(k, count % 2 == 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn single_flip_codes_position_zero() {
        let stages = (0..6)
            .map(|s| if s < 4 { bs("0") } else { bs("1") })
            .collect();
        let real = CERealApprox::new(stages).unwrap();
        let b = encode_real(&real);
        assert_eq!(b.schedule().collect::<Vec<_>>(), vec![(0, 4)]);
        assert_eq!(decode_real(&b, 3, 1), bs("0"));
        assert_eq!(decode_real(&b, 4, 1), bs("1"));
    }

    #[test]
    fn block_two_fills_from_top() {
        let real =
            CERealApprox::new(vec![bs("000"), bs("001"), bs("010"), bs("011"), bs("100")]).unwrap();
        let b = encode_real(&real);
        assert_eq!(
            b.schedule().collect::<Vec<_>>(),
            vec![(0, 4), (1, 4), (2, 2), (3, 4), (4, 3), (5, 2), (6, 1)]
        );
    }

    #[test]
    fn rejects_drop_without_carry() {
        assert_eq!(
            CERealApprox::new(vec![bs("01"), bs("00")]),
            Err(RealError::NotMonotone { stage: 1, bit: 1 })
        );
    }

    #[test]
    fn rejects_block_overflow() {
        // bit 1 changes three times while counting to 3
        let r = CERealApprox::new(vec![bs("00"), bs("01"), bs("10"), bs("11")]);
        assert_eq!(r, Err(RealError::BlockOverflow { bit: 1 }));
    }

    proptest! {
        #[test]
        fn round_trip(width in 1usize..8, steps in prop::collection::vec(0u64..16, 0..40)) {
            // nondecreasing integer values whose binary expansions stay valid
            let mut value = 0u64;
            let mut stages = vec![BitString::zeros(width)];
            for step in steps {
                let next = (value + step).min((1 << width) - 1);
                let bits = BitString::from_ones(width, (0..width as u64).filter(|&i| next >> (width as u64 - 1 - i) & 1 == 1));
                stages.push(bits.clone());
                if CERealApprox::new(stages.clone()).is_err() {
                    stages.pop();
                } else {
                    value = next;
                }
            }
            let real = CERealApprox::new(stages.clone()).unwrap();
            let b = encode_real(&real);
            for (s, a) in stages.iter().enumerate() {
                prop_assert_eq!(&decode_real(&b, s as u64, width), a);
            }
            for k in 0..width {
                let n = (block_start(k)..block_start(k + 1)).filter(|&p| b.stage_of(p).is_some()).count();
                prop_assert!(n as u64 <= 1 << k);
            }
        }
    }
}
