//! Stage-indexed approximations: c.e. sets, the finite universal schedule and
//! the stagewise upper approximation of `K` it induces.

mod real;
mod scenario;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::bitcore::{BitString, Dyadic, ExtendedLength};
use crate::machines::prefix_free_violation;

pub use real::{decode_real, encode_real, CERealApprox, RealError};
pub use scenario::{gen_scenario, GenParams, Scenario, ScenarioError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApproxError {
    #[error("element {0} is enumerated more than once")]
    DuplicateElement(u64),
    #[error("universal schedule is not prefix-free: {0} is a prefix of {1}")]
    NotPrefixFree(BitString, BitString),
    #[error("universal schedule weight {0} is not below 2^-2")]
    WeightTooLarge(Dyadic),
}

/// A c.e. set given by the stage at which each element is enumerated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CESetApprox {
    stage_of: BTreeMap<u64, u64>,
    by_stage: BTreeMap<u64, Vec<u64>>,
}

impl CESetApprox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_schedule<I>(schedule: I) -> Result<Self, ApproxError>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut set = CESetApprox::new();
        for (element, stage) in schedule {
            set.enumerate(element, stage)?;
        }
        Ok(set)
    }

    pub fn enumerate(&mut self, element: u64, stage: u64) -> Result<(), ApproxError> {
        if self.stage_of.contains_key(&element) {
            return Err(ApproxError::DuplicateElement(element));
        }
        self.stage_of.insert(element, stage);
        let at = self.by_stage.entry(stage).or_default();
        at.push(element);
        at.sort_unstable();
        Ok(())
    }

    pub fn contains(&self, element: u64, stage: u64) -> bool {
        self.stage_of.get(&element).is_some_and(|&t| t <= stage)
    }

    pub fn stage_of(&self, element: u64) -> Option<u64> {
        self.stage_of.get(&element).copied()
    }

    /// Elements enumerated exactly at `stage`, ascending.
    pub fn enumerated_at(&self, stage: u64) -> &[u64] {
        self.by_stage.get(&stage).map_or(&[], Vec::as_slice)
    }

    /// Elements present at `stage`, ascending.
    pub fn elements_at(&self, stage: u64) -> impl Iterator<Item = u64> + '_ {
        self.stage_of
            .iter()
            .filter(move |(_, &t)| t <= stage)
            .map(|(&e, _)| e)
    }

    /// `(element, stage)` pairs ordered by element.
    pub fn schedule(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.stage_of.iter().map(|(&e, &t)| (e, t))
    }

    pub fn len(&self) -> usize {
        self.stage_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stage_of.is_empty()
    }

    /// First `n` characteristic bits at `stage`.
    pub fn restrict(&self, n: usize, stage: u64) -> BitString {
        let ones = self
            .stage_of
            .range(..n as u64)
            .filter(|(_, &t)| t <= stage)
            .map(|(&e, _)| e);
        BitString::from_ones(n, ones)
    }
}

/// `X↾n` at stage `s`.
pub fn restrict(set: &CESetApprox, n: usize, stage: u64) -> BitString {
    set.restrict(n, stage)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniversalEvent {
    pub stage: u64,
    pub codeword: BitString,
    pub output: BitString,
}

impl UniversalEvent {
    pub fn len(&self) -> u32 {
        self.codeword.len() as u32
    }

    pub fn weight(&self) -> Dyadic {
        Dyadic::pow2_neg(self.len())
    }
}

/// The stand-in universal machine: stage-stamped descriptions with a
/// prefix-free domain of weight below `2^{-2}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UniversalSchedule {
    events: Vec<UniversalEvent>,
}

impl UniversalSchedule {
    /// Validates and orders the events by stage (stable).
    pub fn new(mut events: Vec<UniversalEvent>) -> Result<Self, ApproxError> {
        if let Some((a, b)) = prefix_free_violation(events.iter().map(|e| &e.codeword)) {
            return Err(ApproxError::NotPrefixFree(a, b));
        }
        let w: Dyadic = events.iter().map(UniversalEvent::weight).sum();
        if w >= Dyadic::pow2_neg(2) {
            return Err(ApproxError::WeightTooLarge(w));
        }
        events.sort_by_key(|e| e.stage);
        Ok(UniversalSchedule { events })
    }

    pub fn events(&self) -> &[UniversalEvent] {
        &self.events
    }

    pub fn weight(&self) -> Dyadic {
        self.events.iter().map(UniversalEvent::weight).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// `K(σ)[s]` read off a [`UniversalSchedule`]: the shortest description of σ
/// enumerated by stage `s`. `K(n)` means `K(0^n)`.
#[derive(Debug, Clone)]
pub struct KApprox {
    by_output: HashMap<BitString, Vec<usize>>,
    schedule: UniversalSchedule,
}

impl KApprox {
    pub fn new(schedule: UniversalSchedule) -> Self {
        Self::from_events(schedule.events)
    }

    /// Builds the approximation without checking prefix-freeness or weight.
    pub fn from_events(mut events: Vec<UniversalEvent>) -> Self {
        events.sort_by_key(|e| e.stage);
        let schedule = UniversalSchedule { events };
        let mut by_output: HashMap<BitString, Vec<usize>> = HashMap::new();
        for (i, e) in schedule.events().iter().enumerate() {
            by_output.entry(e.output.clone()).or_default().push(i);
        }
        KApprox {
            by_output,
            schedule,
        }
    }

    pub fn schedule(&self) -> &UniversalSchedule {
        &self.schedule
    }

    /// Index of the least shortest description of `sigma` by `stage`: shortest
    /// codeword first, then the smaller codeword.
    pub fn best_event(&self, sigma: &BitString, stage: u64) -> Option<usize> {
        let events = self.schedule.events();
        self.by_output
            .get(sigma)?
            .iter()
            .copied()
            .filter(|&i| events[i].stage <= stage)
            .min_by(|&a, &b| events[a].codeword.cmp(&events[b].codeword))
    }

    pub fn k_at(&self, sigma: &BitString, stage: u64) -> ExtendedLength {
        self.best_event(sigma, stage)
            .map_or(ExtendedLength::Infinite, |i| {
                ExtendedLength::Finite(self.schedule.events()[i].len())
            })
    }

    pub fn k_of_n(&self, n: usize, stage: u64) -> ExtendedLength {
        self.k_at(&BitString::zeros(n), stage)
    }
}

pub fn k_at(k: &KApprox, sigma: &BitString, stage: u64) -> ExtendedLength {
    k.k_at(sigma, stage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn ev(stage: u64, cw: &str, out: &str) -> UniversalEvent {
        UniversalEvent {
            stage,
            codeword: bs(cw),
            output: bs(out),
        }
    }

    #[test]
    fn restrict_examples() {
        let empty = CESetApprox::new();
        assert_eq!(restrict(&empty, 3, 7), bs("000"));
        let x = CESetApprox::from_schedule([(1, 2)]).unwrap();
        assert_eq!(restrict(&x, 3, 2), bs("010"));
        assert_eq!(restrict(&x, 3, 1), bs("000"));
        assert_eq!(restrict(&x, 0, 5), bs(""));
    }

    #[test]
    fn ce_set_rejects_duplicates() {
        assert_eq!(
            CESetApprox::from_schedule([(4, 1), (4, 9)]),
            Err(ApproxError::DuplicateElement(4))
        );
    }

    #[test]
    fn k_at_examples() {
        let sigma = bs("0110");
        let raw = vec![ev(1, "000", "0110"), ev(5, "01", "0110")];
        let k = KApprox::from_events(raw.clone());
        assert_eq!(k.k_at(&sigma, 3), ExtendedLength::Finite(3));
        assert_eq!(k.k_at(&sigma, 6), ExtendedLength::Finite(2));
        // "01" alone weighs 1/4, which is not below 2^-2
        assert!(matches!(
            UniversalSchedule::new(raw),
            Err(ApproxError::WeightTooLarge(_))
        ));

        let u =
            UniversalSchedule::new(vec![ev(1, "00000", "0110"), ev(5, "0001", "0110")]).unwrap();
        let k = KApprox::new(u);
        assert_eq!(k.k_at(&sigma, 0), ExtendedLength::Infinite);
        assert_eq!(k.k_at(&sigma, 3), ExtendedLength::Finite(5));
        assert_eq!(k.k_at(&sigma, 6), ExtendedLength::Finite(4));
        assert_eq!(k.k_at(&bs("1"), 6), ExtendedLength::Infinite);
    }

    #[test]
    fn best_event_breaks_ties_by_codeword() {
        let u = UniversalSchedule::new(vec![ev(2, "00011", "1"), ev(1, "00010", "1")]).unwrap();
        let k = KApprox::new(u);
        let i = k.best_event(&bs("1"), 5).unwrap();
        assert_eq!(k.schedule().events()[i].codeword, bs("00010"));
    }

    #[test]
    fn schedule_rejects_prefix_collisions() {
        let u = UniversalSchedule::new(vec![ev(1, "0001", "1"), ev(2, "00010", "0")]);
        assert!(matches!(u, Err(ApproxError::NotPrefixFree(_, _))));
    }

    proptest! {
        #[test]
        fn k_at_nonincreasing(
            lens in prop::collection::vec((0u64..30, 3u32..12, 0usize..4), 0..40)
        ) {
            let mut space = crate::machines::FreeBlockSet::new();
            let mut events = Vec::new();
            let mut total = Dyadic::zero();
            for &(stage, len, out) in &lens {
                let w = &total + &Dyadic::pow2_neg(len - 2);
                if w >= Dyadic::one() { continue; }
                total = w;
                let cw = bs("00").concat(&space.allocate(len - 2).unwrap());
                events.push(UniversalEvent { stage, codeword: cw, output: BitString::zeros(out) });
            }
            let k = KApprox::new(UniversalSchedule::new(events.clone()).unwrap());
            for out in 0..4 {
                let sigma = BitString::zeros(out);
                let mut prev = ExtendedLength::Infinite;
                for s in 0..32 {
                    // brute-force scan of the enumerated events
                    let brute = events.iter()
                        .filter(|e| e.stage <= s && e.output == sigma)
                        .map(|e| ExtendedLength::Finite(e.codeword.len() as u32))
                        .min().unwrap_or(ExtendedLength::Infinite);
                    let got = k.k_at(&sigma, s);
                    prop_assert_eq!(got, brute);
                    prop_assert!(got <= prev);
                    prev = got;
                }
            }
        }
    }
}
