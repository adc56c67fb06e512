//! Scenario files and the seeded scenario generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ApproxError, CESetApprox, UniversalEvent, UniversalSchedule};
use crate::bitcore::{BitString, Dyadic};
use crate::machines::FreeBlockSet;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {source}")]
    Invalid {
        field: &'static str,
        source: ApproxError,
    },
}

/// Everything an engine run reads: the universal schedule, the given sets and
/// the halting set approximation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub stages: u64,
    pub universal: UniversalSchedule,
    pub set_a: CESetApprox,
    pub set_d: CESetApprox,
    pub halting: CESetApprox,
}

#[derive(Serialize, Deserialize)]
struct RawScenario {
    stages: u64,
    universal_events: Vec<(u64, BitString, BitString)>,
    #[serde(default)]
    set_a: Vec<(u64, u64)>,
    #[serde(default)]
    set_d: Vec<(u64, u64)>,
    #[serde(default)]
    halting: Vec<(u64, u64)>,
}

fn set_field(field: &'static str, pairs: Vec<(u64, u64)>) -> Result<CESetApprox, ScenarioError> {
    CESetApprox::from_schedule(pairs).map_err(|source| ScenarioError::Invalid { field, source })
}

impl Scenario {
    pub fn empty(stages: u64) -> Self {
        Scenario {
            stages,
            universal: UniversalSchedule::default(),
            set_a: CESetApprox::new(),
            set_d: CESetApprox::new(),
            halting: CESetApprox::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(text)?;
        let events = raw
            .universal_events
            .into_iter()
            .map(|(stage, codeword, output)| UniversalEvent {
                stage,
                codeword,
                output,
            })
            .collect();
        let universal =
            UniversalSchedule::new(events).map_err(|source| ScenarioError::Invalid {
                field: "universal_events",
                source,
            })?;
        Ok(Scenario {
            stages: raw.stages,
            universal,
            set_a: set_field("set_a", raw.set_a)?,
            set_d: set_field("set_d", raw.set_d)?,
            halting: set_field("halting", raw.halting)?,
        })
    }

    /// One array element per line, keys in a fixed order.
    pub fn to_json(&self) -> String {
        fn list<T: Serialize>(out: &mut String, key: &str, items: Vec<T>, last: bool) {
            out.push_str(&format!("  \"{key}\": ["));
            for (i, item) in items.iter().enumerate() {
                out.push_str(if i == 0 { "\n    " } else { ",\n    " });
                out.push_str(&serde_json::to_string(item).expect("plain data"));
            }
            if !items.is_empty() {
                out.push_str("\n  ");
            }
            out.push(']');
            out.push_str(if last { "\n" } else { ",\n" });
        }
        let mut out = format!("{{\n  \"stages\": {},\n", self.stages);
        let events = self
            .universal
            .events()
            .iter()
            .map(|e| (e.stage, e.codeword.to_string(), e.output.to_string()))
            .collect();
        list(&mut out, "universal_events", events, false);
        list(&mut out, "set_a", self.set_a.schedule().collect(), false);
        list(&mut out, "set_d", self.set_d.schedule().collect(), false);
        list(&mut out, "halting", self.halting.schedule().collect(), true);
        out.push_str("}\n");
        out
    }
}

/// Knobs for [`gen_scenario`]. Event stages fall in `[1, active_fraction·stages]`
/// so that long runs end with a quiet tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub stages: u64,
    /// `0^n` is described at stage `n` for every `n <= zero_max`.
    pub zero_max: u64,
    /// Chance that a `0^n` description is later undercut by a shorter one.
    pub zero_drop_rate: f64,
    /// Elements of A and of D, drawn below `set_range`.
    pub a_elements: usize,
    pub d_elements: usize,
    pub set_range: u64,
    /// Halting-set elements, drawn below `halting_range`.
    pub halting_elements: usize,
    pub halting_range: u64,
    /// Random initial-segment descriptions per side, of length at most `max_len`.
    pub segment_events: usize,
    pub max_len: u64,
    /// Prefixes up to this length are described up front and again after every
    /// change below it.
    pub frontier: u64,
    /// Fraction of the `2^{-2}` budget reserved for the `0^n` descriptions.
    pub zero_share: f64,
    pub active_fraction: f64,
}

impl GenParams {
    /// A scenario with no events at all.
    pub fn empty(stages: u64) -> Self {
        GenParams {
            stages,
            zero_max: 0,
            zero_drop_rate: 0.0,
            a_elements: 0,
            d_elements: 0,
            set_range: 0,
            halting_elements: 0,
            halting_range: 0,
            segment_events: 0,
            max_len: 0,
            frontier: 0,
            zero_share: 0.5,
            active_fraction: 0.7,
        }
    }

    /// Defaults scaled to the run length.
    pub fn for_stages(stages: u64) -> Self {
        let active = ((stages as f64) * 0.7) as u64;
        GenParams {
            stages,
            zero_max: active.min(4096),
            zero_drop_rate: 0.05,
            a_elements: 40,
            d_elements: 40,
            set_range: (stages / 8).clamp(4, 1024),
            halting_elements: 10,
            halting_range: 20,
            segment_events: 400,
            max_len: (stages / 4).clamp(4, 2048),
            frontier: 32,
            zero_share: 0.5,
            active_fraction: 0.7,
        }
    }
}

fn bit_len(x: u64) -> u32 {
    64 - x.leading_zeros()
}

/// Codeword lengths are picked per event; events that would overrun their share
/// of the budget are dropped.
struct Budget {
    space: FreeBlockSet,
    zero_cap: Dyadic,
    zero_used: Dyadic,
    seg_cap: Dyadic,
    seg_used: Dyadic,
    events: Vec<UniversalEvent>,
}

impl Budget {
    fn new(zero_share: f64) -> Self {
        let share = (zero_share.clamp(0.0, 1.0) * 65536.0) as u64;
        let zero_cap = Dyadic::from_parts(share, 18);
        let seg_cap = Dyadic::pow2_neg(2).saturating_sub(&zero_cap);
        Budget {
            space: FreeBlockSet::new(),
            zero_cap,
            zero_used: Dyadic::zero(),
            seg_cap,
            seg_used: Dyadic::zero(),
            events: Vec::new(),
        }
    }

    fn push(&mut self, zero: bool, stage: u64, len: u32, output: BitString) {
        let len = len.max(3);
        let w = Dyadic::pow2_neg(len);
        let (used, cap) = if zero {
            (&mut self.zero_used, &self.zero_cap)
        } else {
            (&mut self.seg_used, &self.seg_cap)
        };
        let next = &*used + &w;
        if next >= *cap {
            return;
        }
        *used = next;
        // both shares sum below 2^-2, so the subtree under "00" never fills
        let tail = self
            .space
            .allocate(len - 2)
            .expect("budget keeps subtree below 1");
        let codeword = "00".parse::<BitString>().expect("literal").concat(&tail);
        self.events.push(UniversalEvent {
            stage,
            codeword,
            output,
        });
    }
}

fn random_set(rng: &mut ChaCha8Rng, count: usize, range: u64, last: u64) -> CESetApprox {
    let mut set = CESetApprox::new();
    if range == 0 || last == 0 {
        return set;
    }
    for _ in 0..count {
        let e = rng.gen_range(0..range);
        let s = rng.gen_range(1..=last);
        // repeated draws of the same element are skipped
        let _ = set.enumerate(e, s);
    }
    set
}

/// Seeded pseudo-random scenario. The universal schedule is built inside the
/// subtree of codewords starting with `00`, so its weight stays below `2^{-2}`.
pub fn gen_scenario(seed: u64, params: &GenParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = ((params.stages as f64) * params.active_fraction) as u64;
    let last = last.min(params.stages);

    let set_a = random_set(&mut rng, params.a_elements, params.set_range, last);
    let set_d = random_set(&mut rng, params.d_elements, params.set_range, last);
    let halting = random_set(
        &mut rng,
        params.halting_elements,
        params.halting_range,
        last,
    );

    let mut budget = Budget::new(params.zero_share);
    if params.zero_max > 0 || params.zero_drop_rate > 0.0 {
        for n in 0..=params.zero_max.min(last) {
            let len = 2 * bit_len(n + 1) + 5 + rng.gen_range(0..3);
            budget.push(true, n, len, BitString::zeros(n as usize));
            if rng.gen_bool(params.zero_drop_rate.clamp(0.0, 1.0)) && n < last {
                let s = rng.gen_range(n + 1..=last);
                let shorter = len.saturating_sub(rng.gen_range(1..=2));
                budget.push(true, s, shorter, BitString::zeros(n as usize));
            }
        }
    }

    for set in [&set_a, &set_d] {
        // the frontier at stage 0 and after each change below it
        let mut redo: Vec<(u64, u64)> = Vec::new();
        if params.frontier > 0 {
            redo.push((0, 0));
            redo.extend(
                set.schedule()
                    .filter(|&(e, _)| e < params.frontier)
                    .map(|(e, s)| (s, e + 1)),
            );
            redo.sort_unstable();
        }
        for (stage, from) in redo {
            for x in from..=params.frontier {
                let len = 2 * bit_len(x + 1) + 8 + rng.gen_range(0..2);
                budget.push(false, stage, len, set.restrict(x as usize, stage));
            }
        }
        if last > 0 {
            for _ in 0..params.segment_events {
                let s = rng.gen_range(1..=last);
                let x = rng.gen_range(0..=s.min(params.max_len));
                let len = 2 * bit_len(x + 1) + 6 + rng.gen_range(0..4);
                budget.push(false, s, len, set.restrict(x as usize, s));
            }
        }
    }

    let universal =
        UniversalSchedule::new(budget.events).expect("generator keeps the schedule valid");
    Scenario {
        stages: params.stages,
        universal,
        set_a,
        set_d,
        halting,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_params_give_empty_scenario() {
        let s = gen_scenario(0, &GenParams::empty(10));
        assert!(s.universal.is_empty());
        assert!(s.set_a.is_empty() && s.set_d.is_empty() && s.halting.is_empty());
        assert_eq!(s.stages, 10);
    }

    #[test]
    fn generated_schedules_validate() {
        for seed in 0..20 {
            let s = gen_scenario(seed, &GenParams::for_stages(2000));
            assert!(s.universal.weight() < Dyadic::pow2_neg(2));
            let back = Scenario::from_json(&s.to_json()).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn same_seed_same_scenario() {
        let p = GenParams::for_stages(1000);
        assert_eq!(gen_scenario(7, &p).to_json(), gen_scenario(7, &p).to_json());
        assert_ne!(gen_scenario(7, &p).to_json(), gen_scenario(8, &p).to_json());
    }

    #[test]
    fn heavy_schedule_names_the_invariant() {
        let text = r#"{"stages": 3, "universal_events": [[0, "0", ""], [1, "10", "1"]]}"#;
        let err = Scenario::from_json(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("universal_events:"), "{msg}");
        assert!(msg.contains("2^-2"), "{msg}");
    }

    #[test]
    fn malformed_json_is_reported() {
        assert!(matches!(
            Scenario::from_json("{ not json"),
            Err(ScenarioError::Json(_))
        ));
    }
}
