//! Replays a trace against its scenario and checks the construction's
//! invariants with exact arithmetic. Nothing here reads engine state: marker
//! positions, counters, machines and the description ledger are rebuilt from
//! the trace records, and complexities are recomputed from the universal
//! schedule.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{CESetApprox, KApprox, Scenario, UniversalEvent};
use crate::bitcore::{BitString, Dyadic, ExtendedLength};
use crate::trace::{Action, EngineKind, NKind, SideTag, StageRecord, Trace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("entry of length {entry} charged to a description of length {event}")]
    LengthMismatch { entry: u32, event: u32 },
}

/// One use of a universal description by an output-machine entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Use {
    pub stage: u64,
    /// Marker whose B-enumeration forced this re-description.
    pub cause: Option<usize>,
}

#[derive(Debug, Clone)]
struct Usage {
    length: u32,
    uses: Vec<Use>,
}

/// How often each universal description has been used. `S_k` holds the
/// descriptions used at least `k+1` times.
#[derive(Debug, Clone, Default)]
pub struct UsageLedger {
    by_codeword: BTreeMap<BitString, Usage>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the new use count.
    pub fn record_use(
        &mut self,
        event: &UniversalEvent,
        entry_length: u32,
        stage: u64,
        cause: Option<usize>,
    ) -> Result<usize, AuditError> {
        if entry_length != event.len() {
            return Err(AuditError::LengthMismatch {
                entry: entry_length,
                event: event.len(),
            });
        }
        let usage = self
            .by_codeword
            .entry(event.codeword.clone())
            .or_insert_with(|| Usage {
                length: event.len(),
                uses: Vec::new(),
            });
        usage.uses.push(Use { stage, cause });
        Ok(usage.uses.len())
    }

    pub fn count(&self, codeword: &BitString) -> usize {
        self.by_codeword.get(codeword).map_or(0, |u| u.uses.len())
    }

    pub fn uses(&self, codeword: &BitString) -> &[Use] {
        self.by_codeword.get(codeword).map_or(&[], |u| &u.uses)
    }

    /// Members of `S_k`.
    pub fn container(&self, k: usize) -> impl Iterator<Item = &BitString> {
        self.by_codeword
            .iter()
            .filter(move |(_, u)| u.uses.len() > k)
            .map(|(cw, _)| cw)
    }

    /// `wgt(S_k)` for `k = 0, 1, ...` up to the last nonempty container.
    pub fn container_weights(&self) -> Vec<Dyadic> {
        let depth = self
            .by_codeword
            .values()
            .map(|u| u.uses.len())
            .max()
            .unwrap_or(0);
        let mut out = vec![Dyadic::zero(); depth];
        for u in self.by_codeword.values() {
            let w = Dyadic::pow2_neg(u.length);
            for slot in &mut out[..u.uses.len()] {
                *slot += &w;
            }
        }
        out
    }

    /// Sum over entries of their weight; equals `Σ_k wgt(S_k)`.
    pub fn total_use_weight(&self) -> Dyadic {
        self.by_codeword
            .values()
            .map(|u| Dyadic::pow2_neg(u.length).mul_nat(u.uses.len() as u64))
            .sum()
    }
}

/// A description is active at `s` when its output is an initial segment of
/// the set's characteristic string at `s`.
pub fn is_active(event: &UniversalEvent, set: &CESetApprox, stage: u64) -> bool {
    set.restrict(event.output.len(), stage) == event.output
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub evaluated: u64,
    pub failures: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<Dyadic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<Dyadic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerRow {
    pub side: SideTag,
    pub k: usize,
    pub members: usize,
    pub weight: Dyadic,
    pub bound: Dyadic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Yes,
    No,
    Inconclusive,
}

/// Decoding of the halting set from B at the final stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaltingRow {
    pub index: usize,
    pub position: Option<u64>,
    /// Last stage at which the marker was placed, moved or injured.
    pub last_change: u64,
    pub stable: bool,
    pub decision: Decision,
    pub halting: bool,
    pub agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub engine: EngineKind,
    pub stages: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub containers: Vec<ContainerRow>,
    pub markers: Vec<HaltingRow>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data");
        s.push('\n');
        s
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Accumulates evaluations per named check.
#[derive(Default)]
struct CheckLog {
    checks: BTreeMap<&'static str, Check>,
    order: Vec<&'static str>,
}

impl CheckLog {
    fn slot(&mut self, name: &'static str) -> &mut Check {
        if !self.checks.contains_key(name) {
            self.order.push(name);
        }
        self.checks.entry(name).or_insert_with(|| Check {
            name: name.to_string(),
            pass: true,
            evaluated: 0,
            failures: 0,
            value: None,
            bound: None,
            witness: None,
        })
    }

    fn declare(&mut self, name: &'static str) {
        self.slot(name);
    }

    fn ok(&mut self, name: &'static str, holds: bool, witness: impl FnOnce() -> String) {
        let c = self.slot(name);
        c.evaluated += 1;
        if !holds {
            c.failures += 1;
            c.pass = false;
            if c.witness.is_none() {
                c.witness = Some(witness());
            }
        }
    }

    /// Records `value <= bound` (or `<` when `strict`), keeping the value with
    /// the least slack.
    fn weight(
        &mut self,
        name: &'static str,
        value: &Dyadic,
        bound: &Dyadic,
        strict: bool,
        witness: impl FnOnce() -> String,
    ) {
        let holds = if strict {
            value < bound
        } else {
            value <= bound
        };
        let c = self.slot(name);
        let worse = match (&c.value, &c.bound) {
            (Some(v), Some(b)) => value.clone() + b.clone() > v.clone() + bound.clone(),
            _ => true,
        };
        if worse && c.pass == holds || !holds && c.pass {
            c.value = Some(value.clone());
            c.bound = Some(bound.clone());
        }
        self.ok(name, holds, witness);
    }

    fn finish(self) -> Vec<Check> {
        let mut checks = self.checks;
        self.order
            .into_iter()
            .map(|n| checks.remove(n).expect("declared"))
            .collect()
    }
}

struct MarkerView {
    pos: Option<u64>,
    version: u32,
    last_change: u64,
    incarnation: u64,
    reused: Vec<BTreeMap<BitString, (u32, BitString)>>,
    deficit: Vec<Dyadic>,
}

struct SideView<'a> {
    tag: SideTag,
    set: &'a CESetApprox,
    ledger: UsageLedger,
    m_weight: Dyadic,
    /// Shortest M-description per target.
    m_best: HashMap<BitString, u32>,
}

struct NVersion {
    total: Dyadic,
    refresh: Dyadic,
    c: u32,
}

/// Replays `trace` against `scenario`.
pub fn audit(scenario: &Scenario, trace: &Trace) -> AuditReport {
    Replay::new(scenario, trace).run()
}

struct Replay<'a> {
    scenario: &'a Scenario,
    trace: &'a Trace,
    kind: EngineKind,
    k: KApprox,
    lengths: BTreeSet<usize>,
    log: CheckLog,
    markers: Vec<MarkerView>,
    /// Attends so far by marker index, for `c_j = j + base + #{attends by n < j}`.
    attends_by: Vec<u64>,
    b: CESetApprox,
    /// `(stage, position, marker)` of every B-enumeration.
    b_changes: Vec<(u64, u64, usize)>,
    sides: Vec<SideView<'a>>,
    n_versions: BTreeMap<(usize, usize, u32), NVersion>,
    max_seen: u64,
    prev_t: Vec<BTreeMap<usize, (Option<u64>, u32, u32)>>,
}

impl<'a> Replay<'a> {
    fn new(scenario: &'a Scenario, trace: &'a Trace) -> Self {
        let kind = trace.header.engine;
        let sets: Vec<&CESetApprox> = match kind {
            EngineKind::Single => vec![&scenario.set_a],
            EngineKind::Dual => vec![&scenario.set_a, &scenario.set_d],
        };
        let sides = kind
            .sides()
            .iter()
            .zip(sets)
            .map(|(&tag, set)| SideView {
                tag,
                set,
                ledger: UsageLedger::new(),
                m_weight: Dyadic::zero(),
                m_best: HashMap::new(),
            })
            .collect();
        Replay {
            scenario,
            trace,
            kind,
            k: KApprox::new(scenario.universal.clone()),
            lengths: scenario
                .universal
                .events()
                .iter()
                .map(|e| e.output.len())
                .collect(),
            log: CheckLog::default(),
            markers: Vec::new(),
            attends_by: Vec::new(),
            b: CESetApprox::new(),
            b_changes: Vec::new(),
            sides,
            n_versions: BTreeMap::new(),
            max_seen: 0,
            prev_t: vec![BTreeMap::new(); kind.sides().len()],
        }
    }

    fn c_of(&self, j: usize) -> u32 {
        let injuries: u64 = self.attends_by.iter().take(j).sum();
        j as u32 + self.kind.c_base() + injuries as u32
    }

    fn marker(&mut self, i: usize) -> &mut MarkerView {
        let nsides = self.sides.len();
        while self.markers.len() <= i {
            self.markers.push(MarkerView {
                pos: None,
                version: 0,
                last_change: 0,
                incarnation: 0,
                reused: vec![BTreeMap::new(); nsides],
                deficit: vec![Dyadic::zero(); nsides],
            });
        }
        &mut self.markers[i]
    }

    fn pos(&self, i: usize) -> Option<u64> {
        self.markers.get(i).and_then(|m| m.pos)
    }

    fn defined(&self) -> Vec<usize> {
        (0..self.markers.len())
            .filter(|&i| self.pos(i).is_some())
            .collect()
    }

    fn k_zero(&self, n: usize, stage: u64) -> ExtendedLength {
        self.k.k_of_n(n, stage)
    }

    /// `Σ_{lo < j <= hi} 2^{-K(X_s↾j)[s]}`.
    fn clause_sum(&self, set: &CESetApprox, lo: u64, hi: u64, stage: u64) -> Dyadic {
        let mut acc = Dyadic::zero();
        let from = lo.saturating_add(1);
        if from > hi {
            return acc;
        }
        for &j in self.lengths.range(from as usize..=hi as usize) {
            acc += &self.k.k_at(&set.restrict(j, stage), stage).weight();
        }
        acc
    }

    fn run(mut self) -> AuditReport {
        for name in [
            "trace_header",
            "stage_sequence",
            "marker_monotonicity",
            "marker_order",
            "abandoned_in_b",
            "attention_gate",
            "clause_justified",
            "injury_set",
            "place_fresh",
            "t_below_marker",
            "t_monotone",
            "n_requests_justified",
            "n_versions_consistent",
            "n_machine_bound",
            "n_refresh_bound",
            "n_weights_match",
            "m_entries_justified",
            "m_weight_match",
            "reuse_has_cause",
            "reuse_bound",
            "decanter_s0",
            "decanter_sk",
            "m_weight_vs_containers",
            "containers_nested",
            "coding",
            "description_coverage",
        ] {
            self.log.declare(name);
        }
        if self.kind == EngineKind::Dual {
            self.log.declare("deficits_match");
            self.log.declare("deficit_bound");
            self.log.declare("deficit_cap");
        }

        let header = &self.trace.header;
        let expected_sides: Vec<SideTag> = self.kind.sides().to_vec();
        self.log.ok(
            "trace_header",
            header.c_base == self.kind.c_base()
                && self.trace.records.len() as u64 == header.stages + 1
                && self
                    .trace
                    .records
                    .iter()
                    .all(|r| r.sides.iter().map(|s| s.side).collect::<Vec<_>>() == expected_sides),
            || "header and records disagree".into(),
        );

        let records = self.trace.records.clone();
        for (idx, rec) in records.iter().enumerate() {
            self.log.ok("stage_sequence", rec.stage == idx as u64, || {
                format!("record {idx} is numbered {}", rec.stage)
            });
            if idx == 0 {
                self.stage_zero(rec);
            } else {
                self.stage(rec);
            }
        }
        self.finish()
    }

    fn stage_zero(&mut self, rec: &StageRecord) {
        let ok = rec.action == Action::Place && rec.marker == Some(0) && rec.to == Some(1);
        self.log
            .ok("place_fresh", ok, || "stage 0 must place m_0 on 1".into());
        self.marker(0).pos = Some(1);
        self.max_seen = 1;
    }

    fn stage(&mut self, rec: &StageRecord) {
        let s1 = rec.stage;
        let s = s1 - 1;
        self.max_seen = self.max_seen.max(s1);

        self.check_t_lists(rec, s1);

        // deficits at the start of the stage against q_i[s]
        if self.kind == EngineKind::Dual {
            for (x, sr) in rec.sides.iter().enumerate() {
                for &(i, t) in &sr.t {
                    let c = self.c_of(i);
                    let cap = Dyadic::pow2_neg(c);
                    let p = self
                        .markers
                        .get(i)
                        .map_or(Dyadic::zero(), |m| m.deficit[x].clone());
                    self.log.ok("deficit_cap", p <= cap, || {
                        format!("stage {s1}: marker {i} side {x}: p = {p} exceeds 2^-c = {cap}")
                    });
                    if let Some(t) = t {
                        if let Some(kt) = self.k_zero(t as usize, s1).finite() {
                            let q = Dyadic::pow2_neg(kt + c);
                            let holds = p <= q && q <= cap;
                            self.log.ok("deficit_bound", holds, || {
                                format!("stage {s1}: marker {i} side {x}: p = {p}, q = {q}, 2^-c = {cap}")
                            });
                        }
                    }
                }
            }
        }

        // refresh enumerations happen before any action
        for x in 0..rec.sides.len() {
            let t_of: BTreeMap<usize, Option<u64>> = rec.sides[x].t.iter().copied().collect();
            for e in rec.sides[x]
                .n_enum
                .iter()
                .filter(|e| e.kind == NKind::Refresh)
            {
                let k = e.target.len();
                let c = self.c_of(e.marker);
                let dropped = self.k_zero(k, s1) < self.k_zero(k, s);
                let in_range = match t_of.get(&e.marker) {
                    Some(Some(t)) => (k as u64) < *t,
                    Some(None) => true,
                    None => false,
                };
                let want_len = self.k_zero(k, s1).plus(c);
                let ok = dropped
                    && in_range
                    && ExtendedLength::Finite(e.length) == want_len
                    && e.target == self.sides[x].set.restrict(k, s1);
                self.log.ok("n_requests_justified", ok, || {
                    format!(
                        "stage {s1}: refresh of marker {} at length {k} is not justified",
                        e.marker
                    )
                });
                self.add_n(x, e.marker, e.version, e.length, true, c, s1);
            }
        }

        match rec.action {
            Action::Noop => {
                let ok = rec.sides.iter().all(|sr| sr.m_enum.is_empty()) && rec.marker.is_none();
                self.log.ok("clause_justified", ok, || {
                    format!("stage {s1}: no-op record carries changes")
                });
            }
            Action::Place => self.place(rec, s1),
            Action::Describe => {
                for x in 0..rec.sides.len() {
                    let sr = &rec.sides[x];
                    let ok = match sr.z {
                        Some(z) => sr.m_enum.len() == 1 && sr.m_enum[0].target.len() as u64 == z,
                        None => sr.m_enum.is_empty(),
                    };
                    self.log.ok("m_entries_justified", ok, || {
                        format!("stage {s1}: describe record does not match z")
                    });
                }
            }
            Action::Attend => self.attend(rec, s, s1),
        }

        // output machine entries
        for x in 0..rec.sides.len() {
            let entries = rec.sides[x].m_enum.clone();
            for e in &entries {
                self.m_entry(x, e, rec, s1);
            }
        }

        // move enumerations
        for x in 0..rec.sides.len() {
            for e in rec.sides[x].n_enum.iter().filter(|e| e.kind == NKind::Move) {
                let c = self.c_of(e.marker);
                self.add_n(x, e.marker, e.version, e.length, false, c, s1);
            }
        }

        self.check_weights_match(rec, s1);

        if self.kind == EngineKind::Dual {
            for (x, sr) in rec.sides.iter().enumerate() {
                let mine: Vec<(usize, Dyadic)> = self
                    .markers
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| !m.deficit[x].is_zero())
                    .map(|(i, m)| (i, m.deficit[x].clone()))
                    .collect();
                self.log.ok("deficits_match", mine == sr.deficits, || {
                    format!(
                        "stage {s1} side {x}: replayed {mine:?}, trace {:?}",
                        sr.deficits
                    )
                });
            }
        }

        let positions: Vec<u64> = self.markers.iter().filter_map(|m| m.pos).collect();
        let defined_prefix = self
            .markers
            .iter()
            .skip_while(|m| m.pos.is_some())
            .all(|m| m.pos.is_none());
        let ok = defined_prefix && positions.windows(2).all(|w| w[0] < w[1]);
        self.log.ok("marker_order", ok, || {
            format!("stage {s1}: positions {positions:?}")
        });
        if let Some(&top) = positions.iter().max() {
            self.max_seen = self.max_seen.max(top);
        }
    }

    fn check_t_lists(&mut self, rec: &StageRecord, s1: u64) {
        let s = s1 - 1;
        let defined = self.defined();
        for x in 0..rec.sides.len() {
            let sr = &rec.sides[x];
            let listed: Vec<usize> = sr.t.iter().map(|&(i, _)| i).collect();
            self.log.ok("t_below_marker", listed == defined, || {
                format!("stage {s1}: t listed for {listed:?}, defined {defined:?}")
            });
            let mut next = BTreeMap::new();
            for &(i, t) in &sr.t {
                let m = self.pos(i).unwrap_or(0);
                self.log.ok("t_below_marker", t.is_none_or(|t| t < m), || {
                    format!("stage {s1}: t_{i} = {t:?} is not below m_{i} = {m}")
                });
                let c = self.c_of(i);
                let version = self.markers[i].version;
                if let Some(&(prev, pc, pv)) = self.prev_t[x].get(&i) {
                    if pc == c && pv == version {
                        let left = prev.unwrap_or(s);
                        let unchanged = self.sides[x]
                            .set
                            .enumerated_at(s1)
                            .iter()
                            .all(|&e| e >= left);
                        if unchanged {
                            self.log.ok("t_monotone", t.is_none_or(|t| t >= left), || {
                                format!("stage {s1}: t_{i} fell from {prev:?} to {t:?} with X unchanged below it")
                            });
                        }
                    }
                }
                if let Some(t) = t {
                    self.max_seen = self.max_seen.max(t);
                }
                next.insert(i, (t, c, version));
            }
            self.prev_t[x] = next;
        }
    }

    fn place(&mut self, rec: &StageRecord, s1: u64) {
        let least_undefined = (0..).find(|&j| self.pos(j).is_none()).expect("finite");
        let (Some(n), Some(to)) = (rec.marker, rec.to) else {
            self.log.ok("place_fresh", false, || {
                format!("stage {s1}: place record without marker")
            });
            return;
        };
        let ok = n == least_undefined && to > self.max_seen && rec.b_enum.is_none();
        let seen = self.max_seen;
        self.log.ok("place_fresh", ok, || {
            format!("stage {s1}: m_{n} placed on {to}; least undefined {least_undefined}, largest number seen {seen}")
        });
        let m = self.marker(n);
        m.pos = Some(to);
        m.last_change = s1;
        m.incarnation = s1;
        for r in &mut m.reused {
            r.clear();
        }
        self.max_seen = self.max_seen.max(to);
    }

    fn attend(&mut self, rec: &StageRecord, s: u64, s1: u64) {
        let (Some(n), Some(from), Some(to)) = (rec.marker, rec.from, rec.to) else {
            self.log.ok("attention_gate", false, || {
                format!("stage {s1}: attend record incomplete")
            });
            return;
        };
        let current = self.pos(n);
        let gate = current == Some(from) && !self.b.contains(from, s);
        self.log.ok("attention_gate", gate, || {
            format!(
                "stage {s1}: m_{n} acts from {from} but sits at {current:?} (in B: {})",
                self.b.contains(from, s)
            )
        });
        self.log.ok("marker_monotonicity", to >= from, || {
            format!("stage {s1}: m_{n} moved down from {from} to {to}")
        });
        self.log.ok("abandoned_in_b", rec.b_enum == Some(from), || {
            format!(
                "stage {s1}: m_{n} left {from} but B gained {:?}",
                rec.b_enum
            )
        });

        // clauses, recomputed
        let label = rec.clause.clone().unwrap_or_default();
        let halting = self.scenario.halting.contains(n as u64, s1);
        let c = self.c_of(n);
        let mut holds = Vec::new();
        let mut sums = Vec::new();
        for (x, sr) in rec.sides.iter().enumerate() {
            let sum = self.clause_sum(self.sides[x].set, from, s, s1);
            let t = sr.t.iter().find(|&&(i, _)| i == n).and_then(|&(_, t)| t);
            let q = t
                .and_then(|t| self.k_zero(t as usize, s1).finite())
                .map(|k| Dyadic::pow2_neg(k + c));
            let p = self.markers[n].deficit[x].clone();
            let h = q.as_ref().is_some_and(|q| sum >= q.saturating_sub(&p));
            holds.push((h, t, q));
            sums.push(sum);
        }
        let expected: String = match self.kind {
            EngineKind::Single if halting => "a".into(),
            EngineKind::Single if holds[0].0 => "b".into(),
            EngineKind::Single => String::new(),
            EngineKind::Dual => {
                let mut l = String::new();
                if halting {
                    l.push('a');
                }
                if holds[0].0 {
                    l.push('b');
                }
                if holds[1].0 {
                    l.push('c');
                }
                l
            }
        };
        self.log.ok(
            "clause_justified",
            !expected.is_empty() && expected == label,
            || format!("stage {s1}: m_{n} acted with clause {label:?}, replay gives {expected:?}"),
        );
        let coded = halting;
        self.log
            .ok("marker_monotonicity", coded == (to == from), || {
                format!("stage {s1}: m_{n} coded = {coded} but moved {from} -> {to}")
            });
        if !coded {
            let seen = self.max_seen;
            self.log.ok("place_fresh", to > seen, || {
                format!("stage {s1}: m_{n} moved to {to}, not above {seen}")
            });
        }

        // move enumerations must match the holding sides
        for (x, sr) in rec.sides.iter().enumerate() {
            let moves: Vec<_> = sr.n_enum.iter().filter(|e| e.kind == NKind::Move).collect();
            let ok = match (coded, &holds[x]) {
                (false, &(true, Some(t), Some(_))) => {
                    let want = self.k_zero(t as usize, s1).plus(c);
                    moves.len() == 1
                        && moves[0].marker == n
                        && moves[0].version == self.markers[n].version
                        && moves[0].target == self.sides[x].set.restrict(t as usize, s1)
                        && ExtendedLength::Finite(moves[0].length) == want
                }
                _ => moves.is_empty(),
            };
            self.log.ok("n_requests_justified", ok, || {
                format!(
                    "stage {s1}: move enumerations of m_{n} on side {x} do not match the clauses"
                )
            });
        }

        // deficits
        if self.kind == EngineKind::Dual {
            for x in 0..rec.sides.len() {
                let h = holds[x].0;
                let d = &mut self.markers[n].deficit[x];
                if coded {
                    if !h {
                        *d = &*d + &sums[x];
                    }
                } else if h {
                    *d = Dyadic::zero();
                } else {
                    *d = &*d + &sums[x];
                }
            }
        }

        // B and the acting marker
        let _ = self.b.enumerate(from, s1);
        self.b_changes.push((s1, from, n));
        {
            let m = self.marker(n);
            m.pos = Some(to);
            m.last_change = s1;
        }
        self.max_seen = self.max_seen.max(to);

        // injuries
        let expected_injured: Vec<usize> = self.defined().into_iter().filter(|&j| j > n).collect();
        self.log
            .ok("injury_set", rec.injured == expected_injured, || {
                format!(
                    "stage {s1}: injured {:?}, expected {expected_injured:?}",
                    rec.injured
                )
            });
        for &j in &expected_injured {
            let m = self.marker(j);
            m.pos = None;
            m.version += 1;
            m.last_change = s1;
            for d in &mut m.deficit {
                *d = Dyadic::zero();
            }
            for r in &mut m.reused {
                r.clear();
            }
        }
        if self.attends_by.len() <= n {
            self.attends_by.resize(n + 1, 0);
        }
        self.attends_by[n] += 1;
    }

    fn add_n(
        &mut self,
        x: usize,
        i: usize,
        version: u32,
        length: u32,
        refresh: bool,
        c: u32,
        s1: u64,
    ) {
        let known = self.markers.get(i).map(|m| m.version);
        self.log
            .ok("n_versions_consistent", known == Some(version), || {
                format!("stage {s1}: N_{i} version {version}, replay has {known:?}")
            });
        let v = self
            .n_versions
            .entry((i, x, version))
            .or_insert_with(|| NVersion {
                total: Dyadic::zero(),
                refresh: Dyadic::zero(),
                c,
            });
        let w = Dyadic::pow2_neg(length);
        v.total += &w;
        if refresh {
            v.refresh += &w;
        }
        self.max_seen = self.max_seen.max(length as u64);
    }

    fn m_entry(&mut self, x: usize, e: &crate::trace::MEnum, rec: &StageRecord, s1: u64) {
        let k = e.target.len();
        let set = self.sides[x].set;
        let a_k = set.restrict(k, s1);
        let best = self.k.best_event(&a_k, s1);
        let b_k = self.b.restrict(k, s1);
        let events = self.scenario.universal.events();
        let via_ok =
            best.is_some_and(|i| events[i].codeword == e.via && events[i].len() == e.length);
        let in_range = match rec.action {
            Action::Attend => rec
                .from
                .is_some_and(|f| (k as u64) > f && (k as u64) < s1 - 1),
            Action::Describe => true,
            _ => false,
        };
        let ok = via_ok && in_range && e.target == b_k;
        self.log.ok("m_entries_justified", ok, || {
            format!(
                "stage {s1}: M_{x} entry for length {k} (via {}, length {}) is not justified",
                e.via, e.length
            )
        });
        self.max_seen = self.max_seen.max(e.length as u64);
        let side = &mut self.sides[x];
        side.m_weight += &Dyadic::pow2_neg(e.length);
        let slot = side.m_best.entry(e.target.clone()).or_insert(e.length);
        *slot = (*slot).min(e.length);

        let Some(ev_idx) = best.filter(|_| via_ok) else {
            return;
        };
        let event = &events[ev_idx];
        let prior = self.sides[x]
            .ledger
            .uses(&event.codeword)
            .last()
            .map(|u| u.stage);
        let cause = prior.and_then(|p| {
            self.b_changes
                .iter()
                .filter(|&&(st, pos, _)| st > p && st <= s1 && (pos as usize) < k)
                .map(|&(_, _, m)| m)
                .min()
        });
        if prior.is_some() {
            self.log.ok("reuse_has_cause", cause.is_some(), || {
                format!(
                    "stage {s1}: description {} reused without a B change below {k}",
                    event.codeword
                )
            });
        }
        match self.sides[x].ledger.record_use(event, e.length, s1, cause) {
            Ok(_) => {}
            Err(err) => self.log.ok("m_entries_justified", false, || {
                format!("stage {s1}: {err}")
            }),
        }
        self.log
            .ok("containers_nested", is_active(event, set, s1), || {
                format!(
                    "stage {s1}: inactive description {} moved containers",
                    event.codeword
                )
            });

        // reuse bound for the causing marker's current incarnation
        let Some(n) = cause else { return };
        if self.pos(n).is_none() || self.scenario.halting.contains(n as u64, s1) {
            return;
        }
        let c = self.c_of(n);
        let reused = &mut self.markers[n].reused[x];
        reused.insert(event.codeword.clone(), (event.len(), event.output.clone()));
        let active: Dyadic = reused
            .values()
            .filter(|(_, out)| set.restrict(out.len(), s1) == *out)
            .map(|(l, _)| Dyadic::pow2_neg(*l))
            .sum();
        let mut bound = Dyadic::pow2_neg(c);
        if self.kind == EngineKind::Dual {
            bound += &self.markers[n].deficit[x];
        }
        let since = self.markers[n].incarnation;
        self.log.weight("reuse_bound", &active, &bound, false, || {
            format!("stage {s1}: marker {n} (placed at {since}) reused active weight {active} > {bound}")
        });
    }

    fn check_weights_match(&mut self, rec: &StageRecord, s1: u64) {
        for x in 0..rec.sides.len() {
            let sr = &rec.sides[x];
            let mine = self.sides[x].m_weight.clone();
            self.log.ok("m_weight_match", mine == sr.m_weight, || {
                format!("stage {s1}: M_{x} weight {mine} vs trace {}", sr.m_weight)
            });
            let live: Vec<(usize, u32, Dyadic)> = self
                .markers
                .iter()
                .enumerate()
                .filter_map(|(i, m)| {
                    let v = self.n_versions.get(&(i, x, m.version))?;
                    (!v.total.is_zero()).then(|| (i, m.version, v.total.clone()))
                })
                .collect();
            self.log.ok("n_weights_match", live == sr.n_weights, || {
                format!(
                    "stage {s1}: N weights on side {x} replay {live:?}, trace {:?}",
                    sr.n_weights
                )
            });
        }
    }

    fn finish(mut self) -> AuditReport {
        let t = self.trace.header.stages;
        let wgt_u = self.scenario.universal.weight();
        let half = Dyadic::pow2_neg(1);
        let strict = self.kind == EngineKind::Dual;

        let versions: Vec<_> = self
            .n_versions
            .iter()
            .map(|(k, v)| (*k, v.total.clone(), v.refresh.clone(), v.c))
            .collect();
        for ((i, x, ver), total, refresh, c) in versions {
            self.log
                .weight("n_machine_bound", &total, &half, strict, || {
                    format!("N_{i} side {x} version {ver} weighs {total}")
                });
            let cap = wgt_u.shr(c);
            self.log.weight("n_refresh_bound", &refresh, &cap, false, || {
                format!("N_{i} side {x} version {ver}: refresh weight {refresh} exceeds 2^-{c} wgt(U)")
            });
        }

        let mut containers = Vec::new();
        for x in 0..self.sides.len() {
            let tag = self.sides[x].tag;
            let weights = self.sides[x].ledger.container_weights();
            for (k, w) in weights.iter().enumerate() {
                let bound = if k == 0 {
                    Dyadic::pow2_neg(2)
                } else {
                    Dyadic::pow2_neg(k as u32 + 1)
                };
                let name = if k == 0 { "decanter_s0" } else { "decanter_sk" };
                self.log.weight(name, w, &bound, true, || {
                    format!("side {tag:?}: wgt(S_{k}) = {w} is not below {bound}")
                });
                if k > 0 {
                    self.log.ok("containers_nested", w <= &weights[k - 1], || {
                        format!("side {tag:?}: S_{k} heavier than S_{}", k - 1)
                    });
                }
                containers.push(ContainerRow {
                    side: tag,
                    k,
                    members: self.sides[x].ledger.container(k).count(),
                    weight: w.clone(),
                    bound,
                });
            }
            let total: Dyadic = weights.iter().sum();
            let m = self.sides[x].m_weight.clone();
            self.log
                .weight("m_weight_vs_containers", &m, &total, false, || {
                    format!("side {tag:?}: wgt(M) = {m} exceeds container sum {total}")
                });
            debug_assert_eq!(total, self.sides[x].ledger.total_use_weight());
        }

        let quarter = t - t / 4;
        let markers = decode_halting(
            &self.b,
            &self.markers_final(),
            &self.scenario.halting,
            t,
            quarter,
        );
        for row in &markers {
            if let Some(agrees) = row.agrees {
                self.log.ok("coding", agrees, || {
                    format!(
                        "marker {}: decision {:?}, halting {}",
                        row.index, row.decision, row.halting
                    )
                });
            }
        }

        self.coverage(t, quarter);

        let checks = self.log.finish();
        AuditReport {
            engine: self.kind,
            stages: t,
            pass: checks.iter().all(|c| c.pass),
            checks,
            containers,
            markers,
        }
    }

    fn markers_final(&self) -> Vec<(Option<u64>, u64)> {
        self.markers
            .iter()
            .map(|m| (m.pos, m.last_change))
            .collect()
    }

    /// `K_M(B_T↾n) <= K(A↾n)[T]` over lengths whose `A↾n`, `K(A↾n)` and
    /// `B↾n` did not change after `quarter`.
    fn coverage(&mut self, t: u64, quarter: u64) {
        let b_last_low = |n: usize| {
            self.b
                .schedule()
                .any(|(e, st)| (e as usize) < n && st > quarter)
        };
        let lengths: Vec<usize> = self.lengths.iter().copied().collect();
        for x in 0..self.sides.len() {
            let set = self.sides[x].set;
            let tag = self.sides[x].tag;
            for &n in &lengths {
                let a_now = set.restrict(n, t);
                let k_now = self.k.k_at(&a_now, t);
                let Some(k) = k_now.finite() else { continue };
                let stable = set.restrict(n, quarter) == a_now
                    && self.k.k_at(&a_now, quarter) == k_now
                    && !b_last_low(n);
                if !stable {
                    continue;
                }
                let b_n = self.b.restrict(n, t);
                let km = self.sides[x].m_best.get(&b_n).copied();
                self.log
                    .ok("description_coverage", km.is_some_and(|m| m <= k), || {
                        format!("side {tag:?}: K_M(B↾{n}) = {km:?} exceeds K(X↾{n}) = {k}")
                    });
            }
        }
    }
}

/// For each marker index: decide membership in the halting set from B at
/// stage `t`. Markers unchanged since `stable_from` are compared against the
/// halting approximation; undefined markers are inconclusive.
pub fn decode_halting(
    b: &CESetApprox,
    markers: &[(Option<u64>, u64)],
    halting: &CESetApprox,
    t: u64,
    stable_from: u64,
) -> Vec<HaltingRow> {
    markers
        .iter()
        .enumerate()
        .map(|(n, &(pos, last_change))| {
            let decision = match pos {
                None => Decision::Inconclusive,
                Some(p) if b.contains(p, t) => Decision::Yes,
                Some(_) => Decision::No,
            };
            let stable = pos.is_some() && last_change <= stable_from;
            let halting = halting.contains(n as u64, t);
            let agrees = stable.then(|| (decision == Decision::Yes) == halting);
            HaltingRow {
                index: n,
                position: pos,
                last_change,
                stable,
                decision,
                halting,
                agrees,
            }
        })
        .collect()
}
