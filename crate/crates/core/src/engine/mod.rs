//! The stage loop shared by the single and dual constructions. A single run
//! has one side (A); a dual run has two (A and D) over one marker system.
//!
//! Each stage is split in two: [`Engine::prepare`] brings the approximations
//! to `s+1`, computes `t_i[s]`, runs the refresh subroutine and finds the
//! deficient lengths; [`Engine::commit`] lets the least marker requiring
//! attention act (or places/describes) and emits the stage record.

pub(crate) mod index;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::approx::{CESetApprox, Scenario, UniversalEvent};
use crate::bitcore::{BitString, Dyadic, ExtendedLength};
use crate::machines::{MachineError, PrefixFreeMachine, VersionedMachine};
use crate::trace::{
    Action, EngineKind, MEnum, NEnum, NKind, SideRecord, SideTag, StageRecord, Trace, TraceHeader,
};
use index::{Bits, Fenwick};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("stage {stage}: {machine} rejected a request: {source}")]
    Machine {
        stage: u64,
        machine: String,
        source: MachineError,
    },
    #[error("commit called before prepare")]
    NotPrepared,
}

/// Which clauses hold for a marker at the current stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Clauses {
    pub a: bool,
    pub b: bool,
    pub c: bool,
}

impl Clauses {
    pub fn any(&self) -> bool {
        self.a || self.b || self.c
    }

    /// Holding clauses in order, e.g. "a", "bc". The single engine reports
    /// only the clause it acts on.
    pub fn label(&self, kind: EngineKind) -> String {
        match kind {
            EngineKind::Single if self.a => "a".into(),
            EngineKind::Single => "b".into(),
            EngineKind::Dual => [(self.a, 'a'), (self.b, 'b'), (self.c, 'c')]
                .iter()
                .filter(|(on, _)| *on)
                .map(|(_, ch)| *ch)
                .collect(),
        }
    }

    fn side(&self, x: usize) -> bool {
        if x == 0 {
            self.b
        } else {
            self.c
        }
    }
}

struct Side {
    tag: SideTag,
    set: CESetApprox,
    /// Characteristic string of `X_{s+1}` up to the engine width.
    cur: BitString,
    /// `K(X↾z)[s+1]` and the event realising it.
    ka: Vec<Option<(u32, usize)>>,
    ka_bits: Bits,
    ka_weights: Fenwick,
    /// Shortest M-description of the current `B↾z`.
    cover_m: Vec<Option<u32>>,
    /// `cover_m[z] <= ka[z]`.
    good_m: Bits,
    m: PrefixFreeMachine,
    z: Option<u64>,
    /// Lowest length whose `X` restriction changed this stage.
    dirty_from: Option<usize>,
}

struct MarkerSide {
    n: VersionedMachine,
    /// Shortest N-description of the current `X↾k`.
    cover: BTreeMap<usize, u32>,
    /// `cover[k] <= K(k) + c`.
    good: Bits,
    t: Option<u64>,
    deficit: Dyadic,
}

struct Marker {
    pos: Option<u64>,
    c: u32,
    sides: Vec<MarkerSide>,
}

struct Prepared {
    stage: u64,
    t_lists: Vec<Vec<(usize, Option<u64>)>>,
    n_enum: Vec<Vec<NEnum>>,
}

pub struct Engine {
    kind: EngineKind,
    /// Stages completed.
    stage: u64,
    events: Vec<UniversalEvent>,
    next_event: usize,
    by_len: Vec<Vec<usize>>,
    width: usize,
    zero_drops: BTreeMap<u64, Vec<(usize, u32)>>,
    /// `K(0^n)` as of the last absorbed stage.
    k_zero: Vec<ExtendedLength>,
    k_finite: Bits,
    halting: CESetApprox,
    b: CESetApprox,
    b_bits: BitString,
    sides: Vec<Side>,
    markers: Vec<Marker>,
    actions: u32,
    fresh: u64,
    prepared: Option<Prepared>,
    first: StageRecord,
}

fn machine_err(stage: u64, machine: String) -> impl FnOnce(MachineError) -> EngineError {
    move |source| EngineError::Machine {
        stage,
        machine,
        source,
    }
}

impl Engine {
    /// Builds the engine and performs stage 0 (`m_0` placed on 1).
    pub fn new(kind: EngineKind, scenario: &Scenario) -> Self {
        let events = scenario.universal.events().to_vec();
        let width = events
            .iter()
            .map(|e| e.output.len())
            .max()
            .map_or(1, |w| w + 1);
        let mut by_len = vec![Vec::new(); width];
        for (i, e) in events.iter().enumerate() {
            by_len[e.output.len()].push(i);
        }
        let mut zero_drops: BTreeMap<u64, Vec<(usize, u32)>> = BTreeMap::new();
        let mut best = vec![u32::MAX; width];
        for e in &events {
            if e.output.ones().next().is_some() || e.len() >= best[e.output.len()] {
                continue;
            }
            let n = e.output.len();
            best[n] = e.len();
            let at = zero_drops.entry(e.stage).or_default();
            match at.iter_mut().find(|(k, _)| *k == n) {
                Some(slot) => slot.1 = e.len(),
                None => at.push((n, e.len())),
            }
        }
        for drops in zero_drops.values_mut() {
            drops.sort_unstable();
        }

        let sets: Vec<&CESetApprox> = match kind {
            EngineKind::Single => vec![&scenario.set_a],
            EngineKind::Dual => vec![&scenario.set_a, &scenario.set_d],
        };
        let sides = kind
            .sides()
            .iter()
            .zip(sets)
            .map(|(&tag, set)| Side {
                tag,
                set: set.clone(),
                cur: BitString::zeros(width),
                ka: vec![None; width],
                ka_bits: Bits::new(width),
                ka_weights: Fenwick::new(width),
                cover_m: vec![None; width],
                good_m: Bits::new(width),
                m: PrefixFreeMachine::new(1),
                z: None,
                dirty_from: None,
            })
            .collect();

        let mut engine = Engine {
            kind,
            stage: 0,
            events,
            next_event: 0,
            by_len,
            width,
            zero_drops,
            k_zero: vec![ExtendedLength::Infinite; width],
            k_finite: Bits::new(width),
            halting: scenario.halting.clone(),
            b: CESetApprox::new(),
            b_bits: BitString::zeros(width),
            sides,
            markers: Vec::new(),
            actions: 0,
            fresh: 0,
            prepared: None,
            first: StageRecord {
                stage: 0,
                action: Action::Place,
                marker: Some(0),
                clause: None,
                from: None,
                to: Some(1),
                b_enum: None,
                injured: Vec::new(),
                sides: Vec::new(),
            },
        };
        // stage 0: absorb stage-0 events, then place m_0 on 1
        engine.advance_sets(0);
        let drops = engine.zero_drops.get(&0).cloned().unwrap_or_default();
        engine.apply_zero_drops(&drops);
        engine.absorb_universal(0);
        engine.marker_mut(0).pos = Some(1);
        engine.observe(1);
        engine.observe(0);
        let sides =
            engine.side_records(vec![Vec::new(); engine.sides.len()], Vec::new(), Vec::new());
        engine.first.sides = sides;
        engine
    }

    pub fn kind(&self) -> EngineKind {
        self.kind
    }

    /// Stages completed so far.
    pub fn stage(&self) -> u64 {
        self.stage
    }

    /// The record of stage 0.
    pub fn first_record(&self) -> &StageRecord {
        &self.first
    }

    pub fn marker_position(&self, i: usize) -> Option<u64> {
        self.markers.get(i).and_then(|m| m.pos)
    }

    /// `c_i` as it currently stands (materialized or not).
    pub fn counter(&self, i: usize) -> u32 {
        self.markers
            .get(i)
            .map_or(i as u32 + self.kind.c_base() + self.actions, |m| m.c)
    }

    pub fn b_set(&self) -> &CESetApprox {
        &self.b
    }

    pub fn output_machine(&self, side: SideTag) -> &PrefixFreeMachine {
        &self.sides[side.index()].m
    }

    pub fn n_machine(&self, i: usize, side: SideTag) -> Option<&VersionedMachine> {
        self.markers.get(i).map(|m| &m.sides[side.index()].n)
    }

    pub fn deficit(&self, i: usize, side: SideTag) -> Dyadic {
        self.markers
            .get(i)
            .map_or(Dyadic::zero(), |m| m.sides[side.index()].deficit.clone())
    }

    /// `t_i[s]` computed by the last `prepare`.
    pub fn t_of(&self, i: usize, side: SideTag) -> Option<u64> {
        self.markers.get(i).and_then(|m| m.sides[side.index()].t)
    }

    /// `z` computed by the last `prepare`.
    pub fn z_of(&self, side: SideTag) -> Option<u64> {
        self.sides[side.index()].z
    }

    /// `K(0^n)` as of the last absorbed stage.
    pub fn k_zero(&self, n: usize) -> ExtendedLength {
        self.k_zero
            .get(n)
            .copied()
            .unwrap_or(ExtendedLength::Infinite)
    }

    /// `2^{-K(t_i[s])[s+1] - c_i[s]}`, or `None` when disabled.
    pub fn q_of(&self, i: usize, side: SideTag) -> Option<Dyadic> {
        let t = self.t_of(i, side)?;
        let k = self.k_zero(t as usize).finite()?;
        Some(Dyadic::pow2_neg(k + self.counter(i)))
    }

    /// `Σ_{m_i[s] < j <= s} 2^{-K(X↾j)[s+1]}`.
    pub fn clause_sum(&self, i: usize, side: SideTag) -> Dyadic {
        match self.marker_position(i) {
            Some(m) => self.sides[side.index()]
                .ka_weights
                .range_open_closed(m, self.stage),
            None => Dyadic::zero(),
        }
    }

    /// Clauses holding for marker `i` at the prepared stage; all false unless
    /// `m_i[s]` is defined and outside `B_s`.
    pub fn requires_attention(&self, i: usize) -> Clauses {
        let Some(m) = self.marker_position(i) else {
            return Clauses::default();
        };
        if self.b.contains(m, self.stage) {
            return Clauses::default();
        }
        let s1 = self.stage + 1;
        let mut out = Clauses {
            a: self.halting.contains(i as u64, s1),
            ..Clauses::default()
        };
        for (x, side) in self.kind.sides().iter().enumerate() {
            let Some(q) = self.q_of(i, *side) else {
                continue;
            };
            let sum = self.clause_sum(i, *side);
            let threshold = q.saturating_sub(&self.deficit(i, *side));
            let holds = sum >= threshold;
            match x {
                0 => out.b = holds,
                _ => out.c = holds,
            }
        }
        out
    }

    fn marker_mut(&mut self, i: usize) -> &mut Marker {
        while self.markers.len() <= i {
            let j = self.markers.len() as u32;
            let c = j + self.kind.c_base() + self.actions;
            let sides = (0..self.sides.len())
                .map(|_| MarkerSide {
                    n: VersionedMachine::new(),
                    cover: BTreeMap::new(),
                    good: Bits::new(self.width),
                    t: None,
                    deficit: Dyadic::zero(),
                })
                .collect();
            self.markers.push(Marker {
                pos: None,
                c,
                sides,
            });
            self.fresh = self.fresh.max(c as u64 + 1);
        }
        &mut self.markers[i]
    }

    fn observe(&mut self, x: u64) {
        self.fresh = self.fresh.max(x + 1);
    }

    fn large(&mut self) -> u64 {
        let v = self.fresh;
        self.fresh += 1;
        v
    }

    fn defined(&self) -> Vec<usize> {
        (0..self.markers.len())
            .filter(|&i| self.markers[i].pos.is_some())
            .collect()
    }

    /// Brings every side's set to stage `s`; N covers above a change are
    /// dropped since they describe strings that can no longer occur.
    fn advance_sets(&mut self, s: u64) {
        for x in 0..self.sides.len() {
            let changed: Vec<u64> = self.sides[x].set.enumerated_at(s).to_vec();
            let side = &mut self.sides[x];
            side.dirty_from = None;
            for &e in &changed {
                if (e as usize) < self.width {
                    side.cur.set(e as usize, true);
                    let from = e as usize + 1;
                    side.dirty_from = Some(side.dirty_from.map_or(from, |d| d.min(from)));
                }
            }
            if let Some(from) = self.sides[x].dirty_from {
                for m in &mut self.markers {
                    let ms = &mut m.sides[x];
                    ms.cover.split_off(&from);
                    ms.good.clear_from(from);
                }
            }
        }
    }

    fn compute_t(&mut self) {
        let bound = (self.stage + 1) as usize;
        for m in &mut self.markers {
            for ms in &mut m.sides {
                ms.t = if m.pos.is_some() {
                    self.k_finite.first_diff(&ms.good, bound).map(|t| t as u64)
                } else {
                    None
                };
            }
        }
        let ts: Vec<u64> = self
            .markers
            .iter()
            .flat_map(|m| m.sides.iter().filter_map(|ms| ms.t))
            .collect();
        for t in ts {
            self.observe(t);
        }
    }

    fn apply_zero_drops(&mut self, drops: &[(usize, u32)]) {
        for &(n, len) in drops {
            self.k_zero[n] = ExtendedLength::Finite(len);
            self.k_finite.set(n, true);
        }
    }

    fn k_plus_c(&self, k: usize, c: u32) -> ExtendedLength {
        self.k_zero[k].plus(c)
    }

    fn enumerate_n(
        &mut self,
        i: usize,
        x: usize,
        k: usize,
        len: u32,
        kind: NKind,
    ) -> Result<NEnum, EngineError> {
        let s1 = self.stage + 1;
        let target = self.sides[x].cur.prefix(k);
        let tag = self.sides[x].tag;
        let ms = &mut self.markers[i].sides[x];
        let version = ms.n.version();
        ms.n.live_mut()
            .enumerate(target.clone(), len, s1)
            .map_err(machine_err(s1, format!("N_{i}^{tag:?} v{version}")))?;
        let slot = ms.cover.entry(k).or_insert(len);
        *slot = (*slot).min(len);
        self.observe(len as u64);
        self.refresh_good(i, x, k);
        Ok(NEnum {
            marker: i,
            version,
            target,
            length: len,
            kind,
        })
    }

    fn refresh_good(&mut self, i: usize, x: usize, k: usize) {
        let c = self.markers[i].c;
        let bound = self.k_plus_c(k, c);
        let ms = &mut self.markers[i].sides[x];
        let ok = ms
            .cover
            .get(&k)
            .is_some_and(|&l| ExtendedLength::Finite(l) <= bound);
        ms.good.set(k, ok);
    }

    /// Subroutine: for each defined marker and each `k < t_i[s]` whose `K(k)`
    /// dropped at `s+1`, describe `X_{s+1}↾k` in `N_i` with length
    /// `K(k)[s+1] + c_i`. An undefined `t` admits every `k`.
    fn refresh_n_machines(&mut self) -> Result<Vec<Vec<NEnum>>, EngineError> {
        let s1 = self.stage + 1;
        let drops = self.zero_drops.get(&s1).cloned().unwrap_or_default();
        self.apply_zero_drops(&drops);
        let mut out = vec![Vec::new(); self.sides.len()];
        let defined = self.defined();
        for &i in &defined {
            let c = self.markers[i].c;
            for (x, slot) in out.iter_mut().enumerate() {
                let t = self.markers[i].sides[x].t;
                for &(k, len) in &drops {
                    if t.is_none_or(|t| (k as u64) < t) {
                        slot.push(self.enumerate_n(i, x, k, len + c, NKind::Refresh)?);
                    }
                }
            }
        }
        for i in 0..self.markers.len() {
            for x in 0..self.sides.len() {
                for &(k, _) in &drops {
                    self.refresh_good(i, x, k);
                }
            }
        }
        Ok(out)
    }

    fn set_ka(&mut self, x: usize, z: usize, value: Option<(u32, usize)>) {
        let side = &mut self.sides[x];
        if side.ka[z] == value {
            return;
        }
        if let Some((old, _)) = side.ka[z] {
            side.ka_weights.sub(z, &Dyadic::pow2_neg(old));
        }
        if let Some((new, _)) = value {
            side.ka_weights.add(z, &Dyadic::pow2_neg(new));
        }
        side.ka[z] = value;
        side.ka_bits.set(z, value.is_some());
        let good = matches!((side.cover_m[z], value), (Some(c), Some((k, _))) if c <= k);
        side.good_m.set(z, good);
    }

    fn better(&self, a: Option<(u32, usize)>, b: usize) -> bool {
        match a {
            None => true,
            Some((_, a)) => {
                let (ea, eb) = (&self.events[a], &self.events[b]);
                (ea.len(), &ea.codeword) > (eb.len(), &eb.codeword)
            }
        }
    }

    /// Brings `K(X↾z)` to stage `s`: full recomputation above a change of
    /// `X`, and new events elsewhere.
    fn absorb_universal(&mut self, s: u64) {
        let start = self.next_event;
        while self.next_event < self.events.len() && self.events[self.next_event].stage <= s {
            self.next_event += 1;
        }
        for x in 0..self.sides.len() {
            let dirty = self.sides[x].dirty_from.unwrap_or(self.width);
            for z in dirty..self.width {
                let mut best: Option<(u32, usize)> = None;
                for &e in &self.by_len[z] {
                    if e >= self.next_event {
                        break;
                    }
                    if self.events[e].output.is_prefix_of(&self.sides[x].cur)
                        && self.better(best, e)
                    {
                        best = Some((self.events[e].len(), e));
                    }
                }
                self.set_ka(x, z, best);
            }
            for e in start..self.next_event {
                let z = self.events[e].output.len();
                if z >= dirty {
                    continue;
                }
                if self.events[e].output.is_prefix_of(&self.sides[x].cur)
                    && self.better(self.sides[x].ka[z], e)
                {
                    self.set_ka(x, z, Some((self.events[e].len(), e)));
                }
            }
        }
    }

    fn compute_z(&mut self) {
        let bound = match self.kind {
            EngineKind::Single => self.stage,
            EngineKind::Dual => self.stage + 1,
        } as usize;
        for x in 0..self.sides.len() {
            let side = &mut self.sides[x];
            side.z = side
                .ka_bits
                .first_diff(&side.good_m, bound)
                .map(|z| z as u64);
            if let Some(z) = side.z {
                self.observe(z);
            }
        }
    }

    /// Runs the first half of stage `s+1`.
    pub fn prepare(&mut self) -> Result<(), EngineError> {
        let s1 = self.stage + 1;
        self.observe(s1);
        self.advance_sets(s1);
        self.compute_t();
        let t_lists = (0..self.sides.len())
            .map(|x| {
                self.defined()
                    .into_iter()
                    .map(|i| (i, self.markers[i].sides[x].t))
                    .collect()
            })
            .collect();
        let n_enum = self.refresh_n_machines()?;
        self.absorb_universal(s1);
        self.compute_z();
        self.prepared = Some(Prepared {
            stage: s1,
            t_lists,
            n_enum,
        });
        Ok(())
    }

    fn describe(&mut self, x: usize, z: usize, b_string: BitString) -> Result<MEnum, EngineError> {
        let s1 = self.stage + 1;
        let (len, e) = self.sides[x].ka[z].expect("described lengths have finite K");
        let tag = self.sides[x].tag;
        self.sides[x]
            .m
            .enumerate(b_string.clone(), len, s1)
            .map_err(machine_err(s1, format!("M_{tag:?}")))?;
        let side = &mut self.sides[x];
        side.cover_m[z] = Some(side.cover_m[z].map_or(len, |c| c.min(len)));
        side.good_m.set(z, true);
        self.observe(len as u64);
        Ok(MEnum {
            target: b_string,
            length: len,
            via: self.events[e].codeword.clone(),
        })
    }

    fn placeable(&self, n: usize) -> bool {
        self.sides.iter().all(|side| {
            side.z.is_none_or(|z| (n as u64) < z)
                && n < self.width
                && side.ka[..=n].iter().all(Option::is_some)
        })
    }

    /// Runs the second half of stage `s+1` and returns its record.
    pub fn commit(&mut self) -> Result<StageRecord, EngineError> {
        let prepared = self.prepared.take().ok_or(EngineError::NotPrepared)?;
        let s = self.stage;
        let s1 = prepared.stage;
        let mut m_enum: Vec<Vec<MEnum>> = vec![Vec::new(); self.sides.len()];
        let mut n_enum = prepared.n_enum;
        let mut rec = StageRecord {
            stage: s1,
            action: Action::Noop,
            marker: None,
            clause: None,
            from: None,
            to: None,
            b_enum: None,
            injured: Vec::new(),
            sides: Vec::new(),
        };

        let acting = self
            .defined()
            .into_iter()
            .map(|i| (i, self.requires_attention(i)))
            .find(|(_, cl)| cl.any());

        match acting {
            None => {
                let n = (0..)
                    .find(|&j| self.marker_position(j).is_none())
                    .expect("finitely many");
                let deficient = self
                    .sides
                    .iter()
                    .any(|side| side.z.is_some_and(|z| z <= n as u64));
                if !deficient && self.placeable(n) {
                    let pos = self.large();
                    self.marker_mut(n).pos = Some(pos);
                    rec.action = Action::Place;
                    rec.marker = Some(n);
                    rec.to = Some(pos);
                } else if self.sides.iter().any(|side| side.z.is_some()) {
                    rec.action = Action::Describe;
                    for x in 0..self.sides.len() {
                        if let Some(z) = self.sides[x].z {
                            let target = self.b_bits.prefix(z as usize);
                            m_enum[x].push(self.describe(x, z as usize, target)?);
                        }
                    }
                }
            }
            Some((n, clauses)) => {
                let p = self.markers[n].pos.expect("acting marker is defined");
                let coded = clauses.a;
                let sums: Vec<Dyadic> = self
                    .kind
                    .sides()
                    .iter()
                    .map(|&side| self.clause_sum(n, side))
                    .collect();
                let t_now: Vec<Option<u64>> = self.markers[n].sides.iter().map(|ms| ms.t).collect();
                let c_n = self.markers[n].c;

                // old position into B; new position (coding keeps it)
                self.b.enumerate(p, s1).expect("marker positions are fresh");
                let to = if coded { p } else { self.large() };
                self.markers[n].pos = Some(to);
                rec.action = Action::Attend;
                rec.marker = Some(n);
                rec.clause = Some(clauses.label(self.kind));
                rec.from = Some(p);
                rec.to = Some(to);
                rec.b_enum = Some(p);

                // re-describe lengths in (p, s) that were validly described
                let lo = (p as usize).saturating_add(1);
                let valid: Vec<Vec<usize>> = self
                    .sides
                    .iter()
                    .map(|side| {
                        if lo >= self.width {
                            Vec::new()
                        } else {
                            side.good_m.ones_in(lo, s as usize)
                        }
                    })
                    .collect();
                if (p as usize) < self.width {
                    self.b_bits.set(p as usize, true);
                    for side in &mut self.sides {
                        for slot in &mut side.cover_m[lo..] {
                            *slot = None;
                        }
                        side.good_m.clear_from(lo);
                    }
                }
                for (x, ks) in valid.into_iter().enumerate() {
                    for k in ks {
                        let target = self.b_bits.prefix(k);
                        m_enum[x].push(self.describe(x, k, target)?);
                    }
                }

                // injure every j > n
                self.actions += 1;
                for j in n + 1..self.markers.len() {
                    let was_defined = self.markers[j].pos.take().is_some();
                    self.markers[j].c += 1;
                    if was_defined {
                        rec.injured.push(j);
                        for ms in &mut self.markers[j].sides {
                            ms.n.reset();
                            ms.cover.clear();
                            ms.good.clear();
                            ms.deficit = Dyadic::zero();
                        }
                    }
                    let c = self.markers[j].c;
                    self.observe(c as u64);
                }

                // enumeration into N_n and deficits (the single engine keeps none)
                let dual = self.kind == EngineKind::Dual;
                let nsides = self.sides.len();
                for x in 0..nsides {
                    let holds = clauses.side(x);
                    if coded {
                        if !holds && dual {
                            let ms = &mut self.markers[n].sides[x];
                            ms.deficit = &ms.deficit + &sums[x];
                        }
                        continue;
                    }
                    if holds {
                        let t = t_now[x].expect("a holding clause has t defined") as usize;
                        let k = self.k_zero[t].finite().expect("t has finite K");
                        let e = self.enumerate_n(n, x, t, k + c_n, NKind::Move)?;
                        n_enum[x].push(e);
                        self.markers[n].sides[x].deficit = Dyadic::zero();
                    } else {
                        let ms = &mut self.markers[n].sides[x];
                        ms.deficit = &ms.deficit + &sums[x];
                    }
                }
            }
        }

        rec.sides = self.side_records(m_enum, n_enum, prepared.t_lists);
        self.stage = s1;
        Ok(rec)
    }

    fn side_records(
        &self,
        m_enum: Vec<Vec<MEnum>>,
        n_enum: Vec<Vec<NEnum>>,
        t_lists: Vec<Vec<(usize, Option<u64>)>>,
    ) -> Vec<SideRecord> {
        let mut n_enum = n_enum.into_iter();
        let mut t_lists = t_lists.into_iter();
        m_enum
            .into_iter()
            .enumerate()
            .map(|(x, m_enum)| {
                let side = &self.sides[x];
                let n_weights = self
                    .markers
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| !m.sides[x].n.live().weight().is_zero())
                    .map(|(i, m)| {
                        let n = &m.sides[x].n;
                        (i, n.version(), n.live().weight().clone())
                    })
                    .collect();
                let deficits = match self.kind {
                    EngineKind::Single => Vec::new(),
                    EngineKind::Dual => self
                        .markers
                        .iter()
                        .enumerate()
                        .filter(|(_, m)| !m.sides[x].deficit.is_zero())
                        .map(|(i, m)| (i, m.sides[x].deficit.clone()))
                        .collect(),
                };
                SideRecord {
                    side: side.tag,
                    z: side.z,
                    t: t_lists.next().unwrap_or_default(),
                    m_enum,
                    n_enum: n_enum.next().unwrap_or_default(),
                    m_weight: side.m.weight().clone(),
                    n_weights,
                    deficits,
                }
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<StageRecord, EngineError> {
        self.prepare()?;
        self.commit()
    }

    /// Stage 0 plus stages `1..=stages`.
    pub fn run(kind: EngineKind, scenario: &Scenario, stages: u64) -> Result<Trace, EngineError> {
        let mut engine = Engine::new(kind, scenario);
        let mut records = Vec::with_capacity(stages as usize + 1);
        records.push(engine.first_record().clone());
        for _ in 0..stages {
            records.push(engine.step()?);
        }
        log::debug!(
            "{kind} run: {stages} stages, {} markers, |B| = {}",
            engine.markers.len(),
            engine.b.len()
        );
        Ok(Trace {
            header: TraceHeader::new(kind, stages),
            records,
        })
    }
}
