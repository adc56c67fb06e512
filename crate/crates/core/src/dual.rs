//! The dual construction: one marker system and one set B below two given
//! sets A and D, with machines `M_a`, `M_d`, per-marker `N_i^a`, `N_i^d` and
//! the deficits `p_i^a`, `p_i^d`.

use crate::approx::Scenario;
use crate::bitcore::Dyadic;
use crate::engine::{Clauses, Engine, EngineError};
use crate::trace::{EngineKind, SideTag, StageRecord, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualAttention {
    No,
    AClause,
    BClause,
    CClause,
    BcClause,
}

impl From<Clauses> for DualAttention {
    fn from(c: Clauses) -> Self {
        match (c.a, c.b, c.c) {
            (true, _, _) => DualAttention::AClause,
            (false, true, true) => DualAttention::BcClause,
            (false, true, false) => DualAttention::BClause,
            (false, false, true) => DualAttention::CClause,
            (false, false, false) => DualAttention::No,
        }
    }
}

pub struct DualEngine {
    inner: Engine,
}

impl DualEngine {
    pub fn new(scenario: &Scenario) -> Self {
        DualEngine {
            inner: Engine::new(EngineKind::Dual, scenario),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.inner
    }

    pub fn prepare(&mut self) -> Result<(), EngineError> {
        self.inner.prepare()
    }

    pub fn commit(&mut self) -> Result<StageRecord, EngineError> {
        self.inner.commit()
    }

    pub fn step(&mut self) -> Result<StageRecord, EngineError> {
        self.inner.step()
    }

    pub fn t_of(&self, i: usize, side: SideTag) -> Option<u64> {
        self.inner.t_of(i, side)
    }

    pub fn q_of(&self, i: usize, side: SideTag) -> Option<Dyadic> {
        self.inner.q_of(i, side)
    }

    pub fn deficit(&self, i: usize, side: SideTag) -> Dyadic {
        self.inner.deficit(i, side)
    }

    pub fn clauses(&self, i: usize) -> Clauses {
        self.inner.requires_attention(i)
    }

    pub fn requires_attention(&self, i: usize) -> DualAttention {
        self.clauses(i).into()
    }
}

pub fn run(scenario: &Scenario, stages: u64) -> Result<Trace, EngineError> {
    Engine::run(EngineKind::Dual, scenario, stages)
}
