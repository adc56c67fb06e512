//! The single construction: a c.e. set B with the halting set coded in by
//! markers, a machine M with `K_M(B↾n) <= K(A↾n)`, and one machine `N_i` per
//! marker.

use crate::approx::Scenario;
use crate::bitcore::Dyadic;
use crate::engine::{Engine, EngineError};
use crate::trace::{EngineKind, SideTag, StageRecord, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attention {
    No,
    ClauseA,
    ClauseB,
}

pub struct SingleEngine {
    inner: Engine,
}

impl SingleEngine {
    /// Engine after stage 0.
    pub fn new(scenario: &Scenario) -> Self {
        SingleEngine {
            inner: Engine::new(EngineKind::Single, scenario),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.inner
    }

    /// Approximations to `s+1`, `t_i[s]`, the refresh subroutine and `z`.
    pub fn prepare(&mut self) -> Result<(), EngineError> {
        self.inner.prepare()
    }

    pub fn commit(&mut self) -> Result<StageRecord, EngineError> {
        self.inner.commit()
    }

    pub fn step(&mut self) -> Result<StageRecord, EngineError> {
        self.inner.step()
    }

    pub fn t_of(&self, i: usize) -> Option<u64> {
        self.inner.t_of(i, SideTag::A)
    }

    /// `None` when clause (b) is disabled for marker `i`.
    pub fn q_of(&self, i: usize) -> Option<Dyadic> {
        self.inner.q_of(i, SideTag::A)
    }

    pub fn z(&self) -> Option<u64> {
        self.inner.z_of(SideTag::A)
    }

    pub fn requires_attention(&self, i: usize) -> Attention {
        let c = self.inner.requires_attention(i);
        if c.a {
            Attention::ClauseA
        } else if c.b {
            Attention::ClauseB
        } else {
            Attention::No
        }
    }
}

/// Stage 0 followed by `stages` steps.
pub fn run(scenario: &Scenario, stages: u64) -> Result<Trace, EngineError> {
    Engine::run(EngineKind::Single, scenario, stages)
}
