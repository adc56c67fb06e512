//! JSON-lines trace: a header line followed by one record per stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitcore::{BitString, Dyadic};

pub const TRACE_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Single,
    Dual,
}

impl EngineKind {
    /// `c_i[0] = i + base`.
    pub fn c_base(self) -> u32 {
        match self {
            EngineKind::Single => 3,
            EngineKind::Dual => 4,
        }
    }

    pub fn sides(self) -> &'static [SideTag] {
        match self {
            EngineKind::Single => &[SideTag::A],
            EngineKind::Dual => &[SideTag::A, SideTag::D],
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Single => "single",
            EngineKind::Dual => "dual",
        })
    }
}

impl FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single" => Ok(EngineKind::Single),
            "dual" => Ok(EngineKind::Dual),
            other => Err(format!(
                "unknown engine {other:?} (expected single or dual)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SideTag {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "d")]
    D,
}

impl SideTag {
    pub fn index(self) -> usize {
        match self {
            SideTag::A => 0,
            SideTag::D => 1,
        }
    }
}

/// First line of a trace. `t_stage` and `sum_stage` name the stage of `K`
/// read when computing `t_i[s]` and the clause sums at stage `s+1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: u32,
    pub engine: EngineKind,
    pub stages: u64,
    pub c_base: u32,
    pub t_stage: String,
    pub sum_stage: String,
    pub z_bound: String,
}

impl TraceHeader {
    pub fn new(engine: EngineKind, stages: u64) -> Self {
        TraceHeader {
            format: TRACE_FORMAT,
            engine,
            stages,
            c_base: engine.c_base(),
            t_stage: "s".into(),
            sum_stage: "s+1".into(),
            z_bound: match engine {
                EngineKind::Single => "z<s".into(),
                EngineKind::Dual => "z<=s".into(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    /// A new marker was placed.
    Place,
    /// A marker acted; its old position entered B.
    Attend,
    /// Deficient lengths were described in the output machines.
    Describe,
    Noop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MEnum {
    pub target: BitString,
    pub length: u32,
    /// Codeword of the universal description this entry is charged to.
    pub via: BitString,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NKind {
    Refresh,
    Move,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NEnum {
    pub marker: usize,
    pub version: u32,
    pub target: BitString,
    pub length: u32,
    pub kind: NKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideRecord {
    pub side: SideTag,
    pub z: Option<u64>,
    /// `(marker, t)` for every marker defined at the start of the stage.
    pub t: Vec<(usize, Option<u64>)>,
    pub m_enum: Vec<MEnum>,
    pub n_enum: Vec<NEnum>,
    pub m_weight: Dyadic,
    /// `(marker, version, weight)` for live machines of nonzero weight.
    pub n_weights: Vec<(usize, u32, Dyadic)>,
    /// `(marker, deficit)` after the stage, nonzero entries only (dual).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deficits: Vec<(usize, Dyadic)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u64,
    pub action: Action,
    pub marker: Option<usize>,
    /// Clauses that held for the acting marker, e.g. "a", "b", "bc".
    pub clause: Option<String>,
    pub from: Option<u64>,
    pub to: Option<u64>,
    pub b_enum: Option<u64>,
    pub injured: Vec<usize>,
    pub sides: Vec<SideRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<StageRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("trace line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("unsupported trace format {0}")]
    Format(u32),
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("plain data");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("plain data"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (i, first) = lines.next().ok_or(TraceError::Empty)?;
        let header: TraceHeader =
            serde_json::from_str(first).map_err(|source| TraceError::Json {
                line: i + 1,
                source,
            })?;
        if header.format != TRACE_FORMAT {
            return Err(TraceError::Format(header.format));
        }
        let records = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|source| TraceError::Json {
                    line: i + 1,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Trace { header, records })
    }
}
