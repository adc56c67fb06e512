//! Request sets, the online Kraft-Chaitin assembler and prefix-free machines.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::bitcore::{BitString, Dyadic, ExtendedLength};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("code space exhausted: no free block for a codeword of length {length}")]
    Exhausted { length: u32 },
    #[error("request of length {length} would raise the weight from {weight} above 1")]
    WeightOverflow { length: u32, weight: Dyadic },
    #[error("codewords {0} and {1} are not prefix-free")]
    NotPrefixFree(BitString, BitString),
    #[error("request lengths must be positive")]
    ZeroLength,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A request `<target, length>`: describe `target` by a codeword of `length` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub target: BitString,
    pub length: u32,
}

impl Request {
    pub fn new(target: BitString, length: u32) -> Self {
        Request { target, length }
    }

    pub fn weight(&self) -> Dyadic {
        Dyadic::pow2_neg(self.length)
    }
}

/// An ordered, bounded list of requests. The running total never exceeds 1.
#[derive(Debug, Clone, Default)]
pub struct RequestSet {
    requests: Vec<Request>,
    total: Dyadic,
}

impl RequestSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, request: Request) -> Result<(), MachineError> {
        if request.length == 0 {
            return Err(MachineError::ZeroLength);
        }
        let total = &self.total + &request.weight();
        if total > Dyadic::one() {
            return Err(MachineError::WeightOverflow {
                length: request.length,
                weight: self.total.clone(),
            });
        }
        self.total = total;
        self.requests.push(request);
        Ok(())
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn total_weight(&self) -> &Dyadic {
        &self.total
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Parses one `target<TAB>length` request per line. Blank lines and lines
    /// starting with `#` are skipped; an empty target is written as an empty
    /// first column.
    pub fn parse(text: &str) -> Result<Self, MachineError> {
        let mut set = RequestSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| MachineError::Parse { line: i + 1, msg };
            let (target, length) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected target<TAB>length".into()))?;
            let target: BitString = target.parse().map_err(|e| parse_err(format!("{e}")))?;
            let length: u32 = length
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad length: {e}")))?;
            set.push(Request::new(target, length))?;
        }
        Ok(set)
    }
}

/// Unallocated code space as a prefix-free cover with at most one block per
/// length. Free weight plus allocated weight is always exactly 1.
#[derive(Debug, Clone)]
pub struct FreeBlockSet {
    free: BTreeMap<u32, BitString>,
    allocated: Dyadic,
}

impl Default for FreeBlockSet {
    fn default() -> Self {
        Self::new()
    }
}

impl FreeBlockSet {
    pub fn new() -> Self {
        let mut free = BTreeMap::new();
        free.insert(0, BitString::new());
        FreeBlockSet {
            free,
            allocated: Dyadic::zero(),
        }
    }

    /// Allocates a codeword of exactly `length` bits.
    ///
    /// Takes the longest free block no longer than `length`, returns its
    /// leftmost extension of that length and frees the split-off siblings.
    pub fn allocate(&mut self, length: u32) -> Result<BitString, MachineError> {
        let (&block_len, _) = self
            .free
            .range(..=length)
            .next_back()
            .ok_or(MachineError::Exhausted { length })?;
        let mut node = self.free.remove(&block_len).expect("block present");
        for depth in block_len..length {
            // the sibling at depth+1 is the only free block of that length
            let prev = self.free.insert(depth + 1, node.child(true));
            debug_assert!(prev.is_none());
            node.push(false);
        }
        self.allocated += &Dyadic::pow2_neg(length);
        Ok(node)
    }

    pub fn allocated_weight(&self) -> &Dyadic {
        &self.allocated
    }

    pub fn free_weight(&self) -> Dyadic {
        self.free.keys().map(|&l| Dyadic::pow2_neg(l)).sum()
    }

    pub fn free_blocks(&self) -> impl Iterator<Item = &BitString> {
        self.free.values()
    }
}

/// Allocation on a shared state, as a free function.
pub fn kc_allocate(state: &mut FreeBlockSet, length: u32) -> Result<BitString, MachineError> {
    state.allocate(length)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub codeword: BitString,
    pub output: BitString,
    pub stage: u64,
}

/// A prefix-free machine assembled online by Kraft-Chaitin allocation.
#[derive(Debug, Clone)]
pub struct PrefixFreeMachine {
    version: u32,
    entries: Vec<Entry>,
    space: FreeBlockSet,
}

impl Default for PrefixFreeMachine {
    fn default() -> Self {
        Self::new(0)
    }
}

impl PrefixFreeMachine {
    pub fn new(version: u32) -> Self {
        PrefixFreeMachine {
            version,
            entries: Vec::new(),
            space: FreeBlockSet::new(),
        }
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self) -> &Dyadic {
        self.space.allocated_weight()
    }

    /// Adds a description of `output` of the given length, stamped with `stage`.
    /// The machine's weight may not exceed 1.
    pub fn enumerate(
        &mut self,
        output: BitString,
        length: u32,
        stage: u64,
    ) -> Result<&Entry, MachineError> {
        if length == 0 {
            return Err(MachineError::ZeroLength);
        }
        if (self.weight() + &Dyadic::pow2_neg(length)) > Dyadic::one() {
            return Err(MachineError::WeightOverflow {
                length,
                weight: self.weight().clone(),
            });
        }
        let codeword = self.space.allocate(length)?;
        self.entries.push(Entry {
            codeword,
            output,
            stage,
        });
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Shortest description of `sigma` among entries stamped at or before `stage`.
    pub fn k_of(&self, sigma: &BitString, stage: u64) -> ExtendedLength {
        self.entries
            .iter()
            .filter(|e| e.stage <= stage && &e.output == sigma)
            .map(|e| ExtendedLength::Finite(e.codeword.len() as u32))
            .min()
            .unwrap_or(ExtendedLength::Infinite)
    }

    /// One `codeword<TAB>output<TAB>stage` line per entry.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}", e.codeword, e.output, e.stage);
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Vec<Entry>, MachineError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: &str| MachineError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(parse_err("expected codeword<TAB>output<TAB>stage"));
            }
            entries.push(Entry {
                codeword: cols[0].parse().map_err(|_| parse_err("bad codeword"))?,
                output: cols[1].parse().map_err(|_| parse_err("bad output"))?,
                stage: cols[2].parse().map_err(|_| parse_err("bad stage"))?,
            });
        }
        Ok(entries)
    }
}

/// Assembles the machine for a bounded request set, allocating in list order.
/// Entry `i` is stamped with stage `i`.
pub fn machine_from_requests(requests: &RequestSet) -> Result<PrefixFreeMachine, MachineError> {
    let mut m = PrefixFreeMachine::new(0);
    for (i, r) in requests.requests().iter().enumerate() {
        m.enumerate(r.target.clone(), r.length, i as u64)?;
    }
    Ok(m)
}

/// Dictionary order: a proper prefix sorts immediately before its extensions.
fn dict_cmp(a: &BitString, b: &BitString) -> Ordering {
    let n = a.len().min(b.len());
    for i in 0..n {
        match (a.get(i), b.get(i)) {
            (false, true) => return Ordering::Less,
            (true, false) => return Ordering::Greater,
            _ => {}
        }
    }
    a.len().cmp(&b.len())
}

/// Returns the first offending pair when `codewords` is not prefix-free.
/// Equal codewords count as a violation.
pub fn prefix_free_violation<'a, I>(codewords: I) -> Option<(BitString, BitString)>
where
    I: IntoIterator<Item = &'a BitString>,
{
    let mut sorted: Vec<&BitString> = codewords.into_iter().collect();
    sorted.sort_by(|a, b| dict_cmp(a, b));
    sorted
        .windows(2)
        .find(|w| w[0].is_prefix_of(w[1]))
        .map(|w| (w[0].clone(), w[1].clone()))
}

/// `wgt(S)` for a prefix-free set of strings.
pub fn wgt<'a, I>(set: I) -> Result<Dyadic, MachineError>
where
    I: IntoIterator<Item = &'a BitString> + Clone,
{
    if let Some((a, b)) = prefix_free_violation(set.clone()) {
        return Err(MachineError::NotPrefixFree(a, b));
    }
    Ok(set
        .into_iter()
        .map(|s| Dyadic::pow2_neg(s.len() as u32))
        .sum())
}

/// A machine that can be reset. Every reset archives the live version
/// unchanged and starts an empty one with the next version number.
#[derive(Debug, Clone, Default)]
pub struct VersionedMachine {
    live: PrefixFreeMachine,
    archive: Vec<PrefixFreeMachine>,
}

impl VersionedMachine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn live(&self) -> &PrefixFreeMachine {
        &self.live
    }

    pub fn live_mut(&mut self) -> &mut PrefixFreeMachine {
        &mut self.live
    }

    pub fn archive(&self) -> &[PrefixFreeMachine] {
        &self.archive
    }

    pub fn version(&self) -> u32 {
        self.live.version()
    }

    /// Discards all live computations. Empty versions are not archived.
    pub fn reset(&mut self) {
        let next = PrefixFreeMachine::new(self.live.version() + 1);
        let old = std::mem::replace(&mut self.live, next);
        if !old.is_empty() {
            self.archive.push(old);
        }
    }

    pub fn versions(&self) -> impl Iterator<Item = &PrefixFreeMachine> {
        self.archive.iter().chain(std::iter::once(&self.live))
    }
}

/// Index from output string to its description lengths, for repeated `k_of`
/// lookups over a fixed machine.
pub fn output_index(machine: &PrefixFreeMachine) -> HashMap<&BitString, Vec<(u64, u32)>> {
    let mut idx: HashMap<&BitString, Vec<(u64, u32)>> = HashMap::new();
    for e in machine.entries() {
        idx.entry(&e.output)
            .or_default()
            .push((e.stage, e.codeword.len() as u32));
    }
    idx
}
