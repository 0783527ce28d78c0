use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ir::{MemorySpace, StmtId};
use crate::sim::{Action, Dim3, MemoryModel, MemoryUnit, ThreadId, UnitTuple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaceKind {
    ReadWrite,
    WriteWrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaceScope {
    IntraBlock,
    CrossBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RaceAccess {
    pub stmt: StmtId,
    pub thread: ThreadId,
    pub action: Action,
}

/// One racing pair of accesses to one address. `first` orders before `second`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceReport {
    pub array: String,
    pub space: MemorySpace,
    /// Owning block for shared memory.
    pub block: Option<Dim3>,
    pub index: i64,
    pub first: RaceAccess,
    pub second: RaceAccess,
    pub kind: RaceKind,
    pub scope: RaceScope,
}

/// Sort and dedup key of a report.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct RaceKey {
    array: String,
    block: Option<u32>,
    index: i64,
    lo: (StmtId, ThreadId),
    hi: (StmtId, ThreadId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RaceSet {
    pub races: Vec<RaceReport>,
    /// More races existed than the bound allowed.
    pub truncated: bool,
}

/// Whether two accesses to the same address race.
///
/// Global accesses from different blocks always race when one is a write.
/// Otherwise both must sit in the same visit order, and then they race
/// unless they are lockstep lanes of one non-diverged warp.
pub fn tuples_race(a: &UnitTuple, b: &UnitTuple, space: MemorySpace) -> bool {
    if a.thread == b.thread || !(a.is_write() || b.is_write()) {
        return false;
    }
    if a.thread.block != b.thread.block {
        return space == MemorySpace::Global;
    }
    if a.visit_order != b.visit_order {
        return false;
    }
    unordered_same_block(a, b)
}

/// Same-block rule with visit orders ignored.
pub(crate) fn unordered_same_block(a: &UnitTuple, b: &UnitTuple) -> bool {
    a.thread != b.thread
        && (a.is_write() || b.is_write())
        && (a.warp != b.warp
            || (a.stmt == b.stmt && a.is_write() && b.is_write())
            || a.diverged
            || b.diverged)
}

/// Tuples of a unit with repeats from loops removed.
pub(crate) fn distinct_tuples(unit: &MemoryUnit) -> Vec<UnitTuple> {
    let mut v = unit.tuples.clone();
    v.sort_by_key(|t| (t.thread.block, t.visit_order, t.thread.thread, t.stmt, t.action, t.warp, t.diverged));
    v.dedup();
    v
}

struct Collector<'m> {
    model: &'m MemoryModel,
    bound: Option<usize>,
    found: BTreeMap<RaceKey, RaceReport>,
    truncated: bool,
}

impl Collector<'_> {
    /// Records the pair; `false` once the bound is full and the key sorts after
    /// everything kept.
    fn add(&mut self, block: Option<u32>, unit: &MemoryUnit, lo_t: &UnitTuple, hi_t: &UnitTuple) -> bool {
        let key = RaceKey {
            array: self.model.array_name(unit.address).to_string(),
            block,
            index: unit.address.index,
            lo: (lo_t.stmt, lo_t.thread),
            hi: (hi_t.stmt, hi_t.thread),
        };
        if self.found.contains_key(&key) {
            return true;
        }
        if let Some(n) = self.bound {
            if self.found.len() >= n {
                self.truncated = true;
                match self.found.last_key_value() {
                    Some((last, _)) if *last > key => {
                        self.found.pop_last();
                    }
                    _ => return false,
                }
            }
        }
        let (a, b) = (lo_t, hi_t);
        let access = |t: &UnitTuple| RaceAccess {
            stmt: t.stmt,
            thread: t.thread,
            action: t.action,
        };
        let report = RaceReport {
            array: key.array.clone(),
            space: self.model.space(unit.address),
            block: block.map(|_| lo_t.thread.block),
            index: unit.address.index,
            first: access(lo_t),
            second: access(hi_t),
            kind: if a.is_write() && b.is_write() {
                RaceKind::WriteWrite
            } else {
                RaceKind::ReadWrite
            },
            scope: if a.thread.block == b.thread.block {
                RaceScope::IntraBlock
            } else {
                RaceScope::CrossBlock
            },
        };
        self.found.insert(key, report);
        true
    }

    /// Visits pairs in key order: `lo` ascending, then `hi` ascending. A pair
    /// needs a write, so a read `lo` only meets later writes.
    fn scan(&mut self, block: Option<u32>, unit: &MemoryUnit) {
        let space = self.model.space(unit.address);
        let mut tuples = distinct_tuples(unit);
        tuples.sort_by_key(|t| (t.stmt, t.thread, t.visit_order));
        let key = |t: &UnitTuple| (t.stmt, t.thread);
        let writes: Vec<usize> = (0..tuples.len()).filter(|&i| tuples[i].is_write()).collect();
        // once a pair is rejected by the bound, only its own `lo` can still yield smaller keys
        let mut last_lo = None;
        for (i, a) in tuples.iter().enumerate() {
            if last_lo.is_some_and(|lo| lo != key(a)) {
                return;
            }
            let mut all = i + 1..tuples.len();
            let mut ws = writes[writes.partition_point(|&w| w <= i)..].iter().copied();
            let later: &mut dyn Iterator<Item = usize> = if a.is_write() { &mut all } else { &mut ws };
            for j in later {
                let b = &tuples[j];
                if key(b) == key(a) || !tuples_race(a, b, space) {
                    continue;
                }
                if !self.add(block, unit, a, b) {
                    last_lo = Some(key(a));
                    break;
                }
            }
        }
    }
}

fn collect(model: &MemoryModel, bound: Option<usize>) -> RaceSet {
    let mut c = Collector {
        model,
        bound,
        found: BTreeMap::new(),
        truncated: false,
    };
    for (block, unit) in model.units_with_block() {
        c.scan(block, unit);
    }
    RaceSet {
        races: c.found.into_values().collect(),
        truncated: c.truncated,
    }
}

/// Every racing pair, ordered by array, block, index, then the pair.
pub fn detect_data_races(model: &MemoryModel) -> Vec<RaceReport> {
    collect(model, None).races
}

/// The first `limit` races of [`detect_data_races`] in the same order.
pub fn detect_data_races_bounded(model: &MemoryModel, limit: usize) -> RaceSet {
    collect(model, Some(limit))
}
