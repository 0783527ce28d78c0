//! Brute-force reference checks written directly from the definitions.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use simucheck::detect::RaceReport;
use simucheck::ir::{MemorySpace, StmtId};
use simucheck::sim::{Action, MemoryModel, ThreadId, UnitTuple};

pub type PairKey = (String, Option<u32>, i64, (StmtId, ThreadId), (StmtId, ThreadId));

/// Every tuple pair of every unit, no deduplication and no shortcuts.
pub fn oracle_races(model: &MemoryModel) -> BTreeSet<PairKey> {
    let mut out = BTreeSet::new();
    for (block, unit) in model.units_with_block() {
        let space = model.arrays[unit.address.array].space;
        let t = &unit.tuples;
        for i in 0..t.len() {
            for j in 0..t.len() {
                if i == j || !oracle_pair(&t[i], &t[j], space) {
                    continue;
                }
                let (x, y) = ((t[i].stmt, t[i].thread), (t[j].stmt, t[j].thread));
                if x == y {
                    continue;
                }
                out.insert((
                    model.arrays[unit.address.array].name.clone(),
                    block,
                    unit.address.index,
                    x.min(y),
                    x.max(y),
                ));
            }
        }
    }
    out
}

fn oracle_pair(a: &UnitTuple, b: &UnitTuple, space: MemorySpace) -> bool {
    let write = a.action == Action::Write || b.action == Action::Write;
    if a.thread == b.thread || !write {
        return false;
    }
    if a.thread.block != b.thread.block {
        return space == MemorySpace::Global;
    }
    if a.visit_order != b.visit_order {
        return false;
    }
    let both_write = a.action == Action::Write && b.action == Action::Write;
    a.warp != b.warp || (a.stmt == b.stmt && both_write) || a.diverged || b.diverged
}

pub fn report_keys(model: &MemoryModel, races: &[RaceReport]) -> BTreeSet<PairKey> {
    races
        .iter()
        .map(|r| {
            (
                r.array.clone(),
                r.block.map(|b| b.linear_in(model.grid_dim)),
                r.index,
                (r.first.stmt, r.first.thread),
                (r.second.stmt, r.second.thread),
            )
        })
        .collect()
}

/// f(i) per address: distinct threads, shared addresses split per block.
pub fn oracle_thread_counts(model: &MemoryModel) -> BTreeMap<(Option<u32>, usize, i64), usize> {
    let mut m: BTreeMap<(Option<u32>, usize, i64), BTreeSet<ThreadId>> = BTreeMap::new();
    for (block, unit) in model.units_with_block() {
        for t in &unit.tuples {
            m.entry((block, unit.address.array, unit.address.index))
                .or_default()
                .insert(t.thread);
        }
    }
    m.into_iter().map(|(k, v)| (k, v.len())).collect()
}
