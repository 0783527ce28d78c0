use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::{DivergenceSite, MemoryModel, MemoryUnit, SimOutcome, UnitTuple};

use super::race::{distinct_tuples, unordered_same_block};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BarrierVerdict {
    pub barrier: String,
    pub redundant: bool,
    /// Visit-order increments whose removal would create no race.
    pub credited: u64,
    pub total_increments: u64,
}

/// Judges every barrier of the kernel, in sorted id order.
///
/// Each visit-order increment a barrier caused is credited when merging the
/// access groups it separated (together with neighbouring groups split by the
/// same barrier) produces no racing pair. A barrier is redundant when all of
/// its increments are credited; one that never split anything is redundant.
/// A barrier a block got stuck at is never redundant.
pub fn detect_redundant_barriers(model: &MemoryModel) -> Vec<BarrierVerdict> {
    let mut credited: BTreeMap<usize, u64> = BTreeMap::new();
    for (block, unit) in model.units_with_block() {
        match block {
            Some(b) => credit_unit(model, unit, b, &mut credited),
            None => {
                for &b in unit.splits.keys() {
                    credit_unit(model, unit, b, &mut credited);
                }
            }
        }
    }
    model
        .barriers
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let total = model.barrier_increments.get(name).copied().unwrap_or(0);
            let credited = credited.get(&i).copied().unwrap_or(0);
            BarrierVerdict {
                barrier: name.clone(),
                redundant: credited == total && !model.divergent_barriers.contains(name),
                credited,
                total_increments: total,
            }
        })
        .collect()
}

fn credit_unit(model: &MemoryModel, unit: &MemoryUnit, block: u32, credited: &mut BTreeMap<usize, u64>) {
    let Some(splits) = unit.splits.get(&block) else {
        return;
    };
    let tuples: Vec<UnitTuple> = distinct_tuples(unit)
        .into_iter()
        .filter(|t| t.thread.block.linear_in(model.grid_dim) == block)
        .collect();
    let mut v = 0;
    while v < splits.len() {
        let barrier = splits[v];
        let mut end = v;
        while end + 1 < splits.len() && splits[end + 1] == barrier {
            end += 1;
        }
        // groups v..=end+1 become one without the barrier
        let (lo, hi) = (v as u32, end as u32 + 1);
        let merged: Vec<&UnitTuple> = tuples
            .iter()
            .filter(|t| (lo..=hi).contains(&t.visit_order))
            .collect();
        if !merge_races(&merged) {
            *credited.entry(barrier).or_default() += (end - v + 1) as u64;
        }
        v = end + 1;
    }
}

/// Whether two tuples from different visit orders race once orders are ignored.
fn merge_races(tuples: &[&UnitTuple]) -> bool {
    tuples.iter().filter(|w| w.is_write()).any(|w| {
        tuples
            .iter()
            .any(|t| t.visit_order != w.visit_order && unordered_same_block(w, t))
    })
}

/// The divergence the simulation observed, if any.
pub fn detect_barrier_divergence(outcome: &SimOutcome) -> Option<&DivergenceSite> {
    outcome.divergence.as_ref()
}
