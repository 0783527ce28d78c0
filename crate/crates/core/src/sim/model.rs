//! The memory model: one unit per accessed address, each holding the
//! ordered access tuples observed during simulation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::{MemorySpace, StmtId};

use super::Dim3;

/// A thread's identity within the launch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ThreadId {
    pub block: Dim3,
    pub thread: Dim3,
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.thread, self.block)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Read,
    Write,
}

/// One access: `<visit order, thread index, action>` plus the statement,
/// warp and divergence state it happened under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTuple {
    pub visit_order: u32,
    pub thread: ThreadId,
    pub action: Action,
    pub stmt: StmtId,
    /// Block-local warp number.
    pub warp: u32,
    /// The warp was inside an unresolved branch divergence.
    pub diverged: bool,
}

impl UnitTuple {
    pub fn is_write(&self) -> bool {
        self.action == Action::Write
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address {
    /// Index into [`MemoryModel::arrays`].
    pub array: usize,
    pub index: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryUnit {
    pub address: Address,
    pub tuples: Vec<UnitTuple>,
    /// Per block (linear index): `splits[b][v]` is the barrier that moved
    /// this address from visit order `v` to `v + 1` in block `b`.
    pub splits: BTreeMap<u32, Vec<usize>>,
}

impl MemoryUnit {
    pub(crate) fn new(address: Address) -> Self {
        Self {
            address,
            tuples: Vec::new(),
            splits: BTreeMap::new(),
        }
    }

    pub fn split_barrier(&self, block: u32, order: u32) -> Option<usize> {
        self.splits.get(&block)?.get(order as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub space: MemorySpace,
    /// Evaluated element count.
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub arrays: Vec<ArrayInfo>,
    /// Every barrier id of the kernel, sorted.
    pub barriers: Vec<String>,
    pub grid_dim: Dim3,
    pub block_dim: Dim3,
    pub global_units: BTreeMap<Address, MemoryUnit>,
    /// Shared-memory units keyed by linear block index.
    pub shared_units: BTreeMap<u32, BTreeMap<Address, MemoryUnit>>,
    /// Visit-order increments caused by each barrier, summed over addresses and blocks.
    pub barrier_increments: BTreeMap<String, u64>,
    /// Barriers some block was stuck at when divergence was detected.
    pub divergent_barriers: BTreeSet<String>,
}

impl MemoryModel {
    pub fn array_name(&self, a: Address) -> &str {
        &self.arrays[a.array].name
    }

    pub fn space(&self, a: Address) -> MemorySpace {
        self.arrays[a.array].space
    }

    /// Global units first, then shared units block by block.
    pub fn units(&self) -> impl Iterator<Item = &MemoryUnit> {
        self.global_units
            .values()
            .chain(self.shared_units.values().flat_map(|m| m.values()))
    }

    /// Like [`units`](Self::units) but with the owning block for shared units.
    pub fn units_with_block(&self) -> impl Iterator<Item = (Option<u32>, &MemoryUnit)> {
        self.global_units.values().map(|u| (None, u)).chain(
            self.shared_units
                .iter()
                .flat_map(|(b, m)| m.values().map(move |u| (Some(*b), u))),
        )
    }

    pub fn tuple_count(&self) -> usize {
        self.units().map(|u| u.tuples.len()).sum()
    }

    /// Copy keeping only the tuples accepted by `keep`; empty units are dropped.
    pub fn filter_tuples(&self, mut keep: impl FnMut(&UnitTuple) -> bool) -> MemoryModel {
        let mut out = self.clone();
        let mut filt = |units: &mut BTreeMap<Address, MemoryUnit>| {
            for u in units.values_mut() {
                u.tuples.retain(&mut keep);
            }
            units.retain(|_, u| !u.tuples.is_empty());
        };
        filt(&mut out.global_units);
        for m in out.shared_units.values_mut() {
            filt(m);
        }
        out.shared_units.retain(|_, m| !m.is_empty());
        out
    }
}
