//! Data-race, redundant-barrier and barrier-divergence detection over a
//! simulated memory model.

mod barrier;
mod race;

pub use barrier::{detect_barrier_divergence, detect_redundant_barriers, BarrierVerdict};
pub use race::{
    detect_data_races, detect_data_races_bounded, tuples_race, RaceAccess, RaceKind, RaceReport,
    RaceScope, RaceSet,
};
