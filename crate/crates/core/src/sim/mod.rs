//! SIMT simulation of a kernel launch.
//!
//! Blocks run one after another. Inside a block, warps take turns executing
//! one statement each; the lanes of a warp run in lockstep and reconverge at
//! the end of the `if`/`while` they diverged in. Every load and store is
//! recorded into the [`MemoryModel`].

mod engine;
mod eval;
mod model;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ir::KernelProgram;

pub use eval::{evaluate_expr, float_to_int, RuntimeError, ThreadEnv, Value};
pub use model::{Action, Address, ArrayInfo, MemoryModel, MemoryUnit, ThreadId, UnitTuple};

/// Three-component extent or index, `x` first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dim3(pub [u32; 3]);

impl Dim3 {
    pub const ONE: Dim3 = Dim3([1, 1, 1]);

    pub fn new(x: u32, y: u32, z: u32) -> Self {
        Dim3([x, y, z])
    }

    pub fn x(self) -> u32 {
        self.0[0]
    }

    pub fn y(self) -> u32 {
        self.0[1]
    }

    pub fn z(self) -> u32 {
        self.0[2]
    }

    /// Total number of elements, saturating.
    pub fn volume(self) -> u64 {
        self.0.iter().map(|&v| u64::from(v)).product()
    }

    /// Linear position of index `self` inside extent `extent` (x fastest).
    pub fn linear_in(self, extent: Dim3) -> u32 {
        self.x() + self.y() * extent.x() + self.z() * extent.x() * extent.y()
    }

    pub fn from_linear(linear: u32, extent: Dim3) -> Dim3 {
        let (ex, ey) = (extent.x(), extent.y());
        Dim3([linear % ex, (linear / ex) % ey, linear / (ex * ey)])
    }
}

impl fmt::Display for Dim3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for Dim3 {
    type Err = String;

    /// `"3"`, `"3,2"` or `"3,2,1"`; missing axes are 1.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.is_empty() || parts.len() > 3 {
            return Err(format!("expected 1 to 3 comma-separated extents, got `{s}`"));
        }
        let mut d = [1u32; 3];
        for (slot, p) in d.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| format!("`{p}` is not a non-negative integer"))?;
        }
        Ok(Dim3(d))
    }
}

/// Grid and block extents plus scalar argument values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchConfig {
    pub grid: Dim3,
    pub block: Dim3,
    pub args: BTreeMap<String, f64>,
}

impl LaunchConfig {
    pub fn new(grid: Dim3, block: Dim3) -> Self {
        Self {
            grid,
            block,
            args: BTreeMap::new(),
        }
    }

    pub fn with_arg(mut self, name: &str, value: f64) -> Self {
        self.args.insert(name.to_string(), value);
        self
    }
}

impl fmt::Display for LaunchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "grid {} block {}", self.grid, self.block)?;
        for (k, v) in &self.args {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimLimits {
    pub warp_size: u32,
    /// Statements a single thread may execute before the run is abandoned.
    pub budget: u64,
    pub max_threads_per_block: u32,
}

impl Default for SimLimits {
    fn default() -> Self {
        Self {
            warp_size: 32,
            budget: 1_000_000,
            max_threads_per_block: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("grid and block extents must be at least 1, got grid {grid} block {block}")]
    ZeroExtent { grid: Dim3, block: Dim3 },
    #[error("block of {threads} threads exceeds the limit of {max}")]
    TooManyThreads { threads: u64, max: u32 },
    #[error("warp size must be between 1 and 64, got {0}")]
    BadWarpSize(u32),
    #[error("no value for kernel argument `{0}`")]
    MissingArg(String),
    #[error("kernel has no scalar parameter `{0}`")]
    UnknownArg(String),
    #[error("argument `{0}` is not a finite number")]
    NonFiniteArg(String),
}

/// Linear id of a thread in its block and the warp it belongs to.
pub fn flatten_thread(thread: Dim3, block_dim: Dim3, warp_size: u32) -> (u32, u32) {
    let linear = thread.linear_in(block_dim);
    (linear, linear / warp_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// A thread exited while a blockmate waited at a barrier.
    ExitWhileWaiting,
    /// Some live threads of the block can never reach the barrier the others wait at.
    PartialArrival,
    /// Threads of one block wait at different barriers.
    MismatchedBarriers,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceSite {
    pub block: Dim3,
    pub barrier: String,
    pub kind: DivergenceKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    /// Executed load and store instances.
    pub accesses: u64,
    pub blocks_run: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub model: MemoryModel,
    pub barrier_divergence: bool,
    /// First divergence found, if any.
    pub divergence: Option<DivergenceSite>,
    pub budget_exhausted: bool,
    /// First runtime fault; the faulting block stops, later blocks still run.
    pub runtime_error: Option<RuntimeError>,
    pub stats: SimStats,
}

/// Configurable simulation run. [`construct_memory_model`] covers the usual case.
pub struct Simulator<'p> {
    program: &'p KernelProgram,
    config: &'p LaunchConfig,
    limits: SimLimits,
    block_order: Option<Vec<u32>>,
}

impl<'p> Simulator<'p> {
    pub fn new(program: &'p KernelProgram, config: &'p LaunchConfig, limits: SimLimits) -> Self {
        Self {
            program,
            config,
            limits,
            block_order: None,
        }
    }

    /// Runs blocks in the given order of linear block indices instead of 0..n.
    /// Must be a permutation of all blocks.
    pub fn block_order(mut self, order: Vec<u32>) -> Self {
        self.block_order = Some(order);
        self
    }

    pub fn run(self) -> Result<SimOutcome, ConfigError> {
        engine::run(self.program, self.config, self.limits, self.block_order)
    }
}

/// Simulates one launch and builds its memory model.
pub fn construct_memory_model(
    program: &KernelProgram,
    config: &LaunchConfig,
    limits: SimLimits,
) -> Result<SimOutcome, ConfigError> {
    Simulator::new(program, config, limits).run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_examples() {
        assert_eq!(flatten_thread(Dim3::new(1, 0, 0), Dim3::new(3, 2, 1), 32), (1, 0));
        assert_eq!(flatten_thread(Dim3::new(0, 1, 0), Dim3::new(3, 2, 1), 32), (3, 0));
        assert_eq!(flatten_thread(Dim3::new(31, 1, 0), Dim3::new(32, 2, 1), 32), (63, 1));
    }

    #[test]
    fn linear_round_trip() {
        let ext = Dim3::new(3, 4, 5);
        for l in 0..60 {
            assert_eq!(Dim3::from_linear(l, ext).linear_in(ext), l);
        }
    }

    #[test]
    fn dim3_parsing() {
        assert_eq!("3".parse::<Dim3>().unwrap(), Dim3::new(3, 1, 1));
        assert_eq!("3, 2".parse::<Dim3>().unwrap(), Dim3::new(3, 2, 1));
        assert_eq!("1,2,3".parse::<Dim3>().unwrap(), Dim3::new(1, 2, 3));
        assert!("1,2,3,4".parse::<Dim3>().is_err());
        assert!("x".parse::<Dim3>().is_err());
    }
}
