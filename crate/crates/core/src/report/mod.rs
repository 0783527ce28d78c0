//! Check and search pipelines, the detection report and its renderings.

mod corpus;
mod kv;
mod text;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detect::{
    detect_barrier_divergence, detect_data_races_bounded, detect_redundant_barriers,
    BarrierVerdict, RaceReport,
};
use crate::inputgen::{evolve, fitness, EpConfig, Fitness, GenerationSummary, InvalidReason};
use crate::ir::KernelProgram;
use crate::sim::{
    construct_memory_model, ConfigError, DivergenceSite, LaunchConfig, RuntimeError, SimLimits,
};

pub use corpus::{run_corpus, CorpusEntry, CorpusStatus, CorpusSummary};
pub use kv::{apply_ep_settings, parse_key_values, Expected, KvError};
pub use text::render_text;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Races kept in a report; the rest only set `races_truncated`.
pub const DEFAULT_RACE_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Clean,
    RedundantBarrier,
    Race,
    BarrierDivergence,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Clean => "clean",
            Verdict::RedundantBarrier => "redundant_barrier",
            Verdict::Race => "race",
            Verdict::BarrierDivergence => "barrier_divergence",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Verdict::Clean,
            Verdict::RedundantBarrier,
            Verdict::Race,
            Verdict::BarrierDivergence,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| format!("unknown verdict `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Check,
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub population: usize,
    pub generations: usize,
    pub threshold: f64,
    pub accepted: bool,
    pub history: Vec<GenerationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub kernel: String,
    pub mode: Mode,
    pub config: LaunchConfig,
    pub limits: SimLimits,
    pub verdict: Verdict,
    pub races: Vec<RaceReport>,
    pub races_truncated: bool,
    pub redundant_barriers: Vec<BarrierVerdict>,
    pub barrier_divergence: bool,
    pub divergence: Option<DivergenceSite>,
    pub runtime_error: Option<RuntimeError>,
    pub budget_exhausted: bool,
    pub fitness: Fitness,
    pub search: Option<SearchSummary>,
    pub warnings: Vec<String>,
    pub rng_seed: Option<u64>,
    pub tool_version: String,
    pub timing_ms: f64,
}

impl DetectionReport {
    /// 0 clean, 2 bugs found, 1 when the check itself could not complete.
    pub fn exit_code(&self) -> i32 {
        if self.mode == Mode::Check && (self.runtime_error.is_some() || self.budget_exhausted) {
            1
        } else if self.verdict == Verdict::Clean {
            0
        } else {
            2
        }
    }

    /// Key-sorted pretty JSON including the timing.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    /// Key-sorted JSON without `timing_ms`; equal runs give equal bytes.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("timing_ms");
        }
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn redundant_names(&self) -> Vec<&str> {
        self.redundant_barriers
            .iter()
            .filter(|b| b.redundant)
            .map(|b| b.barrier.as_str())
            .collect()
    }
}

fn verdict_of(divergence: bool, races: bool, redundant: bool) -> Verdict {
    if divergence {
        Verdict::BarrierDivergence
    } else if races {
        Verdict::Race
    } else if redundant {
        Verdict::RedundantBarrier
    } else {
        Verdict::Clean
    }
}

/// One simulation plus all three detectors.
pub fn run_check(
    program: &KernelProgram,
    config: &LaunchConfig,
    limits: SimLimits,
    race_limit: usize,
) -> Result<DetectionReport, ConfigError> {
    let start = Instant::now();
    let outcome = construct_memory_model(program, config, limits)?;
    let races = detect_data_races_bounded(&outcome.model, race_limit);
    let barriers = detect_redundant_barriers(&outcome.model);
    let divergence = detect_barrier_divergence(&outcome).cloned();
    let verdict = verdict_of(
        divergence.is_some(),
        !races.races.is_empty(),
        barriers.iter().any(|b| b.redundant),
    );
    let mut warnings = Vec::new();
    if outcome.stats.accesses == 0 {
        warnings.push("no memory activity".to_string());
    }
    if outcome.budget_exhausted {
        warnings.push("instruction budget exhausted; results are partial".to_string());
    }
    Ok(DetectionReport {
        kernel: program.name.clone(),
        mode: Mode::Check,
        config: config.clone(),
        limits,
        verdict,
        races: races.races,
        races_truncated: races.truncated,
        redundant_barriers: barriers,
        barrier_divergence: divergence.is_some(),
        divergence,
        runtime_error: outcome.runtime_error,
        budget_exhausted: outcome.budget_exhausted,
        fitness: fitness(program, config, limits),
        search: None,
        warnings,
        rng_seed: None,
        tool_version: TOOL_VERSION.to_string(),
        timing_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Searches for a conflict-heavy launch, then checks the best one found.
pub fn run_search(program: &KernelProgram, ep: &EpConfig, race_limit: usize) -> DetectionReport {
    let start = Instant::now();
    let result = evolve(program, ep);
    let best = &result.best;
    let mut report = match run_check(program, &best.config, ep.limits, race_limit) {
        Ok(r) => r,
        // candidates are generated inside the limits; an unusable one is a bug
        Err(e) => panic!("search produced an unusable launch {}: {e}", best.config),
    };
    report.mode = Mode::Search;
    report.rng_seed = Some(ep.seed);
    report.search = Some(SearchSummary {
        population: ep.population,
        generations: ep.generations,
        threshold: ep.threshold,
        accepted: result.accepted,
        history: result.history,
    });
    if let Fitness::Invalid { reason } = best.fitness {
        let w = match reason {
            InvalidReason::NoMemoryActivity => "no candidate showed memory activity",
            InvalidReason::BudgetExhausted => "every candidate exhausted the instruction budget",
            InvalidReason::RuntimeError => "every candidate hit a runtime error",
            InvalidReason::ConfigError => "no candidate formed a usable launch",
        };
        report.warnings.push(w.to_string());
    }
    report.warnings.dedup();
    report.timing_ms = start.elapsed().as_secs_f64() * 1e3;
    report
}
