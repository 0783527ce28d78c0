//! Evolutionary search over launch configurations that maximizes access
//! conflicts between threads.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ir::{required_dimensionality, KernelProgram, MemorySpace, ParamKind};
use crate::sim::{construct_memory_model, Dim3, LaunchConfig, SimLimits};

/// Inclusive upper bounds per axis; the lower bound is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimBounds {
    pub grid_max: [u32; 3],
    pub block_max: [u32; 3],
}

impl Default for DimBounds {
    fn default() -> Self {
        Self {
            grid_max: [8; 3],
            block_max: [64; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpConfig {
    pub population: usize,
    pub generations: usize,
    pub threshold: f64,
    pub seed: u64,
    pub bounds: DimBounds,
    /// Initial range of every argument without its own entry.
    pub arg_init: (f64, f64),
    pub arg_init_ranges: BTreeMap<String, (f64, f64)>,
    /// Arguments held at a value and never mutated.
    pub pinned_args: BTreeMap<String, f64>,
    pub limits: SimLimits,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 3,
            threshold: 0.3,
            seed: 0,
            bounds: DimBounds::default(),
            arg_init: (0.0, 64.0),
            arg_init_ranges: BTreeMap::new(),
            pinned_args: BTreeMap::new(),
            limits: SimLimits::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    NoMemoryActivity,
    BudgetExhausted,
    RuntimeError,
    ConfigError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Fitness {
    Valid { primary: f64, secondary: u64 },
    Invalid { reason: InvalidReason },
}

impl Fitness {
    pub fn primary(&self) -> Option<f64> {
        match self {
            Fitness::Valid { primary, .. } => Some(*primary),
            Fitness::Invalid { .. } => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, Fitness::Valid { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub config: LaunchConfig,
    pub fitness: Fitness,
}

/// Scores one launch: the ratio of accessed addresses to distinct
/// (address, thread) pairs, and the span of accessed linear addresses.
pub fn fitness(program: &KernelProgram, config: &LaunchConfig, limits: SimLimits) -> Fitness {
    let invalid = |reason| Fitness::Invalid { reason };
    let outcome = match construct_memory_model(program, config, limits) {
        Ok(o) => o,
        Err(_) => return invalid(InvalidReason::ConfigError),
    };
    if outcome.budget_exhausted {
        return invalid(InvalidReason::BudgetExhausted);
    }
    if outcome.runtime_error.is_some() {
        return invalid(InvalidReason::RuntimeError);
    }
    let model = &outcome.model;
    if outcome.stats.accesses == 0 {
        return invalid(InvalidReason::NoMemoryActivity);
    }

    // linear layout: globals back to back, then one shared segment per block
    let mut offsets = vec![0u64; model.arrays.len()];
    let (mut global_total, mut shared_total) = (0u64, 0u64);
    for (i, a) in model.arrays.iter().enumerate() {
        let total = match a.space {
            MemorySpace::Global => &mut global_total,
            MemorySpace::Shared => &mut shared_total,
        };
        offsets[i] = *total;
        *total += a.size;
    }

    let (mut units, mut accesses) = (0u64, 0u64);
    let (mut lo, mut hi) = (u64::MAX, 0u64);
    for (block, unit) in model.units_with_block() {
        let threads: HashSet<_> = unit.tuples.iter().map(|t| t.thread).collect();
        units += 1;
        accesses += threads.len() as u64;
        let base = match block {
            None => offsets[unit.address.array],
            Some(b) => global_total + u64::from(b) * shared_total + offsets[unit.address.array],
        };
        let linear = base + unit.address.index as u64;
        lo = lo.min(linear);
        hi = hi.max(linear);
    }
    Fitness::Valid {
        primary: units as f64 / accesses as f64,
        secondary: hi - lo,
    }
}

/// `d + step`, clamped to `[1, max]`.
pub fn apply_dimension_step(d: u32, step: i32, max: u32) -> u32 {
    (i64::from(d) + i64::from(step)).clamp(1, i64::from(max.max(1))) as u32
}

/// Adds a step from {-1, 0, 1} to each of the first `axes` axes; the rest become 1.
pub fn mutate_dimensions(dims: Dim3, axes: usize, max: [u32; 3], rng: &mut impl Rng) -> Dim3 {
    let mut out = Dim3::ONE;
    for ((o, &d), &m) in out.0.iter_mut().zip(&dims.0).zip(&max).take(axes) {
        *o = apply_dimension_step(d, rng.random_range(-1..=1), m);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Normal,
    Cauchy,
}

/// Adds one sample of the step distribution to every argument in `mutable`.
pub fn mutate_arguments(
    args: &BTreeMap<String, f64>,
    mutable: &[String],
    kind: StepKind,
    rng: &mut impl Rng,
) -> BTreeMap<String, f64> {
    let cauchy = Cauchy::new(0.0, 1.0).expect("unit scale");
    let mut out = args.clone();
    for name in mutable {
        let step: f64 = match kind {
            StepKind::Normal => StandardNormal.sample(rng),
            StepKind::Cauchy => cauchy.sample(rng),
        };
        if let Some(v) = out.get_mut(name) {
            *v += step;
        }
    }
    out
}

/// Valid before invalid, then ascending primary, then ascending secondary.
pub fn compare_candidates(a: &Candidate, b: &Candidate) -> Ordering {
    match (a.fitness, b.fitness) {
        (
            Fitness::Valid {
                primary: pa,
                secondary: sa,
            },
            Fitness::Valid {
                primary: pb,
                secondary: sb,
            },
        ) => pa.total_cmp(&pb).then(sa.cmp(&sb)),
        (Fitness::Valid { .. }, Fitness::Invalid { .. }) => Ordering::Less,
        (Fitness::Invalid { .. }, Fitness::Valid { .. }) => Ordering::Greater,
        (Fitness::Invalid { .. }, Fitness::Invalid { .. }) => Ordering::Equal,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub best: Fitness,
    pub valid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveResult {
    pub best: Candidate,
    /// Best-first survivors of the last generation run.
    pub population: Vec<Candidate>,
    pub history: Vec<GenerationSummary>,
    /// The best primary fell under the threshold.
    pub accepted: bool,
}

fn candidate_rng(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | index as u64);
    rng
}

struct Search<'a> {
    program: &'a KernelProgram,
    ep: &'a EpConfig,
    grid_axes: usize,
    block_axes: usize,
    mutable: Vec<String>,
}

impl Search<'_> {
    fn random_block(&self, rng: &mut ChaCha8Rng) -> Dim3 {
        let max_threads = u64::from(self.ep.limits.max_threads_per_block);
        let draw = |rng: &mut ChaCha8Rng| {
            let mut d = Dim3::ONE;
            for a in 0..self.block_axes {
                d.0[a] = rng.random_range(1..=self.ep.bounds.block_max[a].max(1));
            }
            d
        };
        for _ in 0..64 {
            let d = draw(rng);
            if d.volume() <= max_threads {
                return d;
            }
        }
        shrink_block(draw(rng), max_threads)
    }

    fn initial(&self, index: usize) -> LaunchConfig {
        let mut rng = candidate_rng(self.ep.seed, 0, index);
        let mut grid = Dim3::ONE;
        for a in 0..self.grid_axes {
            grid.0[a] = rng.random_range(1..=self.ep.bounds.grid_max[a].max(1));
        }
        let block = self.random_block(&mut rng);
        let mut args = BTreeMap::new();
        for p in self.program.scalar_params() {
            let v = if let Some(v) = self.ep.pinned_args.get(&p.name) {
                *v
            } else if let (false, ParamKind::Scalar { default: Some(d), .. }) = (p.is_mutable(), &p.kind) {
                *d
            } else {
                let (lo, hi) = self
                    .ep
                    .arg_init_ranges
                    .get(&p.name)
                    .copied()
                    .unwrap_or(self.ep.arg_init);
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            };
            args.insert(p.name.clone(), v);
        }
        LaunchConfig { grid, block, args }
    }

    fn children(&self, generation: usize, index: usize, parent: &LaunchConfig) -> [LaunchConfig; 2] {
        let mut rng = candidate_rng(self.ep.seed, generation, index);
        let max_threads = u64::from(self.ep.limits.max_threads_per_block);
        [StepKind::Normal, StepKind::Cauchy].map(|kind| {
            let args = mutate_arguments(&parent.args, &self.mutable, kind, &mut rng);
            let grid = mutate_dimensions(parent.grid, self.grid_axes, self.ep.bounds.grid_max, &mut rng);
            let block = mutate_dimensions(parent.block, self.block_axes, self.ep.bounds.block_max, &mut rng);
            LaunchConfig {
                grid,
                block: shrink_block(block, max_threads),
                args,
            }
        })
    }

    fn score(&self, configs: Vec<LaunchConfig>) -> Vec<Candidate> {
        configs
            .into_par_iter()
            .map(|config| Candidate {
                fitness: fitness(self.program, &config, self.ep.limits),
                config,
            })
            .collect()
    }
}

/// Halves the largest axis until the block fits.
fn shrink_block(mut d: Dim3, max_threads: u64) -> Dim3 {
    while d.volume() > max_threads.max(1) {
        let a = (0..3).max_by_key(|&a| (d.0[a], std::cmp::Reverse(a))).unwrap();
        d.0[a] = (d.0[a] / 2).max(1);
    }
    d
}

fn summarize(generation: usize, pop: &[Candidate]) -> GenerationSummary {
    GenerationSummary {
        generation,
        best: pop[0].fitness,
        valid: pop.iter().filter(|c| c.fitness.is_valid()).count(),
    }
}

/// Runs the search. Stops as soon as the best candidate's primary score is
/// below the threshold, checked after seeding and after every generation.
pub fn evolve(program: &KernelProgram, ep: &EpConfig) -> EvolveResult {
    let dims = required_dimensionality(program);
    let search = Search {
        program,
        ep,
        grid_axes: dims.grid_axes,
        block_axes: dims.block_axes,
        mutable: program
            .mutable_params()
            .map(|p| p.name.clone())
            .filter(|n| !ep.pinned_args.contains_key(n))
            .collect(),
    };
    let size = ep.population.max(1);
    let mut pop = search.score((0..size).map(|i| search.initial(i)).collect());
    pop.sort_by(compare_candidates);
    let mut history = vec![summarize(0, &pop)];
    let accepted = |pop: &[Candidate]| pop[0].fitness.primary().is_some_and(|p| p < ep.threshold);

    let mut done = accepted(&pop);
    let mut generation = 0;
    while !done && generation < ep.generations {
        generation += 1;
        let kids: Vec<LaunchConfig> = pop
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, c)| search.children(generation, i, &c.config))
            .collect();
        pop.extend(search.score(kids));
        pop.sort_by(compare_candidates);
        pop.truncate(size);
        history.push(summarize(generation, &pop));
        done = accepted(&pop);
    }
    EvolveResult {
        best: pop[0].clone(),
        accepted: done,
        population: pop,
        history,
    }
}
