use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use simucheck::inputgen::{fitness, EpConfig};
use simucheck::ir::{parse_kernel, KernelProgram};
use simucheck::report::{
    apply_ep_settings, render_text, run_check, run_corpus, run_search, DetectionReport,
    DEFAULT_RACE_LIMIT,
};
use simucheck::sim::{Dim3, LaunchConfig, SimLimits};

/// Finds data races, redundant barriers and barrier divergence in SIMT kernels.
#[derive(Parser)]
#[command(name = "simucheck", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one launch and run all detectors.
    Check {
        kernel: PathBuf,
        #[command(flatten)]
        launch: LaunchArgs,
        #[command(flatten)]
        limits: LimitArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Search for a conflict-heavy launch, then check it.
    Search {
        kernel: PathBuf,
        #[command(flatten)]
        ep: EpArgs,
        #[command(flatten)]
        limits: LimitArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Print the fitness of one launch as JSON.
    Fitness {
        kernel: PathBuf,
        #[command(flatten)]
        launch: LaunchArgs,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Run every kernel of a directory against its `.expected` file.
    Corpus {
        dir: PathBuf,
        /// Write the per-entry summary as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LaunchArgs {
    /// Grid extent, e.g. `2` or `2,1,1`.
    #[arg(long, default_value = "1")]
    grid: Dim3,
    /// Block extent, e.g. `3,2`.
    #[arg(long, default_value = "1")]
    block: Dim3,
    /// Kernel argument `NAME=VALUE`; repeatable.
    #[arg(long = "arg", value_parser = parse_arg)]
    args: Vec<(String, f64)>,
}

#[derive(Args)]
struct LimitArgs {
    #[arg(long)]
    warp_size: Option<u32>,
    /// Statements one thread may execute.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    max_threads_per_block: Option<u32>,
}

impl LimitArgs {
    fn apply(&self, limits: &mut SimLimits) {
        if let Some(w) = self.warp_size {
            limits.warp_size = w;
        }
        if let Some(b) = self.budget {
            limits.budget = b;
        }
        if let Some(m) = self.max_threads_per_block {
            limits.max_threads_per_block = m;
        }
    }
}

#[derive(Args)]
struct EpArgs {
    /// Search settings file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, env = "SIMUCHECK_SEED")]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct OutputArgs {
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// What to print on standard output.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn parse_arg(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn load(path: &Path) -> Result<KernelProgram> {
    let src = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    parse_kernel(&src).map_err(|e| anyhow::anyhow!("{}:{e}", path.display()))
}

fn launch_config(l: &LaunchArgs) -> LaunchConfig {
    let mut c = LaunchConfig::new(l.grid, l.block);
    for (k, v) in &l.args {
        c = c.with_arg(k, *v);
    }
    c
}

fn emit(report: &DetectionReport, output: &OutputArgs) -> Result<ExitCode> {
    if let Some(path) = &output.out {
        std::fs::write(path, report.to_json() + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    match output.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => print!("{}", render_text(report)),
    }
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check {
            kernel,
            launch,
            limits,
            output,
        } => {
            let program = load(&kernel)?;
            let mut lim = SimLimits::default();
            limits.apply(&mut lim);
            let report = run_check(&program, &launch_config(&launch), lim, DEFAULT_RACE_LIMIT)?;
            if let Some(e) = &report.runtime_error {
                eprintln!("error: runtime fault during simulation: {e}");
            }
            emit(&report, &output)
        }
        Command::Search {
            kernel,
            ep,
            limits,
            output,
        } => {
            let program = load(&kernel)?;
            let mut cfg = EpConfig::default();
            if let Some(path) = &ep.config {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                apply_ep_settings(&mut cfg, &text)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            }
            if let Some(p) = ep.population {
                cfg.population = p;
            }
            if let Some(g) = ep.generations {
                cfg.generations = g;
            }
            if let Some(t) = ep.threshold {
                cfg.threshold = t;
            }
            if let Some(s) = ep.seed {
                cfg.seed = s;
            }
            limits.apply(&mut cfg.limits);
            if cfg.population == 0 {
                bail!("population must be at least 1");
            }
            if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
                bail!("threshold must lie in (0, 1)");
            }
            if !(1..=64).contains(&cfg.limits.warp_size) {
                bail!("warp size must be between 1 and 64");
            }
            let report = run_search(&program, &cfg, DEFAULT_RACE_LIMIT);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(&report, &output)
        }
        Command::Fitness {
            kernel,
            launch,
            limits,
        } => {
            let program = load(&kernel)?;
            let mut lim = SimLimits::default();
            limits.apply(&mut lim);
            let f = fitness(&program, &launch_config(&launch), lim);
            println!("{}", serde_json::to_string_pretty(&f)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Corpus { dir, out } => {
            if !dir.is_dir() {
                bail!("{} is not a directory", dir.display());
            }
            let summary = run_corpus(&dir)?;
            println!("{summary}");
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            Ok(if summary.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are tool errors, not findings
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
