#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use std::path::PathBuf;

use simucheck::ir::{parse_kernel, KernelProgram};
use simucheck::sim::{construct_memory_model, Dim3, LaunchConfig, SimLimits, SimOutcome};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus_kernel(name: &str) -> KernelProgram {
    let src = std::fs::read_to_string(corpus_dir().join(format!("{name}.mir"))).unwrap();
    parse_kernel(&src).unwrap()
}

pub fn kernel(src: &str) -> KernelProgram {
    parse_kernel(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

pub fn launch(grid: [u32; 3], block: [u32; 3], args: &[(&str, f64)]) -> LaunchConfig {
    let mut c = LaunchConfig::new(Dim3(grid), Dim3(block));
    for (k, v) in args {
        c = c.with_arg(k, *v);
    }
    c
}

pub fn simulate(k: &KernelProgram, cfg: &LaunchConfig) -> SimOutcome {
    construct_memory_model(k, cfg, SimLimits::default()).unwrap()
}

pub fn simulate_warp(k: &KernelProgram, cfg: &LaunchConfig, warp_size: u32) -> SimOutcome {
    let limits = SimLimits {
        warp_size,
        ..SimLimits::default()
    };
    construct_memory_model(k, cfg, limits).unwrap()
}
