//! Random kernels whose control flow and addresses depend only on thread
//! ids and loop counters, so loaded values never steer execution.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use simucheck::sim::{Dim3, LaunchConfig};

pub struct RandomKernel {
    pub source: String,
    pub config: LaunchConfig,
    pub warp_size: u32,
    pub barriers: usize,
}

struct Gen {
    rng: StdRng,
    out: String,
    barriers: usize,
    max_barriers: usize,
    loops: usize,
    shared: u32,
    global: u32,
}

impl Gen {
    fn line(&mut self, depth: usize, s: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn index(&mut self, size: u32) -> String {
        let a = self.rng.random_range(0..4);
        let b = self.rng.random_range(0..size);
        match self.rng.random_range(0..3) {
            0 => format!("(tid * {a} + {b}) % {size}"),
            1 => format!("(tid / {} + {b}) % {size}", a + 1),
            _ => format!("{b}"),
        }
    }

    fn array(&mut self) -> (&'static str, u32) {
        if self.rng.random_bool(0.5) {
            ("s", self.shared)
        } else {
            ("g", self.global)
        }
    }

    fn block(&mut self, depth: usize, len: usize) {
        for _ in 0..len {
            self.stmt(depth);
        }
    }

    fn stmt(&mut self, depth: usize) {
        let roll = self.rng.random_range(0..100);
        if roll < 30 {
            let (a, n) = self.array();
            let i = self.index(n);
            self.line(depth, &format!("{a}[{i}] = tid;"));
        } else if roll < 55 {
            let (a, n) = self.array();
            let i = self.index(n);
            self.line(depth, &format!("v = {a}[{i}];"));
        } else if roll < 70 && self.barriers < self.max_barriers {
            let id = self.barriers;
            self.barriers += 1;
            self.line(depth, &format!("sync b{id};"));
        } else if roll < 85 && depth < 3 {
            let cond = match self.rng.random_range(0..3) {
                0 => format!("tid < {}", self.rng.random_range(0..40)),
                1 => format!("tid % {} == 0", self.rng.random_range(2..5)),
                _ => "tid >= 0".to_string(),
            };
            self.line(depth, &format!("if ({cond}) {{"));
            let n = self.rng.random_range(1..3);
            self.block(depth + 1, n);
            if self.rng.random_bool(0.4) {
                self.line(depth, "} else {");
                let n = self.rng.random_range(1..3);
                self.block(depth + 1, n);
            }
            self.line(depth, "}");
        } else if depth < 3 && self.loops < 2 {
            let k = format!("k{}", self.loops);
            self.loops += 1;
            let bound = if self.rng.random_bool(0.5) {
                format!("{}", self.rng.random_range(1..4))
            } else {
                format!("tid % {} + 1", self.rng.random_range(1..4))
            };
            self.line(depth, &format!("{k} = 0;"));
            self.line(depth, &format!("while ({k} < {bound}) {{"));
            let n = self.rng.random_range(1..3);
            self.block(depth + 1, n);
            self.line(depth + 1, &format!("{k} = {k} + 1;"));
            self.line(depth, "}");
        } else {
            let (a, n) = self.array();
            let i = self.index(n);
            self.line(depth, &format!("{a}[{i}] = tid + 1;"));
        }
    }
}

/// A kernel with at most `max_barriers` barriers and at most 64 threads in total.
pub fn random_kernel(seed: u64, max_barriers: usize) -> RandomKernel {
    let mut rng = StdRng::seed_from_u64(seed);
    let shared = rng.random_range(1..9);
    let global = rng.random_range(1..9);
    let bx = rng.random_range(1..17u32);
    let by = rng.random_range(1..(32 / bx).clamp(1, 4) + 1);
    let gx = rng.random_range(1..(64 / (bx * by)).clamp(1, 2) + 1);
    let warp_size = [2, 4, 8, 32][rng.random_range(0..4)];
    let mut g = Gen {
        rng,
        out: String::new(),
        barriers: 0,
        max_barriers,
        loops: 0,
        shared,
        global,
    };
    g.line(0, "kernel rk() {");
    g.line(1, &format!("shared int s[{shared}];"));
    g.line(1, &format!("global int g[{global}];"));
    g.line(1, "tid = threadIdx.x + threadIdx.y * blockDim.x;");
    g.line(1, "v = 0;");
    let n = g.rng.random_range(2..8);
    g.block(1, n);
    g.line(0, "}");
    RandomKernel {
        source: g.out,
        config: LaunchConfig::new(Dim3::new(gx, 1, 1), Dim3::new(bx, by, 1)),
        warp_size,
        barriers: g.barriers,
    }
}
