mod common;

use common::gen::random_kernel;
use common::*;
use proptest::prelude::*;
use simucheck::ir::MemorySpace;
use simucheck::sim::{
    construct_memory_model, Action, ConfigError, Dim3, DivergenceKind, LaunchConfig, SimLimits,
    Simulator,
};

fn tuples_at(o: &simucheck::sim::SimOutcome, array: &str, index: i64) -> Vec<(u32, Dim3, Action)> {
    o.model
        .units()
        .filter(|u| o.model.array_name(u.address) == array && u.address.index == index)
        .flat_map(|u| u.tuples.iter().map(|t| (t.visit_order, t.thread.thread, t.action)))
        .collect()
}

#[test]
fn barrier_splits_visit_orders() {
    let k = kernel(
        "kernel k() {
           shared a[1];
           if (threadIdx.x > 0) { v = a[0]; }
           sync s;
           if (threadIdx.x == 3) { w = a[0]; }
         }",
    );
    let o = simulate(&k, &launch([1, 1, 1], [4, 1, 1], &[]));
    let t = tuples_at(&o, "a", 0);
    assert_eq!(
        t,
        vec![
            (0, Dim3::new(1, 0, 0), Action::Read),
            (0, Dim3::new(2, 0, 0), Action::Read),
            (0, Dim3::new(3, 0, 0), Action::Read),
            (1, Dim3::new(3, 0, 0), Action::Read),
        ]
    );
    assert_eq!(o.model.barrier_increments["s"], 1);
    assert!(!o.barrier_divergence);
}

#[test]
fn single_thread_store() {
    let k = kernel("kernel k() { global a[1]; a[0] = 1; }");
    let o = simulate(&k, &launch([1, 1, 1], [1, 1, 1], &[]));
    assert_eq!(o.model.tuple_count(), 1);
    let u = o.model.units().next().unwrap();
    assert_eq!(u.tuples[0].visit_order, 0);
    assert!(u.tuples[0].is_write());
    assert_eq!(o.stats.accesses, 1);
}

#[test]
fn warps_and_divergence_flags() {
    let k = kernel(
        "kernel k() {
           shared a[8];
           if (threadIdx.x < 2) { a[threadIdx.x] = 1; }
           a[threadIdx.x + 2] = 2;
         }",
    );
    let o = simulate_warp(&k, &launch([1, 1, 1], [4, 1, 1], &[]), 2);
    for u in o.model.units() {
        for t in &u.tuples {
            let linear = t.thread.thread.x();
            assert_eq!(t.warp, linear / 2);
            // warp 0 takes the branch uniformly, warp 1 skips it
            assert!(!t.diverged);
        }
    }
    let o = simulate_warp(&k, &launch([1, 1, 1], [4, 1, 1], &[]), 4);
    let diverged: Vec<bool> = o
        .model
        .units()
        .flat_map(|u| u.tuples.iter())
        .filter(|t| t.stmt.0 == 2)
        .map(|t| t.diverged)
        .collect();
    assert_eq!(diverged, vec![true, true]);
}

#[test]
fn barrier_in_divergent_branch() {
    let k = kernel("kernel k() { if (threadIdx.x < 2) { sync b; } }");
    let o = simulate(&k, &launch([1, 1, 1], [4, 1, 1], &[]));
    let d = o.divergence.expect("divergence");
    assert_eq!(d.kind, DivergenceKind::PartialArrival);
    assert_eq!(d.barrier, "b");
    // one warp per half: the second half finishes while the first waits
    let o = simulate_warp(&k, &launch([1, 1, 1], [4, 1, 1], &[]), 2);
    assert_eq!(o.divergence.unwrap().kind, DivergenceKind::ExitWhileWaiting);
    assert!(o.model.divergent_barriers.contains("b"));
}

#[test]
fn mismatched_barriers() {
    let k = kernel("kernel k() { if (threadIdx.x < 2) { sync a; } else { sync b; } }");
    let o = simulate_warp(&k, &launch([1, 1, 1], [4, 1, 1], &[]), 2);
    assert_eq!(o.divergence.unwrap().kind, DivergenceKind::MismatchedBarriers);
}

#[test]
fn uniform_barrier_in_branch_is_fine() {
    let k = kernel("kernel k(int n) { if (n > 0) { sync b; } }");
    let o = simulate(&k, &launch([2, 1, 1], [64, 1, 1], &[("n", 1.0)]));
    assert!(!o.barrier_divergence);
}

#[test]
fn early_return_before_barrier_diverges() {
    let k = kernel("kernel k() { if (threadIdx.x == 0) { return; } sync b; }");
    for ws in [1, 32] {
        let o = simulate_warp(&k, &launch([1, 1, 1], [4, 1, 1], &[]), ws);
        assert!(o.barrier_divergence, "warp size {ws}");
    }
}

#[test]
fn runtime_errors_halt_the_block() {
    let k = kernel("kernel k() { global a[2]; a[threadIdx.x] = 1; }");
    let o = simulate(&k, &launch([1, 1, 1], [3, 1, 1], &[]));
    let e = o.runtime_error.expect("out of bounds");
    assert!(e.to_string().contains("a[2]"), "{e}");
    let k = kernel("kernel k(int d) { global a[1]; a[0] = 1 / d; }");
    let o = simulate(&k, &launch([2, 1, 1], [1, 1, 1], &[("d", 0.0)]));
    assert!(o.runtime_error.is_some());
    assert_eq!(o.stats.blocks_run, 2);
}

#[test]
fn budget_exhaustion() {
    let k = kernel("kernel k() { i = 0; while (i >= 0) { i = i + 1; } }");
    let limits = SimLimits {
        budget: 500,
        ..SimLimits::default()
    };
    let o = construct_memory_model(&k, &launch([1, 1, 1], [1, 1, 1], &[]), limits).unwrap();
    assert!(o.budget_exhausted);
}

#[test]
fn config_errors() {
    let k = kernel("kernel k(int n) { global a[n]; }");
    let lim = SimLimits::default();
    let err = |c: LaunchConfig| construct_memory_model(&k, &c, lim).unwrap_err();
    assert!(matches!(err(launch([1, 1, 1], [1, 1, 1], &[])), ConfigError::MissingArg(_)));
    assert!(matches!(
        err(launch([1, 1, 1], [1, 1, 1], &[("n", 1.0), ("m", 2.0)])),
        ConfigError::UnknownArg(_)
    ));
    assert!(matches!(
        err(launch([0, 1, 1], [1, 1, 1], &[("n", 1.0)])),
        ConfigError::ZeroExtent { .. }
    ));
    assert!(matches!(
        err(launch([1, 1, 1], [64, 32, 1], &[("n", 1.0)])),
        ConfigError::TooManyThreads { .. }
    ));
    assert!(matches!(
        err(launch([1, 1, 1], [1, 1, 1], &[("n", f64::NAN)])),
        ConfigError::NonFiniteArg(_)
    ));
}

#[test]
fn int_arguments_truncate_and_defaults_apply() {
    let k = kernel("kernel k(int n, fixed int m = 3) { global a[n + m]; a[n + m - 1] = 1; }");
    let o = simulate(&k, &launch([1, 1, 1], [1, 1, 1], &[("n", 2.9)]));
    assert_eq!(o.model.arrays[0].size, 5);
    assert_eq!(o.model.units().next().unwrap().address.index, 4);
}

#[test]
fn shared_memory_is_per_block() {
    let k = kernel("kernel k() { shared s[1]; s[0] = threadIdx.x; }");
    let o = simulate(&k, &launch([3, 1, 1], [1, 1, 1], &[]));
    assert_eq!(o.model.shared_units.len(), 3);
    assert!(o.model.units().all(|u| u.tuples.len() == 1));
    assert!(o.model.arrays.iter().all(|a| a.space == MemorySpace::Shared));
}

#[test]
fn loops_reconverge() {
    let k = kernel(
        "kernel k() {
           shared a[64];
           i = 0;
           while (i < threadIdx.x) { i = i + 1; }
           a[i] = 1;
         }",
    );
    let o = simulate(&k, &launch([1, 1, 1], [4, 1, 1], &[]));
    // after the loop the warp is whole again
    assert!(o.model.units().flat_map(|u| &u.tuples).all(|t| !t.diverged));
    assert_eq!(o.model.units().count(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let rk = random_kernel(seed, 4);
        let k = kernel(&rk.source);
        let a = simulate_warp(&k, &rk.config, rk.warp_size);
        let b = simulate_warp(&k, &rk.config, rk.warp_size);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_access_is_recorded_once(seed in any::<u64>()) {
        let rk = random_kernel(seed, 4);
        let k = kernel(&rk.source);
        let o = simulate_warp(&k, &rk.config, rk.warp_size);
        prop_assert_eq!(o.stats.accesses as usize, o.model.tuple_count());
    }

    #[test]
    fn visit_orders_never_decrease_per_thread(seed in any::<u64>()) {
        let rk = random_kernel(seed, 4);
        let k = kernel(&rk.source);
        let o = simulate_warp(&k, &rk.config, rk.warp_size);
        for u in o.model.units() {
            let mut last = std::collections::HashMap::new();
            for t in &u.tuples {
                let prev = last.insert(t.thread, t.visit_order).unwrap_or(0);
                prop_assert!(t.visit_order >= prev);
            }
            // orders split by barriers exist for every step
            let max = u.tuples.iter().map(|t| t.visit_order).max().unwrap();
            let blocks: Vec<u32> = u.splits.keys().copied().collect();
            let longest = blocks.iter().map(|b| u.splits[b].len()).max().unwrap_or(0);
            prop_assert!(max as usize <= longest);
        }
        let splits: usize = o.model.units().map(|u| u.splits.values().map(Vec::len).sum::<usize>()).sum();
        prop_assert_eq!(splits as u64, o.model.barrier_increments.values().sum::<u64>());
    }

    #[test]
    fn block_order_does_not_matter(seed in any::<u64>()) {
        let rk = random_kernel(seed, 4);
        let k = kernel(&rk.source);
        let limits = SimLimits { warp_size: rk.warp_size, ..SimLimits::default() };
        let n = rk.config.grid.volume() as u32;
        let fwd = Simulator::new(&k, &rk.config, limits).run().unwrap();
        let rev = Simulator::new(&k, &rk.config, limits).block_order((0..n).rev().collect()).run().unwrap();
        prop_assert_eq!(&fwd.model.shared_units, &rev.model.shared_units);
        prop_assert_eq!(&fwd.model.barrier_increments, &rev.model.barrier_increments);
        for (addr, u) in &fwd.model.global_units {
            let mut a = u.tuples.clone();
            let mut b = rev.model.global_units[addr].tuples.clone();
            let key = |t: &simucheck::sim::UnitTuple| (t.thread, t.stmt, t.visit_order, t.action);
            a.sort_by_key(key);
            b.sort_by_key(key);
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn epochs_count_barriers_that_touch_the_address() {
    // three phases over the same slot, a barrier that leaves it alone in between
    let k = kernel(
        "kernel k() {
           shared a[4];
           shared b[4];
           a[threadIdx.x] = 1;
           sync one;
           b[threadIdx.x] = 1;
           sync two;
           v = a[threadIdx.x];
           sync three;
           a[threadIdx.x] = v;
         }",
    );
    let o = simulate(&k, &launch([1, 1, 1], [4, 1, 1], &[]));
    for u in o.model.units() {
        let orders: Vec<u32> = u.tuples.iter().map(|t| t.visit_order).collect();
        if o.model.array_name(u.address) == "a" {
            // `two` did not see `a` since `one`
            assert_eq!(orders, vec![0, 1, 2]);
            let names: Vec<&str> = u.splits[&0].iter().map(|&i| o.model.barriers[i].as_str()).collect();
            assert_eq!(names, vec!["one", "three"]);
        } else {
            assert_eq!(orders, vec![0]);
        }
    }
}
