mod common;

use common::gen::random_kernel;
use common::*;
use proptest::prelude::*;
use simucheck::ir::{parse_kernel, required_dimensionality, ParseErrorKind};

const CORPUS: [&str; 10] = [
    "all_collide",
    "copy_from_mat",
    "empty",
    "homography_min",
    "homography_min_fixed",
    "nearest_neighbour_div",
    "nearest_neighbour_fixed",
    "race_free",
    "smo_kernel",
    "smo_kernel_fixed",
];

fn corpus_source(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(format!("{name}.mir"))).unwrap()
}

#[test]
fn corpus_parses_and_prints_stably() {
    for name in CORPUS {
        let k = corpus_kernel(name);
        let printed = k.to_string();
        let again = parse_kernel(&printed).unwrap_or_else(|e| panic!("{name}: {e}\n{printed}"));
        assert_eq!(again, k, "{name}");
        assert_eq!(again.to_string(), printed);
    }
}

#[test]
fn corpus_dimensionality() {
    let d = required_dimensionality(&corpus_kernel("copy_from_mat"));
    assert_eq!((d.grid_axes, d.block_axes), (2, 2));
    let d = required_dimensionality(&corpus_kernel("smo_kernel"));
    assert_eq!((d.grid_axes, d.block_axes), (1, 1));
    let d = required_dimensionality(&corpus_kernel("all_collide"));
    assert_eq!((d.grid_axes, d.block_axes), (1, 2));
}

#[test]
fn undeclared_array_is_located() {
    let e = parse_kernel("kernel k() {\n  a[0] = 1;\n}").unwrap_err();
    assert_eq!((e.pos.line, e.pos.column), (2, 3));
    assert_eq!(e.kind, ParseErrorKind::UndeclaredArray("a".into()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn print_then_parse_is_identity(seed in any::<u64>()) {
        let rk = random_kernel(seed, 4);
        let k = kernel(&rk.source);
        let printed = k.to_string();
        let again = parse_kernel(&printed).unwrap();
        prop_assert_eq!(&again, &k);
        prop_assert_eq!(again.to_string(), printed);
    }

    /// Cutting out any span of a valid kernel gives a kernel or an error, never a panic.
    #[test]
    fn damaged_sources_never_panic(which in 0usize..10, at in any::<prop::sample::Index>(), len in 0usize..12) {
        let src = corpus_source(CORPUS[which]);
        let start = at.index(src.len());
        let end = (start + len).min(src.len());
        let mut damaged = src.clone();
        damaged.replace_range(start..end, "");
        if let Ok(k) = parse_kernel(&damaged) {
            prop_assert!(parse_kernel(&k.to_string()).is_ok());
        }
    }

    #[test]
    fn deleting_a_declaration_is_caught(which in 1usize..10) {
        let src = corpus_source(CORPUS[which]);
        // drop the first array declaration; its uses must now fail
        let Some(line) = src.lines().find(|l| {
            let t = l.trim_start();
            t.starts_with("global") || t.starts_with("shared")
        }) else {
            return Ok(());
        };
        let damaged = src.replacen(line, "", 1);
        prop_assert!(parse_kernel(&damaged).is_err());
    }

    #[test]
    fn more_axes_never_lower_dimensionality(seed in any::<u64>(), axis in 0usize..3, grid in any::<bool>()) {
        let rk = random_kernel(seed, 2);
        let k = kernel(&rk.source);
        let before = required_dimensionality(&k);
        let name = if grid { "blockIdx" } else { "threadIdx" };
        let extra = format!("  extra_ = {name}.{};\n}}", ["x", "y", "z"][axis]);
        let src = rk.source.trim_end().strip_suffix('}').unwrap().to_string() + &extra;
        let after = required_dimensionality(&kernel(&src));
        prop_assert!(after.grid_axes >= before.grid_axes);
        prop_assert!(after.block_axes >= before.block_axes);
        if grid {
            prop_assert!(after.grid_axes > axis);
        } else {
            prop_assert!(after.block_axes > axis);
        }
    }
}
