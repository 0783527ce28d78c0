use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simucheck"))
        .args(args)
        .env_remove("SIMUCHECK_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn kernel(name: &str) -> String {
    corpus(&format!("{name}.mir")).display().to_string()
}

const COPY_ARGS: [&str; 8] = [
    "--arg",
    "d_in_stride=1",
    "--arg",
    "d_out_stride=1",
    "--arg",
    "d_out_rows=5",
    "--arg",
    "d_out_cols=5",
];

#[test]
fn racing_copy_exits_two() {
    let k = kernel("copy_from_mat");
    let mut args = vec!["check", &k, "--grid", "1,1", "--block", "3,2"];
    args.extend(COPY_ARGS);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    let text = stdout(&o);
    assert!(text.contains("w&w sync"), "{text}");
    assert!(text.contains("(0 1 0)") && text.contains("(1 0 0)"), "{text}");
}

#[test]
fn clean_kernel_exits_zero() {
    let k = kernel("empty");
    let o = run(&["check", &k]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn tool_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mir");
    std::fs::write(&bad, "kernel k() {\n  a[0] = 1;\n}\n").unwrap();
    let o = run(&["check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("undeclared array"));

    assert_eq!(run(&["check", "/no/such/file.mir"]).status.code(), Some(1));
    assert_eq!(run(&["check"]).status.code(), Some(1));
    let k = kernel("copy_from_mat");
    assert_eq!(run(&["check", &k, "--block", "2"]).status.code(), Some(1), "missing args");
    assert_eq!(run(&["search", &k, "--population", "0"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn search_variants() {
    let k = kernel("race_free");
    let o = run(&["search", &k, "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let k = kernel("copy_from_mat");
    let o = run(&["search", &k, "--population", "1", "--generations", "0", "--seed", "1"]);
    assert!(matches!(o.status.code(), Some(0 | 2)));

    let a = run(&["search", &k, "--seed", "5", "--population", "8", "--format", "json"]);
    let b = Command::new(env!("CARGO_BIN_EXE_simucheck"))
        .args(["search", &k, "--population", "8", "--format", "json"])
        .env("SIMUCHECK_SEED", "5")
        .output()
        .unwrap();
    let strip = |o: &Output| {
        let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v.as_object_mut().unwrap().remove("timing_ms");
        v
    };
    let (ja, jb) = (strip(&a), strip(&b));
    assert_eq!(ja, jb);
    assert_eq!(ja["rng_seed"], 5);
}

#[test]
fn search_reads_a_settings_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ep.conf");
    std::fs::write(&cfg, "# small run\npopulation = 4\ngenerations = 1\nseed = 3\n").unwrap();
    let k = kernel("all_collide");
    let o = run(&["search", &k, "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rng_seed"], 3);
    assert_eq!(v["verdict"], "race");

    std::fs::write(&cfg, "population = lots\n").unwrap();
    let o = run(&["search", &k, "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_file_holds_the_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let k = kernel("homography_min");
    let o = run(&["check", &k, "--arg", "n=1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("no sync (redundant)"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["verdict"], "redundant_barrier");
    assert_eq!(v["mode"], "check");
}

#[test]
fn fitness_prints_json() {
    let k = kernel("copy_from_mat");
    let mut args = vec!["fitness", &k, "--block", "3,2"];
    args.extend(COPY_ARGS);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "valid");
    assert_eq!(v["secondary"], 13);
}

#[test]
fn corpus_runs() {
    let dir = corpus("");
    let o = run(&["corpus", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("10/10 passed"));

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(run(&["corpus", empty.path().to_str().unwrap()]).status.code(), Some(0));

    let wrong = tempfile::tempdir().unwrap();
    std::fs::copy(corpus("empty.mir"), wrong.path().join("empty.mir")).unwrap();
    std::fs::write(wrong.path().join("empty.expected"), "verdict = race\ngrid = 1\n").unwrap();
    let o = run(&["corpus", wrong.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL  empty"), "{}", stdout(&o));
}
