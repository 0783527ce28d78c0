use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::ir::parse_kernel;

use super::{run_check, run_search, DetectionReport, Expected, Verdict, DEFAULT_RACE_LIMIT};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorpusStatus {
    Pass,
    Fail { reason: String },
    /// No `.expected` file next to the kernel.
    Unconfigured,
    Error { message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusEntry {
    pub kernel: String,
    pub expected: Option<Verdict>,
    pub got: Option<Verdict>,
    pub status: CorpusStatus,
    #[serde(skip)]
    pub report: Option<DetectionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusSummary {
    pub entries: Vec<CorpusEntry>,
}

impl CorpusSummary {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.status == CorpusStatus::Pass)
    }
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let show = |v: Option<Verdict>| v.map_or("-", Verdict::as_str);
            match &e.status {
                CorpusStatus::Pass => writeln!(f, "PASS  {} ({})", e.kernel, show(e.got))?,
                CorpusStatus::Fail { reason } => writeln!(f, "FAIL  {}: {reason}", e.kernel)?,
                CorpusStatus::Unconfigured => {
                    writeln!(f, "SKIP  {}: no .expected file (unconfigured)", e.kernel)?
                }
                CorpusStatus::Error { message } => writeln!(f, "ERROR {}: {message}", e.kernel)?,
            }
        }
        let passed = self
            .entries
            .iter()
            .filter(|e| e.status == CorpusStatus::Pass)
            .count();
        write!(f, "{passed}/{} passed", self.entries.len())
    }
}

/// Runs every `*.mir` file of `dir` against its `.expected` file: a pinned
/// launch runs a check, anything else runs a search.
pub fn run_corpus(dir: &Path) -> std::io::Result<CorpusSummary> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mir"))
        .collect();
    files.sort();
    let entries = files.par_iter().map(|p| run_entry(p)).collect();
    Ok(CorpusSummary { entries })
}

fn run_entry(path: &Path) -> CorpusEntry {
    let kernel = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut entry = CorpusEntry {
        kernel,
        expected: None,
        got: None,
        status: CorpusStatus::Unconfigured,
        report: None,
    };
    let error = |message: String| CorpusStatus::Error { message };
    let Ok(expected_text) = std::fs::read_to_string(path.with_extension("expected")) else {
        return entry;
    };
    let expected = match Expected::parse(&expected_text) {
        Ok(e) => e,
        Err(e) => {
            entry.status = error(format!(".expected {e}"));
            return entry;
        }
    };
    entry.expected = Some(expected.verdict);
    let program = match std::fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|src| parse_kernel(&src).map_err(|e| e.to_string()))
    {
        Ok(p) => p,
        Err(e) => {
            entry.status = error(e);
            return entry;
        }
    };
    let report = match &expected.pinned {
        Some(config) => match run_check(&program, config, expected.ep.limits, DEFAULT_RACE_LIMIT) {
            Ok(r) => r,
            Err(e) => {
                entry.status = error(e.to_string());
                return entry;
            }
        },
        None => run_search(&program, &expected.ep, DEFAULT_RACE_LIMIT),
    };
    entry.got = Some(report.verdict);
    entry.status = if report.verdict != expected.verdict {
        CorpusStatus::Fail {
            reason: format!("expected {}, got {}", expected.verdict, report.verdict),
        }
    } else if let Some(want) = &expected.redundant {
        let got = report.redundant_names();
        if got == *want {
            CorpusStatus::Pass
        } else {
            CorpusStatus::Fail {
                reason: format!("redundant barriers {got:?}, expected {want:?}"),
            }
        }
    } else {
        CorpusStatus::Pass
    };
    entry.report = Some(report);
    entry
}
