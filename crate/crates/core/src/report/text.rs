use std::fmt::Write;

use crate::detect::{RaceKind, RaceScope};
use crate::inputgen::Fitness;

use super::{DetectionReport, Verdict};

const TEXT_RACE_LINES: usize = 20;

/// Human-readable summary. Races read `w&w sync` or `r&w sync`, and a
/// barrier that can go reads `no sync`.
pub fn render_text(r: &DetectionReport) -> String {
    let mut s = String::new();
    let headline = match r.verdict {
        Verdict::Clean => "no bugs found",
        Verdict::Race => "data race",
        Verdict::RedundantBarrier => "redundant barrier",
        Verdict::BarrierDivergence => "barrier divergence",
    };
    let _ = writeln!(s, "kernel {}: {} ({headline})", r.kernel, r.verdict);
    let _ = writeln!(s, "config: {}", r.config);
    match r.fitness {
        Fitness::Valid { primary, secondary } => {
            let _ = writeln!(s, "fitness: primary {primary:.4}, secondary {secondary}");
        }
        Fitness::Invalid { reason } => {
            let _ = writeln!(s, "fitness: invalid ({reason:?})");
        }
    }
    if let Some(search) = &r.search {
        let _ = writeln!(
            s,
            "search: seed {}, {} generation(s) run, {}",
            r.rng_seed.unwrap_or_default(),
            search.history.len().saturating_sub(1),
            if search.accepted {
                "acceptable candidate found"
            } else {
                "no candidate under the threshold"
            }
        );
    }
    let more = if r.races_truncated { "+" } else { "" };
    let _ = writeln!(s, "races: {}{more}", r.races.len());
    for race in r.races.iter().take(TEXT_RACE_LINES) {
        let tag = match race.kind {
            RaceKind::WriteWrite => "w&w sync",
            RaceKind::ReadWrite => "r&w sync",
        };
        let scope = match race.scope {
            RaceScope::IntraBlock => "intra-block",
            RaceScope::CrossBlock => "cross-block",
        };
        let block = race
            .block
            .map(|b| format!(" in block {b}"))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "  {tag}: {}[{}]{block}, {} {} vs {} {} ({scope})",
            race.array,
            race.index,
            race.first.stmt,
            race.first.thread,
            race.second.stmt,
            race.second.thread
        );
    }
    if r.races.len() > TEXT_RACE_LINES {
        let _ = writeln!(
            s,
            "  ... {} more in the JSON report",
            r.races.len() - TEXT_RACE_LINES
        );
    }
    if !r.redundant_barriers.is_empty() {
        let _ = writeln!(s, "barriers:");
        for b in &r.redundant_barriers {
            let state = if b.redundant { "no sync (redundant)" } else { "needed" };
            let _ = writeln!(
                s,
                "  {}: {state}, {}/{} increments credited",
                b.barrier, b.credited, b.total_increments
            );
        }
    }
    if let Some(d) = &r.divergence {
        let _ = writeln!(
            s,
            "divergence: block {} at barrier `{}` ({:?})",
            d.block, d.barrier, d.kind
        );
    }
    if let Some(e) = &r.runtime_error {
        let _ = writeln!(s, "runtime error: {e}");
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}
