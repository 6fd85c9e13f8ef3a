//! `numqa replay`: golden-transcript checks.

use std::fmt::Write;
use std::path::Path;

use numqa_core::pipeline::replay::{run_replay, Mismatch, ReplayOutcome, ReplayScript};
use similar::TextDiff;

use crate::error::{fail, Categorize, Category, CliResult};

pub fn replay_file(path: &Path) -> CliResult<ReplayOutcome> {
    if !path.is_file() {
        return fail(Category::Io, format!("replay script {} not found", path.display()));
    }
    let script = ReplayScript::load(path).category(Category::Config)?;
    run_replay(&script).category(Category::Backend)
}

/// Human-readable account of the mismatches, with a line diff for anything
/// spanning several lines.
pub fn describe(mismatches: &[Mismatch]) -> String {
    let mut out = String::new();
    for m in mismatches {
        if m.expected.contains('\n') || m.actual.contains('\n') {
            let _ = writeln!(out, "{}:", m.what);
            let diff = TextDiff::from_lines(&m.expected, &m.actual);
            let _ = write!(out, "{}", diff.unified_diff().context_radius(2).header("expected", "actual"));
            if !out.ends_with('\n') {
                out.push('\n');
            }
        } else {
            let _ = writeln!(out, "{}: expected {}, got {}", m.what, m.expected, m.actual);
        }
    }
    out
}
