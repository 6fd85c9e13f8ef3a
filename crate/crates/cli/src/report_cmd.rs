//! `numqa report`: renders one of the table layouts across run directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use numqa_core::report::{render_csv, render_json, render_text, Layout, RunSummary};

use crate::error::{fail, Categorize, Category, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format {s:?}: expected text, json or csv")),
        }
    }
}

pub fn load_summary(run_dir: &Path) -> CliResult<RunSummary> {
    if !run_dir.is_dir() {
        return fail(Category::Io, format!("run directory {} does not exist", run_dir.display()));
    }
    let path = run_dir.join("report.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .category(Category::Io)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .category(Category::Io)
}

pub fn cmd_report(run_dirs: &[PathBuf], layout: Layout, format: Format) -> CliResult<String> {
    if run_dirs.is_empty() {
        return fail(Category::Config, "no run directories given");
    }
    let runs = run_dirs.iter().map(|d| load_summary(d)).collect::<CliResult<Vec<_>>>()?;
    let rendered = match format {
        Format::Text => render_text(layout, &runs),
        Format::Json => render_json(layout, &runs),
        Format::Csv => render_csv(layout, &runs),
    };
    rendered.category(Category::Mismatch)
}
