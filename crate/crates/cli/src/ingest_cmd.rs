//! `numqa ingest`: dataset counts and a reconciliation report.

use std::path::Path;

use numqa_core::dataset::{IngestionReport, Source, TatqaOptions};

use crate::error::CliResult;
use crate::run::load_documents;

pub fn cmd_ingest(source: Source, path: &Path, tatqa: &TatqaOptions) -> CliResult<IngestionReport> {
    load_documents(source, path, tatqa).map(|(_, report)| report)
}
