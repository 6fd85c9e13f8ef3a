//! TATQA and FinQA dev-set ingestion.
//!
//! Both loaders read the published JSON files as-is and never download
//! anything. Field names are documented in `docs/ingestion.md`.

mod finqa;
mod tatqa;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answer::GoldAnswer;
use crate::prompt::TableBlock;

pub use finqa::{load_finqa, load_finqa_with_report};
pub use tatqa::{load_tatqa, load_tatqa_with_report, TatqaOptions};

/// Numerical dev-set sizes reported for the two datasets.
pub const TATQA_DEV_EXPECTED: usize = 717;
pub const FINQA_DEV_EXPECTED: usize = 883;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "tatqa")]
    Tatqa,
    #[serde(rename = "finqa")]
    Finqa,
}

impl Source {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "tatqa" | "tat-qa" => Some(Source::Tatqa),
            "finqa" => Some(Source::Finqa),
            _ => None,
        }
    }

    pub fn expected_dev_count(self) -> usize {
        match self {
            Source::Tatqa => TATQA_DEV_EXPECTED,
            Source::Finqa => FINQA_DEV_EXPECTED,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Tatqa => "tatqa",
            Source::Finqa => "finqa",
        })
    }
}

/// One question with its context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub pre_text: String,
    pub table: TableBlock,
    pub post_text: String,
    pub question: String,
    pub gold: GoldAnswer,
    /// The gold answer exactly as printed in the dataset.
    pub gold_text: String,
    pub source: Source,
    /// Dataset scale annotation (TATQA `scale`), if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    /// Applied scale transformation, for audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_transform: Option<String>,
    #[serde(default)]
    pub omitted: bool,
}

impl Document {
    /// The `{text}` binding: pre-text then post-text, one block per line.
    pub fn text(&self) -> String {
        [self.pre_text.as_str(), self.post_text.as_str()]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not valid JSON: {message}")]
    Json { path: String, message: String },
    #[error("record {record}: missing or malformed field `{field}`")]
    Schema { field: String, record: usize },
}

impl DatasetError {
    pub(crate) fn schema(field: impl Into<String>, record: usize) -> Self {
        DatasetError::Schema {
            field: field.into(),
            record,
        }
    }
}

/// Counts and exclusion reasons for one ingested file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub source: Source,
    pub path: String,
    pub sha256: String,
    pub records: usize,
    pub questions_seen: usize,
    pub kept: usize,
    pub expected: usize,
    /// Exclusion reason → number of questions.
    pub excluded: BTreeMap<String, usize>,
}

impl IngestionReport {
    fn new(source: Source, path: &Path, bytes: &[u8]) -> Self {
        Self {
            source,
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            records: 0,
            questions_seen: 0,
            kept: 0,
            expected: source.expected_dev_count(),
            excluded: BTreeMap::new(),
        }
    }

    fn exclude(&mut self, reason: impl Into<String>) {
        *self.excluded.entry(reason.into()).or_default() += 1;
    }

    pub fn matches_expected(&self) -> bool {
        self.kept == self.expected
    }

    /// Human-readable reconciliation against the expected dev-set size.
    pub fn reconciliation(&self) -> String {
        let mut out = format!(
            "{} {} (sha256 {})\n  records {}, questions {}, kept {}, expected {} ({:+})\n",
            self.source,
            self.path,
            self.sha256,
            self.records,
            self.questions_seen,
            self.kept,
            self.expected,
            self.kept as i64 - self.expected as i64
        );
        for (reason, n) in &self.excluded {
            out.push_str(&format!("  excluded {n:>5}  {reason}\n"));
        }
        out
    }
}

/// Reads a top-level JSON array, keeping each record as raw text so that
/// numeric gold answers retain their printed precision.
fn read_records(path: &Path) -> Result<(Vec<u8>, Vec<Box<RawValue>>), DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let records = serde_json::from_slice(&bytes).map_err(|e| DatasetError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok((bytes, records))
}

fn parse_raw<T: serde::de::DeserializeOwned>(
    raw: &RawValue,
    field: &str,
    record: usize,
) -> Result<T, DatasetError> {
    serde_json::from_str(raw.get()).map_err(|_| DatasetError::schema(field, record))
}

fn table_from_json(value: &serde_json::Value) -> Option<TableBlock> {
    let rows = value.as_array()?;
    rows.iter()
        .map(|row| {
            row.as_array()?
                .iter()
                .map(|cell| match cell {
                    serde_json::Value::String(s) => Some(s.clone()),
                    serde_json::Value::Null => Some(String::new()),
                    other => Some(other.to_string()),
                })
                .collect::<Option<Vec<String>>>()
        })
        .collect::<Option<Vec<_>>>()
        .map(TableBlock::new)
}
