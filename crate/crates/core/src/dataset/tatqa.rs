//! TATQA: an array of `{table: {table: [[..]]}, paragraphs: [{order, text}],
//! questions: [{question, answer, answer_type, scale, ..}]}` records.

use std::path::Path;

use serde::Deserialize;
use serde_json::value::RawValue;
use serde_json::Value;

use super::{parse_raw, read_records, table_from_json, DatasetError, Document, IngestionReport, Source};
use crate::answer::{AnswerKind, GoldAnswer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TatqaOptions {
    /// `answer_type` values treated as numerical questions.
    pub answer_types: Vec<String>,
    /// Multiply gold answers by the `scale` annotation. Off by default: the
    /// model answers in the table's units, and golds are printed that way.
    pub apply_scale: bool,
}

impl Default for TatqaOptions {
    fn default() -> Self {
        Self {
            answer_types: vec!["arithmetic".into()],
            apply_scale: false,
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    table: Option<Value>,
    paragraphs: Option<Vec<Paragraph>>,
    questions: Option<Vec<Box<RawValue>>>,
}

#[derive(Deserialize)]
struct Paragraph {
    #[serde(default)]
    order: i64,
    text: String,
}

#[derive(Deserialize)]
struct RawQuestion {
    question: Option<String>,
    answer: Option<Box<RawValue>>,
    answer_type: Option<String>,
    #[serde(default)]
    scale: Option<String>,
}

pub fn load_tatqa(path: &Path) -> Result<Vec<Document>, DatasetError> {
    load_tatqa_with_report(path, &TatqaOptions::default()).map(|(docs, _)| docs)
}

pub fn load_tatqa_with_report(
    path: &Path,
    options: &TatqaOptions,
) -> Result<(Vec<Document>, IngestionReport), DatasetError> {
    let (bytes, records) = read_records(path)?;
    let mut report = IngestionReport::new(Source::Tatqa, path, &bytes);
    report.records = records.len();
    let mut docs = Vec::new();
    let mut index = 0usize;

    for (r, raw) in records.iter().enumerate() {
        let record: RawRecord = parse_raw(raw, "record", r)?;
        let questions = record
            .questions
            .ok_or_else(|| DatasetError::schema("questions", r))?;
        let table = record
            .table
            .as_ref()
            .and_then(|t| t.get("table"))
            .and_then(table_from_json)
            .ok_or_else(|| DatasetError::schema("table.table", r))?;
        let mut paragraphs = record
            .paragraphs
            .ok_or_else(|| DatasetError::schema("paragraphs", r))?;
        paragraphs.sort_by_key(|p| p.order);
        let pre_text = paragraphs
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");

        for raw_q in &questions {
            let id = format!("tatqa-dev-{index}");
            index += 1;
            report.questions_seen += 1;
            let q: RawQuestion = parse_raw(raw_q, "questions[]", r)?;
            let question = q.question.ok_or_else(|| DatasetError::schema("question", r))?;
            let answer_type = q
                .answer_type
                .ok_or_else(|| DatasetError::schema("answer_type", r))?;
            let answer = q.answer.ok_or_else(|| DatasetError::schema("answer", r))?;

            if !options.answer_types.contains(&answer_type) {
                report.exclude(format!("answer_type {answer_type}"));
                continue;
            }
            let Some(gold_text) = gold_text(&answer) else {
                report.exclude("gold is a list or not a scalar");
                continue;
            };
            let Some(mut gold) = GoldAnswer::parse(&gold_text) else {
                report.exclude("gold does not normalize to a number");
                continue;
            };
            let scale = q.scale.filter(|s| !s.is_empty());
            let mut gold_transform = None;
            if options.apply_scale {
                if let Some((factor, shift)) = scale.as_deref().and_then(scale_factor) {
                    gold.value *= factor;
                    gold.decimal_places = gold.decimal_places.saturating_sub(shift);
                    if gold.decimal_places == 0 && gold.value.fract() == 0.0 {
                        gold.answer_kind = AnswerKind::Integer;
                    }
                    gold_transform = Some(format!("x{factor} ({})", scale.as_deref().unwrap()));
                }
            }
            report.kept += 1;
            docs.push(Document {
                id,
                pre_text: pre_text.clone(),
                table: table.clone(),
                post_text: String::new(),
                question,
                gold,
                gold_text,
                source: Source::Tatqa,
                scale,
                gold_transform,
                omitted: false,
            });
        }
    }
    Ok((docs, report))
}

/// Printed form of a scalar answer. Numbers keep their literal text.
fn gold_text(answer: &RawValue) -> Option<String> {
    match serde_json::from_str::<Value>(answer.get()).ok()? {
        Value::Number(_) => Some(answer.get().trim().to_owned()),
        Value::String(s) => Some(s),
        _ => None,
    }
}

fn scale_factor(scale: &str) -> Option<(f64, u32)> {
    match scale {
        "thousand" => Some((1e3, 3)),
        "million" => Some((1e6, 6)),
        "billion" => Some((1e9, 9)),
        _ => None,
    }
}
