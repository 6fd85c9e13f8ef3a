//! FinQA: an array of `{id, pre_text: [..], post_text: [..], table: [[..]],
//! qa: {question, answer, exe_ans}}` records.

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::{parse_raw, read_records, table_from_json, DatasetError, Document, IngestionReport, Source};
use crate::answer::GoldAnswer;

#[derive(Deserialize)]
struct RawRecord {
    pre_text: Option<Value>,
    post_text: Option<Value>,
    table: Option<Value>,
    qa: Option<RawQa>,
}

#[derive(Deserialize)]
struct RawQa {
    question: Option<String>,
    #[serde(default)]
    answer: Option<Value>,
    #[serde(default)]
    exe_ans: Option<Value>,
}

pub fn load_finqa(path: &Path) -> Result<Vec<Document>, DatasetError> {
    load_finqa_with_report(path).map(|(docs, _)| docs)
}

pub fn load_finqa_with_report(path: &Path) -> Result<(Vec<Document>, IngestionReport), DatasetError> {
    let (bytes, records) = read_records(path)?;
    let mut report = IngestionReport::new(Source::Finqa, path, &bytes);
    report.records = records.len();
    let mut docs = Vec::new();

    for (r, raw) in records.iter().enumerate() {
        let record: RawRecord = parse_raw(raw, "record", r)?;
        report.questions_seen += 1;
        let qa = record.qa.ok_or_else(|| DatasetError::schema("qa", r))?;
        let question = qa.question.ok_or_else(|| DatasetError::schema("qa.question", r))?;
        let pre_text = join_sentences(record.pre_text.as_ref()).ok_or_else(|| DatasetError::schema("pre_text", r))?;
        let post_text =
            join_sentences(record.post_text.as_ref()).ok_or_else(|| DatasetError::schema("post_text", r))?;
        let table = record
            .table
            .as_ref()
            .and_then(table_from_json)
            .ok_or_else(|| DatasetError::schema("table", r))?;

        // The printed answer carries the precision used for scoring; the
        // executed program result is only a fallback when it is missing.
        let printed = qa.answer.as_ref().and_then(scalar_text);
        let (gold_text, gold, transform) = match printed.as_deref().and_then(GoldAnswer::parse) {
            Some(gold) => (printed.unwrap(), gold, None),
            None => match qa.exe_ans.as_ref().and_then(scalar_text) {
                Some(exe) => match GoldAnswer::parse(&exe) {
                    Some(gold) => (exe, gold, Some("gold from qa.exe_ans".to_owned())),
                    None => {
                        report.exclude("gold does not normalize to a number");
                        continue;
                    }
                },
                None => {
                    report.exclude("gold does not normalize to a number");
                    continue;
                }
            },
        };
        report.kept += 1;
        docs.push(Document {
            id: format!("finqa-dev-{r}"),
            pre_text,
            table,
            post_text,
            question,
            gold,
            gold_text,
            source: Source::Finqa,
            scale: None,
            gold_transform: transform,
            omitted: false,
        });
    }
    Ok((docs, report))
}

fn join_sentences(value: Option<&Value>) -> Option<String> {
    match value? {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::trim))
            .collect::<Option<Vec<_>>>()
            .map(|parts| parts.into_iter().filter(|p| !p.is_empty()).collect::<Vec<_>>().join("\n")),
        _ => None,
    }
}

fn scalar_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) if !s.trim().is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}
