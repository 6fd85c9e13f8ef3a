//! Synthetic TATQA-format datasets and mock scripts.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

/// Document `i` asks for `a - b` with `a = 1000 + 37 i` and `b = 400 + 11 i`.
pub fn operands(i: usize) -> (i64, i64) {
    (1000 + 37 * i as i64, 400 + 11 * i as i64)
}

pub fn gold(i: usize) -> i64 {
    let (a, b) = operands(i);
    a - b
}

pub fn doc_id(i: usize) -> String {
    format!("tatqa-dev-{i}")
}

/// One TATQA record per document, each with a single arithmetic question.
pub fn write_tatqa(dir: &Path, n: usize) -> PathBuf {
    let records: Vec<Value> = (0..n)
        .map(|i| {
            let (a, b) = operands(i);
            json!({
                "table": {"uid": format!("t{i}"), "table": [["", "2019", "2018"], ["Revenue", format!("{a}"), format!("{b}")]]},
                "paragraphs": [{"uid": format!("p{i}"), "order": 1, "text": format!("Revenue for segment {i} (in thousands).")}],
                "questions": [{"uid": format!("q{i}"), "order": 1, "question": format!("What was the change in revenue for segment {i}?"),
                               "answer": gold(i), "answer_type": "arithmetic", "scale": "thousand"}]
            })
        })
        .collect();
    let path = dir.join("tatqa_dev.json");
    std::fs::write(&path, serde_json::to_string_pretty(&records).unwrap()).unwrap();
    path
}

pub fn answer_reply(steps: &[String], answer: &str) -> String {
    let doc = json!({"steps": steps, "answer": answer});
    format!("Here is the answer in the requested JSON format:\n\n{}", serde_json::to_string_pretty(&doc).unwrap())
}

pub fn cot_reply(i: usize, value: i64) -> String {
    let (a, b) = operands(i);
    answer_reply(
        &[
            format!("Get revenue in 2019: {a}"),
            format!("Get revenue in 2018: {b}"),
            format!("Calculate the change: {a} - {b} = {value}"),
        ],
        &value.to_string(),
    )
}

pub fn turn(respond: &str) -> Value {
    json!({"respond": respond})
}

pub fn write_script(dir: &Path, name: &str, documents: BTreeMap<String, Vec<Value>>) -> PathBuf {
    let path = dir.join(name);
    let body = json!({"model": "mock-model", "documents": documents});
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

/// CoT script: document `i` answers correctly unless `wrong(i)`.
pub fn cot_script(dir: &Path, n: usize, wrong: impl Fn(usize) -> bool) -> PathBuf {
    let docs = (0..n)
        .map(|i| {
            let v = if wrong(i) { gold(i) + 1 } else { gold(i) };
            (doc_id(i), vec![turn(&cot_reply(i, v))])
        })
        .collect();
    write_script(dir, "cot_script.json", docs)
}
