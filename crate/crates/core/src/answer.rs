//! Parsing of agent responses and the accuracy equivalence rule.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Which agent interaction produced an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    CoT,
    PoT,
    Critic,
    ICritic,
    Calculator,
    Reconcile,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::CoT => "cot",
            Stage::PoT => "pot",
            Stage::Critic => "critic",
            Stage::ICritic => "i-critic",
            Stage::Calculator => "calculator",
            Stage::Reconcile => "reconcile",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredAnswer {
    pub steps: Vec<String>,
    pub answer_raw: String,
    /// Present iff `answer_raw` normalizes to a number.
    pub answer_value: Option<f64>,
    pub source_stage: Stage,
}

impl StructuredAnswer {
    pub fn new(steps: Vec<String>, answer_raw: impl Into<String>, source_stage: Stage) -> Self {
        let answer_raw = answer_raw.into();
        Self {
            steps,
            answer_value: normalize_numeric(&answer_raw),
            answer_raw,
            source_stage,
        }
    }

    /// Placeholder for a stage that never produced a parseable answer.
    pub fn unanswered(source_stage: Stage) -> Self {
        Self {
            steps: Vec::new(),
            answer_raw: String::new(),
            answer_value: None,
            source_stage,
        }
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.source_stage = stage;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no JSON object with an {key:?} field in response")]
pub struct AnswerParseError {
    pub key: &'static str,
}

/// Every top-level JSON object embedded in `text`, in order of appearance.
///
/// Prose, Markdown fences and malformed fragments between objects are
/// skipped. When a brace-balanced span fails to parse, scanning resumes just
/// after its opening brace so that well-formed inner objects are still found.
pub fn embedded_json_objects(text: &str) -> Vec<Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    let mut start = 0;

    while let Some(offset) = text[start..].find('{') {
        let open = start + offset;
        match balanced_end(bytes, open) {
            Some(close) => match serde_json::from_str::<Value>(&text[open..=close]) {
                Ok(Value::Object(map)) => {
                    found.push(map);
                    start = close + 1;
                }
                _ => start = open + 1,
            },
            None => start = open + 1,
        }
    }
    found
}

fn balanced_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn last_object_with_answer(text: &str) -> Result<Map<String, Value>, AnswerParseError> {
    embedded_json_objects(text)
        .into_iter()
        .rev()
        .find(|obj| obj.contains_key("answer"))
        .ok_or(AnswerParseError { key: "answer" })
}

fn value_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Reads the operative `{"steps": [...], "answer": ...}` payload of a model
/// response. The last object carrying an `"answer"` key wins.
pub fn extract_structured_answer(
    llm_text: &str,
    stage: Stage,
) -> Result<StructuredAnswer, AnswerParseError> {
    let obj = last_object_with_answer(llm_text)?;
    let steps = match obj.get("steps") {
        Some(Value::Array(items)) => items.iter().map(value_text).collect(),
        Some(Value::String(s)) => vec![s.clone()],
        _ => Vec::new(),
    };
    Ok(StructuredAnswer::new(steps, value_text(&obj["answer"]), stage))
}

/// Reads the calculator agent's `{"answer": ["expr=value", ...]}` payload.
pub fn extract_equation_list(llm_text: &str) -> Result<Vec<String>, AnswerParseError> {
    embedded_json_objects(llm_text)
        .into_iter()
        .rev()
        .find_map(|obj| match obj.get("answer") {
            Some(Value::Array(items)) => Some(items.iter().map(value_text).collect()),
            _ => None,
        })
        .ok_or(AnswerParseError { key: "answer" })
}

/// Parses answers such as `$8,590`, `93.70%` or `-1.5` into a number.
///
/// Currency symbols, commas, whitespace and one trailing `%` are dropped;
/// anything else left over makes the answer non-numeric.
pub fn normalize_numeric(answer_raw: &str) -> Option<f64> {
    let cleaned = numeric_residue(answer_raw)?;
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn numeric_residue(answer_raw: &str) -> Option<String> {
    let mut cleaned: String = answer_raw
        .chars()
        .filter(|c| !c.is_whitespace() && !matches!(c, ',' | '$' | '€' | '£'))
        .collect();
    if cleaned.ends_with('%') {
        cleaned.pop();
    }
    let body = cleaned.strip_prefix('-').unwrap_or(&cleaned);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    let valid = all_digits(int)
        && frac.is_none_or(all_digits)
        && (!int.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    valid.then_some(cleaned)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerKind {
    Integer,
    Float,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub value: f64,
    /// Digits after the decimal point in the gold string.
    pub decimal_places: u32,
    pub answer_kind: AnswerKind,
}

impl GoldAnswer {
    /// Builds a gold answer from its printed form, keeping the printed
    /// precision (`"14.1%"` has one decimal place).
    pub fn parse(text: &str) -> Option<Self> {
        let residue = numeric_residue(text)?;
        let value = residue.parse::<f64>().ok().filter(|v| v.is_finite())?;
        let decimal_places = residue
            .split_once('.')
            .map_or(0, |(_, frac)| frac.len() as u32);
        Some(Self {
            value,
            decimal_places,
            answer_kind: if decimal_places == 0 {
                AnswerKind::Integer
            } else {
                AnswerKind::Float
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingMode {
    #[default]
    HalfAwayFromZero,
    HalfEven,
}

/// Rounds to `places` decimals on the shortest decimal representation of
/// `value`, so `0.975` rounds to `0.98` even though its binary value is a
/// hair below.
pub fn round_decimal(value: f64, places: u32, mode: RoundingMode) -> f64 {
    let text = format!("{}", value.abs());
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let places = places as usize;
    if frac.len() <= places {
        return value;
    }
    let mut digits: Vec<u8> = int.bytes().chain(frac.bytes().take(places)).collect();
    let dropped = &frac.as_bytes()[places..];
    let round_up = match mode {
        RoundingMode::HalfAwayFromZero => dropped[0] >= b'5',
        RoundingMode::HalfEven => {
            let tail_nonzero = dropped[1..].iter().any(|&d| d != b'0');
            let last_odd = digits.last().is_some_and(|d| (d - b'0') % 2 == 1);
            dropped[0] > b'5' || (dropped[0] == b'5' && (tail_nonzero || last_odd))
        }
    };
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, b'1');
                break;
            }
            i -= 1;
            if digits[i] == b'9' {
                digits[i] = b'0';
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let mut rounded = String::from_utf8(digits[..split].to_vec()).unwrap();
    if places > 0 {
        rounded.push('.');
        rounded.push_str(std::str::from_utf8(&digits[split..]).unwrap());
    }
    let magnitude: f64 = rounded.parse().unwrap();
    if value.is_sign_negative() {
        -magnitude
    } else {
        magnitude
    }
}

/// True iff `predicted` is the gold value or rounds to it at the gold's
/// printed precision.
pub fn answers_equivalent(gold: &GoldAnswer, predicted: f64) -> bool {
    answers_equivalent_with(gold, predicted, RoundingMode::default())
}

pub fn answers_equivalent_with(gold: &GoldAnswer, predicted: f64, mode: RoundingMode) -> bool {
    if !predicted.is_finite() {
        return false;
    }
    predicted == gold.value || round_decimal(predicted, gold.decimal_places, mode) == gold.value
}

/// Scores an optional predicted answer; a missing value is never correct.
pub fn is_correct(gold: &GoldAnswer, predicted: Option<f64>) -> bool {
    predicted.is_some_and(|p| answers_equivalent(gold, p))
}
