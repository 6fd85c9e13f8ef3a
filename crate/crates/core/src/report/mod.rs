//! Scoring and the analyses over per-document records.
//!
//! Every rate is kept as an exact `count / total` pair and only rounded
//! when printed, so identities such as "the three flip rates sum to 100%"
//! hold exactly.

mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answer::{is_correct, AnswerKind, GoldAnswer, Stage, StructuredAnswer};
use crate::pipeline::{Decision, PipelineSpec, StageFlag};

pub use render::{grids, render_csv, render_json, render_text, Cell, Grid, Layout, Mark, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flip {
    CtoW,
    WtoC,
    #[serde(rename = "None")]
    Unchanged,
}

impl Flip {
    pub fn between(before_correct: bool, after_correct: bool) -> Self {
        match (before_correct, after_correct) {
            (true, false) => Flip::CtoW,
            (false, true) => Flip::WtoC,
            _ => Flip::Unchanged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChangeKind {
    Minor,
    Major,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFlag {
    pub stage: Stage,
    pub flag: StageFlag,
}

/// Outcome of one pipeline run on one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub doc_id: String,
    pub spec: PipelineSpec,
    pub stage_answers: BTreeMap<Stage, StructuredAnswer>,
    /// Empty when the run had no gold answers.
    pub stage_correct: BTreeMap<Stage, bool>,
    pub final_answer: Option<String>,
    pub final_value: Option<f64>,
    pub final_correct: bool,
    /// Correctness change across the critic stage. Present iff the spec has
    /// one, the document was scored, and it was not omitted.
    pub flip: Option<Flip>,
    /// Present iff the correctness flipped.
    pub change_kind: Option<ChangeKind>,
    /// Improved critic maintained its answer. Absent when the stage did not
    /// run (oracle mode skips it on documents the analyst got right).
    pub confident: Option<bool>,
    pub decision: Option<Decision>,
    /// Whether the critic stage ran, for specs that have one.
    pub review_invoked: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calc_corrections: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<RecordFlag>,
    pub omitted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omission_reason: Option<String>,
    pub gateway_calls: usize,
}

impl EvalRecord {
    pub fn has_flag(&self, flag: StageFlag) -> bool {
        self.flags.iter().any(|f| f.flag == flag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("no gold answer for document {doc_id}")]
    MissingGold { doc_id: String },
    #[error("document {doc_id}: {detail}")]
    SpecMismatch { doc_id: String, detail: String },
    #[error("runs cover different document sets ({a} vs {b})")]
    SliceMismatch { a: String, b: String },
}

/// An exact proportion. `total == 0` is undefined and prints as `n/a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "RateRepr", from = "RateRepr")]
pub struct Rate {
    pub count: usize,
    pub total: usize,
}

#[derive(Serialize, Deserialize)]
struct RateRepr {
    count: usize,
    total: usize,
    #[serde(default)]
    percent: Option<f64>,
}

impl From<Rate> for RateRepr {
    fn from(r: Rate) -> Self {
        RateRepr {
            count: r.count,
            total: r.total,
            percent: r.rounded_percent(),
        }
    }
}

impl From<RateRepr> for Rate {
    fn from(r: RateRepr) -> Self {
        Rate::new(r.count, r.total)
    }
}

/// `n / d` scaled by 1000 and rounded half away from zero.
fn tenths(n: i128, d: i128) -> i128 {
    debug_assert!(d > 0);
    let scaled = n * 1000;
    let rounded = (2 * scaled.abs() + d) / (2 * d);
    if scaled < 0 {
        -rounded
    } else {
        rounded
    }
}

impl Rate {
    pub fn new(count: usize, total: usize) -> Self {
        debug_assert!(count <= total);
        Self { count, total }
    }

    pub fn is_defined(&self) -> bool {
        self.total > 0
    }

    pub fn percent(&self) -> Option<f64> {
        self.is_defined()
            .then(|| 100.0 * self.count as f64 / self.total as f64)
    }

    /// Percentage in tenths of a point, rounded half away from zero.
    pub fn percent_tenths(&self) -> Option<i64> {
        self.is_defined()
            .then(|| tenths(self.count as i128, self.total as i128) as i64)
    }

    pub fn rounded_percent(&self) -> Option<f64> {
        self.percent_tenths().map(|t| t as f64 / 10.0)
    }

    /// The complementary proportion over the same total.
    pub fn complement(&self) -> Rate {
        Rate::new(self.total - self.count, self.total)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.percent_tenths() {
            Some(t) => write!(f, "{}.{}%", t / 10, t % 10),
            None => f.write_str("n/a"),
        }
    }
}

/// Signed difference `b - a` in percentage points, in tenths.
pub fn delta_tenths(a: &Rate, b: &Rate) -> Option<i64> {
    if !a.is_defined() || !b.is_defined() {
        return None;
    }
    let (ac, at, bc, bt) = (a.count as i128, a.total as i128, b.count as i128, b.total as i128);
    Some(tenths(bc * at - ac * bt, at * bt) as i64)
}

pub fn format_points(tenths: Option<i64>) -> String {
    match tenths {
        None => "n/a".into(),
        Some(t) => {
            let sign = if t > 0 { "+" } else if t < 0 { "-" } else { "" };
            format!("{sign}{}.{}", t.abs() / 10, t.abs() % 10)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub n_scored: usize,
    pub n_omitted: usize,
    pub accuracy: Rate,
    pub accuracy_int: Rate,
    pub accuracy_float: Rate,
    /// Digest of the sorted document ids, omitted ones included.
    pub slice_digest: String,
}

fn slice_digest(records: &[EvalRecord]) -> String {
    let ids: BTreeSet<&str> = records.iter().map(|r| r.doc_id.as_str()).collect();
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Accuracy of the final answers. Omitted documents are excluded from
/// every denominator.
pub fn score_run(
    records: &[EvalRecord],
    golds: &BTreeMap<String, GoldAnswer>,
) -> Result<AccuracyReport, ReportError> {
    score_values(records, golds, |r| r.final_value)
}

/// Accuracy of one stage's answers, e.g. the analyst stage of a critic run.
/// Records where the stage did not run score the answer that was carried
/// forward in its place, which is the final answer of the stage before.
pub fn score_stage(
    records: &[EvalRecord],
    golds: &BTreeMap<String, GoldAnswer>,
    stage: Stage,
) -> Result<AccuracyReport, ReportError> {
    score_values(records, golds, |r| {
        r.stage_answers
            .get(&stage)
            .or_else(|| r.stage_answers.range(..stage).next_back().map(|(_, a)| a))
            .and_then(|a| a.answer_value)
    })
}

fn score_values(
    records: &[EvalRecord],
    golds: &BTreeMap<String, GoldAnswer>,
    value: impl Fn(&EvalRecord) -> Option<f64>,
) -> Result<AccuracyReport, ReportError> {
    let mut report = AccuracyReport {
        n_scored: 0,
        n_omitted: 0,
        accuracy: Rate::default(),
        accuracy_int: Rate::default(),
        accuracy_float: Rate::default(),
        slice_digest: slice_digest(records),
    };
    for r in records {
        if r.omitted {
            report.n_omitted += 1;
            continue;
        }
        let gold = golds.get(&r.doc_id).ok_or_else(|| ReportError::MissingGold {
            doc_id: r.doc_id.clone(),
        })?;
        let correct = is_correct(gold, value(r)) as usize;
        report.n_scored += 1;
        report.accuracy.total += 1;
        report.accuracy.count += correct;
        let split = match gold.answer_kind {
            AnswerKind::Integer => &mut report.accuracy_int,
            AnswerKind::Float => &mut report.accuracy_float,
        };
        split.total += 1;
        split.count += correct;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipReport {
    pub n: usize,
    pub c_to_w: Rate,
    pub w_to_c: Rate,
    pub unchanged: Rate,
    /// Share of minor changes among correct-to-wrong flips.
    pub c_to_w_minor: Rate,
    /// Share of minor changes among wrong-to-correct flips.
    pub w_to_c_minor: Rate,
}

pub fn flip_analysis(records: &[EvalRecord]) -> Result<FlipReport, ReportError> {
    let mut n = 0;
    let (mut cw, mut wc, mut same) = (0, 0, 0);
    let (mut cw_minor, mut wc_minor) = (0, 0);
    for r in records.iter().filter(|r| !r.omitted) {
        let flip = r.flip.ok_or_else(|| ReportError::SpecMismatch {
            doc_id: r.doc_id.clone(),
            detail: format!("{} record has no flip annotation", r.spec),
        })?;
        n += 1;
        let minor = r.change_kind == Some(ChangeKind::Minor);
        match flip {
            Flip::CtoW => {
                cw += 1;
                cw_minor += minor as usize;
            }
            Flip::WtoC => {
                wc += 1;
                wc_minor += minor as usize;
            }
            Flip::Unchanged => same += 1,
        }
    }
    Ok(FlipReport {
        n,
        c_to_w: Rate::new(cw, n),
        w_to_c: Rate::new(wc, n),
        unchanged: Rate::new(same, n),
        c_to_w_minor: Rate::new(cw_minor, cw),
        w_to_c_minor: Rate::new(wc_minor, wc),
    })
}

/// Step texts with digits removed and whitespace collapsed.
fn step_shape(steps: &[String]) -> Vec<String> {
    steps
        .iter()
        .map(|s| {
            s.chars()
                .filter(|c| !c.is_ascii_digit())
                .collect::<String>()
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Minor iff the reasoning steps are the same apart from the numbers in
/// them; any other difference is major.
pub fn classify_change(before: &StructuredAnswer, after: &StructuredAnswer) -> ChangeKind {
    if step_shape(&before.steps) == step_shape(&after.steps) {
        ChangeKind::Minor
    } else {
        ChangeKind::Major
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfReport {
    /// Records where the improved critic ran.
    pub n: usize,
    /// Records where it was skipped (oracle mode, analyst already right).
    pub not_assessed: usize,
    pub conf: Rate,
    pub corr_given_conf: Rate,
    pub incorr_given_conf: Rate,
    pub corr_given_notconf: Rate,
    pub incorr_given_notconf: Rate,
}

/// Correctness rates within the confident (maintained) and not-confident
/// (updated) strata. Correctness is that of the improved critic's answer.
pub fn confidence_rates(records: &[EvalRecord]) -> Result<ConfReport, ReportError> {
    let (mut n, mut skipped) = (0, 0);
    let (mut conf, mut conf_corr, mut notconf_corr) = (0, 0, 0);
    for r in records.iter().filter(|r| !r.omitted) {
        if !r.spec.id.has_icritic() {
            return Err(ReportError::SpecMismatch {
                doc_id: r.doc_id.clone(),
                detail: format!("{} has no improved critic stage", r.spec),
            });
        }
        let Some(confident) = r.confident else {
            skipped += 1;
            continue;
        };
        let correct = *r
            .stage_correct
            .get(&Stage::ICritic)
            .ok_or_else(|| ReportError::MissingGold {
                doc_id: r.doc_id.clone(),
            })?;
        n += 1;
        if confident {
            conf += 1;
            conf_corr += correct as usize;
        } else {
            notconf_corr += correct as usize;
        }
    }
    let corr_given_conf = Rate::new(conf_corr, conf);
    let corr_given_notconf = Rate::new(notconf_corr, n - conf);
    Ok(ConfReport {
        n,
        not_assessed: skipped,
        conf: Rate::new(conf, n),
        corr_given_conf,
        incorr_given_conf: corr_given_conf.complement(),
        corr_given_notconf,
        incorr_given_notconf: corr_given_notconf.complement(),
    })
}

/// Column-wise `b - a` differences, in percentage points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub n_a: usize,
    pub n_b: usize,
    pub accuracy: Option<i64>,
    pub accuracy_int: Option<i64>,
    pub accuracy_float: Option<i64>,
}

impl fmt::Display for DeltaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accuracy {} (n={} vs {}), int {}, float {}",
            format_points(self.accuracy),
            self.n_a,
            self.n_b,
            format_points(self.accuracy_int),
            format_points(self.accuracy_float)
        )
    }
}

pub fn compare_runs(a: &AccuracyReport, b: &AccuracyReport) -> Result<DeltaReport, ReportError> {
    if a.slice_digest != b.slice_digest {
        return Err(ReportError::SliceMismatch {
            a: a.slice_digest[..12.min(a.slice_digest.len())].to_owned(),
            b: b.slice_digest[..12.min(b.slice_digest.len())].to_owned(),
        });
    }
    Ok(DeltaReport {
        n_a: a.n_scored,
        n_b: b.n_scored,
        accuracy: delta_tenths(&a.accuracy, &b.accuracy),
        accuracy_int: delta_tenths(&a.accuracy_int, &b.accuracy_int),
        accuracy_float: delta_tenths(&a.accuracy_float, &b.accuracy_float),
    })
}
