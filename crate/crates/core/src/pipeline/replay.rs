//! Scripted replays: a document, a spec, mock turns and the expected
//! outcome, checked end to end.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentSettings, Agents, ExecutionError, PipelineError, PipelineRun, PipelineSpec, ProcessLauncher, ProcessOutput, Transcript};
use crate::answer::normalize_numeric;
use crate::dataset::Document;
use crate::gateway::{script_mock, Gateway, GatewayError, MockTurn, RetryPolicy};
use crate::report::{ChangeKind, Flip};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub name: String,
    pub spec: PipelineSpec,
    #[serde(default = "default_model")]
    pub model: String,
    pub document: Document,
    pub turns: Vec<MockTurn>,
    pub expected: ReplayExpectation,
    /// Prompts and responses the run must reproduce.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expected_transcript: Vec<ExpectedTurn>,
}

fn default_model() -> String {
    "replay".into()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplayExpectation {
    /// Final answer as text; compared after numeric normalization.
    pub final_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip: Option<Flip>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_kind: Option<ChangeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calc_corrections: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedTurn {
    pub step: String,
    pub prompt: String,
    pub response: String,
}

/// One disagreement between a replay and its expectations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub what: String,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub run: PipelineRun,
    pub mismatches: Vec<Mismatch>,
}

impl ReplayOutcome {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("cannot read replay script {path}: {message}")]
    Load { path: String, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl ReplayScript {
    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let load_err = |message: String| ReplayError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))
    }
}

/// Replays never execute programs.
struct NoLauncher;

impl ProcessLauncher for NoLauncher {
    fn launch(&self, _: &[String], _: &str, _: std::time::Duration) -> Result<ProcessOutput, ExecutionError> {
        Err(ExecutionError::Disabled)
    }
}

pub fn run_replay(script: &ReplayScript) -> Result<ReplayOutcome, ReplayError> {
    let gateway = Gateway::new(script_mock(script.turns.clone())?).with_retry(RetryPolicy::none());
    let settings = AgentSettings::new(&script.model);
    let agents = Agents::new(&gateway, &settings, &NoLauncher, script.spec.clone());
    let doc = &script.document;
    let run = agents.run_pipeline(doc, Some(&doc.gold))?;
    let mismatches = check(script, &run);
    Ok(ReplayOutcome { run, mismatches })
}

fn check(script: &ReplayScript, run: &PipelineRun) -> Vec<Mismatch> {
    let mut out = Vec::new();
    let mut expect = |what: &str, expected: String, actual: String| {
        if expected != actual {
            out.push(Mismatch {
                what: what.to_owned(),
                expected,
                actual,
            });
        }
    };
    let e = &script.expected;
    let r = &run.record;
    expect(
        "final answer (normalized)",
        format!("{:?}", normalize_numeric(&e.final_answer)),
        format!("{:?}", r.final_value),
    );
    if let Some(c) = e.final_correct {
        expect("final_correct", c.to_string(), r.final_correct.to_string());
    }
    if e.flip.is_some() {
        expect("flip", format!("{:?}", e.flip), format!("{:?}", r.flip));
    }
    if e.change_kind.is_some() {
        expect("change_kind", format!("{:?}", e.change_kind), format!("{:?}", r.change_kind));
    }
    if let Some(c) = &e.calc_corrections {
        expect("calc_corrections", format!("{c:?}"), format!("{:?}", r.calc_corrections));
    }
    if !script.expected_transcript.is_empty() {
        let actual = expected_turns(&run.transcript);
        expect(
            "transcript length",
            script.expected_transcript.len().to_string(),
            actual.len().to_string(),
        );
        for (i, (want, got)) in script.expected_transcript.iter().zip(&actual).enumerate() {
            let n = i + 1;
            expect(&format!("turn {n} step"), want.step.clone(), got.step.clone());
            expect(&format!("turn {n} prompt"), want.prompt.clone(), got.prompt.clone());
            expect(&format!("turn {n} response"), want.response.clone(), got.response.clone());
        }
    }
    out
}

/// The transcript in the replay fixture shape; the prompt is the last user
/// message of each turn.
pub fn expected_turns(transcript: &Transcript) -> Vec<ExpectedTurn> {
    transcript
        .turns
        .iter()
        .map(|t| ExpectedTurn {
            step: t.step.clone(),
            prompt: t.messages.last().map(|m| m.content.clone()).unwrap_or_default(),
            response: t.response.clone(),
        })
        .collect()
}
