//! Agent stages and the pipeline compositions built from them.
//!
//! Every stage prompt is an independent single-turn conversation that
//! restates the full context. The only multi-turn requests are repair
//! re-prompts after a malformed or truncated reply.

pub mod executor;
pub mod replay;
mod stages;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{is_correct, GoldAnswer, Stage, StructuredAnswer};
use crate::dataset::Document;
use crate::expr::EquationChain;
use crate::gateway::{FinishReason, Gateway, GatewayError, Message, DEFAULT_MAX_TOKENS};
use crate::prompt::{RenderError, TemplateId};
use crate::report::{classify_change, EvalRecord, Flip, RecordFlag};

pub use executor::{
    CodeExecutionRequest, CountingLauncher, ExecutionError, Executor, ProcessLauncher,
    ProcessOutput, SystemLauncher, DEFAULT_SANDBOX_TIMEOUT,
};
pub use stages::{format_corrections, REPAIR_INSTRUCTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PipelineId {
    #[serde(rename = "cot")]
    CoT,
    #[serde(rename = "pot")]
    PoT,
    #[serde(rename = "cot+critic")]
    CoTCritic,
    #[serde(rename = "cot+i-critic")]
    CoTICritic,
    #[serde(rename = "cot+cal")]
    CoTCal,
    #[serde(rename = "cot+critic+cal")]
    CoTCriticCal,
    #[serde(rename = "cot+i-critic+cal")]
    CoTICriticCal,
}

impl PipelineId {
    pub const ALL: [PipelineId; 7] = [
        PipelineId::CoT,
        PipelineId::PoT,
        PipelineId::CoTCritic,
        PipelineId::CoTICritic,
        PipelineId::CoTCal,
        PipelineId::CoTCriticCal,
        PipelineId::CoTICriticCal,
    ];

    /// Command-line name, e.g. `cot+i-critic+cal`.
    pub fn name(self) -> &'static str {
        match self {
            PipelineId::CoT => "cot",
            PipelineId::PoT => "pot",
            PipelineId::CoTCritic => "cot+critic",
            PipelineId::CoTICritic => "cot+i-critic",
            PipelineId::CoTCal => "cot+cal",
            PipelineId::CoTCriticCal => "cot+critic+cal",
            PipelineId::CoTICriticCal => "cot+i-critic+cal",
        }
    }

    /// Row label as printed in result tables.
    pub fn label(self) -> &'static str {
        match self {
            PipelineId::CoT => "CoT",
            PipelineId::PoT => "PoT",
            PipelineId::CoTCritic => "CoT+critic",
            PipelineId::CoTICritic => "CoT+i-critic",
            PipelineId::CoTCal => "CoT+cal",
            PipelineId::CoTCriticCal => "CoT+critic+cal",
            PipelineId::CoTICriticCal => "CoT+i-critic+cal",
        }
    }

    pub fn has_critic(self) -> bool {
        matches!(self, PipelineId::CoTCritic | PipelineId::CoTCriticCal)
    }

    pub fn has_icritic(self) -> bool {
        matches!(self, PipelineId::CoTICritic | PipelineId::CoTICriticCal)
    }

    /// True for pipelines with a critic or improved-critic stage.
    pub fn has_review(self) -> bool {
        self.has_critic() || self.has_icritic()
    }

    pub fn has_calculator(self) -> bool {
        matches!(
            self,
            PipelineId::CoTCal | PipelineId::CoTCriticCal | PipelineId::CoTICriticCal
        )
    }

    /// Analyst template used unless the spec overrides it: the variant with
    /// the scale warning for critic pipelines, the plain one otherwise.
    pub fn default_analyst_template(self) -> TemplateId {
        match self {
            PipelineId::PoT => TemplateId::PoT,
            id if id.has_critic() => TemplateId::CoTWithScaleNote,
            _ => TemplateId::CoT,
        }
    }
}

impl fmt::Display for PipelineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PipelineId {
    type Err = String;

    /// Accepts `cot+i-critic+cal`, `CoT+i-critic+cal` and `CoT_icritic_cal`.
    fn from_str(s: &str) -> Result<Self, String> {
        let key = s.to_ascii_lowercase().replace('_', "+").replace("icritic", "i-critic");
        PipelineId::ALL
            .into_iter()
            .find(|id| id.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = PipelineId::ALL.iter().map(|id| id.name()).collect();
                format!("unknown pipeline {s:?}; expected one of {}", names.join(", "))
            })
    }
}

fn default_repair_retries() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub id: PipelineId,
    /// Run the critic stage only on documents the analyst got wrong.
    #[serde(default)]
    pub oracle_mode: bool,
    #[serde(default = "default_repair_retries")]
    pub repair_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot_template: Option<TemplateId>,
}

pub const MAX_REPAIR_RETRIES: u32 = 5;

impl PipelineSpec {
    pub fn new(id: PipelineId) -> Self {
        Self {
            id,
            oracle_mode: false,
            repair_retries: default_repair_retries(),
            cot_template: None,
        }
    }

    pub fn with_oracle(mut self, oracle_mode: bool) -> Self {
        self.oracle_mode = oracle_mode;
        self
    }

    pub fn with_repair_retries(mut self, retries: u32) -> Self {
        self.repair_retries = retries;
        self
    }

    pub fn with_cot_template(mut self, template: TemplateId) -> Self {
        self.cot_template = Some(template);
        self
    }

    pub fn analyst_template(&self) -> TemplateId {
        self.cot_template
            .unwrap_or_else(|| self.id.default_analyst_template())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |why: String| Err(PipelineError::InvalidSpec(why));
        if self.oracle_mode && !self.id.has_review() {
            return invalid(format!(
                "oracle mode gates the critic stage, and {} has none",
                self.id.label()
            ));
        }
        if self.repair_retries > MAX_REPAIR_RETRIES {
            return invalid(format!("repair_retries must be at most {MAX_REPAIR_RETRIES}"));
        }
        match (self.id, self.cot_template) {
            (_, None) => Ok(()),
            (PipelineId::PoT, Some(TemplateId::PoT)) => Ok(()),
            (PipelineId::PoT, Some(t)) => invalid(format!("PoT cannot use template {t}")),
            (_, Some(TemplateId::CoT | TemplateId::CoTWithScaleNote)) => Ok(()),
            (_, Some(t)) => invalid(format!("{t} is not an analyst template")),
        }
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id.label())?;
        if self.oracle_mode {
            f.write_str(" (oracle)")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Maintained,
    Updated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageFlag {
    /// No parseable answer after all repair attempts.
    Unanswered,
    ExecutorDisabled,
    SandboxTimeout,
    SandboxNonNumericOutput,
    SandboxFailed,
    /// Calculator extraction reply never parsed; prior answer passed through.
    ExtractionFailed,
    /// Some extracted equations were outside the grammar.
    ChainsDropped,
    /// Calculator improve reply never parsed; prior answer passed through.
    ImproveFailed,
    /// i-critic review reply never parsed; prior answer maintained.
    ReviewUnparsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedChain {
    pub raw: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    pub answer: StructuredAnswer,
    /// Reply the answer was read from, forwarded verbatim to later stages.
    pub raw_response: String,
    pub transcript_turns: Range<usize>,
    /// Present iff `stage` is the calculator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calc_corrections: Option<Vec<EquationChain>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_chains: Vec<DroppedChain>,
    /// Present iff `stage` is the improved critic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<StageFlag>,
}

impl StageResult {
    fn new(stage: Stage, answer: StructuredAnswer, raw_response: String, turns: Range<usize>) -> Self {
        Self {
            stage,
            answer,
            raw_response,
            transcript_turns: turns,
            calc_corrections: None,
            dropped_chains: Vec::new(),
            decision: None,
            flags: Vec::new(),
        }
    }
}

/// One gateway call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub stage: Stage,
    /// Which prompt of the stage: `cot`, `critique`, `review`, `extract`, ...
    pub step: String,
    pub template: TemplateId,
    /// 0 for the first attempt, then one per repair re-prompt.
    pub attempt: u32,
    pub cache_key: String,
    pub messages: Vec<Message>,
    pub response: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub doc_id: String,
    pub turns: Vec<Turn>,
}

impl Transcript {
    pub fn new(doc_id: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            turns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StageError {
    #[error("context length exceeded: {0}")]
    ContextLength(String),
    #[error(transparent)]
    Gateway(GatewayError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl From<GatewayError> for StageError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::ContextLengthExceeded(m) => StageError::ContextLength(m),
            other => StageError::Gateway(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("invalid pipeline spec: {0}")]
    InvalidSpec(String),
    #[error("document {doc_id}: oracle mode needs a gold answer")]
    OracleWithoutGold { doc_id: String },
    #[error("document {doc_id}: {source}")]
    Gateway {
        doc_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("document {doc_id}: {source}")]
    Render {
        doc_id: String,
        #[source]
        source: RenderError,
    },
}

/// Model settings shared by every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub executor: Executor,
    pub sandbox_timeout: Duration,
}

impl AgentSettings {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            executor: Executor::Disabled,
            sandbox_timeout: DEFAULT_SANDBOX_TIMEOUT,
        }
    }
}

/// The agents, bound to a gateway and a process launcher for PoT.
pub struct Agents<'a> {
    gateway: &'a Gateway,
    settings: &'a AgentSettings,
    launcher: &'a dyn ProcessLauncher,
    spec: PipelineSpec,
}

/// Output of one document run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub record: EvalRecord,
    pub stages: Vec<StageResult>,
    pub transcript: Transcript,
}

impl<'a> Agents<'a> {
    pub fn new(
        gateway: &'a Gateway,
        settings: &'a AgentSettings,
        launcher: &'a dyn ProcessLauncher,
        spec: PipelineSpec,
    ) -> Self {
        Self {
            gateway,
            settings,
            launcher,
            spec,
        }
    }

    pub fn spec(&self) -> &PipelineSpec {
        &self.spec
    }

    /// Runs the configured pipeline on one document.
    ///
    /// Model-side failures (unparseable answers, wrong answers) end up in
    /// the record. A context-length rejection at any stage marks the record
    /// omitted. Only infrastructure failures are returned as errors.
    pub fn run_pipeline(
        &self,
        doc: &Document,
        gold: Option<&GoldAnswer>,
    ) -> Result<PipelineRun, PipelineError> {
        let spec = &self.spec;
        spec.validate()?;
        if spec.oracle_mode && gold.is_none() {
            return Err(PipelineError::OracleWithoutGold {
                doc_id: doc.id.clone(),
            });
        }

        let mut transcript = Transcript::new(&doc.id);
        let mut stages = Vec::new();
        let mut review_invoked = false;
        let outcome = self.run_stages(doc, gold, &mut transcript, &mut stages, &mut review_invoked);

        let omission = match outcome {
            Ok(()) => None,
            Err(StageError::ContextLength(reason)) => Some(reason),
            Err(StageError::Gateway(source)) => {
                return Err(PipelineError::Gateway {
                    doc_id: doc.id.clone(),
                    source,
                })
            }
            Err(StageError::Render(source)) => {
                return Err(PipelineError::Render {
                    doc_id: doc.id.clone(),
                    source,
                })
            }
        };
        let record = build_record(doc, spec, gold, &stages, review_invoked, omission, transcript.len());
        Ok(PipelineRun {
            record,
            stages,
            transcript,
        })
    }

    fn run_stages(
        &self,
        doc: &Document,
        gold: Option<&GoldAnswer>,
        transcript: &mut Transcript,
        stages: &mut Vec<StageResult>,
        review_invoked: &mut bool,
    ) -> Result<(), StageError> {
        let id = self.spec.id;
        let analyst = if id == PipelineId::PoT {
            self.run_pot(doc, transcript)?
        } else {
            self.run_cot(doc, transcript)?
        };
        stages.push(analyst);

        if id.has_review() {
            let analyst = stages.last().unwrap();
            let analyst_right = gold.is_some_and(|g| is_correct(g, analyst.answer.answer_value));
            if !(self.spec.oracle_mode && analyst_right) {
                *review_invoked = true;
                let reviewed = if id.has_critic() {
                    self.run_critic_stage(doc, analyst, transcript)?
                } else {
                    self.run_icritic_stage(doc, analyst, transcript)?
                };
                stages.push(reviewed);
            }
        }

        if id.has_calculator() {
            let prior = stages.last().unwrap();
            let calc = self.run_calculator_stage(doc, prior, transcript)?;
            stages.push(calc);
        }
        Ok(())
    }
}

fn build_record(
    doc: &Document,
    spec: &PipelineSpec,
    gold: Option<&GoldAnswer>,
    stages: &[StageResult],
    review_invoked: bool,
    omission: Option<String>,
    gateway_calls: usize,
) -> EvalRecord {
    let correct = |s: &StageResult| gold.map(|g| is_correct(g, s.answer.answer_value));
    let omitted = omission.is_some();
    let final_stage = stages.last();
    let analyst = stages.first();
    let review = stages
        .iter()
        .find(|s| matches!(s.stage, Stage::Critic | Stage::ICritic));

    let flip = match (spec.id.has_review() && !omitted, gold, analyst) {
        (true, Some(_), Some(analyst)) => Some(match review {
            Some(review) => Flip::between(correct(analyst).unwrap(), correct(review).unwrap()),
            None => Flip::Unchanged,
        }),
        _ => None,
    };
    let change_kind = match (flip, analyst, review) {
        (Some(Flip::CtoW | Flip::WtoC), Some(before), Some(after)) => {
            Some(classify_change(&before.answer, &after.answer))
        }
        _ => None,
    };
    let decision = review.and_then(|r| r.decision);
    let confident = if spec.id.has_icritic() && !omitted {
        decision.map(|d| d == Decision::Maintained)
    } else {
        None
    };

    EvalRecord {
        doc_id: doc.id.clone(),
        spec: spec.clone(),
        stage_answers: stages.iter().map(|s| (s.stage, s.answer.clone())).collect(),
        stage_correct: stages
            .iter()
            .filter_map(|s| correct(s).map(|c| (s.stage, c)))
            .collect(),
        final_answer: final_stage.map(|s| s.answer.answer_raw.clone()),
        final_value: if omitted {
            None
        } else {
            final_stage.and_then(|s| s.answer.answer_value)
        },
        final_correct: !omitted && final_stage.and_then(correct).unwrap_or(false),
        flip,
        change_kind,
        confident,
        decision,
        review_invoked: spec.id.has_review().then_some(review_invoked),
        calc_corrections: stages
            .iter()
            .filter_map(|s| s.calc_corrections.as_ref())
            .flatten()
            .map(|c| c.corrected())
            .collect(),
        flags: stages
            .iter()
            .flat_map(|s| {
                s.flags.iter().map(|&flag| RecordFlag {
                    stage: s.stage,
                    flag,
                })
            })
            .collect(),
        omitted,
        omission_reason: omission,
        gateway_calls,
    }
}

#[cfg(test)]
mod tests;
