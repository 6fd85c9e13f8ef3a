//! The individual agent stages.

use crate::answer::{extract_equation_list, extract_structured_answer, AnswerParseError, Stage, StructuredAnswer};
use crate::dataset::Document;
use crate::expr::{eval_equation_chain, EquationChain};
use crate::gateway::{ChatRequest, ChatResponse, Message, TranscriptCacheKey};
use crate::prompt::{render, serialize_table, Bindings, Placeholder, TemplateId};

use super::executor::{execute, extract_program, parse_program_output, CodeExecutionRequest, ExecutionError};
use super::{Agents, Decision, DroppedChain, StageError, StageFlag, StageResult, Transcript, Turn};

/// Follow-up sent after a reply that did not contain the requested JSON.
pub const REPAIR_INSTRUCTION: &str =
    "Output only the JSON object in the requested format and nothing else.";

/// The `"correct calculations"` block: `['expr=value', 'expr=value']`.
pub fn format_corrections(chains: &[EquationChain]) -> String {
    let items: Vec<String> = chains.iter().map(|c| format!("'{}'", c.corrected())).collect();
    format!("[{}]", items.join(", "))
}

/// Where a gateway call sits in the pipeline.
struct Step<'d> {
    doc: &'d Document,
    stage: Stage,
    name: &'static str,
    template: TemplateId,
}

impl<'d> Step<'d> {
    fn new(doc: &'d Document, stage: Stage, name: &'static str, template: TemplateId) -> Self {
        Self {
            doc,
            stage,
            name,
            template,
        }
    }
}

struct Reply<T> {
    parsed: Option<T>,
    raw: String,
}

fn context(doc: &Document) -> Bindings {
    Bindings::new()
        .with(Placeholder::Text, doc.text())
        .with(Placeholder::Table, serialize_table(&doc.table))
        .with(Placeholder::Question, &doc.question)
}

impl Agents<'_> {
    fn send(
        &self,
        step: &Step,
        attempt: u32,
        messages: Vec<Message>,
        transcript: &mut Transcript,
    ) -> Result<ChatResponse, StageError> {
        let req = ChatRequest {
            model_id: self.settings.model_id.clone(),
            messages,
            temperature: self.settings.temperature,
            max_tokens: self.settings.max_tokens,
            document_id: Some(step.doc.id.clone()),
        };
        let response = self.gateway.complete(&req)?;
        transcript.turns.push(Turn {
            stage: step.stage,
            step: step.name.to_owned(),
            template: step.template,
            attempt,
            cache_key: TranscriptCacheKey::for_request(&req).to_string(),
            messages: req.messages,
            response: response.content.clone(),
            finish_reason: response.finish_reason,
        });
        Ok(response)
    }

    /// Sends `prompt` and parses the reply, re-prompting on malformed or
    /// truncated replies up to the spec's repair budget.
    fn ask<T>(
        &self,
        step: &Step,
        prompt: &str,
        transcript: &mut Transcript,
        parse: impl Fn(&str) -> Result<T, AnswerParseError>,
    ) -> Result<Reply<T>, StageError> {
        let mut messages = vec![Message::user(prompt)];
        let mut attempt = 0;
        loop {
            let response = self.send(step, attempt, messages.clone(), transcript)?;
            let parsed = if response.is_truncated() {
                None
            } else {
                parse(&response.content).ok()
            };
            if parsed.is_some() || attempt >= self.spec.repair_retries {
                if parsed.is_none() {
                    log::warn!(
                        "{}: {} {} reply unparseable after {} attempts",
                        step.doc.id,
                        step.stage,
                        step.name,
                        attempt + 1
                    );
                }
                return Ok(Reply {
                    parsed,
                    raw: response.content,
                });
            }
            attempt += 1;
            messages = vec![
                Message::user(prompt),
                Message::assistant(response.content),
                Message::user(REPAIR_INSTRUCTION),
            ];
        }
    }

    fn ask_answer(
        &self,
        step: &Step,
        bindings: &Bindings,
        transcript: &mut Transcript,
    ) -> Result<Reply<StructuredAnswer>, StageError> {
        let prompt = render(step.template, bindings)?;
        self.ask(step, &prompt, transcript, |text| {
            extract_structured_answer(text, step.stage)
        })
    }

    /// Analyst agent, chain-of-thought.
    pub fn run_cot(&self, doc: &Document, transcript: &mut Transcript) -> Result<StageResult, StageError> {
        let start = transcript.len();
        let template = self.spec.analyst_template();
        let step = Step::new(doc, Stage::CoT, "cot", template);
        let reply = self.ask_answer(&step, &context(doc), transcript)?;
        Ok(answered(Stage::CoT, reply, start..transcript.len()))
    }

    /// Analyst agent, program-of-thought. The program only runs if an
    /// external sandbox is configured.
    pub fn run_pot(&self, doc: &Document, transcript: &mut Transcript) -> Result<StageResult, StageError> {
        let start = transcript.len();
        let prompt = render(TemplateId::PoT, &context(doc))?;
        let step = Step::new(doc, Stage::PoT, "pot", TemplateId::PoT);
        let response = self.send(&step, 0, vec![Message::user(prompt)], transcript)?;
        let program = extract_program(&response.content);
        let request = CodeExecutionRequest {
            program_text: program.clone(),
            timeout: self.settings.sandbox_timeout,
            executor: self.settings.executor.clone(),
        };
        let (answer_raw, flag) = match execute(&request, self.launcher) {
            Ok(out) => match last_output_line(&out.stdout) {
                Some(line) if parse_program_output(line).is_some() => (line.to_owned(), None),
                _ => (String::new(), Some(StageFlag::SandboxNonNumericOutput)),
            },
            Err(ExecutionError::Disabled) => (String::new(), Some(StageFlag::ExecutorDisabled)),
            Err(ExecutionError::Timeout(_)) => (String::new(), Some(StageFlag::SandboxTimeout)),
            Err(e) => {
                log::warn!("{}: sandbox failed: {e}", doc.id);
                (String::new(), Some(StageFlag::SandboxFailed))
            }
        };
        let answer = StructuredAnswer::new(vec![program], answer_raw, Stage::PoT);
        let mut result = StageResult::new(Stage::PoT, answer, response.content, start..transcript.len());
        result.flags.extend(flag);
        Ok(result)
    }

    /// Critic agent: a free-text critique of the prior response, then the
    /// analyst revises with the critique in view.
    pub fn run_critic_stage(
        &self,
        doc: &Document,
        prior: &StageResult,
        transcript: &mut Transcript,
    ) -> Result<StageResult, StageError> {
        let start = transcript.len();
        let critique_prompt = render(
            TemplateId::CriticCritique,
            &context(doc).with(Placeholder::CotOutput, &prior.raw_response),
        )?;
        let step = Step::new(doc, Stage::Critic, "critique", TemplateId::CriticCritique);
        let critique = self.send(&step, 0, vec![Message::user(critique_prompt)], transcript)?;
        let bindings = context(doc)
            .with(Placeholder::CotOutput, &prior.raw_response)
            .with(Placeholder::CriticOutput, critique.content);
        let step = Step::new(doc, Stage::Critic, "final", TemplateId::CriticFinal);
        let reply = self.ask_answer(&step, &bindings, transcript)?;
        Ok(answered(Stage::Critic, reply, start..transcript.len()))
    }

    /// Improved critic: self-review, then reconcile only if the answer moved.
    pub fn run_icritic_stage(
        &self,
        doc: &Document,
        prior: &StageResult,
        transcript: &mut Transcript,
    ) -> Result<StageResult, StageError> {
        let start = transcript.len();
        let step = Step::new(doc, Stage::ICritic, "review", TemplateId::ICriticReview);
        let review = self.ask_answer(
            &step,
            &context(doc).with(Placeholder::CotOutput, &prior.raw_response),
            transcript,
        )?;

        // Maintained iff the review's numeric answer equals the prior one.
        let maintained = review
            .parsed
            .as_ref()
            .map(|r| r.answer_value.is_some() && r.answer_value == prior.answer.answer_value);
        let mut result = match maintained {
            Some(false) => {
                let bindings = Bindings::new()
                    .with(Placeholder::CotOutput, &prior.raw_response)
                    .with(Placeholder::ICriticOutput, &review.raw);
                let step = Step::new(doc, Stage::Reconcile, "reconcile", TemplateId::ICriticReconcile);
                let reply = self.ask_answer(&step, &bindings, transcript)?;
                let mut r = answered(Stage::ICritic, reply, start..transcript.len());
                r.decision = Some(Decision::Updated);
                r
            }
            kept => {
                let mut r = StageResult::new(
                    Stage::ICritic,
                    prior.answer.clone().with_stage(Stage::ICritic),
                    prior.raw_response.clone(),
                    start..transcript.len(),
                );
                r.decision = Some(Decision::Maintained);
                if kept.is_none() {
                    r.flags.push(StageFlag::ReviewUnparsed);
                }
                r
            }
        };
        result.stage = Stage::ICritic;
        Ok(result)
    }

    /// Calculator agent: extract the equations, recompute them, then ask the
    /// analyst to improve its answer with the correct results.
    pub fn run_calculator_stage(
        &self,
        doc: &Document,
        prior: &StageResult,
        transcript: &mut Transcript,
    ) -> Result<StageResult, StageError> {
        let start = transcript.len();
        let analyst_output = prior.raw_response.trim();
        let prompt = render(
            TemplateId::CalExtract,
            &Bindings::new().with(Placeholder::AnalystOutput, analyst_output),
        )?;
        let step = Step::new(doc, Stage::Calculator, "extract", TemplateId::CalExtract);
        let extraction = self.ask(&step, &prompt, transcript, extract_equation_list)?;

        let pass_through = |flags: Vec<StageFlag>, chains, dropped, end| {
            let mut r = StageResult::new(
                Stage::Calculator,
                prior.answer.clone().with_stage(Stage::Calculator),
                prior.raw_response.clone(),
                start..end,
            );
            r.calc_corrections = Some(chains);
            r.dropped_chains = dropped;
            r.flags = flags;
            r
        };

        let Some(equations) = extraction.parsed else {
            return Ok(pass_through(vec![StageFlag::ExtractionFailed], Vec::new(), Vec::new(), transcript.len()));
        };
        let mut chains = Vec::new();
        let mut dropped = Vec::new();
        for raw in equations {
            match eval_equation_chain(&raw) {
                Ok(chain) => chains.push(chain),
                Err(e) => {
                    log::warn!("{}: dropping equation {raw:?}: {e}", doc.id);
                    dropped.push(DroppedChain {
                        raw,
                        error: e.to_string(),
                    });
                }
            }
        }
        let mut flags = Vec::new();
        if !dropped.is_empty() {
            flags.push(StageFlag::ChainsDropped);
        }
        if chains.is_empty() {
            return Ok(pass_through(flags, chains, dropped, transcript.len()));
        }

        let bindings = Bindings::new()
            .with(Placeholder::AnalystOutput, analyst_output)
            .with(Placeholder::CalculatorOutput, format_corrections(&chains));
        let step = Step::new(doc, Stage::Calculator, "improve", TemplateId::CalImprove);
        let improved = self.ask_answer(&step, &bindings, transcript)?;
        let mut result = match improved.parsed {
            Some(answer) => StageResult::new(Stage::Calculator, answer, improved.raw, start..transcript.len()),
            None => {
                flags.push(StageFlag::ImproveFailed);
                pass_through(Vec::new(), Vec::new(), Vec::new(), transcript.len())
            }
        };
        result.calc_corrections = Some(chains);
        result.dropped_chains = dropped;
        result.flags = flags;
        Ok(result)
    }
}

fn answered(stage: Stage, reply: Reply<StructuredAnswer>, turns: std::ops::Range<usize>) -> StageResult {
    match reply.parsed {
        Some(answer) => StageResult::new(stage, answer, reply.raw, turns),
        None => {
            let mut r = StageResult::new(stage, StructuredAnswer::unanswered(stage), reply.raw, turns);
            r.flags.push(StageFlag::Unanswered);
            r
        }
    }
}

fn last_output_line(stdout: &str) -> Option<&str> {
    stdout.lines().rev().map(str::trim).find(|l| !l.is_empty())
}
