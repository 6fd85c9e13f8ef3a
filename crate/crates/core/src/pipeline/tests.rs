use super::*;
use crate::answer::GoldAnswer;
use crate::dataset::Source;
use crate::expr::eval_str;
use crate::gateway::{script_mock, MockFailure, MockTurn, RetryPolicy, Role};
use crate::prompt::TableBlock;
use crate::report::ChangeKind;

fn doc() -> Document {
    Document {
        id: "doc-1".into(),
        pre_text: "Other assets consist of the following (in thousands):".into(),
        table: [vec!["", "2019", "2018"], vec!["Other assets", "18,111", "9,521"]]
            .into_iter()
            .collect::<TableBlock>(),
        post_text: String::new(),
        question: "What was the change in Other assets in 2019 from 2018?".into(),
        gold: GoldAnswer::parse("8590").unwrap(),
        gold_text: "8590".into(),
        source: Source::Tatqa,
        scale: None,
        gold_transform: None,
        omitted: false,
    }
}

fn answer(steps: &[&str], value: &str) -> String {
    serde_json::json!({"steps": steps, "answer": value}).to_string()
}

fn gateway(turns: Vec<MockTurn>) -> Gateway {
    Gateway::new(script_mock(turns).unwrap()).with_retry(RetryPolicy::none())
}

struct Fixture {
    gateway: Gateway,
    settings: AgentSettings,
    launcher: CountingLauncher<FakeSandbox>,
}

impl Fixture {
    fn new(turns: Vec<MockTurn>) -> Self {
        Self {
            gateway: gateway(turns),
            settings: AgentSettings::new("test-model"),
            launcher: CountingLauncher::new(FakeSandbox::Evaluate),
        }
    }

    fn agents(&self, spec: PipelineSpec) -> Agents<'_> {
        Agents::new(&self.gateway, &self.settings, &self.launcher, spec)
    }

    fn run(&self, spec: PipelineSpec) -> PipelineRun {
        let d = doc();
        self.agents(spec).run_pipeline(&d, Some(&d.gold)).unwrap()
    }
}

/// Stands in for a Python sandbox: evaluates `print(<expr>)` with the safe
/// evaluator, or times out.
enum FakeSandbox {
    Evaluate,
    Hang,
}

impl ProcessLauncher for FakeSandbox {
    fn launch(&self, _: &[String], stdin: &str, timeout: Duration) -> Result<ProcessOutput, ExecutionError> {
        match self {
            FakeSandbox::Hang => Err(ExecutionError::Timeout(timeout)),
            FakeSandbox::Evaluate => {
                let expr = stdin.trim().strip_prefix("print(").and_then(|s| s.strip_suffix(')'));
                let stdout = match expr.map(eval_str) {
                    Some(Ok(v)) => format!("{v}\n"),
                    _ => "Traceback\n".to_owned(),
                };
                Ok(ProcessOutput {
                    status: Some(0),
                    stdout,
                    stderr: String::new(),
                })
            }
        }
    }
}

const RIGHT: &str = "$8,590";
const WRONG: &str = "$29,215";

#[test]
fn pipeline_ids_parse_from_labels() {
    for id in PipelineId::ALL {
        assert_eq!(id.name().parse::<PipelineId>().unwrap(), id);
        assert_eq!(id.label().parse::<PipelineId>().unwrap(), id);
    }
    assert_eq!("CoT_icritic_cal".parse::<PipelineId>().unwrap(), PipelineId::CoTICriticCal);
    assert!("cot+magic".parse::<PipelineId>().is_err());
    let json = serde_json::to_string(&PipelineSpec::new(PipelineId::CoTICritic)).unwrap();
    assert_eq!(json, r#"{"id":"cot+i-critic","oracle_mode":false,"repair_retries":1}"#);
}

#[test]
fn spec_validation() {
    assert!(PipelineSpec::new(PipelineId::CoTCritic).with_oracle(true).validate().is_ok());
    assert!(PipelineSpec::new(PipelineId::CoT).with_oracle(true).validate().is_err());
    assert!(PipelineSpec::new(PipelineId::CoTCal).with_oracle(true).validate().is_err());
    assert!(PipelineSpec::new(PipelineId::CoT).with_repair_retries(9).validate().is_err());
    assert!(PipelineSpec::new(PipelineId::CoT)
        .with_cot_template(TemplateId::CalExtract)
        .validate()
        .is_err());
    assert_eq!(
        PipelineSpec::new(PipelineId::CoTCriticCal).analyst_template(),
        TemplateId::CoTWithScaleNote
    );
    assert_eq!(PipelineSpec::new(PipelineId::CoTICritic).analyst_template(), TemplateId::CoT);
}

#[test]
fn oracle_mode_needs_gold() {
    let f = Fixture::new(vec![MockTurn::respond(answer(&[], RIGHT))]);
    let d = doc();
    let err = f
        .agents(PipelineSpec::new(PipelineId::CoTCritic).with_oracle(true))
        .run_pipeline(&d, None)
        .unwrap_err();
    assert!(matches!(err, PipelineError::OracleWithoutGold { .. }));
}

#[test]
fn cot_parses_and_scores() {
    let f = Fixture::new(vec![MockTurn::expecting("### Question", answer(&["18,111 - 9,521 = 8,590"], RIGHT))]);
    let run = f.run(PipelineSpec::new(PipelineId::CoT));
    assert_eq!(run.record.final_value, Some(8590.0));
    assert!(run.record.final_correct);
    assert_eq!(run.record.gateway_calls, 1);
    assert_eq!(run.record.flip, None);
    assert_eq!(run.transcript.turns[0].step, "cot");
    assert_eq!(run.stages[0].transcript_turns, 0..1);
}

#[test]
fn prose_only_exhausts_repairs_and_is_unanswered() {
    let f = Fixture::new(vec![MockTurn::respond("Sorry, I cannot."), MockTurn::respond("Still no.")]);
    let run = f.run(PipelineSpec::new(PipelineId::CoT));
    assert_eq!(run.record.gateway_calls, 2);
    assert_eq!(run.record.final_value, None);
    assert!(!run.record.final_correct);
    assert!(run.record.has_flag(StageFlag::Unanswered));

    let repair = &run.transcript.turns[1];
    assert_eq!(repair.attempt, 1);
    let roles: Vec<Role> = repair.messages.iter().map(|m| m.role).collect();
    assert_eq!(roles, [Role::User, Role::Assistant, Role::User]);
    assert_eq!(repair.messages[1].content, "Sorry, I cannot.");
    assert_eq!(repair.messages[2].content, REPAIR_INSTRUCTION);
}

#[test]
fn truncated_reply_is_not_parsed_as_final() {
    let f = Fixture::new(vec![
        MockTurn::truncated(answer(&[], WRONG)),
        MockTurn::respond(answer(&[], RIGHT)),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoT));
    assert_eq!(run.record.final_value, Some(8590.0));
    assert_eq!(run.record.gateway_calls, 2);
}

#[test]
fn repair_budget_zero_means_single_attempt() {
    let f = Fixture::new(vec![MockTurn::respond("nope")]);
    let run = f.run(PipelineSpec::new(PipelineId::CoT).with_repair_retries(0));
    assert_eq!(run.record.gateway_calls, 1);
    assert!(run.record.has_flag(StageFlag::Unanswered));
}

#[test]
fn pot_disabled_flags_and_never_launches() {
    let f = Fixture::new(vec![MockTurn::respond("``\nprint((18111-9521))\n``")]);
    let run = f.run(PipelineSpec::new(PipelineId::PoT));
    assert!(run.record.has_flag(StageFlag::ExecutorDisabled));
    assert!(!run.record.final_correct);
    assert_eq!(f.launcher.launches(), 0);
    assert_eq!(run.stages[0].answer.steps, ["print((18111-9521))"]);
}

#[test]
fn pot_with_sandbox_reads_printed_value() {
    let mut f = Fixture::new(vec![MockTurn::respond("```python\nprint((18111-9521))\n```")]);
    f.settings.executor = Executor::ExternalSandbox {
        command: vec!["python3".into(), "-".into()],
    };
    let run = f.run(PipelineSpec::new(PipelineId::PoT));
    assert_eq!(run.record.final_value, Some(8590.0));
    assert!(run.record.final_correct);
    assert_eq!(f.launcher.launches(), 1);
}

#[test]
fn pot_sandbox_timeout_and_garbage_output() {
    let mut f = Fixture::new(vec![MockTurn::respond("print(1)")]);
    f.settings.executor = Executor::ExternalSandbox { command: vec!["x".into()] };
    f.launcher = CountingLauncher::new(FakeSandbox::Hang);
    let run = f.run(PipelineSpec::new(PipelineId::PoT));
    assert!(run.record.has_flag(StageFlag::SandboxTimeout));

    let mut f = Fixture::new(vec![MockTurn::respond("print(x)")]);
    f.settings.executor = Executor::ExternalSandbox { command: vec!["x".into()] };
    let run = f.run(PipelineSpec::new(PipelineId::PoT));
    assert!(run.record.has_flag(StageFlag::SandboxNonNumericOutput));
}

#[test]
fn critic_fixed_point_keeps_answer() {
    let cot = answer(&["18,111 - 9,521 = 8,590"], RIGHT);
    let f = Fixture::new(vec![
        MockTurn::respond(&cot),
        MockTurn::expecting(&cot, "The response is correct, no changes."),
        MockTurn::expecting("The response is correct, no changes.", &cot),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTCritic));
    assert_eq!(run.record.gateway_calls, 3);
    assert_eq!(run.record.final_value, Some(8590.0));
    assert_eq!(run.record.flip, Some(Flip::Unchanged));
    assert_eq!(run.record.change_kind, None);
    assert_eq!(run.record.review_invoked, Some(true));
}

#[test]
fn critic_runs_on_unanswered_prior() {
    let f = Fixture::new(vec![
        MockTurn::respond("no json"),
        MockTurn::respond("still none"),
        MockTurn::expecting("still none", "Give a number."),
        MockTurn::respond(answer(&["x"], RIGHT)),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTCritic));
    assert_eq!(run.record.final_value, Some(8590.0));
    assert_eq!(run.record.flip, Some(Flip::WtoC));
    assert_eq!(run.record.change_kind, Some(ChangeKind::Major));
}

#[test]
fn icritic_maintained() {
    let f = Fixture::new(vec![
        MockTurn::respond(answer(&["a"], RIGHT)),
        MockTurn::expecting("### Previous answer", answer(&["a"], "8590")),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTICritic));
    assert_eq!(run.record.gateway_calls, 2);
    assert_eq!(run.record.decision, Some(Decision::Maintained));
    assert_eq!(run.record.confident, Some(true));
    assert_eq!(run.record.final_value, Some(8590.0));
}

#[test]
fn icritic_updated_then_reconciled_either_way() {
    for (reconciled, expected) in [("8590", 8590.0), ("29215", 29215.0)] {
        let f = Fixture::new(vec![
            MockTurn::respond(answer(&["a"], "8590")),
            MockTurn::respond(answer(&["b"], "29215")),
            MockTurn::expecting("### Second previous answer", answer(&["c"], reconciled)),
        ]);
        let run = f.run(PipelineSpec::new(PipelineId::CoTICritic));
        assert_eq!(run.record.gateway_calls, 3);
        assert_eq!(run.record.decision, Some(Decision::Updated));
        assert_eq!(run.record.confident, Some(false));
        assert_eq!(run.record.final_value, Some(expected));
        assert_eq!(run.stages[1].answer.source_stage, Stage::Reconcile);
        let second_prev = &run.transcript.turns[2].messages[0].content;
        assert!(second_prev.ends_with(&answer(&["b"], "29215")));
    }
}

#[test]
fn icritic_unparseable_review_maintains_and_flags() {
    let f = Fixture::new(vec![
        MockTurn::respond(answer(&["a"], RIGHT)),
        MockTurn::respond("hmm"),
        MockTurn::respond("hmm again"),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTICritic));
    assert_eq!(run.record.decision, Some(Decision::Maintained));
    assert!(run.record.has_flag(StageFlag::ReviewUnparsed));
}

#[test]
fn calculator_empty_extraction_returns_prior_without_improve() {
    let f = Fixture::new(vec![
        MockTurn::respond(answer(&["no arithmetic"], "2019")),
        MockTurn::expecting("no arithmetic", r#"{"answer": []}"#),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTCal));
    assert_eq!(run.record.gateway_calls, 2);
    assert_eq!(run.record.final_value, Some(2019.0));
    assert_eq!(run.stages[1].calc_corrections, Some(vec![]));
    assert!(run.record.flags.is_empty());
}

#[test]
fn calculator_drops_out_of_grammar_chains() {
    let f = Fixture::new(vec![
        MockTurn::respond(answer(&["2^3 = 8"], "8")),
        MockTurn::respond(r#"{"answer": ["2^3=8"]}"#),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTCal));
    assert_eq!(run.record.gateway_calls, 2);
    assert_eq!(run.record.final_value, Some(8.0));
    assert!(run.record.has_flag(StageFlag::ChainsDropped));
    assert_eq!(run.stages[1].dropped_chains[0].raw, "2^3=8");
}

#[test]
fn calculator_feeds_recomputed_values() {
    let f = Fixture::new(vec![
        MockTurn::respond(answer(&["(6077+1379)/2 = 3700", "1+1=3"], "3700")),
        MockTurn::respond(r#"{"answer": ["(6077+1379)/2=3700", "1+1=3", "2^2"]}"#),
        MockTurn::expecting("['(6077+1379)/2=3728', '1+1=2']", answer(&["(6077+1379)/2 = 3728"], "3728")),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTCal));
    assert_eq!(run.record.gateway_calls, 3);
    assert_eq!(run.record.final_value, Some(3728.0));
    assert_eq!(run.record.calc_corrections, ["(6077+1379)/2=3728", "1+1=2"]);
    assert!(run.record.has_flag(StageFlag::ChainsDropped));
}

#[test]
fn calculator_failed_extraction_passes_prior_through() {
    let f = Fixture::new(vec![
        MockTurn::respond(answer(&["x"], "12")),
        MockTurn::respond("I found no equations."),
        MockTurn::respond("None."),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTCal));
    assert_eq!(run.record.final_value, Some(12.0));
    assert!(run.record.has_flag(StageFlag::ExtractionFailed));
}

#[test]
fn oracle_skips_critic_when_cot_is_right() {
    let f = Fixture::new(vec![MockTurn::respond(answer(&[], RIGHT))]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTCritic).with_oracle(true));
    assert_eq!(run.record.gateway_calls, 1);
    assert_eq!(run.record.review_invoked, Some(false));
    assert_eq!(run.record.flip, Some(Flip::Unchanged));
    assert!(run.record.final_correct);
}

#[test]
fn oracle_runs_critic_when_cot_is_wrong() {
    let f = Fixture::new(vec![
        MockTurn::respond(answer(&[], WRONG)),
        MockTurn::respond("Wrong rows."),
        MockTurn::respond(answer(&[], RIGHT)),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTCritic).with_oracle(true));
    assert_eq!(run.record.gateway_calls, 3);
    assert_eq!(run.record.flip, Some(Flip::WtoC));
}

#[test]
fn oracle_icritic_skip_leaves_confidence_unassessed() {
    let f = Fixture::new(vec![MockTurn::respond(answer(&[], RIGHT))]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTICritic).with_oracle(true));
    assert_eq!(run.record.confident, None);
    assert_eq!(run.record.decision, None);
}

#[test]
fn composed_pipeline_runs_stages_in_order() {
    let f = Fixture::new(vec![
        MockTurn::respond(answer(&["a"], "8")),
        MockTurn::respond(answer(&["b"], "9")),
        MockTurn::respond(answer(&["c"], "8590")),
        MockTurn::respond(r#"{"answer": ["18111-9521"]}"#),
        MockTurn::expecting("['18111-9521=8590']", answer(&["c"], "8590")),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTICriticCal));
    let steps: Vec<&str> = run.transcript.turns.iter().map(|t| t.step.as_str()).collect();
    assert_eq!(steps, ["cot", "review", "reconcile", "extract", "improve"]);
    assert_eq!(run.record.gateway_calls, 5);
    assert!(run.record.final_correct);
    assert!(!run.record.stage_correct[&Stage::CoT]);
}

#[test]
fn context_length_marks_record_omitted() {
    let f = Fixture::new(vec![
        MockTurn::respond(answer(&[], RIGHT)),
        MockTurn::fail(MockFailure::ContextLength),
    ]);
    let run = f.run(PipelineSpec::new(PipelineId::CoTCritic));
    assert!(run.record.omitted);
    assert!(!run.record.final_correct);
    assert_eq!(run.record.flip, None);
    assert!(run.record.omission_reason.is_some());
}

#[test]
fn infrastructure_failures_are_errors() {
    let f = Fixture::new(vec![MockTurn::fail(MockFailure::Transport)]);
    let d = doc();
    let err = f
        .agents(PipelineSpec::new(PipelineId::CoT))
        .run_pipeline(&d, Some(&d.gold))
        .unwrap_err();
    assert!(matches!(err, PipelineError::Gateway { source: GatewayError::Transport(_), .. }));

    let f = Fixture::new(vec![MockTurn::respond(answer(&[], WRONG))]);
    let err = f
        .agents(PipelineSpec::new(PipelineId::CoTCritic))
        .run_pipeline(&d, Some(&d.gold))
        .unwrap_err();
    assert!(matches!(
        err,
        PipelineError::Gateway { source: GatewayError::MockScriptExhausted { calls: 1 }, .. }
    ));
}

#[test]
fn corrections_block_format() {
    let chains: Vec<_> = ["(1280/1366)*100", "1+1=3"]
        .iter()
        .map(|s| crate::expr::eval_equation_chain(s).unwrap())
        .collect();
    assert_eq!(format_corrections(&chains), "['(1280/1366)*100=93.70424597364568', '1+1=2']");
    assert_eq!(format_corrections(&[]), "[]");
}
