//! `numqa`: run agent pipelines over TATQA/FinQA, replay golden transcripts
//! and render reports.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success; wrong model answers are data, not errors |
//! | 2 | config: bad flags, config file or script |
//! | 3 | io: missing or unreadable input, unwritable output |
//! | 4 | backend: at least one document failed in the gateway or sandbox |
//! | 5 | mismatch: replay expectation or strict ingestion count not met |

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use numqa_cli::error::{fail, Categorize, Category, CliResult};
use numqa_cli::ingest_cmd::cmd_ingest;
use numqa_cli::replay_cmd::{describe, replay_file};
use numqa_cli::report_cmd::{cmd_report, Format};
use numqa_cli::run::summary_text;
use numqa_cli::slice::Slice;
use numqa_cli::{cmd_run, BackendChoice, RunConfig};
use numqa_core::dataset::{Source, TatqaOptions};
use numqa_core::gateway::{BackendKind, GatewayConfig};
use numqa_core::pipeline::{Executor, PipelineId, PipelineSpec};
use numqa_core::prompt::{template, Bindings, TemplateId};
use numqa_core::report::Layout;

#[derive(Parser)]
#[command(name = "numqa", version, about = "Analyst, critic and calculator agents for numerical QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline over a dataset slice.
    Run(Box<RunArgs>),
    /// Render a table layout across run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "table1")]
        layout: Layout,
        #[arg(long, default_value = "text")]
        format: Format,
    },
    /// Replay scripted transcripts and check their expected outcome.
    Replay {
        #[arg(required = true)]
        scripts: Vec<PathBuf>,
    },
    /// Prompt template utilities.
    Template {
        #[command(subcommand)]
        command: TemplateCommand,
    },
    /// Load a dataset file and print the reconciliation report.
    Ingest {
        #[arg(long)]
        dataset: DatasetArg,
        #[arg(long)]
        data_path: PathBuf,
        #[command(flatten)]
        tatqa: TatqaArgs,
        /// Exit 5 when the kept count differs from the published count.
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Subcommand)]
enum TemplateCommand {
    /// Print templates with their placeholders shown as `{name}`.
    Dump {
        /// Template name, e.g. `cot` or `cal_extract`; all when omitted.
        name: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Tatqa,
    Finqa,
}

impl From<DatasetArg> for Source {
    fn from(d: DatasetArg) -> Self {
        match d {
            DatasetArg::Tatqa => Source::Tatqa,
            DatasetArg::Finqa => Source::Finqa,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Openai,
}

#[derive(Args)]
struct TatqaArgs {
    /// TATQA answer types kept as numerical questions.
    #[arg(long, value_delimiter = ',', default_value = "arithmetic")]
    answer_types: Vec<String>,
    /// Multiply TATQA golds by their scale annotation.
    #[arg(long)]
    apply_scale: bool,
}

impl TatqaArgs {
    fn options(&self) -> TatqaOptions {
        TatqaOptions {
            answer_types: self.answer_types.clone(),
            apply_scale: self.apply_scale,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: DatasetArg,
    #[arg(long)]
    data_path: PathBuf,
    /// cot, pot, cot+critic, cot+i-critic, cot+cal, cot+critic+cal, cot+i-critic+cal.
    #[arg(long)]
    spec: PipelineId,
    /// Invoke the critic only on documents the analyst got wrong.
    #[arg(long)]
    oracle: bool,
    /// Re-prompts allowed for an unparseable reply (0 to 5).
    #[arg(long, default_value_t = 1)]
    repair_retries: u32,
    /// Analyst prompt override, e.g. `cot`.
    #[arg(long)]
    cot_template: Option<String>,
    /// Backend; defaults to the config file's, or openai without one.
    #[arg(long)]
    backend: Option<BackendArg>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Gateway config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// `N` for N documents or `START..END` for an index range.
    #[arg(long)]
    slice: Option<Slice>,
    /// Sample `--slice N` documents at random with this seed instead of the first N.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    /// Sandbox command for PoT programs, e.g. "python3 -I"; the program is
    /// piped to its stdin. PoT programs are not executed without it.
    #[arg(long)]
    executor: Option<String>,
    #[arg(long, default_value_t = 10)]
    sandbox_timeout_secs: u64,
    /// Model label recorded for mock runs.
    #[arg(long)]
    model: Option<String>,
    /// Do not read or write the transcript cache.
    #[arg(long)]
    no_cache: bool,
    #[command(flatten)]
    tatqa: TatqaArgs,
}

fn run_config(args: &RunArgs) -> CliResult<RunConfig> {
    let mut spec = PipelineSpec::new(args.spec)
        .with_oracle(args.oracle)
        .with_repair_retries(args.repair_retries);
    if let Some(name) = &args.cot_template {
        match TemplateId::from_name(name) {
            Some(id) => spec = spec.with_cot_template(id),
            None => return fail(Category::Config, format!("unknown template {name:?}")),
        }
    }
    let gateway = match &args.config {
        Some(path) if !path.is_file() => {
            return fail(Category::Io, format!("config file {} not found", path.display()))
        }
        Some(path) => GatewayConfig::load(path).category(Category::Config)?,
        None => GatewayConfig::default(),
    };
    let kind = match args.backend {
        Some(BackendArg::Mock) => BackendKind::Mock,
        Some(BackendArg::Openai) => BackendKind::OpenAi,
        None if args.mock_script.is_some() => BackendKind::Mock,
        None => gateway.endpoint.kind,
    };
    let backend = match (kind, &args.mock_script) {
        (BackendKind::Mock, Some(script)) => BackendChoice::Mock { script: script.clone() },
        (BackendKind::Mock, None) => return fail(Category::Config, "the mock backend needs --mock-script"),
        (BackendKind::OpenAi, Some(_)) => {
            return fail(Category::Config, "--mock-script given with the openai backend")
        }
        (BackendKind::OpenAi, None) => BackendChoice::Live,
    };
    let executor = match &args.executor {
        None => Executor::Disabled,
        Some(cmd) => {
            let command: Vec<String> = cmd.split_whitespace().map(str::to_owned).collect();
            if command.is_empty() {
                return fail(Category::Config, "--executor is empty");
            }
            Executor::ExternalSandbox { command }
        }
    };
    let mut cfg = RunConfig::new(args.dataset.into(), &args.data_path, spec, &args.out);
    cfg.backend = backend;
    cfg.gateway = gateway;
    cfg.slice = args.slice;
    cfg.seed = args.seed;
    cfg.concurrency = args.concurrency;
    cfg.executor = executor;
    cfg.sandbox_timeout = Duration::from_secs(args.sandbox_timeout_secs);
    cfg.cache = !args.no_cache;
    cfg.model = args.model.clone();
    cfg.tatqa = args.tatqa.options();
    Ok(cfg)
}

fn dump_templates(name: Option<&str>) -> CliResult<String> {
    let ids = match name {
        None => TemplateId::ALL.to_vec(),
        Some(n) => match TemplateId::from_name(n) {
            Some(id) => vec![id],
            None => return fail(Category::Config, format!("unknown template {n:?}")),
        },
    };
    let mut out = String::new();
    for id in ids {
        let t = template(id);
        let body = t.render(&Bindings::markers(&t.placeholders())).category(Category::Config)?;
        if name.is_none() {
            out.push_str(&format!("===== {id} ({})\n", t.digest()));
        }
        out.push_str(&body);
        out.push('\n');
    }
    Ok(out)
}

fn execute(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let outcome = cmd_run(&run_config(&args)?)?;
            print!("{}", summary_text(&outcome.summary));
            println!("artifacts {}", outcome.out.display());
            if outcome.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("{} document(s) failed:", outcome.failures.len());
                for f in &outcome.failures {
                    eprintln!("  {} [{}] {}", f.doc_id, f.category, f.message);
                }
                Ok(ExitCode::from(Category::Backend.exit_code()))
            }
        }
        Command::Report { runs, layout, format } => {
            print!("{}", cmd_report(&runs, layout, format)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { scripts } => {
            let mut failed = 0;
            for path in &scripts {
                let outcome = replay_file(path)?;
                if outcome.passed() {
                    println!("PASS {}", path.display());
                } else {
                    failed += 1;
                    println!("FAIL {}", path.display());
                    print!("{}", describe(&outcome.mismatches));
                }
            }
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(Category::Mismatch.exit_code())
            })
        }
        Command::Template {
            command: TemplateCommand::Dump { name },
        } => {
            print!("{}", dump_templates(name.as_deref())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Ingest {
            dataset,
            data_path,
            tatqa,
            strict,
        } => {
            let report = cmd_ingest(dataset.into(), &data_path, &tatqa.options())?;
            print!("{}", report.reconciliation());
            Ok(if strict && !report.matches_expected() {
                ExitCode::from(Category::Mismatch.exit_code())
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("numqa: {e}");
            ExitCode::from(e.category.exit_code())
        }
    }
}
