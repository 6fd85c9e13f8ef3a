//! `numqa run`: a pipeline over a dataset slice, with artifacts on disk.
//!
//! Output directory layout:
//!
//! ```text
//! manifest.json         config, dataset digest, per-document transcript paths and cache keys
//! records.jsonl         one EvalRecord per document, in dataset order
//! report.json           RunSummary (accuracy, analyst accuracy, flips, confidence)
//! report.txt            the same, as text
//! transcripts/<id>.json every gateway call of one document
//! run_stats.json        gateway counters and wall time; the only nondeterministic file
//! cache/                transcript cache, reused on rerun
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::Context;
use numqa_core::answer::GoldAnswer;
use numqa_core::dataset::{load_finqa_with_report, load_tatqa_with_report, Document, IngestionReport, Source, TatqaOptions};
use numqa_core::gateway::{BackendKind, ChatBackend, Gateway, GatewayConfig, GatewayStats, TranscriptCache};
use numqa_core::pipeline::{
    AgentSettings, Agents, Executor, PipelineError, PipelineRun, PipelineSpec, ProcessLauncher, SystemLauncher,
};
use numqa_core::prompt::{template, TemplateId, TEMPLATE_VERSION};
use numqa_core::report::{EvalRecord, RunSummary};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{fail, Categorize, Category, CliResult};
use crate::mock_script::MockScript;
use crate::slice::{select, Slice};

#[derive(Debug, Clone, PartialEq)]
pub enum BackendChoice {
    Mock { script: PathBuf },
    Live,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Source,
    pub data_path: PathBuf,
    pub spec: PipelineSpec,
    pub backend: BackendChoice,
    pub gateway: GatewayConfig,
    pub slice: Option<Slice>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub concurrency: usize,
    pub executor: Executor,
    pub sandbox_timeout: Duration,
    pub cache: bool,
    /// Model label for mock runs; live runs use the configured model.
    pub model: Option<String>,
    pub tatqa: TatqaOptions,
}

impl RunConfig {
    pub fn new(dataset: Source, data_path: impl Into<PathBuf>, spec: PipelineSpec, out: impl Into<PathBuf>) -> Self {
        Self {
            dataset,
            data_path: data_path.into(),
            spec,
            backend: BackendChoice::Live,
            gateway: GatewayConfig::default(),
            slice: None,
            seed: None,
            out: out.into(),
            concurrency: 1,
            executor: Executor::Disabled,
            sandbox_timeout: numqa_core::pipeline::DEFAULT_SANDBOX_TIMEOUT,
            cache: true,
            model: None,
            tatqa: TatqaOptions::default(),
        }
    }

    pub fn with_mock(mut self, script: impl Into<PathBuf>) -> Self {
        self.backend = BackendChoice::Mock { script: script.into() };
        self
    }
}

/// A document that failed for infrastructure reasons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentFailure {
    pub doc_id: String,
    pub category: String,
    pub message: String,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub records: Vec<EvalRecord>,
    pub failures: Vec<DocumentFailure>,
    pub summary: RunSummary,
    pub stats: GatewayStats,
}

pub fn load_documents(source: Source, path: &Path, tatqa: &TatqaOptions) -> CliResult<(Vec<Document>, IngestionReport)> {
    if !path.is_file() {
        return fail(Category::Io, format!("dataset file {} not found", path.display()));
    }
    let loaded = match source {
        Source::Tatqa => load_tatqa_with_report(path, tatqa),
        Source::Finqa => load_finqa_with_report(path),
    };
    loaded.category(Category::Io)
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .category(Category::Io)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// File name for a document's transcript.
pub fn transcript_file(doc_id: &str) -> String {
    let safe: String = doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("transcripts/{safe}.json")
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut body = serde_json::to_string_pretty(value).category(Category::Io)?;
    body.push('\n');
    fs::write(path, body)
        .with_context(|| format!("writing {}", path.display()))
        .category(Category::Io)
}

struct Backend {
    backend: Box<dyn ChatBackend>,
    model: String,
    description: serde_json::Value,
    sequential: bool,
}

fn build_backend(cfg: &RunConfig) -> CliResult<Backend> {
    match &cfg.backend {
        BackendChoice::Mock { script } => {
            let parsed = MockScript::load(script)
                .with_context(|| format!("mock script {}", script.display()))
                .category(if script.is_file() { Category::Config } else { Category::Io })?;
            let model = cfg.model.clone().or(parsed.model.clone()).unwrap_or_else(|| "mock".into());
            Ok(Backend {
                backend: parsed.backend().category(Category::Config)?,
                description: json!({
                    "kind": "mock",
                    "script": script.display().to_string(),
                    "script_sha256": sha256_file(script)?,
                }),
                model,
                sequential: parsed.is_sequential(),
            })
        }
        BackendChoice::Live => {
            let e = &cfg.gateway.endpoint;
            if e.kind == BackendKind::Mock {
                return fail(Category::Config, "config selects the mock backend; pass --mock-script");
            }
            Ok(Backend {
                backend: Box::new(cfg.gateway.live_backend().category(Category::Config)?),
                description: json!({ "kind": "openai", "base_url": e.base_url }),
                model: e.model.clone(),
                sequential: false,
            })
        }
    }
}

pub fn cmd_run(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let started = Instant::now();
    cfg.spec.validate().category(Category::Config)?;
    cfg.gateway.validate().category(Category::Config)?;
    if cfg.concurrency == 0 {
        return fail(Category::Config, "--concurrency must be at least 1");
    }

    let (all_docs, ingestion) = load_documents(cfg.dataset, &cfg.data_path, &cfg.tatqa)?;
    let picked = select(all_docs.len(), cfg.slice, cfg.seed);
    let docs: Vec<&Document> = picked.iter().map(|&i| &all_docs[i]).collect();
    let golds: BTreeMap<String, GoldAnswer> = docs.iter().map(|d| (d.id.clone(), d.gold.clone())).collect();

    let backend = build_backend(cfg)?;
    let mut workers = cfg.concurrency;
    if backend.sequential && workers > 1 {
        log::warn!("mock script has a flat turn list; running with one worker");
        workers = 1;
    }

    fs::create_dir_all(cfg.out.join("transcripts"))
        .with_context(|| format!("creating {}", cfg.out.display()))
        .category(Category::Io)?;
    let mut gateway = Gateway::from_boxed(backend.backend)
        .with_retry(cfg.gateway.retry.clone())
        .with_context_window(cfg.gateway.limits.context_window)
        .with_max_in_flight(cfg.gateway.limits.max_in_flight.min(workers).max(1));
    if cfg.cache && cfg.gateway.cache.enabled {
        gateway = gateway.with_cache(TranscriptCache::open(cfg.out.join(&cfg.gateway.cache.dir)).category(Category::Io)?);
    }

    let mut settings = AgentSettings::new(&backend.model);
    settings.temperature = cfg.gateway.endpoint.temperature;
    settings.max_tokens = cfg.gateway.endpoint.max_tokens;
    settings.executor = cfg.executor.clone();
    settings.sandbox_timeout = cfg.sandbox_timeout;
    let launcher = SystemLauncher;
    let agents = Agents::new(&gateway, &settings, &launcher as &dyn ProcessLauncher, cfg.spec.clone());

    let results = run_documents(&agents, &docs, &golds, workers);

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut manifest_docs = Vec::new();
    for (doc, result) in docs.iter().zip(results) {
        match result {
            Ok(run) => {
                let file = transcript_file(&doc.id);
                write_json(&cfg.out.join(&file), &run.transcript)?;
                manifest_docs.push(json!({
                    "doc_id": doc.id,
                    "transcript": file,
                    "cache_keys": run.transcript.turns.iter().map(|t| &t.cache_key).collect::<Vec<_>>(),
                    "omitted": run.record.omitted,
                }));
                records.push(run.record);
            }
            Err(e) => {
                let category = match e {
                    PipelineError::Render { .. } | PipelineError::InvalidSpec(_) => Category::Config,
                    _ => Category::Backend,
                };
                log::error!("{}: {e}", doc.id);
                manifest_docs.push(json!({ "doc_id": doc.id, "failed": category.name() }));
                failures.push(DocumentFailure {
                    doc_id: doc.id.clone(),
                    category: category.name().into(),
                    message: e.to_string(),
                });
            }
        }
    }

    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r).category(Category::Io)?);
        jsonl.push('\n');
    }
    fs::write(cfg.out.join("records.jsonl"), jsonl).category(Category::Io)?;

    let summary = RunSummary::from_records(
        cfg.spec.clone(),
        cfg.dataset.to_string(),
        &backend.model,
        &records,
        &golds,
    )
    .category(Category::Config)?;
    write_json(&cfg.out.join("report.json"), &summary)?;
    fs::write(cfg.out.join("report.txt"), summary_text(&summary)).category(Category::Io)?;

    let templates: BTreeMap<&str, String> = TemplateId::ALL.iter().map(|&id| (id.name(), template(id).digest())).collect();
    let manifest = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "spec": cfg.spec,
        "model": backend.model,
        "backend": backend.description,
        "temperature": settings.temperature,
        "max_tokens": settings.max_tokens,
        "executor": cfg.executor,
        "dataset": {
            "source": cfg.dataset,
            "path": cfg.data_path.display().to_string(),
            "sha256": ingestion.sha256,
            "kept": ingestion.kept,
        },
        "slice": cfg.slice.map(|s| s.to_string()),
        "seed": cfg.seed,
        "template_version": TEMPLATE_VERSION,
        "templates": templates,
        "documents": manifest_docs,
        "failures": failures,
    });
    write_json(&cfg.out.join("manifest.json"), &manifest)?;

    let stats = gateway.stats();
    write_json(
        &cfg.out.join("run_stats.json"),
        &json!({
            "backend_calls": stats.backend_calls,
            "cache_hits": stats.cache_hits,
            "retries": stats.retries,
            "documents": docs.len(),
            "failures": failures.len(),
            "workers": workers,
            "elapsed_ms": started.elapsed().as_millis() as u64,
        }),
    )?;

    Ok(RunOutcome {
        out: cfg.out.clone(),
        records,
        failures,
        summary,
        stats,
    })
}

/// Runs every document on a pool of `workers` threads. Results come back
/// in document order whatever the completion order.
fn run_documents(
    agents: &Agents<'_>,
    docs: &[&Document],
    golds: &BTreeMap<String, GoldAnswer>,
    workers: usize,
) -> Vec<Result<PipelineRun, PipelineError>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<PipelineRun, PipelineError>>>> = Mutex::new(docs.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(docs.len()).max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(doc) = docs.get(i) else { break };
                let result = agents.run_pipeline(doc, golds.get(&doc.id));
                log::info!("[{}/{}] {}", i + 1, docs.len(), doc.id);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every document ran"))
        .collect()
}

pub fn summary_text(s: &RunSummary) -> String {
    let a = &s.accuracy;
    let mut out = format!(
        "spec      {}\ndataset   {}\nmodel     {}\nscored    {} (omitted {})\naccuracy  {} (int {}, float {})\n",
        s.spec, s.dataset, s.model, a.n_scored, a.n_omitted, a.accuracy, a.accuracy_int, a.accuracy_float
    );
    if s.spec.id.has_review() || s.spec.id.has_calculator() {
        out.push_str(&format!("analyst   {}\n", s.analyst_accuracy.accuracy));
    }
    if let Some(f) = &s.flips {
        out.push_str(&format!(
            "flips     C->W {} (minor {}), W->C {} (minor {}), unchanged {}\n",
            f.c_to_w, f.c_to_w_minor, f.w_to_c, f.w_to_c_minor, f.unchanged
        ));
    }
    if let Some(c) = &s.confidence {
        out.push_str(&format!(
            "confident {} (not assessed {}); correct|conf {}, incorrect|conf {}, correct|not conf {}, incorrect|not conf {}\n",
            c.conf, c.not_assessed, c.corr_given_conf, c.incorr_given_conf, c.corr_given_notconf, c.incorr_given_notconf
        ));
    }
    out
}
