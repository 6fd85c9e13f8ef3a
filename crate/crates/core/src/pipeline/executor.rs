//! Program-of-thought execution hook.
//!
//! Generated programs never run in-process. With [`Executor::Disabled`] (the
//! default) every program is rejected before anything is spawned. With
//! [`Executor::ExternalSandbox`] the program is piped to an operator-supplied
//! command, e.g. a container or jail wrapping `python3 -`. Isolation and
//! filesystem grants are the operator's responsibility.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::normalize_numeric;

pub const DEFAULT_SANDBOX_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Executor {
    #[default]
    Disabled,
    /// argv of the sandbox command; the program arrives on stdin.
    ExternalSandbox { command: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeExecutionRequest {
    pub program_text: String,
    pub timeout: Duration,
    pub executor: Executor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessOutput {
    pub status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecutionError {
    #[error("program execution is disabled")]
    Disabled,
    #[error("sandbox exceeded {0:?}")]
    Timeout(Duration),
    #[error("could not start sandbox: {0}")]
    Launch(String),
    #[error("sandbox exited with status {status:?}: {stderr}")]
    Failed { status: Option<i32>, stderr: String },
}

pub trait ProcessLauncher: Send + Sync {
    fn launch(
        &self,
        command: &[String],
        stdin: &str,
        timeout: Duration,
    ) -> Result<ProcessOutput, ExecutionError>;
}

/// Spawns real processes with an empty environment apart from `PATH`.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemLauncher;

impl ProcessLauncher for SystemLauncher {
    fn launch(
        &self,
        command: &[String],
        stdin: &str,
        timeout: Duration,
    ) -> Result<ProcessOutput, ExecutionError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ExecutionError::Launch("empty sandbox command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args)
            .env_clear()
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Ok(path) = std::env::var("PATH") {
            cmd.env("PATH", path);
        }
        let mut child = cmd.spawn().map_err(|e| ExecutionError::Launch(e.to_string()))?;

        let mut child_stdin = child.stdin.take().expect("piped stdin");
        let input = stdin.to_owned();
        let writer = thread::spawn(move || {
            // A sandbox that exits early closes the pipe; that is not our error.
            let _ = child_stdin.write_all(input.as_bytes());
        });
        let stdout = drain(child.stdout.take().expect("piped stdout"));
        let stderr = drain(child.stderr.take().expect("piped stderr"));

        let started = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if started.elapsed() >= timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(ExecutionError::Timeout(timeout));
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(ExecutionError::Launch(e.to_string())),
            }
        };
        let _ = writer.join();
        Ok(ProcessOutput {
            status: status.code(),
            stdout: stdout.join().unwrap_or_default(),
            stderr: stderr.join().unwrap_or_default(),
        })
    }
}

fn drain(mut pipe: impl Read + Send + 'static) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Wraps a launcher and counts launch attempts.
#[derive(Debug, Default)]
pub struct CountingLauncher<L> {
    inner: L,
    launches: AtomicUsize,
}

impl<L> CountingLauncher<L> {
    pub fn new(inner: L) -> Self {
        Self {
            inner,
            launches: AtomicUsize::new(0),
        }
    }

    pub fn launches(&self) -> usize {
        self.launches.load(Ordering::SeqCst)
    }
}

impl<L: ProcessLauncher> ProcessLauncher for CountingLauncher<L> {
    fn launch(
        &self,
        command: &[String],
        stdin: &str,
        timeout: Duration,
    ) -> Result<ProcessOutput, ExecutionError> {
        self.launches.fetch_add(1, Ordering::SeqCst);
        self.inner.launch(command, stdin, timeout)
    }
}

/// Runs the program through the configured executor.
pub fn execute(
    req: &CodeExecutionRequest,
    launcher: &dyn ProcessLauncher,
) -> Result<ProcessOutput, ExecutionError> {
    match &req.executor {
        Executor::Disabled => Err(ExecutionError::Disabled),
        Executor::ExternalSandbox { command } => {
            let out = launcher.launch(command, &req.program_text, req.timeout)?;
            if out.status != Some(0) {
                return Err(ExecutionError::Failed {
                    status: out.status,
                    stderr: out.stderr.chars().take(500).collect(),
                });
            }
            Ok(out)
        }
    }
}

/// The program inside the first fenced block of a response, or the whole
/// trimmed response when there is none. Fences of two or more backticks are
/// accepted, with an optional language tag.
pub fn extract_program(response: &str) -> String {
    let mut body: Option<Vec<&str>> = None;
    for line in response.lines() {
        let fence = line.trim_start().starts_with("``");
        match (&mut body, fence) {
            (None, true) => body = Some(Vec::new()),
            (Some(lines), true) => return lines.join("\n"),
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    response.trim().to_owned()
}

/// The value printed on the last non-empty stdout line.
pub fn parse_program_output(stdout: &str) -> Option<f64> {
    stdout
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .and_then(normalize_numeric)
}
