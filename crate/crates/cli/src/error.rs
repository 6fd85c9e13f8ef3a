//! Error categories and their exit codes.

use std::fmt;

/// What went wrong, as far as the exit status is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Bad flags, bad config files, bad scripts.
    Config,
    /// Missing or unreadable files, unwritable output.
    Io,
    /// Gateway or sandbox infrastructure failed for at least one document.
    Backend,
    /// A replay or ingestion check did not match its expectation.
    Mismatch,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Config => 2,
            Category::Io => 3,
            Category::Backend => 4,
            Category::Mismatch => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Io => "io",
            Category::Backend => "backend",
            Category::Mismatch => "mismatch",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {:#}", self.category.name(), self.error)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

pub trait Categorize<T> {
    fn category(self, category: Category) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Categorize<T> for Result<T, E> {
    fn category(self, category: Category) -> CliResult<T> {
        self.map_err(|e| CliError {
            category,
            error: e.into(),
        })
    }
}

pub fn fail<T>(category: Category, message: impl fmt::Display) -> CliResult<T> {
    Err(CliError {
        category,
        error: anyhow::anyhow!("{message}"),
    })
}
