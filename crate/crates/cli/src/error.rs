use std::fmt;

use kgqa_core::embed::EmbedError;
use kgqa_core::eval::EvalError;
use kgqa_core::ir::IrError;
use kgqa_core::llm::LlmError;
use kgqa_core::sp::SpError;
use kgqa_core::store::StoreError;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Backend = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Usage,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: ExitKind::Data,
            error: e.into(),
        }
    }

    pub fn backend(e: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: ExitKind::Backend,
            error: e.into(),
        }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        Self::data(e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(_) => Self::usage(e),
            _ => Self::data(e),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Transport(_) | EmbedError::Status { .. } | EmbedError::Response(_) => Self::backend(e),
            _ => Self::data(e),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Backend(_) => Self::backend(e),
            LlmError::Config(_) => Self::usage(e),
            _ => Self::data(e),
        }
    }
}

impl From<SpError> for CliError {
    fn from(e: SpError) -> Self {
        match e {
            SpError::Transport(_) | SpError::Endpoint(_) => Self::backend(e),
            SpError::Llm(LlmError::Backend(_)) => Self::backend(e),
            SpError::Config(_) => Self::usage(e),
            _ => Self::data(e),
        }
    }
}

impl From<IrError> for CliError {
    fn from(e: IrError) -> Self {
        match e {
            IrError::Llm(LlmError::Backend(_)) => Self::backend(e),
            IrError::Config(_) => Self::usage(e),
            _ => Self::data(e),
        }
    }
}
