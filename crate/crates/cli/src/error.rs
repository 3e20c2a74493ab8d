//! Error record and exit-code mapping.

use serde::Serialize;

use xling_core::corpus::CorpusError;
use xling_core::encoder::EncoderError;
use xling_core::evalsts::EvalError;
use xling_core::mining::MiningError;
use xling_core::tokaudit::AuditError;
use xling_core::trainer::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Lock contention or output-directory trouble.
    Runtime,
    Config,
    Data,
    Client,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Runtime => 1,
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Client => 4,
            ErrorKind::Numerical => 5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// JSON pointer into the config for config errors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointer: Option<String>,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
            pointer: None,
        }
    }

    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Config,
            message: message.into(),
            pointer: Some(pointer.into()),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::new(ErrorKind::Data, message)
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::new(ErrorKind::Runtime, message)
    }

    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    /// One-line JSON record for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a CliError,
            exit_code: u8,
        }
        serde_json::to_string(&Record {
            error: self,
            exit_code: self.kind.exit_code(),
        })
        .expect("error record serializes")
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.pointer {
            Some(p) => write!(f, "{p}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn encoder_kind(e: &EncoderError) -> ErrorKind {
    match e {
        EncoderError::Config(_) => ErrorKind::Config,
        EncoderError::ZeroNorm(_) | EncoderError::ZeroVector => ErrorKind::Numerical,
        _ => ErrorKind::Data,
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        CliError::new(encoder_kind(&e), e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let kind = match e {
            CorpusError::Config(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<MiningError> for CliError {
    fn from(e: MiningError) -> Self {
        let kind = match e {
            MiningError::Client { .. } | MiningError::JudgeOutOfRange { .. } => ErrorKind::Client,
            MiningError::Config(_) => ErrorKind::Config,
            MiningError::Pool(_) => ErrorKind::Runtime,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let kind = match &e {
            TrainError::Config(_) | TrainError::Temperature(_) => ErrorKind::Config,
            TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. } => ErrorKind::Numerical,
            TrainError::Encode { source, .. } => encoder_kind(source),
            _ => ErrorKind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let kind = match &e {
            EvalError::Constant(_) | EvalError::NonFinite(_) => ErrorKind::Numerical,
            EvalError::Encode { source, .. } => encoder_kind(source),
            _ => ErrorKind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        let kind = match e {
            AuditError::Format(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_shape() {
        let e = CliError::config("/trainer/tau", "temperature must be positive, got -1");
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["exit_code"], 2);
        assert_eq!(v["error"]["kind"], "config");
        assert_eq!(v["error"]["pointer"], "/trainer/tau");
    }

    #[test]
    fn numerical_failures_map_to_five() {
        let e: CliError = TrainError::NonFiniteLoss { step: 3, triplets: vec![1] }.into();
        assert_eq!(e.kind.exit_code(), 5);
        let e: CliError = EvalError::Constant("first").into();
        assert_eq!(e.kind.exit_code(), 5);
    }
}
