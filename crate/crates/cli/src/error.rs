use std::fmt;

/// Pipeline stage an error came from, printed as its prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Data,
    Partition,
    Train,
    Evaluate,
    Checkpoint,
    Report,
    Gradcheck,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Partition => "partition",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Checkpoint => "checkpoint",
            Stage::Report => "report",
            Stage::Gradcheck => "gradcheck",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Exit 1.
    Validation,
    /// Exit 2.
    Io,
    /// Exit 3: non-finite values or a failed threshold.
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliError {
    pub stage: Stage,
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn invalid(stage: Stage, message: impl Into<String>) -> Self {
        CliError { stage, kind: Kind::Validation, message: message.into() }
    }

    pub fn io(stage: Stage, message: impl Into<String>) -> Self {
        CliError { stage, kind: Kind::Io, message: message.into() }
    }

    pub fn numeric(stage: Stage, message: impl Into<String>) -> Self {
        CliError { stage, kind: Kind::Numeric, message: message.into() }
    }

    /// Classify a library error raised after configuration was accepted.
    pub fn from_core(stage: Stage, err: fedscan::Error) -> Self {
        use fedscan::Error as E;
        let kind = match &err {
            E::Io(_) | E::Format { .. } | E::Parse { .. } => Kind::Io,
            E::ConfigHashMismatch { .. } | E::Contract(_) | E::Protocol(_) => Kind::Validation,
            _ => Kind::Numeric,
        };
        CliError { stage, kind, message: err.to_string() }
    }

    pub fn code(&self) -> i32 {
        match self.kind {
            Kind::Validation => 1,
            Kind::Io => 2,
            Kind::Numeric => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

pub trait Context<T> {
    fn at(self, stage: Stage) -> Result<T, CliError>;
}

impl<T> Context<T> for fedscan::Result<T> {
    fn at(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(stage, e))
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn at(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::io(stage, e.to_string()))
    }
}
