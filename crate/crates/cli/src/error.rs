//! Process-level error type mapping every failure to an exit-code family.

use std::fmt;

/// A command failure. The variant decides the exit code: 2 for
/// configuration problems, 3 for I/O and file-format problems, 4 for
/// numeric aborts.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    /// Classify a decoder error: configuration and data-contract problems
    /// count as configuration, file problems as I/O, numeric guards as
    /// numeric.
    pub fn from_decoder(err: gat_decoder::DecoderError) -> Self {
        use gat_decoder::DecoderError as E;
        if err.is_numeric() {
            return CliError::Numeric(err.to_string());
        }
        match err {
            e @ (E::Format(_) | E::Io(_)) => CliError::Io(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }

    pub fn from_ingest(err: data_ingest::IngestError) -> Self {
        use data_ingest::IngestError as E;
        match err {
            E::Sample(inner) => CliError::from_decoder(inner),
            e @ E::Spec(_) => CliError::Config(e.to_string()),
            e => CliError::Io(e.to_string()),
        }
    }

    pub fn from_importance(err: importance_factor::IfError) -> Self {
        use importance_factor::IfError as E;
        match err {
            e @ E::Contract(_) => CliError::Config(e.to_string()),
            e => CliError::Io(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
