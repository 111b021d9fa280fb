use std::fmt;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, manifest or budget (exit 2).
    Usage(String),
    /// A required input file is absent (exit 3).
    Missing(String),
    /// Anything that went wrong while working (exit 4).
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Missing(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "configuration error: {m}"),
            Failure::Missing(m) => write!(f, "missing artifact: {m}"),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<lhcc_core::Error> for Failure {
    fn from(e: lhcc_core::Error) -> Self {
        use lhcc_core::Error as E;
        match e {
            E::Config(_) | E::Contract(_) | E::Parse { .. } => Failure::Usage(e.to_string()),
            E::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => Failure::Missing(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}
