use std::fmt;

/// A failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad command line or configuration: exit 2.
    Config(String),
    /// Missing, corrupt or inconsistent data files: exit 3.
    Data(String),
    /// Calibration or training that did not converge: exit 4.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qrt_core::Error> for CliError {
    fn from(e: qrt_core::Error) -> Self {
        use qrt_core::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::InvalidParameter { .. } => CliError::Config(msg),
            E::Unreachable { .. } | E::Diverged(_) => CliError::Numerical(msg),
            _ => CliError::Data(msg),
        }
    }
}
