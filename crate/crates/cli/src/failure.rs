use std::fmt;

use scsnet::ScsError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    /// A gradient check exceeded its tolerance.
    Check(String),
    Core(ScsError),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Check(_) => EXIT_NUMERICAL,
            Failure::Core(e) => match e {
                ScsError::Config(_) | ScsError::Argument(_) => EXIT_USAGE,
                ScsError::Numerical(_) | ScsError::MissingGradient(_) => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) | Failure::Check(msg) => f.write_str(msg),
            Failure::Core(e) => e.fmt(f),
        }
    }
}

impl From<ScsError> for Failure {
    fn from(e: ScsError) -> Self {
        Failure::Core(e)
    }
}
