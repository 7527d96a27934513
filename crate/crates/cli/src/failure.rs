//! Error classes and their exit codes.

use std::fmt;

use tiltlab::TiltError;
use tiltlab_core::corpstats::StatsError;
use tiltlab_core::corpusio::IoError;
use tiltlab_core::langgen::GenError;
use tiltlab_neural::NeuralError;

#[derive(Debug)]
pub enum Failure {
    /// Bad invocation. Exit code 1.
    Usage(String),
    /// Invalid data or configuration. Exit code 2.
    Data(anyhow::Error),
    /// Non-finite loss or gradient. Exit code 3.
    Numerical(anyhow::Error),
}

pub type Outcome<T> = Result<T, Failure>;

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Failure::Data(anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(e) => write!(f, "error: {e:#}"),
            Failure::Numerical(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

impl From<TiltError> for Failure {
    fn from(e: TiltError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.into())
        } else {
            Failure::Data(e.into())
        }
    }
}

impl From<NeuralError> for Failure {
    fn from(e: NeuralError) -> Self {
        TiltError::from(e).into()
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.into())
            }
        }
    )*};
}

data_errors!(std::io::Error, serde_json::Error, GenError, IoError, StatsError);
