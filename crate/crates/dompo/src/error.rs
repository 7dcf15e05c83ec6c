// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{0}` given more than once")]
    DuplicateParameter(String),
    #[error("parameter `{name}` is not a finite number: {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("could not parse `{0}`")]
    Parse(String),
    #[error("rate `{0}` must be strictly positive")]
    NonPositiveRate(&'static str),
    #[error("parameter `{name}` out of range: {reason}")]
    OutOfRange { name: &'static str, reason: String },
    #[error("negative detuning is not supported (Delta = {0})")]
    NegativeDetuning(f64),
    #[error("sigma = {sigma} and x = {x} disagree for Delta = {delta}")]
    InconsistentInjection { sigma: f64, x: f64, delta: f64 },

    #[error("at or above threshold (x = {0}): semiclassical moments diverge")]
    AtThreshold(f64),
    #[error("zero detuning makes the closed-form fundamental limit singular")]
    ZeroDetuning,
    #[error("no squeezed picture: requires Delta > sigma")]
    NoSqueezedPicture,

    #[error("Laplace integral diverges: Re(lambda + z) = {0} >= 0")]
    DivergentIntegral(f64),
    #[error("effective mechanical damping 1 + Gamma = {0} is not positive")]
    UnstableMechanics(f64),
    #[error("singular linear system in {0}")]
    SingularSystem(&'static str),

    #[error("no convergence in {what}: residual {residual:e}")]
    NoConvergence { what: &'static str, residual: f64 },
    #[error("correlator did not decay within the time budget (|s|/|s0| = {0:e})")]
    NoDecay(f64),
    #[error("Fock truncation too small: {0}")]
    DimensionTooSmall(String),
    #[error("Fock truncation unconverged: top-level population {0:e}")]
    TruncationUnconverged(f64),
    #[error("steady state is degenerate (kernel dimension > 1)")]
    DegenerateNullSpace,
    #[error("ODE integration failed: {0}")]
    Integration(String),

    #[error("invalid sweep specification: {0}")]
    InvalidSweep(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
