// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by model construction, simulation, analysis and training.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate observable: largest and smallest eigenvalues coincide ({0})")]
    DegenerateObservable(f64),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("numerical integrity violated: {0}")]
    NumericalIntegrity(String),

    #[error("target value {y} at x = {x} lies outside the observable range [-1, 1]")]
    RangeViolation { x: f64, y: f64 },

    #[error("budget exceeded: {what} requires {required}, budget is {budget}")]
    BudgetExceeded {
        what: String,
        required: u64,
        budget: u64,
    },

    #[error("non-finite {quantity} at iteration {iteration}")]
    NonFinite {
        quantity: &'static str,
        iteration: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
