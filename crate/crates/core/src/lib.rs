// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! Pulse-based quantum machine-learning models.
//!
//! A model evolves `|ψ₀⟩` under `H(x, t) = Σ x_i D_i + Σ θ_j(t) H_j` with
//! piecewise-constant controls and outputs `⟨ψ(T)|M|ψ(T)⟩`. The crate
//! simulates and trains such models, checks controllability and the
//! expectation-value condition on the nested operator subspaces, expands
//! outputs in Fliess series, and measures gradient variance.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fliess;
pub mod lie;
pub mod linalg;
pub mod operators;
pub mod training;

pub use error::{Error, Result};
