// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! Dynamical Lie algebra closures and the operator-subspace chain that
//! decides whether the expectation-value necessary condition for
//! expressivity holds.
//!
//! Two spans are used. Lie closures live in the real vector space of
//! skew-Hermitian matrices, so projections there use `Re Tr(A†B)`. Orbit
//! spans and the chain are complex-linear because expectation values are.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{hs_inner, hs_norm, skew_hermiticity_defect, trace, CMatrix, CVector, I};
use crate::operators::{HermitianOperator, ModelSpec};

/// Residual norm a normalized candidate must keep after projection to count as new.
pub const NEW_DIRECTION_TOL: f64 = 1e-10;
pub const SKEW_TOL: f64 = 1e-10;
pub const DEFAULT_K_MAX: usize = 8;
pub const DEFAULT_EXPECTATION_TOL: f64 = 1e-10;
/// Projector distance under which two chain subspaces are treated as equal.
pub const PERIOD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    Real,
    Complex,
}

/// Hilbert–Schmidt orthonormal basis of a space of `d × d` matrices.
#[derive(Debug, Clone)]
pub struct OperatorSubspace {
    dim_space: usize,
    field: Field,
    basis: Vec<CMatrix>,
    truncated: bool,
}

impl OperatorSubspace {
    pub fn empty(dim_space: usize, field: Field) -> Self {
        Self {
            dim_space,
            field,
            basis: Vec::new(),
            truncated: false,
        }
    }

    pub fn dim_space(&self) -> usize {
        self.dim_space
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Set when a closure stopped at its `max_dim` cap.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    fn coefficient(&self, b: &CMatrix, x: &CMatrix) -> Complex64 {
        let c = hs_inner(b, x);
        match self.field {
            Field::Real => Complex64::new(c.re, 0.0),
            Field::Complex => c,
        }
    }

    /// `x` minus its orthogonal projection onto the span.
    pub fn residual(&self, x: &CMatrix) -> CMatrix {
        let mut r = x.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let c = self.coefficient(b, &r);
                r -= b * c;
            }
        }
        r
    }

    pub fn residual_norm(&self, x: &CMatrix) -> f64 {
        hs_norm(&self.residual(x))
    }

    /// Orthonormalizes `candidate` against the basis (modified Gram–Schmidt,
    /// applied twice) and appends it when it carries a new direction.
    pub fn try_insert(&mut self, candidate: &CMatrix) -> bool {
        let norm = hs_norm(candidate);
        if !(norm > NEW_DIRECTION_TOL) {
            return false;
        }
        let unit = candidate / Complex64::new(norm, 0.0);
        let r = self.residual(&unit);
        let rn = hs_norm(&r);
        if rn > NEW_DIRECTION_TOL {
            self.basis.push(r / Complex64::new(rn, 0.0));
            true
        } else {
            false
        }
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn gram_defect(&self) -> f64 {
        let n = self.basis.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let g = self.coefficient(&self.basis[i], &self.basis[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }

    /// Operator-norm distance between the orthogonal projectors onto both spans.
    ///
    /// For equal dimensions this is the sine of the largest principal angle,
    /// computed from the residuals of each basis after projection onto the
    /// other span (direct, so it does not lose precision near zero).
    /// Different dimensions give 1.
    pub fn projector_distance(&self, other: &OperatorSubspace) -> f64 {
        if self.dim_space != other.dim_space || self.dimension() != other.dimension() {
            return 1.0;
        }
        if self.is_empty() {
            return 0.0;
        }
        self.leakage(other).max(other.leakage(self)).min(1.0)
    }

    /// Largest norm of `(I − P_self) v` over unit vectors `v` in `other`.
    fn leakage(&self, other: &OperatorSubspace) -> f64 {
        let residuals: Vec<CMatrix> = other.basis.iter().map(|b| self.residual(b)).collect();
        let n = residuals.len();
        let top = match (self.field, other.field) {
            (Field::Complex, Field::Complex) => {
                let g = DMatrix::from_fn(n, n, |i, j| hs_inner(&residuals[i], &residuals[j]));
                let g = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
                g.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max)
            }
            _ => {
                let g = DMatrix::from_fn(n, n, |i, j| hs_inner(&residuals[i], &residuals[j]).re);
                let g = (&g + g.transpose()) * 0.5;
                g.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max)
            }
        };
        top.max(0.0).sqrt()
    }

    /// Builds a complex span from arbitrary spanning matrices.
    pub fn complex_span(dim_space: usize, spanning: &[CMatrix]) -> Self {
        let mut s = Self::empty(dim_space, Field::Complex);
        for m in spanning {
            s.try_insert(m);
        }
        s
    }
}

/// Smallest real Lie algebra containing the skew-Hermitian `generators`.
///
/// Breadth-first: every new basis element is commuted with all earlier ones,
/// stopping when a full sweep adds nothing or the dimension reaches `max_dim`.
pub fn lie_closure(generators: &[CMatrix], max_dim: usize) -> Result<OperatorSubspace> {
    let first = generators
        .first()
        .ok_or_else(|| Error::InvalidArgument("lie_closure needs at least one generator".into()))?;
    let d = first.nrows();
    for g in generators {
        if g.nrows() != d || g.ncols() != d {
            return invalid("generators must all be square of one dimension");
        }
        let defect = skew_hermiticity_defect(g);
        if defect > SKEW_TOL {
            return invalid(format!("generator is not skew-Hermitian (max |A + A†| = {defect:e})"));
        }
    }
    if max_dim > d * d {
        return invalid(format!("max_dim {max_dim} exceeds d² = {}", d * d));
    }
    let mut space = OperatorSubspace::empty(d, Field::Real);
    for g in generators {
        if space.dimension() >= max_dim {
            space.truncated = true;
            return Ok(space);
        }
        space.try_insert(g);
    }
    let mut i = 0;
    while i < space.dimension() {
        for j in 0..i {
            let c = &space.basis[i] * &space.basis[j] - &space.basis[j] * &space.basis[i];
            if space.dimension() >= max_dim {
                space.truncated = true;
                return Ok(space);
            }
            space.try_insert(&c);
        }
        i += 1;
    }
    Ok(space)
}

/// Lie closure of `{i H_1, …, i H_p}`.
pub fn dynamical_lie_algebra(controls: &[HermitianOperator]) -> Result<OperatorSubspace> {
    let gens: Vec<CMatrix> = controls.iter().map(HermitianOperator::times_i).collect();
    let d = gens.first().map(|g| g.nrows()).unwrap_or(0);
    lie_closure(&gens, d * d)
}

/// True iff the closure is su(d) (all traceless, `d² − 1`) or u(d) (`d²`).
pub fn is_fully_controllable(closure: &OperatorSubspace) -> bool {
    let d = closure.dim_space();
    let n = closure.dimension();
    if n == d * d {
        return true;
    }
    n + 1 == d * d && closure.basis().iter().all(|b| trace(b).norm() < 1e-8)
}

/// `ℒ_H X = [−iH, X]`.
pub fn liouvillian(h: &CMatrix, x: &CMatrix) -> CMatrix {
    (h * x - x * h) * (-I)
}

/// Span of all nested control Liouvillians applied to the seeds, seeds included.
pub fn orbit_span(seeds: &[CMatrix], controls: &[HermitianOperator]) -> Result<OperatorSubspace> {
    let d = seeds
        .first()
        .map(|s| s.nrows())
        .or_else(|| controls.first().map(|c| c.dim()))
        .ok_or_else(|| Error::InvalidArgument("orbit_span needs a seed or a control".into()))?;
    if seeds.iter().any(|s| s.nrows() != d || s.ncols() != d) || controls.iter().any(|c| c.dim() != d) {
        return invalid("orbit_span operands have mismatched dimensions");
    }
    let mut space = OperatorSubspace::empty(d, Field::Complex);
    for s in seeds {
        space.try_insert(s);
    }
    let mut i = 0;
    while i < space.dimension() {
        for h in controls {
            let next = liouvillian(h.matrix(), &space.basis[i]);
            space.try_insert(&next);
        }
        i += 1;
    }
    Ok(space)
}

/// Detected repetition `S_{start + length} = S_start` of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainPeriod {
    pub start: usize,
    pub length: usize,
}

#[derive(Debug, Clone)]
pub struct SChain {
    pub subspaces: Vec<OperatorSubspace>,
    pub period: Option<ChainPeriod>,
}

/// `S_0 = 𝒪(M)`, `S_k = 𝒪(ℒ_0 S_{k−1})` for `k ≤ k_max`, with ℒ_0 the encoder Liouvillian.
pub fn s_chain(model: &ModelSpec, k_max: usize) -> Result<SChain> {
    if !model.is_univariate() {
        return Err(Error::Unsupported(format!(
            "the subspace chain is defined for univariate models, this one has {} encoders",
            model.num_encoders()
        )));
    }
    let d = model.dim();
    let drift = model.encoders()[0].matrix();
    let mut subspaces = Vec::with_capacity(k_max + 1);
    subspaces.push(orbit_span(&[model.observable().matrix().clone()], model.controls())?);
    for k in 1..=k_max {
        let prev = &subspaces[k - 1];
        let seeds: Vec<CMatrix> = prev.basis().iter().map(|b| liouvillian(drift, b)).collect();
        let next = if seeds.is_empty() {
            OperatorSubspace::empty(d, Field::Complex)
        } else {
            orbit_span(&seeds, model.controls())?
        };
        subspaces.push(next);
    }
    let period = detect_period(&subspaces);
    Ok(SChain { subspaces, period })
}

/// Earliest `k` with `S_{k+1} = S_k` or `S_{k+2} = S_k`.
///
/// The chain map depends only on the previous subspace, so a repetition
/// found once persists for every later `k`.
pub fn detect_period(subspaces: &[OperatorSubspace]) -> Option<ChainPeriod> {
    for start in 0..subspaces.len() {
        for length in 1..=2 {
            if let Some(later) = subspaces.get(start + length) {
                if subspaces[start].projector_distance(later) < PERIOD_TOL {
                    return Some(ChainPeriod { start, length });
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    FailsNecessaryCondition,
    PassesNecessaryCondition,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::FailsNecessaryCondition => "FAILS_NECESSARY_CONDITION",
            Verdict::PassesNecessaryCondition => "PASSES_NECESSARY_CONDITION",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub k: usize,
    pub dimension: usize,
    /// Largest `|⟨ψ₀|B|ψ₀⟩|` over the orthonormal basis of `S_k`.
    pub residual: f64,
    pub vanishes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivityReport {
    pub k_max: usize,
    pub tolerance: f64,
    pub per_k: Vec<ChainRow>,
    pub period: Option<ChainPeriod>,
    pub verdict: Verdict,
    /// False when the chain neither vanished nor repeated within `k_max`,
    /// so a PASSES verdict only covers the examined `k`.
    pub conclusive: bool,
}

/// Evaluates `⟨ψ₀|S_k|ψ₀⟩ = {0}` for every `k ≤ k_max`.
pub fn expressivity_check(model: &ModelSpec, k_max: usize, tol: f64) -> Result<ExpressivityReport> {
    if !(tol > 0.0) {
        return invalid("expressivity tolerance must be positive");
    }
    let chain = s_chain(model, k_max)?;
    Ok(report_from_chain(&chain, model.initial_state().amplitudes(), k_max, tol))
}

pub(crate) fn report_from_chain(chain: &SChain, psi: &CVector, k_max: usize, tol: f64) -> ExpressivityReport {
    let per_k: Vec<ChainRow> = chain
        .subspaces
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let residual = s
                .basis()
                .iter()
                .map(|b| psi.dotc(&(b * psi)).norm())
                .fold(0.0, f64::max);
            ChainRow {
                k,
                dimension: s.dimension(),
                residual,
                vanishes: residual < tol,
            }
        })
        .collect();
    let fails = per_k.iter().any(|r| r.vanishes);
    ExpressivityReport {
        k_max,
        tolerance: tol,
        per_k,
        period: chain.period,
        verdict: if fails {
            Verdict::FailsNecessaryCondition
        } else {
            Verdict::PassesNecessaryCondition
        },
        conclusive: fails || chain.period.is_some(),
    }
}
