// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! Piecewise-constant propagation and the expectation-value model output.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermiticity_defect, CMatrix, CVector, HermitianEigen, ZERO};
use crate::operators::{HermitianOperator, ModelSpec, StateVector, HERMITIAN_TOL};

/// Imaginary part of `⟨ψ|M|ψ⟩` beyond which a prediction is rejected.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-8;

/// `K × p` control amplitudes (row `k` drives sub-pulse `k`) and the sampling period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    steps: usize,
    controls: usize,
    amplitudes: Vec<f64>,
    dt: f64,
}

impl PulseSchedule {
    pub fn new(steps: usize, controls: usize, amplitudes: Vec<f64>, dt: f64) -> Result<Self> {
        if steps == 0 || controls == 0 {
            return invalid("schedule needs K >= 1 and p >= 1");
        }
        if amplitudes.len() != steps * controls {
            return invalid(format!(
                "expected {} amplitudes for a {steps}x{controls} schedule, got {}",
                steps * controls,
                amplitudes.len()
            ));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return invalid("schedule amplitudes must be finite");
        }
        if !(dt.is_finite() && dt > 0.0) {
            return invalid(format!("sampling period must be positive, got {dt}"));
        }
        Ok(Self {
            steps,
            controls,
            amplitudes,
            dt,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], dt: f64) -> Result<Self> {
        let controls = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != controls) {
            return invalid("schedule rows have unequal lengths");
        }
        Self::new(rows.len(), controls, rows.concat(), dt)
    }

    pub fn zeros(steps: usize, controls: usize, dt: f64) -> Result<Self> {
        Self::new(steps, controls, vec![0.0; steps * controls], dt)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_controls(&self) -> usize {
        self.controls
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn duration(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.amplitudes[k * self.controls..(k + 1) * self.controls]
    }

    pub fn amplitude(&self, k: usize, j: usize) -> f64 {
        self.amplitudes[k * self.controls + j]
    }

    /// Row-major amplitudes, the flattened trainable parameter vector.
    pub fn as_slice(&self) -> &[f64] {
        &self.amplitudes
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.amplitudes
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.amplitudes.chunks(self.controls)
    }

    /// Splits into the first `k` sub-pulses and the rest.
    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        if k == 0 || k >= self.steps {
            return invalid(format!("split point {k} must lie in 1..{}", self.steps));
        }
        let (a, b) = self.amplitudes.split_at(k * self.controls);
        Ok((
            Self::new(k, self.controls, a.to_vec(), self.dt)?,
            Self::new(self.steps - k, self.controls, b.to_vec(), self.dt)?,
        ))
    }
}

/// `exp(−i h t)` through the eigendecomposition of `h`.
pub fn expm_step(h: &HermitianOperator, t: f64) -> Result<CMatrix> {
    if !t.is_finite() {
        return invalid("expm_step time must be finite");
    }
    Ok(StepPropagator::new(h.matrix(), t).unitary())
}

/// Same as [`expm_step`] for a raw matrix; rejects non-Hermitian input.
pub fn expm_step_matrix(h: &CMatrix, t: f64) -> Result<CMatrix> {
    if h.nrows() != h.ncols() || hermiticity_defect(h) >= HERMITIAN_TOL {
        return invalid("expm_step needs a Hermitian matrix");
    }
    if !t.is_finite() {
        return invalid("expm_step time must be finite");
    }
    Ok(StepPropagator::new(h, t).unitary())
}

/// One sub-pulse propagator `V diag(e^{−iλt}) V†`, kept in factored form.
#[derive(Debug, Clone)]
pub(crate) struct StepPropagator {
    pub eigen: HermitianEigen,
    pub phases: Vec<Complex64>,
}

impl StepPropagator {
    pub fn new(h: &CMatrix, t: f64) -> Self {
        let eigen = HermitianEigen::new(h);
        let phases = eigen
            .values
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -l * t))
            .collect();
        Self { eigen, phases }
    }

    pub fn unitary(&self) -> CMatrix {
        let v = &self.eigen.vectors;
        let mut scaled = v.clone();
        for (c, ph) in self.phases.iter().enumerate() {
            scaled.column_mut(c).iter_mut().for_each(|z| *z *= ph);
        }
        scaled * v.adjoint()
    }

    /// `U ψ`.
    pub fn apply(&self, psi: &CVector) -> CVector {
        let v = &self.eigen.vectors;
        let mut coeffs = v.ad_mul(psi);
        for (c, ph) in coeffs.iter_mut().zip(&self.phases) {
            *c *= ph;
        }
        v * coeffs
    }

    /// `U† ψ`.
    pub fn apply_adjoint(&self, psi: &CVector) -> CVector {
        let v = &self.eigen.vectors;
        let mut coeffs = v.ad_mul(psi);
        for (c, ph) in coeffs.iter_mut().zip(&self.phases) {
            *c *= ph.conj();
        }
        v * coeffs
    }
}

fn check_schedule(model: &ModelSpec, x: &[f64], schedule: &PulseSchedule) -> Result<()> {
    model.check_inputs(x, schedule.num_controls())
}

/// `U_K ⋯ U_1 |ψ₀⟩`.
pub fn propagate(model: &ModelSpec, x: &[f64], schedule: &PulseSchedule) -> Result<StateVector> {
    check_schedule(model, x, schedule)?;
    Ok(StateVector::from_unchecked(propagate_unchecked(
        model,
        x,
        schedule,
        model.initial_state().amplitudes().clone(),
    )))
}

pub(crate) fn propagate_unchecked(model: &ModelSpec, x: &[f64], schedule: &PulseSchedule, mut psi: CVector) -> CVector {
    let d = model.dim();
    let mut h = CMatrix::zeros(d, d);
    for row in schedule.rows() {
        model.hamiltonian_into(x, row, &mut h);
        psi = StepPropagator::new(&h, schedule.dt()).apply(&psi);
    }
    psi
}

/// Converts a complex expectation to a real output, rejecting large imaginary residue.
pub(crate) fn real_expectation(value: Complex64) -> Result<f64> {
    if value.im.abs() >= IMAGINARY_RESIDUE_TOL || !value.re.is_finite() {
        return Err(Error::NumericalIntegrity(format!(
            "expectation value {value} has imaginary residue {:e}",
            value.im
        )));
    }
    Ok(value.re)
}

/// Model output `⟨ψ(T)|M|ψ(T)⟩`.
pub fn predict(model: &ModelSpec, x: &[f64], schedule: &PulseSchedule) -> Result<f64> {
    let psi = propagate(model, x, schedule)?;
    let m = model.observable().matrix();
    real_expectation(psi.amplitudes().dotc(&(m * psi.amplitudes())))
}

/// Compressed-row form of a Hermitian operator, for cheap repeated matrix–vector products.
#[derive(Debug, Clone)]
pub(crate) struct SparseOperator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
    /// Induced 1-norm (max column sum), which equals the ∞-norm for Hermitian input.
    pub norm1: f64,
}

impl SparseOperator {
    pub fn from_dense(m: &CMatrix) -> Self {
        let mut row_ptr = Vec::with_capacity(m.nrows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut norm1: f64 = 0.0;
        row_ptr.push(0);
        for r in 0..m.nrows() {
            let mut row_sum = 0.0;
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                    row_sum += v.norm();
                }
            }
            norm1 = norm1.max(row_sum);
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            vals,
            norm1,
        }
    }

    /// `Σ_cd A_cd W_cd`.
    pub fn contract(&self, w: &CMatrix) -> Complex64 {
        let mut acc = ZERO;
        for r in 0..self.row_ptr.len() - 1 {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[idx] * w[(r, self.cols[idx])];
            }
        }
        acc
    }

    /// `out += scale · A v`.
    fn mul_add(&self, scale: f64, v: &[Complex64], out: &mut [Complex64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[idx] * v[self.cols[idx]];
            }
            *o += acc * scale;
        }
    }
}

/// Sparse operands of one model, used for vector-only propagation.
#[derive(Debug, Clone)]
pub(crate) struct SparseModel {
    encoders: Vec<SparseOperator>,
    controls: Vec<SparseOperator>,
}

impl SparseModel {
    pub fn new(model: &ModelSpec) -> Self {
        Self {
            encoders: model.encoders().iter().map(|o| SparseOperator::from_dense(o.matrix())).collect(),
            controls: model.controls().iter().map(|o| SparseOperator::from_dense(o.matrix())).collect(),
        }
    }

    fn terms<'a>(&'a self, x: &'a [f64], theta: &'a [f64]) -> impl Iterator<Item = (f64, &'a SparseOperator)> + 'a {
        self.encoders
            .iter()
            .zip(x.iter().copied())
            .chain(self.controls.iter().zip(theta.iter().copied()))
            .filter(|(_, c)| *c != 0.0)
            .map(|(op, c)| (c, op))
    }

    fn apply_h(&self, x: &[f64], theta: &[f64], v: &[Complex64], out: &mut [Complex64]) {
        out.fill(ZERO);
        for (c, op) in self.terms(x, theta) {
            op.mul_add(c, v, out);
        }
    }

    /// `exp(−i H t) ψ` by a truncated Taylor series with substepping.
    ///
    /// Each substep keeps `‖H‖·t/s ≤ 1/2` and sums terms until they drop
    /// below `1e-17` of the vector norm, giving an error at rounding level.
    pub fn expm_apply(&self, x: &[f64], theta: &[f64], t: f64, psi: &mut CVector) {
        let bound: f64 = self.terms(x, theta).map(|(c, op)| c.abs() * op.norm1).sum::<f64>() * t.abs();
        if bound == 0.0 {
            return;
        }
        let substeps = (2.0 * bound).ceil().max(1.0) as usize;
        let tau = t / substeps as f64;
        let n = psi.len();
        let mut term = vec![ZERO; n];
        let mut next = vec![ZERO; n];
        for _ in 0..substeps {
            term.copy_from_slice(psi.as_slice());
            let base = psi.iter().map(|z| z.norm()).sum::<f64>();
            for order in 1..=40 {
                self.apply_h(x, theta, &term, &mut next);
                // term ← (−iτ/order) H term
                let factor = Complex64::new(0.0, -tau / order as f64);
                let mut size = 0.0;
                for (t_i, n_i) in term.iter_mut().zip(&next) {
                    *t_i = n_i * factor;
                    size += t_i.norm();
                }
                for (p, t_i) in psi.iter_mut().zip(&term) {
                    *p += t_i;
                }
                if size <= 1e-17 * base {
                    break;
                }
            }
        }
    }
}
