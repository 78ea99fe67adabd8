// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! Hermitian operators, states and model specifications.
//!
//! Qubit sites are 1-based and site 1 is the leftmost Kronecker factor, so
//! `pauli_string(&[(1, Z)], 2)` is `Z ⊗ I`. Spin matrices follow the
//! Condon–Shortley convention with real non-negative ladder elements.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermiticity_defect, kron, CMatrix, CVector, HermitianEigen, I, ONE, ZERO};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const NORM_TOL: f64 = 1e-12;
pub const SPECTRUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub fn matrix(self) -> CMatrix {
        match self {
            PauliAxis::X => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            PauliAxis::Y => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            PauliAxis::Z => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'X' => Some(PauliAxis::X),
            'Y' => Some(PauliAxis::Y),
            'Z' => Some(PauliAxis::Z),
            _ => None,
        }
    }
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            PauliAxis::X => 'X',
            PauliAxis::Y => 'Y',
            PauliAxis::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// A dense Hermitian matrix of dimension at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return invalid(format!("operator must be square, got {:?}", matrix.shape()));
        }
        if matrix.nrows() < 2 {
            return invalid("operator dimension must be at least 2");
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("operator has non-finite entries");
        }
        let defect = hermiticity_defect(&matrix);
        if defect >= HERMITIAN_TOL {
            return invalid(format!("operator is not Hermitian (max |A - A†| = {defect:e})"));
        }
        Ok(Self { matrix })
    }

    /// Symmetrizes `(A + A†)/2` first; for matrices that are Hermitian up to rounding.
    pub fn from_nearly_hermitian(matrix: CMatrix) -> Result<Self> {
        let sym = (&matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
        Self::new(sym)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(CMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * Complex64::new(factor, 0.0),
        }
    }

    /// Multiplies by `i`, giving the skew-Hermitian generator used in Lie closures.
    pub fn times_i(&self) -> CMatrix {
        &self.matrix * I
    }

    pub fn eigen(&self) -> HermitianEigen {
        HermitianEigen::new(&self.matrix)
    }

    /// Sum of Hermitian operators of one dimension.
    pub fn sum<'a>(ops: impl IntoIterator<Item = &'a HermitianOperator>) -> Result<Self> {
        let mut iter = ops.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty operator sum".into()))?;
        let mut acc = first.matrix.clone();
        for op in iter {
            if op.dim() != first.dim() {
                return invalid("operator sum with mismatched dimensions");
            }
            acc += &op.matrix;
        }
        Ok(Self { matrix: acc })
    }
}

/// A unit-norm state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return invalid("state must have positive dimension");
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() >= NORM_TOL {
            return invalid(format!("state norm is {norm}, expected 1"));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes arbitrary non-zero amplitudes.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return invalid("cannot normalize a zero or non-finite vector");
        }
        Ok(Self {
            amplitudes: amplitudes / Complex64::new(norm, 0.0),
        })
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return invalid(format!("basis index {index} out of range for dimension {dim}"));
        }
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Ok(Self { amplitudes: v })
    }

    /// Product state of single-qubit labels, site 1 leftmost: `0`, `1`, `+`, `-`.
    pub fn product(labels: &str) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = CVector::from_element(1, ONE);
        for c in labels.chars() {
            let single = match c {
                '0' => [ONE, ZERO],
                '1' => [ZERO, ONE],
                '+' => [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
                '-' => [Complex64::new(h, 0.0), Complex64::new(-h, 0.0)],
                other => return invalid(format!("unknown qubit state label '{other}'")),
            };
            let q = CVector::from_row_slice(&single);
            amps = amps.kronecker(&q);
        }
        if amps.len() < 2 {
            return invalid("product state needs at least one qubit label");
        }
        Ok(Self { amplitudes: amps })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub(crate) fn from_unchecked(amplitudes: CVector) -> Self {
        Self { amplitudes }
    }
}

/// One pulse-based model: encoders `D_m`, controls `H_j`, observable `M` and `|ψ₀⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    encoders: Vec<HermitianOperator>,
    controls: Vec<HermitianOperator>,
    observable: HermitianOperator,
    initial_state: StateVector,
}

impl ModelSpec {
    pub fn new(
        encoders: Vec<HermitianOperator>,
        controls: Vec<HermitianOperator>,
        observable: HermitianOperator,
        initial_state: StateVector,
    ) -> Result<Self> {
        if encoders.is_empty() {
            return invalid("model needs at least one encoder");
        }
        if controls.is_empty() {
            return invalid("model needs at least one control");
        }
        let dim = observable.dim();
        if encoders.iter().chain(&controls).any(|op| op.dim() != dim) {
            return invalid("encoder/control dimensions differ from the observable's");
        }
        if initial_state.dim() != dim {
            return invalid(format!(
                "initial state dimension {} differs from operator dimension {dim}",
                initial_state.dim()
            ));
        }
        let eig = observable.eigen();
        if (eig.min() + 1.0).abs() > SPECTRUM_TOL || (eig.max() - 1.0).abs() > SPECTRUM_TOL {
            return invalid(format!(
                "observable spectrum must span [-1, 1], got [{}, {}]; see rescale_observable",
                eig.min(),
                eig.max()
            ));
        }
        Ok(Self {
            encoders,
            controls,
            observable,
            initial_state,
        })
    }

    pub fn dim(&self) -> usize {
        self.observable.dim()
    }

    pub fn encoders(&self) -> &[HermitianOperator] {
        &self.encoders
    }

    pub fn controls(&self) -> &[HermitianOperator] {
        &self.controls
    }

    pub fn observable(&self) -> &HermitianOperator {
        &self.observable
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.initial_state
    }

    pub fn num_encoders(&self) -> usize {
        self.encoders.len()
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn is_univariate(&self) -> bool {
        self.encoders.len() == 1
    }

    pub fn with_initial_state(&self, state: StateVector) -> Result<Self> {
        Self::new(
            self.encoders.clone(),
            self.controls.clone(),
            self.observable.clone(),
            state,
        )
    }

    /// Writes `Σ x_i D_i + Σ θ_j H_j` into `out` without validation.
    pub(crate) fn hamiltonian_into(&self, x: &[f64], theta: &[f64], out: &mut CMatrix) {
        out.fill(ZERO);
        for (op, &xi) in self.encoders.iter().zip(x) {
            if xi != 0.0 {
                out.zip_apply(op.matrix(), |o, a| *o += a * xi);
            }
        }
        for (op, &t) in self.controls.iter().zip(theta) {
            if t != 0.0 {
                out.zip_apply(op.matrix(), |o, a| *o += a * t);
            }
        }
    }

    pub(crate) fn check_inputs(&self, x: &[f64], theta_len: usize) -> Result<()> {
        if x.len() != self.encoders.len() {
            return invalid(format!(
                "input has length {}, model has {} encoders",
                x.len(),
                self.encoders.len()
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return invalid("input contains non-finite values");
        }
        if theta_len != self.controls.len() {
            return invalid(format!(
                "control row has length {theta_len}, model has {} controls",
                self.controls.len()
            ));
        }
        Ok(())
    }
}

/// Tensor product of single-qubit Paulis at the listed 1-based sites, identity elsewhere.
pub fn pauli_string(axes: &[(usize, PauliAxis)], n_qubits: usize) -> Result<HermitianOperator> {
    if n_qubits == 0 {
        return invalid("pauli_string needs at least one qubit");
    }
    let mut per_site: Vec<Option<PauliAxis>> = vec![None; n_qubits];
    for &(site, axis) in axes {
        if site == 0 || site > n_qubits {
            return invalid(format!("site {site} out of range 1..={n_qubits}"));
        }
        if per_site[site - 1].is_some() {
            return invalid(format!("duplicate site {site}"));
        }
        per_site[site - 1] = Some(axis);
    }
    let mut acc = CMatrix::from_element(1, 1, ONE);
    for slot in per_site {
        let factor = match slot {
            Some(axis) => axis.matrix(),
            None => CMatrix::identity(2, 2),
        };
        acc = kron(&acc, &factor);
    }
    HermitianOperator::new(acc)
}

/// Spin matrices of the `d`-dimensional irreducible representation of su(2).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinMatrices {
    pub jx: HermitianOperator,
    pub jy: HermitianOperator,
    pub jz: HermitianOperator,
}

pub fn spin_irrep(d: usize) -> Result<SpinMatrices> {
    if d < 2 {
        return invalid(format!("spin irrep dimension must be >= 2, got {d}"));
    }
    let j = (d as f64 - 1.0) / 2.0;
    // basis index a has magnetic number m = j - a
    let m = |a: usize| j - a as f64;
    let mut jz = CMatrix::zeros(d, d);
    let mut jplus = CMatrix::zeros(d, d);
    for a in 0..d {
        jz[(a, a)] = Complex64::new(m(a), 0.0);
        if a > 0 {
            // J+ |m⟩ = sqrt(j(j+1) - m(m+1)) |m+1⟩, and |m+1⟩ sits at index a-1
            let mm = m(a);
            jplus[(a - 1, a)] = Complex64::new((j * (j + 1.0) - mm * (mm + 1.0)).sqrt(), 0.0);
        }
    }
    let jminus = jplus.adjoint();
    let jx = (&jplus + &jminus) * Complex64::new(0.5, 0.0);
    let jy = (&jplus - &jminus) * Complex64::new(0.0, -0.5);
    Ok(SpinMatrices {
        jx: HermitianOperator::new(jx)?,
        jy: HermitianOperator::new(jy)?,
        jz: HermitianOperator::new(jz)?,
    })
}

/// Affinely maps the spectrum of `m` onto exactly `[-1, 1]`.
pub fn rescale_observable(m: &HermitianOperator) -> Result<HermitianOperator> {
    let eig = m.eigen();
    let (lo, hi) = (eig.min(), eig.max());
    let spread = hi - lo;
    if spread <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return Err(Error::DegenerateObservable(lo));
    }
    let dim = m.dim();
    let scaled = (m.matrix() - CMatrix::identity(dim, dim) * Complex64::new(lo, 0.0))
        * Complex64::new(2.0 / spread, 0.0)
        - CMatrix::identity(dim, dim);
    HermitianOperator::from_nearly_hermitian(scaled)
}

/// `Σ x_i D_i + Σ θ_j H_j`.
pub fn assemble_hamiltonian(model: &ModelSpec, x: &[f64], theta_row: &[f64]) -> Result<HermitianOperator> {
    model.check_inputs(x, theta_row.len())?;
    if theta_row.iter().any(|v| !v.is_finite()) {
        return invalid("control row contains non-finite values");
    }
    let mut h = CMatrix::zeros(model.dim(), model.dim());
    model.hamiltonian_into(x, theta_row, &mut h);
    HermitianOperator::new(h)
}
