// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! The three reference model families and gradient-variance experiments
//! used to contrast barren plateaus against trainable landscapes.

use std::fmt;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::pairwise_sum;
use crate::operators::{pauli_string, rescale_observable, spin_irrep, HermitianOperator, ModelSpec, PauliAxis, StateVector};
use crate::training::{gradient, gradient_entry, init_schedule_from, sample_target, Dataset, Target};

/// Largest Hilbert-space dimension a sweep will build unless told otherwise.
pub const DEFAULT_DIMENSION_BUDGET: usize = 64;
/// Points in the fixed sigmoid probe dataset.
pub const PROBE_POINTS: usize = 16;
/// Amplitude range of the random schedules drawn for variance estimates.
pub const VARIANCE_INIT_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// ZZ-coupled qubit pair, drift `Z⊗Z`, controls `X⊗I`, `Y⊗I`, `M = Z⊗Z`.
    TwoQubit,
    /// Spin irrep of dimension `d`: encoder `Jz`, controls `Jx`, `Jy`, `M = Jz/j`.
    Su2Irrep,
    /// Ring of `n` qubits with local X/Y controls and tunable nearest-neighbour ZZ.
    Ring,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::TwoQubit => "two_qubit",
            FamilyKind::Su2Irrep => "su2_irrep",
            FamilyKind::Ring => "ring",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "two_qubit" => Some(FamilyKind::TwoQubit),
            "su2_irrep" => Some(FamilyKind::Su2Irrep),
            "ring" => Some(FamilyKind::Ring),
            _ => None,
        }
    }

    /// Hilbert-space dimension for a given size parameter.
    pub fn dimension(self, size: usize) -> Option<usize> {
        match self {
            FamilyKind::Su2Irrep => Some(size),
            _ => u32::try_from(size).ok().and_then(|s| 1usize.checked_shl(s)),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Initial state of a family member.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStateChoice {
    /// `|0…0⟩` for qubit families, the highest-weight state for the spin family.
    #[default]
    Default,
    /// Product of single-qubit labels from `0`, `1`, `+`, `-`; site 1 first.
    Product(String),
    /// A computational basis vector.
    Basis(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFamily {
    pub kind: FamilyKind,
    /// Qubit count for `TwoQubit`/`Ring`, irrep dimension for `Su2Irrep`.
    pub size: usize,
    #[serde(default)]
    pub initial_state: InitialStateChoice,
}

impl ModelFamily {
    pub fn new(kind: FamilyKind, size: usize) -> Self {
        Self {
            kind,
            size,
            initial_state: InitialStateChoice::Default,
        }
    }

    pub fn with_initial_state(mut self, choice: InitialStateChoice) -> Self {
        self.initial_state = choice;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FamilyKind::TwoQubit if self.size != 2 => invalid(format!("two_qubit family needs size 2, got {}", self.size)),
            FamilyKind::Su2Irrep | FamilyKind::Ring if self.size < 2 => {
                invalid(format!("{} family needs size >= 2, got {}", self.kind, self.size))
            }
            FamilyKind::Ring if self.size > 20 => invalid(format!("ring of {} qubits is too large", self.size)),
            _ => Ok(()),
        }
    }

    pub fn dimension(&self) -> Result<usize> {
        self.validate()?;
        Ok(self.kind.dimension(self.size).expect("validated size"))
    }
}

/// Instantiates a family member.
pub fn build_family(family: &ModelFamily) -> Result<ModelSpec> {
    use PauliAxis::*;
    let dim = family.dimension()?;
    let (encoders, controls, observable) = match family.kind {
        FamilyKind::TwoQubit => (
            vec![pauli_string(&[(1, Z), (2, Z)], 2)?],
            vec![pauli_string(&[(1, X)], 2)?, pauli_string(&[(1, Y)], 2)?],
            pauli_string(&[(1, Z), (2, Z)], 2)?,
        ),
        FamilyKind::Su2Irrep => {
            let s = spin_irrep(dim)?;
            let observable = rescale_observable(&s.jz)?;
            (vec![s.jz], vec![s.jx, s.jy], observable)
        }
        FamilyKind::Ring => {
            let n = family.size;
            let zs = (1..=n).map(|k| pauli_string(&[(k, Z)], n)).collect::<Result<Vec<_>>>()?;
            let encoder = HermitianOperator::sum(&zs)?;
            let mut controls = Vec::with_capacity(3 * n);
            for k in 1..=n {
                controls.push(pauli_string(&[(k, X)], n)?);
                controls.push(pauli_string(&[(k, Y)], n)?);
            }
            for k in 1..=n {
                let next = k % n + 1;
                // For n = 2 both couplings are the same operator; kept so that p = 3n.
                let pair = if k < next { [(k, Z), (next, Z)] } else { [(next, Z), (k, Z)] };
                controls.push(pauli_string(&pair, n)?);
            }
            (vec![encoder], controls, zs[0].clone())
        }
    };
    let state = match &family.initial_state {
        InitialStateChoice::Default => StateVector::basis(dim, 0)?,
        InitialStateChoice::Basis(i) => StateVector::basis(dim, *i)?,
        InitialStateChoice::Product(labels) => {
            if family.kind == FamilyKind::Su2Irrep {
                return invalid("product-state labels apply to qubit families only");
            }
            StateVector::product(labels)?
        }
    };
    ModelSpec::new(encoders, controls, observable, state)
}

/// Which gradient entries a variance run records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// One amplitude `θ_{step, control}` (0-based).
    Entry { step: usize, control: usize },
    /// Every amplitude; the record's headline variance is their mean.
    All,
}

impl Default for Probe {
    fn default() -> Self {
        Probe::Entry { step: 0, control: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRecord {
    pub family: FamilyKind,
    pub size: usize,
    pub steps: usize,
    pub dt: f64,
    pub num_samples: usize,
    pub seed: u64,
    pub probe: Probe,
    pub variance: f64,
    /// Row-major `K × p` table of per-amplitude variances, present for [`Probe::All`].
    pub per_parameter: Option<Vec<f64>>,
}

impl VarianceRecord {
    /// Flattened `k·p + j` index of the probed amplitude, or `all`.
    pub fn param_index(&self, controls: usize) -> String {
        match self.probe {
            Probe::Entry { step, control } => (step * controls + control).to_string(),
            Probe::All => "all".to_string(),
        }
    }
}

/// Unbiased (`n − 1`) sample variance, summed pairwise.
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return invalid("sample variance needs at least two values");
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    Ok(pairwise_sum(&sq) / (n - 1.0))
}

/// The fixed dataset whose loss is differentiated in variance runs.
pub fn probe_dataset() -> Result<Dataset> {
    sample_target(&Target::SigmoidF2, PROBE_POINTS)
}

/// Gradient variance over random schedules for an arbitrary model.
///
/// Sample `i` draws its schedule from ChaCha8 stream `i` of `seed`, so the
/// record does not depend on how samples are spread over threads.
pub fn gradient_variance_for_model(
    model: &ModelSpec,
    data: &Dataset,
    steps: usize,
    dt: f64,
    num_samples: usize,
    seed: u64,
    probe: Probe,
) -> Result<(f64, Option<Vec<f64>>)> {
    if num_samples < 2 {
        return invalid(format!("num_samples must be >= 2, got {num_samples}"));
    }
    let p = model.num_controls();
    if let Probe::Entry { step, control } = probe {
        if step >= steps || control >= p {
            return invalid(format!("probe ({step}, {control}) outside a {steps}x{p} schedule"));
        }
    }
    let draw = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        init_schedule_from(&mut rng, steps, p, dt, VARIANCE_INIT_SCALE)
    };
    match probe {
        Probe::Entry { step, control } => {
            let grads = (0..num_samples)
                .into_par_iter()
                .map(|i| gradient_entry(model, &draw(i)?, data, step, control))
                .collect::<Result<Vec<f64>>>()?;
            Ok((sample_variance(&grads)?, None))
        }
        Probe::All => {
            let grads = (0..num_samples)
                .into_par_iter()
                .map(|i| gradient(model, &draw(i)?, data).map(|g| g.values))
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let table = (0..steps * p)
                .map(|e| sample_variance(&grads.iter().map(|g| g[e]).collect::<Vec<_>>()))
                .collect::<Result<Vec<f64>>>()?;
            let mean = pairwise_sum(&table) / table.len() as f64;
            Ok((mean, Some(table)))
        }
    }
}

/// Gradient variance of the probe loss for one family member.
pub fn gradient_variance(
    family: &ModelFamily,
    steps: usize,
    dt: f64,
    num_samples: usize,
    seed: u64,
    probe: Probe,
) -> Result<VarianceRecord> {
    let model = build_family(family)?;
    let data = probe_dataset()?;
    let (variance, per_parameter) = gradient_variance_for_model(&model, &data, steps, dt, num_samples, seed, probe)?;
    if !variance.is_finite() {
        return Err(Error::NumericalIntegrity("non-finite gradient variance".into()));
    }
    Ok(VarianceRecord {
        family: family.kind,
        size: family.size,
        steps,
        dt,
        num_samples,
        seed,
        probe,
        variance,
        per_parameter,
    })
}

/// One record per layer count, all with the same seed.
pub fn sweep_layers(
    family: &ModelFamily,
    step_counts: &[usize],
    dt: f64,
    num_samples: usize,
    seed: u64,
    probe: Probe,
) -> Result<Vec<VarianceRecord>> {
    if step_counts.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("layer counts must be strictly ascending");
    }
    step_counts
        .iter()
        .map(|&k| gradient_variance(family, k, dt, num_samples, seed, probe))
        .collect()
}

/// One record per size at fixed `K` and `dt`.
///
/// Every size is checked against `max_dim` before any work starts.
#[allow(clippy::too_many_arguments)]
pub fn sweep_size(
    kind: FamilyKind,
    initial_state: &InitialStateChoice,
    sizes: &[usize],
    steps: usize,
    dt: f64,
    num_samples: usize,
    seed: u64,
    probe: Probe,
    max_dim: usize,
) -> Result<Vec<VarianceRecord>> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("sizes must be strictly ascending");
    }
    let families: Vec<ModelFamily> = sizes
        .iter()
        .map(|&s| ModelFamily::new(kind, s).with_initial_state(initial_state.clone()))
        .collect();
    for f in &families {
        f.validate()?;
        let d = f.kind.dimension(f.size).unwrap_or(usize::MAX);
        if d > max_dim {
            return Err(Error::BudgetExceeded {
                what: format!("Hilbert-space dimension of {} size {}", f.kind, f.size),
                required: d as u64,
                budget: max_dim as u64,
            });
        }
    }
    families
        .iter()
        .map(|f| gradient_variance(f, steps, dt, num_samples, seed, probe))
        .collect()
}

/// First layer count after which the variance stays put.
///
/// Returns the smallest `K_i` such that every later consecutive pair
/// `(K_j, K_{j+1})`, `j ≥ i`, differs by less than `rel_tol` relative to
/// the earlier value. `None` if even the last pair moves more than that.
pub fn plateau_onset(records: &[VarianceRecord], rel_tol: f64) -> Option<usize> {
    let mut onset = None;
    for i in (0..records.len().saturating_sub(1)).rev() {
        let (a, b) = (records[i].variance, records[i + 1].variance);
        if (b - a).abs() < rel_tol * a.abs() {
            onset = Some(records[i].steps);
        } else {
            break;
        }
    }
    onset
}
