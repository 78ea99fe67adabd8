// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! Truncated Fliess-series expansion of a univariate model output in powers of `x`.
//!
//! The coefficient of `x^k` collects every index word with exactly `k`
//! drift letters (index 0, with `θ₀ ≡ 1`). Words are enumerated
//! depth-first in time order: the first letter acts earliest. Along a word
//! the density matrix is advanced by `ρ ← [−iH_j, ρ]` and the iterated
//! integral by one more level of the chained RK4 system, so every prefix
//! is computed once and shared by all its extensions.
//!
//! In the nested-integral notation `c_{j1…jn}(T) = ∫₀ᵀ θ_{j1}(t1) ∫₀^{t1} θ_{j2} ⋯`,
//! where `j1` is the latest time, the same sum reads
//! `C_k = Σ c_{j1…jn}(T) ⟨ψ₀| 𝒜_{jn} ⋯ 𝒜_{j1} M |ψ₀⟩` with `𝒜_j X = [iH_j, X]`:
//! `𝒜_{j1}` touches `M` first.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{predict, PulseSchedule};
use crate::error::{invalid, Error, Result};
use crate::linalg::{CMatrix, I};
use crate::operators::ModelSpec;

pub const DEFAULT_MAX_LEN: usize = 6;
pub const DEFAULT_SUBSTEPS: usize = 16;
pub const DEFAULT_WORD_BUDGET: u64 = 5_000_000;
pub const MIN_SUBSTEPS: usize = 4;

/// A word `(j1, …, jn)` over `{0, …, p}`; 0 is the drift channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexTuple(pub Vec<usize>);

impl IndexTuple {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn zero_count(&self) -> usize {
        self.0.iter().filter(|&&j| j == 0).count()
    }
}

/// Channel value `θ_j` on each RK4 step of the fine grid.
struct Grid<'a> {
    schedule: &'a PulseSchedule,
    substeps: usize,
    h: f64,
}

impl<'a> Grid<'a> {
    fn new(schedule: &'a PulseSchedule, substeps: usize) -> Self {
        Self {
            schedule,
            substeps,
            h: schedule.dt() / substeps as f64,
        }
    }

    fn len(&self) -> usize {
        self.schedule.steps() * self.substeps
    }

    fn channel(&self, j: usize, step: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.schedule.amplitude(step / self.substeps, j - 1)
        }
    }
}

/// One level `z_l` of the chained system `z_l' = θ(t) z_{l−1}`, with its RK4 stage values.
#[derive(Clone)]
struct ChainLevel {
    /// `z_l` at the grid nodes.
    nodes: Vec<f64>,
    /// Stage values `Y2, Y3, Y4` per step; `Y1` is the node value.
    stages: Vec<[f64; 3]>,
}

impl ChainLevel {
    fn constant_one(steps: usize) -> Self {
        Self {
            nodes: vec![1.0; steps + 1],
            stages: vec![[1.0; 3]; steps],
        }
    }

    /// Integrates the next level driven by channel `j` with this level as input.
    fn extend(&self, grid: &Grid<'_>, j: usize) -> Self {
        let n = grid.len();
        let h = grid.h;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut stages = Vec::with_capacity(n);
        let mut z = 0.0;
        nodes.push(z);
        for step in 0..n {
            let a = grid.channel(j, step);
            let [p2, p3, p4] = self.stages[step];
            let k1 = a * self.nodes[step];
            let y2 = z + 0.5 * h * k1;
            let k2 = a * p2;
            let y3 = z + 0.5 * h * k2;
            let k3 = a * p3;
            let y4 = z + h * k3;
            let k4 = a * p4;
            stages.push([y2, y3, y4]);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            nodes.push(z);
        }
        Self { nodes, stages }
    }

    fn terminal(&self) -> f64 {
        *self.nodes.last().expect("grid has at least one node")
    }
}

fn check_substeps(substeps: usize) -> Result<()> {
    if substeps < MIN_SUBSTEPS {
        return invalid(format!("need at least {MIN_SUBSTEPS} substeps per sub-pulse, got {substeps}"));
    }
    Ok(())
}

/// `c_{j1…jn}(T) = ∫₀ᵀ θ_{j1}(t1) dt1 ∫₀^{t1} θ_{j2}(t2) dt2 ⋯ ∫₀^{t_{n−1}} θ_{jn}(tn) dtn`
/// with `θ₀ ≡ 1`, integrated by classical RK4 on `substeps` points per sub-pulse.
pub fn iterated_integral(schedule: &PulseSchedule, tuple: &IndexTuple, substeps: usize) -> Result<f64> {
    check_substeps(substeps)?;
    let p = schedule.num_controls();
    if let Some(&bad) = tuple.0.iter().find(|&&j| j > p) {
        return invalid(format!("index {bad} exceeds control count {p}"));
    }
    if tuple.is_empty() {
        return Ok(1.0);
    }
    let grid = Grid::new(schedule, substeps);
    // innermost integral (jn) first
    let level = tuple
        .0
        .iter()
        .rev()
        .fold(ChainLevel::constant_one(grid.len()), |lvl, &j| lvl.extend(&grid, j));
    Ok(level.terminal())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FliessOptions {
    pub max_len: usize,
    pub substeps: usize,
    /// Largest number of words (all lengths up to `max_len`) that may be enumerated.
    pub budget: u64,
}

impl Default for FliessOptions {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            substeps: DEFAULT_SUBSTEPS,
            budget: DEFAULT_WORD_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub k: usize,
    pub value: f64,
    /// Magnitude of the longest-word contribution to this coefficient.
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTruncation {
    pub max_len: usize,
    pub coefficients: Vec<CoefficientRow>,
}

impl SeriesTruncation {
    pub fn coefficient(&self, k: usize) -> Option<f64> {
        self.coefficients.iter().find(|r| r.k == k).map(|r| r.value)
    }
}

/// Number of words of length `0..=max_len` over `p + 1` letters, saturating.
pub fn word_count(p: usize, max_len: usize) -> u64 {
    let base = p as u64 + 1;
    let mut total: u64 = 0;
    let mut layer: u64 = 1;
    for _ in 0..=max_len {
        total = total.saturating_add(layer);
        layer = layer.saturating_mul(base);
    }
    total
}

struct Expansion<'a> {
    grid: Grid<'a>,
    generators: Vec<CMatrix>,
    observable_t: CMatrix,
    max_len: usize,
    sums: Vec<f64>,
    tails: Vec<f64>,
    max_imag: f64,
}

impl Expansion<'_> {
    fn visit(&mut self, len: usize, zeros: usize, level: &ChainLevel, rho: &CMatrix) {
        let overlap: Complex64 = rho.iter().zip(self.observable_t.iter()).map(|(a, b)| a * b).sum();
        // Nested commutators grow geometrically with word length, so judge the
        // imaginary residue relative to the term's own magnitude.
        self.max_imag = self.max_imag.max(overlap.im.abs() / overlap.norm().max(1.0));
        let term = level.terminal() * overlap.re;
        self.sums[zeros] += term;
        if len == self.max_len {
            self.tails[zeros] += term;
            return;
        }
        for j in 0..self.generators.len() {
            let next_rho = &self.generators[j] * rho - rho * &self.generators[j];
            let next_level = level.extend(&self.grid, j);
            self.visit(len + 1, zeros + usize::from(j == 0), &next_level, &next_rho);
        }
    }
}

/// All coefficients `C_0 … C_{max_len}` of the truncated expansion.
pub fn fliess_expansion(model: &ModelSpec, schedule: &PulseSchedule, opts: &FliessOptions) -> Result<SeriesTruncation> {
    if !model.is_univariate() {
        return Err(Error::Unsupported(format!(
            "Fliess expansion is univariate, model has {} encoders",
            model.num_encoders()
        )));
    }
    if schedule.num_controls() != model.num_controls() {
        return invalid("schedule control count differs from the model's");
    }
    check_substeps(opts.substeps)?;
    let required = word_count(model.num_controls(), opts.max_len);
    if required > opts.budget {
        return Err(Error::BudgetExceeded {
            what: format!("Fliess expansion to length {}", opts.max_len),
            required,
            budget: opts.budget,
        });
    }
    // −iH for the drift (index 0) then each control
    let generators: Vec<CMatrix> = std::iter::once(&model.encoders()[0])
        .chain(model.controls())
        .map(|h| h.matrix() * (-I))
        .collect();
    let psi = model.initial_state().amplitudes();
    let rho = psi * psi.adjoint();
    let grid = Grid::new(schedule, opts.substeps);
    let root = ChainLevel::constant_one(grid.len());
    let mut exp = Expansion {
        grid,
        generators,
        observable_t: model.observable().matrix().transpose(),
        max_len: opts.max_len,
        sums: vec![0.0; opts.max_len + 1],
        tails: vec![0.0; opts.max_len + 1],
        max_imag: 0.0,
    };
    exp.visit(0, 0, &root, &rho);
    if exp.max_imag > 1e-9 {
        return Err(Error::NumericalIntegrity(format!(
            "Fliess term has imaginary part {:e}",
            exp.max_imag
        )));
    }
    Ok(SeriesTruncation {
        max_len: opts.max_len,
        coefficients: exp
            .sums
            .iter()
            .zip(&exp.tails)
            .enumerate()
            .map(|(k, (&value, &tail))| CoefficientRow {
                k,
                value,
                tail: tail.abs(),
            })
            .collect(),
    })
}

/// Single Taylor coefficient `C_k` from words of length at most `max_len`.
pub fn taylor_coefficient(model: &ModelSpec, schedule: &PulseSchedule, k: usize, max_len: usize) -> Result<f64> {
    if k > max_len {
        return invalid(format!("k = {k} exceeds the truncation length {max_len}"));
    }
    let opts = FliessOptions {
        max_len,
        ..FliessOptions::default()
    };
    let series = fliess_expansion(model, schedule, &opts)?;
    Ok(series.coefficients[k].value)
}

/// `Σ_k C_k x^k`.
pub fn series_eval(truncation: &SeriesTruncation, x: f64) -> f64 {
    truncation
        .coefficients
        .iter()
        .map(|row| row.value * x.powi(row.k as i32))
        .sum()
}

/// `f^{(k)}(0) / k!` from five-point central differences of `predict` with step `h`, `k ≤ 4`.
pub fn finite_difference_coefficient(model: &ModelSpec, schedule: &PulseSchedule, k: usize, h: f64) -> Result<f64> {
    if !model.is_univariate() {
        return Err(Error::Unsupported("finite-difference oracle is univariate".into()));
    }
    if !(h > 0.0) {
        return invalid("finite-difference step must be positive");
    }
    let f = |x: f64| predict(model, &[x], schedule);
    let (m2, m1, z, p1, p2) = (f(-2.0 * h)?, f(-h)?, f(0.0)?, f(h)?, f(2.0 * h)?);
    let deriv = match k {
        0 => z,
        1 => (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h),
        2 => (-p2 + 16.0 * p1 - 30.0 * z + 16.0 * m1 - m2) / (12.0 * h * h),
        3 => (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * h.powi(3)),
        4 => (p2 - 4.0 * p1 + 6.0 * z - 4.0 * m1 + m2) / h.powi(4),
        _ => return invalid(format!("five-point stencil supports k <= 4, got {k}")),
    };
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    Ok(deriv / factorial)
}
