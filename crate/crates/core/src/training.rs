// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! Mean-squared-error fitting of pulse schedules with Adam and exact gradients.

use std::time::Instant;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{real_expectation, PulseSchedule, SparseModel, SparseOperator, StepPropagator};
use crate::error::{invalid, Error, Result};
use crate::linalg::{pairwise_sum, pairwise_sum_vecs, CMatrix, CVector};
use crate::operators::ModelSpec;

/// Eigenvalue gap below which the divided difference uses its confluent limit.
pub const CONFLUENT_GAP: f64 = 1e-12;
const RANGE_TOL: f64 = 1e-12;

/// Fitting targets on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// `2x + 3x² + x³ + 10x⁶ + 8x⁷ − 3x⁹ + 5x¹⁰ − 13x¹²`.
    PolyF1,
    /// `PolyF1` divided by its peak modulus on `[-1, 1]`, so it fits the observable range.
    PolyF1Rescaled,
    /// `(1 − e^{−10x}) / (1 + e^{−10x})`.
    SigmoidF2,
    /// Piecewise-linear interpolation through `(x, y)` knots sorted by `x`.
    Table(Vec<(f64, f64)>),
}

pub fn poly_f1(x: f64) -> f64 {
    const COEFFS: [(i32, f64); 8] = [
        (1, 2.0),
        (2, 3.0),
        (3, 1.0),
        (6, 10.0),
        (7, 8.0),
        (9, -3.0),
        (10, 5.0),
        (12, -13.0),
    ];
    COEFFS.iter().map(|&(p, c)| c * x.powi(p)).sum()
}

fn poly_f1_derivatives(x: f64) -> (f64, f64) {
    const COEFFS: [(i32, f64); 8] = [
        (1, 2.0),
        (2, 3.0),
        (3, 1.0),
        (6, 10.0),
        (7, 8.0),
        (9, -3.0),
        (10, 5.0),
        (12, -13.0),
    ];
    let d1 = COEFFS.iter().map(|&(p, c)| c * p as f64 * x.powi(p - 1)).sum();
    let d2 = COEFFS
        .iter()
        .filter(|(p, _)| *p >= 2)
        .map(|&(p, c)| c * (p * (p - 1)) as f64 * x.powi(p - 2))
        .sum();
    (d1, d2)
}

/// Largest `|f1|` on `[-1, 1]`: the interior maximum near `x ≈ 0.9924`.
pub fn poly_f1_peak() -> f64 {
    let mut x: f64 = 0.99;
    for _ in 0..50 {
        let (d1, d2) = poly_f1_derivatives(x);
        let step = d1 / d2;
        x -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    [poly_f1(x), poly_f1(1.0).abs(), poly_f1(-1.0).abs()]
        .into_iter()
        .fold(0.0, f64::max)
}

pub fn sigmoid_f2(x: f64) -> f64 {
    let e = (-10.0 * x).exp();
    (1.0 - e) / (1.0 + e)
}

impl Target {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Target::PolyF1 => poly_f1(x),
            Target::PolyF1Rescaled => poly_f1(x) / poly_f1_peak(),
            Target::SigmoidF2 => sigmoid_f2(x),
            Target::Table(knots) => interpolate(knots, x),
        }
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    match knots {
        [] => f64::NAN,
        [only] => only.1,
        _ => {
            let idx = knots.partition_point(|k| k.0 <= x).clamp(1, knots.len() - 1);
            let (x0, y0) = knots[idx - 1];
            let (x1, y1) = knots[idx];
            if x1 == x0 {
                return y1;
            }
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

/// Labelled samples `(x, y)` with `y ∈ [-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<(Vec<f64>, f64)>,
}

impl Dataset {
    pub fn new(samples: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return invalid("dataset must be non-empty");
        }
        let m = samples[0].0.len();
        for (x, y) in &samples {
            if x.len() != m {
                return invalid("dataset inputs have unequal lengths");
            }
            if !y.is_finite() || y.abs() > 1.0 + RANGE_TOL {
                return Err(Error::RangeViolation {
                    x: x.first().copied().unwrap_or(f64::NAN),
                    y: *y,
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(Vec<f64>, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Multiplies every target by `c` (validated against the range again).
    pub fn scaled_targets(&self, c: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|(x, y)| (x.clone(), y * c)).collect())
    }
}

/// `n_points` evenly spaced samples of `target` on `[-1, 1]`, endpoints included.
pub fn sample_target(target: &Target, n_points: usize) -> Result<Dataset> {
    sample_target_in(target, n_points, -1.0, 1.0)
}

/// As [`sample_target`] on `[lo, hi]`.
pub fn sample_target_in(target: &Target, n_points: usize, lo: f64, hi: f64) -> Result<Dataset> {
    if n_points < 2 {
        return invalid(format!("need at least 2 points, got {n_points}"));
    }
    if !(lo < hi) || lo < -1.0 || hi > 1.0 {
        return invalid(format!("sampling interval [{lo}, {hi}] must lie inside [-1, 1]"));
    }
    let samples = (0..n_points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (n_points - 1) as f64;
            (vec![x], target.eval(x))
        })
        .collect();
    Dataset::new(samples)
}

/// Forward pass for one input: factored step propagators and all intermediate states.
struct Trajectory {
    steps: Vec<StepPropagator>,
    /// `states[k]` is the state before step `k`; the last entry is `ψ(T)`.
    states: Vec<CVector>,
}

fn forward(model: &ModelSpec, x: &[f64], schedule: &PulseSchedule) -> Trajectory {
    let d = model.dim();
    let mut h = CMatrix::zeros(d, d);
    let mut steps = Vec::with_capacity(schedule.steps());
    let mut states = Vec::with_capacity(schedule.steps() + 1);
    states.push(model.initial_state().amplitudes().clone());
    for row in schedule.rows() {
        model.hamiltonian_into(x, row, &mut h);
        let step = StepPropagator::new(&h, schedule.dt());
        let next = step.apply(states.last().expect("initial state"));
        states.push(next);
        steps.push(step);
    }
    Trajectory { steps, states }
}

/// `W = conj(V) G Vᵀ` with `G_ab = conj(a_a) Γ_ab b_b`, so that
/// `⟨χ| dU[A] |ψ⟩ = Σ_cd A_cd W_cd` for every direction `A`.
fn derivative_kernel(step: &StepPropagator, dt: f64, chi: &CVector, psi: &CVector) -> CMatrix {
    let v = &step.eigen.vectors;
    let lam = &step.eigen.values;
    let a = v.ad_mul(chi);
    let b = v.ad_mul(psi);
    let d = lam.len();
    let g = CMatrix::from_fn(d, d, |r, c| {
        let gamma = if (lam[r] - lam[c]).abs() < CONFLUENT_GAP {
            step.phases[r] * num_complex::Complex64::new(0.0, -dt)
        } else {
            (step.phases[r] - step.phases[c]) / (lam[r] - lam[c])
        };
        a[r].conj() * gamma * b[c]
    });
    v.map(|z| z.conj()) * g * v.transpose()
}

/// Model output and `w · ∂f/∂θ` (row-major `K × p`) for one input.
fn sample_value_and_gradient(
    model: &ModelSpec,
    sparse_controls: &[SparseOperator],
    schedule: &PulseSchedule,
    x: &[f64],
    y: f64,
    scale: f64,
) -> Result<(f64, Vec<f64>)> {
    let traj = forward(model, x, schedule);
    let m = model.observable().matrix();
    let last = traj.states.last().expect("final state");
    let mpsi = m * last;
    let f = real_expectation(last.dotc(&mpsi))?;
    let weight = scale * (f - y);
    let p = schedule.num_controls();
    let mut grad = vec![0.0; schedule.steps() * p];
    let mut chi = mpsi;
    for k in (0..schedule.steps()).rev() {
        let step = &traj.steps[k];
        let w = derivative_kernel(step, schedule.dt(), &chi, &traj.states[k]);
        for (j, op) in sparse_controls.iter().enumerate() {
            grad[k * p + j] = weight * 2.0 * op.contract(&w).re;
        }
        chi = step.apply_adjoint(&chi);
    }
    Ok((f, grad))
}

/// Mean squared error over the dataset.
pub fn loss(model: &ModelSpec, schedule: &PulseSchedule, data: &Dataset) -> Result<f64> {
    check_shapes(model, schedule, data)?;
    let residuals: Vec<f64> = data
        .samples()
        .par_iter()
        .map(|(x, y)| {
            let psi = crate::dynamics::propagate_unchecked(model, x, schedule, model.initial_state().amplitudes().clone());
            let f = real_expectation(psi.dotc(&(model.observable().matrix() * &psi)))?;
            Ok((f - y).powi(2))
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&residuals) / data.len() as f64)
}

fn check_shapes(model: &ModelSpec, schedule: &PulseSchedule, data: &Dataset) -> Result<()> {
    if schedule.num_controls() != model.num_controls() {
        return invalid(format!(
            "schedule has {} controls, model has {}",
            schedule.num_controls(),
            model.num_controls()
        ));
    }
    if data.samples()[0].0.len() != model.num_encoders() {
        return invalid("dataset input length differs from the model's encoder count");
    }
    Ok(())
}

/// Gradient of the loss in the layout of the schedule (`K × p`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleGradient {
    pub steps: usize,
    pub controls: usize,
    pub values: Vec<f64>,
}

impl ScheduleGradient {
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.controls + j]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Loss and its exact gradient, with per-sample contributions reduced by pairwise summation.
pub fn loss_and_gradient(model: &ModelSpec, schedule: &PulseSchedule, data: &Dataset) -> Result<(f64, ScheduleGradient)> {
    check_shapes(model, schedule, data)?;
    let sparse: Vec<SparseOperator> = model
        .controls()
        .iter()
        .map(|h| SparseOperator::from_dense(h.matrix()))
        .collect();
    let n = data.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = data
        .samples()
        .par_iter()
        .map(|(x, y)| {
            let (f, g) = sample_value_and_gradient(model, &sparse, schedule, x, *y, 2.0 / n)?;
            Ok(((f - y).powi(2), g))
        })
        .collect::<Result<_>>()?;
    let sq: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let grads: Vec<Vec<f64>> = parts.into_iter().map(|p| p.1).collect();
    Ok((
        pairwise_sum(&sq) / n,
        ScheduleGradient {
            steps: schedule.steps(),
            controls: schedule.num_controls(),
            values: pairwise_sum_vecs(&grads),
        },
    ))
}

pub fn gradient(model: &ModelSpec, schedule: &PulseSchedule, data: &Dataset) -> Result<ScheduleGradient> {
    loss_and_gradient(model, schedule, data).map(|(_, g)| g)
}

/// `∂L/∂θ_{k,j}` alone.
///
/// Propagates vectors only (truncated Taylor series on sparse operators)
/// and diagonalizes just the probed step, which is far cheaper than the
/// full gradient when one entry is needed.
pub fn gradient_entry(model: &ModelSpec, schedule: &PulseSchedule, data: &Dataset, k: usize, j: usize) -> Result<f64> {
    check_shapes(model, schedule, data)?;
    if k >= schedule.steps() || j >= schedule.num_controls() {
        return invalid(format!("parameter ({k}, {j}) outside the schedule"));
    }
    let sparse = SparseModel::new(model);
    let probe = SparseOperator::from_dense(model.controls()[j].matrix());
    let n = data.len() as f64;
    let dt = schedule.dt();
    let parts: Vec<f64> = data
        .samples()
        .par_iter()
        .map(|(x, y)| {
            let d = model.dim();
            let mut psi = model.initial_state().amplitudes().clone();
            for row in schedule.rows().take(k) {
                sparse.expm_apply(x, row, dt, &mut psi);
            }
            let mut h = CMatrix::zeros(d, d);
            model.hamiltonian_into(x, schedule.row(k), &mut h);
            let step = StepPropagator::new(&h, dt);
            let before = psi.clone();
            psi = step.apply(&psi);
            for row in schedule.rows().skip(k + 1) {
                sparse.expm_apply(x, row, dt, &mut psi);
            }
            let mut chi = model.observable().matrix() * &psi;
            let f = real_expectation(psi.dotc(&chi))?;
            for kk in (k + 1..schedule.steps()).rev() {
                sparse.expm_apply(x, schedule.row(kk), -dt, &mut chi);
            }
            let w = derivative_kernel(&step, dt, &chi, &before);
            Ok(2.0 / n * (f - y) * 2.0 * probe.contract(&w).re)
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&parts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub init_scale: f64,
    pub seed: u64,
    /// Stop as soon as the loss is at or below this value.
    #[serde(default)]
    pub stop_at_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            init_scale: 1.0,
            seed: 0,
            stop_at_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning_rate must be positive");
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return invalid(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return invalid("adam_eps must be positive");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return invalid("init_scale must be finite and non-negative");
        }
        if self.stop_at_loss.is_some_and(|l| l.is_nan()) {
            return invalid("stop_at_loss must not be NaN");
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub final_schedule: PulseSchedule,
    /// Loss after `i` updates at index `i`; length `iterations + 1` unless
    /// training stopped early at `stop_at_loss`.
    pub loss_history: Vec<f64>,
    pub gradient_norm_history: Vec<f64>,
    pub wall_time: f64,
}

impl TrainResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history is never empty")
    }
}

/// Full-batch Adam on the flattened schedule.
pub fn train(model: &ModelSpec, schedule_init: &PulseSchedule, data: &Dataset, config: &TrainConfig) -> Result<TrainResult> {
    train_with_callback(model, schedule_init, data, config, |_, _, _| {})
}

/// As [`train`], invoking `on_iteration(i, loss, grad_norm)` for every evaluated point.
pub fn train_with_callback(
    model: &ModelSpec,
    schedule_init: &PulseSchedule,
    data: &Dataset,
    config: &TrainConfig,
    mut on_iteration: impl FnMut(usize, f64, f64),
) -> Result<TrainResult> {
    config.validate()?;
    check_shapes(model, schedule_init, data)?;
    let start = Instant::now();
    let mut schedule = schedule_init.clone();
    let mut adam = Adam::new(schedule.as_slice().len(), config);
    let mut loss_history = Vec::with_capacity(config.iterations + 1);
    let mut gradient_norm_history = Vec::with_capacity(config.iterations + 1);
    for it in 0..=config.iterations {
        let (l, g) = loss_and_gradient(model, &schedule, data)?;
        if !l.is_finite() {
            return Err(Error::NonFinite {
                quantity: "loss",
                iteration: it,
            });
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "gradient",
                iteration: it,
            });
        }
        let gn = g.norm();
        loss_history.push(l);
        gradient_norm_history.push(gn);
        on_iteration(it, l, gn);
        if it == config.iterations || config.stop_at_loss.is_some_and(|t| l <= t) {
            break;
        }
        adam.step(schedule.as_mut_slice(), &g.values);
    }
    Ok(TrainResult {
        final_schedule: schedule,
        loss_history,
        gradient_norm_history,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Uniform `[0, 1)` double from the top 53 bits of one 64-bit draw.
pub(crate) fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn fill_uniform(rng: &mut ChaCha8Rng, scale: f64, out: &mut [f64]) {
    for a in out {
        let u = unit_uniform(rng);
        *a = if scale == 0.0 { 0.0 } else { scale * (2.0 * u - 1.0) };
    }
}

/// Amplitudes i.i.d. uniform on `[-init_scale, init_scale]` from a ChaCha8 stream.
pub fn init_schedule(steps: usize, controls: usize, dt: f64, init_scale: f64, seed: u64) -> Result<PulseSchedule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_schedule_from(&mut rng, steps, controls, dt, init_scale)
}

pub(crate) fn init_schedule_from(
    rng: &mut ChaCha8Rng,
    steps: usize,
    controls: usize,
    dt: f64,
    init_scale: f64,
) -> Result<PulseSchedule> {
    if !(init_scale >= 0.0 && init_scale.is_finite()) {
        return invalid("init_scale must be finite and non-negative");
    }
    let mut amps = vec![0.0; steps * controls];
    fill_uniform(rng, init_scale, &mut amps);
    PulseSchedule::new(steps, controls, amps, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::predict;
    use crate::operators::{pauli_string, spin_irrep, rescale_observable, PauliAxis::*, StateVector};

    fn zz_pair(state: &str) -> ModelSpec {
        let zz = pauli_string(&[(1, Z), (2, Z)], 2).unwrap();
        ModelSpec::new(
            vec![zz.clone()],
            vec![pauli_string(&[(1, X)], 2).unwrap(), pauli_string(&[(1, Y)], 2).unwrap()],
            zz,
            StateVector::product(state).unwrap(),
        )
        .unwrap()
    }

    fn spin(d: usize) -> ModelSpec {
        let s = spin_irrep(d).unwrap();
        let m = rescale_observable(&s.jz).unwrap();
        ModelSpec::new(vec![s.jz], vec![s.jx, s.jy], m, StateVector::basis(d, 0).unwrap()).unwrap()
    }

    fn fd_gradient(model: &ModelSpec, sched: &PulseSchedule, data: &Dataset, h: f64) -> Vec<f64> {
        (0..sched.as_slice().len())
            .map(|i| {
                let mut plus = sched.clone();
                plus.as_mut_slice()[i] += h;
                let mut minus = sched.clone();
                minus.as_mut_slice()[i] -= h;
                (loss(model, &plus, data).unwrap() - loss(model, &minus, data).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn targets() {
        assert_eq!(sigmoid_f2(0.0), 0.0);
        assert_eq!(poly_f1(0.0), 0.0);
        assert_eq!(poly_f1(1.0), 13.0);
        match sample_target(&Target::PolyF1, 200) {
            Err(Error::RangeViolation { .. }) => {}
            other => panic!("expected range violation, got {other:?}"),
        }
        assert!(sample_target(&Target::SigmoidF2, 1).is_err());
        let data = sample_target(&Target::SigmoidF2, 5).unwrap();
        let xs: Vec<f64> = data.samples().iter().map(|s| s.0[0]).collect();
        assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn rescaled_polynomial_peaks_at_one() {
        let peak = poly_f1_peak();
        assert!((peak - 13.022388091506535).abs() < 1e-12);
        let data = sample_target(&Target::PolyF1Rescaled, 2001).unwrap();
        let max = data.samples().iter().map(|s| s.1).fold(f64::MIN, f64::max);
        assert!(max <= 1.0 && max > 0.9999);
    }

    #[test]
    fn table_target_interpolates() {
        let t = Target::Table(vec![(-1.0, -0.5), (0.0, 0.5), (1.0, 0.0)]);
        assert_eq!(t.eval(-0.5), 0.0);
        assert_eq!(t.eval(0.5), 0.25);
        assert_eq!(t.eval(1.0), 0.0);
    }

    #[test]
    fn loss_examples() {
        let model = zz_pair("0+");
        let sched = init_schedule(4, 2, 0.1, 1.0, 3).unwrap();
        let xs = [-0.7, 0.1, 0.9];
        let exact = Dataset::new(xs.iter().map(|&x| (vec![x], predict(&model, &[x], &sched).unwrap())).collect()).unwrap();
        assert!(loss(&model, &sched, &exact).unwrap() < 1e-28);

        let stationary = zz_pair("00");
        let zero = PulseSchedule::zeros(1, 2, 0.1).unwrap();
        let one = Dataset::new(vec![(vec![0.3], -1.0)]).unwrap();
        assert!((loss(&stationary, &zero, &one).unwrap() - 4.0).abs() < 1e-12);

        let data = sample_target(&Target::SigmoidF2, 9).unwrap();
        let mut rev = data.samples().to_vec();
        rev.reverse();
        let rev = Dataset::new(rev).unwrap();
        let a = loss(&model, &sched, &data).unwrap();
        let b = loss(&model, &sched, &rev).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_at_stationary_pulse() {
        let model = zz_pair("00");
        let sched = PulseSchedule::zeros(1, 2, 0.1).unwrap();
        let data = sample_target(&Target::SigmoidF2, 7).unwrap();
        let g = gradient(&model, &sched, &data).unwrap();
        let fd = fd_gradient(&model, &sched, &data, 1e-5);
        for (a, b) in g.values.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, model) in [(1, zz_pair("00")), (2, zz_pair("0+")), (3, spin(5))] {
            let sched = init_schedule(6, 2, 0.1, 1.5, seed).unwrap();
            let data = sample_target(&Target::SigmoidF2, 6).unwrap();
            let g = gradient(&model, &sched, &data).unwrap();
            let fd = fd_gradient(&model, &sched, &data, 1e-5);
            for (a, b) in g.values.iter().zip(&fd) {
                if a.abs() > 1e-8 {
                    assert!((a - b).abs() / a.abs() < 1e-6, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn duplicated_dataset_has_same_gradient() {
        let model = zz_pair("00");
        let sched = init_schedule(3, 2, 0.1, 1.0, 9).unwrap();
        let data = sample_target(&Target::SigmoidF2, 5).unwrap();
        let doubled = Dataset::new([data.samples(), data.samples()].concat()).unwrap();
        let a = gradient(&model, &sched, &data).unwrap();
        let b = gradient(&model, &sched, &doubled).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn single_entry_matches_full_gradient() {
        let model = zz_pair("0+");
        let sched = init_schedule(7, 2, 0.1, 2.0, 4).unwrap();
        let data = sample_target(&Target::SigmoidF2, 8).unwrap();
        let full = gradient(&model, &sched, &data).unwrap();
        for (k, j) in [(0, 0), (3, 1), (6, 0)] {
            let e = gradient_entry(&model, &sched, &data, k, j).unwrap();
            assert!((e - full.get(k, j)).abs() < 1e-12, "({k},{j})");
        }
        assert!(gradient_entry(&model, &sched, &data, 7, 0).is_err());
    }

    #[test]
    fn adam_with_zero_gradient_is_a_no_op() {
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(3, &cfg);
        let mut params = vec![0.5, -1.0, 2.0];
        for _ in 0..5 {
            adam.step(&mut params, &[0.0, 0.0, 0.0]);
        }
        assert_eq!(params, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn zero_iterations_returns_initial_schedule() {
        let model = zz_pair("00");
        let sched = init_schedule(3, 2, 0.1, 1.0, 1).unwrap();
        let data = sample_target(&Target::SigmoidF2, 5).unwrap();
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        let res = train(&model, &sched, &data, &cfg).unwrap();
        assert_eq!(res.final_schedule, sched);
        assert_eq!(res.loss_history.len(), 1);
        assert_eq!(res.loss_history[0], loss(&model, &sched, &data).unwrap());
    }

    #[test]
    fn training_is_deterministic_and_decreases_loss() {
        let model = zz_pair("00");
        let data = sample_target(&Target::PolyF1Rescaled, 20).unwrap();
        let cfg = TrainConfig {
            iterations: 10,
            ..TrainConfig::default()
        };
        let sched = init_schedule(20, 2, 0.1, 1.0, 5).unwrap();
        let a = train(&model, &sched, &data, &cfg).unwrap();
        let b = train(&model, &sched, &data, &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert!(a.final_loss() < a.loss_history[0]);
        assert!(a.loss_history.iter().all(|l| *l >= 0.0));
    }

    #[test]
    fn early_stop_truncates_a_prefix_of_the_full_run() {
        let model = zz_pair("00");
        let data = sample_target(&Target::PolyF1Rescaled, 20).unwrap();
        let sched = init_schedule(20, 2, 0.1, 1.0, 5).unwrap();
        let full = train(&model, &sched, &data, &TrainConfig { iterations: 10, ..TrainConfig::default() }).unwrap();
        let threshold = full.loss_history[4];
        let cfg = TrainConfig {
            iterations: 10,
            stop_at_loss: Some(threshold),
            ..TrainConfig::default()
        };
        let stopped = train(&model, &sched, &data, &cfg).unwrap();
        let first = full.loss_history.iter().position(|&l| l <= threshold).unwrap();
        assert_eq!(stopped.loss_history, full.loss_history[..=first]);
        assert!(stopped.final_loss() <= threshold);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = TrainConfig {
            adam_beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn init_schedule_properties() {
        let zero = init_schedule(4, 3, 0.1, 0.0, 7).unwrap();
        assert!(zero.as_slice().iter().all(|&a| a == 0.0 && a.is_sign_positive()));
        let a = init_schedule(4, 3, 0.1, 1.0, 7).unwrap();
        let b = init_schedule(4, 3, 0.1, 1.0, 7).unwrap();
        let c = init_schedule(4, 3, 0.1, 1.0, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.as_slice().iter().all(|v| v.abs() <= 1.0));
    }
}
