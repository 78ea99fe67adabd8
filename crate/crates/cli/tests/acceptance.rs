// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Every criterion prints one `criterion N: PASS|FAIL`
//! line; the target exits non-zero when any criterion fails. Criteria run one
//! at a time so the wall-clock limits measure an unshared machine. Positional
//! arguments select criteria by name substring.
//!
//! The variance criteria (8 and 9) run hundreds of thousands of propagations
//! and take tens of minutes on a single core.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pulseqml_core::diagnostics::{build_family, plateau_onset, sweep_layers, sweep_size, FamilyKind, InitialStateChoice, ModelFamily, Probe};
use pulseqml_core::dynamics::{predict, PulseSchedule};
use pulseqml_core::fliess::{fliess_expansion, iterated_integral, FliessOptions, IndexTuple};
use pulseqml_core::lie::{dynamical_lie_algebra, expressivity_check, s_chain, Field, OperatorSubspace, Verdict};
use pulseqml_core::linalg::CMatrix;
use pulseqml_core::operators::{pauli_string, rescale_observable, HermitianOperator, ModelSpec, PauliAxis, StateVector};
use pulseqml_core::training::{gradient, init_schedule, loss, sample_target, train, Dataset, Target, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static FAILURES: AtomicUsize = AtomicUsize::new(0);

fn verdict(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    if !pass {
        FAILURES.fetch_add(1, Ordering::SeqCst);
    }
}

fn family(kind: FamilyKind, size: usize) -> ModelSpec {
    build_family(&ModelFamily::new(kind, size)).unwrap()
}

fn pair(state: &str) -> ModelSpec {
    build_family(&ModelFamily::new(FamilyKind::TwoQubit, 2).with_initial_state(InitialStateChoice::Product(state.into()))).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Lie closure dimensions against a brute-force oracle

/// Real coordinates of a complex matrix: real parts then imaginary parts.
fn realify(m: &CMatrix) -> Vec<f64> {
    m.iter().map(|z| z.re).chain(m.iter().map(|z| z.im)).collect()
}

fn complexify(v: &[f64], d: usize) -> CMatrix {
    let n = d * d;
    CMatrix::from_iterator(d, d, (0..n).map(|i| Complex64::new(v[i], v[n + i])))
}

/// Span all pairwise commutators, orthonormalize by SVD, repeat until the rank stops growing.
fn brute_force_closure_dim(controls: &[HermitianOperator]) -> usize {
    let d = controls[0].dim();
    let mut basis: Vec<CMatrix> = controls.iter().map(|h| h.matrix() * Complex64::new(0.0, 1.0)).collect();
    let mut rank = 0;
    loop {
        let mut rows: Vec<Vec<f64>> = basis.iter().map(realify).collect();
        for i in 0..basis.len() {
            for j in 0..i {
                rows.push(realify(&(&basis[i] * &basis[j] - &basis[j] * &basis[i])));
            }
        }
        let m = DMatrix::from_fn(rows.len(), 2 * d * d, |r, c| rows[r][c]);
        let svd = m.svd(false, true);
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-9 * smax).collect();
        let v_t = svd.v_t.unwrap();
        let next: Vec<CMatrix> = keep.iter().map(|&i| complexify(&v_t.row(i).iter().copied().collect::<Vec<_>>(), d)).collect();
        if next.len() == rank {
            return rank;
        }
        rank = next.len();
        basis = next;
    }
}

fn criterion_1_lie_closure_dimensions() {
    let mut cases = vec![(FamilyKind::Ring, 2, 15), (FamilyKind::Ring, 3, 63)];
    cases.extend((2..=9).map(|d| (FamilyKind::Su2Irrep, d, 3)));
    let mut ok = true;
    let mut worst_time: f64 = 0.0;
    let mut detail = Vec::new();
    for (kind, size, want) in cases {
        let model = family(kind, size);
        let t = Instant::now();
        let got = dynamical_lie_algebra(model.controls()).unwrap().dimension();
        worst_time = worst_time.max(t.elapsed().as_secs_f64());
        let oracle = brute_force_closure_dim(model.controls());
        ok &= got == want && oracle == want;
        detail.push(format!("{kind}{size}={got}/{oracle}"));
    }
    ok &= worst_time < 10.0;
    verdict(1, ok, &format!("dims (impl/oracle) {}; slowest {worst_time:.2}s < 10s", detail.join(" ")));
}

// ---------------------------------------------------------------------------
// 2. Subspace chain of the ZZ-coupled pair

fn criterion_2_subspace_chain_and_verdicts() {
    use PauliAxis::*;
    let site1 = |a| pauli_string(&[(1, a)], 2).unwrap().into_matrix();
    let with_z2 = |a| pauli_string(&[(1, a), (2, Z)], 2).unwrap().into_matrix();
    let even = OperatorSubspace::complex_span(4, &[with_z2(X), with_z2(Y), with_z2(Z)]);
    let odd = OperatorSubspace::complex_span(4, &[site1(X), site1(Y), site1(Z)]);
    assert_eq!(even.field(), Field::Complex);

    let chain = s_chain(&pair("00"), 8).unwrap();
    let period = chain.period.map(|p| p.length);
    let mut worst: f64 = 0.0;
    for (k, s) in chain.subspaces.iter().enumerate() {
        let expected = if k % 2 == 0 { &even } else { &odd };
        worst = worst.max(s.projector_distance(expected));
    }
    let pass = expressivity_check(&pair("00"), 8, 1e-10).unwrap();
    let fail = expressivity_check(&pair("0+"), 8, 1e-10).unwrap();
    let even_vanish = fail.per_k.iter().all(|r| r.vanishes == (r.k % 2 == 0));
    let ok = period == Some(2)
        && worst < 1e-8
        && pass.verdict == Verdict::PassesNecessaryCondition
        && fail.verdict == Verdict::FailsNecessaryCondition
        && even_vanish;
    verdict(
        2,
        ok,
        &format!(
            "period {period:?}, max projector distance {worst:.2e} < 1e-8, |00>: {}, |0+>: {} (even k vanish: {even_vanish})",
            pass.verdict, fail.verdict
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Odd symmetry of the |0>|+> model

fn criterion_3_odd_output() {
    let model = pair("0+");
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let s = init_schedule(10, 2, 0.1, 1.0, seed).unwrap();
        for x in [0.1, 0.3, 0.7, 1.0] {
            worst = worst.max((predict(&model, &[x], &s).unwrap() + predict(&model, &[-x], &s).unwrap()).abs());
        }
    }
    verdict(3, worst < 1e-9, &format!("max |f(x) + f(-x)| = {worst:.2e} < 1e-9 over 100 schedules"));
}

// ---------------------------------------------------------------------------
// 4. Analytic gradient against central differences

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> HermitianOperator {
    let a = CMatrix::from_fn(d, d, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    HermitianOperator::from_nearly_hermitian((&a + a.adjoint()).scale(0.5)).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> StateVector {
    let v = nalgebra::DVector::from_fn(d, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    StateVector::normalized(v).unwrap()
}

/// Relative errors use `max(|fd|, 1e-5)` as denominator: below that the
/// central difference itself is dominated by rounding (≈1e-11 absolute).
const GRADIENT_FLOOR: f64 = 1e-5;

fn criterion_4_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(2..=8);
        let p = rng.random_range(1..=3);
        let k = rng.random_range(1..=10);
        let controls = (0..p).map(|_| random_hermitian(&mut rng, d)).collect();
        let observable = rescale_observable(&random_hermitian(&mut rng, d)).unwrap();
        let model = ModelSpec::new(vec![random_hermitian(&mut rng, d)], controls, observable, random_state(&mut rng, d)).unwrap();
        let data = Dataset::new((0..4).map(|_| (vec![rng.random_range(-1.0..1.0)], rng.random_range(-1.0..1.0))).collect()).unwrap();
        let amps: Vec<f64> = (0..k * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sched = PulseSchedule::new(k, p, amps.clone(), 0.1).unwrap();
        let g = gradient(&model, &sched, &data).unwrap();
        for i in 0..amps.len() {
            let shifted = |delta: f64| {
                let mut a = amps.clone();
                a[i] += delta;
                loss(&model, &PulseSchedule::new(k, p, a, 0.1).unwrap(), &data).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            worst = worst.max((g.values[i] - fd).abs() / fd.abs().max(GRADIENT_FLOOR));
        }
    }
    verdict(4, worst < 1e-6, &format!("max relative error {worst:.2e} < 1e-6 over 20 random models (d <= 8, K <= 10)"));
}

// ---------------------------------------------------------------------------
// 5. Iterated-integral expansion

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `f^{(k)}(0)/k!` from five-point stencils of the simulated output.
fn fd_taylor(model: &ModelSpec, s: &PulseSchedule, k: usize, h: f64) -> f64 {
    let f = |x: f64| predict(model, &[x], s).unwrap();
    let (m2, m1, z, p1, p2) = (f(-2.0 * h), f(-h), f(0.0), f(h), f(2.0 * h));
    match k {
        0 => z,
        1 => (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h),
        2 => (-p2 + 16.0 * p1 - 30.0 * z + 16.0 * m1 - m2) / (12.0 * h * h) / 2.0,
        3 => (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * h * h * h) / 6.0,
        _ => unreachable!(),
    }
}

fn criterion_5_fliess_cross_checks() {
    let opts = FliessOptions {
        max_len: 10,
        ..FliessOptions::default()
    };
    let mut coeff_err: f64 = 0.0;
    for state in ["00", "0+", "1-"] {
        for (seed, k) in [(1, 1), (2, 3), (3, 5)] {
            let model = pair(state);
            let s = init_schedule(k, 2, 0.1, 1.0, seed).unwrap();
            let series = fliess_expansion(&model, &s, &opts).unwrap();
            for c in 0..=3 {
                coeff_err = coeff_err.max((series.coefficients[c].value - fd_taylor(&model, &s, c, 1e-2)).abs());
            }
        }
    }

    let s = init_schedule(5, 2, 0.1, 1.0, 7).unwrap();
    let t = s.duration();
    let mut closed_err: f64 = 0.0;
    for n in 1..=8 {
        let c = iterated_integral(&s, &IndexTuple(vec![0; n]), 16).unwrap();
        closed_err = closed_err.max((c - t.powi(n as i32) / factorial(n)).abs());
    }
    let a = -0.8;
    let constant = PulseSchedule::new(5, 2, vec![a, 0.3].repeat(5), 0.1).unwrap();
    for n in 1..=8 {
        let c = iterated_integral(&constant, &IndexTuple(vec![1; n]), 16).unwrap();
        closed_err = closed_err.max((c - (a * t).powi(n as i32) / factorial(n)).abs());
    }

    let ii = |w: Vec<usize>| iterated_integral(&s, &IndexTuple(w), 16).unwrap();
    let mut shuffle_err: f64 = 0.0;
    for a in 0..=2 {
        for b in 0..=2 {
            shuffle_err = shuffle_err.max((ii(vec![a]) * ii(vec![b]) - ii(vec![a, b]) - ii(vec![b, a])).abs());
            for c in 0..=2 {
                let lhs = ii(vec![a]) * ii(vec![b, c]);
                let rhs = ii(vec![a, b, c]) + ii(vec![b, a, c]) + ii(vec![b, c, a]);
                shuffle_err = shuffle_err.max((lhs - rhs).abs());
            }
        }
    }
    let ok = coeff_err < 1e-4 && closed_err < 1e-10 && shuffle_err < 1e-8;
    verdict(
        5,
        ok,
        &format!("C_k vs FD {coeff_err:.2e} < 1e-4; closed forms {closed_err:.2e} < 1e-10; shuffle {shuffle_err:.2e} < 1e-8"),
    );
}

// ---------------------------------------------------------------------------
// 6. Polynomial fit on the ZZ-coupled pair

/// The 500 updates are a budget: training stops at the first iterate with
/// MSE <= 1e-3. Adam at this learning rate keeps making occasional loss
/// spikes afterwards, so the line also reports where an unstopped run ends.
fn criterion_6_polynomial_fit() {
    let model = pair("00");
    let data = sample_target(&Target::PolyF1Rescaled, 200).unwrap();
    let init = init_schedule(200, 2, 0.1, 1.0, 0).unwrap();
    let cfg = TrainConfig {
        iterations: 500,
        learning_rate: 0.1,
        stop_at_loss: Some(1e-3),
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let result = train(&model, &init, &data, &cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let updates = result.loss_history.len() - 1;
    let unstopped = train(&model, &init, &data, &TrainConfig { stop_at_loss: None, ..cfg.clone() }).unwrap();
    let ok = result.final_loss() <= 1e-3 && updates <= 500 && secs < 600.0;
    verdict(
        6,
        ok,
        &format!(
            "final MSE {:.3e} <= 1e-3 after {updates} <= 500 updates in {secs:.0}s < 600s (unstopped run: min {:.3e}, loss at 500 {:.3e})",
            result.final_loss(),
            unstopped.loss_history.iter().cloned().fold(f64::INFINITY, f64::min),
            unstopped.final_loss()
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Sigmoid fits on spin irreps of growing dimension

/// The highest-weight output is the z-component of a rotated unit vector and
/// does not depend on the irrep, so losses agree to rounding; this is the
/// slack allowed for "non-increasing".
const FLAT_REL_TOL: f64 = 1e-9;

fn criterion_7_sigmoid_trend_in_dimension() {
    let data = sample_target(&Target::SigmoidF2, 50).unwrap();
    let cfg = TrainConfig {
        iterations: 200,
        ..TrainConfig::default()
    };
    let mut ok = true;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let losses: Vec<f64> = [3, 5, 7]
            .iter()
            .map(|&d| {
                let model = family(FamilyKind::Su2Irrep, d);
                let init = init_schedule(50, 2, 0.1, 1.0, seed).unwrap();
                train(&model, &init, &data, &cfg).unwrap().final_loss()
            })
            .collect();
        ok &= losses.windows(2).all(|w| w[1] <= w[0] * (1.0 + FLAT_REL_TOL));
        lines.push(format!("seed {seed}: {:.6e} {:.6e} {:.6e}", losses[0], losses[1], losses[2]));
    }
    verdict(7, ok, &format!("final loss at d = 3, 5, 7 (T = 5) non-increasing within {FLAT_REL_TOL:e} relative; {}", lines.join("; ")));
}

// ---------------------------------------------------------------------------
// 8. Gradient variance: ring versus spin irreps of matched dimension

fn criterion_8_variance_contrast() {
    let t = Instant::now();
    let probe = Probe::default();
    let ring = sweep_size(FamilyKind::Ring, &InitialStateChoice::Default, &[2, 3, 4, 5], 500, 0.1, 200, 0, probe, 64).unwrap();
    let spin = sweep_size(FamilyKind::Su2Irrep, &InitialStateChoice::Default, &[4, 8, 16, 32], 500, 0.1, 200, 0, probe, 64).unwrap();
    let rv: Vec<f64> = ring.iter().map(|r| r.variance).collect();
    let sv: Vec<f64> = spin.iter().map(|r| r.variance).collect();
    let monotone = rv.windows(2).all(|w| w[1] < w[0]);
    let decay = rv[0] / rv[3];
    let ratio = sv.iter().cloned().fold(f64::MIN, f64::max) / sv.iter().cloned().fold(f64::MAX, f64::min);
    let ok = monotone && decay >= 10.0 && ratio <= 5.0;
    verdict(
        8,
        ok,
        &format!(
            "ring n=2..5 {:.3e} {:.3e} {:.3e} {:.3e} (decreasing: {monotone}, decay {decay:.2}x, need >= 10x); spin d=4..32 max/min {ratio:.3} <= 5; {:.0}s",
            rv[0],
            rv[1],
            rv[2],
            rv[3],
            t.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Variance plateau in the number of pulse steps

fn criterion_9_plateau_onset() {
    let ks = [50, 100, 200, 400, 800];
    let sweep = |n| sweep_layers(&ModelFamily::new(FamilyKind::Ring, n), &ks, 0.1, 200, 0, Probe::default()).unwrap();
    let three = sweep(3);
    let v: Vec<f64> = three.iter().map(|r| r.variance).collect();
    let decreases = v[0] > v[4];
    let last_change = (v[4] - v[3]).abs() / v[3];
    let onset2 = plateau_onset(&sweep(2), 0.2);
    let onset4 = plateau_onset(&sweep(4), 0.2);
    let onset_ok = match (onset2, onset4) {
        (Some(a), Some(b)) => b >= a,
        (Some(_), None) => true,
        _ => false,
    };
    let ok = decreases && last_change < 0.2 && onset_ok;
    verdict(
        9,
        ok,
        &format!(
            "n=3 variance {} (first > last: {decreases}, last change {:.1}% < 20%); onset K n=2 {onset2:?}, n=4 {onset4:?}",
            v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" "),
            100.0 * last_change
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. Byte-identical CLI output

fn run_cli(sub: &str, config: &Path, out: &Path, threads: &str) {
    let status = Command::new(env!("CARGO_BIN_EXE_pulseqml"))
        .args([sub, "--threads", threads, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "{sub} failed");
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_10_deterministic_cli() {
    let root: PathBuf = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_determinism");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    let configs = [
        ("check-lie", "[model]\nfamily = \"ring\"\nsize = 3\n"),
        ("check-expressivity", "[model]\nfamily = \"two_qubit\"\ninitial_state = \"0+\"\n"),
        (
            "fit",
            "seed = 4\n[model]\nfamily = \"two_qubit\"\n[schedule]\nsteps = 20\n[train]\ntarget = \"poly_rescaled\"\npoints = 40\niterations = 15\n",
        ),
        ("fliess", "seed = 9\n[model]\nfamily = \"two_qubit\"\n[schedule]\nsteps = 4\n[fliess]\nmax_len = 7\noracle = true\n"),
        (
            "variance",
            "seed = 3\n[variance]\nsteps = [10, 20]\nnum_samples = 8\nprobe = \"all\"\n[[variance.series]]\nfamily = \"ring\"\nsizes = [2, 3]\n[[variance.series]]\nfamily = \"su2_irrep\"\nsizes = [4]\n",
        ),
    ];
    let mut ok = true;
    let mut checked = 0;
    for (sub, text) in configs {
        let cfg = root.join(format!("{sub}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let runs: Vec<Vec<(String, Vec<u8>)>> = ["1", "2", "1"]
            .iter()
            .enumerate()
            .map(|(i, threads)| {
                let out = root.join(format!("{sub}_{i}"));
                run_cli(sub, &cfg, &out, threads);
                csv_files(&out)
            })
            .collect();
        ok &= !runs[0].is_empty() && runs.iter().all(|r| r == &runs[0]);
        checked += runs[0].len();
    }
    verdict(10, ok, &format!("{checked} CSV files identical across 3 runs (1, 2, 1 threads) of all five subcommands"));
}

// ---------------------------------------------------------------------------

const CRITERIA: &[(&str, fn())] = &[
    ("criterion_1_lie_closure_dimensions", criterion_1_lie_closure_dimensions),
    ("criterion_2_subspace_chain_and_verdicts", criterion_2_subspace_chain_and_verdicts),
    ("criterion_3_odd_output", criterion_3_odd_output),
    ("criterion_4_gradient_oracle", criterion_4_gradient_oracle),
    ("criterion_5_fliess_cross_checks", criterion_5_fliess_cross_checks),
    ("criterion_6_polynomial_fit", criterion_6_polynomial_fit),
    ("criterion_7_sigmoid_trend_in_dimension", criterion_7_sigmoid_trend_in_dimension),
    ("criterion_8_variance_contrast", criterion_8_variance_contrast),
    ("criterion_9_plateau_onset", criterion_9_plateau_onset),
    ("criterion_10_deterministic_cli", criterion_10_deterministic_cli),
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    for (name, criterion) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        if catch_unwind(AssertUnwindSafe(criterion)).is_err() {
            let n = name.split('_').nth(1).unwrap_or("?");
            println!("criterion {n}: FAIL — aborted by a panic");
            FAILURES.fetch_add(1, Ordering::SeqCst);
        }
    }
    let failed = FAILURES.load(Ordering::SeqCst);
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
