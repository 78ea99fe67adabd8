// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use pulseqml_core::diagnostics::{build_family, sweep_size, ModelFamily, Probe, VarianceRecord};
use pulseqml_core::dynamics::{predict, PulseSchedule};
use pulseqml_core::fliess::{finite_difference_coefficient, fliess_expansion, FliessOptions};
use pulseqml_core::lie::{dynamical_lie_algebra, expressivity_check, is_fully_controllable};
use pulseqml_core::linalg::{CMatrix, I, ZERO};
use pulseqml_core::operators::{pauli_string, ModelSpec, PauliAxis};
use pulseqml_core::training::{init_schedule, sample_target, train, TrainConfig};
use pulseqml_core::Error;
use serde::Serialize;

use crate::config::{self, Config, ScheduleConfig};
use crate::output::{float, write_file, write_json, Csv};
use crate::svg::{render, Panel};
use crate::{CliError, CommonArgs};

/// Points on `[-1, 1]` at which fitted and target curves are tabulated.
const CURVE_POINTS: usize = 401;
/// Pauli coefficients below this are left out of the basis table.
const PAULI_CUTOFF: f64 = 1e-12;
/// Largest qubit count for which basis elements are expanded in Pauli strings.
const MAX_PAULI_QUBITS: usize = 6;

fn seed(cfg: &Config, args: &CommonArgs) -> u64 {
    args.seed.or(cfg.seed).unwrap_or(0)
}

fn initial_schedule(s: &ScheduleConfig, controls: usize, seed: u64) -> Result<PulseSchedule, CliError> {
    match s.init.as_str() {
        "random" => Ok(init_schedule(s.steps, controls, s.dt, s.init_scale, seed)?),
        "zeros" => Ok(PulseSchedule::zeros(s.steps, controls, s.dt)?),
        other => Err(CliError::Config(format!("key `schedule.init`: expected \"random\" or \"zeros\", got \"{other}\""))),
    }
}

fn bool_str(b: bool) -> String {
    b.to_string()
}

/// Labels such as `X1 Z3`, site 1 first; `I` for the identity.
fn pauli_label(axes: &[(usize, PauliAxis)]) -> String {
    if axes.is_empty() {
        return "I".into();
    }
    axes.iter().map(|(s, a)| format!("{a}{s}")).collect::<Vec<_>>().join(" ")
}

/// Real coefficients `c_P` with `B = −i Σ c_P P` for a skew-Hermitian `B` on `n` qubits.
fn pauli_expansion(b: &CMatrix, n: usize) -> Result<Vec<(String, f64)>, CliError> {
    let d = b.nrows() as f64;
    let h = b.map(|z| z * I);
    let mut out = Vec::new();
    for code in 0..4usize.pow(n as u32) {
        let axes: Vec<(usize, PauliAxis)> = (0..n)
            .filter_map(|site| {
                let digit = (code / 4usize.pow((n - 1 - site) as u32)) % 4;
                let axis = [None, Some(PauliAxis::X), Some(PauliAxis::Y), Some(PauliAxis::Z)][digit]?;
                Some((site + 1, axis))
            })
            .collect();
        let p = pauli_string(&axes, n)?;
        let c = p.matrix().iter().zip(h.transpose().iter()).fold(ZERO, |acc, (x, y)| acc + x * y).re / d;
        if c.abs() > PAULI_CUTOFF {
            out.push((pauli_label(&axes), c));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct LieReport {
    hilbert_dimension: usize,
    dimension: usize,
    full_dimension: usize,
    controllable: bool,
    truncated: bool,
}

pub fn check_lie(cfg: &Config, args: &CommonArgs) -> Result<(), CliError> {
    let model = cfg.model()?.build()?;
    let dla = dynamical_lie_algebra(model.controls())?;
    let d = model.dim();
    let report = LieReport {
        hilbert_dimension: d,
        dimension: dla.dimension(),
        full_dimension: d * d - 1,
        controllable: is_fully_controllable(&dla),
        truncated: dla.truncated(),
    };
    let mut summary = Csv::new(&["hilbert_dimension", "dimension", "full_dimension", "controllable", "truncated"]);
    summary.row(&[
        report.hilbert_dimension.to_string(),
        report.dimension.to_string(),
        report.full_dimension.to_string(),
        bool_str(report.controllable),
        bool_str(report.truncated),
    ]);
    summary.write(&args.out, "lie_summary.csv")?;

    let qubits = d.trailing_zeros() as usize;
    if d.is_power_of_two() && qubits <= MAX_PAULI_QUBITS {
        let mut basis = Csv::new(&["index", "pauli", "coefficient"]);
        for (i, b) in dla.basis().iter().enumerate() {
            for (label, c) in pauli_expansion(b, qubits)? {
                basis.row(&[i.to_string(), label, float(c)]);
            }
        }
        basis.write(&args.out, "lie_basis.csv")?;
    } else {
        let mut basis = Csv::new(&["index", "row", "col", "re", "im"]);
        for (i, b) in dla.basis().iter().enumerate() {
            for r in 0..d {
                for c in 0..d {
                    let z = b[(r, c)];
                    if z.norm() > PAULI_CUTOFF {
                        basis.row(&[i.to_string(), r.to_string(), c.to_string(), float(z.re), float(z.im)]);
                    }
                }
            }
        }
        basis.write(&args.out, "lie_basis.csv")?;
    }
    if args.json {
        write_json(&args.out, "lie_summary.json", &report)?;
    }
    if args.svg {
        eprintln!("pulseqml: check-lie has no plot; --svg ignored");
    }
    println!(
        "lie closure dimension {} of {} (controllable: {})",
        report.dimension, report.full_dimension, report.controllable
    );
    Ok(())
}

pub fn check_expressivity(cfg: &Config, args: &CommonArgs) -> Result<(), CliError> {
    let model = cfg.model()?.build()?;
    let e = &cfg.expressivity;
    let report = expressivity_check(&model, e.k_max, e.tolerance)?;
    let mut rows = Csv::new(&["k", "dimension", "residual", "vanishes"]);
    for r in &report.per_k {
        rows.row(&[r.k.to_string(), r.dimension.to_string(), float(r.residual), bool_str(r.vanishes)]);
    }
    rows.write(&args.out, "expressivity.csv")?;
    let mut summary = Csv::new(&["verdict", "conclusive", "period_start", "period_length", "k_max", "tolerance"]);
    let (ps, pl) = match report.period {
        Some(p) => (p.start.to_string(), p.length.to_string()),
        None => (String::new(), String::new()),
    };
    summary.row(&[
        report.verdict.to_string(),
        bool_str(report.conclusive),
        ps,
        pl,
        report.k_max.to_string(),
        float(report.tolerance),
    ]);
    summary.write(&args.out, "expressivity_summary.csv")?;
    if args.json {
        write_json(&args.out, "expressivity.json", &report)?;
    }
    if args.svg {
        let pts = |f: &dyn Fn(&pulseqml_core::lie::ChainRow) -> f64| report.per_k.iter().map(|r| (r.k as f64, f(r))).collect();
        let panels = [
            Panel::new("subspace dimension", "k", "dim S_k", (0.0, 0.0, 420.0, 300.0)).with("dim", pts(&|r| r.dimension as f64)),
            Panel::new("largest expectation", "k", "max |<psi|B|psi>|", (420.0, 0.0, 420.0, 300.0))
                .log_y()
                .with("residual", pts(&|r| r.residual)),
        ];
        write_file(&args.out, "expressivity.svg", &render(840.0, 300.0, &panels))?;
    }
    println!("{}", report.verdict);
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    final_loss: f64,
    /// Adam updates actually taken.
    iterations: usize,
    steps: usize,
    dt: f64,
    seed: u64,
}

pub fn fit(cfg: &Config, args: &CommonArgs) -> Result<(), CliError> {
    let model = cfg.model()?.build()?;
    let t = &cfg.train;
    let seed = seed(cfg, args);
    let target = config::target(&t.target)?;
    let data = sample_target(&target, t.points)?;
    let init = initial_schedule(&cfg.schedule, model.num_controls(), seed)?;
    let train_cfg = TrainConfig {
        learning_rate: t.learning_rate,
        iterations: t.iterations,
        adam_beta1: t.adam_beta1,
        adam_beta2: t.adam_beta2,
        adam_eps: t.adam_eps,
        init_scale: cfg.schedule.init_scale,
        seed,
        stop_at_loss: t.stop_at_loss,
    };
    let result = train(&model, &init, &data, &train_cfg)?;

    let mut history = Csv::new(&["iteration", "loss", "gradient_norm"]);
    for (i, (l, g)) in result.loss_history.iter().zip(&result.gradient_norm_history).enumerate() {
        history.row(&[i.to_string(), float(*l), float(*g)]);
    }
    history.write(&args.out, "loss_history.csv")?;
    write_schedule(&args.out, &result.final_schedule)?;

    let mut curve = Csv::new(&["x", "target", "prediction"]);
    let mut fitted = Vec::with_capacity(CURVE_POINTS);
    let mut wanted = Vec::with_capacity(CURVE_POINTS);
    for i in 0..CURVE_POINTS {
        let x = -1.0 + 2.0 * i as f64 / (CURVE_POINTS - 1) as f64;
        let y = target.eval(x);
        let f = predict(&model, &[x], &result.final_schedule)?;
        curve.row(&[float(x), float(y), float(f)]);
        fitted.push((x, f));
        wanted.push((x, y));
    }
    curve.write(&args.out, "curve.csv")?;

    let summary = FitSummary {
        final_loss: result.final_loss(),
        iterations: result.loss_history.len() - 1,
        steps: cfg.schedule.steps,
        dt: cfg.schedule.dt,
        seed,
    };
    if args.json {
        write_json(&args.out, "fit_summary.json", &summary)?;
    }
    if args.svg {
        let losses = result.loss_history.iter().enumerate().map(|(i, l)| (i as f64, *l)).collect();
        let panels = [
            Panel::new("fit", "x", "f(x)", (0.0, 0.0, 640.0, 420.0)).with("target", wanted).with("fitted", fitted),
            Panel::new("loss", "iteration", "MSE", (70.0, 40.0, 220.0, 150.0)).log_y().with("loss", losses),
        ];
        write_file(&args.out, "fit.svg", &render(640.0, 420.0, &panels))?;
    }
    println!("final loss {}", float(summary.final_loss));
    Ok(())
}

fn write_schedule(dir: &Path, s: &PulseSchedule) -> Result<(), CliError> {
    let names: Vec<String> = std::iter::once("step".to_string())
        .chain((0..s.num_controls()).map(|j| format!("theta_{j}")))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for (k, row) in s.rows().enumerate() {
        csv.row(&std::iter::once(k.to_string()).chain(row.iter().map(|v| float(*v))).collect::<Vec<_>>());
    }
    csv.write(dir, "schedule.csv")
}

#[derive(Serialize)]
struct FliessRow {
    k: usize,
    coefficient: f64,
    tail: f64,
    fd_oracle: Option<f64>,
}

pub fn fliess(cfg: &Config, args: &CommonArgs) -> Result<(), CliError> {
    let model = cfg.model()?.build()?;
    let f = &cfg.fliess;
    let schedule = initial_schedule(&cfg.schedule, model.num_controls(), seed(cfg, args))?;
    let opts = FliessOptions {
        max_len: f.max_len,
        substeps: f.substeps,
        budget: f.budget,
    };
    let series = fliess_expansion(&model, &schedule, &opts)?;
    let rows = series
        .coefficients
        .iter()
        .map(|c| {
            let fd = if f.oracle && c.k <= 4 {
                Some(finite_difference_coefficient(&model, &schedule, c.k, f.fd_step)?)
            } else {
                None
            };
            Ok(FliessRow {
                k: c.k,
                coefficient: c.value,
                tail: c.tail,
                fd_oracle: fd,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut header = vec!["k", "coefficient", "tail"];
    if f.oracle {
        header.push("fd_oracle");
    }
    let mut csv = Csv::new(&header);
    for r in &rows {
        let mut fields = vec![r.k.to_string(), float(r.coefficient), float(r.tail)];
        if f.oracle {
            fields.push(r.fd_oracle.map(float).unwrap_or_default());
        }
        csv.row(&fields);
    }
    csv.write(&args.out, "fliess.csv")?;
    if args.json {
        write_json(&args.out, "fliess.json", &rows)?;
    }
    if args.svg {
        let pts = rows.iter().map(|r| (r.k as f64, r.coefficient.abs())).collect();
        let panel = Panel::new("Taylor coefficients", "k", "|C_k|", (0.0, 0.0, 480.0, 320.0)).log_y().with("|C_k|", pts);
        write_file(&args.out, "fliess.svg", &render(480.0, 320.0, &[panel]))?;
    }
    println!("{} coefficients from words up to length {}", rows.len(), f.max_len);
    Ok(())
}

fn controls_of(family: &ModelFamily) -> Result<usize, CliError> {
    Ok(build_family(family).map(|m: ModelSpec| m.num_controls())?)
}

pub fn variance(cfg: &Config, args: &CommonArgs) -> Result<(), CliError> {
    let v = cfg.variance()?;
    let seed = seed(cfg, args);
    let probe = v.probe.probe()?;
    if v.steps.is_empty() || v.series.is_empty() {
        return Err(CliError::Config("keys `variance.steps` and `variance.series` must be non-empty".into()));
    }
    // Check every size against the budget before starting any sweep.
    for s in &v.series {
        let (kind, _) = config::series_family(s)?;
        for &size in &s.sizes {
            let d = kind.dimension(size).unwrap_or(usize::MAX);
            if d > v.max_dim {
                return Err(Error::BudgetExceeded {
                    what: format!("Hilbert-space dimension of {kind} size {size}"),
                    required: d as u64,
                    budget: v.max_dim as u64,
                }
                .into());
            }
        }
    }
    let mut records: Vec<(VarianceRecord, usize)> = Vec::new();
    for s in &v.series {
        let (kind, state) = config::series_family(s)?;
        for &steps in &v.steps {
            for r in sweep_size(kind, &state, &s.sizes, steps, v.dt, v.num_samples, seed, probe, v.max_dim)? {
                let p = controls_of(&ModelFamily::new(kind, r.size).with_initial_state(state.clone()))?;
                records.push((r, p));
            }
        }
    }

    let mut csv = Csv::new(&["family", "size", "K", "dt", "num_samples", "seed", "param_index", "variance"]);
    for (r, p) in &records {
        csv.row(&[
            r.family.to_string(),
            r.size.to_string(),
            r.steps.to_string(),
            float(r.dt),
            r.num_samples.to_string(),
            r.seed.to_string(),
            r.param_index(*p),
            float(r.variance),
        ]);
    }
    csv.write(&args.out, "variance.csv")?;
    if probe == Probe::All {
        let mut table = Csv::new(&["family", "size", "K", "step", "control", "variance"]);
        for (r, p) in &records {
            for (e, var) in r.per_parameter.iter().flatten().enumerate() {
                table.row(&[
                    r.family.to_string(),
                    r.size.to_string(),
                    r.steps.to_string(),
                    (e / p).to_string(),
                    (e % p).to_string(),
                    float(*var),
                ]);
            }
        }
        table.write(&args.out, "variance_table.csv")?;
    }
    if args.json {
        let plain: Vec<&VarianceRecord> = records.iter().map(|(r, _)| r).collect();
        write_json(&args.out, "variance.json", &plain)?;
    }
    if args.svg {
        let panel = if v.steps.len() == 1 {
            let mut p = Panel::new("gradient variance vs size", "size", "Var[dL/dtheta]", (0.0, 0.0, 560.0, 380.0)).log_y();
            for s in &v.series {
                let pts = records.iter().filter(|(r, _)| r.family.name() == s.family).map(|(r, _)| (r.size as f64, r.variance)).collect();
                p = p.with(&s.family, pts);
            }
            p
        } else {
            let mut p = Panel::new("gradient variance vs K", "K", "Var[dL/dtheta]", (0.0, 0.0, 560.0, 380.0)).log_x().log_y();
            for s in &v.series {
                for &size in &s.sizes {
                    let pts = records
                        .iter()
                        .filter(|(r, _)| r.family.name() == s.family && r.size == size)
                        .map(|(r, _)| (r.steps as f64, r.variance))
                        .collect();
                    p = p.with(&format!("{} {size}", s.family), pts);
                }
            }
            p
        };
        write_file(&args.out, "variance.svg", &render(560.0, 380.0, &[panel]))?;
    }
    println!("{} variance records", records.len());
    Ok(())
}
