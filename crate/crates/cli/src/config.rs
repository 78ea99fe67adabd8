// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! TOML experiment configuration and the symbolic operator syntax.

use std::path::Path;

use pulseqml_core::diagnostics::{build_family, FamilyKind, InitialStateChoice, ModelFamily, Probe, DEFAULT_DIMENSION_BUDGET};
use pulseqml_core::fliess::{DEFAULT_MAX_LEN, DEFAULT_SUBSTEPS, DEFAULT_WORD_BUDGET};
use pulseqml_core::lie::{DEFAULT_EXPECTATION_TOL, DEFAULT_K_MAX};
use pulseqml_core::operators::{pauli_string, rescale_observable, spin_irrep, HermitianOperator, ModelSpec, PauliAxis, StateVector};
use pulseqml_core::training::Target;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub expressivity: ExpressivitySection,
    #[serde(default)]
    pub fliess: FliessSection,
    pub variance: Option<VarianceSection>,
}

/// Either a named family or an explicit operator list (`family = "custom"`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: String,
    pub size: Option<usize>,
    pub initial_state: Option<StateSpec>,
    /// Qubit count for Pauli symbols in a custom model.
    pub qubits: Option<usize>,
    /// Irrep dimension for `Jx`/`Jy`/`Jz` symbols in a custom model.
    pub spin_dim: Option<usize>,
    #[serde(default)]
    pub encoders: Vec<String>,
    #[serde(default)]
    pub controls: Vec<String>,
    pub observable: Option<String>,
    /// Shift and scale the custom observable's spectrum onto `[-1, 1]`.
    #[serde(default)]
    pub rescale_observable: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Basis(usize),
    Labels(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub dt: f64,
    /// `random` (uniform on `±init_scale`) or `zeros`.
    pub init: String,
    pub init_scale: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            dt: 0.1,
            init: "random".into(),
            init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// `poly`, `poly_rescaled` or `sigmoid`.
    pub target: String,
    pub points: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Stop once the loss reaches this value.
    pub stop_at_loss: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            target: "sigmoid".into(),
            points: 50,
            learning_rate: 0.1,
            iterations: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            stop_at_loss: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpressivitySection {
    pub k_max: usize,
    pub tolerance: f64,
}

impl Default for ExpressivitySection {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            tolerance: DEFAULT_EXPECTATION_TOL,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FliessSection {
    pub max_len: usize,
    pub substeps: usize,
    pub budget: u64,
    /// Add a finite-difference column for `k ≤ 4`.
    pub oracle: bool,
    pub fd_step: f64,
}

impl Default for FliessSection {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            substeps: DEFAULT_SUBSTEPS,
            budget: DEFAULT_WORD_BUDGET,
            oracle: false,
            fd_step: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceSection {
    pub series: Vec<SeriesConfig>,
    /// Layer counts `K`; more than one turns the run into a layer sweep.
    pub steps: Vec<usize>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub num_samples: usize,
    #[serde(default)]
    pub probe: ProbeSpec,
    #[serde(default = "default_budget")]
    pub max_dim: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub family: String,
    pub sizes: Vec<usize>,
    pub initial_state: Option<StateSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(untagged)]
pub enum ProbeSpec {
    #[default]
    First,
    Named(String),
    Entry([usize; 2]),
}

fn default_dt() -> f64 {
    0.1
}

fn default_budget() -> usize {
    DEFAULT_DIMENSION_BUDGET
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

impl Config {
    pub fn model(&self) -> Result<&ModelConfig, CliError> {
        self.model.as_ref().ok_or_else(|| CliError::Config("missing table `model` (with key `family`)".into()))
    }

    pub fn variance(&self) -> Result<&VarianceSection, CliError> {
        self.variance.as_ref().ok_or_else(|| CliError::Config("missing table `variance`".into()))
    }
}

pub fn family_kind(name: &str) -> Result<FamilyKind, CliError> {
    FamilyKind::from_name(name)
        .ok_or_else(|| CliError::Config(format!("key `family`: unknown family `{name}` (two_qubit, su2_irrep, ring, custom)")))
}

fn state_choice(spec: &Option<StateSpec>) -> InitialStateChoice {
    match spec {
        None => InitialStateChoice::Default,
        Some(StateSpec::Basis(i)) => InitialStateChoice::Basis(*i),
        Some(StateSpec::Labels(s)) => InitialStateChoice::Product(s.clone()),
    }
}

pub fn series_family(series: &SeriesConfig) -> Result<(FamilyKind, InitialStateChoice), CliError> {
    Ok((family_kind(&series.family)?, state_choice(&series.initial_state)))
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec, CliError> {
        if self.family == "custom" {
            return self.build_custom();
        }
        let kind = family_kind(&self.family)?;
        let size = match (kind, self.size) {
            (_, Some(s)) => s,
            (FamilyKind::TwoQubit, None) => 2,
            (_, None) => return config_err("key `model.size` is required for this family"),
        };
        let family = ModelFamily::new(kind, size).with_initial_state(state_choice(&self.initial_state));
        Ok(build_family(&family)?)
    }

    fn build_custom(&self) -> Result<ModelSpec, CliError> {
        let space = match (self.qubits, self.spin_dim) {
            (Some(n), None) => Space::Qubits(n),
            (None, Some(d)) => Space::Spin(d),
            _ => return config_err("custom model needs exactly one of keys `model.qubits`, `model.spin_dim`"),
        };
        let parse_all = |key: &str, list: &[String]| -> Result<Vec<HermitianOperator>, CliError> {
            list.iter()
                .map(|s| parse_operator(s, space).map_err(|e| CliError::Config(format!("key `model.{key}`: {e}"))))
                .collect()
        };
        let encoders = parse_all("encoders", &self.encoders)?;
        let controls = parse_all("controls", &self.controls)?;
        let obs_text = self.observable.as_deref().ok_or_else(|| CliError::Config("missing key `model.observable`".into()))?;
        let mut observable = parse_operator(obs_text, space).map_err(|e| CliError::Config(format!("key `model.observable`: {e}")))?;
        if self.rescale_observable {
            observable = rescale_observable(&observable)?;
        }
        let dim = observable.dim();
        let state = match &self.initial_state {
            None => StateVector::basis(dim, 0)?,
            Some(StateSpec::Basis(i)) => StateVector::basis(dim, *i)?,
            Some(StateSpec::Labels(s)) => StateVector::product(s)?,
        };
        Ok(ModelSpec::new(encoders, controls, observable, state)?)
    }
}

impl ProbeSpec {
    pub fn probe(&self) -> Result<Probe, CliError> {
        match self {
            ProbeSpec::First => Ok(Probe::default()),
            ProbeSpec::Named(s) if s == "first" => Ok(Probe::default()),
            ProbeSpec::Named(s) if s == "all" => Ok(Probe::All),
            ProbeSpec::Named(s) => config_err(format!("key `variance.probe`: expected \"first\", \"all\" or [k, j], got \"{s}\"")),
            ProbeSpec::Entry([step, control]) => Ok(Probe::Entry {
                step: *step,
                control: *control,
            }),
        }
    }
}

pub fn target(name: &str) -> Result<Target, CliError> {
    match name {
        "poly" => Ok(Target::PolyF1),
        "poly_rescaled" => Ok(Target::PolyF1Rescaled),
        "sigmoid" => Ok(Target::SigmoidF2),
        other => config_err(format!("key `train.target`: unknown target `{other}` (poly, poly_rescaled, sigmoid)")),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Space {
    Qubits(usize),
    Spin(usize),
}

/// Parses `term (+|-) term …` where a term is `[coef *] factor factor …`.
///
/// Factors are Pauli symbols with a 1-based site (`X1`, `Z2`) on a qubit
/// space, or `Jx`/`Jy`/`Jz`/`I` on a spin space. Factors in one term
/// multiply; on a qubit space they must sit on distinct sites.
pub fn parse_operator(text: &str, space: Space) -> Result<HermitianOperator, String> {
    let mut terms = Vec::new();
    for raw in split_terms(text) {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let (coef, body) = match raw.split_once('*') {
            Some((c, b)) => {
                let c = c.trim();
                let c = if c == "-" { -1.0 } else { c.parse::<f64>().map_err(|_| format!("bad coefficient `{c}`"))? };
                (c, b.trim())
            }
            None => match raw.strip_prefix('-') {
                Some(rest) => (-1.0, rest.trim()),
                None => (1.0, raw),
            },
        };
        terms.push(parse_term(body, space)?.scaled(coef));
    }
    if terms.is_empty() {
        return Err(format!("empty operator `{text}`"));
    }
    HermitianOperator::sum(&terms).map_err(|e| e.to_string())
}

/// Splits at top-level `+`/`-`, keeping the sign with the following term
/// and leaving exponents such as `1e-3` intact.
fn split_terms(text: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut prev: Option<char> = None;
    let mut prev2: Option<char> = None;
    for c in text.chars() {
        let in_exponent = matches!(prev, Some('e' | 'E')) && prev2.is_some_and(|p| p.is_ascii_digit() || p == '.');
        if (c == '+' || c == '-') && !in_exponent {
            out.push(if c == '-' { "-".to_string() } else { String::new() });
        } else {
            out.last_mut().expect("non-empty").push(c);
        }
        if !c.is_whitespace() {
            prev2 = prev;
            prev = Some(c);
        }
    }
    out
}

fn parse_term(body: &str, space: Space) -> Result<HermitianOperator, String> {
    let factors: Vec<&str> = body.split_whitespace().collect();
    if factors.is_empty() {
        return Err("term without factors".into());
    }
    match space {
        Space::Qubits(n) => {
            let mut axes = Vec::new();
            for f in &factors {
                if *f == "I" {
                    continue;
                }
                let mut chars = f.chars();
                let axis = chars.next().and_then(PauliAxis::from_char).ok_or_else(|| format!("unknown factor `{f}`"))?;
                let site: usize = chars.as_str().parse().map_err(|_| format!("factor `{f}` needs a site number"))?;
                if axes.iter().any(|&(s, _)| s == site) {
                    return Err(format!("site {site} appears twice in `{body}`"));
                }
                axes.push((site, axis));
            }
            pauli_string(&axes, n).map_err(|e| e.to_string())
        }
        Space::Spin(d) => {
            let s = spin_irrep(d).map_err(|e| e.to_string())?;
            let mut m = HermitianOperator::identity(d).map_err(|e| e.to_string())?.into_matrix();
            for f in &factors {
                let op = match *f {
                    "Jx" => s.jx.matrix(),
                    "Jy" => s.jy.matrix(),
                    "Jz" => s.jz.matrix(),
                    "I" => continue,
                    other => return Err(format!("unknown factor `{other}`")),
                };
                m = &m * op;
            }
            HermitianOperator::new(m).map_err(|_| format!("term `{body}` is not Hermitian"))
        }
    }
}
