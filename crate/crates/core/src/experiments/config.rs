//! Experiment configuration: a JSON document with unknown fields rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Train,
    Landscape,
    ProbLocalmin,
    Lemma1,
    Prop1,
    VerifyHaar,
    LocalLoss,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Train,
        Self::Landscape,
        Self::ProbLocalmin,
        Self::Lemma1,
        Self::Prop1,
        Self::VerifyHaar,
        Self::LocalLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Landscape => "landscape",
            Self::ProbLocalmin => "prob-localmin",
            Self::Lemma1 => "lemma1",
            Self::Prop1 => "prop1",
            Self::VerifyHaar => "verify-haar",
            Self::LocalLoss => "local-loss",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// A scalar or a list of scalars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            Self::One(x) => vec![x.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
    pub max_iters: usize,
    /// Training stops once the gradient norm is at or below this value.
    pub gradient_tolerance: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon_hat: 1e-8, max_iters: 500, gradient_tolerance: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LandscapeMode {
    /// A fresh target and a fresh direction per sample.
    RandomTargets,
    /// One target, a fresh direction per sample.
    FixedTarget,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeConfig {
    pub grid_points: usize,
    pub t_max: f64,
    pub mode: LandscapeMode,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self { grid_points: 81, t_max: 1.0, mode: LandscapeMode::RandomTargets }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianKind {
    /// Gaussian couplings on nearest-neighbour Pauli pairs plus Gaussian fields.
    Random2Local,
    Identity,
    /// I − |φ⟩⟨φ| for a target drawn at overlap p, reproducing the fidelity loss.
    FidelityProjector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    #[serde(default)]
    pub n_qubits: Option<OneOrMany<usize>>,
    #[serde(default)]
    pub depth: Option<OneOrMany<usize>>,
    #[serde(default)]
    pub overlap_p: Option<OneOrMany<f64>>,
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default = "default_eps")]
    pub eps1: f64,
    #[serde(default = "default_eps")]
    pub eps2: f64,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub n_targets: Option<usize>,
    #[serde(default)]
    pub landscape: LandscapeConfig,
    /// Ordered candidate parameters; differentiated subsets are its prefixes.
    #[serde(default)]
    pub param_subset: Option<Vec<usize>>,
    /// Prefix lengths of `param_subset` to evaluate.
    #[serde(default)]
    pub subset_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub n_offsets: Option<usize>,
    #[serde(default)]
    pub hamiltonian: Option<HamiltonianKind>,
    #[serde(default)]
    pub hamiltonian_scale: Option<f64>,
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
    #[serde(default = "default_se_tolerance")]
    pub se_tolerance: f64,
    #[serde(default = "default_e_star")]
    pub bound_e_star: f64,
    #[serde(default)]
    pub output_path: Option<String>,
}

fn default_eps() -> f64 {
    0.05
}

fn default_se_tolerance() -> f64 {
    3.0
}

fn default_e_star() -> f64 {
    0.1
}

/// Line of the first occurrence of `"field"` in the raw document.
fn line_of(raw: &str, field: &str) -> Option<usize> {
    let key = format!("\"{field}\"");
    raw.lines().position(|l| l.contains(&key)).map(|i| i + 1)
}

impl Config {
    pub fn from_json(raw: &str) -> Result<Self> {
        let cfg: Config =
            serde_json::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate().map_err(|(field, msg)| match line_of(raw, field) {
            Some(line) => Error::Config(format!("line {line}: field `{field}`: {msg}")),
            None => Error::Config(format!("field `{field}`: {msg}")),
        })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_json(&raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Minimal config for an experiment with every optional field at its default.
    pub fn minimal(experiment: ExperimentKind, seed: u64) -> Self {
        let mut c: Config = serde_json::from_str(&format!("{{\"seed\": {seed}}}")).expect("minimal config");
        c.experiment = Some(experiment);
        c
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let bad = |f: &'static str, m: String| Err((f, m));
        if let Some(n) = &self.n_qubits {
            let v = n.to_vec();
            if v.is_empty() || v.iter().any(|&q| !(1..=14).contains(&q)) {
                return bad("n_qubits", format!("{v:?}: every entry must lie in 1..=14"));
            }
        }
        if let Some(d) = &self.depth {
            let v = d.to_vec();
            if v.is_empty() || v.iter().any(|&x| x > 64) {
                return bad("depth", format!("{v:?}: every entry must lie in 0..=64"));
            }
        }
        if let Some(p) = &self.overlap_p {
            let v = p.to_vec();
            if v.is_empty() || v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return bad("overlap_p", format!("{v:?}: every entry must lie in [0, 1]"));
            }
        }
        if self.n_samples == Some(0) {
            return bad("n_samples", "must be positive".into());
        }
        for (f, x) in [("eps1", self.eps1), ("eps2", self.eps2), ("bound_e_star", self.bound_e_star)] {
            if !(x.is_finite() && x >= 0.0) {
                return bad(f, format!("{x} must be finite and nonnegative"));
            }
        }
        if !(self.se_tolerance.is_finite() && self.se_tolerance >= 0.0) {
            return bad("se_tolerance", format!("{} must be finite and nonnegative", self.se_tolerance));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return bad("optimizer", format!("learning_rate {} must be positive", o.learning_rate));
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return bad("optimizer", format!("beta1 {} and beta2 {} must lie in [0, 1)", o.beta1, o.beta2));
        }
        if !(o.gradient_tolerance >= 0.0 && o.gradient_tolerance.is_finite()) {
            return bad("optimizer", format!("gradient_tolerance {} must be finite and nonnegative", o.gradient_tolerance));
        }
        if !(o.epsilon_hat > 0.0) {
            return bad("optimizer", format!("epsilon_hat {} must be positive", o.epsilon_hat));
        }
        let l = &self.landscape;
        if l.grid_points < 3 || l.grid_points % 2 == 0 {
            return bad("landscape", format!("grid_points {} must be odd and at least 3", l.grid_points));
        }
        if !(l.t_max > 0.0 && l.t_max.is_finite()) {
            return bad("landscape", format!("t_max {} must be positive", l.t_max));
        }
        if let Some(s) = &self.param_subset {
            if s.is_empty() {
                return bad("param_subset", "must not be empty".into());
            }
            let mut sorted = s.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return bad("param_subset", "indices must be distinct".into());
            }
        }
        if let Some(s) = &self.subset_sizes {
            if s.is_empty() || s.contains(&0) {
                return bad("subset_sizes", "must be a nonempty list of positive sizes".into());
            }
        }
        if self.n_targets == Some(0) {
            return bad("n_targets", "must be positive".into());
        }
        if self.n_offsets == Some(0) {
            return bad("n_offsets", "must be positive".into());
        }
        if let Some(x) = self.hamiltonian_scale {
            if !(x > 0.0 && x.is_finite()) {
                return bad("hamiltonian_scale", format!("{x} must be positive"));
            }
        }
        if let Some(d) = &self.dims {
            if d.is_empty() || d.iter().any(|&x| !(2..=64).contains(&x)) {
                return bad("dims", format!("{d:?}: every entry must lie in 2..=64"));
            }
        }
        Ok(())
    }

    /// Checks that the config names `kind` when it names an experiment at all.
    pub fn check_experiment(&self, kind: ExperimentKind) -> Result<()> {
        match self.experiment {
            Some(k) if k != kind => {
                Err(Error::Config(format!("config is for experiment `{k}` but `{kind}` was requested")))
            }
            _ => Ok(()),
        }
    }

    pub fn n_qubits_or(&self, default: &[usize]) -> Vec<usize> {
        self.n_qubits.as_ref().map_or_else(|| default.to_vec(), |v| v.to_vec())
    }

    pub fn depth_or(&self, default: &[usize]) -> Vec<usize> {
        self.depth.as_ref().map_or_else(|| default.to_vec(), |v| v.to_vec())
    }

    pub fn overlap_or(&self, default: &[f64]) -> Vec<f64> {
        self.overlap_p.as_ref().map_or_else(|| default.to_vec(), |v| v.to_vec())
    }

    pub fn n_samples_or(&self, default: usize) -> usize {
        self.n_samples.unwrap_or(default)
    }
}
