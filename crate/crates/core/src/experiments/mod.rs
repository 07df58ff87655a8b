//! Config-driven experiment runners. Each run yields one CSV table of rows
//! and one JSON document with the config echo and summary statistics.

pub mod config;
mod landscape;
mod lemma1;
mod local_loss;
mod prob_localmin;
mod prop1;
mod train;
mod verify_haar;

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::circuit::{build_alt, output_state, ParameterizedCircuit};
use crate::derivatives::{LocalExpansion, SecondStates};
use crate::ensembles::{derive_seed, RngStream};
use crate::error::{Error, Result};
use crate::statevector::StateVector;
use crate::theory::TheoryReport;

pub use config::{AdamConfig, Config, ExperimentKind, HamiltonianKind, LandscapeConfig, LandscapeMode, OneOrMany};
pub use train::Adam;

/// Formats a float with 17 significant digits.
pub fn fnum(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rows of string cells under a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Config(format!("CSV encoding failed: {e}"));
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Config(format!("CSV encoding failed: {e}")))
    }
}

/// Result of one experiment run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub experiment: ExperimentKind,
    pub table: Table,
    pub summary: serde_json::Value,
    /// `Some(false)` when a built-in statistical check failed.
    pub passed: Option<bool>,
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    experiment: &'a str,
    config: &'a Config,
    passed: Option<bool>,
    summary: &'a serde_json::Value,
}

impl RunOutput {
    pub fn to_json(&self, config: &Config) -> String {
        let doc = JsonDoc {
            experiment: self.experiment.name(),
            config,
            passed: self.passed,
            summary: &self.summary,
        };
        serde_json::to_string_pretty(&doc).expect("summary serializes") + "\n"
    }

    /// Writes `<dir>/<experiment>.csv` and `<dir>/<experiment>.json`.
    pub fn write(&self, config: &Config, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| Error::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let csv_path = dir.join(format!("{}.csv", self.experiment.name()));
        let json_path = dir.join(format!("{}.json", self.experiment.name()));
        fs::write(&csv_path, self.table.to_csv()?).map_err(io(&csv_path))?;
        fs::write(&json_path, self.to_json(config)).map_err(io(&json_path))?;
        Ok((csv_path, json_path))
    }
}

pub fn run(kind: ExperimentKind, config: &Config) -> Result<RunOutput> {
    config.check_experiment(kind)?;
    match kind {
        ExperimentKind::Train => train::run(config),
        ExperimentKind::Landscape => landscape::run(config),
        ExperimentKind::ProbLocalmin => prob_localmin::run(config),
        ExperimentKind::Lemma1 => lemma1::run(config),
        ExperimentKind::Prop1 => prop1::run(config),
        ExperimentKind::VerifyHaar => verify_haar::run(config),
        ExperimentKind::LocalLoss => local_loss::run(config),
    }
}

// Tags separating the seed streams of different random objects.
const TAG_INSTANCE: u64 = 1;
const TAG_TARGETS: u64 = 2;
const TAG_DIRECTIONS: u64 = 3;
const TAG_HAAR: u64 = 4;
const TAG_OFFSETS: u64 = 5;
const TAG_HAMILTONIAN: u64 = 6;

/// An ALT circuit with uniformly random parameters θ* and its output ψ*.
pub struct Instance {
    pub circuit: ParameterizedCircuit,
    pub theta: Vec<f64>,
    pub psi: StateVector,
    pub seed: u64,
}

impl Instance {
    pub fn alt(base_seed: u64, n_qubits: usize, depth: usize) -> Result<Self> {
        let circuit = build_alt(n_qubits, depth);
        Self::with_circuit(base_seed, circuit, &[n_qubits as u64, depth as u64])
    }

    pub fn with_circuit(base_seed: u64, circuit: ParameterizedCircuit, tags: &[u64]) -> Result<Self> {
        let mut t = vec![TAG_INSTANCE];
        t.extend_from_slice(tags);
        let seed = derive_seed(base_seed, &t);
        let mut rng = RngStream::new(seed, 0);
        let theta: Vec<f64> = (0..circuit.m_params()).map(|_| TAU * rng.uniform()).collect();
        let psi = output_state(&circuit, &theta)?;
        Ok(Self { circuit, theta, psi, seed })
    }
}

/// Seed of the per-sample streams for one experimental cell.
pub(crate) fn cell_seed(base: u64, tag: u64, cell: &[u64]) -> u64 {
    let mut t = vec![tag];
    t.extend_from_slice(cell);
    derive_seed(base, &t)
}

/// Ordered parameter subsets: prefixes of the candidate list, clipped to M.
pub(crate) fn subsets(config: &Config, m_params: usize, default_sizes: &[usize]) -> Result<Vec<Vec<usize>>> {
    let candidates = match &config.param_subset {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&i| i >= m_params) {
                return Err(Error::Config(format!(
                    "param_subset index {bad} is out of range for a circuit with {m_params} parameters"
                )));
            }
            s.clone()
        }
        None => (0..m_params).collect(),
    };
    let sizes = match (&config.subset_sizes, &config.param_subset) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => vec![s.len()],
        (None, None) => default_sizes.to_vec(),
    };
    let mut out: Vec<Vec<usize>> = Vec::new();
    for k in sizes {
        let k = k.min(candidates.len());
        if !out.iter().any(|s| s.len() == k) {
            out.push(candidates[..k].to_vec());
        }
    }
    Ok(out)
}

/// Largest second-derivative cache built eagerly, in complex amplitudes.
const SECOND_CACHE_LIMIT: usize = 1 << 24;

/// Packed second-derivative states when they fit under the memory cap.
pub(crate) fn second_cache(exp: &LocalExpansion<'_>) -> Option<SecondStates> {
    let s = exp.subset().len();
    let d = exp.state().len();
    (s * (s + 1) / 2 * d <= SECOND_CACHE_LIMIT).then(|| exp.second_states())
}

/// Report rows as CSV, one row per check entry.
pub(crate) fn report_rows(table: &mut Table, cell: &[String], seed: u64, streams: &str, report: &TheoryReport) {
    for r in &report.rows {
        let mut row = cell.to_vec();
        row.extend([
            seed.to_string(),
            streams.to_string(),
            r.check.clone(),
            r.label.clone(),
            serde_json::to_value(r.kind).expect("kind").as_str().expect("string").to_string(),
            fnum(r.closed_form),
            fnum(r.estimate),
            fnum(r.standard_error),
            fnum(r.z),
            r.pass.to_string(),
        ]);
        table.push(row);
    }
}

pub(crate) const REPORT_COLUMNS: [&str; 10] =
    ["seed", "stream_id", "check", "entry", "kind", "closed_form", "estimate", "standard_error", "z", "pass"];

pub(crate) fn report_summary(report: &TheoryReport) -> serde_json::Value {
    serde_json::json!({
        "passed": report.passed(),
        "se_tolerance": report.se_tolerance,
        "equality_fraction_within": report.equality_fraction(),
        "checks": report.summaries(),
        "failures": report.failures().take(20).collect::<Vec<_>>(),
    })
}
