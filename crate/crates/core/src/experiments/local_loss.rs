//! Local (Hamiltonian) loss ⟨ψ|V†HV|ψ⟩ with V drawn from the block ensemble
//! fixing ψ*: derivative moments, the reduction to the fidelity loss, and the
//! local-minimum bound.

use serde::Serialize;

use super::{
    cell_seed, report_rows, report_summary, second_cache, subsets, Config, ExperimentKind, HamiltonianKind,
    Instance, RunOutput, Table, REPORT_COLUMNS, TAG_HAMILTONIAN, TAG_TARGETS,
};
use crate::derivatives::{is_local_min, Hamiltonian, LocalExpansion, Precision};
use crate::ensembles::{derive_seed, sample_block_unitary, sample_target, EnsembleSpec, RngStream};
use crate::error::Result;
use crate::linalg::{dot, CMatrix};
use crate::stats::{accumulate, binomial_se, wilson, Proportion, Z95};
use crate::statevector::{Pauli, PauliString};
use crate::theory::{
    f1, hessian_coefficient, local_loss_f1, local_loss_f2, local_loss_hessian_coefficient, theorem_s9_bound,
    LocalBoundInputs, LocalLossStats, TheoryReport,
};

const REDUCTION_TOLERANCE: f64 = 1e-12;
/// Overlap of the reference target used when `hamiltonian` is a fidelity projector.
const PROJECTOR_OVERLAP: f64 = 0.8;

/// Σ c·P_iQ_{i+1} over neighbouring pairs plus Σ h·P_i, with standard normal
/// coefficients over all non-identity Pauli letters.
pub fn random_two_local(n_qubits: usize, rng: &mut RngStream) -> Result<Hamiltonian> {
    let d = 1 << n_qubits;
    let letters = [Pauli::X, Pauli::Y, Pauli::Z];
    let mut h = CMatrix::zeros(d, d);
    let mut add = |s: Vec<Pauli>, c: f64| -> Result<()> {
        h = &h + &PauliString::new(s)?.to_matrix().scale(c.into());
        Ok(())
    };
    for i in 0..n_qubits {
        for &a in &letters {
            let mut s = vec![Pauli::I; n_qubits];
            s[i] = a;
            add(s, rng.normal())?;
        }
    }
    for i in 0..n_qubits.saturating_sub(1) {
        for &a in &letters {
            for &b in &letters {
                let mut s = vec![Pauli::I; n_qubits];
                s[i] = a;
                s[i + 1] = b;
                add(s, rng.normal())?;
            }
        }
    }
    Hamiltonian::new(h)
}

/// The configured Hamiltonian, scaled and oriented so that L* ≤ tr H/d.
fn build_hamiltonian(config: &Config, inst: &Instance, n: usize, depth: usize) -> Result<(Hamiltonian, bool)> {
    let d = inst.circuit.dim();
    let seed = cell_seed(config.seed, TAG_HAMILTONIAN, &[n as u64, depth as u64]);
    let base = match config.hamiltonian.unwrap_or(HamiltonianKind::Random2Local) {
        HamiltonianKind::Random2Local => random_two_local(n, &mut RngStream::new(seed, 0))?,
        HamiltonianKind::Identity => Hamiltonian::new(CMatrix::identity(d))?,
        HamiltonianKind::FidelityProjector => {
            let spec = EnsembleSpec::new(inst.psi.clone(), PROJECTOR_OVERLAP, seed)?;
            Hamiltonian::fidelity_projector(&sample_target(&spec, &mut spec.stream(0))?)
        }
    };
    let scale = config.hamiltonian_scale.unwrap_or(1.0);
    let l_star = base.expectation(inst.psi.amplitudes());
    let flip = l_star > base.trace() / d as f64;
    let s = if flip { -scale } else { scale };
    Ok((Hamiltonian::new(base.matrix().scale(s.into()))?, flip))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum BoundStatus {
    Checked,
    Vacuous,
    /// L* ≥ tr H/d; the bound does not apply.
    NotApplicable,
}

#[derive(Serialize)]
struct CellSummary {
    n_qubits: usize,
    depth: usize,
    seed: u64,
    sign_flipped: bool,
    stats: LocalLossStats,
    f1: f64,
    f2: f64,
    hessian_coefficient: f64,
    subset_size: usize,
    local_min: Proportion,
    e_star: f64,
    omega_sq_norm: f64,
    bound: Option<f64>,
    bound_status: BoundStatus,
}

pub(super) fn run(config: &Config) -> Result<RunOutput> {
    let n_samples = config.n_samples_or(20_000);
    let prec = Precision::new(config.eps1, config.eps2)?;
    let mut header = vec!["n_qubits", "depth", "subset_size"];
    header.extend(REPORT_COLUMNS);
    let mut table = Table::new(&header);
    let mut report = TheoryReport::new(config.se_tolerance);
    let mut cells = Vec::new();
    for &n in &config.n_qubits_or(&[3, 4]) {
        for &depth in &config.depth_or(&[2]) {
            let inst = Instance::alt(config.seed, n, depth)?;
            let c = &inst.circuit;
            let m = c.m_params();
            let d = c.dim();
            let subs = subsets(config, m, &[2])?;
            // Expansion order: the largest subset first, so every subset is a slot prefix.
            let mut order = subs.iter().max_by_key(|s| s.len()).expect("at least one subset").clone();
            let rest: Vec<usize> = (0..m).filter(|i| !order.contains(i)).collect();
            order.extend(rest);
            let exp = LocalExpansion::new(c, &inst.theta, &order)?;
            let cache = second_cache(&exp);
            let qfi = exp.qfi();
            let all_omega = c.omega();
            let omega: Vec<f64> = order.iter().map(|&mu| all_omega[mu]).collect();
            let (h, flipped) = build_hamiltonian(config, &inst, n, depth)?;
            let stats = LocalLossStats::from_hamiltonian(&h, &inst.psi)?;
            let (f1h, f2h) = (local_loss_f1(&stats), local_loss_f2(&stats)?);
            let coeff = local_loss_hessian_coefficient(stats.hamiltonian_trace, stats.loss_star(), d)?;
            let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect();
            let seed = cell_seed(config.seed, TAG_TARGETS, &[n as u64, depth as u64]);
            let width = m + pairs.len() + subs.len();
            let moments = accumulate(n_samples, width, |i, out| {
                let v = sample_block_unitary(&inst.psi, &mut RngStream::new(seed, i)).expect("valid anchor");
                let v = v.matrix();
                let hv = Hamiltonian::new(v.adjoint().matmul(h.matrix()).matmul(v)).expect("conjugate is Hermitian");
                let jet = exp.local_jet_with(&hv, cache.as_ref()).expect("matching dims");
                out[..m].copy_from_slice(&jet.gradient);
                for (slot, &(a, b)) in out[m..m + pairs.len()].iter_mut().zip(&pairs) {
                    *slot = jet.hessian.get(a, b);
                }
                for (slot, s) in out[m + pairs.len()..].iter_mut().zip(&subs) {
                    let idx: Vec<usize> = (0..s.len()).collect();
                    let hit = is_local_min(&jet.gradient[..s.len()], &jet.hessian.restrict(&idx), prec)
                        .expect("matching dims");
                    *slot = if hit { 1.0 } else { 0.0 };
                }
            });

            let mut cell = TheoryReport::new(config.se_tolerance);
            for k in 0..m {
                let g = moments.get(k);
                let label = format!("mu={}", order[k]);
                cell.push_equality("gradient_mean", label.clone(), 0.0, g.mean(), g.se_mean());
                cell.push_equality("gradient_variance", label, f1h * qfi.get(k, k), g.variance(), g.se_variance());
            }
            for (j, &(a, b)) in pairs.iter().enumerate() {
                let x = moments.get(m + j);
                let label = format!("mu={},nu={}", order[a], order[b]);
                cell.push_equality("hessian_mean", label.clone(), coeff * qfi.get(a, b), x.mean(), x.se_mean());
                let bound = f2h * omega[a].powi(2) * omega[b].powi(2);
                cell.push_upper_bound("hessian_variance_bound", label, bound, x.variance(), x.se_variance());
            }
            let streams = format!("0..{n_samples}");
            let key = [n.to_string(), depth.to_string(), String::new()];
            report_rows(&mut table, &key, seed, &streams, &cell);
            report.extend(cell);

            let mut cell = TheoryReport::new(config.se_tolerance);
            for (j, s) in subs.iter().enumerate() {
                let k = s.len();
                let hits = (moments.get(m + pairs.len() + j).mean() * n_samples as f64).round() as u64;
                let prop = wilson(hits, n_samples as u64, Z95);
                let idx: Vec<usize> = (0..k).collect();
                let e_star = qfi.restrict(&idx).min_eigenvalue().max(0.0);
                let w2: f64 = omega[..k].iter().map(|w| w * w).sum();
                let inputs = LocalBoundInputs { stats, omega_sq_norm: w2, e_star, eps1: prec.eps1, eps2: prec.eps2 };
                let (bound, status) = match theorem_s9_bound(&inputs) {
                    Err(_) => (None, BoundStatus::NotApplicable),
                    Ok(b) if b >= 1.0 => (Some(b), BoundStatus::Vacuous),
                    Ok(b) => {
                        let not = 1.0 - prop.estimate;
                        cell.push_upper_bound("local_min_bound", format!("k={k}"), b, not, binomial_se(hits, n_samples as u64));
                        (Some(b), BoundStatus::Checked)
                    }
                };
                cells.push(CellSummary {
                    n_qubits: n,
                    depth,
                    seed,
                    sign_flipped: flipped,
                    stats,
                    f1: f1h,
                    f2: f2h,
                    hessian_coefficient: coeff,
                    subset_size: k,
                    local_min: prop,
                    e_star,
                    omega_sq_norm: w2,
                    bound,
                    bound_status: status,
                });
                let key = [n.to_string(), depth.to_string(), k.to_string()];
                report_rows(&mut table, &key, seed, &streams, &cell);
                report.extend(std::mem::replace(&mut cell, TheoryReport::new(config.se_tolerance)));
            }

            let mut cell = TheoryReport::new(config.se_tolerance);
            let red_seed = derive_seed(seed, &[TAG_HAMILTONIAN]);
            reduction_checks(&exp, &inst, red_seed, &mut cell)?;
            let key = [n.to_string(), depth.to_string(), m.to_string()];
            report_rows(&mut table, &key, red_seed, "0", &cell);
            report.extend(cell);
        }
    }
    let passed = report.passed();
    let mut summary = report_summary(&report);
    summary["n_samples"] = n_samples.into();
    summary["cells"] = serde_json::to_value(&cells).expect("cells serialize");
    Ok(RunOutput { experiment: ExperimentKind::LocalLoss, table, summary, passed: Some(passed) })
}

/// H = I − |φ⟩⟨φ| turns the local loss into the fidelity loss, derivative by derivative.
fn reduction_checks(exp: &LocalExpansion<'_>, inst: &Instance, seed: u64, r: &mut TheoryReport) -> Result<()> {
    let d = inst.circuit.dim();
    let spec = EnsembleSpec::new(inst.psi.clone(), PROJECTOR_OVERLAP, seed)?;
    let phi = sample_target(&spec, &mut spec.stream(0))?;
    let h = Hamiltonian::fidelity_projector(&phi);
    let local = exp.local_jet(&h)?;
    let fid = exp.fidelity_jet(phi.amplitudes())?;
    let t = REDUCTION_TOLERANCE;
    r.push_exact("reduction_loss", "value".into(), fid.loss, local.loss, t);
    let g = local.gradient.iter().zip(&fid.gradient).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    r.push_exact("reduction_gradient", "max_abs_diff".into(), 0.0, g, t);
    r.push_exact("reduction_hessian", "max_abs_diff".into(), 0.0, local.hessian.max_abs_diff(&fid.hessian), t);
    let p = dot(phi.amplitudes(), inst.psi.amplitudes()).norm();
    let stats = LocalLossStats::from_hamiltonian(&h, &inst.psi)?;
    r.push_exact("reduction_f1", "value".into(), f1(p, d)?, local_loss_f1(&stats), t);
    let coeff = local_loss_hessian_coefficient(stats.hamiltonian_trace, stats.loss_star(), d)?;
    r.push_exact("reduction_hessian_coefficient", "value".into(), hessian_coefficient(p, d)?, coeff, t);
    Ok(())
}
