//! Proportion of sampled targets for which θ* is an approximate local minimum,
//! against the closed-form bound on the complement.

use serde::Serialize;

use super::{cell_seed, fnum, second_cache, subsets, Config, ExperimentKind, Instance, RunOutput, Table, TAG_TARGETS};
use crate::derivatives::{LocalExpansion, Precision};
use crate::ensembles::{sample_target, EnsembleSpec};
use crate::error::Result;
use crate::par;
use crate::stats::{binomial_se, wilson, Proportion, Z95};
use crate::theory::{theorem1_bound, BoundInputs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Checked,
    /// Bound ≥ 1, nothing to check.
    Vacuous,
    /// p²d ≤ 1; the bound does not apply.
    BeyondCriticalLoss,
}

#[derive(Serialize)]
struct CellSummary {
    n_qubits: usize,
    depth: usize,
    overlap_p: f64,
    subset_size: usize,
    m_params: usize,
    seed: u64,
    local_min: Proportion,
    not_local_min: f64,
    not_local_min_se: f64,
    e_star: f64,
    omega_sq_norm: f64,
    bound: Option<f64>,
    bound_status: BoundStatus,
    bound_check_pass: Option<bool>,
}

/// Per sample: for each prefix size, (max |∂L|, λ_min of the Hessian, local-min flag).
type SampleRow = Vec<(f64, f64, bool)>;

pub(super) fn run(config: &Config) -> Result<RunOutput> {
    let n_samples = config.n_samples_or(200);
    let prec = Precision::new(config.eps1, config.eps2)?;
    let tol = config.se_tolerance;
    let mut table = Table::new(&[
        "n_qubits",
        "depth",
        "overlap_p",
        "subset_size",
        "seed",
        "stream_id",
        "grad_max_abs",
        "hessian_min_eigenvalue",
        "local_min",
    ]);
    let mut cells = Vec::new();
    let default_n: Vec<usize> = (1..=10).collect();
    for &n in &config.n_qubits_or(&default_n) {
        for &depth in &config.depth_or(&[5]) {
            let inst = Instance::alt(config.seed, n, depth)?;
            let c = &inst.circuit;
            let m = c.m_params();
            let d = c.dim();
            let subs = subsets(config, m, &[6])?;
            let largest = subs.iter().max_by_key(|s| s.len()).expect("at least one subset").clone();
            let exp = LocalExpansion::new(c, &inst.theta, &largest)?;
            let cache = second_cache(&exp);
            let qfi = exp.qfi();
            let omega = c.omega();
            for &p in &config.overlap_or(&[0.8]) {
                let seed = cell_seed(config.seed, TAG_TARGETS, &[n as u64, depth as u64, p.to_bits()]);
                let spec = EnsembleSpec::new(inst.psi.clone(), p, seed)?;
                let samples = par::map_range(n_samples, |i| -> Result<SampleRow> {
                    let target = sample_target(&spec, &mut spec.stream(i as u64))?;
                    let jet = exp.fidelity_jet_with(target.amplitudes(), cache.as_ref())?;
                    subs.iter()
                        .map(|s| {
                            let k = s.len();
                            let idx: Vec<usize> = (0..k).collect();
                            let g = &jet.gradient[..k];
                            let h = jet.hessian.restrict(&idx);
                            let gmax = g.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
                            let lmin = h.min_eigenvalue();
                            Ok((gmax, lmin, crate::derivatives::is_local_min(g, &h, prec)?))
                        })
                        .collect()
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                for (j, s) in subs.iter().enumerate() {
                    let k = s.len();
                    for (i, row) in samples.iter().enumerate() {
                        let (gmax, lmin, ok) = row[j];
                        table.push(vec![
                            n.to_string(),
                            depth.to_string(),
                            fnum(p),
                            k.to_string(),
                            seed.to_string(),
                            i.to_string(),
                            fnum(gmax),
                            fnum(lmin),
                            ok.to_string(),
                        ]);
                    }
                    let hits = samples.iter().filter(|r| r[j].2).count() as u64;
                    let prop = wilson(hits, n_samples as u64, Z95);
                    let idx: Vec<usize> = (0..k).collect();
                    let e_star = qfi.restrict(&idx).min_eigenvalue().max(0.0);
                    let w2: f64 = s.iter().map(|&mu| omega[mu] * omega[mu]).sum();
                    let not = 1.0 - prop.estimate;
                    let se = binomial_se(hits, n_samples as u64);
                    let (bound, status, check) = if p * p * d as f64 <= 1.0 {
                        (None, BoundStatus::BeyondCriticalLoss, None)
                    } else {
                        let b = theorem1_bound(&BoundInputs::new(p, d, w2, e_star, prec))?;
                        if b < 1.0 {
                            (Some(b), BoundStatus::Checked, Some(not <= b + tol * se))
                        } else {
                            (Some(b), BoundStatus::Vacuous, None)
                        }
                    };
                    cells.push(CellSummary {
                        n_qubits: n,
                        depth,
                        overlap_p: p,
                        subset_size: k,
                        m_params: m,
                        seed,
                        local_min: prop,
                        not_local_min: not,
                        not_local_min_se: se,
                        e_star,
                        omega_sq_norm: w2,
                        bound,
                        bound_status: status,
                        bound_check_pass: check,
                    });
                }
            }
        }
    }
    let checked = cells.iter().filter(|c| c.bound_check_pass.is_some()).count();
    let passed = cells.iter().all(|c| c.bound_check_pass != Some(false));
    let summary = serde_json::json!({
        "eps1": prec.eps1,
        "eps2": prec.eps2,
        "n_samples": n_samples,
        "interval": "wilson 95%",
        "bound_cells_checked": checked,
        "passed": passed,
        "cells": cells,
    });
    Ok(RunOutput { experiment: ExperimentKind::ProbLocalmin, table, summary, passed: Some(passed) })
}
