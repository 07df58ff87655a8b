//! Monte Carlo moments of the gradient and Hessian at θ* over the target
//! ensemble, compared with their closed forms.

use super::{
    cell_seed, fnum, report_rows, report_summary, second_cache, Config, ExperimentKind, Instance, RunOutput, Table,
    REPORT_COLUMNS, TAG_TARGETS,
};
use crate::derivatives::LocalExpansion;
use crate::ensembles::{sample_target, EnsembleSpec};
use crate::error::Result;
use crate::stats::accumulate;
use crate::theory::{f1, f2, hessian_coefficient, TheoryReport};

pub(super) fn run(config: &Config) -> Result<RunOutput> {
    let n_samples = config.n_samples_or(20_000);
    let mut header = vec!["n_qubits", "depth", "overlap_p"];
    header.extend(REPORT_COLUMNS);
    let mut table = Table::new(&header);
    let mut report = TheoryReport::new(config.se_tolerance);
    let default_n: Vec<usize> = (2..=6).collect();
    for &n in &config.n_qubits_or(&default_n) {
        for &depth in &config.depth_or(&[2]) {
            let inst = Instance::alt(config.seed, n, depth)?;
            let c = &inst.circuit;
            let m = c.m_params();
            let d = c.dim();
            let all: Vec<usize> = (0..m).collect();
            let exp = LocalExpansion::new(c, &inst.theta, &all)?;
            let cache = second_cache(&exp);
            let qfi = exp.qfi();
            let omega = c.omega();
            let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect();
            for &p in &config.overlap_or(&[0.2, 0.5, 0.8]) {
                let seed = cell_seed(config.seed, TAG_TARGETS, &[n as u64, depth as u64, p.to_bits()]);
                let spec = EnsembleSpec::new(inst.psi.clone(), p, seed)?;
                let moments = accumulate(n_samples, m + pairs.len(), |i, out| {
                    let target = sample_target(&spec, &mut spec.stream(i)).expect("valid ensemble");
                    let jet = exp.fidelity_jet_with(target.amplitudes(), cache.as_ref()).expect("matching dims");
                    out[..m].copy_from_slice(&jet.gradient);
                    for (slot, &(a, b)) in out[m..].iter_mut().zip(&pairs) {
                        *slot = jet.hessian.get(a, b);
                    }
                });
                let (f1v, f2v, kappa) = (f1(p, d)?, f2(p, d)?, hessian_coefficient(p, d)?);
                let mut cell = TheoryReport::new(config.se_tolerance);
                for mu in 0..m {
                    let g = moments.get(mu);
                    cell.push_equality("gradient_mean", format!("mu={mu}"), 0.0, g.mean(), g.se_mean());
                    cell.push_equality(
                        "gradient_variance",
                        format!("mu={mu}"),
                        f1v * qfi.get(mu, mu),
                        g.variance(),
                        g.se_variance(),
                    );
                }
                for (k, &(a, b)) in pairs.iter().enumerate() {
                    let h = moments.get(m + k);
                    let label = format!("mu={a},nu={b}");
                    cell.push_equality("hessian_mean", label.clone(), kappa * qfi.get(a, b), h.mean(), h.se_mean());
                    let bound = f2v * omega[a].powi(2) * omega[b].powi(2);
                    cell.push_upper_bound("hessian_variance_bound", label, bound, h.variance(), h.se_variance());
                }
                let key = [n.to_string(), depth.to_string(), fnum(p)];
                report_rows(&mut table, &key, seed, &format!("0..{n_samples}"), &cell);
                report.extend(cell);
            }
        }
    }
    let passed = report.passed();
    let mut summary = report_summary(&report);
    summary["n_samples"] = n_samples.into();
    Ok(RunOutput { experiment: ExperimentKind::Lemma1, table, summary, passed: Some(passed) })
}
