//! Loss mean and variance over the target ensemble at points away from θ*,
//! plus the exact single-axis profile of the overlap deficit.

use std::f64::consts::PI;

use super::landscape::random_direction;
use super::{
    cell_seed, fnum, report_rows, report_summary, Config, ExperimentKind, Instance, RunOutput, Table, REPORT_COLUMNS,
    TAG_OFFSETS, TAG_TARGETS,
};
use crate::circuit::{build_alt_with_coefficient, output_state};
use crate::derivatives::qfi;
use crate::ensembles::{sample_target, EnsembleSpec, RngStream};
use crate::error::Result;
use crate::linalg::dot;
use crate::stats::accumulate;
use crate::theory::{
    axis_profile, landscape_expectation, landscape_variance, landscape_variance_printed, overlap_deficit, TheoryReport,
};

/// Points per axis sweep over [−π, π].
const AXIS_POINTS: usize = 9;
const AXIS_TOLERANCE: f64 = 1e-8;
const ORIGIN_TOLERANCE: f64 = 1e-12;

pub(super) fn run(config: &Config) -> Result<RunOutput> {
    let n_samples = config.n_samples_or(20_000);
    let n_offsets = config.n_offsets.unwrap_or(20);
    let mut header = vec!["n_qubits", "depth", "overlap_p"];
    header.extend(REPORT_COLUMNS);
    let mut table = Table::new(&header);
    let mut report = TheoryReport::new(config.se_tolerance);
    let mut deficits = Vec::new();
    // Deviation of the MC variance from the variance formula with the 4p² leading term.
    let mut printed = Vec::new();
    for &n in &config.n_qubits_or(&[4]) {
        for &depth in &config.depth_or(&[2]) {
            let inst = Instance::alt(config.seed, n, depth)?;
            let c = &inst.circuit;
            let m = c.m_params();
            let d = c.dim();
            // Offset 0 is θ* itself; the rest sit at distance r ~ U[0, π] along random directions.
            let off_seed = cell_seed(config.seed, TAG_OFFSETS, &[n as u64, depth as u64]);
            let points: Vec<Vec<f64>> = (0..n_offsets)
                .map(|j| {
                    if j == 0 {
                        return inst.theta.clone();
                    }
                    let mut rng = RngStream::new(off_seed, j as u64);
                    let r = PI * rng.uniform();
                    let u = random_direction(m, &mut rng);
                    inst.theta.iter().zip(&u).map(|(t, x)| t + r * x).collect()
                })
                .collect();
            let states = points.iter().map(|t| output_state(c, t)).collect::<Result<Vec<_>>>()?;
            let g = states.iter().map(|s| overlap_deficit(&inst.psi, s)).collect::<Result<Vec<_>>>()?;
            deficits.push(serde_json::json!({ "n_qubits": n, "depth": depth, "seed": off_seed, "g": g }));
            for &p in &config.overlap_or(&[0.2, 0.5, 0.8]) {
                let seed = cell_seed(config.seed, TAG_TARGETS, &[n as u64, depth as u64, p.to_bits()]);
                let spec = EnsembleSpec::new(inst.psi.clone(), p, seed)?;
                let moments = accumulate(n_samples, n_offsets, |i, out| {
                    let phi = sample_target(&spec, &mut spec.stream(i)).expect("valid ensemble");
                    for (o, s) in out.iter_mut().zip(&states) {
                        *o = 1.0 - dot(phi.amplitudes(), s.amplitudes()).norm_sqr();
                    }
                });
                let mut cell = TheoryReport::new(config.se_tolerance);
                let mut printed_z: f64 = 0.0;
                for (j, &gj) in g.iter().enumerate() {
                    let l = moments.get(j);
                    let label = format!("offset={j}");
                    if j == 0 {
                        cell.push_exact("origin_mean", label.clone(), 1.0 - p * p, l.mean(), ORIGIN_TOLERANCE);
                        cell.push_exact("origin_variance", label, 0.0, l.variance(), ORIGIN_TOLERANCE);
                        continue;
                    }
                    cell.push_equality("loss_mean", label.clone(), landscape_expectation(p, d, gj)?, l.mean(), l.se_mean());
                    cell.push_equality("loss_variance", label, landscape_variance(p, d, gj)?, l.variance(), l.se_variance());
                    let se = l.se_variance();
                    if se > 0.0 {
                        printed_z = printed_z.max(((l.variance() - landscape_variance_printed(p, d, gj)?) / se).abs());
                    }
                }
                printed.push(serde_json::json!({ "n_qubits": n, "depth": depth, "overlap_p": p, "max_abs_z": printed_z }));
                let key = [n.to_string(), depth.to_string(), fnum(p)];
                report_rows(&mut table, &key, seed, &format!("0..{n_samples}"), &cell);
                report.extend(cell);
            }

            // Axis profile on a coefficient-1 circuit, where it is exact.
            let unit = build_alt_with_coefficient(n, depth, 1.0)?;
            let ui = Instance::with_circuit(config.seed, unit, &[n as u64, depth as u64, TAG_OFFSETS])?;
            let f = qfi(&ui.circuit, &ui.theta)?;
            let mut cell = TheoryReport::new(config.se_tolerance);
            for mu in 0..m {
                for s in 0..AXIS_POINTS {
                    let delta = -PI + 2.0 * PI * s as f64 / (AXIS_POINTS - 1) as f64;
                    let mut t = ui.theta.clone();
                    t[mu] += delta;
                    let gv = overlap_deficit(&ui.psi, &output_state(&ui.circuit, &t)?)?;
                    let label = format!("mu={mu},delta={}", fnum(delta));
                    cell.push_exact("axis_profile", label, axis_profile(f.get(mu, mu), delta), gv, AXIS_TOLERANCE);
                }
            }
            let key = [n.to_string(), depth.to_string(), String::new()];
            report_rows(&mut table, &key, ui.seed, "", &cell);
            report.extend(cell);
        }
    }
    let passed = report.passed();
    let mut summary = report_summary(&report);
    summary["n_samples"] = n_samples.into();
    summary["n_offsets"] = n_offsets.into();
    summary["offset_deficits"] = deficits.into();
    summary["printed_variance_comparison"] = printed.into();
    Ok(RunOutput { experiment: ExperimentKind::Prop1, table, summary, passed: Some(passed) })
}
