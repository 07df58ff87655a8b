//! Loss profiles along random parameter directions through θ*.

use serde::Serialize;

use super::{cell_seed, fnum, Config, ExperimentKind, Instance, LandscapeMode, RunOutput, Table, TAG_DIRECTIONS, TAG_TARGETS};
use crate::derivatives::{LocalExpansion, LossKind};
use crate::ensembles::{derive_seed, sample_target, EnsembleSpec, RngStream};
use crate::error::Result;
use crate::par;
use crate::stats::Moments;
use crate::theory::hessian_coefficient;

/// Uniformly random unit vector in R^m.
pub(crate) fn random_direction(m: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Serialize)]
struct CellSummary {
    n_qubits: usize,
    depth: usize,
    overlap_p: f64,
    mode: LandscapeMode,
    seed: u64,
    n_samples: usize,
    grid_step: f64,
    max_origin_deviation: f64,
    mean_second_difference: f64,
    se_second_difference: f64,
    z_second_difference: f64,
    /// Mean over the sampled directions of κ·uᵀFu, the ensemble-mean curvature.
    predicted_mean_curvature: f64,
}

pub(super) fn run(config: &Config) -> Result<RunOutput> {
    let lc = config.landscape;
    let n_samples = config.n_samples_or(200);
    let g = lc.grid_points;
    let grid: Vec<f64> = (0..g).map(|j| -lc.t_max + 2.0 * lc.t_max * j as f64 / (g - 1) as f64).collect();
    let centre = (g - 1) / 2;
    let h = grid[centre + 1] - grid[centre];
    let mode_name = serde_json::to_value(lc.mode).expect("mode").as_str().expect("str").to_string();
    let mut table =
        Table::new(&["n_qubits", "depth", "overlap_p", "mode", "seed", "stream_id", "t", "loss"]);
    let mut cells = Vec::new();
    for &n in &config.n_qubits_or(&[4, 10]) {
        for &depth in &config.depth_or(&[5]) {
            let inst = Instance::alt(config.seed, n, depth)?;
            let c = &inst.circuit;
            let m = c.m_params();
            let all: Vec<usize> = (0..m).collect();
            let qfi = LocalExpansion::new(c, &inst.theta, &all)?.qfi();
            for &p in &config.overlap_or(&[0.2, 0.8]) {
                let seed = cell_seed(config.seed, TAG_TARGETS, &[n as u64, depth as u64, p.to_bits()]);
                let dir_seed = derive_seed(seed, &[TAG_DIRECTIONS]);
                let spec = EnsembleSpec::new(inst.psi.clone(), p, seed)?;
                let fixed = match lc.mode {
                    LandscapeMode::FixedTarget => Some(sample_target(&spec, &mut spec.stream(0))?),
                    LandscapeMode::RandomTargets => None,
                };
                let profiles = par::map_range(n_samples, |i| -> Result<(Vec<f64>, f64)> {
                    let target = match &fixed {
                        Some(t) => t.clone(),
                        None => sample_target(&spec, &mut spec.stream(i as u64))?,
                    };
                    let u = random_direction(m, &mut RngStream::new(dir_seed, i as u64));
                    let kind = LossKind::Fidelity(target);
                    let mut theta = vec![0.0; m];
                    let mut out = Vec::with_capacity(g);
                    for &t in &grid {
                        for k in 0..m {
                            theta[k] = inst.theta[k] + t * u[k];
                        }
                        let psi = crate::circuit::output_state(c, &theta)?;
                        out.push(kind.value(psi.amplitudes()));
                    }
                    let mut quad = 0.0;
                    for k in 0..m {
                        for l in 0..m {
                            quad += u[k] * qfi.get(k, l) * u[l];
                        }
                    }
                    Ok((out, quad))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                let kappa = hessian_coefficient(p, c.dim())?;
                let mut second = Moments::default();
                let mut max_dev: f64 = 0.0;
                let mut pred = 0.0;
                for (i, (prof, quad)) in profiles.iter().enumerate() {
                    for (t, l) in grid.iter().zip(prof) {
                        table.push(vec![
                            n.to_string(),
                            depth.to_string(),
                            fnum(p),
                            mode_name.clone(),
                            seed.to_string(),
                            i.to_string(),
                            fnum(*t),
                            fnum(*l),
                        ]);
                    }
                    max_dev = max_dev.max((prof[centre] - (1.0 - p * p)).abs());
                    second.push((prof[centre + 1] - 2.0 * prof[centre] + prof[centre - 1]) / (h * h));
                    pred += kappa * quad;
                }
                let se = second.se_mean();
                cells.push(CellSummary {
                    n_qubits: n,
                    depth,
                    overlap_p: p,
                    mode: lc.mode,
                    seed,
                    n_samples,
                    grid_step: h,
                    max_origin_deviation: max_dev,
                    mean_second_difference: second.mean(),
                    se_second_difference: se,
                    z_second_difference: if se > 0.0 { second.mean() / se } else { 0.0 },
                    predicted_mean_curvature: pred / n_samples as f64,
                });
            }
        }
    }
    let summary = serde_json::json!({ "grid_points": g, "t_max": lc.t_max, "cells": cells });
    Ok(RunOutput { experiment: ExperimentKind::Landscape, table, summary, passed: None })
}
