//! Loss curves of Adam training toward targets drawn at fixed overlap.

use serde::Serialize;

use super::{cell_seed, fnum, AdamConfig, Config, ExperimentKind, Instance, RunOutput, Table, TAG_TARGETS};
use crate::derivatives::{gradient_exact, loss, LossKind, Precision};
use crate::ensembles::{sample_target, EnsembleSpec};
use crate::error::Result;
use crate::par;
use crate::theory::{theorem1_bound, BoundInputs};

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Self { cfg, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = &self.cfg;
        self.t += 1;
        let b1t = 1.0 - c.beta1.powi(self.t);
        let b2t = 1.0 - c.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon_hat);
        }
    }
}

#[derive(Serialize)]
struct CellSummary {
    n_qubits: usize,
    depth: usize,
    overlap_p: f64,
    m_params: usize,
    seed: u64,
    mean_initial_loss: f64,
    mean_final_loss: f64,
    final_losses: Vec<f64>,
}

struct Curve {
    losses: Vec<f64>,
    grad_norms: Vec<f64>,
}

pub(super) fn run(config: &Config) -> Result<RunOutput> {
    let opt = config.optimizer;
    let n_targets = config.n_targets.unwrap_or(10);
    let prec = Precision::new(config.eps1, config.eps2)?;
    let mut table = Table::new(&[
        "n_qubits", "depth", "overlap_p", "seed", "stream_id", "iteration", "loss", "grad_norm", "bound",
    ]);
    let mut cells = Vec::new();
    for &n in &config.n_qubits_or(&[2, 6, 10]) {
        for &depth in &config.depth_or(&[1, 3, 5]) {
            let inst = Instance::alt(config.seed, n, depth)?;
            let d = inst.circuit.dim();
            let w2 = inst.circuit.omega_sq_norm();
            for &p in &config.overlap_or(&[0.2]) {
                let seed = cell_seed(config.seed, TAG_TARGETS, &[n as u64, depth as u64, p.to_bits()]);
                let spec = EnsembleSpec::new(inst.psi.clone(), p, seed)?;
                let curves = par::map_range(n_targets, |i| -> Result<Curve> {
                    let target = sample_target(&spec, &mut spec.stream(i as u64))?;
                    let kind = LossKind::Fidelity(target);
                    let mut theta = inst.theta.clone();
                    let mut adam = Adam::new(opt, theta.len());
                    let mut curve = Curve { losses: Vec::new(), grad_norms: Vec::new() };
                    for it in 0..=opt.max_iters {
                        let g = gradient_exact(&inst.circuit, &theta, &kind)?;
                        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                        curve.losses.push(loss(&inst.circuit, &theta, &kind)?);
                        curve.grad_norms.push(norm);
                        // Adam rescales by √v̂, so rounding-level gradients would grow into full steps.
                        if it == opt.max_iters || norm <= opt.gradient_tolerance {
                            break;
                        }
                        adam.step(&mut theta, &g);
                    }
                    Ok(curve)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                for (i, c) in curves.iter().enumerate() {
                    for (it, (&l, &gn)) in c.losses.iter().zip(&c.grad_norms).enumerate() {
                        let p_now = (1.0 - l).max(0.0).sqrt();
                        let bound = theorem1_bound(&BoundInputs::new(p_now, d, w2, config.bound_e_star, prec))
                            .map(fnum)
                            .unwrap_or_default();
                        table.push(vec![
                            n.to_string(),
                            depth.to_string(),
                            fnum(p),
                            seed.to_string(),
                            i.to_string(),
                            it.to_string(),
                            fnum(l),
                            fnum(gn),
                            bound,
                        ]);
                    }
                }
                let finals: Vec<f64> = curves.iter().map(|c| *c.losses.last().expect("nonempty")).collect();
                let initial = curves.iter().map(|c| c.losses[0]).sum::<f64>() / n_targets as f64;
                cells.push(CellSummary {
                    n_qubits: n,
                    depth,
                    overlap_p: p,
                    m_params: inst.circuit.m_params(),
                    seed,
                    mean_initial_loss: initial,
                    mean_final_loss: finals.iter().sum::<f64>() / n_targets as f64,
                    final_losses: finals,
                });
            }
        }
    }
    let summary = serde_json::json!({
        "optimizer": opt,
        "n_targets": n_targets,
        "initialization": "uniform on [0, 2pi)",
        "cells": cells,
    });
    Ok(RunOutput { experiment: ExperimentKind::Train, table, summary, passed: None })
}
