//! Subspace Haar integrals: closed forms against Monte Carlo over the
//! subspace ensemble, full-space reductions, and the block ensemble that
//! fixes a reference state.

use super::{cell_seed, report_rows, report_summary, Config, ExperimentKind, RunOutput, Table, REPORT_COLUMNS, TAG_HAAR};
use crate::ensembles::{derive_seed, haar_state, sample_block_unitary, RngStream};
use crate::error::Result;
use crate::haar_verify::{
    closed_form_e_u, closed_form_phi_a_phi, closed_form_phi_a_phi_sq, closed_form_trace_product,
    closed_form_uau, closed_form_uaubucu, flatten, full, mc_estimate, mc_moment, random_operator, MomentComparison,
    SubspaceSetting,
};
use crate::linalg::{dot, CMatrix, C64};
use crate::theory::TheoryReport;

const REDUCTION_TOLERANCE: f64 = 1e-12;

/// One equality row per real component of each entry in `range`.
fn push_entries(
    report: &mut TheoryReport,
    cmp: &MomentComparison,
    check: &str,
    range: std::ops::Range<usize>,
    label: impl Fn(usize) -> String,
) {
    for (k, i) in range.clone().enumerate() {
        let (cf, est) = (cmp.closed_form[i], cmp.mc_estimate[i]);
        report.push_equality(check, format!("{}.re", label(k)), cf.re, est.re, cmp.se_re[i]);
        report.push_equality(check, format!("{}.im", label(k)), cf.im, est.im, cmp.se_im[i]);
    }
}

fn matrix_label(d: usize) -> impl Fn(usize) -> String {
    move |k| format!("[{},{}]", k / d, k % d)
}

fn max_entry_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn flat(m: &CMatrix) -> Vec<C64> {
    flatten(m).collect()
}

fn ops(d: usize, rng: &mut RngStream) -> [CMatrix; 4] {
    std::array::from_fn(|_| random_operator(d, rng))
}

/// Unitary and state moments for one random subspace.
fn subspace_checks(d: usize, d_sub: usize, seed: u64, n: usize, tol: f64) -> Result<TheoryReport> {
    let mut setup = RngStream::new(derive_seed(seed, &[0]), 0);
    let s = SubspaceSetting::random(d, d_sub, &mut setup)?;
    let [a, b, c, dm] = ops(d, &mut setup);
    let d2 = d * d;
    let mut closed = flat(&closed_form_e_u(&s));
    closed.extend(flat(&closed_form_uau(&s, &a)?));
    closed.extend(flat(&closed_form_uaubucu(&s, &a, &b, &c)?));
    closed.push(closed_form_trace_product(&s, &a, &b, &c, &dm)?);
    let cmp = mc_moment(&s, closed, n, seed, |u| {
        let ud = u.adjoint();
        let x = ud.matmul(&a).matmul(u);
        let y = ud.matmul(&c).matmul(u);
        let mut v = flat(u);
        v.extend(flat(&x));
        v.extend(flat(&x.matmul(&b).matmul(&y)));
        v.push(x.trace_product(&b) * y.trace_product(&dm));
        v
    })?;
    let mut r = TheoryReport::new(tol);
    push_entries(&mut r, &cmp, "first_moment", 0..d2, matrix_label(d));
    push_entries(&mut r, &cmp, "conjugation", d2..2 * d2, matrix_label(d));
    push_entries(&mut r, &cmp, "two_design", 2 * d2..3 * d2, matrix_label(d));
    push_entries(&mut r, &cmp, "trace_product", 3 * d2..3 * d2 + 1, |_| "value".into());

    let state_closed = vec![closed_form_phi_a_phi(&s, &a)?, closed_form_phi_a_phi_sq(&s, &a)?];
    let states = mc_estimate(state_closed, n, derive_seed(seed, &[1]), |rng| {
        let phi = s.sample_state(rng).expect("valid setting");
        let q = dot(&phi, &a.matvec(&phi));
        vec![q, q * q]
    })?;
    push_entries(&mut r, &states, "state_expectation", 0..1, |_| "value".into());
    push_entries(&mut r, &states, "state_expectation_sq", 1..2, |_| "value".into());
    Ok(r)
}

/// Subspace formulas with P = I against the full-space formulas.
fn reduction_checks(d: usize, seed: u64, r: &mut TheoryReport) -> Result<()> {
    let s = SubspaceSetting::full(d);
    let [a, b, c, dm] = ops(d, &mut RngStream::new(derive_seed(seed, &[2]), 0));
    let label = format!("d={d}");
    let t = REDUCTION_TOLERANCE;
    r.push_exact("reduction_first_moment", label.clone(), 0.0, max_entry_diff(&closed_form_e_u(&s), &CMatrix::zeros(d, d)), t);
    r.push_exact("reduction_conjugation", label.clone(), 0.0, max_entry_diff(&closed_form_uau(&s, &a)?, &full::vav(&a)), t);
    let two = max_entry_diff(&closed_form_uaubucu(&s, &a, &b, &c)?, &full::two_design(&a, &b, &c));
    r.push_exact("reduction_two_design", label.clone(), 0.0, two, t);
    let tp = (closed_form_trace_product(&s, &a, &b, &c, &dm)? - full::trace_product(&a, &b, &c, &dm)).norm();
    r.push_exact("reduction_trace_product", label.clone(), 0.0, tp, t);
    let st = (closed_form_phi_a_phi(&s, &a)? - a.trace() / d as f64).norm();
    r.push_exact("reduction_state_expectation", label, 0.0, st, t);
    Ok(())
}

/// Block unitaries fixing ψ: E[V] = |ψ⟩⟨ψ| and E[V†AV] from the complement formula.
fn block_checks(n_qubits: usize, seed: u64, n: usize, tol: f64) -> Result<TheoryReport> {
    let d = 1 << n_qubits;
    let mut setup = RngStream::new(derive_seed(seed, &[0]), 0);
    let psi = haar_state(d, &mut setup)?;
    let a = random_operator(d, &mut setup);
    let amp = psi.amplitudes();
    let complement = &CMatrix::identity(d) - &CMatrix::outer(amp, amp);
    let s = SubspaceSetting::from_projector(&complement)?;
    let mut closed = flat(&CMatrix::outer(amp, amp));
    closed.extend(flat(&closed_form_uau(&s, &a)?));
    let cmp = mc_estimate(closed, n, seed, |rng| {
        let v = sample_block_unitary(&psi, rng).expect("valid anchor");
        let v = v.matrix();
        let mut out = flat(v);
        out.extend(flat(&v.adjoint().matmul(&a).matmul(v)));
        out
    })?;
    let mut r = TheoryReport::new(tol);
    let d2 = d * d;
    push_entries(&mut r, &cmp, "block_first_moment", 0..d2, matrix_label(d));
    push_entries(&mut r, &cmp, "block_conjugation", d2..2 * d2, matrix_label(d));
    Ok(r)
}

pub(super) fn run(config: &Config) -> Result<RunOutput> {
    let n_samples = config.n_samples_or(100_000);
    let dims = config.dims.clone().unwrap_or_else(|| vec![4, 6, 8]);
    let mut header = vec!["dim", "d_sub"];
    header.extend(REPORT_COLUMNS);
    let mut table = Table::new(&header);
    let mut report = TheoryReport::new(config.se_tolerance);
    let streams = format!("0..{n_samples}");
    for &d in &dims {
        for d_sub in 2..=d {
            let seed = cell_seed(config.seed, TAG_HAAR, &[d as u64, d_sub as u64]);
            let cell = subspace_checks(d, d_sub, seed, n_samples, config.se_tolerance)?;
            report_rows(&mut table, &[d.to_string(), d_sub.to_string()], seed, &streams, &cell);
            report.extend(cell);
        }
        let seed = cell_seed(config.seed, TAG_HAAR, &[d as u64, 0]);
        let mut cell = TheoryReport::new(config.se_tolerance);
        reduction_checks(d, seed, &mut cell)?;
        report_rows(&mut table, &[d.to_string(), d.to_string()], seed, "", &cell);
        report.extend(cell);
        if d.is_power_of_two() {
            let seed = cell_seed(config.seed, TAG_HAAR, &[d as u64, u64::MAX]);
            let cell = block_checks(d.trailing_zeros() as usize, seed, n_samples, config.se_tolerance)?;
            report_rows(&mut table, &[d.to_string(), (d - 1).to_string()], seed, &streams, &cell);
            report.extend(cell);
        }
    }
    let passed = report.passed();
    let mut summary = report_summary(&report);
    summary["n_samples"] = n_samples.into();
    summary["dims"] = dims.into();
    Ok(RunOutput { experiment: ExperimentKind::VerifyHaar, table, summary, passed: Some(passed) })
}
