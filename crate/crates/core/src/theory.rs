//! Closed-form statistics of the fidelity and local losses over their
//! target ensembles, the local-minimum probability bounds, and a report type
//! that pairs each closed form with a Monte Carlo estimate.

use serde::Serialize;

use crate::derivatives::{Hamiltonian, Precision};
use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::statevector::StateVector;

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("overlap p = {p} is outside [0, 1]")));
    }
    Ok(())
}

fn check_d(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!("Hilbert-space dimension must be at least 2, got {d}")));
    }
    Ok(d as f64)
}

/// Overlap p and dimension d of the fidelity-loss target ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FidelityEnsembleStats {
    pub p: f64,
    pub d: usize,
}

impl FidelityEnsembleStats {
    pub fn new(p: f64, d: usize) -> Result<Self> {
        check_p(p)?;
        check_d(d)?;
        Ok(Self { p, d })
    }

    pub fn f1(&self) -> f64 {
        let (p2, d) = (self.p * self.p, self.d as f64);
        p2 * (1.0 - p2) / (d - 1.0)
    }

    pub fn f2(&self) -> f64 {
        let (p2, d) = (self.p * self.p, self.d as f64);
        32.0 * (1.0 - p2) / (d - 1.0) * (p2 + 2.0 * (1.0 - p2) / d)
    }

    /// (dp² − 1)/(d − 1), the factor relating the mean Hessian to the QFI.
    pub fn hessian_coefficient(&self) -> f64 {
        let (p2, d) = (self.p * self.p, self.d as f64);
        (d * p2 - 1.0) / (d - 1.0)
    }

    /// True when the loss 1 − p² is below the critical value 1 − 1/d.
    pub fn below_critical(&self) -> bool {
        self.p * self.p * self.d as f64 > 1.0
    }
}

pub fn f1(p: f64, d: usize) -> Result<f64> {
    Ok(FidelityEnsembleStats::new(p, d)?.f1())
}

pub fn f2(p: f64, d: usize) -> Result<f64> {
    Ok(FidelityEnsembleStats::new(p, d)?.f2())
}

pub fn critical_loss(d: usize) -> Result<f64> {
    Ok(1.0 - 1.0 / check_d(d)?)
}

pub fn hessian_coefficient(p: f64, d: usize) -> Result<f64> {
    Ok(FidelityEnsembleStats::new(p, d)?.hessian_coefficient())
}

/// Var[∂_μ L*] = f1(p, d)·F_μμ for every μ.
pub fn expected_gradient_variance(p: f64, d: usize, qfi_diag: &[f64]) -> Result<Vec<f64>> {
    let f = f1(p, d)?;
    if let Some(x) = qfi_diag.iter().find(|x| **x < -1e-10) {
        return Err(Error::Domain(format!("QFI diagonal entry {x} is negative")));
    }
    Ok(qfi_diag.iter().map(|x| f * x.max(0.0)).collect())
}

/// E[H_L*] = (dp² − 1)/(d − 1)·F*
pub fn expected_hessian(p: f64, d: usize, qfi: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    Ok(qfi.scaled(hessian_coefficient(p, d)?))
}

/// f2(p, d)·‖Ω_μ‖²·‖Ω_ν‖²
pub fn hessian_variance_bound(p: f64, d: usize, omega: &[f64], mu: usize, nu: usize) -> Result<f64> {
    let m = omega.len();
    for i in [mu, nu] {
        if i >= m {
            return Err(Error::ParamOutOfRange { index: i, m_params: m });
        }
    }
    Ok(f2(p, d)? * omega[mu].powi(2) * omega[nu].powi(2))
}

/// Inputs of the fidelity-loss local-minimum bound. `omega_sq_norm` is the
/// squared 2-norm of the generator norms over the differentiated parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    pub p: f64,
    pub d: usize,
    pub omega_sq_norm: f64,
    pub e_star: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl BoundInputs {
    pub fn new(p: f64, d: usize, omega_sq_norm: f64, e_star: f64, precision: Precision) -> Self {
        Self { p, d, omega_sq_norm, e_star, eps1: precision.eps1, eps2: precision.eps2 }
    }
}

fn check_bound_common(omega_sq_norm: f64, e_star: f64, eps1: f64, eps2: f64) -> Result<()> {
    if !(omega_sq_norm > 0.0 && omega_sq_norm.is_finite()) {
        return Err(Error::Domain(format!("squared generator norm {omega_sq_norm} must be positive")));
    }
    if !(e_star >= 0.0 && eps1 >= 0.0 && eps2 >= 0.0) {
        return Err(Error::Domain("e*, eps1 and eps2 must be nonnegative".into()));
    }
    Ok(())
}

fn two_term_bound(f1: f64, f2: f64, w2: f64, coeff: f64, e_star: f64, eps1: f64, eps2: f64) -> Result<f64> {
    let denom = coeff * e_star + eps2;
    let grad_term = if f1 == 0.0 { 0.0 } else { 2.0 * f1 * w2 / (eps1 * eps1) };
    let hess_term = if f2 == 0.0 { 0.0 } else { f2 * w2 * w2 / (denom * denom) };
    if grad_term.is_nan() || hess_term.is_nan() || (f2 > 0.0 && denom <= 0.0) {
        return Err(Error::Domain("bound denominators must be positive".into()));
    }
    Ok(grad_term + hess_term)
}

/// Upper bound on Pr[¬LocalMin]. Not clamped to 1.
pub fn theorem1_bound(b: &BoundInputs) -> Result<f64> {
    let s = FidelityEnsembleStats::new(b.p, b.d)?;
    check_bound_common(b.omega_sq_norm, b.e_star, b.eps1, b.eps2)?;
    if !s.below_critical() {
        return Err(Error::Domain(format!(
            "the bound needs the loss 1 - p^2 = {:.6} below the critical loss 1 - 1/d = {:.6}",
            1.0 - b.p * b.p,
            1.0 - 1.0 / b.d as f64
        )));
    }
    two_term_bound(s.f1(), s.f2(), b.omega_sq_norm, s.hessian_coefficient(), b.e_star, b.eps1, b.eps2)
}

/// E[L(θ)] = 1 − p² + (dp² − 1)/(d − 1)·g(θ)
pub fn landscape_expectation(p: f64, d: usize, g: f64) -> Result<f64> {
    let s = FidelityEnsembleStats::new(p, d)?;
    check_g(g)?;
    Ok(1.0 - p * p + s.hessian_coefficient() * g)
}

/// Var[L(θ)] = (1−p²)/(d−1)·g·[2p²(1 − g) + (d−2)(1−p²)g/(d(d−1))]
///
/// The cross term E[Re(⟨ψ⊥|ρ|ψ*⟩)²] equals (1−g)g/(2(d−1)) for a pure ρ;
/// see [`landscape_variance_printed`] for the form with (1 − (1−g)²) there.
pub fn landscape_variance(p: f64, d: usize, g: f64) -> Result<f64> {
    FidelityEnsembleStats::new(p, d)?;
    check_g(g)?;
    let (p2, d) = (p * p, d as f64);
    let inner = 2.0 * p2 * (1.0 - g) + (d - 2.0) * (1.0 - p2) / (d * (d - 1.0)) * g;
    Ok((1.0 - p2) / (d - 1.0) * g * inner)
}

/// (1−p²)/(d−1)·g·[4p² − (2p² − (d−2)(1−p²)/(d(d−1)))·g], which exceeds
/// [`landscape_variance`] by 2p²(1−p²)g/(d−1). Kept for comparison in reports.
pub fn landscape_variance_printed(p: f64, d: usize, g: f64) -> Result<f64> {
    FidelityEnsembleStats::new(p, d)?;
    check_g(g)?;
    let (p2, d) = (p * p, d as f64);
    let inner = 4.0 * p2 - (2.0 * p2 - (d - 2.0) * (1.0 - p2) / (d * (d - 1.0))) * g;
    Ok((1.0 - p2) / (d - 1.0) * g * inner)
}

fn check_g(g: f64) -> Result<()> {
    if !(-1e-12..=1.0 + 1e-12).contains(&g) {
        return Err(Error::Domain(format!("g = {g} is outside [0, 1]")));
    }
    Ok(())
}

/// g = 1 − |⟨ψ*|ψ(θ)⟩|², the fidelity distance from the anchor output.
pub fn overlap_deficit(anchor: &StateVector, psi: &StateVector) -> Result<f64> {
    Ok(1.0 - crate::statevector::fidelity(anchor, psi)?)
}

/// g along one parameter axis for a gate with Ω² = I: ½F_μμ sin²(Δ).
pub fn axis_profile(qfi_mumu: f64, theta_offset: f64) -> f64 {
    0.5 * qfi_mumu * theta_offset.sin().powi(2)
}

/// Anchor statistics of a Hamiltonian for the block-unitary ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalLossStats {
    pub hamiltonian_trace: f64,
    pub hamiltonian_sq_trace: f64,
    pub h_mean: f64,
    pub h_sq_mean: f64,
    pub d: usize,
}

impl LocalLossStats {
    pub fn new(hamiltonian_trace: f64, hamiltonian_sq_trace: f64, h_mean: f64, h_sq_mean: f64, d: usize) -> Result<Self> {
        check_d(d)?;
        if h_sq_mean < h_mean * h_mean - 1e-12 {
            return Err(Error::Domain(format!("<H^2> = {h_sq_mean} is below <H>^2 = {}", h_mean * h_mean)));
        }
        Ok(Self { hamiltonian_trace, hamiltonian_sq_trace, h_mean, h_sq_mean, d })
    }

    pub fn from_hamiltonian(h: &Hamiltonian, anchor: &StateVector) -> Result<Self> {
        crate::error::check_dim(h.dim(), anchor.dim())?;
        let h_mean = h.expectation(anchor.amplitudes());
        let h_sq_mean = crate::linalg::norm_sqr(&h.apply(anchor.amplitudes()));
        Self::new(h.trace(), h.sq_trace(), h_mean, h_sq_mean, h.dim())
    }

    /// ⟨H²⟩* − ⟨H⟩*², floored at zero.
    pub fn anchor_variance(&self) -> f64 {
        (self.h_sq_mean - self.h_mean * self.h_mean).max(0.0)
    }

    /// L* = ⟨H⟩*
    pub fn loss_star(&self) -> f64 {
        self.h_mean
    }
}

pub fn local_loss_f1(s: &LocalLossStats) -> f64 {
    s.anchor_variance() / (s.d as f64 - 1.0)
}

pub fn local_loss_f2(s: &LocalLossStats) -> Result<f64> {
    if s.d < 3 {
        return Err(Error::Domain(format!("the local-loss Hessian variance factor needs d >= 3, got {}", s.d)));
    }
    let d = s.d as f64;
    Ok(32.0 * (s.anchor_variance() / (d - 1.0) + 2.0 * s.hamiltonian_sq_trace / (d * (d - 2.0))))
}

/// (tr H − d L*)/(d − 1)
pub fn local_loss_hessian_coefficient(tr_h: f64, l_star: f64, d: usize) -> Result<f64> {
    let df = check_d(d)?;
    Ok((tr_h - df * l_star) / (df - 1.0))
}

pub fn local_loss_expected_hessian(tr_h: f64, l_star: f64, d: usize, qfi: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    Ok(qfi.scaled(local_loss_hessian_coefficient(tr_h, l_star, d)?))
}

/// E[L(θ)] = L* + (tr H − d L*)/(d − 1)·g(θ)
pub fn local_loss_expectation(tr_h: f64, l_star: f64, d: usize, g: f64) -> Result<f64> {
    check_g(g)?;
    Ok(l_star + local_loss_hessian_coefficient(tr_h, l_star, d)? * g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalBoundInputs {
    pub stats: LocalLossStats,
    pub omega_sq_norm: f64,
    pub e_star: f64,
    pub eps1: f64,
    pub eps2: f64,
}

/// Local-loss counterpart of [`theorem1_bound`]; needs L* < tr H/d.
pub fn theorem_s9_bound(b: &LocalBoundInputs) -> Result<f64> {
    let s = &b.stats;
    check_bound_common(b.omega_sq_norm, b.e_star, b.eps1, b.eps2)?;
    let d = s.d as f64;
    // A gap at rounding level means L* = tr H/d, e.g. for H ∝ I.
    let mean = s.hamiltonian_trace / d;
    if mean - s.loss_star() <= 1e-12 * (1.0 + mean.abs()) {
        return Err(Error::Domain(format!(
            "the bound needs L* = {:.6} below tr H/d = {:.6}",
            s.loss_star(),
            s.hamiltonian_trace / d
        )));
    }
    let coeff = local_loss_hessian_coefficient(s.hamiltonian_trace, s.loss_star(), s.d)?;
    two_term_bound(local_loss_f1(s), local_loss_f2(s)?, b.omega_sq_norm, coeff, b.e_star, b.eps1, b.eps2)
}

/// How a report row is judged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Estimate should equal the closed form up to sampling error.
    Equality,
    /// Estimate should not exceed the closed form beyond sampling error.
    UpperBound,
    /// Deterministic comparison against an absolute tolerance.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub label: String,
    pub kind: CheckKind,
    pub closed_form: f64,
    pub estimate: f64,
    pub standard_error: f64,
    /// Signed deviation (estimate − closed form) in units of the standard
    /// error; zero when the standard error vanishes.
    pub z: f64,
    pub pass: bool,
}

/// Absolute slack added to every statistical comparison so that entries
/// with vanishing standard error are judged at roundoff level.
pub const SE_FLOOR: f64 = 1e-10;

/// Minimum fraction of equality rows that must lie within the tolerance.
pub const EQUALITY_FRACTION: f64 = 0.99;

/// Extra standard errors allowed for the worst equality row.
pub const EQUALITY_OUTLIER_SLACK: f64 = 2.0;

/// Rows of closed-form versus Monte Carlo comparisons.
///
/// Equality rows are judged as a pool: at least 99% must lie within
/// `se_tolerance` standard errors and none beyond `se_tolerance + 2`.
/// Upper-bound and exact rows must pass individually.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryReport {
    pub se_tolerance: f64,
    pub rows: Vec<CheckRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckSummary {
    pub check: String,
    pub kind: CheckKind,
    pub n_rows: usize,
    pub n_pass: usize,
    pub max_abs_z: f64,
}

impl TheoryReport {
    pub fn new(se_tolerance: f64) -> Self {
        Self { se_tolerance, rows: Vec::new() }
    }

    fn z(diff: f64, se: f64) -> f64 {
        if se > 0.0 { diff / se } else { 0.0 }
    }

    pub fn push_equality(&mut self, check: &str, label: String, closed_form: f64, estimate: f64, se: f64) {
        let diff = estimate - closed_form;
        let pass = diff.abs() <= self.se_tolerance * se + SE_FLOOR;
        self.rows.push(CheckRow {
            check: check.into(),
            label,
            kind: CheckKind::Equality,
            closed_form,
            estimate,
            standard_error: se,
            z: Self::z(diff, se),
            pass,
        });
    }

    pub fn push_upper_bound(&mut self, check: &str, label: String, bound: f64, estimate: f64, se: f64) {
        let diff = estimate - bound;
        let pass = diff <= self.se_tolerance * se + SE_FLOOR;
        self.rows.push(CheckRow {
            check: check.into(),
            label,
            kind: CheckKind::UpperBound,
            closed_form: bound,
            estimate,
            standard_error: se,
            z: Self::z(diff, se),
            pass,
        });
    }

    pub fn push_exact(&mut self, check: &str, label: String, expected: f64, actual: f64, tol: f64) {
        self.rows.push(CheckRow {
            check: check.into(),
            label,
            kind: CheckKind::Exact,
            closed_form: expected,
            estimate: actual,
            standard_error: 0.0,
            z: 0.0,
            pass: (actual - expected).abs() <= tol,
        });
    }

    pub fn extend(&mut self, other: TheoryReport) {
        self.rows.extend(other.rows);
    }

    fn equality_rows(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| r.kind == CheckKind::Equality)
    }

    /// Fraction of equality rows within tolerance (1 when there are none).
    pub fn equality_fraction(&self) -> f64 {
        let n = self.equality_rows().count();
        if n == 0 {
            return 1.0;
        }
        self.equality_rows().filter(|r| r.pass).count() as f64 / n as f64
    }

    pub fn passed(&self) -> bool {
        let k = self.se_tolerance + EQUALITY_OUTLIER_SLACK;
        let equality_ok = self.equality_fraction() >= EQUALITY_FRACTION
            && self
                .equality_rows()
                .all(|r| (r.estimate - r.closed_form).abs() <= k * r.standard_error + SE_FLOOR);
        equality_ok && self.rows.iter().filter(|r| r.kind != CheckKind::Equality).all(|r| r.pass)
    }

    /// Per-check tallies in order of first appearance.
    pub fn summaries(&self) -> Vec<CheckSummary> {
        let mut out: Vec<CheckSummary> = Vec::new();
        for r in &self.rows {
            let i = match out.iter().position(|s| s.check == r.check) {
                Some(i) => i,
                None => {
                    out.push(CheckSummary { check: r.check.clone(), kind: r.kind, n_rows: 0, n_pass: 0, max_abs_z: 0.0 });
                    out.len() - 1
                }
            };
            let s = &mut out[i];
            s.n_rows += 1;
            s.n_pass += r.pass as usize;
            s.max_abs_z = s.max_abs_z.max(r.z.abs());
        }
        out
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;

    #[test]
    fn f1_f2_values() {
        assert_eq!(f1(0.5, 4).unwrap(), 0.0625);
        assert_eq!(f2(0.0, 2).unwrap(), 32.0);
        for d in [2usize, 16, 1024] {
            assert_eq!(f1(1.0, d).unwrap(), 0.0);
            assert_eq!(f1(0.0, d).unwrap(), 0.0);
            assert_eq!(f2(1.0, d).unwrap(), 0.0);
        }
        assert!(f1(1.1, 4).is_err());
        assert!(f1(0.5, 1).is_err());
    }

    #[test]
    fn f1_maximum_at_half() {
        for d in [2usize, 5, 64] {
            let cap = 1.0 / (4.0 * (d as f64 - 1.0));
            for i in 0..=1000 {
                assert!(f1(i as f64 / 1000.0, d).unwrap() <= cap + 1e-15);
            }
            assert!((f1(0.5f64.sqrt(), d).unwrap() - cap).abs() < 1e-15);
        }
    }

    #[test]
    fn f2_scales_inverse_with_dimension() {
        let p = 0.6;
        let ratios: Vec<f64> =
            [1usize << 4, 1 << 8, 1 << 12].iter().map(|&d| f2(p, d).unwrap() * d as f64).collect();
        // d·f2 tends to 32(1−p²)p²
        let limit = 32.0 * (1.0 - p * p) * p * p;
        for (r, tol) in ratios.iter().zip([0.31, 0.02, 0.002]) {
            assert!((r / limit - 1.0).abs() < tol, "{r} vs {limit}");
        }
    }

    #[test]
    fn critical_loss_values() {
        assert_eq!(critical_loss(2).unwrap(), 0.5);
        assert!((critical_loss(1024).unwrap() - (1.0 - 2f64.powi(-10))).abs() < 1e-15);
        assert!(critical_loss(8).unwrap() < critical_loss(16).unwrap());
    }

    #[test]
    fn gradient_variance_composition() {
        let v = expected_gradient_variance(0.5, 2, &[0.5]).unwrap();
        assert!((v[0] - 0.09375).abs() < 1e-15);
        assert_eq!(expected_gradient_variance(1.0, 8, &[0.3, 0.2]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn expected_hessian_scaling() {
        let q = SymmetricMatrix::from_rows(&[vec![0.5, 0.1], vec![0.1, 0.3]]).unwrap();
        let crit = expected_hessian((0.25f64).sqrt(), 4, &q).unwrap();
        assert!(crit.frobenius_norm() < 1e-15);
        assert_eq!(expected_hessian(1.0, 4, &q).unwrap(), q);
        assert_eq!(hessian_variance_bound(0.3, 8, &[0.5, 0.5], 0, 1).unwrap(), f2(0.3, 8).unwrap() / 16.0);
        assert!(hessian_variance_bound(0.3, 8, &[0.5], 0, 1).is_err());
    }

    #[test]
    fn theorem1_bound_behaviour() {
        let prec = Precision::new(0.05, 0.05).unwrap();
        let b = |p: f64, d: usize| theorem1_bound(&BoundInputs::new(p, d, 5.0, 0.1, prec));
        assert_eq!(b(1.0, 8).unwrap(), 0.0);
        // M = 20 coefficient-1/2 generators, d = 2^10
        let d = 1024f64;
        let (f1v, f2v) = (0.64 * 0.36 / (d - 1.0), 32.0 * 0.36 / (d - 1.0) * (0.64 + 2.0 * 0.36 / d));
        let kappa = (d * 0.64 - 1.0) / (d - 1.0);
        let expect = 2.0 * f1v * 5.0 / 0.0025 + f2v * 25.0 / (kappa * 0.1 + 0.05f64).powi(2);
        assert!((b(0.8, 1024).unwrap() - expect).abs() < 1e-12 * expect);
        let mut prev = f64::INFINITY;
        for n in 4..=12 {
            let v = b(0.8, 1 << n).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(b(0.2, 16).is_err());
        assert!(theorem1_bound(&BoundInputs::new(0.8, 16, 0.0, 0.1, prec)).is_err());
    }

    #[test]
    fn landscape_formulas() {
        assert!((landscape_expectation(0.6, 8, 0.0).unwrap() - 0.64).abs() < 1e-15);
        assert!((landscape_expectation(0.5, 4, 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(landscape_variance(0.6, 8, 0.0).unwrap(), 0.0);
        assert_eq!(landscape_variance(1.0, 8, 0.7).unwrap(), 0.0);
        for g in [0.1, 0.5, 0.9, 1.0] {
            assert!(landscape_variance(0.3, 16, g).unwrap() >= 0.0);
        }
        assert!(landscape_expectation(0.5, 4, 1.5).is_err());
        // d = 2: the complement is one-dimensional, so only a uniform phase is
        // random and L = const − 2pq√(g(1−g))·cos φ has variance 2p²q²g(1−g).
        let (p, g) = (0.7_f64, 0.3);
        let q2 = 1.0 - p * p;
        assert!((landscape_variance(p, 2, g).unwrap() - 2.0 * p * p * q2 * g * (1.0 - g)).abs() < 1e-15);
        // ψ ⟂ ψ*: L = 1 − q²|⟨ψ⊥|ψ⟩|², a pure Haar second moment in d − 1 dimensions.
        let d = 8.0;
        let haar = q2 * q2 * (2.0 / (d * (d - 1.0)) - 1.0 / ((d - 1.0) * (d - 1.0)));
        assert!((landscape_variance(p, 8, 1.0).unwrap() - haar).abs() < 1e-15);
        let gap = landscape_variance_printed(p, 8, g).unwrap() - landscape_variance(p, 8, g).unwrap();
        assert!((gap - 2.0 * p * p * q2 * g / (d - 1.0)).abs() < 1e-15);
        assert_eq!(axis_profile(0.8, 0.0), 0.0);
        assert!((axis_profile(0.8, std::f64::consts::FRAC_PI_2) - 0.4).abs() < 1e-15);
    }

    fn projector_hamiltonian(phi: &StateVector) -> Hamiltonian {
        Hamiltonian::fidelity_projector(phi)
    }

    #[test]
    fn local_loss_reduces_to_fidelity() {
        let d = 8;
        let p: f64 = 0.7;
        let anchor = StateVector::zero_state(3).unwrap();
        let mut a = vec![crate::linalg::ZERO; d];
        a[0] = p.into();
        a[5] = (1.0 - p * p).sqrt().into();
        let phi = StateVector::from_amplitudes(a).unwrap();
        let s = LocalLossStats::from_hamiltonian(&projector_hamiltonian(&phi), &anchor).unwrap();
        assert!((local_loss_f1(&s) - f1(p, d).unwrap()).abs() < 1e-12);
        let coeff = local_loss_hessian_coefficient(s.hamiltonian_trace, s.loss_star(), d).unwrap();
        assert!((coeff - hessian_coefficient(p, d).unwrap()).abs() < 1e-12);
        // The local-loss Hessian factor is looser than the fidelity one.
        assert!(local_loss_f2(&s).unwrap() > f2(p, d).unwrap());
        let prec = Precision::new(0.05, 0.05).unwrap();
        let t1 = theorem1_bound(&BoundInputs::new(p, d, 3.0, 0.1, prec)).unwrap();
        let s9 = theorem_s9_bound(&LocalBoundInputs { stats: s, omega_sq_norm: 3.0, e_star: 0.1, eps1: 0.05, eps2: 0.05 })
            .unwrap();
        assert!(s9 >= t1);
    }

    #[test]
    fn local_loss_edge_cases() {
        let id = Hamiltonian::new(CMatrix::identity(4)).unwrap();
        let anchor = StateVector::zero_state(2).unwrap();
        let s = LocalLossStats::from_hamiltonian(&id, &anchor).unwrap();
        assert_eq!(local_loss_f1(&s), 0.0);
        let z = Hamiltonian::new(CMatrix::diagonal_from(&[1.0, -1.0, 1.0, -1.0].map(|x| x.into()))).unwrap();
        let sz = LocalLossStats::from_hamiltonian(&z, &anchor).unwrap();
        assert_eq!(local_loss_f1(&sz), 0.0);
        let small = LocalLossStats::new(0.0, 2.0, 0.0, 1.0, 2).unwrap();
        assert!(local_loss_f2(&small).is_err());
        assert!(LocalLossStats::new(0.0, 2.0, 1.0, 0.5, 4).is_err());
        // Eigenstate anchor: only the Hessian term survives.
        let lowered = LocalLossStats::new(2.0, 4.0, -1.0, 1.0, 4).unwrap();
        let b = LocalBoundInputs { stats: lowered, omega_sq_norm: 2.0, e_star: 0.1, eps1: 0.05, eps2: 0.05 };
        let coeff = (2.0 + 4.0) / 3.0;
        let expect = local_loss_f2(&lowered).unwrap() * 4.0 / (coeff * 0.1 + 0.05f64).powi(2);
        assert!((theorem_s9_bound(&b).unwrap() - expect).abs() < 1e-12);
        let at_crit = LocalLossStats::new(4.0, 4.0, 1.0, 1.0, 4).unwrap();
        assert!(local_loss_expected_hessian(4.0, 1.0, 4, &SymmetricMatrix::identity(2)).unwrap().frobenius_norm() == 0.0);
        assert!(theorem_s9_bound(&LocalBoundInputs { stats: at_crit, ..b }).is_err());
    }

    #[test]
    fn report_pooling() {
        let mut r = TheoryReport::new(3.0);
        for i in 0..200 {
            r.push_equality("eq", format!("{i}"), 0.0, 0.01, 0.01);
        }
        r.push_equality("eq", "outlier".into(), 0.0, 0.045, 0.01);
        assert!(r.passed(), "one row beyond 3 SE but within 5 SE is tolerated");
        r.push_equality("eq", "far".into(), 0.0, 0.06, 0.01);
        assert!(!r.passed());
        let mut u = TheoryReport::new(3.0);
        u.push_upper_bound("ub", "a".into(), 1.0, 1.02, 0.01);
        u.push_exact("ex", "b".into(), 0.5, 0.5 + 1e-13, 1e-12);
        assert!(u.passed());
        u.push_upper_bound("ub", "c".into(), 1.0, 1.05, 0.01);
        assert!(!u.passed());
        assert_eq!(u.summaries().len(), 2);
        assert_eq!(u.failures().count(), 1);
        let mut z = TheoryReport::new(3.0);
        z.push_equality("zero", "x".into(), 0.25, 0.25 + 1e-12, 0.0);
        assert!(z.passed());
    }
}
