//! Closed-form subspace Haar moments and their Monte Carlo validation.
//!
//! The ensemble is U = P̄ + W u W† with u Haar on the d_sub-dimensional
//! range of P = WW† and P̄ = I − P.

use serde::Serialize;

use crate::ensembles::{haar_unitary, haar_vector, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{dot, CMatrix, C64};
use crate::stats::accumulate;

const PROJECTOR_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SubspaceSetting {
    basis: CMatrix,
    p: CMatrix,
    pbar: CMatrix,
}

impl SubspaceSetting {
    /// Subspace spanned by the orthonormal columns of `basis` (d × d_sub).
    pub fn from_basis(basis: CMatrix) -> Result<Self> {
        let gram = basis.adjoint().matmul(&basis);
        let dev = (&gram - &CMatrix::identity(basis.cols())).frobenius_norm();
        if dev > PROJECTOR_TOL {
            return Err(Error::Domain(format!("subspace basis is not orthonormal (deviation {dev:.3e})")));
        }
        let p = basis.matmul(&basis.adjoint());
        let pbar = &CMatrix::identity(basis.rows()) - &p;
        Ok(Self { basis, p, pbar })
    }

    /// Range of a Hermitian idempotent P; the basis comes from Gram–Schmidt
    /// on the columns of P.
    pub fn from_projector(p: &CMatrix) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::DimensionMismatch { expected: p.rows(), found: p.cols() });
        }
        let herm = p.hermiticity_deviation();
        let idem = (&p.matmul(p) - p).frobenius_norm();
        if herm > PROJECTOR_TOL || idem > PROJECTOR_TOL {
            return Err(Error::Domain(format!(
                "not an orthogonal projector (Hermiticity {herm:.3e}, idempotence {idem:.3e})"
            )));
        }
        let d = p.rows();
        let rank = p.trace().re.round() as usize;
        let mut cols: Vec<Vec<C64>> = Vec::new();
        for j in 0..d {
            let mut v: Vec<C64> = (0..d).map(|i| p[(i, j)]).collect();
            for c in &cols {
                let s = dot(c, &v);
                v.iter_mut().zip(c).for_each(|(x, ci)| *x -= ci * s);
            }
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n > 1e-8 {
                v.iter_mut().for_each(|x| *x /= n);
                cols.push(v);
            }
        }
        if cols.len() != rank {
            return Err(Error::Domain(format!("projector rank {} differs from its trace {rank}", cols.len())));
        }
        Self::from_basis(CMatrix::from_fn(d, rank, |i, j| cols[j][i]))
    }

    /// The whole space, P = I.
    pub fn full(d: usize) -> Self {
        Self::from_basis(CMatrix::identity(d)).expect("identity is orthonormal")
    }

    /// A uniformly random d_sub-dimensional subspace of C^d.
    pub fn random(d: usize, d_sub: usize, rng: &mut RngStream) -> Result<Self> {
        if d_sub == 0 || d_sub > d {
            return Err(Error::Domain(format!("subspace dimension {d_sub} not in 1..={d}")));
        }
        let u = haar_unitary(d, rng)?;
        Self::from_basis(CMatrix::from_fn(d, d_sub, |i, j| u.matrix()[(i, j)]))
    }

    pub fn dim_total(&self) -> usize {
        self.basis.rows()
    }

    pub fn d_sub(&self) -> usize {
        self.basis.cols()
    }

    pub fn projector(&self) -> &CMatrix {
        &self.p
    }

    pub fn complement(&self) -> &CMatrix {
        &self.pbar
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    /// U = P̄ + W u W†
    pub fn sample_unitary(&self, rng: &mut RngStream) -> Result<CMatrix> {
        let u = haar_unitary(self.d_sub(), rng)?;
        let wu = self.basis.matmul(u.matrix());
        Ok(&self.pbar + &wu.matmul(&self.basis.adjoint()))
    }

    /// Haar-random unit vector inside the subspace.
    pub fn sample_state(&self, rng: &mut RngStream) -> Result<Vec<C64>> {
        Ok(self.basis.matvec(&haar_vector(self.d_sub(), rng)?))
    }

    fn check_op(&self, a: &CMatrix) -> Result<()> {
        let d = self.dim_total();
        if a.rows() != d || a.cols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: a.rows().max(a.cols()) });
        }
        Ok(())
    }

    fn need_two_dims(&self) -> Result<f64> {
        if self.d_sub() < 2 {
            return Err(Error::Domain("second-moment formulas need d_sub >= 2".into()));
        }
        Ok(self.d_sub() as f64)
    }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn mm(ms: &[&CMatrix]) -> CMatrix {
    ms[1..].iter().fold(ms[0].clone(), |acc, m| acc.matmul(m))
}

fn tr(ms: &[&CMatrix]) -> C64 {
    if ms.len() == 1 {
        return ms[0].trace();
    }
    let last = ms[ms.len() - 1];
    mm(&ms[..ms.len() - 1]).trace_product(last)
}

/// E[U] = I − P
pub fn closed_form_e_u(s: &SubspaceSetting) -> CMatrix {
    s.pbar.clone()
}

/// E[U†AU] = tr(PA)/d_sub·P + P̄AP̄
pub fn closed_form_uau(s: &SubspaceSetting, a: &CMatrix) -> Result<CMatrix> {
    s.check_op(a)?;
    let (p, q) = (&s.p, &s.pbar);
    let ds = s.d_sub() as f64;
    Ok(&p.scale(tr(&[p, a]) / ds) + &mm(&[q, a, q]))
}

/// E[U†AUBU†CU], the seven-term subspace two-design formula.
pub fn closed_form_uaubucu(s: &SubspaceSetting, a: &CMatrix, b: &CMatrix, cm: &CMatrix) -> Result<CMatrix> {
    for m in [a, b, cm] {
        s.check_op(m)?;
    }
    let ds = s.need_two_dims()?;
    let (p, q) = (&s.p, &s.pbar);
    let tr_pa = tr(&[p, a]);
    let tr_pb = tr(&[p, b]);
    let tr_pc = tr(&[p, cm]);
    let tr_papc = tr(&[p, a, p, cm]);
    let terms = [
        mm(&[q, a, q, b, q, cm, q]),
        mm(&[q, a, p, cm, q]).scale(tr_pb / ds),
        mm(&[q, a, q, b, p]).scale(tr_pc / ds),
        mm(&[p, b, q, cm, q]).scale(tr_pa / ds),
        p.scale(tr(&[p, a, q, b, q, cm]) / ds),
        p.scale(tr_papc * tr_pb / (ds * ds)),
        (&mm(&[p, b, p]) - &p.scale(tr_pb / ds))
            .scale((c(ds) * tr_pa * tr_pc - tr_papc) / (ds * (ds * ds - 1.0))),
    ];
    Ok(terms[1..].iter().fold(terms[0].clone(), |acc, t| &acc + t))
}

/// E[tr(U†AUB)·tr(U†CUD)], the subspace trace-product formula.
pub fn closed_form_trace_product(
    s: &SubspaceSetting,
    a: &CMatrix,
    b: &CMatrix,
    cm: &CMatrix,
    dm: &CMatrix,
) -> Result<C64> {
    for m in [a, b, cm, dm] {
        s.check_op(m)?;
    }
    let ds = s.need_two_dims()?;
    let (p, q) = (&s.p, &s.pbar);
    let (tpa, tpb, tpc, tpd) = (tr(&[p, a]), tr(&[p, b]), tr(&[p, cm]), tr(&[p, dm]));
    let qaqb = tr(&[q, a, q, b]);
    let qcqd = tr(&[q, cm, q, dm]);
    let papc = tr(&[p, a, p, cm]);
    let pbpd = tr(&[p, b, p, dm]);
    Ok(qaqb * qcqd
        + qaqb * tpc * tpd / ds
        + qcqd * tpa * tpb / ds
        + tr(&[p, b, q, a, p, cm, q, dm]) / ds
        + tr(&[p, a, q, b, p, dm, q, cm]) / ds
        + (tpa * tpb * tpc * tpd + papc * pbpd) / (ds * ds - 1.0)
        - (papc * tpb * tpd + tpa * tpc * pbpd) / (ds * (ds * ds - 1.0)))
}

/// E_φ[⟨φ|A|φ⟩] = tr(PA)/d_sub for φ Haar in the subspace.
pub fn closed_form_phi_a_phi(s: &SubspaceSetting, a: &CMatrix) -> Result<C64> {
    s.check_op(a)?;
    Ok(tr(&[&s.p, a]) / s.d_sub() as f64)
}

/// E_φ[⟨φ|A|φ⟩²] = (tr((PA)²) + tr(PA)²)/(d_sub(d_sub+1)).
pub fn closed_form_phi_a_phi_sq(s: &SubspaceSetting, a: &CMatrix) -> Result<C64> {
    s.check_op(a)?;
    let ds = s.d_sub() as f64;
    let pa = s.p.matmul(a);
    Ok((pa.trace_product(&pa) + pa.trace() * pa.trace()) / (ds * (ds + 1.0)))
}

/// Full-space Haar integrals over U(d).
pub mod full {
    use super::{c, CMatrix, C64};

    /// ∫VAV† = tr(A)/d·I
    pub fn vav(a: &CMatrix) -> CMatrix {
        let d = a.rows() as f64;
        CMatrix::identity(a.rows()).scale(a.trace() / d)
    }

    /// ∫V†AVBV†CV
    pub fn two_design(a: &CMatrix, b: &CMatrix, cm: &CMatrix) -> CMatrix {
        let n = a.rows();
        let d = n as f64;
        let id = CMatrix::identity(n);
        let tac = a.trace_product(cm);
        let (ta, tb, tc) = (a.trace(), b.trace(), cm.trace());
        &id.scale(tac * tb / (d * d))
            + &(b - &id.scale(tb / d)).scale((c(d) * ta * tc - tac) / (d * (d * d - 1.0)))
    }

    /// ∫tr(VA)tr(V†B) = tr(AB)/d
    pub fn trace_first(a: &CMatrix, b: &CMatrix) -> C64 {
        a.trace_product(b) / a.rows() as f64
    }

    /// ∫tr(V†AVB)tr(V†CVD)
    pub fn trace_product(a: &CMatrix, b: &CMatrix, cm: &CMatrix, dm: &CMatrix) -> C64 {
        let d = a.rows() as f64;
        let (ta, tb, tc, td) = (a.trace(), b.trace(), cm.trace(), dm.trace());
        let (tac, tbd) = (a.trace_product(cm), b.trace_product(dm));
        (ta * tb * tc * td + tac * tbd) / (d * d - 1.0) - (tac * tb * td + ta * tc * tbd) / (d * (d * d - 1.0))
    }
}

/// Closed form next to a Monte Carlo estimate, entry by entry. Each complex
/// entry carries separate standard errors for its real and imaginary parts.
#[derive(Clone, Debug, Serialize)]
pub struct MomentComparison {
    pub closed_form: Vec<C64>,
    pub mc_estimate: Vec<C64>,
    pub se_re: Vec<f64>,
    pub se_im: Vec<f64>,
    pub n_samples: usize,
}

/// Absolute slack for entries whose standard error vanishes.
pub const ZERO_SE_SLACK: f64 = 1e-10;

impl MomentComparison {
    /// Largest standard error over all real components.
    pub fn max_standard_error(&self) -> f64 {
        self.se_re.iter().chain(&self.se_im).copied().fold(0.0, f64::max)
    }

    /// |estimate − closed form| in units of SE, per real component.
    pub fn deviations(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.closed_form.len());
        for i in 0..self.closed_form.len() {
            let diff = self.mc_estimate[i] - self.closed_form[i];
            out.push((diff.re.abs(), self.se_re[i]));
            out.push((diff.im.abs(), self.se_im[i]));
        }
        out
    }

    pub fn within(diff: f64, se: f64, k: f64) -> bool {
        diff <= k * se + ZERO_SE_SLACK
    }

    /// Fraction of real components within k standard errors.
    pub fn fraction_within(&self, k: f64) -> f64 {
        let dev = self.deviations();
        if dev.is_empty() {
            return 1.0;
        }
        dev.iter().filter(|(d, s)| Self::within(*d, *s, k)).count() as f64 / dev.len() as f64
    }
}

/// Monte Carlo mean of a complex-vector integrand; sample i uses stream
/// (seed, i). Returns the comparison against `closed_form`.
pub fn mc_estimate<F>(closed_form: Vec<C64>, n_samples: usize, seed: u64, integrand: F) -> Result<MomentComparison>
where
    F: Fn(&mut RngStream) -> Vec<C64> + Sync + Send,
{
    if n_samples < 100 {
        return Err(Error::Domain(format!("Monte Carlo needs at least 100 samples, got {n_samples}")));
    }
    let width = closed_form.len();
    let m = accumulate(n_samples, 2 * width, |i, out| {
        let v = integrand(&mut RngStream::new(seed, i));
        assert_eq!(v.len(), width, "integrand width must match the closed form");
        for (k, z) in v.iter().enumerate() {
            out[2 * k] = z.re;
            out[2 * k + 1] = z.im;
        }
    });
    let mc_estimate = (0..width).map(|k| C64::new(m.get(2 * k).mean(), m.get(2 * k + 1).mean())).collect();
    let se_re = (0..width).map(|k| m.get(2 * k).se_mean()).collect();
    let se_im = (0..width).map(|k| m.get(2 * k + 1).se_mean()).collect();
    Ok(MomentComparison { closed_form, mc_estimate, se_re, se_im, n_samples })
}

/// Monte Carlo over unitaries drawn from the setting's ensemble.
pub fn mc_moment<F>(
    setting: &SubspaceSetting,
    closed_form: Vec<C64>,
    n_samples: usize,
    seed: u64,
    integrand: F,
) -> Result<MomentComparison>
where
    F: Fn(&CMatrix) -> Vec<C64> + Sync + Send,
{
    mc_estimate(closed_form, n_samples, seed, |rng| {
        integrand(&setting.sample_unitary(rng).expect("valid setting"))
    })
}

/// Random complex operator with standard normal entries scaled by 1/√d.
pub fn random_operator(d: usize, rng: &mut RngStream) -> CMatrix {
    let s = 1.0 / (d as f64).sqrt();
    CMatrix::from_fn(d, d, |_, _| rng.complex_normal() * s)
}

pub(crate) fn flatten(m: &CMatrix) -> impl Iterator<Item = C64> + '_ {
    m.as_slice().iter().copied()
}

/// |v⟩⟨v| for a vector in the subspace.
pub fn rank_one(v: &[C64]) -> CMatrix {
    CMatrix::outer(v, v)
}
