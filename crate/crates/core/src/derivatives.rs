//! Losses, gradients, Hessians, the QFI matrix and the LocalMin predicate.
//!
//! Exact derivatives come from generator insertion. [`LocalExpansion`]
//! caches the tangent vectors of a parameter subset so that gradients and
//! Hessians against many targets cost one backward sweep per parameter.

use serde::{Deserialize, Serialize};

use crate::circuit::{output_state, ParameterizedCircuit};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, CMatrix, SymmetricMatrix, C64, ZERO};
use crate::par;
use crate::statevector::StateVector;

const HERMITIAN_TOL: f64 = 1e-10;

/// Hermitian operator on the full register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    matrix: CMatrix,
}

impl Hamiltonian {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let deviation = matrix.hermiticity_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        if !matrix.rows().is_power_of_two() || matrix.rows() < 2 {
            return Err(Error::Domain(format!("Hamiltonian dimension {} is not 2^N", matrix.rows())));
        }
        Ok(Self { matrix })
    }

    /// H = I − |φ⟩⟨φ|, whose energy is the fidelity loss against φ.
    pub fn fidelity_projector(phi: &StateVector) -> Self {
        let d = phi.dim();
        let proj = CMatrix::outer(phi.amplitudes(), phi.amplitudes());
        Self { matrix: &CMatrix::identity(d) - &proj }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        self.matrix.matvec(v)
    }

    /// ⟨v|H|v⟩
    pub fn expectation(&self, v: &[C64]) -> f64 {
        dot(v, &self.apply(v)).re
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// ‖H‖₂² = tr(H²)
    pub fn sq_trace(&self) -> f64 {
        self.matrix.trace_product(&self.matrix).re
    }
}

#[derive(Clone, Debug)]
pub enum LossKind {
    /// 1 − |⟨φ|ψ(θ)⟩|²
    Fidelity(StateVector),
    /// ⟨ψ(θ)|H|ψ(θ)⟩
    Local(Hamiltonian),
}

impl LossKind {
    fn check(&self, circuit: &ParameterizedCircuit) -> Result<()> {
        match self {
            LossKind::Fidelity(phi) => check_dim(circuit.dim(), phi.dim()),
            LossKind::Local(h) => check_dim(circuit.dim(), h.dim()),
        }
    }

    /// Loss of a normalized state.
    pub fn value(&self, psi: &[C64]) -> f64 {
        match self {
            LossKind::Fidelity(phi) => 1.0 - dot(phi.amplitudes(), psi).norm_sqr().clamp(0.0, 1.0),
            LossKind::Local(h) => h.expectation(psi),
        }
    }
}

/// Thresholds (ε₁, ε₂) of the LocalMin predicate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub eps1: f64,
    pub eps2: f64,
}

impl Precision {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        if !(eps1 >= 0.0 && eps1.is_finite() && eps2 >= 0.0 && eps2.is_finite()) {
            return Err(Error::Domain(format!("precision must be finite and nonnegative, got ({eps1}, {eps2})")));
        }
        Ok(Self { eps1, eps2 })
    }
}

pub fn loss(circuit: &ParameterizedCircuit, params: &[f64], kind: &LossKind) -> Result<f64> {
    kind.check(circuit)?;
    Ok(kind.value(output_state(circuit, params)?.amplitudes()))
}

/// ⟨bra|∂_μψ⟩ for every parameter, by one reverse sweep that uncomputes
/// the state alongside the bra.
pub fn derivative_overlaps(circuit: &ParameterizedCircuit, params: &[f64], psi: &[C64], bra: &[C64]) -> Vec<C64> {
    let mut s = psi.to_vec();
    let mut b = bra.to_vec();
    let mut tmp = vec![ZERO; s.len()];
    let mut out = vec![ZERO; circuit.m_params()];
    for pos in (0..circuit.elements().len()).rev() {
        if let crate::circuit::CircuitElement::Parameterized { param_index, .. } = circuit.elements()[pos] {
            tmp.copy_from_slice(&s);
            circuit.apply_generator(&mut tmp, param_index, false);
            out[param_index] = dot(&b, &tmp);
        }
        circuit.apply_element(&mut s, pos, params, true);
        circuit.apply_element(&mut b, pos, params, true);
    }
    out
}

/// Exact gradient: −2Re(⟨φ|∂_μψ⟩⟨ψ|φ⟩) or 2Re⟨ψ|H|∂_μψ⟩.
pub fn gradient_exact(circuit: &ParameterizedCircuit, params: &[f64], kind: &LossKind) -> Result<Vec<f64>> {
    kind.check(circuit)?;
    let psi = output_state(circuit, params)?.into_amplitudes();
    Ok(match kind {
        LossKind::Fidelity(phi) => {
            let a = dot(phi.amplitudes(), &psi);
            derivative_overlaps(circuit, params, &psi, phi.amplitudes())
                .iter()
                .map(|g| -2.0 * (g * a.conj()).re)
                .collect()
        }
        LossKind::Local(h) => {
            let hpsi = h.apply(&psi);
            derivative_overlaps(circuit, params, &psi, &hpsi).iter().map(|g| 2.0 * g.re).collect()
        }
    })
}

fn check_shiftable(circuit: &ParameterizedCircuit) -> Result<()> {
    for mu in 0..circuit.m_params() {
        if !circuit.generator(mu).has_two_level_spectrum() {
            return Err(Error::Domain(format!("generator of parameter {mu} has no two-level spectrum")));
        }
    }
    Ok(())
}

/// Parameter-shift gradient c_μ[L(θ + s_μe_μ) − L(θ − s_μe_μ)], s_μ = π/(4c_μ).
pub fn gradient_shift(circuit: &ParameterizedCircuit, params: &[f64], kind: &LossKind) -> Result<Vec<f64>> {
    kind.check(circuit)?;
    circuit.check_params(params)?;
    check_shiftable(circuit)?;
    let eval = |p: &[f64]| loss(circuit, p, kind).expect("validated inputs");
    Ok(par::map_range(circuit.m_params(), |mu| {
        let g = circuit.generator(mu);
        let mut p = params.to_vec();
        p[mu] += g.shift();
        let plus = eval(&p);
        p[mu] -= 2.0 * g.shift();
        g.coefficient * (plus - eval(&p))
    }))
}

/// Exact Hessian over all parameters.
pub fn hessian(circuit: &ParameterizedCircuit, params: &[f64], kind: &LossKind) -> Result<SymmetricMatrix> {
    kind.check(circuit)?;
    let all: Vec<usize> = (0..circuit.m_params()).collect();
    Ok(LocalExpansion::new(circuit, params, &all)?.jet(kind)?.hessian)
}

/// Double-shift Hessian c_μc_ν[L(++) − L(+−) − L(−+) + L(−−)].
pub fn hessian_shift(circuit: &ParameterizedCircuit, params: &[f64], kind: &LossKind) -> Result<SymmetricMatrix> {
    kind.check(circuit)?;
    circuit.check_params(params)?;
    check_shiftable(circuit)?;
    let m = circuit.m_params();
    let eval = |p: &[f64]| loss(circuit, p, kind).expect("validated inputs");
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let vals = par::map_range(pairs.len(), |k| {
        let (mu, nu) = pairs[k];
        let (gm, gn) = (circuit.generator(mu), circuit.generator(nu));
        let shifted = |sm: f64, sn: f64| {
            let mut p = params.to_vec();
            p[mu] += sm * gm.shift();
            p[nu] += sn * gn.shift();
            eval(&p)
        };
        gm.coefficient
            * gn.coefficient
            * (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
    });
    let mut h = SymmetricMatrix::zeros(m);
    for (k, &(mu, nu)) in pairs.iter().enumerate() {
        h.set(mu, nu, vals[k]);
    }
    Ok(h)
}

/// QFI F_μν = 2Re[⟨∂_μψ|∂_νψ⟩ − ⟨∂_μψ|ψ⟩⟨ψ|∂_νψ⟩] over all parameters.
pub fn qfi(circuit: &ParameterizedCircuit, params: &[f64]) -> Result<SymmetricMatrix> {
    let all: Vec<usize> = (0..circuit.m_params()).collect();
    Ok(LocalExpansion::new(circuit, params, &all)?.qfi())
}

pub fn min_eigenvalue(m: &SymmetricMatrix) -> f64 {
    m.min_eigenvalue()
}

/// max_μ|g_μ| ≤ ε₁ and λ_min(H) > −ε₂.
pub fn is_local_min(grad: &[f64], hess: &SymmetricMatrix, prec: Precision) -> Result<bool> {
    check_dim(hess.dim(), grad.len())?;
    if grad.iter().any(|g| g.abs() > prec.eps1) {
        return Ok(false);
    }
    Ok(hess.min_eigenvalue() > -prec.eps2)
}

/// Value, gradient and Hessian of a loss restricted to a parameter subset.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub hessian: SymmetricMatrix,
}

/// Derivative data of U(θ)|0⟩ for a parameter subset S at a fixed θ:
/// the state ψ, the tangents t_μ = −iΩ_μ s_μ at the point right after gate μ,
/// and the derivative states ∂_μψ. Matrices are indexed in subset order.
pub struct LocalExpansion<'a> {
    circuit: &'a ParameterizedCircuit,
    params: Vec<f64>,
    subset: Vec<usize>,
    /// `slot_at[pos]` = subset slot whose gate sits at element `pos`
    slot_at: Vec<Option<usize>>,
    psi: Vec<C64>,
    tangents: Vec<Vec<C64>>,
    derivs: Vec<Vec<C64>>,
}

impl<'a> LocalExpansion<'a> {
    pub fn new(circuit: &'a ParameterizedCircuit, params: &[f64], subset: &[usize]) -> Result<Self> {
        circuit.check_params(params)?;
        let len = circuit.elements().len();
        let mut slot_at = vec![None; len];
        for (k, &mu) in subset.iter().enumerate() {
            circuit.check_index(mu)?;
            let pos = circuit.position(mu);
            if slot_at[pos].replace(k).is_some() {
                return Err(Error::Domain(format!("parameter {mu} listed twice in subset")));
            }
        }
        let mut psi = StateVector::zero_state(circuit.n_qubits())?.into_amplitudes();
        let mut tangents = vec![Vec::new(); subset.len()];
        for pos in 0..len {
            circuit.apply_element(&mut psi, pos, params, false);
            if let Some(k) = slot_at[pos] {
                let mut t = psi.clone();
                circuit.apply_generator(&mut t, subset[k], false);
                tangents[k] = t;
            }
        }
        let derivs = par::map_range(subset.len(), |k| {
            let mut d = tangents[k].clone();
            circuit.run(&mut d, params, circuit.position(subset[k]) + 1, len);
            d
        });
        Ok(Self { circuit, params: params.to_vec(), subset: subset.to_vec(), slot_at, psi, tangents, derivs })
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn state(&self) -> &[C64] {
        &self.psi
    }

    pub fn derivative(&self, k: usize) -> &[C64] {
        &self.derivs[k]
    }

    /// State right after gate `subset[k]`, recovered from its tangent.
    pub fn tangent(&self, k: usize) -> &[C64] {
        &self.tangents[k]
    }

    /// G_k = ⟨bra|∂_kψ⟩
    pub fn first_overlaps(&self, bra: &[C64]) -> Vec<C64> {
        self.derivs.iter().map(|d| dot(bra, d)).collect()
    }

    /// A_kl = ⟨bra|∂_k∂_lψ⟩ by a backward sweep per parameter.
    pub fn second_overlaps(&self, bra: &[C64]) -> CMatrix {
        let s = self.subset.len();
        let mut out = CMatrix::zeros(s, s);
        if s == 0 {
            return out;
        }
        let c = self.circuit;
        let positions: Vec<usize> = self.subset.iter().map(|&mu| c.position(mu)).collect();
        let lo = *positions.iter().min().expect("nonempty");
        // Bra propagated back to the point right after each subset gate.
        let mut bras = vec![Vec::new(); s];
        let mut b = bra.to_vec();
        for pos in (lo..c.elements().len()).rev() {
            if let Some(k) = self.slot_at[pos] {
                bras[k] = b.clone();
            }
            if pos > lo {
                c.apply_element(&mut b, pos, &self.params, true);
            }
        }
        let columns = par::map_range(s, |l| {
            let mut col = Vec::new();
            let mut cur = bras[l].clone();
            c.apply_generator(&mut cur, self.subset[l], true);
            col.push((l, dot(&cur, &self.tangents[l])));
            for pos in (lo + 1..=positions[l]).rev() {
                c.apply_element(&mut cur, pos, &self.params, true);
                if let Some(k) = self.slot_at[pos - 1] {
                    col.push((k, dot(&cur, &self.tangents[k])));
                }
            }
            col
        });
        for (l, col) in columns.into_iter().enumerate() {
            for (k, v) in col {
                out[(k, l)] = v;
                out[(l, k)] = v;
            }
        }
        out
    }

    /// All second-derivative states of the subset, for repeated overlaps
    /// against many bras. Memory is s(s+1)/2 state vectors.
    pub fn second_states(&self) -> SecondStates {
        let s = self.subset.len();
        let c = self.circuit;
        let len = c.elements().len();
        let positions: Vec<usize> = self.subset.iter().map(|&mu| c.position(mu)).collect();
        let rows = par::map_range(s, |k| {
            let mut row = Vec::new();
            let mut diag = self.tangents[k].clone();
            c.apply_generator(&mut diag, self.subset[k], false);
            c.run(&mut diag, &self.params, positions[k] + 1, len);
            row.push((k, diag));
            let mut cur = self.tangents[k].clone();
            for pos in positions[k] + 1..len {
                c.apply_element(&mut cur, pos, &self.params, false);
                if let Some(l) = self.slot_at[pos] {
                    let mut branch = cur.clone();
                    c.apply_generator(&mut branch, self.subset[l], false);
                    c.run(&mut branch, &self.params, pos + 1, len);
                    row.push((l, branch));
                }
            }
            row
        });
        let mut states = vec![Vec::new(); s * (s + 1) / 2];
        for (k, row) in rows.into_iter().enumerate() {
            for (l, v) in row {
                states[SecondStates::packed(s, k, l)] = v;
            }
        }
        SecondStates { dim: s, states }
    }

    /// QFI restricted to the subset.
    pub fn qfi(&self) -> SymmetricMatrix {
        let proj: Vec<C64> = self.derivs.iter().map(|d| dot(d, &self.psi)).collect();
        SymmetricMatrix::from_upper(self.subset.len(), |k, l| {
            2.0 * (dot(&self.derivs[k], &self.derivs[l]) - proj[k] * proj[l].conj()).re
        })
    }

    pub fn fidelity_jet(&self, phi: &[C64]) -> Result<Jet> {
        self.fidelity_jet_with(phi, None)
    }

    pub fn local_jet(&self, h: &Hamiltonian) -> Result<Jet> {
        self.local_jet_with(h, None)
    }

    pub fn jet(&self, kind: &LossKind) -> Result<Jet> {
        self.jet_with(kind, None)
    }

    /// As [`Self::jet`], taking second overlaps from `cache` when given
    /// instead of a backward sweep.
    pub fn jet_with(&self, kind: &LossKind, cache: Option<&SecondStates>) -> Result<Jet> {
        match kind {
            LossKind::Fidelity(phi) => self.fidelity_jet_with(phi.amplitudes(), cache),
            LossKind::Local(h) => self.local_jet_with(h, cache),
        }
    }

    fn second(&self, bra: &[C64], cache: Option<&SecondStates>) -> CMatrix {
        match cache {
            Some(c) => {
                debug_assert_eq!(c.dim(), self.subset.len());
                c.overlaps(bra)
            }
            None => self.second_overlaps(bra),
        }
    }

    pub fn fidelity_jet_with(&self, phi: &[C64], cache: Option<&SecondStates>) -> Result<Jet> {
        check_dim(self.psi.len(), phi.len())?;
        let a = dot(phi, &self.psi);
        let g = self.first_overlaps(phi);
        let amp = self.second(phi, cache);
        let gradient = g.iter().map(|gk| -2.0 * (gk * a.conj()).re).collect();
        let hessian = SymmetricMatrix::from_upper(self.subset.len(), |k, l| {
            -2.0 * (amp[(k, l)] * a.conj() + g[k] * g[l].conj()).re
        });
        Ok(Jet { loss: 1.0 - a.norm_sqr().clamp(0.0, 1.0), gradient, hessian })
    }

    pub fn local_jet_with(&self, h: &Hamiltonian, cache: Option<&SecondStates>) -> Result<Jet> {
        check_dim(self.psi.len(), h.dim())?;
        let hpsi = h.apply(&self.psi);
        let g = self.first_overlaps(&hpsi);
        let amp = self.second(&hpsi, cache);
        let hd: Vec<Vec<C64>> = self.derivs.iter().map(|d| h.apply(d)).collect();
        let gradient = g.iter().map(|gk| 2.0 * gk.re).collect();
        let hessian = SymmetricMatrix::from_upper(self.subset.len(), |k, l| {
            2.0 * (amp[(k, l)] + dot(&self.derivs[k], &hd[l])).re
        });
        Ok(Jet { loss: dot(&self.psi, &hpsi).re, gradient, hessian })
    }
}

/// Packed upper triangle of ∂_k∂_lψ over a parameter subset.
#[derive(Clone, Debug)]
pub struct SecondStates {
    dim: usize,
    states: Vec<Vec<C64>>,
}

impl SecondStates {
    fn packed(s: usize, k: usize, l: usize) -> usize {
        let (a, b) = if k <= l { (k, l) } else { (l, k) };
        a * s - a * (a + 1) / 2 + b
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, k: usize, l: usize) -> &[C64] {
        &self.states[Self::packed(self.dim, k, l)]
    }

    /// A_kl = ⟨bra|∂_k∂_lψ⟩
    pub fn overlaps(&self, bra: &[C64]) -> CMatrix {
        let s = self.dim;
        let mut out = CMatrix::zeros(s, s);
        for k in 0..s {
            for l in k..s {
                let v = dot(bra, self.state(k, l));
                out[(k, l)] = v;
                out[(l, k)] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_alt, build_alt_with_coefficient, second_derivative_state};
    use crate::statevector::{PauliString, StateVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_params(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..m).map(|_| rng.random::<f64>() * 2.0 * PI).collect()
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
        StateVector::normalized(
            (0..1 << n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect(),
        )
        .unwrap()
    }

    fn single_ry() -> ParameterizedCircuit {
        let c = build_alt(1, 0);
        ParameterizedCircuit::new(1, c.elements()[..1].to_vec()).unwrap()
    }

    #[test]
    fn single_ry_closed_forms() {
        let c = single_ry();
        let one = LossKind::Fidelity(StateVector::basis_state(1, 1).unwrap());
        // L(θ) = cos²(θ/2) against |1⟩... L = 1 − sin²(θ/2) = cos²(θ/2)
        let g = gradient_exact(&c, &[PI / 2.0], &one).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-14);
        let zero = LossKind::Fidelity(StateVector::zero_state(1).unwrap());
        let h = hessian(&c, &[0.0], &zero).unwrap();
        assert!((h.get(0, 0) - 0.5).abs() < 1e-14);
        let f = qfi(&c, &[0.0]).unwrap();
        assert!((f.get(0, 0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn loss_endpoints_and_projector_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = build_alt(3, 1);
        let p = random_params(c.m_params(), &mut rng);
        let psi = output_state(&c, &p).unwrap();
        assert!(loss(&c, &p, &LossKind::Fidelity(psi.clone())).unwrap().abs() < 1e-14);
        let phi = random_state(3, &mut rng);
        let fl = loss(&c, &p, &LossKind::Fidelity(phi.clone())).unwrap();
        let ll = loss(&c, &p, &LossKind::Local(Hamiltonian::fidelity_projector(&phi))).unwrap();
        assert!((fl - ll).abs() < 1e-12);
        let bad = LossKind::Fidelity(random_state(2, &mut rng));
        assert!(matches!(loss(&c, &p, &bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = CMatrix::from_fn(2, 2, |i, j| if i < j { C64::new(1.0, 0.0) } else { ZERO });
        assert!(matches!(Hamiltonian::new(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn gradient_hessian_oracles_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..=4 {
            let c = build_alt(n, 1);
            let p = random_params(c.m_params(), &mut rng);
            let phi = random_state(n, &mut rng);
            let h_loc = Hamiltonian::new({
                let a = CMatrix::from_fn(1 << n, 1 << n, |_, _| C64::new(rng.random::<f64>(), rng.random::<f64>()));
                &a + &a.adjoint()
            })
            .unwrap();
            for kind in [LossKind::Fidelity(phi.clone()), LossKind::Local(h_loc)] {
                let ge = gradient_exact(&c, &p, &kind).unwrap();
                let gs = gradient_shift(&c, &p, &kind).unwrap();
                for (a, b) in ge.iter().zip(&gs) {
                    assert!((a - b).abs() < 1e-10);
                }
                let he = hessian(&c, &p, &kind).unwrap();
                let hs = hessian_shift(&c, &p, &kind).unwrap();
                assert!(he.max_abs_diff(&hs) < 1e-9, "N={n}: {}", he.max_abs_diff(&hs));
            }
        }
    }

    #[test]
    fn second_overlaps_match_direct_insertion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = build_alt(3, 2);
        let p = random_params(c.m_params(), &mut rng);
        let bra = random_state(3, &mut rng);
        let subset = vec![17, 2, 9, 21];
        let le = LocalExpansion::new(&c, &p, &subset).unwrap();
        let a = le.second_overlaps(bra.amplitudes());
        for (k, &mu) in subset.iter().enumerate() {
            for (l, &nu) in subset.iter().enumerate() {
                let want = dot(bra.amplitudes(), &second_derivative_state(&c, &p, mu, nu).unwrap());
                assert!((a[(k, l)] - want).norm() < 1e-12);
            }
        }
        // Subset jets agree with the restriction of the full Hessian.
        let kind = LossKind::Fidelity(bra);
        let full = hessian(&c, &p, &kind).unwrap();
        let sub = le.jet(&kind).unwrap().hessian;
        assert!(sub.max_abs_diff(&full.restrict(&subset)) < 1e-12);
        let cache = le.second_states();
        let cached = le.jet_with(&kind, Some(&cache)).unwrap().hessian;
        assert!(cached.max_abs_diff(&sub) < 1e-12);
        for (k, &mu) in subset.iter().enumerate() {
            for (l, &nu) in subset.iter().enumerate() {
                let want = second_derivative_state(&c, &p, mu, nu).unwrap();
                let err = want.iter().zip(cache.state(k, l)).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                assert!(err < 1e-12);
            }
        }
        assert!(LocalExpansion::new(&c, &p, &[1, 1]).is_err());
    }

    #[test]
    fn qfi_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=4 {
            let c = build_alt(n, 2);
            let p = random_params(c.m_params(), &mut rng);
            let f = qfi(&c, &p).unwrap();
            assert!(min_eigenvalue(&f) >= -1e-10);
            for (mu, w) in c.omega().iter().enumerate() {
                assert!(f.get(mu, mu) <= 2.0 * w * w + 1e-12);
            }
            assert!(f.trace() <= 2.0 * c.omega_sq_norm() + 1e-12);
            // At a global minimum the fidelity Hessian equals the QFI.
            let psi = output_state(&c, &p).unwrap();
            let h = hessian(&c, &p, &LossKind::Fidelity(psi)).unwrap();
            assert!(h.max_abs_diff(&f) < 1e-8);
        }
    }

    #[test]
    fn qfi_diagonal_from_local_variance() {
        // F_μμ = 2(⟨s|Ω²|s⟩ − ⟨s|Ω|s⟩²) with s the state right after gate μ.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = build_alt(4, 1);
        let p = random_params(c.m_params(), &mut rng);
        let f = qfi(&c, &p).unwrap();
        for mu in 0..c.m_params() {
            let mut s = StateVector::zero_state(4).unwrap().into_amplitudes();
            c.run(&mut s, &p, 0, c.position(mu) + 1);
            let om = c.generator(mu).to_matrix();
            let om_s = om.matvec(&s);
            let mean = dot(&s, &om_s).re;
            let sq = dot(&om_s, &om_s).re;
            assert!((f.get(mu, mu) - 2.0 * (sq - mean * mean)).abs() < 1e-10);
        }
    }

    #[test]
    fn qfi_is_hessian_of_infidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = build_alt(2, 1);
        let p = random_params(c.m_params(), &mut rng);
        let psi = output_state(&c, &p).unwrap();
        let f = qfi(&c, &p).unwrap();
        let g = |q: &[f64]| loss(&c, q, &LossKind::Fidelity(psi.clone())).unwrap();
        let h = 1e-4;
        for mu in 0..c.m_params() {
            for nu in mu..c.m_params() {
                let at = |a: f64, b: f64| {
                    let mut q = p.clone();
                    q[mu] += a;
                    q[nu] += b;
                    g(&q)
                };
                let fd = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
                assert!((fd - f.get(mu, nu)).abs() < 1e-6, "({mu},{nu})");
            }
        }
    }

    #[test]
    fn local_min_predicate() {
        let prec = Precision::new(0.05, 0.05).unwrap();
        let psd = SymmetricMatrix::identity(2);
        assert!(is_local_min(&[0.0, 0.0], &psd, prec).unwrap());
        assert!(!is_local_min(&[0.1, 0.0], &psd, prec).unwrap());
        let neg = SymmetricMatrix::from_diagonal(&[1.0, -0.05]);
        assert!(!is_local_min(&[0.0, 0.0], &neg, prec).unwrap());
        let near = SymmetricMatrix::from_diagonal(&[1.0, -0.049]);
        assert!(is_local_min(&[0.0, 0.0], &near, prec).unwrap());
        assert!(is_local_min(&[0.0], &psd, prec).is_err());
        assert!(Precision::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn shift_requires_two_level_generators() {
        let c = build_alt_with_coefficient(2, 0, 1.0).unwrap();
        let kind = LossKind::Fidelity(StateVector::zero_state(2).unwrap());
        let p = vec![0.3; c.m_params()];
        let ge = gradient_exact(&c, &p, &kind).unwrap();
        let gs = gradient_shift(&c, &p, &kind).unwrap();
        for (a, b) in ge.iter().zip(&gs) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(PauliString::new(vec![]).is_err());
    }
}
