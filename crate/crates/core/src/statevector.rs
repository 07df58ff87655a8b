//! Dense statevectors, Pauli strings and gate kernels.
//!
//! Qubit 0 is the most significant bit of the basis index. Public operations
//! take states by reference and return new states; the in-place slice kernels
//! in [`kernels`] back them and the derivative engine.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm_sqr, CMatrix, C64, I, ONE, ZERO};

/// A 2×2 complex matrix, row-major.
pub type Gate2 = [[C64; 2]; 2];

const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// |0…0⟩ on `n_qubits` qubits.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        Self::basis_state(n_qubits, 0)
    }

    pub fn basis_state(n_qubits: usize, index: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 30 {
            return Err(Error::Domain(format!("n_qubits must be in 1..=30, got {n_qubits}")));
        }
        let d = 1usize << n_qubits;
        if index >= d {
            return Err(Error::DimensionMismatch { expected: d, found: index });
        }
        let mut amps = vec![ZERO; d];
        amps[index] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Wraps amplitudes whose norm is already 1 within 1e-10.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let n_qubits = qubits_for_len(amps.len())?;
        let norm = norm_sqr(&amps).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("state norm is {norm}, expected 1")));
        }
        Ok(Self { n_qubits, amps })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let n_qubits = qubits_for_len(amps.len())?;
        let norm = norm_sqr(&amps).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Domain("cannot normalize a zero or non-finite vector".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { n_qubits, amps })
    }

    /// Crate-internal constructor for amplitudes produced by unitary
    /// evolution of a valid state.
    pub(crate) fn from_unitary_evolution(n_qubits: usize, amps: Vec<C64>) -> Self {
        debug_assert_eq!(amps.len(), 1 << n_qubits);
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    /// e^{iα}|ψ⟩
    pub fn with_global_phase(&self, alpha: f64) -> Self {
        let ph = C64::from_polar(1.0, alpha);
        Self { n_qubits: self.n_qubits, amps: self.amps.iter().map(|a| a * ph).collect() }
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::Domain(format!("amplitude count {len} is not 2^N with N >= 1")));
    }
    Ok(len.trailing_zeros() as usize)
}

#[inline]
pub(crate) fn bit_mask(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

fn check_qubit(n_qubits: usize, qubit: usize) -> Result<()> {
    if qubit < n_qubits {
        Ok(())
    } else {
        Err(Error::QubitOutOfRange { qubit, n_qubits })
    }
}

/// Single-qubit Pauli letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Gate2 {
        match self {
            Pauli::I => gates::identity(),
            Pauli::X => gates::x(),
            Pauli::Y => gates::y(),
            Pauli::Z => gates::z(),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of Pauli letters; letter k acts on qubit k.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::Domain("Pauli string must act on at least one qubit".into()));
        }
        Ok(Self { letters })
    }

    /// `pauli` on `qubit`, identity elsewhere.
    pub fn single(n_qubits: usize, qubit: usize, pauli: Pauli) -> Result<Self> {
        check_qubit(n_qubits, qubit)?;
        let mut letters = vec![Pauli::I; n_qubits];
        letters[qubit] = pauli;
        Self::new(letters)
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Bit-flip mask, phase mask and the i^{#Y} prefactor, so that
    /// P|b⟩ = i^{#Y} (−1)^{|b ∧ z|} |b ⊕ x⟩.
    pub(crate) fn action(&self) -> PauliAction {
        let n = self.n_qubits();
        let (mut x, mut z, mut ny) = (0usize, 0usize, 0u32);
        for (q, &p) in self.letters.iter().enumerate() {
            let m = bit_mask(n, q);
            match p {
                Pauli::I => {}
                Pauli::X => x |= m,
                Pauli::Z => z |= m,
                Pauli::Y => {
                    x |= m;
                    z |= m;
                    ny += 1;
                }
            }
        }
        let prefactor = match ny % 4 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        };
        PauliAction { x_mask: x, z_mask: z, prefactor }
    }

    /// Full 2^N × 2^N matrix (oracle use only).
    pub fn to_matrix(&self) -> CMatrix {
        self.letters
            .iter()
            .map(|p| gate_matrix(&p.matrix()))
            .reduce(|acc, m| acc.kron(&m))
            .expect("nonempty Pauli string")
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| match c {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::Domain(format!("invalid Pauli letter {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters)
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct PauliAction {
    pub x_mask: usize,
    pub z_mask: usize,
    pub prefactor: C64,
}

impl PauliAction {
    /// Coefficient c with P|b⟩ = c|b ⊕ x⟩.
    #[inline]
    pub fn phase(&self, b: usize) -> C64 {
        if (b & self.z_mask).count_ones() % 2 == 1 {
            -self.prefactor
        } else {
            self.prefactor
        }
    }
}

/// Unitary matrix of any dimension, validated on construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DenseUnitary {
    matrix: CMatrix,
}

impl DenseUnitary {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let deviation = matrix.unitarity_deviation();
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self { matrix })
    }

    pub(crate) fn new_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint() }
    }
}

impl<'de> Deserialize<'de> for DenseUnitary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            matrix: CMatrix,
        }
        let raw = Raw::deserialize(d)?;
        DenseUnitary::new(raw.matrix).map_err(serde::de::Error::custom)
    }
}

/// Two-qubit controlled Paulis used as fixed entanglers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ControlledKind {
    Cnot,
    Cz,
}

pub fn gate_matrix(g: &Gate2) -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| g[i][j])
}

fn gate2_unitarity_deviation(g: &Gate2) -> f64 {
    gate_matrix(g).unitarity_deviation()
}

/// Standard single-qubit gates with R_P(θ) = exp(−iθP/2).
pub mod gates {
    use super::Gate2;
    use crate::linalg::{C64, I, ONE, ZERO};

    pub fn identity() -> Gate2 {
        [[ONE, ZERO], [ZERO, ONE]]
    }
    pub fn x() -> Gate2 {
        [[ZERO, ONE], [ONE, ZERO]]
    }
    pub fn y() -> Gate2 {
        [[ZERO, -I], [I, ZERO]]
    }
    pub fn z() -> Gate2 {
        [[ONE, ZERO], [ZERO, -ONE]]
    }
    pub fn h() -> Gate2 {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        [[s, s], [s, -s]]
    }
    pub fn rx(theta: f64) -> Gate2 {
        let (s, c) = (theta / 2.0).sin_cos();
        [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]]
    }
    pub fn ry(theta: f64) -> Gate2 {
        let (s, c) = (theta / 2.0).sin_cos();
        [[C64::new(c, 0.0), C64::new(-s, 0.0)], [C64::new(s, 0.0), C64::new(c, 0.0)]]
    }
    pub fn rz(theta: f64) -> Gate2 {
        [[C64::from_polar(1.0, -theta / 2.0), ZERO], [ZERO, C64::from_polar(1.0, theta / 2.0)]]
    }
}

/// In-place kernels on raw amplitude slices of length 2^n.
pub mod kernels {
    use super::{bit_mask, Gate2, PauliAction};
    use crate::linalg::{CMatrix, C64, ZERO};

    pub fn one_qubit(amps: &mut [C64], n: usize, qubit: usize, g: &Gate2) {
        let m = bit_mask(n, qubit);
        let d = amps.len();
        let mut base = 0;
        while base < d {
            for i in base..base + m {
                let (a0, a1) = (amps[i], amps[i + m]);
                amps[i] = g[0][0] * a0 + g[0][1] * a1;
                amps[i + m] = g[1][0] * a0 + g[1][1] * a1;
            }
            base += 2 * m;
        }
    }

    pub fn cz(amps: &mut [C64], n: usize, a: usize, b: usize) {
        let both = bit_mask(n, a) | bit_mask(n, b);
        for (i, amp) in amps.iter_mut().enumerate() {
            if i & both == both {
                *amp = -*amp;
            }
        }
    }

    pub fn cnot(amps: &mut [C64], n: usize, control: usize, target: usize) {
        let c = bit_mask(n, control);
        let t = bit_mask(n, target);
        for i in 0..amps.len() {
            if i & c != 0 && i & t == 0 {
                amps.swap(i, i | t);
            }
        }
    }

    pub(crate) fn pauli(amps: &mut [C64], act: &PauliAction) {
        if act.x_mask == 0 {
            for (b, amp) in amps.iter_mut().enumerate() {
                *amp *= act.phase(b);
            }
            return;
        }
        for b in 0..amps.len() {
            let bp = b ^ act.x_mask;
            if b < bp {
                // (Pψ)_b = phase(b')ψ_{b'}, (Pψ)_{b'} = phase(b)ψ_b
                let (ab, abp) = (amps[b], amps[bp]);
                amps[b] = act.phase(bp) * abp;
                amps[bp] = act.phase(b) * ab;
            }
        }
    }

    /// ψ ← (cos(a) I − i sin(a) P) ψ, i.e. exp(−i a P) for a Pauli string P.
    pub(crate) fn pauli_rotation(amps: &mut [C64], act: &PauliAction, angle: f64) {
        let (s, c) = angle.sin_cos();
        let mis = C64::new(0.0, -s);
        if act.x_mask == 0 {
            for (b, amp) in amps.iter_mut().enumerate() {
                *amp *= c + mis * act.phase(b);
            }
            return;
        }
        for b in 0..amps.len() {
            let bp = b ^ act.x_mask;
            if b < bp {
                let (ab, abp) = (amps[b], amps[bp]);
                amps[b] = c * ab + mis * act.phase(bp) * abp;
                amps[bp] = c * abp + mis * act.phase(b) * ab;
            }
        }
    }

    /// Applies a dense 2^k × 2^k matrix to the listed qubits (first listed
    /// qubit is the most significant bit of the local index).
    pub fn dense(amps: &mut [C64], n: usize, qubits: &[usize], u: &CMatrix) {
        let k = qubits.len();
        let local = 1usize << k;
        let masks: Vec<usize> = qubits.iter().map(|&q| bit_mask(n, q)).collect();
        let all: usize = masks.iter().fold(0, |acc, m| acc | m);
        let offsets: Vec<usize> = (0..local)
            .map(|l| {
                masks.iter().enumerate().fold(0, |acc, (j, &m)| if l >> (k - 1 - j) & 1 == 1 { acc | m } else { acc })
            })
            .collect();
        let mut buf = vec![ZERO; local];
        for base in 0..amps.len() {
            if base & all != 0 {
                continue;
            }
            for (l, &off) in offsets.iter().enumerate() {
                buf[l] = amps[base | off];
            }
            for (r, &off) in offsets.iter().enumerate() {
                amps[base | off] = u.row(r).iter().zip(&buf).map(|(a, b)| a * b).sum();
            }
        }
    }
}

/// Applies a 2×2 gate. Unitarity is validated in debug builds.
pub fn apply_one_qubit(state: &StateVector, qubit: usize, gate: &Gate2) -> Result<StateVector> {
    check_qubit(state.n_qubits, qubit)?;
    if cfg!(debug_assertions) {
        let deviation = gate2_unitarity_deviation(gate);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
    }
    let mut out = state.clone();
    kernels::one_qubit(&mut out.amps, state.n_qubits, qubit, gate);
    Ok(out)
}

pub fn apply_controlled_pauli(
    state: &StateVector,
    control: usize,
    target: usize,
    kind: ControlledKind,
) -> Result<StateVector> {
    check_qubit(state.n_qubits, control)?;
    check_qubit(state.n_qubits, target)?;
    if control == target {
        return Err(Error::EqualQubits(control));
    }
    let mut out = state.clone();
    match kind {
        ControlledKind::Cnot => kernels::cnot(&mut out.amps, state.n_qubits, control, target),
        ControlledKind::Cz => kernels::cz(&mut out.amps, state.n_qubits, control, target),
    }
    Ok(out)
}

/// Applies a dense unitary to the listed (distinct) qubits.
pub fn apply_dense(state: &StateVector, qubits: &[usize], u: &DenseUnitary) -> Result<StateVector> {
    validate_dense_qubits(state.n_qubits, qubits, u)?;
    let mut out = state.clone();
    kernels::dense(&mut out.amps, state.n_qubits, qubits, u.matrix());
    Ok(out)
}

pub(crate) fn validate_dense_qubits(n_qubits: usize, qubits: &[usize], u: &DenseUnitary) -> Result<()> {
    for (i, &q) in qubits.iter().enumerate() {
        check_qubit(n_qubits, q)?;
        if qubits[..i].contains(&q) {
            return Err(Error::EqualQubits(q));
        }
    }
    check_dim(1 << qubits.len(), u.dim())
}

pub fn pauli_apply(state: &StateVector, p: &PauliString) -> Result<StateVector> {
    check_dim(state.n_qubits, p.n_qubits())?;
    let mut out = state.clone();
    kernels::pauli(&mut out.amps, &p.action());
    Ok(out)
}

pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    check_dim(a.dim(), b.dim())?;
    Ok(dot(&a.amps, &b.amps))
}

/// |⟨a|b⟩|², with rounding excursions outside [0, 1] clamped.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(inner_product(a, b)?.norm_sqr().clamp(0.0, 1.0))
}
