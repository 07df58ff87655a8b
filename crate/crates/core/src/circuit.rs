//! Parameterized circuits U(θ) = Π_μ U_μ(θ_μ) W_μ with Pauli-string
//! generators, the alternating-layered (ALT) ansatz, and exact derivative
//! states by generator insertion.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{C64, CMatrix};
use crate::statevector::{
    kernels, validate_dense_qubits, ControlledKind, DenseUnitary, Pauli, PauliAction, PauliString,
    StateVector,
};

/// Generator Ω = coefficient · P, so the gate is exp(−iθΩ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub pauli: PauliString,
    pub coefficient: f64,
}

impl GeneratorSpec {
    pub fn new(pauli: PauliString, coefficient: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::InvalidCircuit(format!(
                "generator coefficient must be positive and finite, got {coefficient}"
            )));
        }
        Ok(Self { pauli, coefficient })
    }

    /// ‖Ω‖_∞. Pauli strings have unit operator norm.
    pub fn norm(&self) -> f64 {
        self.coefficient
    }

    /// Shift s = π/(4c) of the two-term parameter-shift rule.
    pub fn shift(&self) -> f64 {
        std::f64::consts::PI / (4.0 * self.coefficient)
    }

    /// True for a nontrivial Pauli string, whose spectrum is exactly {±c}.
    pub fn has_two_level_spectrum(&self) -> bool {
        self.pauli.weight() > 0
    }

    pub fn to_matrix(&self) -> CMatrix {
        self.pauli.to_matrix().scale(C64::new(self.coefficient, 0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedGate {
    Controlled { kind: ControlledKind, control: usize, target: usize },
    Dense { qubits: Vec<usize>, unitary: DenseUnitary },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitElement {
    Parameterized { generator: GeneratorSpec, param_index: usize },
    Fixed(FixedGate),
}

/// Ordered element list acting on `n_qubits` qubits with `m_params`
/// parameters, each parameter index used by exactly one element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCircuit", into = "RawCircuit")]
pub struct ParameterizedCircuit {
    n_qubits: usize,
    elements: Vec<CircuitElement>,
    m_params: usize,
    /// element position of each parameter
    positions: Vec<usize>,
    /// cached Pauli actions, aligned with `elements`
    actions: Vec<Option<PauliAction>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCircuit {
    n_qubits: usize,
    elements: Vec<CircuitElement>,
}

impl TryFrom<RawCircuit> for ParameterizedCircuit {
    type Error = Error;
    fn try_from(raw: RawCircuit) -> Result<Self> {
        Self::new(raw.n_qubits, raw.elements)
    }
}

impl From<ParameterizedCircuit> for RawCircuit {
    fn from(c: ParameterizedCircuit) -> Self {
        RawCircuit { n_qubits: c.n_qubits, elements: c.elements }
    }
}

impl ParameterizedCircuit {
    pub fn new(n_qubits: usize, elements: Vec<CircuitElement>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidCircuit("circuit needs at least one qubit".into()));
        }
        let mut slots: Vec<Option<usize>> = Vec::new();
        let mut actions = Vec::with_capacity(elements.len());
        for (pos, el) in elements.iter().enumerate() {
            match el {
                CircuitElement::Parameterized { generator, param_index } => {
                    check_dim(n_qubits, generator.pauli.n_qubits())?;
                    GeneratorSpec::new(generator.pauli.clone(), generator.coefficient)?;
                    if *param_index >= slots.len() {
                        slots.resize(param_index + 1, None);
                    }
                    if slots[*param_index].replace(pos).is_some() {
                        return Err(Error::InvalidCircuit(format!(
                            "parameter index {param_index} used more than once"
                        )));
                    }
                    actions.push(Some(generator.pauli.action()));
                }
                CircuitElement::Fixed(FixedGate::Controlled { control, target, .. }) => {
                    for &q in [control, target] {
                        if q >= n_qubits {
                            return Err(Error::QubitOutOfRange { qubit: q, n_qubits });
                        }
                    }
                    if control == target {
                        return Err(Error::EqualQubits(*control));
                    }
                    actions.push(None);
                }
                CircuitElement::Fixed(FixedGate::Dense { qubits, unitary }) => {
                    validate_dense_qubits(n_qubits, qubits, unitary)?;
                    actions.push(None);
                }
            }
        }
        let positions = slots
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| Error::InvalidCircuit(format!("parameter index {i} is never used")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_qubits, m_params: positions.len(), elements, positions, actions })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn m_params(&self) -> usize {
        self.m_params
    }

    pub fn elements(&self) -> &[CircuitElement] {
        &self.elements
    }

    /// Element position of parameter `mu`.
    pub fn position(&self, mu: usize) -> usize {
        self.positions[mu]
    }

    pub fn generator(&self, mu: usize) -> &GeneratorSpec {
        match &self.elements[self.positions[mu]] {
            CircuitElement::Parameterized { generator, .. } => generator,
            CircuitElement::Fixed(_) => unreachable!("position table points at a parameterized element"),
        }
    }

    /// ω = (‖Ω_1‖_∞, …, ‖Ω_M‖_∞)
    pub fn omega(&self) -> Vec<f64> {
        (0..self.m_params).map(|mu| self.generator(mu).norm()).collect()
    }

    /// ‖ω‖₂²
    pub fn omega_sq_norm(&self) -> f64 {
        self.omega().iter().map(|w| w * w).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidCircuit(e.to_string()))
    }

    pub(crate) fn check_params(&self, params: &[f64]) -> Result<()> {
        check_dim(self.m_params, params.len())
    }

    pub(crate) fn check_index(&self, mu: usize) -> Result<()> {
        if mu < self.m_params {
            Ok(())
        } else {
            Err(Error::ParamOutOfRange { index: mu, m_params: self.m_params })
        }
    }

    /// Applies element `pos` (or its inverse) in place.
    pub(crate) fn apply_element(&self, amps: &mut [C64], pos: usize, params: &[f64], inverse: bool) {
        let n = self.n_qubits;
        match &self.elements[pos] {
            CircuitElement::Parameterized { generator, param_index } => {
                let act = self.actions[pos].as_ref().expect("cached action");
                let angle = params[*param_index] * generator.coefficient;
                kernels::pauli_rotation(amps, act, if inverse { -angle } else { angle });
            }
            CircuitElement::Fixed(FixedGate::Controlled { kind, control, target }) => match kind {
                ControlledKind::Cz => kernels::cz(amps, n, *control, *target),
                ControlledKind::Cnot => kernels::cnot(amps, n, *control, *target),
            },
            CircuitElement::Fixed(FixedGate::Dense { qubits, unitary }) => {
                if inverse {
                    kernels::dense(amps, n, qubits, &unitary.matrix().adjoint());
                } else {
                    kernels::dense(amps, n, qubits, unitary.matrix());
                }
            }
        }
    }

    /// amps ← (−iΩ_μ) amps, or (iΩ_μ) amps when `adjoint`.
    pub(crate) fn apply_generator(&self, amps: &mut [C64], mu: usize, adjoint: bool) {
        let pos = self.positions[mu];
        let act = self.actions[pos].as_ref().expect("cached action");
        kernels::pauli(amps, act);
        let c = self.generator(mu).coefficient;
        let f = if adjoint { C64::new(0.0, c) } else { C64::new(0.0, -c) };
        amps.iter_mut().for_each(|a| *a *= f);
    }

    /// Runs elements `from..to` forward in place.
    pub(crate) fn run(&self, amps: &mut [C64], params: &[f64], from: usize, to: usize) {
        for pos in from..to {
            self.apply_element(amps, pos, params, false);
        }
    }
}

/// Parameter values θ in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn rotation(n: usize, qubit: usize, pauli: Pauli, coefficient: f64, param_index: usize) -> CircuitElement {
    CircuitElement::Parameterized {
        generator: GeneratorSpec {
            pauli: PauliString::single(n, qubit, pauli).expect("qubit in range"),
            coefficient,
        },
        param_index,
    }
}

/// ALT ansatz with standard rotations R_P(θ) = exp(−iθP/2).
pub fn build_alt(n_qubits: usize, depth: usize) -> ParameterizedCircuit {
    build_alt_with_coefficient(n_qubits, depth, 0.5).expect("valid ALT layout")
}

/// ALT ansatz whose rotations are exp(−iθ·c·P).
///
/// Layout: an R_y column then an R_z column on every qubit; each layer then
/// applies CZ on (0,1),(2,3),… followed by R_y and R_z columns on the qubits
/// those pairs touch, then CZ on (1,2),(3,4),… followed by R_y and R_z on
/// their qubits. A single qubit has no pairs, so its layers are one R_y and
/// one R_z. Parameters are numbered in order of appearance.
pub fn build_alt_with_coefficient(n_qubits: usize, depth: usize, coefficient: f64) -> Result<ParameterizedCircuit> {
    if n_qubits == 0 {
        return Err(Error::InvalidCircuit("ALT ansatz needs at least one qubit".into()));
    }
    let n = n_qubits;
    let mut elements = Vec::new();
    let mut next = 0usize;
    let mut columns = |elements: &mut Vec<CircuitElement>, qubits: &[usize]| {
        for pauli in [Pauli::Y, Pauli::Z] {
            for &q in qubits {
                elements.push(rotation(n, q, pauli, coefficient, next));
                next += 1;
            }
        }
    };
    let all: Vec<usize> = (0..n).collect();
    columns(&mut elements, &all);
    for _ in 0..depth {
        if n == 1 {
            columns(&mut elements, &[0]);
            continue;
        }
        for start in [0usize, 1] {
            let pairs: Vec<(usize, usize)> = (start..n.saturating_sub(1)).step_by(2).map(|a| (a, a + 1)).collect();
            if pairs.is_empty() {
                continue;
            }
            let mut touched = Vec::new();
            for &(a, b) in &pairs {
                elements.push(CircuitElement::Fixed(FixedGate::Controlled {
                    kind: ControlledKind::Cz,
                    control: a,
                    target: b,
                }));
                touched.extend([a, b]);
            }
            columns(&mut elements, &touched);
        }
    }
    ParameterizedCircuit::new(n, elements)
}

/// Parameter count of [`build_alt`], in closed form.
pub fn alt_param_count(n_qubits: usize, depth: usize) -> usize {
    let n = n_qubits;
    if n == 1 {
        return 2 + 2 * depth;
    }
    let paired = 2 * (n / 2);
    let offset_paired = 2 * ((n - 1) / 2);
    2 * n + depth * 2 * (paired + offset_paired)
}

/// U(θ)|input⟩
pub fn evaluate(circuit: &ParameterizedCircuit, params: &[f64], input: &StateVector) -> Result<StateVector> {
    circuit.check_params(params)?;
    check_dim(circuit.n_qubits(), input.n_qubits())?;
    let mut amps = input.amplitudes().to_vec();
    circuit.run(&mut amps, params, 0, circuit.elements().len());
    Ok(StateVector::from_unitary_evolution(circuit.n_qubits(), amps))
}

/// |ψ(θ)⟩ = U(θ)|0…0⟩
pub fn output_state(circuit: &ParameterizedCircuit, params: &[f64]) -> Result<StateVector> {
    evaluate(circuit, params, &StateVector::zero_state(circuit.n_qubits())?)
}

/// |∂_μψ⟩ = V_{μ+1→M}(−iΩ_μ)V_{1→μ}|0…0⟩
pub fn derivative_state(circuit: &ParameterizedCircuit, params: &[f64], mu: usize) -> Result<Vec<C64>> {
    circuit.check_params(params)?;
    circuit.check_index(mu)?;
    let mut amps = StateVector::zero_state(circuit.n_qubits())?.into_amplitudes();
    let pos = circuit.position(mu);
    circuit.run(&mut amps, params, 0, pos + 1);
    circuit.apply_generator(&mut amps, mu, false);
    circuit.run(&mut amps, params, pos + 1, circuit.elements().len());
    Ok(amps)
}

/// |∂_μ∂_νψ⟩ by inserting (−iΩ_μ) and (−iΩ_ν) after their gates.
pub fn second_derivative_state(
    circuit: &ParameterizedCircuit,
    params: &[f64],
    mu: usize,
    nu: usize,
) -> Result<Vec<C64>> {
    circuit.check_params(params)?;
    circuit.check_index(mu)?;
    circuit.check_index(nu)?;
    let (first, second) =
        if circuit.position(mu) <= circuit.position(nu) { (mu, nu) } else { (nu, mu) };
    let (p1, p2) = (circuit.position(first), circuit.position(second));
    let mut amps = StateVector::zero_state(circuit.n_qubits())?.into_amplitudes();
    circuit.run(&mut amps, params, 0, p1 + 1);
    circuit.apply_generator(&mut amps, first, false);
    circuit.run(&mut amps, params, p1 + 1, p2 + 1);
    circuit.apply_generator(&mut amps, second, false);
    circuit.run(&mut amps, params, p2 + 1, circuit.elements().len());
    Ok(amps)
}
