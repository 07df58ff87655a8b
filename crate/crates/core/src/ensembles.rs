//! Seeded random streams and the Haar-type ensembles: Haar states and
//! unitaries, uniformly random states orthogonal to an anchor, the target
//! ensemble φ = pψ* + √(1−p²)ψ⊥, and block unitaries fixing the anchor.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sqr, CMatrix, C64, ONE, ZERO};
use crate::statevector::{DenseUnitary, StateVector};

/// ChaCha12 keystream selected by (seed, stream_id). The seed is expanded
/// with `seed_from_u64` and the stream id picks one of 2^64 independent
/// streams, so draws are identical across runs, platforms and threads.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Complex normal with independent standard normal parts.
    pub fn complex_normal(&mut self) -> C64 {
        C64::new(self.normal(), self.normal())
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Mixes a base seed with tags (SplitMix64 finalizer per step) to give
/// independent seeds for separate experiment instances.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

/// Haar-random unit vector in C^dim (any dim ≥ 1).
pub fn haar_vector(dim: usize, rng: &mut RngStream) -> Result<Vec<C64>> {
    if dim == 0 {
        return Err(Error::Domain("Haar vector dimension must be at least 1".into()));
    }
    loop {
        let mut v: Vec<C64> = (0..dim).map(|_| rng.complex_normal()).collect();
        let n = norm_sqr(&v).sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|z| *z /= n);
            return Ok(v);
        }
    }
}

/// Haar-random pure state. `dim` must be 2^N with N ≥ 1; other dimensions
/// (including the scalar case) are served by [`haar_vector`].
pub fn haar_state(dim: usize, rng: &mut RngStream) -> Result<StateVector> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::Domain(format!("Haar state dimension {dim} is not 2^N with N >= 1")));
    }
    StateVector::from_amplitudes(haar_vector(dim, rng)?)
}

/// Haar unitary: Ginibre matrix, Householder QR, then Q·diag(r_ii/|r_ii|).
pub fn haar_unitary(dim: usize, rng: &mut RngStream) -> Result<DenseUnitary> {
    if dim == 0 {
        return Err(Error::Domain("Haar unitary dimension must be at least 1".into()));
    }
    let g = CMatrix::from_fn(dim, dim, |_, _| rng.complex_normal());
    let (q, r) = g.qr();
    let phases: Vec<C64> = (0..dim)
        .map(|i| {
            let d = r[(i, i)];
            if d.norm() > 0.0 { d / d.norm() } else { ONE }
        })
        .collect();
    let u = CMatrix::from_fn(dim, dim, |i, j| q[(i, j)] * phases[j]);
    Ok(DenseUnitary::new_unchecked(u))
}

/// Householder reflection H = I − 2ww†/‖w‖² with H e^{iφ}e₀ = a, where
/// φ = arg a₀ keeps ⟨e^{iφ}e₀|a⟩ real. H is Hermitian and unitary.
#[derive(Clone, Debug)]
pub struct AnchorReflection {
    w: Vec<C64>,
    w_norm_sq: f64,
}

impl AnchorReflection {
    pub fn new(anchor: &[C64]) -> Self {
        let a0 = anchor[0];
        let phase = if a0.norm() > 0.0 { a0 / a0.norm() } else { ONE };
        let mut w: Vec<C64> = anchor.iter().map(|z| -z).collect();
        w[0] += phase;
        let w_norm_sq = norm_sqr(&w);
        Self { w, w_norm_sq }
    }

    pub fn apply(&self, v: &mut [C64]) {
        if self.w_norm_sq < 1e-300 {
            return;
        }
        let s = dot(&self.w, v) * (2.0 / self.w_norm_sq);
        for (x, wi) in v.iter_mut().zip(&self.w) {
            *x -= wi * s;
        }
    }

    pub fn matrix(&self) -> CMatrix {
        let d = self.w.len();
        let mut m = CMatrix::identity(d);
        if self.w_norm_sq >= 1e-300 {
            let scale = C64::new(2.0 / self.w_norm_sq, 0.0);
            m = &m - &CMatrix::outer(&self.w, &self.w).scale(scale);
        }
        m
    }
}

/// Haar-random unit vector orthogonal to `anchor` (raw amplitudes).
pub fn complement_vector(anchor: &[C64], rng: &mut RngStream) -> Result<Vec<C64>> {
    let d = anchor.len();
    if d < 2 {
        return Err(Error::Domain("orthogonal complement needs dimension at least 2".into()));
    }
    let h = haar_vector(d - 1, rng)?;
    let mut v = Vec::with_capacity(d);
    v.push(ZERO);
    v.extend(h);
    AnchorReflection::new(anchor).apply(&mut v);
    Ok(v)
}

pub fn complement_state(anchor: &StateVector, rng: &mut RngStream) -> Result<StateVector> {
    Ok(StateVector::from_unitary_evolution(anchor.n_qubits(), complement_vector(anchor.amplitudes(), rng)?))
}

/// Anchor state, overlap p and seed. Sample i draws from stream i.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    anchor: StateVector,
    overlap_p: f64,
    seed: u64,
}

impl EnsembleSpec {
    pub fn new(anchor: StateVector, overlap_p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&overlap_p) {
            return Err(Error::Domain(format!("overlap p must lie in [0, 1], got {overlap_p}")));
        }
        if (anchor.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Domain("anchor state must have unit norm".into()));
        }
        Ok(Self { anchor, overlap_p, seed })
    }

    pub fn anchor(&self) -> &StateVector {
        &self.anchor
    }

    pub fn overlap_p(&self) -> f64 {
        self.overlap_p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, sample: u64) -> RngStream {
        RngStream::new(self.seed, sample)
    }
}

/// φ = pψ* + √(1−p²)ψ⊥ with ψ⊥ uniform in the complement of ψ*.
pub fn sample_target(spec: &EnsembleSpec, rng: &mut RngStream) -> Result<StateVector> {
    let p = spec.overlap_p;
    let anchor = spec.anchor.amplitudes();
    if p == 1.0 {
        return Ok(spec.anchor.clone());
    }
    let q = (1.0 - p * p).sqrt();
    let perp = complement_vector(anchor, rng)?;
    let amps = anchor.iter().zip(&perp).map(|(a, b)| a * p + b * q).collect();
    Ok(StateVector::from_unitary_evolution(spec.anchor.n_qubits(), amps))
}

/// V = H(1 ⊕ U)H with U Haar on d−1 dimensions, so V fixes the anchor and
/// acts as a Haar unitary on its complement.
pub fn sample_block_unitary(anchor: &StateVector, rng: &mut RngStream) -> Result<DenseUnitary> {
    block_unitary_matrix(anchor.amplitudes(), rng).map(DenseUnitary::new_unchecked)
}

pub(crate) fn block_unitary_matrix(anchor: &[C64], rng: &mut RngStream) -> Result<CMatrix> {
    let d = anchor.len();
    if d < 2 {
        return Err(Error::Domain("block unitary needs dimension at least 2".into()));
    }
    let u = haar_unitary(d - 1, rng)?;
    let block = CMatrix::from_fn(d, d, |i, j| match (i, j) {
        (0, 0) => ONE,
        (0, _) | (_, 0) => ZERO,
        _ => u.matrix()[(i - 1, j - 1)],
    });
    let h = AnchorReflection::new(anchor).matrix();
    Ok(h.matmul(&block).matmul(&h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevector::fidelity;

    fn anchor(n: usize, seed: u64) -> StateVector {
        haar_state(1 << n, &mut RngStream::new(seed, 999)).unwrap()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| RngStream::new(7, 3).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut r1 = RngStream::new(7, 3);
        let mut r2 = RngStream::new(7, 4);
        assert_ne!(r1.next_u64(), r2.next_u64());
        assert_ne!(derive_seed(1, &[2]), derive_seed(1, &[3]));
        assert_eq!(derive_seed(1, &[2, 5]), derive_seed(1, &[2, 5]));
    }

    #[test]
    fn stream_correlation_is_small() {
        let n = 20000;
        let mut r1 = RngStream::new(11, 0);
        let mut r2 = RngStream::new(11, 1);
        let xs: Vec<(f64, f64)> = (0..n).map(|_| (r1.normal(), r2.normal())).collect();
        let corr = xs.iter().map(|(a, b)| a * b).sum::<f64>() / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn haar_state_and_vector_shapes() {
        let mut rng = RngStream::new(1, 0);
        let s = haar_state(8, &mut rng).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        let v = haar_vector(1, &mut rng).unwrap();
        assert!((v[0].norm() - 1.0).abs() < 1e-15);
        assert!(haar_state(1, &mut rng).is_err());
        assert!(haar_state(6, &mut rng).is_err());
        assert!(haar_vector(0, &mut rng).is_err());
    }

    #[test]
    fn haar_unitary_is_unitary() {
        for d in 1..=9 {
            let u = haar_unitary(d, &mut RngStream::new(2, d as u64)).unwrap();
            assert!(u.matrix().unitarity_deviation() < 1e-10);
        }
    }

    #[test]
    fn complement_is_orthogonal() {
        for n in 1..=6 {
            let a = anchor(n, n as u64);
            for i in 0..20 {
                let c = complement_state(&a, &mut RngStream::new(5, i)).unwrap();
                assert!(dot(a.amplitudes(), c.amplitudes()).norm() < 1e-12);
                assert!((c.norm() - 1.0).abs() < 1e-12);
            }
        }
        // Anchor equal to a phased basis vector: reflection degenerates to I.
        let e0 = StateVector::zero_state(2).unwrap().with_global_phase(0.4);
        let c = complement_state(&e0, &mut RngStream::new(1, 1)).unwrap();
        assert!(dot(e0.amplitudes(), c.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn target_overlap_is_exact() {
        let a = anchor(4, 3);
        let spec = EnsembleSpec::new(a.clone(), 0.8, 42).unwrap();
        for i in 0..50 {
            let phi = sample_target(&spec, &mut spec.stream(i)).unwrap();
            assert!((dot(phi.amplitudes(), a.amplitudes()).norm() - 0.8).abs() < 1e-12);
            assert!((fidelity(&phi, &a).unwrap() - 0.64).abs() < 1e-12);
            assert!((phi.norm() - 1.0).abs() < 1e-12);
        }
        let one = EnsembleSpec::new(a.clone(), 1.0, 1).unwrap();
        assert_eq!(sample_target(&one, &mut one.stream(0)).unwrap(), a);
        let zero = EnsembleSpec::new(a.clone(), 0.0, 1).unwrap();
        let phi = sample_target(&zero, &mut zero.stream(0)).unwrap();
        assert!(dot(phi.amplitudes(), a.amplitudes()).norm() < 1e-12);
        assert!(EnsembleSpec::new(a, 1.5, 0).is_err());
    }

    #[test]
    fn block_unitary_fixes_anchor() {
        for n in 1..=4 {
            let a = anchor(n, 10 + n as u64);
            let v = sample_block_unitary(&a, &mut RngStream::new(3, n as u64)).unwrap();
            assert!(v.matrix().unitarity_deviation() < 1e-10);
            let va = v.matrix().matvec(a.amplitudes());
            let err = va.iter().zip(a.amplitudes()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }
}
