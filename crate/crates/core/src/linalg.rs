//! Dense complex linear algebra and pure-state primitives for up to ten qubits.
//!
//! Basis convention: qubit 0 is the most-significant bit of a computational
//! basis index, so on `n` qubits qubit `q` is bit `n - 1 - q`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;

/// Elementwise tolerance for unitarity / Hermiticity on construction.
pub const CONSTRUCT_TOL: f64 = 1e-10;
/// Tolerance for derived products (exponentials, long gate products).
pub const DERIVED_TOL: f64 = 1e-9;
/// Largest supported register.
pub const MAX_QUBITS: usize = 10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

fn qubits_for_dim(dim: usize) -> Option<usize> {
    (dim.is_power_of_two() && dim >= 2).then(|| dim.trailing_zeros() as usize)
}

/// Max elementwise deviation of `m·m†` from the identity.
pub fn unitarity_error(m: &Matrix) -> f64 {
    let prod = m * m.adjoint();
    let mut worst = 0.0f64;
    for ((r, c), z) in prod.iter().enumerate().map(|(k, z)| ((k % m.nrows(), k / m.nrows()), z)) {
        let target = if r == c { ONE } else { ZERO };
        worst = worst.max((z - target).norm());
    }
    worst
}

/// A `2^n × 2^n` unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOp {
    m: Matrix,
}

impl UnitaryOp {
    /// Validated constructor: square, power-of-two dimension and unitary
    /// within [`CONSTRUCT_TOL`].
    pub fn new(m: Matrix) -> Result<Self> {
        Self::with_tolerance(m, CONSTRUCT_TOL)
    }

    pub fn with_tolerance(m: Matrix, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
        }
        if qubits_for_dim(m.nrows()).is_none() {
            return Err(Error::invalid(format!("dimension {} is not a power of two", m.nrows())));
        }
        let err = unitarity_error(&m);
        if err.is_nan() || err > tol {
            return Err(Error::invalid(format!("matrix is not unitary (max |UU†-I| = {err:.3e})")));
        }
        Ok(Self { m })
    }

    /// Wraps a matrix the caller already knows to be unitary (a product of
    /// unitaries, an exponential of a Hermitian, ...).
    pub(crate) fn from_matrix_unchecked(m: Matrix) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self { m }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: Matrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    /// Operator product `self · rhs` (`rhs` acts first).
    pub fn mul(&self, rhs: &UnitaryOp) -> Self {
        Self { m: &self.m * &rhs.m }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn scaled_by_phase(&self, gamma: f64) -> Self {
        Self { m: &self.m * C64::from_polar(1.0, gamma) }
    }

    pub fn unitarity_error(&self) -> f64 {
        unitarity_error(&self.m)
    }

    /// Maximum elementwise distance to another operator of the same size.
    pub fn max_abs_diff(&self, other: &UnitaryOp) -> f64 {
        self.m.iter().zip(other.m.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, state: &PureState) -> PureState {
        PureState { amps: &self.m * &state.amps }
    }
}

/// A normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: DVector<C64>,
}

impl PureState {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if qubits_for_dim(amps.len()).is_none() {
            return Err(Error::invalid(format!("state length {} is not a power of two", amps.len())));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > CONSTRUCT_TOL {
            return Err(Error::invalid(format!("state norm² is {norm}, expected 1")));
        }
        Ok(Self { amps: DVector::from_vec(amps) })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if qubits_for_dim(dim).is_none() || index >= dim {
            return Err(Error::invalid(format!("basis index {index} invalid for dimension {dim}")));
        }
        let mut amps = DVector::from_element(dim, ZERO);
        amps[index] = ONE;
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        self.amps.as_mut_slice()
    }
}

/// Probability vector over computational basis outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    /// Entries down to `-1e-12` are clamped to zero; the total must be 1
    /// within [`CONSTRUCT_TOL`].
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if qubits_for_dim(probs.len()).is_none() {
            return Err(Error::invalid(format!("distribution length {} is not a power of two", probs.len())));
        }
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -1e-12 {
                return Err(Error::invalid(format!("invalid probability {p}")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > CONSTRUCT_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(dim: usize) -> Self {
        Self { probs: vec![1.0 / dim as f64; dim] }
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize) -> f64 {
        self.probs[x]
    }

    /// `(1 − λ)·self + λ·uniform`.
    pub fn depolarized(&self, lambda: f64) -> Self {
        let n = self.dim() as f64;
        Self {
            probs: self.probs.iter().map(|p| (1.0 - lambda) * p + lambda / n).collect(),
        }
    }

    /// Σ_x P(x)^k.
    pub fn moment(&self, k: i32) -> f64 {
        self.probs.iter().map(|p| p.powi(k)).sum()
    }
}

/// A Hermitian operator, such as a Hamiltonian or one of its terms.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOp {
    m: Matrix,
}

impl HermitianOp {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() || qubits_for_dim(m.nrows()).is_none() {
            return Err(Error::invalid("Hermitian operator must be square with power-of-two dimension"));
        }
        let err = m.iter().zip(m.adjoint().iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if err > CONSTRUCT_TOL {
            return Err(Error::invalid(format!("operator is not Hermitian (max |H-H†| = {err:.3e})")));
        }
        Ok(Self { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { m: &self.m * C64::new(s, 0.0) }
    }

    pub fn eigen(&self) -> HermitianEigen {
        let eig = self.m.clone().symmetric_eigen();
        HermitianEigen {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }
}

impl std::ops::Add for &HermitianOp {
    type Output = HermitianOp;

    fn add(self, rhs: &HermitianOp) -> HermitianOp {
        HermitianOp { m: &self.m + &rhs.m }
    }
}

/// `H = V diag(values) V†`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl HermitianEigen {
    /// `e^{iHt}`.
    pub fn exp_i(&self, t: f64) -> UnitaryOp {
        let dim = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, lam) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, lam * t);
            for i in 0..dim {
                scaled[(i, j)] *= phase;
            }
        }
        UnitaryOp::from_matrix_unchecked(scaled * self.vectors.adjoint())
    }
}

/// `e^{iHt}` by Hermitian eigendecomposition.
pub fn exp_i_hermitian(h: &HermitianOp, t: f64) -> UnitaryOp {
    h.eigen().exp_i(t)
}

fn check_targets(targets: &[usize], n: usize) -> Result<()> {
    if targets.is_empty() || targets.len() > 2 {
        return Err(Error::invalid(format!("expected 1 or 2 targets, got {}", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= n) {
        return Err(Error::invalid(format!("target qubit {t} out of range for {n} qubits")));
    }
    if targets.len() == 2 && targets[0] == targets[1] {
        return Err(Error::invalid(format!("duplicate target qubit {}", targets[0])));
    }
    Ok(())
}

/// Small dense gate copied out of a `Matrix` so the inner kernels stay
/// allocation-free.
#[derive(Clone, Copy)]
pub(crate) enum LocalGate {
    One([[C64; 2]; 2]),
    Two([[C64; 4]; 4]),
}

impl LocalGate {
    pub(crate) fn from_matrix(m: &Matrix) -> Self {
        match m.nrows() {
            2 => LocalGate::One(std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))),
            4 => LocalGate::Two(std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))),
            d => panic!("local gates are 2x2 or 4x4, got {d}x{d}"),
        }
    }
}

/// `v ← G v` for a 1- or 2-qubit gate on `targets` of an `n`-qubit vector.
/// Targets must already be validated.
pub(crate) fn apply_local(v: &mut [C64], gate: &LocalGate, targets: &[usize], n: usize) {
    let dim = v.len();
    match gate {
        LocalGate::One(g) => {
            let bit = 1usize << (n - 1 - targets[0]);
            for i in 0..dim {
                if i & bit != 0 {
                    continue;
                }
                let j = i | bit;
                let (a, b) = (v[i], v[j]);
                v[i] = g[0][0] * a + g[0][1] * b;
                v[j] = g[1][0] * a + g[1][1] * b;
            }
        }
        LocalGate::Two(g) => {
            let hi = 1usize << (n - 1 - targets[0]);
            let lo = 1usize << (n - 1 - targets[1]);
            for i in 0..dim {
                if i & (hi | lo) != 0 {
                    continue;
                }
                let idx = [i, i | lo, i | hi, i | hi | lo];
                let old = [v[idx[0]], v[idx[1]], v[idx[2]], v[idx[3]]];
                for (r, &k) in idx.iter().enumerate() {
                    v[k] = g[r][0] * old[0] + g[r][1] * old[1] + g[r][2] * old[2] + g[r][3] * old[3];
                }
            }
        }
    }
}

/// `M ← G M` column by column.
pub(crate) fn apply_local_left(m: &mut Matrix, gate: &LocalGate, targets: &[usize], n: usize) {
    let dim = m.nrows();
    for col in m.as_mut_slice().chunks_mut(dim) {
        apply_local(col, gate, targets, n);
    }
}

/// Lift a 1- or 2-qubit gate to the full `n`-qubit space. Target order is
/// significant: `targets[0]` is the more significant qubit of the gate's
/// own basis.
pub fn embed_gate(gate: &UnitaryOp, targets: &[usize], n: usize) -> Result<UnitaryOp> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::invalid(format!("qubit count {n} outside 1..={MAX_QUBITS}")));
    }
    check_targets(targets, n)?;
    if gate.dim() != 1 << targets.len() {
        return Err(Error::invalid(format!(
            "gate of dimension {} does not match {} target(s)",
            gate.dim(),
            targets.len()
        )));
    }
    let local = LocalGate::from_matrix(gate.matrix());
    let dim = 1usize << n;
    let mut m = Matrix::identity(dim, dim);
    apply_local_left(&mut m, &local, targets, n);
    Ok(UnitaryOp::from_matrix_unchecked(m))
}

pub(crate) fn validate_targets(targets: &[usize], n: usize) -> Result<()> {
    check_targets(targets, n)
}

/// Raw `Tr(V†U)` without the absolute value.
pub(crate) fn hs_inner(u: &Matrix, v: &Matrix) -> C64 {
    u.iter().zip(v.iter()).map(|(a, b)| b.conj() * a).sum()
}

/// `|Tr(V†U)|`, in `[0, dim]`.
pub fn hs_distance(u: &UnitaryOp, v: &UnitaryOp) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", u.dim(), v.dim())));
    }
    Ok(hs_inner(&u.m, &v.m).norm())
}

/// `P(x) = |⟨x|ψ⟩|²`.
pub fn measurement_probs(state: &PureState) -> OutcomeDistribution {
    let mut probs: Vec<f64> = state.amps.iter().map(|a| a.norm_sqr()).collect();
    // Renormalize away rounding drift from long gate products.
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        probs.iter_mut().for_each(|p| *p /= total);
    }
    OutcomeDistribution { probs }
}

/// Draw `shots` independent outcomes, in shot order.
pub fn sample_outcomes(dist: &OutcomeDistribution, shots: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(dist.dim());
    let mut acc = 0.0;
    for p in dist.probs() {
        acc += p;
        cdf.push(acc);
    }
    let last_nonzero = dist.probs().iter().rposition(|&p| p > 0.0).unwrap_or(0);
    (0..shots)
        .map(|_| {
            let u = rng.uniform() * acc;
            cdf.partition_point(|&c| c <= u).min(last_nonzero)
        })
        .collect()
}

/// Multinomial counts for `shots` draws from `dist`.
pub fn sample_counts(dist: &OutcomeDistribution, shots: usize, rng: &mut SeededRng) -> Vec<u64> {
    counts_from_outcomes(&sample_outcomes(dist, shots, rng), dist.dim())
}

pub fn counts_from_outcomes(outcomes: &[usize], dim: usize) -> Vec<u64> {
    let mut counts = vec![0u64; dim];
    for &x in outcomes {
        counts[x] += 1;
    }
    counts
}

/// Haar-distributed unitary on `n` qubits: QR of a complex Ginibre matrix
/// with the phases of `R`'s diagonal folded back into `Q`.
pub fn haar_random_unitary(n: usize, rng: &mut SeededRng) -> Result<UnitaryOp> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::invalid(format!("qubit count {n} outside 1..={MAX_QUBITS}")));
    }
    let dim = 1usize << n;
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = Matrix::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * scale, im * scale)
    });
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Ok(UnitaryOp::from_matrix_unchecked(q))
}
