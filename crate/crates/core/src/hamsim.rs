//! Ising time-evolution benchmarks: target unitaries, a per-term instruction
//! source for STOQ, randomized first-order Trotter and QDRIFT baselines, and
//! the distance of a compiled path from the ideal evolution.
//!
//! Units: coefficients are angular frequencies in rad/ms (kHz with ħ = 1)
//! and durations are in ms, so `H·t` is dimensionless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{HermitianEigen, HermitianOp, Matrix, UnitaryOp, C64};
use crate::rng::SeededRng;
use crate::stoq::{Instruction, InstructionSource};

/// Default evolution time (ms).
pub const DEFAULT_TAU: f64 = 0.5;
/// Default half-width of the STOQ step duration range, as a fraction of τ.
pub const DEFAULT_EPS_FRAC: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub n_qubits: usize,
    /// `J_{i,i+1}`, length `n − 1`.
    pub couplings: Vec<f64>,
    /// `h_i`, length `n`.
    pub fields: Vec<f64>,
}

impl HamiltonianSpec {
    pub fn new(couplings: Vec<f64>, fields: Vec<f64>) -> Result<Self> {
        let n = fields.len();
        if n < 1 || couplings.len() + 1 != n {
            return Err(Error::invalid(format!(
                "{} couplings and {} fields do not describe a chain",
                couplings.len(),
                fields.len()
            )));
        }
        if n > crate::linalg::MAX_QUBITS {
            return Err(Error::invalid(format!("{n} qubits exceeds the supported maximum")));
        }
        if couplings.iter().chain(&fields).any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite Hamiltonian coefficient"));
        }
        Ok(Self { n_qubits: n, couplings, fields })
    }

    /// Reference coefficient sets for 2, 3, 5 and 8 qubits.
    pub fn preset(n: usize) -> Result<Self> {
        let (j, h): (&[f64], &[f64]) = match n {
            2 => (&[1.27], &[1.54, 1.19]),
            3 => (&[1.81, 1.27], &[1.54, 1.19, 0.53]),
            5 => (&[1.20, 1.40, 1.60, 1.80], &[1.60, 1.30, 1.00, 0.70, 0.40]),
            8 => (
                &[1.20, 1.30, 1.40, 1.50, 1.60, 1.70, 1.80],
                &[1.40, 1.10, 0.80, 1.00, 1.20, 1.50, 1.70, 1.30],
            ),
            _ => return Err(Error::invalid(format!("no reference coefficients for {n} qubits"))),
        };
        Self::new(j.to_vec(), h.to_vec())
    }

    pub fn term_count(&self) -> usize {
        self.couplings.len() + self.fields.len()
    }
}

/// `H_k = c_k P_k` with `P_k` a Pauli string (so `P_k² = I`).
#[derive(Debug, Clone)]
pub struct HamTerm {
    pub coefficient: f64,
    pub pauli: HermitianOp,
    pub label: String,
}

impl HamTerm {
    /// `e^{i H_k t} = cos(c t) I + i sin(c t) P`.
    pub fn exp_i(&self, t: f64) -> UnitaryOp {
        let (s, c) = (self.coefficient * t).sin_cos();
        let dim = self.pauli.dim();
        let m = Matrix::identity(dim, dim) * C64::new(c, 0.0) + self.pauli.matrix() * C64::new(0.0, s);
        UnitaryOp::from_matrix_unchecked(m)
    }

    pub fn operator(&self) -> HermitianOp {
        self.pauli.scaled(self.coefficient)
    }
}

/// Full Hamiltonian plus its term decomposition (couplings first, then fields).
#[derive(Debug, Clone)]
pub struct IsingModel {
    pub spec: HamiltonianSpec,
    pub hamiltonian: HermitianOp,
    pub terms: Vec<HamTerm>,
    eigen: HermitianEigen,
}

impl IsingModel {
    pub fn n_qubits(&self) -> usize {
        self.spec.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.spec.n_qubits
    }

    /// `e^{iHt}`.
    pub fn evolve(&self, t: f64) -> UnitaryOp {
        self.eigen.exp_i(t)
    }

    /// Unitary of a single term step.
    pub fn step_unitary(&self, step: &TermStep) -> Result<UnitaryOp> {
        let term = self
            .terms
            .get(step.term_index)
            .ok_or_else(|| Error::invalid(format!("term index {} out of range", step.term_index)))?;
        Ok(term.exp_i(step.duration))
    }

    /// Prefix products `G_m ⋯ G_1` for `m = 0..=M`.
    pub fn prefix_products(&self, steps: &[TermStep]) -> Result<Vec<UnitaryOp>> {
        let mut out = Vec::with_capacity(steps.len() + 1);
        let mut acc = UnitaryOp::identity(self.dim());
        out.push(acc.clone());
        for s in steps {
            acc = self.step_unitary(s)?.mul(&acc);
            out.push(acc.clone());
        }
        Ok(out)
    }

    pub fn product(&self, steps: &[TermStep]) -> Result<UnitaryOp> {
        let mut acc = UnitaryOp::identity(self.dim());
        for s in steps {
            acc = self.step_unitary(s)?.mul(&acc);
        }
        Ok(acc)
    }
}

fn pauli_string(n: usize, ops: &[(usize, char)]) -> HermitianOp {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let mut m = Matrix::from_element(1, 1, one);
    for q in 0..n {
        let p = match ops.iter().find(|(t, _)| *t == q).map(|(_, c)| *c) {
            Some('X') => Matrix::from_row_slice(2, 2, &[z, one, one, z]),
            Some('Y') => Matrix::from_row_slice(2, 2, &[z, -i, i, z]),
            _ => Matrix::identity(2, 2),
        };
        m = m.kronecker(&p);
    }
    HermitianOp::new(m).expect("Pauli strings are Hermitian")
}

/// `H = Σ J_{i,i+1} X_i X_{i+1} + Σ h_i Y_i`.
pub fn build_ising(spec: &HamiltonianSpec) -> IsingModel {
    let n = spec.n_qubits;
    let mut terms = Vec::with_capacity(spec.term_count());
    for (i, &j) in spec.couplings.iter().enumerate() {
        terms.push(HamTerm {
            coefficient: j,
            pauli: pauli_string(n, &[(i, 'X'), (i + 1, 'X')]),
            label: format!("XX{}{}", i, i + 1),
        });
    }
    for (i, &h) in spec.fields.iter().enumerate() {
        terms.push(HamTerm { coefficient: h, pauli: pauli_string(n, &[(i, 'Y')]), label: format!("Y{i}") });
    }
    let dim = 1usize << n;
    let mut total = Matrix::zeros(dim, dim);
    for t in &terms {
        total += t.pauli.matrix() * C64::new(t.coefficient, 0.0);
    }
    let hamiltonian = HermitianOp::new(total).expect("sum of Hermitian terms");
    let eigen = hamiltonian.eigen();
    IsingModel { spec: spec.clone(), hamiltonian, terms, eigen }
}

/// `e^{iHτ}`.
pub fn time_evolution_target(model: &IsingModel, tau: f64) -> UnitaryOp {
    model.evolve(tau)
}

/// Evolution under term `term_index` for `duration` ms (may be negative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermStep {
    pub term_index: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Stoq,
    Trotter,
    Qdrift,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Stoq => "stoq",
            Provenance::Trotter => "trotter",
            Provenance::Qdrift => "qdrift",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledHamSequence {
    pub steps: Vec<TermStep>,
    /// Σ|t| over steps (ms).
    pub exec_time: f64,
    pub provenance: Provenance,
}

impl CompiledHamSequence {
    pub fn new(steps: Vec<TermStep>, provenance: Provenance) -> Self {
        let exec_time = steps.iter().map(|s| s.duration.abs()).sum();
        Self { steps, exec_time, provenance }
    }

    /// Convert a STOQ result built from a [`TermSource`].
    pub fn from_instructions(instructions: &[Instruction]) -> Result<Self> {
        let steps = instructions
            .iter()
            .map(|i| match i {
                Instruction::Term(t) => Ok(*t),
                other => Err(Error::invalid(format!("not a term step: {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(steps, Provenance::Stoq))
    }

    pub fn final_cost(&self, model: &IsingModel, tau: f64) -> Result<f64> {
        crate::stoq::cost(&model.evolve(tau), &model.product(&self.steps)?)
    }
}

/// Randomized first-order product formula: `steps` slices, each applying
/// every term for `τ/steps` in an independently shuffled order.
pub fn trotter_randomized(model: &IsingModel, tau: f64, steps: usize, rng: &mut SeededRng) -> Result<CompiledHamSequence> {
    if steps == 0 {
        return Err(Error::invalid("Trotter step count must be at least 1"));
    }
    let dt = tau / steps as f64;
    let k = model.terms.len();
    let mut out = Vec::with_capacity(k * steps);
    for _ in 0..steps {
        let mut order: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            let j = rng.index(i + 1);
            order.swap(i, j);
        }
        out.extend(order.into_iter().map(|term_index| TermStep { term_index, duration: dt }));
    }
    Ok(CompiledHamSequence::new(out, Provenance::Trotter))
}

/// QDRIFT: each of `reps` steps picks term `k` with probability `|c_k|/Λ₁`
/// and applies `e^{i sign(c_k) (Λ₁τ/reps) P_k}`. Expressed in the term's own
/// generator `H_k = c_k P_k` that is a duration `Λ₁τ / (reps·|c_k|)`, which
/// is what `exec_time` sums.
pub fn qdrift(model: &IsingModel, tau: f64, reps: usize, rng: &mut SeededRng) -> Result<CompiledHamSequence> {
    if reps == 0 {
        return Err(Error::invalid("QDRIFT repetition count must be at least 1"));
    }
    let weights: Vec<f64> = model.terms.iter().map(|t| t.coefficient.abs()).collect();
    let lambda1: f64 = weights.iter().sum();
    if lambda1 <= 0.0 {
        return Err(Error::invalid("Hamiltonian has no non-zero terms"));
    }
    let mut steps = Vec::with_capacity(reps);
    for _ in 0..reps {
        let u = rng.uniform() * lambda1;
        let mut acc = 0.0;
        let mut k = weights.len() - 1;
        for (idx, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc && *w > 0.0 {
                k = idx;
                break;
            }
        }
        let duration = lambda1 * tau / (reps as f64 * weights[k]);
        steps.push(TermStep { term_index: k, duration });
    }
    Ok(CompiledHamSequence::new(steps, Provenance::Qdrift))
}

/// STOQ instructions: a uniformly chosen term evolved for a duration drawn
/// uniformly from `[−eps_frac·τ, eps_frac·τ]`.
#[derive(Debug, Clone)]
pub struct TermSource {
    pub model: IsingModel,
    pub tau: f64,
    pub eps_frac: f64,
}

pub fn term_instruction_source(model: &IsingModel, tau: f64, eps_frac: f64) -> Result<TermSource> {
    if !(eps_frac > 0.0 && eps_frac <= 1.0) {
        return Err(Error::invalid(format!("eps_frac must lie in (0, 1], got {eps_frac}")));
    }
    Ok(TermSource { model: model.clone(), tau, eps_frac })
}

impl InstructionSource for TermSource {
    fn n_qubits(&self) -> usize {
        self.model.n_qubits()
    }

    fn draw(&self, rng: &mut SeededRng) -> (Instruction, UnitaryOp) {
        let term_index = rng.index(self.model.terms.len());
        let half = self.eps_frac * self.tau;
        let duration = rng.uniform_in(-half, half);
        let step = TermStep { term_index, duration };
        (Instruction::Term(step), self.model.terms[term_index].exp_i(duration))
    }

    fn unitary_of(&self, instruction: &Instruction) -> Result<UnitaryOp> {
        match instruction {
            Instruction::Term(step) => self.model.step_unitary(step),
            other => Err(Error::invalid(format!("term source cannot evaluate {other:?}"))),
        }
    }
}

const PATH_GRID: usize = 1001;

/// Distance of one operator from the ideal path `{e^{iHt} : t ∈ [0, τ]}`,
/// reported as `1 − max_t |Tr(P† e^{iHt})| / N` (0 means on the path),
/// together with the minimizing `t`.
pub fn distance_to_path(model: &IsingModel, tau: f64, product: &UnitaryOp) -> (f64, f64) {
    let eig = &model.eigen;
    let dim = model.dim();
    // Tr(P† V D(t) V†) = Σ_j e^{iλ_j t} conj((V† P V)_jj).
    let rotated = eig.vectors.adjoint() * product.matrix() * &eig.vectors;
    let weights: Vec<C64> = (0..dim).map(|j| rotated[(j, j)].conj()).collect();
    let overlap = |t: f64| -> f64 {
        weights
            .iter()
            .zip(&eig.values)
            .map(|(w, lam)| w * C64::from_polar(1.0, lam * t))
            .sum::<C64>()
            .norm()
    };
    let (lo, hi) = if tau >= 0.0 { (0.0, tau) } else { (tau, 0.0) };
    let step = (hi - lo) / (PATH_GRID - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..PATH_GRID {
        let v = overlap(lo + step * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    let (t_star, refined) = golden_max(&overlap, a, b, 1e-13);
    let (t_best, v_best) = if refined > best { (t_star, refined) } else { (lo + step * best_i as f64, best) };
    ((1.0 - v_best / dim as f64).max(0.0), t_best)
}

/// Golden-section search for a maximum of `f` on `[a, b]`.
pub(crate) fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// `d_m` for every prefix `m = 0..=M` of the sequence (entry 0 is the empty
/// prefix).
pub fn path_distance(seq: &CompiledHamSequence, model: &IsingModel, tau: f64) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let prefixes = model.prefix_products(&seq.steps)?;
    Ok(prefixes.par_iter().map(|p| distance_to_path(model, tau, p).0).collect())
}

/// Mean and maximum of `d_m` over `m = 1..=M`.
pub fn path_summary(distances: &[f64]) -> (f64, f64) {
    let tail = if distances.len() > 1 { &distances[1..] } else { distances };
    if tail.is_empty() {
        return (0.0, 0.0);
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let max = tail.iter().copied().fold(0.0, f64::max);
    (mean, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stoq::cost;

    fn two_qubit() -> IsingModel {
        build_ising(&HamiltonianSpec::preset(2).unwrap())
    }

    #[test]
    fn ising_matrix_elements() {
        let m = two_qubit();
        let h = m.hamiltonian.matrix();
        assert!((h[(3, 0)] - C64::new(1.27, 0.0)).norm() < 1e-15);
        assert!(h.trace().norm() < 1e-14);
        assert_eq!(m.terms.len(), 3);
        let sum = m.terms.iter().fold(Matrix::zeros(4, 4), |acc, t| acc + t.operator().matrix());
        assert!((sum - h).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn spec_validation() {
        assert!(HamiltonianSpec::new(vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(HamiltonianSpec::preset(4).is_err());
        assert_eq!(HamiltonianSpec::preset(5).unwrap().term_count(), 9);
    }

    #[test]
    fn target_basics() {
        let m = two_qubit();
        assert!(time_evolution_target(&m, 0.0).max_abs_diff(&UnitaryOp::identity(4)) < 1e-12);
        assert!(time_evolution_target(&m, 0.5).unitarity_error() < 1e-9);
    }

    #[test]
    fn target_matches_fine_product_formula() {
        let m = two_qubit();
        let steps = 1000;
        let dt = DEFAULT_TAU / steps as f64;
        let mut acc = UnitaryOp::identity(4);
        for _ in 0..steps {
            for t in &m.terms {
                acc = t.exp_i(dt).mul(&acc);
            }
        }
        assert!(cost(&time_evolution_target(&m, DEFAULT_TAU), &acc).unwrap() <= 1e-3);
    }

    #[test]
    fn term_exponential_matches_eigen_route() {
        let m = two_qubit();
        for t in &m.terms {
            let direct = t.exp_i(0.37);
            let via_eig = crate::linalg::exp_i_hermitian(&t.operator(), 0.37);
            assert!(direct.max_abs_diff(&via_eig) < 1e-12);
        }
    }

    fn single_term() -> IsingModel {
        build_ising(&HamiltonianSpec::new(vec![], vec![1.3]).unwrap())
    }

    #[test]
    fn single_term_baselines_are_exact() {
        let m = single_term();
        let target = time_evolution_target(&m, DEFAULT_TAU);
        for steps in [1, 3, 10] {
            let seq = trotter_randomized(&m, DEFAULT_TAU, steps, &mut SeededRng::new(1)).unwrap();
            assert!(cost(&target, &m.product(&seq.steps).unwrap()).unwrap() <= 1e-10);
        }
        let seq = qdrift(&m, DEFAULT_TAU, 100, &mut SeededRng::new(1)).unwrap();
        assert!(seq.steps.iter().all(|s| s.term_index == 0));
        assert!(cost(&target, &m.product(&seq.steps).unwrap()).unwrap() <= 1e-10);
    }

    #[test]
    fn trotter_exec_time() {
        let m = build_ising(&HamiltonianSpec::preset(5).unwrap());
        let seq = trotter_randomized(&m, DEFAULT_TAU, 10, &mut SeededRng::new(2)).unwrap();
        assert!((seq.exec_time - 4.5).abs() < 1e-12);
        assert_eq!(seq.steps.len(), 90);
        for slice in seq.steps.chunks(9) {
            let mut idx: Vec<usize> = slice.iter().map(|s| s.term_index).collect();
            idx.sort();
            assert_eq!(idx, (0..9).collect::<Vec<_>>());
        }
    }

    #[test]
    fn qdrift_sampling_law() {
        let m = two_qubit();
        let reps = 20_000;
        let seq = qdrift(&m, DEFAULT_TAU, reps, &mut SeededRng::new(6)).unwrap();
        let lambda1: f64 = m.terms.iter().map(|t| t.coefficient.abs()).sum();
        for (k, t) in m.terms.iter().enumerate() {
            let p = t.coefficient.abs() / lambda1;
            let count = seq.steps.iter().filter(|s| s.term_index == k).count() as f64;
            let sd = (reps as f64 * p * (1.0 - p)).sqrt();
            assert!((count - reps as f64 * p).abs() < 3.0 * sd);
        }
        let expected: f64 = seq.steps.iter().map(|s| s.duration.abs()).sum();
        assert!((seq.exec_time - expected).abs() < 1e-12);
    }

    #[test]
    fn term_source_ranges() {
        let m = two_qubit();
        let src = term_instruction_source(&m, DEFAULT_TAU, DEFAULT_EPS_FRAC).unwrap();
        let mut rng = SeededRng::new(3);
        let draws = 100_000;
        let mut hist = [0usize; 3];
        for _ in 0..draws {
            let (instr, u) = src.draw(&mut rng);
            let Instruction::Term(step) = instr else { panic!() };
            assert!(step.duration.abs() <= 0.1 + 1e-15);
            hist[step.term_index] += 1;
            if hist.iter().sum::<usize>() < 200 {
                assert!(u.unitarity_error() < 1e-10);
            }
        }
        // KS on a discrete uniform reduces to the max CDF gap.
        let mut cdf = 0.0;
        let mut d: f64 = 0.0;
        for (k, c) in hist.iter().enumerate() {
            cdf += *c as f64 / draws as f64;
            d = d.max((cdf - (k + 1) as f64 / 3.0).abs());
        }
        assert!(d < 1.628 / (draws as f64).sqrt());
        assert!(term_instruction_source(&m, DEFAULT_TAU, 0.0).is_err());
    }

    #[test]
    fn ideal_path_points_have_zero_distance() {
        let m = two_qubit();
        for t in [0.0, 0.0005, 0.1234, 0.25, 0.4999, 0.5] {
            let (d, _) = distance_to_path(&m, DEFAULT_TAU, &m.evolve(t));
            assert!(d <= 1e-9, "t={t}: {d}");
        }
        let empty = CompiledHamSequence::new(vec![], Provenance::Stoq);
        assert_eq!(path_distance(&empty, &m, DEFAULT_TAU).unwrap(), vec![0.0]);
    }

    #[test]
    fn trotter_converges_with_steps() {
        let m = two_qubit();
        let target = time_evolution_target(&m, DEFAULT_TAU);
        let mean_cost = |steps: usize| {
            (0..16)
                .map(|s| {
                    let seq = trotter_randomized(&m, DEFAULT_TAU, steps, &mut SeededRng::new(s)).unwrap();
                    cost(&target, &m.product(&seq.steps).unwrap()).unwrap()
                })
                .sum::<f64>()
                / 16.0
        };
        assert!(mean_cost(20) <= mean_cost(10));
        assert!(mean_cost(10) <= mean_cost(5));
    }

    #[test]
    fn qdrift_converges_with_reps() {
        let m = two_qubit();
        let target = time_evolution_target(&m, DEFAULT_TAU);
        let mean_cost = |reps: usize| {
            (0..16)
                .map(|s| {
                    let seq = qdrift(&m, DEFAULT_TAU, reps, &mut SeededRng::new(100 + s)).unwrap();
                    cost(&target, &m.product(&seq.steps).unwrap()).unwrap()
                })
                .sum::<f64>()
                / 16.0
        };
        let (a, b, c) = (mean_cost(10), mean_cost(100), mean_cost(1000));
        assert!(a > b && b > c, "{a} {b} {c}");
        assert!(c < 0.05);
    }
}
