//! Stochastic approximate unitary compilation (STOQ).
//!
//! An annealed Metropolis walk over instruction sequences. Starting from the
//! empty sequence, each iteration raises the inverse temperature β by a fixed
//! increment and proposes either inserting a freshly drawn instruction or
//! removing one. [`EditPosition::Uniform`] places edits at a uniformly drawn
//! position; [`EditPosition::End`] restricts them to the sequence end.
//!
//! The walk caches prefix products `G_k ⋯ G_1` and target-weighted suffix
//! products `U† G_M ⋯ G_{M−i+1}`, both extended lazily and truncated at the
//! edit point on acceptance. A proposal then costs at most one matrix
//! multiply plus an `O(N²)` trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateset::{draw_targets, generate_layer, layer_unitary, GateInstance, GateKind, Layer, LayerDesign, ParamRange};
use crate::hamsim::TermStep;
use crate::linalg::{hs_inner, Matrix, UnitaryOp};
use crate::rng::SeededRng;

/// One element of a compiled sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instruction {
    Layer(Layer),
    Gate(GateInstance),
    Term(TermStep),
}

/// Generator of random instructions together with their unitaries.
pub trait InstructionSource: Sync {
    fn n_qubits(&self) -> usize;

    /// Draw one instruction and its `2^n`-dimensional unitary.
    fn draw(&self, rng: &mut SeededRng) -> (Instruction, UnitaryOp);

    /// Unitary of an instruction previously produced by this source.
    fn unitary_of(&self, instruction: &Instruction) -> Result<UnitaryOp>;
}

/// Instructions are whole random layers of a [`LayerDesign`].
#[derive(Debug, Clone)]
pub struct LayerSource {
    pub design: LayerDesign,
}

impl LayerSource {
    pub fn new(design: LayerDesign) -> Self {
        Self { design }
    }
}

impl InstructionSource for LayerSource {
    fn n_qubits(&self) -> usize {
        self.design.n_qubits
    }

    fn draw(&self, rng: &mut SeededRng) -> (Instruction, UnitaryOp) {
        let layer = generate_layer(&self.design, rng);
        let u = layer_unitary(&layer, self.design.n_qubits).expect("generated layer is valid");
        (Instruction::Layer(layer), u)
    }

    fn unitary_of(&self, instruction: &Instruction) -> Result<UnitaryOp> {
        match instruction {
            Instruction::Layer(l) => layer_unitary(l, self.design.n_qubits),
            other => Err(Error::invalid(format!("layer source cannot evaluate {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateChoice {
    pub kind: GateKind,
    pub theta: ParamRange,
    pub phi: ParamRange,
}

/// Instructions are single gates: a kind chosen uniformly from `choices`,
/// uniform parameters and uniform targets.
#[derive(Debug, Clone)]
pub struct GateSource {
    pub n_qubits: usize,
    pub choices: Vec<GateChoice>,
}

impl GateSource {
    pub fn new(n_qubits: usize, choices: Vec<GateChoice>) -> Result<Self> {
        if choices.is_empty() {
            return Err(Error::invalid("gate source needs at least one gate kind"));
        }
        if choices.iter().any(|c| c.kind.arity() > n_qubits) {
            return Err(Error::invalid("two-qubit gate requested on a one-qubit register"));
        }
        Ok(Self { n_qubits, choices })
    }

    /// `{R(θ, φ), XX(θ)}` with θ, φ ∈ [0, 2π).
    pub fn r_xx(n_qubits: usize) -> Result<Self> {
        let full = ParamRange { lo: 0.0, hi: 2.0 * std::f64::consts::PI };
        Self::new(
            n_qubits,
            vec![
                GateChoice { kind: GateKind::R, theta: full, phi: full },
                GateChoice { kind: GateKind::XX, theta: full, phi: ParamRange::fixed(0.0) },
            ],
        )
    }
}

impl InstructionSource for GateSource {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn draw(&self, rng: &mut SeededRng) -> (Instruction, UnitaryOp) {
        let choice = &self.choices[rng.index(self.choices.len())];
        let theta = choice.theta.draw(rng);
        let phi = choice.phi.draw(rng);
        let targets = draw_targets(choice.kind.arity(), self.n_qubits, rng);
        let gate = GateInstance { kind: choice.kind, targets, theta, phi };
        let u = layer_unitary(&Layer::new(vec![gate.clone()]), self.n_qubits).expect("generated gate is valid");
        (Instruction::Gate(gate), u)
    }

    fn unitary_of(&self, instruction: &Instruction) -> Result<UnitaryOp> {
        match instruction {
            Instruction::Gate(g) => layer_unitary(&Layer::new(vec![g.clone()]), self.n_qubits),
            other => Err(Error::invalid(format!("gate source cannot evaluate {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoqParams {
    pub num_iterations: usize,
    /// Increment of β per iteration.
    pub delta_beta: f64,
    /// Probability of proposing an insertion rather than a removal.
    pub p_append: f64,
    #[serde(default)]
    pub edit: EditPosition,
}

impl Default for StoqParams {
    fn default() -> Self {
        Self { num_iterations: 10_000, delta_beta: 0.01, p_append: 0.5, edit: EditPosition::Uniform }
    }
}

/// Where insertions and removals act.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditPosition {
    /// Any position, drawn uniformly.
    #[default]
    Uniform,
    /// Only the end of the sequence.
    End,
}

impl std::str::FromStr for EditPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "end" => Ok(Self::End),
            other => Err(Error::invalid(format!("unknown edit position {other:?}"))),
        }
    }
}

impl StoqParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_beta > 0.0 && self.delta_beta.is_finite()) {
            return Err(Error::invalid(format!("delta_beta must be positive, got {}", self.delta_beta)));
        }
        if !(self.p_append > 0.0 && self.p_append < 1.0) {
            return Err(Error::invalid(format!("p_append must lie in (0, 1), got {}", self.p_append)));
        }
        Ok(())
    }
}

/// Result of one compilation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledSequence {
    /// Applied in order: `instructions[0]` acts first.
    pub instructions: Vec<Instruction>,
    pub final_cost: f64,
    /// Cost of the held sequence before the first iteration and after each one.
    pub cost_trace: Vec<f64>,
    /// Seed of the stream that produced this run.
    pub seed: u64,
}

impl CompiledSequence {
    /// `1 − |Tr(V U†)|² / N²` expressed through the held cost, i.e. the
    /// process infidelity between the product and the compilation target.
    pub fn inversion_error(&self) -> f64 {
        infidelity_from_cost(self.final_cost)
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

/// `1 − (1 − cost)²`.
pub fn infidelity_from_cost(cost: f64) -> f64 {
    let overlap = 1.0 - cost;
    (1.0 - overlap * overlap).max(0.0)
}

fn check_dims(target: &UnitaryOp, candidate: &UnitaryOp) -> Result<()> {
    if target.dim() != candidate.dim() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", target.dim(), candidate.dim())));
    }
    Ok(())
}

fn cost_of(target: &Matrix, candidate: &Matrix) -> f64 {
    let dim = target.nrows() as f64;
    (1.0 - hs_inner(target, candidate).norm() / dim).clamp(0.0, 1.0)
}

/// `1 − |Tr(V†U)| / 2^n`.
pub fn cost(target: &UnitaryOp, candidate: &UnitaryOp) -> Result<f64> {
    check_dims(target, candidate)?;
    Ok(cost_of(target.matrix(), candidate.matrix()))
}

/// Metropolis rule: always accept a non-increase, otherwise accept with
/// probability `e^{−βΔ}`. Draws from `rng` only in the latter case.
pub fn accept(old_cost: f64, new_cost: f64, beta: f64, rng: &mut SeededRng) -> bool {
    let delta = new_cost - old_cost;
    if delta <= 0.0 {
        return true;
    }
    rng.uniform() < (-beta * delta).exp()
}

/// One annealed run of `params.num_iterations` iterations.
pub fn compile<S: InstructionSource + ?Sized>(
    target: &UnitaryOp,
    source: &S,
    params: &StoqParams,
    rng: &mut SeededRng,
) -> Result<CompiledSequence> {
    params.validate()?;
    let n = source.n_qubits();
    if target.dim() != 1usize << n {
        return Err(Error::invalid(format!(
            "target dimension {} does not match a {n}-qubit instruction source",
            target.dim()
        )));
    }
    let seed = rng.seed();
    let dim = target.dim();
    let goal = target.matrix();

    let mut instructions: Vec<Instruction> = Vec::new();
    let mut ops: Vec<Matrix> = Vec::new();
    let mut cache = ProductCache::new(goal);
    let mut current = cost_of(goal, &Matrix::identity(dim, dim));
    let mut trace = Vec::with_capacity(params.num_iterations + 1);
    trace.push(current);
    let mut beta = 0.0;

    for _ in 0..params.num_iterations {
        beta += params.delta_beta;
        let len = instructions.len();
        if rng.uniform() < params.p_append {
            let (instr, u) = source.draw(rng);
            let at = match params.edit {
                EditPosition::Uniform => rng.index(len + 1),
                EditPosition::End => len,
            };
            cache.extend(&ops, at, len - at);
            let right = u.matrix() * &cache.prefixes[at];
            let new_cost = overlap_cost(&cache.suffixes[len - at], &right);
            if accept(current, new_cost, beta, rng) {
                instructions.insert(at, instr);
                ops.insert(at, u.matrix().clone());
                cache.edited(at, len - at);
                if at == len {
                    cache.prefixes.push(right);
                }
                current = new_cost;
            }
        } else if len > 0 {
            let at = match params.edit {
                EditPosition::Uniform => rng.index(len),
                EditPosition::End => len - 1,
            };
            cache.extend(&ops, at, len - at - 1);
            let new_cost = overlap_cost(&cache.suffixes[len - at - 1], &cache.prefixes[at]);
            if accept(current, new_cost, beta, rng) {
                instructions.remove(at);
                ops.remove(at);
                cache.edited(at, len - at - 1);
                current = new_cost;
            }
        }
        trace.push(current);
    }

    Ok(CompiledSequence { instructions, final_cost: current, cost_trace: trace, seed })
}

/// `prefixes[k] = G_k ⋯ G_1` and `suffixes[i] = U† G_M ⋯ G_{M−i+1}`, valid
/// up to their current lengths.
struct ProductCache {
    prefixes: Vec<Matrix>,
    suffixes: Vec<Matrix>,
}

impl ProductCache {
    fn new(goal: &Matrix) -> Self {
        let dim = goal.nrows();
        Self { prefixes: vec![Matrix::identity(dim, dim)], suffixes: vec![goal.adjoint()] }
    }

    /// Make `prefixes[k]` and `suffixes[i]` available.
    fn extend(&mut self, ops: &[Matrix], k: usize, i: usize) {
        while self.prefixes.len() <= k {
            let j = self.prefixes.len();
            let next = &ops[j - 1] * &self.prefixes[j - 1];
            self.prefixes.push(next);
        }
        let m = ops.len();
        while self.suffixes.len() <= i {
            let j = self.suffixes.len();
            let next = &self.suffixes[j - 1] * &ops[m - j];
            self.suffixes.push(next);
        }
    }

    /// Keep the first `keep_prefix` operators' prefixes and the last
    /// `keep_suffix` operators' suffixes.
    fn edited(&mut self, keep_prefix: usize, keep_suffix: usize) {
        self.prefixes.truncate(keep_prefix + 1);
        self.suffixes.truncate(keep_suffix + 1);
    }
}

/// Cost of the product `left · right` where `left` carries `U†`.
fn overlap_cost(left: &Matrix, right: &Matrix) -> f64 {
    let dim = left.nrows();
    let mut tr = num_complex::Complex64::new(0.0, 0.0);
    for i in 0..dim {
        for j in 0..dim {
            tr += left[(i, j)] * right[(j, i)];
        }
    }
    (1.0 - tr.norm() / dim as f64).clamp(0.0, 1.0)
}

/// Restart [`compile`] on fresh child streams of `rng` until the inversion
/// error `1 − (1 − cost)²` reaches `epsilon_target`. Makes
/// `1 + max_restarts` attempts at most; on failure the error carries the
/// best attempt.
pub fn compile_until<S: InstructionSource + ?Sized>(
    target: &UnitaryOp,
    source: &S,
    params: &StoqParams,
    epsilon_target: f64,
    max_restarts: usize,
    rng: &mut SeededRng,
) -> Result<CompiledSequence> {
    if !(epsilon_target > 0.0 && epsilon_target <= 1.0) {
        return Err(Error::invalid(format!("epsilon_target must lie in (0, 1], got {epsilon_target}")));
    }
    let mut best: Option<CompiledSequence> = None;
    let attempts = max_restarts + 1;
    for attempt in 0..attempts {
        let mut stream = rng.derive(attempt as u64);
        let run = compile(target, source, params, &mut stream)?;
        if run.inversion_error() <= epsilon_target {
            return Ok(run);
        }
        if best.as_ref().is_none_or(|b| run.final_cost < b.final_cost) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one attempt");
    Err(Error::BudgetExceeded { attempts, best_error: best.inversion_error(), best: Box::new(best) })
}

/// Product of a compiled sequence, recomputed from scratch.
pub fn sequence_product<S: InstructionSource + ?Sized>(source: &S, instructions: &[Instruction]) -> Result<UnitaryOp> {
    let dim = 1usize << source.n_qubits();
    let mut acc = UnitaryOp::identity(dim);
    for instr in instructions {
        acc = source.unitary_of(instr)?.mul(&acc);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{embed_gate, haar_random_unitary};

    fn pauli_x_on_0() -> UnitaryOp {
        let x = crate::gateset::gate_matrix(&GateInstance::r(0, std::f64::consts::PI, 0.0));
        // −iX; the global phase does not matter for cost.
        embed_gate(&x, &[0], 2).unwrap()
    }

    #[test]
    fn cost_examples() {
        let mut rng = SeededRng::new(1);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        assert!(cost(&u, &u).unwrap().abs() < 1e-12);
        assert!(cost(&u, &u.scaled_by_phase(2.2)).unwrap().abs() < 1e-12);
        assert!((cost(&UnitaryOp::identity(4), &pauli_x_on_0()).unwrap() - 1.0).abs() < 1e-15);
        assert!(cost(&u, &UnitaryOp::identity(8)).is_err());
    }

    #[test]
    fn accept_examples() {
        let mut rng = SeededRng::new(5);
        for _ in 0..100 {
            assert!(accept(0.5, 0.4, 1e9, &mut rng));
            assert!(accept(0.1, 0.9, 0.0, &mut rng));
        }
        let trials = 100_000;
        let hits = (0..trials).filter(|_| accept(0.0, 0.5, 10.0, &mut rng)).count();
        let p = (-5.0f64).exp();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn identity_target_keeps_zero_cost() {
        let source = LayerSource::new(LayerDesign::standard(2).unwrap());
        let run = compile(&UnitaryOp::identity(4), &source, &StoqParams { num_iterations: 500, ..Default::default() }, &mut SeededRng::new(3)).unwrap();
        assert_eq!(run.cost_trace[0], 0.0);
        assert_eq!(run.cost_trace.len(), 501);
        // Greedy from the start: nothing can beat the empty sequence.
        let greedy = compile(&UnitaryOp::identity(4), &source, &StoqParams { num_iterations: 500, delta_beta: 1e9, ..Default::default() }, &mut SeededRng::new(3)).unwrap();
        assert!(greedy.final_cost <= 1e-15);
    }

    #[test]
    fn zero_iterations_trace() {
        let source = LayerSource::new(LayerDesign::standard(2).unwrap());
        let target = pauli_x_on_0();
        let run = compile(&target, &source, &StoqParams { num_iterations: 0, ..Default::default() }, &mut SeededRng::new(3)).unwrap();
        assert_eq!(run.cost_trace.len(), 1);
        assert!((run.cost_trace[0] - 1.0).abs() < 1e-15);
        assert!(run.is_empty());
    }

    #[test]
    fn trace_matches_recomputed_cost() {
        // The walk up to iteration k depends only on the first k iterations of
        // the stream, so a k-iteration run reproduces the state of the long run.
        let source = LayerSource::new(LayerDesign::standard(2).unwrap());
        let target = haar_random_unitary(2, &mut SeededRng::new(17)).unwrap();
        for edit in [EditPosition::Uniform, EditPosition::End] {
            let params = StoqParams { num_iterations: 2000, edit, ..Default::default() };
            let full = compile(&target, &source, &params, &mut SeededRng::new(8)).unwrap();
            let mut pick = SeededRng::new(99);
            for _ in 0..100 {
                let k = pick.index(params.num_iterations + 1);
                let partial = compile(&target, &source, &StoqParams { num_iterations: k, ..params }, &mut SeededRng::new(8)).unwrap();
                let product = sequence_product(&source, &partial.instructions).unwrap();
                let fresh = cost(&target, &product).unwrap();
                assert!((fresh - full.cost_trace[k]).abs() < 1e-10, "{edit:?} k={k}");
            }
            let product = sequence_product(&source, &full.instructions).unwrap();
            assert!((cost(&target, &product).unwrap() - full.final_cost).abs() < 1e-12);
        }
    }

    #[test]
    fn end_edits_only_touch_the_tail() {
        let source = LayerSource::new(LayerDesign::standard(2).unwrap());
        let target = haar_random_unitary(2, &mut SeededRng::new(5)).unwrap();
        let mut last: Vec<Instruction> = Vec::new();
        for k in 0..400 {
            let params = StoqParams { num_iterations: k, edit: EditPosition::End, ..Default::default() };
            let run = compile(&target, &source, &params, &mut SeededRng::new(6)).unwrap();
            let common = last.len().min(run.len());
            assert_eq!(&last[..common.saturating_sub(1)], &run.instructions[..common.saturating_sub(1)]);
            last = run.instructions;
        }
    }

    #[test]
    fn edit_position_parses() {
        assert_eq!("end".parse::<EditPosition>().unwrap(), EditPosition::End);
        assert_eq!("uniform".parse::<EditPosition>().unwrap(), EditPosition::Uniform);
        assert!("middle".parse::<EditPosition>().is_err());
        let p: StoqParams = serde_json::from_str(r#"{"num_iterations":1,"delta_beta":0.1,"p_append":0.5}"#).unwrap();
        assert_eq!(p.edit, EditPosition::Uniform);
    }

    #[test]
    fn huge_beta_is_greedy() {
        let source = GateSource::r_xx(2).unwrap();
        let target = haar_random_unitary(2, &mut SeededRng::new(2)).unwrap();
        let params = StoqParams { num_iterations: 3000, delta_beta: 1e6, ..Default::default() };
        let run = compile(&target, &source, &params, &mut SeededRng::new(4)).unwrap();
        for w in run.cost_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-5, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn compile_until_paths() {
        let source = LayerSource::new(LayerDesign::standard(2).unwrap());
        let target = haar_random_unitary(2, &mut SeededRng::new(12)).unwrap();
        let params = StoqParams { num_iterations: 50, ..Default::default() };
        let ok = compile_until(&target, &source, &params, 1.0, 0, &mut SeededRng::new(1)).unwrap();
        assert_eq!(ok.seed, SeededRng::new(1).child_seed(0));
        match compile_until(&target, &source, &params, 1e-9, 0, &mut SeededRng::new(1)) {
            Err(Error::BudgetExceeded { attempts, best, .. }) => {
                assert_eq!(attempts, 1);
                assert_eq!(best.cost_trace.len(), 51);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
        assert!(compile_until(&target, &source, &params, 0.0, 0, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn infidelity_matches_trace_formula() {
        let source = LayerSource::new(LayerDesign::standard(2).unwrap());
        let u = haar_random_unitary(2, &mut SeededRng::new(40)).unwrap();
        let run = compile(&u, &source, &StoqParams { num_iterations: 300, ..Default::default() }, &mut SeededRng::new(2)).unwrap();
        let v = sequence_product(&source, &run.instructions).unwrap();
        let eps = 1.0 - v.mul(&u.adjoint()).trace().norm_sqr() / 16.0;
        assert!((eps - run.inversion_error()).abs() < 1e-12);
    }
}
