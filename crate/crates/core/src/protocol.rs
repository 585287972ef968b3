//! RAV and XEB sequence generation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateset::{generate_layer, layers_unitary, Layer, LayerDesign};
use crate::rng::SeededRng;
use crate::stoq::{compile_until, Instruction, LayerSource, StoqParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SequenceKind {
    #[serde(rename = "rav")]
    Rav,
    #[serde(rename = "xeb")]
    Xeb,
}

impl SequenceKind {
    pub fn name(self) -> &'static str {
        match self {
            SequenceKind::Rav => "rav",
            SequenceKind::Xeb => "xeb",
        }
    }
}

impl std::str::FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rav" => Ok(SequenceKind::Rav),
            "xeb" => Ok(SequenceKind::Xeb),
            _ => Err(Error::invalid(format!("unknown sequence kind '{s}'"))),
        }
    }
}

impl std::fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSequence {
    pub kind: SequenceKind,
    pub n_qubits: usize,
    pub layers: Vec<Layer>,
    /// RAV only.
    pub m0: Option<usize>,
    /// RAV only.
    pub m_inv: Option<usize>,
    /// RAV only: `1 − |Tr(V U)|² / N²`.
    pub epsilon: Option<f64>,
    pub seed: u64,
}

impl VerificationSequence {
    /// Total layer count `m`.
    pub fn m(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            l.validate(self.n_qubits)?;
        }
        match self.kind {
            SequenceKind::Rav => {
                let (Some(m0), Some(m_inv), Some(eps)) = (self.m0, self.m_inv, self.epsilon) else {
                    return Err(Error::invalid("RAV sequence is missing m0, m_inv or epsilon"));
                };
                if m0 + m_inv != self.layers.len() {
                    return Err(Error::invalid(format!(
                        "m0 + m_inv = {} but the sequence has {} layers",
                        m0 + m_inv,
                        self.layers.len()
                    )));
                }
                if !(0.0..=1.0).contains(&eps) {
                    return Err(Error::invalid(format!("epsilon {eps} outside [0, 1]")));
                }
            }
            SequenceKind::Xeb => {
                if self.m0.is_some() || self.m_inv.is_some() || self.epsilon.is_some() {
                    return Err(Error::invalid("XEB sequence carries RAV-only fields"));
                }
            }
        }
        Ok(())
    }

    /// `1 − |Tr(V U)|² / N²` recomputed from the stored layers (RAV only).
    pub fn recompute_epsilon(&self) -> Result<f64> {
        let (Some(m0), SequenceKind::Rav) = (self.m0, self.kind) else {
            return Err(Error::invalid("inversion error is defined for RAV sequences only"));
        };
        if m0 > self.layers.len() {
            return Err(Error::invalid("m0 exceeds the layer count"));
        }
        let u = layers_unitary(&self.layers[..m0], self.n_qubits)?;
        let v = layers_unitary(&self.layers[m0..], self.n_qubits)?;
        Ok(inversion_error(&u, &v))
    }
}

fn inversion_error(u: &crate::linalg::UnitaryOp, v: &crate::linalg::UnitaryOp) -> f64 {
    let n = u.dim() as f64;
    (1.0 - v.mul(u).trace().norm_sqr() / (n * n)).clamp(0.0, 1.0)
}

fn default_max_restarts() -> usize {
    25
}

/// Annealing defaults for inversion compiles: `Δβ = 0.5` instead of the
/// generic `0.01`.
pub fn default_rav_stoq() -> StoqParams {
    StoqParams { delta_beta: 0.5, ..StoqParams::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub design: LayerDesign,
    pub m0_range: Vec<usize>,
    pub epsilon_target: f64,
    pub sequences_per_plan: usize,
    pub seed: u64,
    #[serde(default = "default_rav_stoq")]
    pub stoq: StoqParams,
    #[serde(default = "default_max_restarts")]
    pub max_restarts: usize,
}

impl ExperimentPlan {
    pub fn new(design: LayerDesign, m0_range: Vec<usize>, epsilon_target: f64, sequences_per_plan: usize, seed: u64) -> Result<Self> {
        let plan = Self {
            design,
            m0_range,
            epsilon_target,
            sequences_per_plan,
            seed,
            stoq: default_rav_stoq(),
            max_restarts: default_max_restarts(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.m0_range.is_empty() || self.m0_range.contains(&0) {
            return Err(Error::invalid("m0_range must be non-empty with positive entries"));
        }
        if !(self.epsilon_target > 0.0 && self.epsilon_target <= 1.0) {
            return Err(Error::invalid(format!("epsilon_target {} outside (0, 1]", self.epsilon_target)));
        }
        if self.sequences_per_plan == 0 {
            return Err(Error::invalid("sequences_per_plan must be at least 1"));
        }
        self.stoq.validate()
    }

    /// One `m0` per pair. With `S` pairs and `L` range entries: `S ≥ L` uses
    /// every entry once and hands the remaining `S − L` out round-robin;
    /// `S < L` takes `S` linearly spaced entries.
    pub fn m0_schedule(&self) -> Vec<usize> {
        let s = self.sequences_per_plan;
        let l = self.m0_range.len();
        if s >= l {
            (0..s).map(|i| self.m0_range[i % l]).collect()
        } else if s == 1 {
            vec![self.m0_range[0]]
        } else {
            (0..s)
                .map(|i| {
                    let idx = (i as f64 * (l - 1) as f64 / (s - 1) as f64).round() as usize;
                    self.m0_range[idx]
                })
                .collect()
        }
    }
}

/// `m0` random layers followed by a STOQ-compiled approximate inverse.
pub fn generate_rav(plan: &ExperimentPlan, m0: usize, rng: &mut SeededRng) -> Result<VerificationSequence> {
    if m0 == 0 {
        return Err(Error::invalid("m0 must be at least 1"));
    }
    let n = plan.design.n_qubits;
    let seed = rng.seed();
    let mut layers: Vec<Layer> = (0..m0).map(|_| generate_layer(&plan.design, rng)).collect();
    let u = layers_unitary(&layers, n)?;
    let source = LayerSource::new(plan.design.clone());
    let mut stoq_rng = rng.derive(u64::MAX);
    let compiled = compile_until(&u.adjoint(), &source, &plan.stoq, plan.epsilon_target, plan.max_restarts, &mut stoq_rng)?;
    let m_inv = compiled.instructions.len();
    for instr in compiled.instructions {
        match instr {
            Instruction::Layer(l) => layers.push(l),
            _ => unreachable!("layer source emits layers"),
        }
    }
    let v = layers_unitary(&layers[m0..], n)?;
    let epsilon = inversion_error(&u, &v);
    Ok(VerificationSequence {
        kind: SequenceKind::Rav,
        n_qubits: n,
        layers,
        m0: Some(m0),
        m_inv: Some(m_inv),
        epsilon: Some(epsilon),
        seed,
    })
}

/// Independent random layers, as many as `rav` has in total.
pub fn generate_xeb_matched(rav: &VerificationSequence, design: &LayerDesign, rng: &mut SeededRng) -> Result<VerificationSequence> {
    if rav.kind != SequenceKind::Rav {
        return Err(Error::invalid("matched XEB generation needs a RAV sequence"));
    }
    if design.n_qubits != rav.n_qubits {
        return Err(Error::invalid("design qubit count differs from the RAV sequence"));
    }
    let seed = rng.seed();
    let layers = (0..rav.m()).map(|_| generate_layer(design, rng)).collect();
    Ok(VerificationSequence { kind: SequenceKind::Xeb, n_qubits: rav.n_qubits, layers, m0: None, m_inv: None, epsilon: None, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPair {
    pub rav: VerificationSequence,
    pub xeb: VerificationSequence,
}

/// Result slot for one scheduled pair.
#[derive(Debug)]
pub struct PairOutcome {
    pub index: usize,
    pub m0: usize,
    pub seed: u64,
    pub result: Result<ExperimentPair>,
}

/// Generate one (RAV, matched XEB) pair per scheduled `m0`. Pair `i` runs on
/// child stream `i` of `rng`; failures are kept per pair.
pub fn generate_experiment(plan: &ExperimentPlan, rng: &SeededRng) -> Result<Vec<PairOutcome>> {
    plan.validate()?;
    let schedule = plan.m0_schedule();
    Ok(schedule
        .into_par_iter()
        .enumerate()
        .map(|(index, m0)| {
            let pair_rng = rng.derive(index as u64);
            let result = generate_rav(plan, m0, &mut pair_rng.derive(0)).and_then(|rav| {
                let xeb = generate_xeb_matched(&rav, &plan.design, &mut pair_rng.derive(1))?;
                Ok(ExperimentPair { rav, xeb })
            });
            PairOutcome { index, m0, seed: pair_rng.seed(), result }
        })
        .collect())
}
