//! State-vector simulation of verification sequences under global
//! depolarizing, angle-proportional per-gate depolarizing, and coherent
//! over-rotation noise.
//!
//! A global depolarizing channel commutes with every unitary, so a circuit
//! interleaving gates with such channels ends in `(1−Λ)|ψ⟩⟨ψ| + Λ I/N` with
//! `|ψ⟩` the ideal pure output. No density matrix is needed.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateset::{gate_matrix, GateInstance, GateKind};
use crate::linalg::{apply_local, measurement_probs, sample_outcomes, counts_from_outcomes, LocalGate, OutcomeDistribution, PureState};
use crate::protocol::VerificationSequence;
use crate::rng::SeededRng;

/// Reference rotation for per-gate depolarization of an R gate.
pub const THETA_REF_R: f64 = FRAC_PI_2;
/// Reference rotation for per-gate depolarization of an MS gate.
pub const THETA_REF_MS: f64 = std::f64::consts::PI / 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseModel {
    Noiseless,
    GlobalDepolarizing { lambda: f64 },
    PerGateDepolarizing { rate: f64 },
    CoherentOverrotation { delta: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Noiseless => Ok(()),
            NoiseModel::GlobalDepolarizing { lambda } if (0.0..=1.0).contains(&lambda) => Ok(()),
            NoiseModel::PerGateDepolarizing { rate } if (0.0..=1.0).contains(&rate) => Ok(()),
            NoiseModel::CoherentOverrotation { delta } if delta.is_finite() => Ok(()),
            other => Err(Error::invalid(format!("noise parameter out of range: {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// `P(x)`.
    pub ideal_probs: OutcomeDistribution,
    /// `Q_λ(x)`.
    pub noisy_probs: OutcomeDistribution,
    pub accumulated_lambda: f64,
    pub initial_state_index: usize,
}

/// `λ_g = min(1, rate·|θ|/θ_ref)`; zero for virtual gates.
pub fn gate_depolarization(g: &GateInstance, rate: f64) -> f64 {
    let theta_ref = match g.kind {
        GateKind::R => THETA_REF_R,
        GateKind::MS => THETA_REF_MS,
        GateKind::RZ => return 0.0,
        // XX(α) = MS(2α, 0).
        GateKind::XX => THETA_REF_MS / 2.0,
    };
    (rate * g.theta.abs() / theta_ref).min(1.0)
}

fn run_gates<'a>(amps: &mut [crate::linalg::C64], gates: impl Iterator<Item = &'a GateInstance>, n: usize, delta: f64) {
    for g in gates {
        let m = if delta != 0.0 && g.kind.is_physical() {
            gate_matrix(&g.with_theta_offset(delta))
        } else {
            gate_matrix(g)
        };
        apply_local(amps, &LocalGate::from_matrix(m.matrix()), &g.targets, n);
    }
}

/// Ideal and noisy outcome distributions of `seq` started in `|x0⟩`.
pub fn simulate(seq: &VerificationSequence, noise: &NoiseModel, x0: usize) -> Result<SimOutput> {
    noise.validate()?;
    let n = seq.n_qubits;
    let dim = seq.dim();
    if x0 >= dim {
        return Err(Error::invalid(format!("initial state {x0} outside 0..{dim}")));
    }
    for l in &seq.layers {
        l.validate(n)?;
    }
    let gates = || seq.layers.iter().flat_map(|l| l.gates.iter());
    let mut ideal = PureState::basis(dim, x0)?;
    run_gates(ideal.amplitudes_mut(), gates(), n, 0.0);
    let ideal_probs = measurement_probs(&ideal);

    let (noisy_probs, lambda) = match *noise {
        NoiseModel::Noiseless => (ideal_probs.clone(), 0.0),
        NoiseModel::GlobalDepolarizing { lambda } => (ideal_probs.depolarized(lambda), lambda),
        NoiseModel::PerGateDepolarizing { rate } => {
            let survive = gates().fold(1.0, |acc, g| acc * (1.0 - gate_depolarization(g, rate)));
            let lambda = 1.0 - survive;
            (ideal_probs.depolarized(lambda), lambda)
        }
        NoiseModel::CoherentOverrotation { delta } => {
            if delta == 0.0 {
                (ideal_probs.clone(), 0.0)
            } else {
                let mut noisy = PureState::basis(dim, x0)?;
                run_gates(noisy.amplitudes_mut(), gates(), n, delta);
                (measurement_probs(&noisy), 0.0)
            }
        }
    };
    Ok(SimOutput { ideal_probs, noisy_probs, accumulated_lambda: lambda, initial_state_index: x0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotResult {
    pub sim: SimOutput,
    /// Outcome of each shot, in shot order.
    pub outcomes: Vec<usize>,
    pub counts: Vec<u64>,
    /// `counts[x0] / K`.
    pub q_x0: f64,
}

/// `K` shots sampled from the noisy distribution.
pub fn run_shots(seq: &VerificationSequence, noise: &NoiseModel, x0: usize, shots: usize, rng: &mut SeededRng) -> Result<ShotResult> {
    if shots == 0 {
        return Err(Error::invalid("shot count must be at least 1"));
    }
    let sim = simulate(seq, noise, x0)?;
    let outcomes = sample_outcomes(&sim.noisy_probs, shots, rng);
    let counts = counts_from_outcomes(&outcomes, seq.dim());
    let q_x0 = counts[x0] as f64 / shots as f64;
    Ok(ShotResult { sim, outcomes, counts, q_x0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateset::{generate_layer, Layer, LayerDesign};
    use crate::protocol::SequenceKind;
    use proptest::prelude::*;

    fn xeb(layers: Vec<Layer>, n: usize) -> VerificationSequence {
        VerificationSequence { kind: SequenceKind::Xeb, n_qubits: n, layers, m0: None, m_inv: None, epsilon: None, seed: 0 }
    }

    fn random_seq(n: usize, m: usize, seed: u64) -> VerificationSequence {
        let d = LayerDesign::standard(n).unwrap();
        let mut rng = SeededRng::new(seed);
        xeb((0..m).map(|_| generate_layer(&d, &mut rng)).collect(), n)
    }

    #[test]
    fn full_depolarization_is_uniform() {
        let s = random_seq(2, 5, 1);
        let out = simulate(&s, &NoiseModel::GlobalDepolarizing { lambda: 1.0 }, 2).unwrap();
        assert!(out.noisy_probs.probs().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn reference_rotation_gives_rate() {
        let s = xeb(vec![Layer::new(vec![GateInstance::r(0, FRAC_PI_2, 0.0)])], 2);
        let out = simulate(&s, &NoiseModel::PerGateDepolarizing { rate: 0.013 }, 0).unwrap();
        assert!((out.accumulated_lambda - 0.013).abs() < 1e-15);
        let ms = xeb(vec![Layer::new(vec![GateInstance::ms(0, 1, -THETA_REF_MS, 0.3)]), Layer::new(vec![GateInstance::rz(0, 2.0)])], 2);
        let out = simulate(&ms, &NoiseModel::PerGateDepolarizing { rate: 0.2 }, 0).unwrap();
        assert!((out.accumulated_lambda - 0.2).abs() < 1e-15);
    }

    #[test]
    fn per_gate_closed_form() {
        let count = 37;
        let gates: Vec<_> = (0..count).map(|i| GateInstance::r(i % 3, 0.3, 0.1 * i as f64)).collect();
        let s = xeb(vec![Layer::new(gates)], 3);
        let rate = 0.02;
        let out = simulate(&s, &NoiseModel::PerGateDepolarizing { rate }, 5).unwrap();
        let lg: f64 = rate * 0.3 / FRAC_PI_2;
        assert!((out.accumulated_lambda - (1.0 - (1.0 - lg).powi(count as i32))).abs() < 1e-12);
        let clamp = simulate(&s, &NoiseModel::PerGateDepolarizing { rate: 1.0 }, 5).unwrap();
        assert!(clamp.accumulated_lambda <= 1.0);
    }

    #[test]
    fn zero_overrotation_matches_noiseless() {
        let s = random_seq(3, 8, 4);
        let a = simulate(&s, &NoiseModel::Noiseless, 3).unwrap();
        let b = simulate(&s, &NoiseModel::CoherentOverrotation { delta: 0.0 }, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate(&s, &NoiseModel::CoherentOverrotation { delta: 0.15 }, 3).unwrap();
        assert_ne!(a.noisy_probs, c.noisy_probs);
        assert_eq!(c.accumulated_lambda, 0.0);
    }

    #[test]
    fn overrotation_spares_rz() {
        let s = xeb(vec![Layer::new(vec![GateInstance::rz(0, 0.4), GateInstance::rz(1, -1.0)])], 2);
        let out = simulate(&s, &NoiseModel::CoherentOverrotation { delta: 0.5 }, 1).unwrap();
        assert_eq!(out.noisy_probs.get(1), 1.0);
    }

    #[test]
    fn state_fidelity_bridge() {
        // For ρ = (1−Λ)|ψ⟩⟨ψ| + Λ I/N, ⟨ψ|ρ|ψ⟩ = Σ_x over the ψ basis; in the
        // computational basis the ideal output of the identity circuit is |x0⟩.
        let s = xeb(vec![], 2);
        for lam in [0.0, 0.2, 0.7, 1.0] {
            let out = simulate(&s, &NoiseModel::GlobalDepolarizing { lambda: lam }, 1).unwrap();
            let f = out.noisy_probs.get(1);
            let big_f = 1.0 - out.accumulated_lambda;
            assert!((f - (big_f + (1.0 - big_f) / 4.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn shots_on_empty_circuit() {
        let s = xeb(vec![], 3);
        let r = run_shots(&s, &NoiseModel::Noiseless, 6, 250, &mut SeededRng::new(0)).unwrap();
        assert_eq!(r.counts[6], 250);
        assert_eq!(r.q_x0, 1.0);
        assert!(run_shots(&s, &NoiseModel::Noiseless, 8, 1, &mut SeededRng::new(0)).is_err());
        assert!(run_shots(&s, &NoiseModel::Noiseless, 0, 0, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn maximally_mixed_frequencies() {
        let s = random_seq(2, 3, 2);
        let k = 1_000_000;
        let r = run_shots(&s, &NoiseModel::GlobalDepolarizing { lambda: 1.0 }, 0, k, &mut SeededRng::new(9)).unwrap();
        for c in r.counts {
            assert!((c as f64 / k as f64 - 0.25).abs() < 0.005);
        }
    }

    #[test]
    fn shots_deterministic() {
        let s = random_seq(2, 4, 3);
        let noise = NoiseModel::PerGateDepolarizing { rate: 0.1 };
        let a = run_shots(&s, &noise, 1, 100, &mut SeededRng::new(5)).unwrap();
        let b = run_shots(&s, &noise, 1, 100, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_noise() {
        let s = xeb(vec![], 2);
        assert!(simulate(&s, &NoiseModel::GlobalDepolarizing { lambda: 1.5 }, 0).is_err());
        assert!(simulate(&s, &NoiseModel::CoherentOverrotation { delta: f64::NAN }, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn mixing_identity(seed in 0u64..1000, lambda in 0.0f64..=1.0, x0 in 0usize..4) {
            let s = random_seq(2, 6, seed);
            let out = simulate(&s, &NoiseModel::GlobalDepolarizing { lambda }, x0).unwrap();
            for x in 0..4 {
                let expect = (1.0 - lambda) * out.ideal_probs.get(x) + lambda / 4.0;
                prop_assert!((out.noisy_probs.get(x) - expect).abs() < 1e-10);
            }
        }
    }
}
