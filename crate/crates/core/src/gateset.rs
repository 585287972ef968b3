//! Continuously-parameterized native gates and the random layer generator.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{apply_local_left, validate_targets, LocalGate, Matrix, UnitaryOp, C64};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    /// Equatorial rotation `exp(−i θ/2 (cos φ X + sin φ Y))`.
    R,
    /// `diag(1, e^{iθ})`; a virtual gate on trapped-ion hardware.
    RZ,
    /// Mølmer–Sørensen gate with half-angle entries and a `2φ` phase.
    MS,
    /// `exp(−i θ X⊗X)` (full-angle `cos θ`, `sin θ` entries).
    XX,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::R | GateKind::RZ => 1,
            GateKind::MS | GateKind::XX => 2,
        }
    }

    /// Whether the gate is a physical operation (subject to hardware noise).
    pub fn is_physical(self) -> bool {
        !matches!(self, GateKind::RZ)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::R => "R",
            GateKind::RZ => "RZ",
            GateKind::MS => "MS",
            GateKind::XX => "XX",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" => Ok(GateKind::R),
            "RZ" => Ok(GateKind::RZ),
            "MS" => Ok(GateKind::MS),
            "XX" => Ok(GateKind::XX),
            other => Err(Error::invalid(format!("unknown gate kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateInstance {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub theta: f64,
    /// Axis angle; ignored by `RZ` and `XX`.
    pub phi: f64,
}

impl GateInstance {
    pub fn new(kind: GateKind, targets: Vec<usize>, theta: f64, phi: f64) -> Result<Self> {
        let g = Self { kind, targets, theta, phi };
        g.validate(None)?;
        Ok(g)
    }

    pub fn r(target: usize, theta: f64, phi: f64) -> Self {
        Self { kind: GateKind::R, targets: vec![target], theta, phi }
    }

    pub fn rz(target: usize, theta: f64) -> Self {
        Self { kind: GateKind::RZ, targets: vec![target], theta, phi: 0.0 }
    }

    pub fn ms(a: usize, b: usize, theta: f64, phi: f64) -> Self {
        Self { kind: GateKind::MS, targets: vec![a, b], theta, phi }
    }

    pub fn xx(a: usize, b: usize, theta: f64) -> Self {
        Self { kind: GateKind::XX, targets: vec![a, b], theta, phi: 0.0 }
    }

    /// Checks arity and finite angles, plus target range when `n` is given.
    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        if self.targets.len() != self.kind.arity() {
            return Err(Error::invalid(format!(
                "{} takes {} target(s), got {}",
                self.kind,
                self.kind.arity(),
                self.targets.len()
            )));
        }
        if !self.theta.is_finite() || !self.phi.is_finite() {
            return Err(Error::invalid(format!("{} has non-finite angle", self.kind)));
        }
        if self.targets.len() == 2 && self.targets[0] == self.targets[1] {
            return Err(Error::invalid(format!("{} has duplicate targets", self.kind)));
        }
        if let Some(n) = n {
            validate_targets(&self.targets, n)?;
        }
        Ok(())
    }

    /// Copy with `delta` added to θ.
    pub fn with_theta_offset(&self, delta: f64) -> Self {
        Self { theta: self.theta + delta, ..self.clone() }
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The gate's own 2×2 or 4×4 matrix.
pub fn gate_matrix(g: &GateInstance) -> UnitaryOp {
    let z = c(0.0, 0.0);
    let m = match g.kind {
        GateKind::R => {
            let (s, co) = (g.theta / 2.0).sin_cos();
            let mi_s = c(0.0, -s);
            Matrix::from_row_slice(
                2,
                2,
                &[c(co, 0.0), mi_s * C64::from_polar(1.0, -g.phi), mi_s * C64::from_polar(1.0, g.phi), c(co, 0.0)],
            )
        }
        GateKind::RZ => Matrix::from_row_slice(2, 2, &[c(1.0, 0.0), z, z, C64::from_polar(1.0, g.theta)]),
        GateKind::MS => {
            let (s, co) = (g.theta / 2.0).sin_cos();
            let d = c(co, 0.0);
            let mi_s = c(0.0, -s);
            Matrix::from_row_slice(
                4,
                4,
                &[
                    d, z, z, mi_s * C64::from_polar(1.0, -2.0 * g.phi),
                    z, d, mi_s, z,
                    z, mi_s, d, z,
                    mi_s * C64::from_polar(1.0, 2.0 * g.phi), z, z, d,
                ],
            )
        }
        GateKind::XX => {
            let (s, co) = g.theta.sin_cos();
            let d = c(co, 0.0);
            let mi_s = c(0.0, -s);
            Matrix::from_row_slice(
                4,
                4,
                &[
                    d, z, z, mi_s,
                    z, d, mi_s, z,
                    z, mi_s, d, z,
                    mi_s, z, z, d,
                ],
            )
        }
    };
    UnitaryOp::from_matrix_unchecked(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::invalid(format!("invalid parameter range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub(crate) fn draw(&self, rng: &mut SeededRng) -> f64 {
        rng.uniform_in(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSlot {
    pub kind: GateKind,
    pub count: usize,
    pub theta: ParamRange,
    pub phi: ParamRange,
}

/// Recipe for a random layer: how many of each gate and the range of each
/// parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDesign {
    pub n_qubits: usize,
    pub slots: Vec<LayerSlot>,
}

impl LayerDesign {
    pub fn new(n_qubits: usize, slots: Vec<LayerSlot>) -> Result<Self> {
        let d = Self { n_qubits, slots };
        d.validate()?;
        Ok(d)
    }

    /// Three `R`, three `RZ` and one `MS` per layer; θ ∈ [−π/10, π/10],
    /// φ ∈ [−π, π].
    pub fn standard(n_qubits: usize) -> Result<Self> {
        let theta = ParamRange { lo: -PI / 10.0, hi: PI / 10.0 };
        let phi = ParamRange { lo: -PI, hi: PI };
        Self::new(
            n_qubits,
            vec![
                LayerSlot { kind: GateKind::R, count: 3, theta, phi },
                LayerSlot { kind: GateKind::RZ, count: 3, theta, phi },
                LayerSlot { kind: GateKind::MS, count: 1, theta, phi },
            ],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > crate::linalg::MAX_QUBITS {
            return Err(Error::invalid(format!("layer design has {} qubits", self.n_qubits)));
        }
        if self.gates_per_layer() == 0 {
            return Err(Error::invalid("layer design produces empty layers"));
        }
        for s in &self.slots {
            ParamRange::new(s.theta.lo, s.theta.hi)?;
            ParamRange::new(s.phi.lo, s.phi.hi)?;
            if s.count > 0 && s.kind.arity() > self.n_qubits {
                return Err(Error::invalid(format!("{} needs at least 2 qubits", s.kind)));
            }
        }
        Ok(())
    }

    pub fn gates_per_layer(&self) -> usize {
        self.slots.iter().map(|s| s.count).sum()
    }
}

/// Ordered gates; the first gate acts first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Layer {
    pub gates: Vec<GateInstance>,
}

impl Layer {
    pub fn new(gates: Vec<GateInstance>) -> Self {
        Self { gates }
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.gates.iter().try_for_each(|g| g.validate(Some(n)))
    }
}

pub(crate) fn draw_targets(arity: usize, n: usize, rng: &mut SeededRng) -> Vec<usize> {
    match arity {
        1 => vec![rng.index(n)],
        _ => {
            // Unordered pair, uniform over all n(n−1)/2 pairs.
            let a = rng.index(n);
            let mut b = rng.index(n - 1);
            if b >= a {
                b += 1;
            }
            vec![a.min(b), a.max(b)]
        }
    }
}

/// One random layer from `design`.
pub fn generate_layer(design: &LayerDesign, rng: &mut SeededRng) -> Layer {
    let mut gates = Vec::with_capacity(design.gates_per_layer());
    for slot in &design.slots {
        for _ in 0..slot.count {
            let theta = slot.theta.draw(rng);
            let phi = slot.phi.draw(rng);
            let targets = draw_targets(slot.kind.arity(), design.n_qubits, rng);
            gates.push(GateInstance { kind: slot.kind, targets, theta, phi });
        }
    }
    // Fisher–Yates with our own index draws to keep the permutation tied to
    // the documented stream.
    for i in (1..gates.len()).rev() {
        let j = rng.index(i + 1);
        gates.swap(i, j);
    }
    Layer { gates }
}

/// Left-multiply `m` by every gate of `layer`, in order.
pub(crate) fn apply_gates_left(m: &mut Matrix, gates: &[GateInstance], n: usize) {
    for g in gates {
        let local = LocalGate::from_matrix(gate_matrix(g).matrix());
        apply_local_left(m, &local, &g.targets, n);
    }
}

/// Product of the layer's embedded gates; the first gate is rightmost.
pub fn layer_unitary(layer: &Layer, n: usize) -> Result<UnitaryOp> {
    layer.validate(n)?;
    let dim = 1usize << n;
    let mut m = Matrix::identity(dim, dim);
    apply_gates_left(&mut m, &layer.gates, n);
    Ok(UnitaryOp::from_matrix_unchecked(m))
}

/// Product of several layers; `layers[0]` acts first.
pub fn layers_unitary(layers: &[Layer], n: usize) -> Result<UnitaryOp> {
    let dim = 1usize << n;
    let mut m = Matrix::identity(dim, dim);
    for layer in layers {
        layer.validate(n)?;
        apply_gates_left(&mut m, &layer.gates, n);
    }
    Ok(UnitaryOp::from_matrix_unchecked(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::embed_gate;

    fn close(a: &UnitaryOp, b: &Matrix, tol: f64) -> bool {
        a.matrix().iter().zip(b.iter()).all(|(x, y)| (x - y).norm() < tol)
    }

    #[test]
    fn r_zero_is_identity() {
        for phi in [-3.0, 0.0, 1.3] {
            assert!(close(&gate_matrix(&GateInstance::r(0, 0.0, phi)), &Matrix::identity(2, 2), 1e-15));
        }
    }

    #[test]
    fn rz_pi() {
        let m = gate_matrix(&GateInstance::rz(0, PI));
        let expected = Matrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        assert!(close(&m, &expected, 1e-15));
    }

    #[test]
    fn ms_zero_is_identity() {
        assert!(close(&gate_matrix(&GateInstance::ms(0, 1, 0.0, 0.7)), &Matrix::identity(4, 4), 1e-15));
    }

    #[test]
    fn r_pi_is_minus_i_x() {
        // exp(−i π/2 X) = −iX.
        let m = gate_matrix(&GateInstance::r(0, PI, 0.0));
        let expected = Matrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, -1.0), c(0.0, 0.0)]);
        assert!(close(&m, &expected, 1e-15));
    }

    #[test]
    fn r_matches_axis_exponential() {
        // Independent route: cos(θ/2) I − i sin(θ/2)(cos φ X + sin φ Y).
        let (theta, phi): (f64, f64) = (0.83, -2.1);
        let (s, co) = (theta / 2.0f64).sin_cos();
        let x = Matrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let y = Matrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let oracle = Matrix::identity(2, 2) * c(co, 0.0) - (x * c(phi.cos(), 0.0) + y * c(phi.sin(), 0.0)) * c(0.0, s);
        assert!(close(&gate_matrix(&GateInstance::r(0, theta, phi)), &oracle, 1e-15));
    }

    #[test]
    fn ms_at_zero_phase_equals_half_angle_xx() {
        for theta in [-0.3, 0.1, 1.7, 3.0] {
            let ms = gate_matrix(&GateInstance::ms(0, 1, theta, 0.0));
            let xx = gate_matrix(&GateInstance::xx(0, 1, theta / 2.0));
            assert!(ms.max_abs_diff(&xx) < 1e-12);
        }
    }

    #[test]
    fn random_gates_are_unitary() {
        let mut rng = SeededRng::new(8);
        for i in 0..10_000 {
            let kind = [GateKind::R, GateKind::RZ, GateKind::MS, GateKind::XX][i % 4];
            let targets = if kind.arity() == 1 { vec![0] } else { vec![0, 1] };
            let g = GateInstance { kind, targets, theta: rng.uniform_in(-7.0, 7.0), phi: rng.uniform_in(-7.0, 7.0) };
            assert!(gate_matrix(&g).unitarity_error() < 1e-10);
        }
    }

    #[test]
    fn standard_layer_composition() {
        let design = LayerDesign::standard(5).unwrap();
        let mut rng = SeededRng::new(2);
        for _ in 0..200 {
            let layer = generate_layer(&design, &mut rng);
            assert_eq!(layer.len(), 7);
            let count = |k| layer.gates.iter().filter(|g| g.kind == k).count();
            assert_eq!((count(GateKind::R), count(GateKind::RZ), count(GateKind::MS)), (3, 3, 1));
            for g in &layer.gates {
                assert!(g.theta.abs() <= PI / 10.0);
                assert!(g.phi.abs() <= PI);
                g.validate(Some(5)).unwrap();
            }
        }
    }

    #[test]
    fn layers_are_seed_deterministic() {
        let design = LayerDesign::standard(3).unwrap();
        let a = generate_layer(&design, &mut SeededRng::new(10));
        let b = generate_layer(&design, &mut SeededRng::new(10));
        assert_eq!(a, b);
    }

    #[test]
    fn layer_unitary_basics() {
        assert!(layer_unitary(&Layer::default(), 3).unwrap().max_abs_diff(&UnitaryOp::identity(8)) < 1e-15);
        let g = GateInstance::r(1, 0.4, 0.2);
        let single = layer_unitary(&Layer::new(vec![g.clone()]), 3).unwrap();
        let embedded = embed_gate(&gate_matrix(&g), &[1], 3).unwrap();
        assert!(single.max_abs_diff(&embedded) < 1e-15);
        let a = Layer::new(vec![GateInstance::rz(0, 0.3), GateInstance::rz(2, -1.1)]);
        let b = Layer::new(vec![GateInstance::rz(2, -1.1), GateInstance::rz(0, 0.3)]);
        assert!(layer_unitary(&a, 3).unwrap().max_abs_diff(&layer_unitary(&b, 3).unwrap()) < 1e-12);
        assert!(layer_unitary(&Layer::new(vec![GateInstance::r(3, 0.1, 0.0)]), 3).is_err());
    }

    #[test]
    fn layer_order_is_right_to_left() {
        let g1 = GateInstance::r(0, 0.7, 0.3);
        let g2 = GateInstance::ms(0, 1, 0.4, 1.2);
        let layer = Layer::new(vec![g1.clone(), g2.clone()]);
        let e1 = embed_gate(&gate_matrix(&g1), &[0], 2).unwrap();
        let e2 = embed_gate(&gate_matrix(&g2), &[0, 1], 2).unwrap();
        assert!(layer_unitary(&layer, 2).unwrap().max_abs_diff(&e2.mul(&e1)) < 1e-14);
    }

    #[test]
    fn concatenated_layers_multiply() {
        let design = LayerDesign::standard(3).unwrap();
        let mut rng = SeededRng::new(31);
        let a = generate_layer(&design, &mut rng);
        let b = generate_layer(&design, &mut rng);
        let mut ab = a.clone();
        ab.gates.extend(b.gates.iter().cloned());
        let lhs = layer_unitary(&ab, 3).unwrap();
        let rhs = layer_unitary(&b, 3).unwrap().mul(&layer_unitary(&a, 3).unwrap());
        assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn two_qubit_pairs_are_uniform() {
        let mut rng = SeededRng::new(44);
        let mut hist = std::collections::HashMap::new();
        let draws = 60_000;
        for _ in 0..draws {
            *hist.entry(draw_targets(2, 4, &mut rng)).or_insert(0usize) += 1;
        }
        assert_eq!(hist.len(), 6);
        for (_, c) in hist {
            assert!((c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn theta_histogram_is_uniform_ks() {
        let design = LayerDesign::standard(2).unwrap();
        let layers = 100_000;
        let (lo, hi) = (-PI / 10.0, PI / 10.0);
        for kind in [GateKind::R, GateKind::RZ, GateKind::MS] {
            let mut rng = SeededRng::new(99 + kind as u64);
            let mut thetas: Vec<f64> = Vec::new();
            for _ in 0..layers {
                let layer = generate_layer(&design, &mut rng);
                thetas.extend(layer.gates.iter().filter(|g| g.kind == kind).map(|g| g.theta));
            }
            thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = thetas.len() as f64;
            let d = thetas
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let f = (t - lo) / (hi - lo);
                    (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
                })
                .fold(0.0, f64::max);
            // 1% critical value of the one-sample KS statistic.
            assert!(d < 1.628 / n.sqrt(), "{kind}: D = {d}");
        }
    }
}
