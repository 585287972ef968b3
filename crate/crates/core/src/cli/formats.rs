//! On-disk formats: circuit files, the sequence index, shot records and the
//! experiment manifest.
//!
//! A circuit file is JSON lines. Line 1 is a header object; every following
//! line is one layer, an array of `{kind, targets, theta, phi}` gate objects.
//! Angles are written with 17 significant digits so they parse back to the
//! same `f64`.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{DecayModel, DEFAULT_BIN_SIZE};
use crate::error::{Error, Result};
use crate::gateset::{GateInstance, GateKind, Layer};
use crate::noisesim::NoiseModel;
use crate::protocol::{ExperimentPlan, SequenceKind, VerificationSequence};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `{:.16e}`: 17 significant digits, exact round trip for `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitHeader {
    pub format_version: u32,
    pub tool_version: String,
    pub id: usize,
    pub kind: SequenceKind,
    pub n_qubits: usize,
    pub m: usize,
    pub m0: Option<usize>,
    pub m_inv: Option<usize>,
    pub epsilon: Option<f64>,
    pub seed: u64,
}

fn write_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "null".to_string(), |x| x.to_string())
}

fn write_gate(out: &mut String, g: &GateInstance) {
    let targets: Vec<String> = g.targets.iter().map(|t| t.to_string()).collect();
    out.push_str(&format!(
        "{{\"kind\":\"{}\",\"targets\":[{}],\"theta\":{},\"phi\":{}}}",
        g.kind.name(),
        targets.join(","),
        fmt_real(g.theta),
        fmt_real(g.phi)
    ));
}

/// Serialize a sequence as a circuit file.
pub fn write_circuit(seq: &VerificationSequence, id: usize) -> String {
    let mut out = format!(
        "{{\"format_version\":{FORMAT_VERSION},\"tool_version\":\"{TOOL_VERSION}\",\"id\":{id},\"kind\":\"{}\",\"n_qubits\":{},\"m\":{},\"m0\":{},\"m_inv\":{},\"epsilon\":{},\"seed\":{}}}\n",
        seq.kind.name(),
        seq.n_qubits,
        seq.m(),
        write_opt(seq.m0),
        write_opt(seq.m_inv),
        seq.epsilon.map_or_else(|| "null".to_string(), fmt_real),
        seq.seed,
    );
    for layer in &seq.layers {
        out.push('[');
        for (i, g) in layer.gates.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_gate(&mut out, g);
        }
        out.push_str("]\n");
    }
    out
}

#[derive(Deserialize)]
struct GateRecord {
    kind: String,
    targets: Vec<usize>,
    theta: f64,
    phi: f64,
}

/// Parse a circuit file. Errors name the 1-based line.
pub fn parse_circuit(text: &str) -> Result<(CircuitHeader, VerificationSequence)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| Error::parse(1, "empty circuit file"))?;
    let header: CircuitHeader = serde_json::from_str(head).map_err(|e| Error::parse(1, format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::parse(1, format!("unsupported format_version {}", header.format_version)));
    }
    let n = header.n_qubits;
    if n == 0 || n > crate::linalg::MAX_QUBITS {
        return Err(Error::parse(1, format!("qubit count {n} out of range")));
    }
    let mut layers = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let records: Vec<GateRecord> = serde_json::from_str(line).map_err(|e| Error::parse(line_no, e.to_string()))?;
        let mut gates = Vec::with_capacity(records.len());
        for r in records {
            let kind: GateKind = r.kind.parse().map_err(|_| Error::parse(line_no, format!("unknown gate kind '{}'", r.kind)))?;
            let g = GateInstance::new(kind, r.targets, r.theta, r.phi).map_err(|e| Error::parse(line_no, e.to_string()))?;
            g.validate(Some(n)).map_err(|e| Error::parse(line_no, e.to_string()))?;
            gates.push(g);
        }
        layers.push(Layer::new(gates));
    }
    if layers.len() != header.m {
        return Err(Error::parse(1, format!("header declares {} layers, file has {}", header.m, layers.len())));
    }
    let seq = VerificationSequence {
        kind: header.kind,
        n_qubits: n,
        layers,
        m0: header.m0,
        m_inv: header.m_inv,
        epsilon: header.epsilon,
        seed: header.seed,
    };
    seq.validate().map_err(|e| Error::parse(1, e.to_string()))?;
    Ok((header, seq))
}

pub fn read_circuit(path: &Path) -> Result<(CircuitHeader, VerificationSequence)> {
    let text = std::fs::read_to_string(path)?;
    parse_circuit(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

/// One row of `index.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub id: usize,
    pub pair: usize,
    pub kind: SequenceKind,
    pub file: String,
    pub m: Option<usize>,
    pub m0: usize,
    pub m_inv: Option<usize>,
    pub epsilon: Option<String>,
    pub seed: u64,
    pub status: String,
}

pub fn write_index<W: Write>(w: W, rows: &[IndexRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_index<R: Read>(r: R) -> Result<Vec<IndexRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(i + 2, e.to_string())))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("{other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRow {
    pub sequence_id: usize,
    pub x0: usize,
    pub shot_index: usize,
    pub outcome: usize,
}

/// Shots of one sequence, in recorded order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotSeries {
    pub sequence_id: usize,
    pub x0: usize,
    pub outcomes: Vec<usize>,
}

pub fn write_shots<W: Write>(w: W, series: &[ShotSeries]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in series {
        for (shot_index, &outcome) in s.outcomes.iter().enumerate() {
            wr.serialize(ShotRow { sequence_id: s.sequence_id, x0: s.x0, shot_index, outcome }).map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Parse shot records. Rows of one sequence must be adjacent, share `x0`,
/// and have shot indices `0, 1, 2, …`.
pub fn read_shots<R: BufRead>(r: R) -> Result<Vec<ShotSeries>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let expected = ["sequence_id", "x0", "shot_index", "outcome"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(1, format!("expected header {}", expected.join(","))));
    }
    let mut out: Vec<ShotSeries> = Vec::new();
    for (i, row) in rd.deserialize::<ShotRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(line, e.to_string()))?;
        match out.last_mut() {
            Some(s) if s.sequence_id == row.sequence_id => {
                if row.x0 != s.x0 {
                    return Err(Error::parse(line, "x0 changes within a sequence"));
                }
                if row.shot_index != s.outcomes.len() {
                    return Err(Error::parse(line, format!("expected shot_index {}", s.outcomes.len())));
                }
                s.outcomes.push(row.outcome);
            }
            _ => {
                if out.iter().any(|s| s.sequence_id == row.sequence_id) {
                    return Err(Error::parse(line, format!("rows of sequence {} are not contiguous", row.sequence_id)));
                }
                if row.shot_index != 0 {
                    return Err(Error::parse(line, "shot indices must start at 0"));
                }
                out.push(ShotSeries { sequence_id: row.sequence_id, x0: row.x0, outcomes: vec![row.outcome] });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Exp,
    Gauss,
    Auto,
}

impl ModelChoice {
    pub fn models(self) -> Vec<DecayModel> {
        match self {
            ModelChoice::Exp => vec![DecayModel::Exponential],
            ModelChoice::Gauss => vec![DecayModel::Gaussian],
            ModelChoice::Auto => vec![DecayModel::Exponential, DecayModel::Gaussian],
        }
    }
}

impl std::str::FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(ModelChoice::Exp),
            "gauss" => Ok(ModelChoice::Gauss),
            "auto" => Ok(ModelChoice::Auto),
            _ => Err(Error::invalid(format!("unknown model '{s}' (exp, gauss, auto)"))),
        }
    }
}

fn default_shots() -> usize {
    500
}

fn default_k_schedule() -> Vec<usize> {
    vec![5, 10, 25, 50, 100]
}

fn default_model() -> ModelChoice {
    ModelChoice::Exp
}

fn default_bin_size() -> usize {
    DEFAULT_BIN_SIZE
}

fn default_noise() -> NoiseModel {
    NoiseModel::Noiseless
}

/// Everything needed to rerun generate → simulate → analyze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub format_version: u32,
    #[serde(default)]
    pub tool_version: Option<String>,
    pub plan: ExperimentPlan,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    /// Shots per sequence.
    #[serde(default = "default_shots")]
    pub shots: usize,
    /// Shots per run for analysis.
    #[serde(default = "default_k_schedule")]
    pub k_schedule: Vec<usize>,
    #[serde(default)]
    pub simulate_seed: u64,
    #[serde(default = "default_model")]
    pub model: ModelChoice,
    #[serde(default = "default_bin_size")]
    pub bin_size: usize,
}

impl ExperimentManifest {
    pub fn new(plan: ExperimentPlan) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool_version: Some(TOOL_VERSION.to_string()),
            plan,
            noise: default_noise(),
            shots: default_shots(),
            k_schedule: default_k_schedule(),
            simulate_seed: 0,
            model: default_model(),
            bin_size: default_bin_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported format_version {}", self.format_version)));
        }
        self.plan.validate()?;
        self.noise.validate()?;
        if self.shots == 0 || self.k_schedule.contains(&0) || self.bin_size == 0 {
            return Err(Error::invalid("shots, K values and bin_size must be positive"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Parse `none`, `global:λ`, `pergate:r` or `overrot:δ`.
pub fn parse_noise(spec: &str) -> Result<NoiseModel> {
    let (name, value) = spec.split_once(':').unwrap_or((spec, ""));
    let num = || value.parse::<f64>().map_err(|_| Error::invalid(format!("bad noise value in '{spec}'")));
    let model = match name {
        "none" | "noiseless" => NoiseModel::Noiseless,
        "global" => NoiseModel::GlobalDepolarizing { lambda: num()? },
        "pergate" => NoiseModel::PerGateDepolarizing { rate: num()? },
        "overrot" => NoiseModel::CoherentOverrotation { delta: num()? },
        _ => return Err(Error::invalid(format!("unknown noise model '{spec}'"))),
    };
    model.validate()?;
    Ok(model)
}
