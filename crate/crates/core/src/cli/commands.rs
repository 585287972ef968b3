//! The work behind each subcommand, callable without going through argument
//! parsing.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::formats::{
    fmt_real, read_circuit, read_index, read_shots, write_circuit, write_index, write_shots, ExperimentManifest, IndexRow,
    ModelChoice, ShotSeries,
};
use crate::analysis::{bin_points, f_rav, f_xeb, fit_decay_binned, run_statistics, DecayModel, FidelityPoint, FitResult};
use crate::error::{Error, Result};
use crate::hamsim::{
    build_ising, path_distance, path_summary, qdrift, term_instruction_source, time_evolution_target, trotter_randomized,
    CompiledHamSequence, HamiltonianSpec, Provenance,
};
use crate::linalg::{counts_from_outcomes, haar_random_unitary, OutcomeDistribution};
use crate::noisesim::{run_shots, simulate, NoiseModel};
use crate::protocol::{generate_experiment, SequenceKind, VerificationSequence};
use crate::rng::SeededRng;
use crate::stoq::{compile, GateSource, StoqParams};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn opt_real(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub pairs: usize,
    pub failed: usize,
}

/// Generate circuits into `out/circuits`, plus `out/index.csv` and an echo
/// of the manifest. Failed pairs are listed in the index with their status.
pub fn generate(manifest: &ExperimentManifest, out: &Path) -> Result<GenerateSummary> {
    manifest.validate()?;
    let circuits = out.join("circuits");
    fs::create_dir_all(&circuits)?;
    let outcomes = generate_experiment(&manifest.plan, &SeededRng::new(manifest.plan.seed))?;
    let mut rows = Vec::with_capacity(2 * outcomes.len());
    let mut failed = 0;
    for o in &outcomes {
        let (rav_id, xeb_id) = (2 * o.index, 2 * o.index + 1);
        match &o.result {
            Ok(pair) => {
                for (id, seq) in [(rav_id, &pair.rav), (xeb_id, &pair.xeb)] {
                    let file = format!("{}_{:04}.jsonl", seq.kind.name(), o.index);
                    fs::write(circuits.join(&file), write_circuit(seq, id))?;
                    rows.push(IndexRow {
                        id,
                        pair: o.index,
                        kind: seq.kind,
                        file: format!("circuits/{file}"),
                        m: Some(seq.m()),
                        m0: o.m0,
                        m_inv: seq.m_inv,
                        epsilon: seq.epsilon.map(fmt_real),
                        seed: seq.seed,
                        status: "ok".into(),
                    });
                }
            }
            Err(Error::BudgetExceeded { best_error, .. }) => {
                failed += 1;
                for (id, kind) in [(rav_id, SequenceKind::Rav), (xeb_id, SequenceKind::Xeb)] {
                    rows.push(IndexRow {
                        id,
                        pair: o.index,
                        kind,
                        file: String::new(),
                        m: None,
                        m0: o.m0,
                        m_inv: None,
                        epsilon: (kind == SequenceKind::Rav).then(|| fmt_real(*best_error)),
                        seed: o.seed,
                        status: "budget_exceeded".into(),
                    });
                }
            }
            Err(e) => return Err(Error::invalid(format!("pair {}: {e}", o.index))),
        }
    }
    write_index(create(&out.join("index.csv"))?, &rows)?;
    fs::write(out.join("manifest.json"), manifest.to_json()?)?;
    Ok(GenerateSummary { pairs: outcomes.len(), failed })
}

/// Sequences listed as `ok` in `dir/index.csv`, keyed by id.
pub fn load_sequences(dir: &Path) -> Result<BTreeMap<usize, (IndexRow, VerificationSequence)>> {
    let rows = read_index(BufReader::new(File::open(dir.join("index.csv"))?))?;
    let ok: Vec<IndexRow> = rows.into_iter().filter(|r| r.status == "ok").collect();
    let loaded: Vec<Result<(usize, (IndexRow, VerificationSequence))>> = ok
        .into_par_iter()
        .map(|row| {
            let (header, seq) = read_circuit(&dir.join(&row.file))?;
            if header.id != row.id || header.kind != row.kind {
                return Err(Error::invalid(format!("{} does not match its index entry", row.file)));
            }
            Ok((row.id, (row, seq)))
        })
        .collect();
    loaded.into_iter().collect()
}

/// Sample `shots` outcomes per sequence. Sequence `id` uses child stream
/// `id` of `seed` for both its initial state and its shots.
pub fn simulate_dir(circuits: &Path, noise: &NoiseModel, shots: usize, seed: u64, out: &Path) -> Result<Vec<ShotSeries>> {
    noise.validate()?;
    let seqs = load_sequences(circuits)?;
    let root = SeededRng::new(seed);
    let series: Vec<Result<ShotSeries>> = seqs
        .par_iter()
        .map(|(&id, (_, seq))| {
            let mut rng = root.derive(id as u64);
            let x0 = rng.index(seq.dim());
            let r = run_shots(seq, noise, x0, shots, &mut rng)?;
            Ok(ShotSeries { sequence_id: id, x0, outcomes: r.outcomes })
        })
        .collect();
    let series = series.into_iter().collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    write_shots(create(&out.join("shots.csv"))?, &series)?;
    Ok(series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub kind: SequenceKind,
    pub shots: u64,
    pub run: usize,
    pub model: DecayModel,
    pub points: usize,
    pub skipped: usize,
    pub fit: Option<FitResult>,
    pub selected: bool,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub fits: Vec<FitRow>,
    pub stats: crate::analysis::RunStatistics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeConfig {
    pub k_schedule: Vec<usize>,
    pub model: ModelChoice,
    pub bin_size: usize,
}

struct Loaded {
    id: usize,
    kind: SequenceKind,
    m: usize,
    x0: usize,
    ideal: OutcomeDistribution,
    outcomes: Vec<usize>,
}

fn point_of(s: &Loaded, chunk: &[usize]) -> Result<Option<FidelityPoint>> {
    let k = chunk.len() as u64;
    let dim = s.ideal.dim();
    let f_hat = match s.kind {
        SequenceKind::Rav => {
            let hits = chunk.iter().filter(|&&o| o == s.x0).count();
            match f_rav(s.ideal.get(s.x0), hits as f64 / k as f64, dim) {
                Ok(f) => f,
                Err(Error::InvalidArgument(_)) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        SequenceKind::Xeb => match f_xeb(&s.ideal, &counts_from_outcomes(chunk, dim), k) {
            Ok(f) => f,
            Err(Error::DegenerateDistribution) => return Ok(None),
            Err(e) => return Err(e),
        },
    };
    Ok(Some(FidelityPoint { m: s.m, f_hat, kind: s.kind, shots: k, sequence_id: s.id }))
}

/// Split each sequence's shots into runs of `K`, estimate per-sequence
/// fidelities, fit each run per kind and summarize across runs.
/// Run index and its per-sequence points.
type RunPoints = (usize, Vec<FidelityPoint>);

pub fn analyze_dir(circuits: &Path, shots_path: &Path, cfg: &AnalyzeConfig, out: &Path) -> Result<AnalysisReport> {
    if cfg.bin_size == 0 || cfg.k_schedule.is_empty() || cfg.k_schedule.contains(&0) {
        return Err(Error::invalid("K values and bin size must be positive"));
    }
    let seqs = load_sequences(circuits)?;
    let series = read_shots(BufReader::new(File::open(shots_path)?))?;
    let total = series.first().map(|s| s.outcomes.len()).unwrap_or(0);
    let mut loaded = Vec::with_capacity(series.len());
    for s in series {
        let (_, seq) = seqs
            .get(&s.sequence_id)
            .ok_or_else(|| Error::invalid(format!("shots reference unknown sequence {}", s.sequence_id)))?;
        let dim = seq.dim();
        if s.x0 >= dim || s.outcomes.iter().any(|&o| o >= dim) {
            return Err(Error::invalid(format!("sequence {}: outcome outside 0..{dim}", s.sequence_id)));
        }
        if s.outcomes.len() != total {
            return Err(Error::invalid("all sequences must record the same number of shots"));
        }
        loaded.push((s, seq));
    }
    for &k in &cfg.k_schedule {
        if total == 0 || total % k != 0 {
            return Err(Error::invalid(format!("K = {k} does not divide the {total} recorded shots")));
        }
    }
    let loaded: Vec<Loaded> = loaded
        .into_par_iter()
        .map(|(s, seq)| {
            let ideal = simulate(seq, &NoiseModel::Noiseless, s.x0).map(|o| o.ideal_probs)?;
            Ok(Loaded { id: s.sequence_id, kind: seq.kind, m: seq.m(), x0: s.x0, ideal, outcomes: s.outcomes })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for &k in &cfg.k_schedule {
        for run in 0..total / k {
            for kind in [SequenceKind::Rav, SequenceKind::Xeb] {
                jobs.push((kind, k, run));
            }
        }
    }
    let models = cfg.model.models();
    let results: Vec<Result<(Vec<FitRow>, Vec<FidelityPoint>)>> = jobs
        .par_iter()
        .map(|&(kind, k, run)| {
            let mut points = Vec::new();
            let mut skipped = 0;
            for s in loaded.iter().filter(|s| s.kind == kind) {
                match point_of(s, &s.outcomes[run * k..(run + 1) * k])? {
                    Some(p) => points.push(p),
                    None => skipped += 1,
                }
            }
            if points.is_empty() {
                return Ok((Vec::new(), points));
            }
            let rows = fit_models(&points, &models, cfg.bin_size)?
                .into_iter()
                .map(|(model, fit, selected, status)| FitRow {
                    kind,
                    shots: k as u64,
                    run,
                    model,
                    points: points.len(),
                    skipped,
                    fit,
                    selected,
                    status,
                })
                .collect();
            Ok((rows, points))
        })
        .collect();

    fs::create_dir_all(out)?;
    let mut fits = Vec::new();
    let mut per_run: BTreeMap<(SequenceKind, usize), Vec<RunPoints>> = BTreeMap::new();
    for (r, &(kind, k, run)) in results.into_iter().zip(&jobs) {
        let (rows, points) = r?;
        fits.extend(rows);
        per_run.entry((kind, k)).or_default().push((run, points));
    }

    let mut w = create(&out.join("fits.csv"))?;
    writeln!(w, "kind,shots,run,model,points,skipped,alpha,chi2_reduced,fidelity_loss,selected,status")?;
    for r in &fits {
        let f = r.fit.as_ref();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.kind,
            r.shots,
            r.run,
            r.model.name(),
            r.points,
            r.skipped,
            opt_real(f.map(|f| f.alpha)),
            opt_real(f.and_then(|f| f.chi2_reduced)),
            opt_real(f.map(|f| f.fidelity_loss)),
            r.selected,
            r.status
        )?;
    }
    w.flush()?;

    let selected: Vec<(SequenceKind, u64, f64)> = fits
        .iter()
        .filter(|r| r.selected)
        .filter_map(|r| r.fit.as_ref().map(|f| (r.kind, r.shots, f.fidelity_loss)))
        .collect();
    let stats = run_statistics(&selected);
    let mut w = create(&out.join("stats.csv"))?;
    writeln!(w, "shots,rav_runs,rav_mean,rav_sd,rav_sd_over_mean,xeb_runs,xeb_mean,xeb_sd,xeb_sd_over_mean,ratio,status")?;
    for row in &stats.rows {
        let cols = |g: &Option<crate::analysis::GroupStats>| match g {
            Some(g) => format!("{},{},{},{}", g.runs, g.mean, opt_real(g.sd), opt_real(g.sd_over_mean)),
            None => "0,,,".to_string(),
        };
        let enough = [&row.rav, &row.xeb].iter().all(|g| g.as_ref().is_some_and(|g| g.runs >= 2));
        let status = if enough { "ok" } else { "insufficient_runs" };
        writeln!(w, "{},{},{},{},{}", row.shots, cols(&row.rav), cols(&row.xeb), opt_real(row.ratio), status)?;
    }
    w.flush()?;

    let decay = out.join("decay");
    fs::create_dir_all(&decay)?;
    for ((kind, k), runs) in &per_run {
        let mut w = create(&decay.join(format!("{kind}_K{k}.csv")))?;
        writeln!(w, "run,model,m,mean,sem,count,fit_alpha,chi2_r")?;
        for (run, points) in runs {
            write_decay(&mut w, &run.to_string(), points, &models, cfg.bin_size)?;
        }
        write_decay(&mut w, "mean", &average_points(runs), &models, cfg.bin_size)?;
        w.flush()?;
    }
    Ok(AnalysisReport { fits, stats })
}

type ModelFit = (DecayModel, Option<FitResult>, bool, String);

/// Fit every model; the one with the lowest binned χ²_r is marked selected.
fn fit_models(points: &[FidelityPoint], models: &[DecayModel], bin_size: usize) -> Result<Vec<ModelFit>> {
    let mut out = Vec::with_capacity(models.len());
    for &model in models {
        match fit_decay_binned(points, model, bin_size) {
            Ok(f) => out.push((model, Some(f), false, "ok".to_string())),
            Err(Error::FitDegenerate(msg)) => out.push((model, None, false, format!("fit_degenerate: {msg}"))),
            Err(e) => return Err(e),
        }
    }
    let best = out
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.1.as_ref().map(|f| (i, f.chi2_reduced.unwrap_or(f64::INFINITY))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    if let Some(i) = best {
        out[i].2 = true;
    }
    Ok(out)
}

/// Per-sequence mean of `f̂` over runs.
fn average_points(runs: &[(usize, Vec<FidelityPoint>)]) -> Vec<FidelityPoint> {
    let mut acc: BTreeMap<usize, (FidelityPoint, f64, usize)> = BTreeMap::new();
    for (_, points) in runs {
        for p in points {
            let e = acc.entry(p.sequence_id).or_insert_with(|| (p.clone(), 0.0, 0));
            e.1 += p.f_hat;
            e.2 += 1;
            e.0.shots = e.0.shots.max(p.shots);
        }
    }
    acc.into_values()
        .map(|(mut p, sum, n)| {
            p.f_hat = sum / n as f64;
            p
        })
        .collect()
}

fn write_decay<W: Write>(w: &mut W, run: &str, points: &[FidelityPoint], models: &[DecayModel], bin_size: usize) -> Result<()> {
    if points.is_empty() {
        return Ok(());
    }
    let bins = bin_points(points, bin_size)?;
    for (model, fit, _, _) in fit_models(points, models, bin_size)? {
        let alpha = opt_real(fit.as_ref().map(|f| f.alpha));
        let chi2 = opt_real(fit.as_ref().and_then(|f| f.chi2_reduced));
        for b in &bins {
            writeln!(w, "{run},{},{},{},{},{},{alpha},{chi2}", model.name(), b.m_mean, b.f_mean, opt_real(b.sem), b.count)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoqTarget {
    /// `e^{iHτ}` for the preset Ising chain, compiled from term evolutions.
    Ising,
    /// A Haar-random unitary per run, compiled from R and XX gates.
    Haar,
}

impl std::str::FromStr for StoqTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ising" => Ok(StoqTarget::Ising),
            "haar" => Ok(StoqTarget::Haar),
            _ => Err(Error::invalid(format!("unknown target '{s}' (ising, haar)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoqJob {
    pub target: StoqTarget,
    pub n_qubits: usize,
    pub params: StoqParams,
    pub runs: usize,
    pub tau: f64,
    pub eps_frac: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoqRun {
    pub run: usize,
    pub seed: u64,
    pub final_cost: f64,
    pub length: usize,
    pub cost_trace: Vec<f64>,
}

/// Run `job.runs` independent compilations and write `traces.csv` and
/// `summary.csv` under `out`.
pub fn stoq_job(job: &StoqJob, out: &Path) -> Result<Vec<StoqRun>> {
    job.params.validate()?;
    if job.runs == 0 {
        return Err(Error::invalid("runs must be at least 1"));
    }
    let root = SeededRng::new(job.seed);
    let runs: Vec<Result<StoqRun>> = (0..job.runs)
        .into_par_iter()
        .map(|run| {
            let rng = root.derive(run as u64);
            let compiled = match job.target {
                StoqTarget::Ising => {
                    let model = build_ising(&HamiltonianSpec::preset(job.n_qubits)?);
                    let source = term_instruction_source(&model, job.tau, job.eps_frac)?;
                    compile(&time_evolution_target(&model, job.tau), &source, &job.params, &mut rng.derive(1))?
                }
                StoqTarget::Haar => {
                    let target = haar_random_unitary(job.n_qubits, &mut rng.derive(0))?;
                    compile(&target, &GateSource::r_xx(job.n_qubits)?, &job.params, &mut rng.derive(1))?
                }
            };
            Ok(StoqRun {
                run,
                seed: rng.seed(),
                final_cost: compiled.final_cost,
                length: compiled.len(),
                cost_trace: compiled.cost_trace,
            })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    let mut w = create(&out.join("traces.csv"))?;
    writeln!(w, "run,iteration,cost")?;
    for r in &runs {
        for (i, c) in r.cost_trace.iter().enumerate() {
            writeln!(w, "{},{i},{c}", r.run)?;
        }
    }
    w.flush()?;
    let mut w = create(&out.join("summary.csv"))?;
    writeln!(w, "run,seed,final_cost,length")?;
    for r in &runs {
        writeln!(w, "{},{},{},{}", r.run, r.seed, r.final_cost, r.length)?;
    }
    w.flush()?;
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamsimJob {
    pub n_qubits: usize,
    pub tau: f64,
    pub methods: Vec<Provenance>,
    /// Trotter slices.
    pub steps: usize,
    /// QDRIFT repetitions.
    pub reps: usize,
    pub params: StoqParams,
    pub eps_frac: f64,
    pub runs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamsimRun {
    pub method: Provenance,
    pub run: usize,
    pub steps: usize,
    pub exec_time: f64,
    pub final_cost: f64,
    pub mean_path_distance: f64,
    pub max_path_distance: f64,
    pub path: Vec<f64>,
}

/// Compile `e^{iHτ}` with each method and record the distance of every
/// prefix from the ideal path. Writes `path_{method}.csv` and
/// `summary_{method}.csv`.
pub fn hamsim_job(job: &HamsimJob, out: &Path) -> Result<Vec<HamsimRun>> {
    if job.runs == 0 || job.methods.is_empty() {
        return Err(Error::invalid("runs and methods must be non-empty"));
    }
    let model = build_ising(&HamiltonianSpec::preset(job.n_qubits)?);
    let target = time_evolution_target(&model, job.tau);
    let root = SeededRng::new(job.seed);
    fs::create_dir_all(out)?;
    let mut all = Vec::new();
    for &method in &job.methods {
        let stream = root.derive(method as u64);
        let runs: Vec<Result<HamsimRun>> = (0..job.runs)
            .into_par_iter()
            .map(|run| {
                let mut rng = stream.derive(run as u64);
                let seq = match method {
                    Provenance::Trotter => trotter_randomized(&model, job.tau, job.steps, &mut rng)?,
                    Provenance::Qdrift => qdrift(&model, job.tau, job.reps, &mut rng)?,
                    Provenance::Stoq => {
                        let source = term_instruction_source(&model, job.tau, job.eps_frac)?;
                        let c = compile(&target, &source, &job.params, &mut rng)?;
                        CompiledHamSequence::from_instructions(&c.instructions)?
                    }
                };
                let path = path_distance(&seq, &model, job.tau)?;
                let (mean, max) = path_summary(&path);
                Ok(HamsimRun {
                    method,
                    run,
                    steps: seq.steps.len(),
                    exec_time: seq.exec_time,
                    final_cost: seq.final_cost(&model, job.tau)?,
                    mean_path_distance: mean,
                    max_path_distance: max,
                    path,
                })
            })
            .collect();
        let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
        let mut w = create(&out.join(format!("path_{}.csv", method.name())))?;
        writeln!(w, "run,m,distance")?;
        for r in &runs {
            for (m, d) in r.path.iter().enumerate() {
                writeln!(w, "{},{m},{d}", r.run)?;
            }
        }
        w.flush()?;
        let mut w = create(&out.join(format!("summary_{}.csv", method.name())))?;
        writeln!(w, "run,steps,exec_time,final_cost,mean_path_distance,max_path_distance")?;
        for r in &runs {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.run, r.steps, r.exec_time, r.final_cost, r.mean_path_distance, r.max_path_distance
            )?;
        }
        w.flush()?;
        all.extend(runs);
    }
    Ok(all)
}
