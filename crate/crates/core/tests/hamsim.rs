use ravkit::hamsim::{
    build_ising, path_distance, qdrift, term_instruction_source, time_evolution_target, trotter_randomized, CompiledHamSequence,
    HamiltonianSpec, IsingModel, DEFAULT_EPS_FRAC, DEFAULT_TAU,
};
use ravkit::stoq::{compile, cost, StoqParams};
use ravkit::SeededRng;

const RUNS: u64 = 8;

fn model() -> IsingModel {
    build_ising(&HamiltonianSpec::preset(2).unwrap())
}

/// Mean final cost and mean (over prefixes m ≥ 1) path distance.
fn summarize(m: &IsingModel, seqs: &[CompiledHamSequence]) -> (f64, f64) {
    let target = time_evolution_target(m, DEFAULT_TAU);
    let mut c = 0.0;
    let mut d = 0.0;
    for s in seqs {
        c += cost(&target, &m.product(&s.steps).unwrap()).unwrap();
        let path = path_distance(s, m, DEFAULT_TAU).unwrap();
        d += path[1..].iter().sum::<f64>() / (path.len() - 1) as f64;
    }
    (c / seqs.len() as f64, d / seqs.len() as f64)
}

fn stoq_runs(m: &IsingModel) -> Vec<CompiledHamSequence> {
    let target = time_evolution_target(m, DEFAULT_TAU);
    let source = term_instruction_source(m, DEFAULT_TAU, DEFAULT_EPS_FRAC).unwrap();
    (0..RUNS)
        .map(|r| {
            let c = compile(&target, &source, &StoqParams::default(), &mut SeededRng::new(500 + r)).unwrap();
            CompiledHamSequence::from_instructions(&c.instructions).unwrap()
        })
        .collect()
}

#[test]
fn ten_step_trotter_beats_stoq_cost() {
    let m = model();
    let trotter: Vec<_> = (0..RUNS).map(|r| trotter_randomized(&m, DEFAULT_TAU, 10, &mut SeededRng::new(r)).unwrap()).collect();
    let (ct, _) = summarize(&m, &trotter);
    let (cs, _) = summarize(&m, &stoq_runs(&m));
    assert!(ct < cs, "trotter {ct} vs stoq {cs}");
}

#[test]
fn stoq_wanders_farther_from_the_path() {
    let m = model();
    let trotter: Vec<_> = (0..RUNS).map(|r| trotter_randomized(&m, DEFAULT_TAU, 10, &mut SeededRng::new(r)).unwrap()).collect();
    let drift: Vec<_> = (0..RUNS).map(|r| qdrift(&m, DEFAULT_TAU, 1000, &mut SeededRng::new(50 + r)).unwrap()).collect();
    let (_, dt) = summarize(&m, &trotter);
    let (_, dq) = summarize(&m, &drift);
    let (_, ds) = summarize(&m, &stoq_runs(&m));
    assert!(ds > dt && ds > dq, "stoq {ds} trotter {dt} qdrift {dq}");
}
