//! C ABI for `ravkit`.
//!
//! Every fallible call returns a [`RavkitStatus`]; on failure the message is
//! available from [`ravkit_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function. Strings
//! returned through out-parameters are released with [`ravkit_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ravkit::analysis::{f_rav, f_xeb, fit_decay_binned, DecayModel, FidelityPoint};
use ravkit::cli::formats::{parse_circuit, write_circuit};
use ravkit::linalg::{haar_random_unitary, OutcomeDistribution};
use ravkit::noisesim::{run_shots, simulate, NoiseModel};
use ravkit::protocol::{generate_rav, generate_xeb_matched, ExperimentPlan, SequenceKind, VerificationSequence};
use ravkit::stoq::{compile, GateSource, StoqParams};
use ravkit::{Error, SeededRng};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RavkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DegenerateDistribution = 3,
    FitDegenerate = 4,
    BudgetExceeded = 5,
    Parse = 6,
    Io = 7,
    Json = 8,
    Utf8 = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RavkitNoiseKind {
    Noiseless = 0,
    GlobalDepolarizing = 1,
    PerGateDepolarizing = 2,
    CoherentOverrotation = 3,
}

/// A noise model: `param` is λ, the per-gate rate, or δ depending on `kind`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RavkitNoise {
    pub kind: RavkitNoiseKind,
    pub param: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RavkitSequenceKind {
    Rav = 0,
    Xeb = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RavkitDecayModel {
    Exponential = 0,
    Gaussian = 1,
}

/// Result of a decay fit. `chi2_reduced` is NaN when fewer than two bins
/// carry an error estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RavkitFit {
    pub alpha: f64,
    pub chi2_reduced: f64,
    pub fidelity_loss: f64,
}

/// Opaque verification sequence.
pub struct RavkitSequence {
    inner: VerificationSequence,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RavkitStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) => RavkitStatus::InvalidArgument,
            Error::DegenerateDistribution => RavkitStatus::DegenerateDistribution,
            Error::FitDegenerate(_) => RavkitStatus::FitDegenerate,
            Error::BudgetExceeded { .. } => RavkitStatus::BudgetExceeded,
            Error::Parse { .. } => RavkitStatus::Parse,
            Error::Io(_) => RavkitStatus::Io,
            Error::Json(_) => RavkitStatus::Json,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).expect("no interior NUL"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> RavkitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            RavkitStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(Some(msg));
            status
        }
        Err(_) => {
            set_last_error(Some("internal panic".into()));
            RavkitStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RavkitStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(RavkitStatus::Utf8, format!("{what}: {e}")))
}

unsafe fn seq_arg<'a>(p: *const RavkitSequence) -> Result<&'a VerificationSequence, Failure> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| null("sequence"))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn noise_model(n: RavkitNoise) -> NoiseModel {
    match n.kind {
        RavkitNoiseKind::Noiseless => NoiseModel::Noiseless,
        RavkitNoiseKind::GlobalDepolarizing => NoiseModel::GlobalDepolarizing { lambda: n.param },
        RavkitNoiseKind::PerGateDepolarizing => NoiseModel::PerGateDepolarizing { rate: n.param },
        RavkitNoiseKind::CoherentOverrotation => NoiseModel::CoherentOverrotation { delta: n.param },
    }
}

fn boxed(seq: VerificationSequence) -> *mut RavkitSequence {
    Box::into_raw(Box::new(RavkitSequence { inner: seq }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ravkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ravkit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ravkit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `seq` must be NULL or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ravkit_sequence_free(seq: *mut RavkitSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Parse a circuit file held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_sequence_from_text(text: *const c_char, out: *mut *mut RavkitSequence) -> RavkitStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (_, seq) = parse_circuit(text)?;
        out.write(boxed(seq));
        Ok(())
    })
}

/// Serialize as a circuit file with the given id. Free the result with
/// [`ravkit_string_free`].
///
/// # Safety
/// `seq` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_sequence_to_text(seq: *const RavkitSequence, id: usize, out: *mut *mut c_char) -> RavkitStatus {
    guard(|| {
        let text = write_circuit(seq_arg(seq)?, id);
        let c = CString::new(text).map_err(|e| Failure(RavkitStatus::Utf8, e.to_string()))?;
        write_out(out, c.into_raw(), "out")
    })
}

/// Generate a RAV sequence with `m0` random layers. `plan_json` is an
/// experiment plan object.
///
/// # Safety
/// `plan_json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_generate_rav(
    plan_json: *const c_char,
    m0: usize,
    seed: u64,
    out: *mut *mut RavkitSequence,
) -> RavkitStatus {
    guard(|| {
        let plan: ExperimentPlan = serde_json::from_str(str_arg(plan_json, "plan_json")?).map_err(Error::from)?;
        plan.validate()?;
        if out.is_null() {
            return Err(null("out"));
        }
        let seq = generate_rav(&plan, m0, &mut SeededRng::new(seed))?;
        out.write(boxed(seq));
        Ok(())
    })
}

/// An XEB sequence of random layers from the plan's design, as long as `rav`.
///
/// # Safety
/// `rav` must be a live handle, `plan_json` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_generate_xeb_matched(
    rav: *const RavkitSequence,
    plan_json: *const c_char,
    seed: u64,
    out: *mut *mut RavkitSequence,
) -> RavkitStatus {
    guard(|| {
        let rav = seq_arg(rav)?;
        let plan: ExperimentPlan = serde_json::from_str(str_arg(plan_json, "plan_json")?).map_err(Error::from)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let seq = generate_xeb_matched(rav, &plan.design, &mut SeededRng::new(seed))?;
        out.write(boxed(seq));
        Ok(())
    })
}

/// # Safety
/// `seq` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ravkit_sequence_num_qubits(seq: *const RavkitSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.inner.n_qubits)
}

/// # Safety
/// `seq` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ravkit_sequence_num_layers(seq: *const RavkitSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.inner.m())
}

/// # Safety
/// `seq` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_sequence_kind(seq: *const RavkitSequence, out: *mut RavkitSequenceKind) -> RavkitStatus {
    guard(|| {
        let kind = match seq_arg(seq)?.kind {
            SequenceKind::Rav => RavkitSequenceKind::Rav,
            SequenceKind::Xeb => RavkitSequenceKind::Xeb,
        };
        write_out(out, kind, "out")
    })
}

/// Recorded inversion error of a RAV sequence.
///
/// # Safety
/// `seq` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_sequence_epsilon(seq: *const RavkitSequence, out: *mut f64) -> RavkitStatus {
    guard(|| {
        let eps = seq_arg(seq)?
            .epsilon
            .ok_or_else(|| Failure(RavkitStatus::InvalidArgument, "sequence has no inversion error".into()))?;
        write_out(out, eps, "out")
    })
}

/// Ideal and noisy outcome distributions from basis state `x0`. Both buffers
/// hold `len == 2^n` doubles; either may be NULL.
///
/// # Safety
/// Non-null buffers must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ravkit_simulate(
    seq: *const RavkitSequence,
    noise: RavkitNoise,
    x0: usize,
    ideal_out: *mut f64,
    noisy_out: *mut f64,
    len: usize,
) -> RavkitStatus {
    guard(|| {
        let seq = seq_arg(seq)?;
        if len != seq.dim() {
            return Err(Failure(RavkitStatus::InvalidArgument, format!("buffer length {len}, need {}", seq.dim())));
        }
        let sim = simulate(seq, &noise_model(noise), x0)?;
        for (buf, dist) in [(ideal_out, &sim.ideal_probs), (noisy_out, &sim.noisy_probs)] {
            if !buf.is_null() {
                ptr::copy_nonoverlapping(dist.probs().as_ptr(), buf, len);
            }
        }
        Ok(())
    })
}

/// Sample `shots` outcomes into `outcomes_out`.
///
/// # Safety
/// `outcomes_out` must be writable for `shots` values.
#[no_mangle]
pub unsafe extern "C" fn ravkit_sample_shots(
    seq: *const RavkitSequence,
    noise: RavkitNoise,
    x0: usize,
    shots: usize,
    seed: u64,
    outcomes_out: *mut usize,
) -> RavkitStatus {
    guard(|| {
        let seq = seq_arg(seq)?;
        if outcomes_out.is_null() {
            return Err(null("outcomes_out"));
        }
        let r = run_shots(seq, &noise_model(noise), x0, shots, &mut SeededRng::new(seed))?;
        ptr::copy_nonoverlapping(r.outcomes.as_ptr(), outcomes_out, shots);
        Ok(())
    })
}

/// RAV fidelity estimate from `P(x0)` and the observed return frequency.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_f_rav(p_x0: f64, q_x0: f64, dim: usize, out: *mut f64) -> RavkitStatus {
    guard(|| write_out(out, f_rav(p_x0, q_x0, dim)?, "out"))
}

/// XEB fidelity estimate from the ideal distribution and outcome counts,
/// both of length `dim`.
///
/// # Safety
/// `ideal` and `counts` must be readable for `dim` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_f_xeb(
    ideal: *const f64,
    counts: *const u64,
    dim: usize,
    shots: u64,
    out: *mut f64,
) -> RavkitStatus {
    guard(|| {
        let probs = slice_arg(ideal, dim, "ideal")?.to_vec();
        let counts = slice_arg(counts, dim, "counts")?;
        let dist = OutcomeDistribution::new(probs)?;
        write_out(out, f_xeb(&dist, counts, shots)?, "out")
    })
}

/// Fit `F(m) = A·α^m` or `A·α^{m²}` to one estimate per sequence.
///
/// # Safety
/// `ms` and `fs` must be readable for `len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_fit_decay(
    ms: *const usize,
    fs: *const f64,
    len: usize,
    model: RavkitDecayModel,
    bin_size: usize,
    out: *mut RavkitFit,
) -> RavkitStatus {
    guard(|| {
        let ms = slice_arg(ms, len, "ms")?;
        let fs = slice_arg(fs, len, "fs")?;
        let points: Vec<FidelityPoint> = ms
            .iter()
            .zip(fs)
            .enumerate()
            .map(|(i, (&m, &f_hat))| FidelityPoint { m, f_hat, kind: SequenceKind::Rav, shots: 0, sequence_id: i })
            .collect();
        let model = match model {
            RavkitDecayModel::Exponential => DecayModel::Exponential,
            RavkitDecayModel::Gaussian => DecayModel::Gaussian,
        };
        let fit = fit_decay_binned(&points, model, bin_size)?;
        write_out(
            out,
            RavkitFit { alpha: fit.alpha, chi2_reduced: fit.chi2_reduced.unwrap_or(f64::NAN), fidelity_loss: fit.fidelity_loss },
            "out",
        )
    })
}

/// Compile a Haar-random `n`-qubit unitary from R and XX gates and report
/// the final cost.
///
/// # Safety
/// `cost_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ravkit_stoq_compile_haar(
    n_qubits: usize,
    iterations: usize,
    delta_beta: f64,
    seed: u64,
    cost_out: *mut f64,
) -> RavkitStatus {
    guard(|| {
        let root = SeededRng::new(seed);
        let target = haar_random_unitary(n_qubits, &mut root.derive(0))?;
        let source = GateSource::r_xx(n_qubits)?;
        let params = StoqParams { num_iterations: iterations, delta_beta, ..StoqParams::default() };
        let c = compile(&target, &source, &params, &mut root.derive(1))?;
        write_out(cost_out, c.final_cost, "cost_out")
    })
}
