//! C ABI for conbandit.
//!
//! Every function returns a [`CbStatus`]; results go through out-pointers.
//! On failure, [`cb_last_error`] describes the most recent error on the
//! calling thread. Handles are created by `*_new`/`*_create` functions and
//! released with the matching `*_free`; passing a freed handle is undefined
//! behaviour, passing null is reported as [`CbStatus::NullPointer`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use conbandit::environments::{
    build_synthetic_contextual, build_synthetic_stochastic, one_hot_contexts, DimMode,
    DiscountFactor,
};
use conbandit::harness::{self, EpisodeTrace};
use conbandit::keyterm;
use conbandit::policies::{HierParams, Policy, PolicyKind, PolicySpec};
use conbandit::{Action, Environment, Error, ItemId, KeyTermId};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DataError = 3,
    ConfigError = 4,
    IoError = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbActionKind {
    Item = 0,
    KeyTerm = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CbAction {
    pub kind: CbActionKind,
    pub id: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbPolicyKind {
    HierUcb = 0,
    Ucb = 1,
    HierLinucb = 2,
    Linucb = 3,
    FreqconLinucb = 4,
    Oracle = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbTraceRow {
    pub round: u64,
    pub action: CbAction,
    pub reward: f64,
    pub expected: f64,
    pub regret_inc: f64,
    pub cum_regret: f64,
    pub switching: bool,
    pub pending: bool,
}

/// An environment handle.
pub struct CbEnv(Box<dyn Environment>);

/// A policy handle.
pub struct CbPolicy(Box<dyn Policy>);

/// A recorded episode.
pub struct CbTrace(EpisodeTrace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CbStatus {
    match e {
        Error::Input(_) => CbStatus::InvalidInput,
        Error::Data { .. } | Error::Csv { .. } => CbStatus::DataError,
        Error::Config(_) => CbStatus::ConfigError,
        Error::Io { .. } => CbStatus::IoError,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CbStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} is null"));
            CbStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CbStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn write<T>(out: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn to_action(a: CbAction) -> Action {
    match a.kind {
        CbActionKind::Item => Action::Item(ItemId(a.id)),
        CbActionKind::KeyTerm => Action::KeyTerm(KeyTermId(a.id)),
    }
}

fn from_action(a: Action) -> CbAction {
    match a {
        Action::Item(i) => CbAction {
            kind: CbActionKind::Item,
            id: i.0,
        },
        Action::KeyTerm(k) => CbAction {
            kind: CbActionKind::KeyTerm,
            id: k.0,
        },
    }
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Bernoulli environment with contiguous key-term blocks and item means
/// `i / n`; one-hot contexts are attached so contextual policies can run.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn cb_env_synthetic_stochastic(
    num_keyterms: usize,
    items_per_keyterm: usize,
    lambda: f64,
    seed: u64,
    out: *mut *mut CbEnv,
) -> CbStatus {
    guard(|| {
        let lambda = DiscountFactor::new(lambda)?;
        let mut env = build_synthetic_stochastic(num_keyterms, items_per_keyterm, lambda, seed)?;
        let contexts = one_hot_contexts(env.catalog(), env.item_means(), lambda)?;
        env.attach_contexts(contexts)?;
        write(out, Box::into_raw(Box::new(CbEnv(Box::new(env)))), "out")
    })
}

/// Linear environment with Gaussian noise; `dim == 0` selects one-hot
/// contexts, otherwise random unit vectors of that dimension.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn cb_env_synthetic_contextual(
    num_keyterms: usize,
    items_per_keyterm: usize,
    dim: usize,
    lambda: f64,
    noise_sigma: f64,
    seed: u64,
    out: *mut *mut CbEnv,
) -> CbStatus {
    guard(|| {
        let mode = if dim == 0 {
            DimMode::OneHot
        } else {
            DimMode::RandomUnit { dim }
        };
        let lambda = DiscountFactor::new(lambda)?;
        let env =
            build_synthetic_contextual(num_keyterms, items_per_keyterm, mode, lambda, noise_sigma, seed)?;
        write(out, Box::into_raw(Box::new(CbEnv(Box::new(env)))), "out")
    })
}

/// # Safety
/// `env` must be null or a handle from this library that was not freed.
#[no_mangle]
pub unsafe extern "C" fn cb_env_free(env: *mut CbEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// Pointers must be valid; `env` a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_env_size(
    env: *const CbEnv,
    num_items: *mut usize,
    num_keyterms: *mut usize,
) -> CbStatus {
    guard(|| {
        let env = deref(env, "env")?;
        write(num_items, env.0.catalog().num_items(), "num_items")?;
        write(num_keyterms, env.0.catalog().num_keyterms(), "num_keyterms")
    })
}

/// # Safety
/// Pointers must be valid; `env` a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_env_expected_reward(
    env: *const CbEnv,
    action: CbAction,
    out: *mut f64,
) -> CbStatus {
    guard(|| {
        let env = deref(env, "env")?;
        write(out, env.0.expected_reward(to_action(action))?, "out")
    })
}

/// # Safety
/// Pointers must be valid; `env` a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_env_optimal(
    env: *const CbEnv,
    value: *mut f64,
    action: *mut CbAction,
) -> CbStatus {
    guard(|| {
        let (v, a) = deref(env, "env")?.0.optimal();
        write(value, v, "value")?;
        write(action, from_action(a), "action")
    })
}

/// Samples one reward for `action` at 1-based `round`.
///
/// # Safety
/// Pointers must be valid; `env` a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_env_step(
    env: *mut CbEnv,
    action: CbAction,
    round: u64,
    out: *mut f64,
) -> CbStatus {
    guard(|| {
        let env = deref_mut(env, "env")?;
        write(out, env.0.step(to_action(action), round)?, "out")
    })
}

/// Builds a policy for `env`. `gamma` and `alpha` are ignored by policies
/// that do not use them.
///
/// # Safety
/// Pointers must be valid; `env` a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_policy_new(
    env: *const CbEnv,
    kind: CbPolicyKind,
    gamma: f64,
    alpha: f64,
    out: *mut *mut CbPolicy,
) -> CbStatus {
    guard(|| {
        let env = deref(env, "env")?;
        let kind = match kind {
            CbPolicyKind::HierUcb => PolicyKind::HierUcb,
            CbPolicyKind::Ucb => PolicyKind::Ucb,
            CbPolicyKind::HierLinucb => PolicyKind::HierLinucb,
            CbPolicyKind::Linucb => PolicyKind::Linucb,
            CbPolicyKind::FreqconLinucb => PolicyKind::FreqconLinucb,
            CbPolicyKind::Oracle => PolicyKind::Oracle,
        };
        let policy = PolicySpec::new(kind, HierParams::new(gamma, alpha)?).build(env.0.as_ref())?;
        write(out, Box::into_raw(Box::new(CbPolicy(policy))), "out")
    })
}

/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_policy_free(policy: *mut CbPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// # Safety
/// Pointers must be valid; handles live.
#[no_mangle]
pub unsafe extern "C" fn cb_policy_select(
    policy: *mut CbPolicy,
    env: *const CbEnv,
    out: *mut CbAction,
) -> CbStatus {
    guard(|| {
        let policy = deref_mut(policy, "policy")?;
        let env = deref(env, "env")?;
        write(out, from_action(policy.0.select(env.0.contexts())?), "out")
    })
}

/// # Safety
/// Pointers must be valid; handles live.
#[no_mangle]
pub unsafe extern "C" fn cb_policy_update(
    policy: *mut CbPolicy,
    env: *const CbEnv,
    action: CbAction,
    reward: f64,
) -> CbStatus {
    guard(|| {
        let policy = deref_mut(policy, "policy")?;
        let env = deref(env, "env")?;
        policy.0.update(to_action(action), env.0.contexts(), reward)?;
        Ok(())
    })
}

/// Plays `horizon` rounds of `policy` against `env`.
///
/// # Safety
/// Pointers must be valid; handles live.
#[no_mangle]
pub unsafe extern "C" fn cb_run_episode(
    env: *mut CbEnv,
    policy: *mut CbPolicy,
    horizon: u64,
    out: *mut *mut CbTrace,
) -> CbStatus {
    guard(|| {
        let env = deref_mut(env, "env")?;
        let policy = deref_mut(policy, "policy")?;
        let trace = harness::run_episode(env.0.as_mut(), policy.0.as_mut(), horizon)?;
        write(out, Box::into_raw(Box::new(CbTrace(trace))), "out")
    })
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_trace_free(trace: *mut CbTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// Pointers must be valid; `trace` a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_trace_len(trace: *const CbTrace, out: *mut usize) -> CbStatus {
    guard(|| write(out, deref(trace, "trace")?.0.len(), "out"))
}

/// Copies row `index` (0-based) of the trace.
///
/// # Safety
/// Pointers must be valid; `trace` a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_trace_row(
    trace: *const CbTrace,
    index: usize,
    out: *mut CbTraceRow,
) -> CbStatus {
    guard(|| {
        let trace = deref(trace, "trace")?;
        let r = trace.0.rows.get(index).ok_or_else(|| {
            Error::Input(format!("row {index} out of range for {} rows", trace.0.len()))
        })?;
        write(
            out,
            CbTraceRow {
                round: r.round,
                action: from_action(r.action),
                reward: r.reward,
                expected: r.expected,
                regret_inc: r.regret_inc,
                cum_regret: r.cum_regret,
                switching: r.switching,
                pending: r.pending,
            },
            "out",
        )
    })
}

/// Writes the switch point into `round` and whether one exists into `found`
/// (false when the trace ends with a key-term).
///
/// # Safety
/// Pointers must be valid; `trace` a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_trace_switch_point(
    trace: *const CbTrace,
    found: *mut bool,
    round: *mut u64,
) -> CbStatus {
    guard(|| {
        let point = harness::detect_switch_point(&deref(trace, "trace")?.0);
        write(found, point.is_some(), "found")?;
        write(round, point.unwrap_or(0), "round")
    })
}

/// # Safety
/// `ratings` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cb_simple_average(ratings: *const f64, len: usize, out: *mut f64) -> CbStatus {
    guard(|| write(out, keyterm::simple_average(slice(ratings, len, "ratings")?)?, "out"))
}

/// # Safety
/// `ratings` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cb_top_alpha_average(
    ratings: *const f64,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> CbStatus {
    guard(|| {
        let value = keyterm::top_alpha_average(slice(ratings, len, "ratings")?, alpha)?;
        write(out, value, "out")
    })
}

/// # Safety
/// `ratings` and `weights` must each point to `len` doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cb_weighted_average(
    ratings: *const f64,
    weights: *const f64,
    len: usize,
    out: *mut f64,
) -> CbStatus {
    guard(|| {
        let value = keyterm::weighted_average(
            slice(ratings, len, "ratings")?,
            slice(weights, len, "weights")?,
        )?;
        write(out, value, "out")
    })
}

/// Normal-approximation interval `mean ± z·s/√n`.
///
/// # Safety
/// `samples` must point to `len` doubles; `low` and `high` valid.
#[no_mangle]
pub unsafe extern "C" fn cb_confidence_interval(
    samples: *const f64,
    len: usize,
    level: f64,
    low: *mut f64,
    high: *mut f64,
) -> CbStatus {
    guard(|| {
        let (lo, hi) = harness::confidence_interval(slice(samples, len, "samples")?, level)?;
        write(low, lo, "low")?;
        write(high, hi, "high")
    })
}
