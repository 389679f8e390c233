//! C ABI over the banditmatch dialog world and policy networks.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a [`BmStatus`];
//! on failure the message is available from [`bm_last_error`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use banditmatch::datasets::simulate_feedback;
use banditmatch::dialogworld::{ActionSet, GoalConfig, World, WorldGenConfig, WorldSchema};
use banditmatch::policy::PolicyNet;
use banditmatch::rng;
use banditmatch::trainer::evaluate;
use banditmatch::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    MissingFile = 3,
    VersionMismatch = 4,
    ParseError = 5,
    IoError = 6,
    DimensionMismatch = 7,
    ConfigError = 8,
    NumericError = 9,
    Panic = 10,
}

/// Opaque dialog world.
pub struct BmWorld {
    world: World,
}

/// Opaque policy network.
pub struct BmPolicy {
    policy: PolicyNet,
}

/// Means over evaluation runs.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BmMetrics {
    pub turns: f64,
    pub matched: f64,
    pub inform_recall: f64,
    pub inform_f1: f64,
    pub success_pct: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BmStatus {
    match e {
        Error::Usage(_) => BmStatus::InvalidArgument,
        Error::Config(_) => BmStatus::ConfigError,
        Error::MissingFile(_) => BmStatus::MissingFile,
        Error::Version { .. } => BmStatus::VersionMismatch,
        Error::Parse { .. } => BmStatus::ParseError,
        Error::Io { .. } => BmStatus::IoError,
        Error::Dimension { .. } => BmStatus::DimensionMismatch,
        Error::NonFiniteGradient { .. } | Error::NonFiniteLoss(_) => BmStatus::NumericError,
    }
}

enum Failure {
    Status(BmStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(BmStatus::NullPointer, format!("`{what}` is null"))
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> BmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BmStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            BmStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(BmStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut_arg<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<(), Failure> {
    if expected != got {
        return Err(Failure::Lib(Error::Dimension { context, expected, got }));
    }
    Ok(())
}

/// Message of the last failing call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Default world generated from `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bm_world_generate(seed: u64, out: *mut *mut BmWorld) -> BmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let schema = WorldSchema::generate(&WorldGenConfig::default(), &mut rng::stream(seed, "world"))?;
        *out = Box::into_raw(Box::new(BmWorld { world: World::new(schema) }));
        Ok(())
    })
}

/// Load a world schema file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bm_world_load(path: *const c_char, out: *mut *mut BmWorld) -> BmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let schema = WorldSchema::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(BmWorld { world: World::new(schema) }));
        Ok(())
    })
}

/// Number of atomic actions, or 0 for a null handle.
///
/// # Safety
/// `world` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bm_world_num_actions(world: *const BmWorld) -> usize {
    world.as_ref().map_or(0, |w| w.world.num_actions())
}

/// State vector length, or 0 for a null handle.
///
/// # Safety
/// `world` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bm_world_state_dim(world: *const BmWorld) -> usize {
    world.as_ref().map_or(0, |w| w.world.state_dim())
}

/// # Safety
/// `world` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bm_world_free(world: *mut BmWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Load a policy checkpoint.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bm_policy_load(path: *const c_char, out: *mut *mut BmPolicy) -> BmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let policy = PolicyNet::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(BmPolicy { policy }));
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bm_policy_num_actions(policy: *const BmPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.policy.num_actions())
}

/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bm_policy_state_dim(policy: *const BmPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.policy.spec().input_dim)
}

/// # Safety
/// `policy` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bm_policy_free(policy: *mut BmPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Per-action probabilities for one state.
///
/// # Safety
/// `state` must hold `state_len` values and `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn bm_policy_probs(
    policy: *const BmPolicy,
    state: *const f64,
    state_len: usize,
    out: *mut f64,
    out_len: usize,
) -> BmStatus {
    guard(|| {
        let p = &policy.as_ref().ok_or_else(|| null("policy"))?.policy;
        let s = slice_arg(state, state_len, "state")?;
        let o = slice_mut_arg(out, out_len, "out")?;
        check_len("state vector", p.spec().input_dim, s.len())?;
        check_len("output buffer", p.num_actions(), o.len())?;
        o.copy_from_slice(&p.probs(s)?);
        Ok(())
    })
}

/// Predicted action set as a 0/1 mask (probability above one half).
///
/// # Safety
/// `state` must hold `state_len` values and `mask` room for `mask_len`.
#[no_mangle]
pub unsafe extern "C" fn bm_policy_predict(
    policy: *const BmPolicy,
    state: *const f64,
    state_len: usize,
    mask: *mut u8,
    mask_len: usize,
) -> BmStatus {
    guard(|| {
        let p = &policy.as_ref().ok_or_else(|| null("policy"))?.policy;
        let s = slice_arg(state, state_len, "state")?;
        let m = slice_mut_arg(mask, mask_len, "mask")?;
        check_len("state vector", p.spec().input_dim, s.len())?;
        check_len("output buffer", p.num_actions(), m.len())?;
        let (set, _) = p.predict_set(s)?;
        for (k, v) in m.iter_mut().enumerate() {
            *v = u8::from(set.contains(k));
        }
        Ok(())
    })
}

/// Roll the policy out against the simulated user with default goals.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bm_evaluate(
    policy: *const BmPolicy,
    world: *const BmWorld,
    n_dialogs: usize,
    n_runs: usize,
    seed: u64,
    out: *mut BmMetrics,
) -> BmStatus {
    guard(|| {
        let p = &policy.as_ref().ok_or_else(|| null("policy"))?.policy;
        let w = &world.as_ref().ok_or_else(|| null("world"))?.world;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        p.check_world(w)?;
        let r = evaluate(p, "ffi", w, &GoalConfig::default(), n_dialogs, n_runs, seed)?;
        let s = &r.summary;
        *out = BmMetrics {
            turns: s.turns.mean,
            matched: s.matched.mean,
            inform_recall: s.inform_recall.mean,
            inform_f1: s.inform_f1.mean,
            success_pct: s.success_pct.mean,
        };
        Ok(())
    })
}

/// Feedback for a predicted set against the expert set, both as 0/1 masks:
/// 1 when the sets are equal, else 0.
///
/// # Safety
/// Both masks must hold `len` bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn bm_simulate_feedback(predicted: *const u8, truth: *const u8, len: usize, out: *mut u8) -> BmStatus {
    guard(|| {
        let to_set = |m: &[u8]| {
            let mut s = ActionSet::new();
            for (k, &v) in m.iter().enumerate() {
                if v != 0 {
                    s.insert(k);
                }
            }
            s
        };
        let p = to_set(slice_arg(predicted, len, "predicted")?);
        let t = to_set(slice_arg(truth, len, "truth")?);
        *out.as_mut().ok_or_else(|| null("out"))? = simulate_feedback(&p, &t);
        Ok(())
    })
}
