//! C ABI over `camlab`.
//!
//! Objects cross the boundary as opaque handles created by a `*_new`/`*_load`
//! function and released with the matching `*_free`. Every fallible call
//! returns a [`CamlabStatus`]; on failure a message is available from
//! [`camlab_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use camlab::bnb::{solve_bnb, BnbConfig, BnbLimits, BnbStatus, BranchingPolicy};
use camlab::gcnn::GcnnModel;
use camlab::instgen::GenSpec;
use camlab::lp::{check_shift_equivalence, solve_lp, LpStatus};
use camlab::milp::{MilpInstance, ShiftVector};
use camlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CamlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    /// The model is not solvable as asked (infeasible LP, limit hit, ...).
    Solver = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CamlabPolicy {
    Fsb = 0,
    MostFractional = 1,
    Pseudocost = 2,
    Random = 3,
    /// Requires a model handle.
    Learned = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CamlabSearchStatus {
    OptimalProved = 0,
    Infeasible = 1,
    TimeLimit = 2,
    NodeLimit = 3,
}

/// Outcome of [`camlab_solve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CamlabSolveSummary {
    pub status: CamlabSearchStatus,
    /// Best objective found; `+inf` without an incumbent.
    pub objective: f64,
    pub nodes: u64,
    pub lp_solves: u64,
    /// Deterministic work units spent.
    pub work: u64,
}

/// Opaque MILP instance.
pub struct CamlabInstance {
    inner: MilpInstance,
}

/// Opaque trained policy network.
pub struct CamlabModel {
    inner: Arc<GcnnModel>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> CamlabStatus {
    match e {
        Error::Io(_) => CamlabStatus::Io,
        Error::Json(_) | Error::Schema { .. } => CamlabStatus::Parse,
        Error::IterationLimit(_) | Error::NotOptimal(_) | Error::Bnb(_) => CamlabStatus::Solver,
        _ => CamlabStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), (CamlabStatus, String)>) -> CamlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CamlabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside camlab");
            CamlabStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, (CamlabStatus, String)>;
}

impl<T> OrStatus<T> for camlab::Result<T> {
    fn or_status(self) -> Result<T, (CamlabStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (CamlabStatus, String) {
    (CamlabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CamlabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CamlabStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (CamlabStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn camlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn camlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a desk-scale instance of `family` (`setcover`, `cauctions`,
/// `facilities`, `indset`).
///
/// # Safety
/// `family` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn camlab_instance_generate(
    family: *const c_char,
    seed: u64,
    out: *mut *mut CamlabInstance,
) -> CamlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let family = str_arg(family, "family")?;
        let inst = GenSpec::default_for(family, seed).and_then(|g| g.generate()).or_status()?;
        *out = Box::into_raw(Box::new(CamlabInstance { inner: inst }));
        Ok(())
    })
}

/// Reads an instance JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn camlab_instance_load(
    path: *const c_char,
    out: *mut *mut CamlabInstance,
) -> CamlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let inst = MilpInstance::load_json(Path::new(path)).or_status()?;
        inst.validate().into_result().or_status()?;
        *out = Box::into_raw(Box::new(CamlabInstance { inner: inst }));
        Ok(())
    })
}

/// # Safety
/// `inst` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn camlab_instance_save(inst: *const CamlabInstance, path: *const c_char) -> CamlabStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("inst"))?;
        let path = str_arg(path, "path")?;
        inst.inner.save_json(Path::new(path)).or_status()
    })
}

/// # Safety
/// `inst` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn camlab_instance_free(inst: *mut CamlabInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of variables, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn camlab_instance_num_vars(inst: *const CamlabInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.n_vars)
}

/// Number of constraints, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn camlab_instance_num_cons(inst: *const CamlabInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.n_cons)
}

/// Builds the instance shifted by `shift[0..len]`; `len` must equal the
/// variable count and integer variables need integral entries.
///
/// # Safety
/// `inst` must be a live handle, `shift` must point to `len` doubles and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn camlab_instance_shift(
    inst: *const CamlabInstance,
    shift: *const f64,
    len: usize,
    out: *mut *mut CamlabInstance,
) -> CamlabStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("inst"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = ShiftVector(slice_arg(shift, len, "shift")?.to_vec());
        let shifted = inst.inner.shift(&s).or_status()?;
        *out = Box::into_raw(Box::new(CamlabInstance { inner: shifted }));
        Ok(())
    })
}

/// Solves the LP relaxation. Writes the objective (with constant) and, when
/// `x` is non-null, the `len` = variable-count solution entries.
///
/// # Safety
/// `inst` must be a live handle, `objective` a valid pointer and `x` null or
/// writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn camlab_lp_solve(
    inst: *const CamlabInstance,
    x: *mut f64,
    len: usize,
    objective: *mut f64,
) -> CamlabStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("inst"))?;
        if objective.is_null() {
            return Err(null("objective"));
        }
        let lp = solve_lp(&inst.inner.lp_relaxation()).or_status()?;
        if lp.status != LpStatus::Optimal {
            return Err((CamlabStatus::Solver, format!("LP relaxation is {:?}", lp.status)));
        }
        if !x.is_null() {
            if len != inst.inner.n_vars {
                return Err((
                    CamlabStatus::InvalidArgument,
                    format!("x has {len} entries, instance has {} variables", inst.inner.n_vars),
                ));
            }
            std::slice::from_raw_parts_mut(x, len).copy_from_slice(&lp.x);
        }
        *objective = lp.objective;
        Ok(())
    })
}

/// Compares the LP relaxations of `inst` and its shift. `passed` receives
/// whether solution, objective, duals, reduced costs and basis all agree
/// within `tol`.
///
/// # Safety
/// `inst` must be a live handle, `shift` must point to `len` doubles and
/// `passed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn camlab_verify_shift(
    inst: *const CamlabInstance,
    shift: *const f64,
    len: usize,
    tol: f64,
    passed: *mut bool,
) -> CamlabStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("inst"))?;
        if passed.is_null() {
            return Err(null("passed"));
        }
        let s = ShiftVector(slice_arg(shift, len, "shift")?.to_vec());
        let report = check_shift_equivalence(&inst.inner, &s, tol).or_status()?;
        *passed = report.passed();
        Ok(())
    })
}

/// Reads a model JSON file written by `camlab train`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn camlab_model_load(path: *const c_char, out: *mut *mut CamlabModel) -> CamlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let model = GcnnModel::load_json(Path::new(path)).or_status()?;
        *out = Box::into_raw(Box::new(CamlabModel { inner: Arc::new(model) }));
        Ok(())
    })
}

/// Model with freshly initialized weights, mostly for testing.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn camlab_model_init(hidden: usize, seed: u64, out: *mut *mut CamlabModel) -> CamlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if hidden == 0 {
            return Err((CamlabStatus::InvalidArgument, "hidden width must be positive".into()));
        }
        *out = Box::into_raw(Box::new(CamlabModel {
            inner: Arc::new(GcnnModel::init(hidden, seed)),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn camlab_model_free(model: *mut CamlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs branch and bound. `model` is only read for `Learned`; a zero limit
/// means none. Time is measured in deterministic work seconds.
///
/// # Safety
/// `inst` must be a live handle, `model` null or a live handle, and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn camlab_solve(
    inst: *const CamlabInstance,
    policy: CamlabPolicy,
    seed: u64,
    model: *const CamlabModel,
    node_limit: u64,
    time_limit: f64,
    out: *mut CamlabSolveSummary,
) -> CamlabStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("inst"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if time_limit.is_nan() || time_limit < 0.0 {
            return Err((CamlabStatus::InvalidArgument, format!("time limit {time_limit} is invalid")));
        }
        let policy = match policy {
            CamlabPolicy::Fsb => BranchingPolicy::Fsb,
            CamlabPolicy::MostFractional => BranchingPolicy::MostFractional,
            CamlabPolicy::Pseudocost => BranchingPolicy::Pseudocost,
            CamlabPolicy::Random => BranchingPolicy::Random { seed },
            CamlabPolicy::Learned => {
                let m = model.as_ref().ok_or_else(|| null("model"))?;
                BranchingPolicy::Learned(Arc::clone(&m.inner))
            }
        };
        let config = BnbConfig {
            limits: BnbLimits {
                nodes: (node_limit > 0).then_some(node_limit as usize),
                time: (time_limit > 0.0).then_some(time_limit),
            },
            ..BnbConfig::default()
        };
        let r = solve_bnb(&inst.inner, &policy, &config).or_status()?;
        *out = CamlabSolveSummary {
            status: match r.status {
                BnbStatus::OptimalProved => CamlabSearchStatus::OptimalProved,
                BnbStatus::Infeasible => CamlabSearchStatus::Infeasible,
                BnbStatus::TimeLimit => CamlabSearchStatus::TimeLimit,
                BnbStatus::NodeLimit => CamlabSearchStatus::NodeLimit,
            },
            objective: r.best_objective,
            nodes: r.nodes_processed as u64,
            lp_solves: r.lp_solves as u64,
            work: r.work,
        };
        Ok(())
    })
}
