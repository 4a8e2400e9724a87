//! C ABI over the factor engine.
//!
//! Conventions:
//! * `AtPanel` and `AtRecipe` are opaque handles; release them with the
//!   matching `at_*_free`. Passing null to a `free` is a no-op.
//! * Every fallible call returns an [`AtStatus`]; on a non-`Ok` status a
//!   UTF-8 message is available from [`at_last_error`]. The message is
//!   thread-local and valid until the next failing call on the same thread.
//! * Strings returned as `*mut c_char` are owned by the caller and must be
//!   released with [`at_string_free`].
//! * Panics never unwind across the boundary; they surface as
//!   [`AtStatus::InternalPanic`].
//!
//! The C header lives at `include/alphatrace.h`; build with the
//! `generate-header` feature to regenerate it via cbindgen.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use alphatrace::dsl::{self, Expr};
use alphatrace::eval::{apply_gate, evaluate_metrics, GateConfig};
use alphatrace::panel::{
    compute_derived, forward_return, load_panel, DerivedWindowConfig, Panel, SchemaMap,
};
use alphatrace::Error;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The recipe text failed to parse.
    ParseError = 3,
    /// The recipe parsed but violated a structural rule.
    ValidationError = 4,
    /// The data file could not be read or ingested.
    IoError = 5,
    /// Evaluation failed (bad parameters, degenerate inputs).
    EvalError = 6,
    /// An internal panic was caught at the boundary.
    InternalPanic = 7,
}

/// Per-recipe feedback metrics, mirrored from the engine's evaluation tuple.
/// `ic_tstat` is +/- infinity when `ic_tstat_degenerate` is non-zero.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AtMetrics {
    pub mean_ic: f64,
    pub ic_tstat: f64,
    pub ls_sharpe: f64,
    pub coverage: f64,
    pub n_days: u64,
    pub ic_tstat_degenerate: u8,
    /// Verdict of the default evidence gate over the evaluated dates.
    pub gate_passed: u8,
}

/// Opaque handle to an ingested data panel.
pub struct AtPanel {
    inner: Panel,
}

/// Opaque handle to a parsed recipe expression.
pub struct AtRecipe {
    expr: Expr,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let owned = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn status_of(err: &Error) -> AtStatus {
    match err {
        Error::Parse { .. } => AtStatus::ParseError,
        Error::InvalidRecipe(_) => AtStatus::ValidationError,
        Error::Io { .. } | Error::Csv(_) => AtStatus::IoError,
        _ => AtStatus::EvalError,
    }
}

/// Run a closure, converting panics into `InternalPanic`.
fn guarded(f: impl FnOnce() -> AtStatus) -> AtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic caught at the FFI boundary");
            AtStatus::InternalPanic
        }
    }
}

/// # Safety
/// `ptr` must be a valid, NUL-terminated C string.
unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, AtStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(AtStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(format!("invalid UTF-8 in argument: {e}"));
        AtStatus::InvalidUtf8
    })
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn at_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn at_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string previously returned by this library.
///
/// # Safety
/// `s` must be null or a pointer returned by an `at_*` function documented
/// as caller-owned, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn at_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a raw OHLCV+market-cap CSV (default column names) and attach the
/// standard derived columns. On success writes a new handle to `out`.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_panel_load(path: *const c_char, out: *mut *mut AtPanel) -> AtStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return AtStatus::NullArgument;
        }
        let path = match cstr(path) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match load_panel(Path::new(path), &SchemaMap::default()) {
            Ok((panel, _report)) => {
                let panel = compute_derived(&panel, &DerivedWindowConfig::default());
                *out = Box::into_raw(Box::new(AtPanel { inner: panel }));
                AtStatus::Ok
            }
            Err(e) => {
                set_error(&e);
                status_of(&e)
            }
        }
    })
}

/// Release a panel handle.
///
/// # Safety
/// `p` must be null or a pointer from `at_panel_load`, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn at_panel_free(p: *mut AtPanel) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of assets in the panel; 0 if the handle is null.
///
/// # Safety
/// `p` must be null or a valid panel handle.
#[no_mangle]
pub unsafe extern "C" fn at_panel_n_assets(p: *const AtPanel) -> u64 {
    p.as_ref().map_or(0, |p| p.inner.n_assets() as u64)
}

/// Number of dates in the panel; 0 if the handle is null.
///
/// # Safety
/// `p` must be null or a valid panel handle.
#[no_mangle]
pub unsafe extern "C" fn at_panel_n_dates(p: *const AtPanel) -> u64 {
    p.as_ref().map_or(0, |p| p.inner.n_dates() as u64)
}

/// Parse recipe text into a handle. On success writes a new handle to `out`.
///
/// # Safety
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_recipe_parse(text: *const c_char, out: *mut *mut AtRecipe) -> AtStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return AtStatus::NullArgument;
        }
        let text = match cstr(text) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match dsl::parse_recipe(text) {
            Ok(expr) => {
                *out = Box::into_raw(Box::new(AtRecipe { expr }));
                AtStatus::Ok
            }
            Err(e) => {
                set_error(&e);
                status_of(&e)
            }
        }
    })
}

/// Release a recipe handle.
///
/// # Safety
/// `r` must be null or a pointer from `at_recipe_parse`, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn at_recipe_free(r: *mut AtRecipe) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Canonical single-line form of the recipe. Caller owns the returned string
/// (`at_string_free`); null if the handle is null.
///
/// # Safety
/// `r` must be null or a valid recipe handle.
#[no_mangle]
pub unsafe extern "C" fn at_recipe_canonical(r: *const AtRecipe) -> *mut c_char {
    let Some(r) = r.as_ref() else {
        return ptr::null_mut();
    };
    CString::new(dsl::canonical_form(&r.expr))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Check a recipe against an approved-column list and a depth budget.
/// Returns `Ok` when valid; `ValidationError` puts the joined violation
/// messages in `at_last_error`.
///
/// # Safety
/// `r` must be a valid recipe handle and `columns` an array of `n_columns`
/// valid C strings.
#[no_mangle]
pub unsafe extern "C" fn at_recipe_validate(
    r: *const AtRecipe,
    columns: *const *const c_char,
    n_columns: usize,
    max_depth: usize,
) -> AtStatus {
    guarded(|| {
        let Some(r) = r.as_ref() else {
            set_error("null recipe handle");
            return AtStatus::NullArgument;
        };
        if columns.is_null() && n_columns > 0 {
            set_error("null column list");
            return AtStatus::NullArgument;
        }
        let mut approved = BTreeSet::new();
        for i in 0..n_columns {
            match cstr(*columns.add(i)) {
                Ok(s) => {
                    approved.insert(s.to_string());
                }
                Err(code) => return code,
            }
        }
        let report = dsl::validate(&r.expr, &approved, max_depth);
        if report.ok {
            AtStatus::Ok
        } else {
            let joined: Vec<String> = report
                .violations
                .iter()
                .map(|v| format!("[{}] {} (at {})", v.rule, v.message, v.node_path))
                .collect();
            set_error(joined.join("; "));
            AtStatus::ValidationError
        }
    })
}

/// Evaluate a recipe over the whole panel and fill `out` with the feedback
/// metrics, using forward returns with the given execution lag and holding
/// period and the default evidence gate.
///
/// # Safety
/// `panel` and `recipe` must be valid handles; `out` must point to an
/// `AtMetrics`.
#[no_mangle]
pub unsafe extern "C" fn at_recipe_metrics(
    panel: *const AtPanel,
    recipe: *const AtRecipe,
    exec_lag: usize,
    hold: usize,
    ls_quantile: f64,
    out: *mut AtMetrics,
) -> AtStatus {
    guarded(|| {
        let (Some(panel), Some(recipe)) = (panel.as_ref(), recipe.as_ref()) else {
            set_error("null panel or recipe handle");
            return AtStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null output pointer");
            return AtStatus::NullArgument;
        }
        if exec_lag < 1 || hold < 1 {
            set_error("exec_lag and hold must be >= 1");
            return AtStatus::EvalError;
        }
        if !(ls_quantile > 0.0 && ls_quantile <= 0.5) {
            set_error("ls_quantile must lie in (0, 0.5]");
            return AtStatus::EvalError;
        }
        let p = &panel.inner;
        let scores = dsl::evaluate(&recipe.expr, p);
        let targets = forward_return(p, exec_lag, hold);
        let dates: Vec<usize> = (0..p.n_dates()).collect();
        let gate = GateConfig::default();
        let m = evaluate_metrics(&scores, &targets, p, &dates, &gate, ls_quantile);
        let verdict = apply_gate(&m, &gate);
        *out = AtMetrics {
            mean_ic: m.mean_ic,
            ic_tstat: m.ic_tstat,
            ls_sharpe: m.ls_sharpe,
            coverage: m.coverage,
            n_days: m.n_days as u64,
            ic_tstat_degenerate: m.ic_tstat_degenerate as u8,
            gate_passed: verdict.passed() as u8,
        };
        AtStatus::Ok
    })
}
