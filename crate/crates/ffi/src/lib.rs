//! C ABI for `bearingform`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`BfStatus`]; the message of the last failure on the calling
//! thread is available from [`bf_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bearingform::distance::distance_rigidity_report;
use bearingform::io::{self, FormationSpec};
use bearingform::sim::{self, Mode, SimConfig, SimulationTrace};
use bearingform::target::{compute_target, feasibility_witness};
use bearingform::{Error, Framework, Graph};
use nalgebra::DVector;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Numeric = 4,
    Io = 5,
    Parse = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfMode {
    Global = 0,
    Local = 1,
}

/// Opaque framework: graph plus positions.
pub struct BfFramework {
    inner: Framework,
}

/// Opaque parsed formation file.
pub struct BfFormation {
    inner: FormationSpec,
}

/// Opaque simulation result.
pub struct BfTrace {
    inner: SimulationTrace,
    config: SimConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BfRigidity {
    pub rank: usize,
    pub nullity: usize,
    pub rank_complete: usize,
    pub required_rank: usize,
    pub infinitesimally_rigid: bool,
    pub globally_rigid: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BfDistanceRigidity {
    pub rank: usize,
    pub required_rank: usize,
    pub infinitesimally_rigid: bool,
}

/// `gamma < 0` disables the proximity stop.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfSimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub mode: BfMode,
    pub seed: u64,
    pub gamma: f64,
    pub record_every: usize,
}

/// Metrics of one sample; quantities that do not apply to the run's mode
/// are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BfMetrics {
    pub time: f64,
    pub bearing_error: f64,
    pub delta_norm: f64,
    pub lyapunov: f64,
    pub centroid_drift: f64,
    pub scale_drift: f64,
    pub min_pair_distance: f64,
    pub sync_error: f64,
    pub h_norm: f64,
    pub theta: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(BfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NumericFailure { .. } => BfStatus::Numeric,
            Error::Io(_) => BfStatus::Io,
            Error::Spec { .. } => BfStatus::Parse,
            _ => BfStatus::Validation,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BfStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            BfStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| Fail(BfStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Copies `src` into `out` when it fits; always reports the needed length.
unsafe fn copy_out(
    src: &[f64],
    out: *mut f64,
    capacity: usize,
    needed: *mut usize,
) -> Result<(), Fail> {
    if let Some(n) = needed.as_mut() {
        *n = src.len();
    }
    if capacity < src.len() || (out.is_null() && !src.is_empty()) {
        return Err(Fail(
            BfStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn bf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a framework from `n` points in `R^dim` (stacked, `dim * n`
/// values) and `m` edges given as 1-based label pairs (`2 * m` values).
///
/// # Safety
/// `positions` and `edges` must point to at least `dim * n` and `2 * m`
/// readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bf_framework_new(
    dim: usize,
    n: usize,
    positions: *const f64,
    m: usize,
    edges: *const usize,
    out: *mut *mut BfFramework,
) -> BfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let p = slice(positions, dim * n, "positions")?;
        let e = slice(edges, 2 * m, "edges")?;
        let pairs: Vec<(usize, usize)> = e.chunks(2).map(|c| (c[0], c[1])).collect();
        let graph = Graph::new(n, &pairs)?;
        let inner = Framework::new(graph, dim, DVector::from_column_slice(p))?;
        *out = Box::into_raw(Box::new(BfFramework { inner }));
        Ok(())
    })
}

/// # Safety
/// `fw` must be null or a handle from [`bf_framework_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bf_framework_free(fw: *mut BfFramework) {
    if !fw.is_null() {
        drop(Box::from_raw(fw));
    }
}

/// # Safety
/// `fw` must be a live framework handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_framework_rigidity(
    fw: *const BfFramework,
    tol: f64,
    out: *mut BfRigidity,
) -> BfStatus {
    guard(|| {
        let fw = handle(fw, "fw")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = fw.inner.rigidity_report(tol)?;
        *out = BfRigidity {
            rank: r.rank,
            nullity: r.nullity,
            rank_complete: r.rank_complete,
            required_rank: r.required_rank,
            infinitesimally_rigid: r.infinitesimally_bearing_rigid,
            globally_rigid: r.globally_bearing_rigid,
        };
        Ok(())
    })
}

/// # Safety
/// `fw` must be a live framework handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_framework_distance_rigidity(
    fw: *const BfFramework,
    tol: f64,
    out: *mut BfDistanceRigidity,
) -> BfStatus {
    guard(|| {
        let fw = handle(fw, "fw")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = distance_rigidity_report(&fw.inner, tol)?;
        *out = BfDistanceRigidity {
            rank: r.rank,
            required_rank: r.required_rank,
            infinitesimally_rigid: r.infinitesimally_distance_rigid,
        };
        Ok(())
    })
}

/// Writes the bearing rigidity matrix row-major into `out`. `rows` and
/// `cols` receive its shape even when `capacity` is too small.
///
/// # Safety
/// `fw` must be a live handle; `out` must hold `capacity` values; `rows`
/// and `cols` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn bf_framework_rigidity_matrix(
    fw: *const BfFramework,
    out: *mut f64,
    capacity: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> BfStatus {
    guard(|| {
        let fw = handle(fw, "fw")?;
        let r = fw.inner.rigidity_matrix();
        if let Some(x) = rows.as_mut() {
            *x = r.nrows();
        }
        if let Some(x) = cols.as_mut() {
            *x = r.ncols();
        }
        let row_major = r.transpose();
        copy_out(row_major.as_slice(), out, capacity, ptr::null_mut())
    })
}

fn finish_formation(parsed: io::ParsedSpec, out: *mut *mut BfFormation) {
    // SAFETY: callers check `out` before parsing
    unsafe { *out = Box::into_raw(Box::new(BfFormation { inner: parsed.spec })) };
}

/// Loads a JSON formation file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_formation_load(
    path: *const c_char,
    out: *mut *mut BfFormation,
) -> BfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let parsed = io::parse_spec(path_arg(path)?)?;
        finish_formation(parsed, out);
        Ok(())
    })
}

/// Parses a formation from JSON text.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_formation_parse(
    json: *const c_char,
    out: *mut *mut BfFormation,
) -> BfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Fail(BfStatus::InvalidArgument, "json is not valid UTF-8".into()))?;
        finish_formation(io::parse_spec_str(text)?, out);
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a live formation handle.
#[no_mangle]
pub unsafe extern "C" fn bf_formation_free(f: *mut BfFormation) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of agents, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live formation handle.
#[no_mangle]
pub unsafe extern "C" fn bf_formation_agent_count(f: *const BfFormation) -> usize {
    f.as_ref().map_or(0, |f| f.inner.agent_count())
}

/// Dimension, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live formation handle.
#[no_mangle]
pub unsafe extern "C" fn bf_formation_dimension(f: *const BfFormation) -> usize {
    f.as_ref().map_or(0, |f| f.inner.dimension)
}

/// Target formation (`dim * n` values) for the file's bearings. Uses the
/// file's positions for centroid and scale, or a feasible witness when the
/// file has none.
///
/// # Safety
/// `f` must be a live handle; `out` must hold `capacity` values; `needed`
/// must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn bf_formation_target(
    f: *const BfFormation,
    tol: f64,
    out: *mut f64,
    capacity: usize,
    needed: *mut usize,
) -> BfStatus {
    guard(|| {
        let spec = &handle(f, "f")?.inner;
        let c = spec.require_constraints()?;
        let p0 = match &spec.positions {
            Some(p) => p.clone(),
            None => feasibility_witness(c, &spec.graph, tol)?
                .witness
                .ok_or(Error::Infeasible)?,
        };
        let t = compute_target(c, &spec.graph, &p0, tol)?;
        copy_out(t.p_star.as_slice(), out, capacity, needed)
    })
}

#[no_mangle]
pub extern "C" fn bf_sim_config_default() -> BfSimConfig {
    let d = SimConfig::default();
    BfSimConfig {
        dt: d.dt,
        t_end: d.t_end,
        mode: BfMode::Global,
        seed: d.seed,
        gamma: -1.0,
        record_every: d.record_every,
    }
}

/// Simulates the formation from its file state (or a seeded random start
/// for whatever the file omits).
///
/// # Safety
/// `f` must be a live handle, `cfg` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_formation_simulate(
    f: *const BfFormation,
    cfg: *const BfSimConfig,
    out: *mut *mut BfTrace,
) -> BfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let spec = &handle(f, "f")?.inner;
        let cfg = handle(cfg, "cfg")?;
        let config = SimConfig {
            dt: cfg.dt,
            t_end: cfg.t_end,
            mode: match cfg.mode {
                BfMode::Global => Mode::Global,
                BfMode::Local => Mode::Local,
            },
            seed: cfg.seed,
            gamma: (cfg.gamma >= 0.0).then_some(cfg.gamma),
            record_every: cfg.record_every,
        };
        let init = io::initial_state(spec, config.mode, config.seed, false)?;
        let trace = sim::integrate(&init, spec.require_constraints()?, &spec.graph, &config)?;
        *out = Box::into_raw(Box::new(BfTrace {
            inner: trace,
            config,
        }));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn bf_trace_free(t: *mut BfTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn bf_trace_len(t: *const BfTrace) -> usize {
    t.as_ref().map_or(0, |t| t.inner.len())
}

/// True when the run stopped early on a collapsed edge or a proximity event.
///
/// # Safety
/// `t` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn bf_trace_terminated_early(t: *const BfTrace) -> bool {
    t.as_ref().is_some_and(|t| t.inner.event.is_some())
}

/// Stacked positions of sample `index`.
///
/// # Safety
/// `t` must be a live handle; `out` must hold `capacity` values; `needed`
/// must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn bf_trace_positions(
    t: *const BfTrace,
    index: usize,
    out: *mut f64,
    capacity: usize,
    needed: *mut usize,
) -> BfStatus {
    guard(|| {
        let t = &handle(t, "t")?.inner;
        let p = t.positions.get(index).ok_or_else(|| {
            Fail(
                BfStatus::InvalidArgument,
                format!("sample {index} out of range (len {})", t.len()),
            )
        })?;
        copy_out(p.as_slice(), out, capacity, needed)
    })
}

/// Metrics of sample `index`.
///
/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_trace_metrics(
    t: *const BfTrace,
    index: usize,
    out: *mut BfMetrics,
) -> BfStatus {
    guard(|| {
        let t = &handle(t, "t")?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = t.metrics.get(index).ok_or_else(|| {
            Fail(
                BfStatus::InvalidArgument,
                format!("sample {index} out of range (len {})", t.len()),
            )
        })?;
        *out = BfMetrics {
            time: t.times[index],
            bearing_error: m.bearing_error,
            delta_norm: m.delta_norm,
            lyapunov: m.lyapunov,
            centroid_drift: m.centroid_drift,
            scale_drift: m.scale_drift,
            min_pair_distance: m.min_pair_distance,
            sync_error: m.sync_error.unwrap_or(f64::NAN),
            h_norm: m.h_norm.unwrap_or(f64::NAN),
            theta: m.theta.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Writes the trajectory CSV and its `.metrics.json` sibling.
///
/// # Safety
/// `t` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bf_trace_write_csv(t: *const BfTrace, path: *const c_char) -> BfStatus {
    guard(|| {
        let t = handle(t, "t")?;
        io::write_trace(&t.inner, &t.config, path_arg(path)?)?;
        Ok(())
    })
}
