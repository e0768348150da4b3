//! C interface to `mgp`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `mgp_*_new`-style function and released by the matching `mgp_*_free`.
//! Every fallible function returns an [`MgpStatus`]; on failure the message
//! is kept per thread and can be read with [`mgp_last_error_message`].
//! Array outputs follow one convention: the caller passes a buffer and its
//! capacity, the function always stores the required length in `*written`
//! and fails with `MGP_STATUS_BUFFER_TOO_SMALL` if the buffer is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mgp::almost_markov::{feasible_kernel, markovize, KernelMode};
use mgp::currents::{edge_selection, vertex_currents_at, FlowField, FluxReport};
use mgp::graph::{EdgeId, VertexId};
use mgp::sampler::{equivariance_distance, sample_ensemble, EnsembleConfig, EnsembleStats, TurnRule};
use mgp::scenario::{Scenario, Simulation};
use mgp::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed scenario text.
    Parse = 3,
    /// The graph or its vertex conditions are invalid.
    Graph = 4,
    /// A numerical failure: singular system, stalled vertex, node encounter.
    Numeric = 5,
    /// A time or index outside the valid range.
    OutOfRange = 6,
    BufferTooSmall = 7,
    Io = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

/// Turn rule for [`mgp_ensemble_sample`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgpTurnRule {
    Minimal = 0,
    Argmax = 1,
    AlmostMarkov = 2,
}

pub struct MgpScenario {
    inner: Scenario,
}

pub struct MgpSimulation {
    sim: Simulation,
    field: FlowField,
}

pub struct MgpEnsemble {
    stats: EnsembleStats,
    tv: Vec<(f64, f64)>,
    exact: Vec<Vec<f64>>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MgpStatus {
    match e {
        Error::Syntax { .. } | Error::MissingField(_) | Error::Parse(_) => MgpStatus::Parse,
        Error::UnresolvedId { .. }
        | Error::DuplicateId { .. }
        | Error::SelfLoop(_)
        | Error::Disconnected { .. }
        | Error::InvalidLength { .. }
        | Error::SemiInfinite(_)
        | Error::Empty
        | Error::InvalidCondition { .. }
        | Error::GridTooCoarse { .. }
        | Error::EdgeTooShort(_) => MgpStatus::Graph,
        Error::InvalidParameter { .. } => MgpStatus::InvalidArgument,
        Error::TimeOutOfRange(_) => MgpStatus::OutOfRange,
        Error::Io(_) => MgpStatus::Io,
        _ => MgpStatus::Numeric,
    }
}

struct Fail(MgpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), format!("{}: {e}", e.kind()))
    }
}

type R = Result<(), Fail>;

/// Runs `f`, turning errors and panics into a status and a message.
fn guard(f: impl FnOnce() -> R) -> MgpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MgpStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MgpStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MgpStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MgpStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies `data` into `(buf, cap)` and stores its length in `written`.
unsafe fn fill(data: &[f64], buf: *mut f64, cap: usize, written: *mut usize) -> R {
    *out_ptr(written, "written")? = data.len();
    if cap < data.len() {
        return Err(Fail(
            MgpStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", data.len()),
        ));
    }
    if data.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mgp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Short name of a status code as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mgp_status_name(status: MgpStatus) -> *const c_char {
    let s: &'static str = match status {
        MgpStatus::Ok => "ok\0",
        MgpStatus::NullPointer => "null-pointer\0",
        MgpStatus::InvalidArgument => "invalid-argument\0",
        MgpStatus::Parse => "parse\0",
        MgpStatus::Graph => "graph\0",
        MgpStatus::Numeric => "numeric\0",
        MgpStatus::OutOfRange => "out-of-range\0",
        MgpStatus::BufferTooSmall => "buffer-too-small\0",
        MgpStatus::Io => "io\0",
        MgpStatus::Panic => "panic\0",
    };
    s.as_ptr().cast()
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `cap` bytes, into `buf`. Returns the full message length
/// excluding the terminator; pass `cap = 0` to query it.
///
/// # Safety
/// `buf` must point to `cap` writable bytes or be null with `cap = 0`.
#[no_mangle]
pub unsafe extern "C" fn mgp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if cap > 0 && !buf.is_null() {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a scenario from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_scenario_from_json(json: *const c_char, out: *mut *mut MgpScenario) -> MgpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let inner = Scenario::from_json(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(MgpScenario { inner }));
        Ok(())
    })
}

/// One of the scenarios shipped with the library, by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_scenario_bundled(name: *const c_char, out: *mut *mut MgpScenario) -> MgpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let name = text(name, "name")?;
        let inner = Scenario::bundled(name)
            .ok_or_else(|| Fail(MgpStatus::InvalidArgument, format!("no bundled scenario `{name}`")))?;
        *out = Box::into_raw(Box::new(MgpScenario { inner }));
        Ok(())
    })
}

/// Overrides grid spacing and time step.
///
/// # Safety
/// `scenario` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn mgp_scenario_set_numerics(scenario: *mut MgpScenario, h: f64, dt: f64) -> MgpStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        if !(h > 0.0 && h.is_finite() && dt > 0.0 && dt.is_finite()) {
            return Err(Fail(MgpStatus::InvalidArgument, format!("h = {h} and dt = {dt} must be positive")));
        }
        s.inner = s.inner.with_numerics(h, dt);
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mgp_scenario_free(scenario: *mut MgpScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Builds the graph, grid and Hamiltonian and propagates to the
/// scenario's final time.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_run(scenario: *const MgpScenario, out: *mut *mut MgpSimulation) -> MgpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let s = handle(scenario, "scenario")?;
        let sim = s.inner.simulate()?;
        let field = FlowField::new(&sim.graph, &sim.grid, &sim.record, sim.hbar());
        *out = Box::into_raw(Box::new(MgpSimulation { sim, field }));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_free(sim: *mut MgpSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_edge_count(sim: *const MgpSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.sim.graph.edge_count())
}

/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_vertex_count(sim: *const MgpSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.sim.graph.vertex_count())
}

/// Number of stored states.
///
/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_snapshot_count(sim: *const MgpSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.sim.record.states.len())
}

/// Time of stored state `k`.
///
/// # Safety
/// `sim` must be a live handle; `t` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_snapshot_time(sim: *const MgpSimulation, k: usize, t: *mut f64) -> MgpStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        let st = s.sim.record.states.get(k).ok_or_else(|| oob("snapshot", k, s.sim.record.states.len()))?;
        *out_ptr(t, "t")? = st.t;
        Ok(())
    })
}

fn oob(what: &str, i: usize, n: usize) -> Fail {
    Fail(MgpStatus::OutOfRange, format!("{what} {i} out of range (have {n})"))
}

/// `Σ w_i |ψ_i|²` of stored state `k`.
///
/// # Safety
/// `sim` must be a live handle; `norm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_norm(sim: *const MgpSimulation, k: usize, norm: *mut f64) -> MgpStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        let st = s.sim.record.states.get(k).ok_or_else(|| oob("snapshot", k, s.sim.record.states.len()))?;
        *out_ptr(norm, "norm")? = st.norm_sqr(&s.sim.grid);
        Ok(())
    })
}

/// Largest deviation of the weighted Hamiltonian from Hermitian symmetry.
///
/// # Safety
/// `sim` must be a live handle; `residual` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_symmetry_residual(sim: *const MgpSimulation, residual: *mut f64) -> MgpStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        *out_ptr(residual, "residual")? = s.sim.hamiltonian.check_hermitian();
        Ok(())
    })
}

fn edge_index(s: &MgpSimulation, edge: usize) -> Result<EdgeId, Fail> {
    let n = s.sim.graph.edge_count();
    if edge < n {
        Ok(EdgeId(edge))
    } else {
        Err(oob("edge", edge, n))
    }
}

fn vertex_index(s: &MgpSimulation, vertex: usize) -> Result<VertexId, Fail> {
    let n = s.sim.graph.vertex_count();
    if vertex < n {
        Ok(VertexId(vertex))
    } else {
        Err(oob("vertex", vertex, n))
    }
}

/// `|ψ|²` at the grid points of `edge` (from its start) in stored state `k`.
///
/// # Safety
/// `sim` must be a live handle; `buf` must hold `cap` doubles; `written`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_density(
    sim: *const MgpSimulation,
    k: usize,
    edge: usize,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> MgpStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        let e = edge_index(s, edge)?;
        let st = s.sim.record.states.get(k).ok_or_else(|| oob("snapshot", k, s.sim.record.states.len()))?;
        let rho: Vec<f64> = s.sim.grid.edge(e).points.iter().map(|&g| st.psi[g].norm_sqr()).collect();
        fill(&rho, buf, cap, written)
    })
}

/// Signed outward currents at `vertex` and time `t`, in incidence order;
/// the incident edge indices go to `edges` when it is not null.
///
/// # Safety
/// `sim` must be a live handle; `flux` (and `edges` if non-null) must hold
/// `cap` values; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_vertex_flux(
    sim: *const MgpSimulation,
    vertex: usize,
    t: f64,
    flux: *mut f64,
    edges: *mut usize,
    cap: usize,
    written: *mut usize,
) -> MgpStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        let q = vertex_index(s, vertex)?;
        let r = vertex_currents_at(&s.sim.graph, &s.sim.grid, &s.sim.record, q, t, s.sim.hbar())?;
        fill(&r.signed(), flux, cap, written)?;
        if !edges.is_null() {
            for (i, f) in r.edges.iter().enumerate() {
                *edges.add(i) = f.edge.0;
            }
        }
        Ok(())
    })
}

/// `P(e|q) = s_e⁺ / Σ s⁺` at `vertex` and time `t`, in incidence order.
///
/// # Safety
/// As for [`mgp_simulation_vertex_flux`].
#[no_mangle]
pub unsafe extern "C" fn mgp_simulation_edge_selection(
    sim: *const MgpSimulation,
    vertex: usize,
    t: f64,
    probabilities: *mut f64,
    cap: usize,
    written: *mut usize,
) -> MgpStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        let q = vertex_index(s, vertex)?;
        let r = vertex_currents_at(&s.sim.graph, &s.sim.grid, &s.sim.record, q, t, s.sim.hbar())?;
        fill(&edge_selection(&r)?.probabilities, probabilities, cap, written)
    })
}

/// Samples `paths` trajectories from `|ψ_0|²` and records them at the
/// `n_times` output times.
///
/// # Safety
/// `sim` must be a live handle; `times` must hold `n_times` doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_ensemble_sample(
    sim: *const MgpSimulation,
    paths: usize,
    seed: u64,
    rule: MgpTurnRule,
    times: *const f64,
    n_times: usize,
    out: *mut *mut MgpEnsemble,
) -> MgpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let s = handle(sim, "sim")?;
        if n_times == 0 || times.is_null() {
            return Err(Fail(MgpStatus::InvalidArgument, "at least one output time is required".into()));
        }
        let times = std::slice::from_raw_parts(times, n_times).to_vec();
        let mut config = EnsembleConfig::new(paths, seed, times);
        config.rule = match rule {
            MgpTurnRule::Minimal => TurnRule::Minimal,
            MgpTurnRule::Argmax => TurnRule::Argmax,
            MgpTurnRule::AlmostMarkov => TurnRule::AlmostMarkov { seed },
        };
        let run = sample_ensemble(&s.field, &config)?;
        let eq: Vec<_> = (0..run.stats.output_times.len())
            .map(|k| equivariance_distance(&run.stats, &s.field, k))
            .collect();
        *out = Box::into_raw(Box::new(MgpEnsemble {
            tv: eq.iter().map(|e| (e.tv_edges, e.tv_bins)).collect(),
            exact: eq.into_iter().map(|e| e.exact_mass).collect(),
            stats: run.stats,
        }));
        Ok(())
    })
}

/// # Safety
/// `ens` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mgp_ensemble_free(ens: *mut MgpEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// Total-variation distances at output time `k` (sorted order) over edge
/// masses and over position bins.
///
/// # Safety
/// `ens` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_ensemble_tv(ens: *const MgpEnsemble, k: usize, tv_edges: *mut f64, tv_bins: *mut f64) -> MgpStatus {
    guard(|| {
        let e = handle(ens, "ens")?;
        let &(a, b) = e.tv.get(k).ok_or_else(|| oob("output time", k, e.tv.len()))?;
        *out_ptr(tv_edges, "tv_edges")? = a;
        *out_ptr(tv_bins, "tv_bins")? = b;
        Ok(())
    })
}

/// Empirical and exact mass on `edge` at output time `k`.
///
/// # Safety
/// `ens` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mgp_ensemble_edge_mass(
    ens: *const MgpEnsemble,
    k: usize,
    edge: usize,
    empirical: *mut f64,
    exact: *mut f64,
) -> MgpStatus {
    guard(|| {
        let e = handle(ens, "ens")?;
        let row = e.exact.get(k).ok_or_else(|| oob("output time", k, e.exact.len()))?;
        let x = *row.get(edge).ok_or_else(|| oob("edge", edge, row.len()))?;
        *out_ptr(empirical, "empirical")? = e.stats.empirical_masses(k)[edge];
        *out_ptr(exact, "exact")? = x;
        Ok(())
    })
}

/// From signed outward currents at one vertex, builds a randomized
/// feasible kernel and writes its Markovization and the edge selection.
///
/// # Safety
/// `flux`, `markovized` and `selection` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn mgp_markovize(
    flux: *const f64,
    n: usize,
    seed: u64,
    markovized: *mut f64,
    selection: *mut f64,
) -> MgpStatus {
    guard(|| {
        if flux.is_null() || markovized.is_null() || selection.is_null() {
            return Err(null("flux, markovized or selection"));
        }
        let s = std::slice::from_raw_parts(flux, n);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Fail(MgpStatus::InvalidArgument, "currents must be finite".into()));
        }
        let report = FluxReport::from_signed(VertexId(0), 0.0, s.iter().enumerate().map(|(i, &v)| (EdgeId(i), v)));
        let kernel = feasible_kernel(&report, KernelMode::Randomized { seed })?;
        let m = markovize(&kernel, &report)?;
        let sel = edge_selection(&report)?;
        ptr::copy_nonoverlapping(m.probabilities.as_ptr(), markovized, n);
        ptr::copy_nonoverlapping(sel.probabilities.as_ptr(), selection, n);
        Ok(())
    })
}
