//! C ABI for the elastic-sched library.
//!
//! Conventions: every fallible call returns an [`EsStatus`] and writes its
//! results through out-pointers; system parameters travel as an opaque
//! handle created by [`es_params_new`] and released by [`es_params_free`].
//! All functions are safe to call from any thread.

use std::os::raw::c_char;

use elastic_sched::analytic;
use elastic_sched::domain::{load, ParamsError, State, SystemParams};
use elastic_sched::policies::{drift_certificate, DriftError, ElasticFirst, InelasticFirst, Policy};
use elastic_sched::simulator::{
    simulate_ctmc, transient_total_response, Horizon, SimConfig, SimError,
};

/// Status code of a C ABI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Arguments failed validation (rates, counts, policy selector).
    InvalidArgument = 2,
    /// The requested quantity needs load < 1 (or a stable subsystem).
    Unstable = 3,
    /// The computation failed internally (fit, solver, or simulation).
    ComputeFailed = 4,
}

/// Policy selector: Inelastic-First.
pub const ES_POLICY_INELASTIC_FIRST: u32 = 0;
/// Policy selector: Elastic-First.
pub const ES_POLICY_ELASTIC_FIRST: u32 = 1;

/// Opaque system parameters handle.
pub struct EsParams {
    inner: SystemParams,
}

/// Mean response times: overall and per class.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EsResponseTimes {
    pub t: f64,
    pub t_i: f64,
    pub t_e: f64,
}

/// Steady-state simulation estimates with 95% confidence half-widths.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EsSimStats {
    pub mean_n: f64,
    pub mean_n_i: f64,
    pub mean_n_e: f64,
    pub mean_t: f64,
    pub mean_t_i: f64,
    pub mean_t_e: f64,
    pub mean_w: f64,
    pub mean_w_i: f64,
    pub mean_w_e: f64,
    pub ci_n: f64,
    pub ci_n_i: f64,
    pub ci_n_e: f64,
    pub ci_t: f64,
    pub ci_t_i: f64,
    pub ci_t_e: f64,
    pub ci_w: f64,
    pub ci_w_i: f64,
    pub ci_w_e: f64,
}

fn params_status(err: &ParamsError) -> EsStatus {
    match err {
        ParamsError::Overloaded { .. } => EsStatus::Unstable,
        _ => EsStatus::InvalidArgument,
    }
}

fn analytic_status(err: &analytic::AnalyticError) -> EsStatus {
    match err {
        analytic::AnalyticError::Unstable { .. } => EsStatus::Unstable,
        analytic::AnalyticError::Params(e) => params_status(e),
        _ => EsStatus::ComputeFailed,
    }
}

fn policy_of(policy: u32) -> Option<&'static dyn Policy> {
    match policy {
        ES_POLICY_INELASTIC_FIRST => Some(&InelasticFirst),
        ES_POLICY_ELASTIC_FIRST => Some(&ElasticFirst),
        _ => None,
    }
}

/// Creates a parameters handle. Arrival rates may be zero; service rates
/// must be positive and `k >= 1`. On success writes the handle to `out`.
///
/// # Safety
/// `out` must be a valid pointer. The returned handle must be released with
/// [`es_params_free`] exactly once.
#[no_mangle]
pub unsafe extern "C" fn es_params_new(
    lambda_i: f64,
    lambda_e: f64,
    mu_i: f64,
    mu_e: f64,
    k: u32,
    out: *mut *mut EsParams,
) -> EsStatus {
    if out.is_null() {
        return EsStatus::NullPointer;
    }
    match SystemParams::new(lambda_i, lambda_e, mu_i, mu_e, k) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(EsParams { inner }));
            EsStatus::Ok
        }
        Err(e) => params_status(&e),
    }
}

/// Releases a handle created by [`es_params_new`]. Null is a no-op.
///
/// # Safety
/// `params` must be null or a handle returned by [`es_params_new`] that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn es_params_free(params: *mut EsParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// System load `lambda_I/(k mu_I) + lambda_E/(k mu_E)`.
///
/// # Safety
/// `params` must be a live [`es_params_new`] handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn es_load(params: *const EsParams, out: *mut f64) -> EsStatus {
    if params.is_null() || out.is_null() {
        return EsStatus::NullPointer;
    }
    *out = load(&(*params).inner);
    EsStatus::Ok
}

/// Mean response time of an M/M/1 queue.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_mm1_mean_response(lambda: f64, mu: f64, out: *mut f64) -> EsStatus {
    if out.is_null() {
        return EsStatus::NullPointer;
    }
    match analytic::mm1_mean_response(lambda, mu) {
        Ok(v) => {
            *out = v;
            EsStatus::Ok
        }
        Err(e) => analytic_status(&e),
    }
}

/// Mean response time of an M/M/k queue (Erlang-C).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_mmk_mean_response(
    lambda: f64,
    mu: f64,
    k: u32,
    out: *mut f64,
) -> EsStatus {
    if out.is_null() {
        return EsStatus::NullPointer;
    }
    if k == 0 {
        return EsStatus::InvalidArgument;
    }
    match analytic::mmk_mean_response(lambda, mu, k) {
        Ok(v) => {
            *out = v;
            EsStatus::Ok
        }
        Err(e) => analytic_status(&e),
    }
}

/// First three raw moments of the M/M/1 busy period.
///
/// # Safety
/// `m1`, `m2`, `m3` must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_busy_period_moments(
    lambda: f64,
    mu: f64,
    m1: *mut f64,
    m2: *mut f64,
    m3: *mut f64,
) -> EsStatus {
    if m1.is_null() || m2.is_null() || m3.is_null() {
        return EsStatus::NullPointer;
    }
    match analytic::busy_period_moments(lambda, mu) {
        Ok(m) => {
            *m1 = m.m1;
            *m2 = m.m2;
            *m3 = m.m3;
            EsStatus::Ok
        }
        Err(e) => analytic_status(&e),
    }
}

/// Mean response times under Inelastic-First from the matrix-analytic
/// solution.
///
/// # Safety
/// `params` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn es_mean_response_if(
    params: *const EsParams,
    out: *mut EsResponseTimes,
) -> EsStatus {
    if params.is_null() || out.is_null() {
        return EsStatus::NullPointer;
    }
    match analytic::mean_response_if(&(*params).inner) {
        Ok(r) => {
            *out = EsResponseTimes { t: r.t, t_i: r.t_i, t_e: r.t_e };
            EsStatus::Ok
        }
        Err(e) => analytic_status(&e),
    }
}

/// Mean response times under Elastic-First from the matrix-analytic
/// solution.
///
/// # Safety
/// `params` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn es_mean_response_ef(
    params: *const EsParams,
    out: *mut EsResponseTimes,
) -> EsStatus {
    if params.is_null() || out.is_null() {
        return EsStatus::NullPointer;
    }
    match analytic::mean_response_ef(&(*params).inner) {
        Ok(r) => {
            *out = EsResponseTimes { t: r.t, t_i: r.t_i, t_e: r.t_e };
            EsStatus::Ok
        }
        Err(e) => analytic_status(&e),
    }
}

/// Closed-form totals of the two-server counterexample (start state
/// 2 inelastic + 1 elastic, `mu_E = 2 mu_I`, no arrivals).
///
/// # Safety
/// `total_if` and `total_ef` must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_counterexample_values(
    mu_i: f64,
    total_if: *mut f64,
    total_ef: *mut f64,
) -> EsStatus {
    if total_if.is_null() || total_ef.is_null() {
        return EsStatus::NullPointer;
    }
    if !(mu_i > 0.0) || !mu_i.is_finite() {
        return EsStatus::InvalidArgument;
    }
    let v = analytic::counterexample_values(mu_i);
    *total_if = v.total_if;
    *total_ef = v.total_ef;
    EsStatus::Ok
}

/// Least negative-drift margin `epsilon` of the Lyapunov certificate over
/// the `[0, i_max] x [0, j_max]` rectangle.
///
/// # Safety
/// `params` must be a live handle and `epsilon` valid.
#[no_mangle]
pub unsafe extern "C" fn es_drift_certificate(
    params: *const EsParams,
    policy: u32,
    i_max: u64,
    j_max: u64,
    epsilon: *mut f64,
) -> EsStatus {
    if params.is_null() || epsilon.is_null() {
        return EsStatus::NullPointer;
    }
    let Some(policy) = policy_of(policy) else {
        return EsStatus::InvalidArgument;
    };
    match drift_certificate(policy, &(*params).inner, i_max, j_max) {
        Ok(report) => {
            *epsilon = report.epsilon;
            EsStatus::Ok
        }
        Err(DriftError::Unstable { .. }) => EsStatus::Unstable,
        Err(DriftError::RectangleTooSmall { .. }) => EsStatus::InvalidArgument,
        Err(DriftError::CertificateFailed { .. }) => EsStatus::ComputeFailed,
    }
}

/// Steady-state simulation with the given event budget per replication.
/// Replication `r` uses seed `seed xor r`.
///
/// # Safety
/// `params` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn es_simulate_ctmc(
    params: *const EsParams,
    policy: u32,
    events_per_replication: u64,
    replications: u32,
    seed: u64,
    out: *mut EsSimStats,
) -> EsStatus {
    if params.is_null() || out.is_null() {
        return EsStatus::NullPointer;
    }
    let Some(policy) = policy_of(policy) else {
        return EsStatus::InvalidArgument;
    };
    let mut config = SimConfig::new(seed);
    config.horizon = Horizon::Events(events_per_replication);
    config.replications = replications;
    match simulate_ctmc(policy, &(*params).inner, &config) {
        Ok(stats) => {
            *out = EsSimStats {
                mean_n: stats.n.mean,
                mean_n_i: stats.n_i.mean,
                mean_n_e: stats.n_e.mean,
                mean_t: stats.t.mean,
                mean_t_i: stats.t_i.mean,
                mean_t_e: stats.t_e.mean,
                mean_w: stats.w.mean,
                mean_w_i: stats.w_i.mean,
                mean_w_e: stats.w_e.mean,
                ci_n: stats.n.ci_halfwidth,
                ci_n_i: stats.n_i.ci_halfwidth,
                ci_n_e: stats.n_e.ci_halfwidth,
                ci_t: stats.t.ci_halfwidth,
                ci_t_i: stats.t_i.ci_halfwidth,
                ci_t_e: stats.t_e.ci_halfwidth,
                ci_w: stats.w.ci_halfwidth,
                ci_w_i: stats.w_i.ci_halfwidth,
                ci_w_e: stats.w_e.ci_halfwidth,
            };
            EsStatus::Ok
        }
        Err(SimError::UnstableRun { .. }) => EsStatus::Unstable,
        Err(SimError::BadConfig { .. }) => EsStatus::InvalidArgument,
        Err(_) => EsStatus::ComputeFailed,
    }
}

/// Monte-Carlo estimate of the expected sum of response times when the
/// system starts with the given job counts and no further arrivals
/// (requires zero arrival rates in `params`).
///
/// # Safety
/// `params` must be a live handle; `mean` and `ci_halfwidth` valid.
#[no_mangle]
pub unsafe extern "C" fn es_transient_total_response(
    params: *const EsParams,
    policy: u32,
    inelastic: u64,
    elastic: u64,
    replications: u64,
    seed: u64,
    mean: *mut f64,
    ci_halfwidth: *mut f64,
) -> EsStatus {
    if params.is_null() || mean.is_null() || ci_halfwidth.is_null() {
        return EsStatus::NullPointer;
    }
    let Some(policy) = policy_of(policy) else {
        return EsStatus::InvalidArgument;
    };
    match transient_total_response(
        policy,
        State::new(inelastic, elastic),
        &(*params).inner,
        replications,
        seed,
    ) {
        Ok(est) => {
            *mean = est.mean;
            *ci_halfwidth = est.ci_halfwidth;
            EsStatus::Ok
        }
        Err(SimError::ArrivalsNotZero { .. }) | Err(SimError::BadConfig { .. }) => {
            EsStatus::InvalidArgument
        }
        Err(_) => EsStatus::ComputeFailed,
    }
}

/// Static name of a status code, for diagnostics.
#[no_mangle]
pub extern "C" fn es_status_name(status: EsStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        EsStatus::Ok => b"ok\0",
        EsStatus::NullPointer => b"null pointer\0",
        EsStatus::InvalidArgument => b"invalid argument\0",
        EsStatus::Unstable => b"unstable\0",
        EsStatus::ComputeFailed => b"compute failed\0",
    };
    name.as_ptr().cast()
}
