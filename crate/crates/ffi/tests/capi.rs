//! Exercises the C ABI exactly as a foreign caller would: through raw
//! pointers and status codes.

use std::ptr;

use elastic_sched_ffi::*;

fn make_params(lambda_i: f64, lambda_e: f64, mu_i: f64, mu_e: f64, k: u32) -> *mut EsParams {
    let mut handle: *mut EsParams = ptr::null_mut();
    let status = unsafe { es_params_new(lambda_i, lambda_e, mu_i, mu_e, k, &mut handle) };
    assert_eq!(status, EsStatus::Ok);
    assert!(!handle.is_null());
    handle
}

#[test]
fn params_lifecycle_and_load() {
    let params = make_params(1.0, 1.0, 1.0, 1.0, 4);
    let mut rho = 0.0f64;
    assert_eq!(unsafe { es_load(params, &mut rho) }, EsStatus::Ok);
    assert!((rho - 0.5).abs() < 1e-15);
    unsafe { es_params_free(params) };
    // Null frees are no-ops.
    unsafe { es_params_free(ptr::null_mut()) };
}

#[test]
fn invalid_params_are_rejected() {
    let mut handle: *mut EsParams = ptr::null_mut();
    assert_eq!(
        unsafe { es_params_new(-1.0, 0.0, 1.0, 1.0, 2, &mut handle) },
        EsStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { es_params_new(0.0, 0.0, 0.0, 1.0, 2, &mut handle) },
        EsStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { es_params_new(1.0, 1.0, 1.0, 1.0, 2, ptr::null_mut()) },
        EsStatus::NullPointer
    );
}

#[test]
fn closed_forms_match_library() {
    let mut v = 0.0f64;
    assert_eq!(unsafe { es_mm1_mean_response(1.0, 2.0, &mut v) }, EsStatus::Ok);
    assert_eq!(v, 1.0);
    assert_eq!(unsafe { es_mm1_mean_response(2.0, 2.0, &mut v) }, EsStatus::Unstable);

    assert_eq!(unsafe { es_mmk_mean_response(1.8, 1.0, 2, &mut v) }, EsStatus::Ok);
    let expect = elastic_sched::analytic::mmk_mean_response(1.8, 1.0, 2).unwrap();
    assert_eq!(v, expect);
    assert_eq!(unsafe { es_mmk_mean_response(1.0, 1.0, 0, &mut v) }, EsStatus::InvalidArgument);

    let (mut m1, mut m2, mut m3) = (0.0, 0.0, 0.0);
    assert_eq!(
        unsafe { es_busy_period_moments(0.5, 1.0, &mut m1, &mut m2, &mut m3) },
        EsStatus::Ok
    );
    assert!((m1 - 2.0).abs() < 1e-12);
    assert!((m2 - 16.0).abs() < 1e-12);
    assert!((m3 - 288.0).abs() < 1e-12);
}

#[test]
fn mean_responses_and_counterexample() {
    let params = make_params(1.0, 1.0, 1.0, 1.0, 4);
    let mut r_if = EsResponseTimes::default();
    let mut r_ef = EsResponseTimes::default();
    assert_eq!(unsafe { es_mean_response_if(params, &mut r_if) }, EsStatus::Ok);
    assert_eq!(unsafe { es_mean_response_ef(params, &mut r_ef) }, EsStatus::Ok);
    assert!(r_if.t > 0.0 && r_ef.t > 0.0);
    // mu_I = mu_E, so Inelastic-First wins.
    assert!(r_if.t <= r_ef.t);
    unsafe { es_params_free(params) };

    // Overload is reported as unstable.
    let overloaded = make_params(3.0, 3.0, 1.0, 1.0, 4);
    assert_eq!(unsafe { es_mean_response_if(overloaded, &mut r_if) }, EsStatus::Unstable);
    unsafe { es_params_free(overloaded) };

    let (mut t_if, mut t_ef) = (0.0f64, 0.0f64);
    assert_eq!(unsafe { es_counterexample_values(1.0, &mut t_if, &mut t_ef) }, EsStatus::Ok);
    assert!((t_if - 35.0 / 12.0).abs() < 1e-12);
    assert!((t_ef - 33.0 / 12.0).abs() < 1e-12);
    assert_eq!(
        unsafe { es_counterexample_values(0.0, &mut t_if, &mut t_ef) },
        EsStatus::InvalidArgument
    );
}

#[test]
fn drift_certificate_epsilon_is_one_minus_rho() {
    let params = make_params(1.0, 1.0, 1.0, 1.0, 4);
    let mut epsilon = 0.0f64;
    assert_eq!(
        unsafe { es_drift_certificate(params, ES_POLICY_INELASTIC_FIRST, 20, 20, &mut epsilon) },
        EsStatus::Ok
    );
    assert!((epsilon - 0.5).abs() < 1e-12);
    unsafe { es_params_free(params) };
}

#[test]
fn simulation_entry_points() {
    let params = make_params(1.0, 1.0, 1.0, 1.0, 4);
    let mut stats = EsSimStats::default();
    assert_eq!(
        unsafe { es_simulate_ctmc(params, ES_POLICY_ELASTIC_FIRST, 100_000, 4, 7, &mut stats) },
        EsStatus::Ok
    );
    assert!(stats.mean_n > 0.0);
    assert!((stats.mean_n - stats.mean_n_i - stats.mean_n_e).abs() < 1e-9);
    assert_eq!(
        unsafe { es_simulate_ctmc(params, ES_POLICY_ELASTIC_FIRST, 0, 4, 7, &mut stats) },
        EsStatus::InvalidArgument
    );
    unsafe { es_params_free(params) };

    let idle = make_params(0.0, 0.0, 1.0, 2.0, 2);
    let (mut mean, mut ci) = (0.0f64, 0.0f64);
    assert_eq!(
        unsafe {
            es_transient_total_response(
                idle,
                ES_POLICY_ELASTIC_FIRST,
                2,
                1,
                50_000,
                11,
                &mut mean,
                &mut ci,
            )
        },
        EsStatus::Ok
    );
    // Expected total response 33/12 for the counterexample start state.
    assert!((mean - 33.0 / 12.0).abs() < 3.0 * ci);
    unsafe { es_params_free(idle) };

    // Arrivals present: transient estimation refuses.
    let busy = make_params(0.5, 0.0, 1.0, 1.0, 2);
    assert_eq!(
        unsafe {
            es_transient_total_response(
                busy,
                ES_POLICY_INELASTIC_FIRST,
                1,
                0,
                10,
                0,
                &mut mean,
                &mut ci,
            )
        },
        EsStatus::InvalidArgument
    );
    unsafe { es_params_free(busy) };
}

#[test]
fn unknown_policy_selector_is_rejected() {
    let params = make_params(1.0, 1.0, 1.0, 1.0, 4);
    let mut epsilon = 0.0f64;
    assert_eq!(
        unsafe { es_drift_certificate(params, 99, 10, 10, &mut epsilon) },
        EsStatus::InvalidArgument
    );
    unsafe { es_params_free(params) };
}

#[test]
fn status_names_are_c_strings() {
    for status in [
        EsStatus::Ok,
        EsStatus::NullPointer,
        EsStatus::InvalidArgument,
        EsStatus::Unstable,
        EsStatus::ComputeFailed,
    ] {
        let ptr = es_status_name(status);
        assert!(!ptr.is_null());
        let s = unsafe { std::ffi::CStr::from_ptr(ptr) };
        assert!(!s.to_str().unwrap().is_empty());
    }
}

#[test]
fn generated_header_is_committed() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/elastic_sched.h");
    let text = std::fs::read_to_string(header).expect("cbindgen header exists");
    for symbol in [
        "es_params_new",
        "es_params_free",
        "es_load",
        "es_mean_response_if",
        "es_mean_response_ef",
        "es_simulate_ctmc",
        "es_counterexample_values",
        "ELASTIC_SCHED_H",
    ] {
        assert!(text.contains(symbol), "header is missing {symbol}");
    }
}
