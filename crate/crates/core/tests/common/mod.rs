//! Shared test oracles, independent of the library implementations they
//! check. Each integration binary uses its own subset.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Monte-Carlo estimate of the first three raw moments of the M/M/1 busy
/// period, independent of the transform-derived closed forms.
///
/// Each busy period is an excursion of the embedded random walk (up with
/// probability `lambda/(lambda+mu)`) from queue length 1 down to 0. Given
/// the excursion's step count `n`, the duration is Erlang(`n`, `lambda+mu`),
/// so the conditional moments `n/r`, `n(n+1)/r^2`, `n(n+1)(n+2)/r^3` are
/// averaged directly, integrating the holding-time noise out of the
/// estimator.
pub fn mc_busy_period_moments(
    lambda: f64,
    mu: f64,
    busy_periods: u64,
    seed: u64,
) -> (f64, f64, f64) {
    assert!(lambda < mu, "busy periods need lambda < mu");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let p_up = lambda / (lambda + mu);
    let r = lambda + mu;
    let (mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..busy_periods {
        let mut queue = 1u64;
        let mut steps = 0u64;
        while queue > 0 {
            steps += 1;
            if rng.gen::<f64>() < p_up {
                queue += 1;
            } else {
                queue -= 1;
            }
        }
        let n = steps as f64;
        s1 += n / r;
        s2 += n * (n + 1.0) / (r * r);
        s3 += n * (n + 1.0) * (n + 2.0) / (r * r * r);
    }
    let c = busy_periods as f64;
    (s1 / c, s2 / c, s3 / c)
}

/// Discrete-time stepper for a fixed job mix under a fixed allocation rule,
/// used as an independent check on the event-driven fluid simulator. Far
/// slower but has no event prediction to get wrong.
pub fn stepped_total_response(
    inelastic_sizes: &[f64],
    elastic_sizes: &[f64],
    k: u32,
    elastic_first: bool,
    dt: f64,
) -> f64 {
    let mut inelastic: Vec<f64> = inelastic_sizes.to_vec();
    let mut elastic: Vec<f64> = elastic_sizes.to_vec();
    let mut t = 0.0f64;
    let mut total = 0.0f64;
    let kf = f64::from(k);
    while !inelastic.is_empty() || !elastic.is_empty() {
        t += dt;
        let (serve_i, serve_e) = if elastic_first {
            if elastic.is_empty() {
                ((inelastic.len() as f64).min(kf), 0.0)
            } else {
                (0.0, kf)
            }
        } else {
            let si = (inelastic.len() as f64).min(kf);
            (si, if elastic.is_empty() { 0.0 } else { kf - si })
        };
        let full = serve_i as usize;
        for job in inelastic.iter_mut().take(full) {
            *job -= dt;
        }
        if let Some(job) = elastic.first_mut() {
            *job -= serve_e * dt;
        }
        inelastic.retain(|&rem| {
            if rem <= 0.0 {
                total += t;
                false
            } else {
                true
            }
        });
        elastic.retain(|&rem| {
            if rem <= 0.0 {
                total += t;
                false
            } else {
                true
            }
        });
    }
    total
}
