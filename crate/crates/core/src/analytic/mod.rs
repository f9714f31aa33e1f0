//! Closed-form queueing results and the matrix-analytic response-time
//! solution for both priority policies.
//!
//! The 2D-infinite chain of either policy is collapsed to a 1D-infinite
//! quasi-birth-death chain by replacing the stretch of time during which the
//! low-priority class is starved with the busy period of an M/M/1 system,
//! approximated by a Coxian distribution matched on its first three moments.
//! The QBD chain is then solved with a matrix-geometric rate matrix.

mod chains;
mod qbd;

pub use chains::{build_ef_chain, build_if_chain, mean_response_ef, mean_response_if, ResponseTimes};
pub use qbd::{solve_qbd, LevelBlocks, QbdBlocks, QbdError, StationaryDistribution};

use thiserror::Error;

use crate::domain::ParamsError;

/// Default residual tolerance for the rate-matrix iteration.
pub const QBD_TOL: f64 = 1e-12;
/// Default iteration cap for the rate-matrix iteration.
pub const QBD_MAX_ITER: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("unstable: arrival rate {lambda} is not below service capacity {capacity}")]
    Unstable { lambda: f64, capacity: f64 },
    #[error(transparent)]
    InfeasibleMoments(#[from] InfeasibleMoments),
    #[error(transparent)]
    Qbd(#[from] QbdError),
    #[error(transparent)]
    Params(#[from] ParamsError),
}

/// Mean response time of an M/M/1 queue: `1/(mu - lambda)`.
pub fn mm1_mean_response(lambda: f64, mu: f64) -> Result<f64, AnalyticError> {
    if lambda >= mu {
        return Err(AnalyticError::Unstable { lambda, capacity: mu });
    }
    Ok(1.0 / (mu - lambda))
}

/// Erlang-C probability that an arrival to an M/M/k queue must wait.
pub fn erlang_c(lambda: f64, mu: f64, k: u32) -> Result<f64, AnalyticError> {
    let kf = f64::from(k);
    if lambda >= kf * mu {
        return Err(AnalyticError::Unstable { lambda, capacity: kf * mu });
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let a = lambda / mu;
    // Erlang-B recurrence, then the standard B-to-C conversion; stable for
    // any k because every intermediate stays in (0, 1].
    let mut b = 1.0;
    for n in 1..=k {
        b = a * b / (f64::from(n) + a * b);
    }
    Ok(kf * b / (kf - a * (1.0 - b)))
}

/// Mean response time of an M/M/k queue: Erlang-C waiting time plus service.
pub fn mmk_mean_response(lambda: f64, mu: f64, k: u32) -> Result<f64, AnalyticError> {
    let c = erlang_c(lambda, mu, k)?;
    Ok(c / (f64::from(k) * mu - lambda) + 1.0 / mu)
}

/// First three raw moments of a nonnegative distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments3 {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl Moments3 {
    /// Squared coefficient of variation.
    pub fn cv2(&self) -> f64 {
        (self.m2 - self.m1 * self.m1) / (self.m1 * self.m1)
    }
}

/// First three raw moments of the M/M/1 busy period.
///
/// Obtained by implicitly differentiating the busy-period transform fixed
/// point `B(s) = mu / (mu + lambda + s - lambda B(s))` at `s = 0`:
/// the quadratic `lambda B^2 - (mu + lambda + s) B + mu = 0` yields
/// `B'(0) = -1/(mu - lambda)`, `B''(0) = 2 mu/(mu - lambda)^3`, and
/// `B'''(0) = -6 mu (mu + lambda)/(mu - lambda)^5`.
pub fn busy_period_moments(lambda: f64, mu: f64) -> Result<Moments3, AnalyticError> {
    if lambda >= mu {
        return Err(AnalyticError::Unstable { lambda, capacity: mu });
    }
    let d = mu - lambda;
    Ok(Moments3 {
        m1: 1.0 / d,
        m2: 2.0 * mu / (d * d * d),
        m3: 6.0 * mu * (mu + lambda) / (d * d * d * d * d),
    })
}

/// One phase of a Coxian distribution: exit at `rate`, then continue to the
/// next phase with probability `continue_probability`, otherwise absorb.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxianPhase {
    pub rate: f64,
    pub continue_probability: f64,
}

/// An absorbing chain of exponential phases with early exit. The last phase
/// always absorbs (`continue_probability = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoxianPhases {
    phases: Vec<CoxianPhase>,
}

impl CoxianPhases {
    pub fn new(phases: Vec<CoxianPhase>) -> Result<Self, InfeasibleMoments> {
        if phases.is_empty() {
            return Err(InfeasibleMoments::BadPhases { reason: "no phases".into() });
        }
        for (idx, p) in phases.iter().enumerate() {
            if !(p.rate > 0.0) || !p.rate.is_finite() {
                return Err(InfeasibleMoments::BadPhases {
                    reason: format!("phase {idx} rate {} not positive", p.rate),
                });
            }
            if !(0.0..=1.0).contains(&p.continue_probability) {
                return Err(InfeasibleMoments::BadPhases {
                    reason: format!(
                        "phase {idx} continue probability {} outside [0, 1]",
                        p.continue_probability
                    ),
                });
            }
        }
        if phases.last().unwrap().continue_probability != 0.0 {
            return Err(InfeasibleMoments::BadPhases {
                reason: "last phase must absorb with probability 1".into(),
            });
        }
        Ok(CoxianPhases { phases })
    }

    pub fn phases(&self) -> &[CoxianPhase] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// Raw moments of a Coxian distribution, by backward recursion over phases:
/// the time-to-absorb from phase `p` is `Exp(rate_p)` plus, with the
/// continue probability, the time-to-absorb from phase `p + 1`.
pub fn coxian_moments(coxian: &CoxianPhases) -> Moments3 {
    let mut m1 = 0.0f64;
    let mut m2 = 0.0f64;
    let mut m3 = 0.0f64;
    for phase in coxian.phases().iter().rev() {
        let x = 1.0 / phase.rate;
        let q = phase.continue_probability;
        let n3 = 6.0 * x * x * x + 3.0 * (2.0 * x * x) * (q * m1) + 3.0 * x * (q * m2) + q * m3;
        let n2 = 2.0 * x * x + 2.0 * x * (q * m1) + q * m2;
        let n1 = x + q * m1;
        m1 = n1;
        m2 = n2;
        m3 = n3;
    }
    Moments3 { m1, m2, m3 }
}

/// The moment set cannot be represented by the implemented Coxian family;
/// each variant names the feasibility condition that failed.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfeasibleMoments {
    #[error("moments must be positive and finite: ({m1}, {m2}, {m3})")]
    NonPositive { m1: f64, m2: f64, m3: f64 },
    #[error("m2 = {m2} does not exceed m1^2 = {m1_sq}, so the squared CV is not positive")]
    VarianceTooLow { m2: f64, m1_sq: f64 },
    #[error("squared CV {cv2} is below 1/2, outside the two-phase Coxian family")]
    CvBelowHalf { cv2: f64 },
    #[error("third moment infeasible at (n2, n3) = ({n2}, {n3}): {condition}")]
    ThirdMomentInfeasible { n2: f64, n3: f64, condition: &'static str },
    #[error("invalid Coxian phases: {reason}")]
    BadPhases { reason: String },
    #[error("fit verification failed: refit moments deviate by relative {deviation}")]
    RoundTripFailed { deviation: f64 },
}

const EXP_MATCH_TOL: f64 = 1e-9;
const ROUND_TRIP_TOL: f64 = 1e-9;

/// Matches the first three raw moments with a Coxian of at most two phases.
///
/// Normalizing time by `m1`, the first-phase mean `x` solves
/// `(h2 - 1) x^2 + (h2 - h3) x + (h3 - h2^2) = 0` with `h2 = n2/2`,
/// `h3 = n3/6`; the second-phase mean is `y = (h2 - x)/(1 - x)` and the
/// continue probability `p = (1 - x)/y`. The returned fit is verified by a
/// [`coxian_moments`] round trip to relative 1e-9.
pub fn fit_coxian(moments: Moments3) -> Result<CoxianPhases, InfeasibleMoments> {
    let Moments3 { m1, m2, m3 } = moments;
    if !(m1 > 0.0 && m2 > 0.0 && m3 > 0.0) || !(m1.is_finite() && m2.is_finite() && m3.is_finite())
    {
        return Err(InfeasibleMoments::NonPositive { m1, m2, m3 });
    }
    if m2 <= m1 * m1 {
        return Err(InfeasibleMoments::VarianceTooLow { m2, m1_sq: m1 * m1 });
    }
    let n2 = m2 / (m1 * m1);
    let n3 = m3 / (m1 * m1 * m1);
    let cv2 = n2 - 1.0;
    if cv2 < 0.5 - 1e-12 {
        return Err(InfeasibleMoments::CvBelowHalf { cv2 });
    }

    // Exponential moments fit exactly with a single phase.
    if (n2 - 2.0).abs() <= EXP_MATCH_TOL && (n3 - 6.0).abs() <= 6.0 * EXP_MATCH_TOL {
        return CoxianPhases::new(vec![CoxianPhase { rate: 1.0 / m1, continue_probability: 0.0 }]);
    }

    let h2 = n2 / 2.0;
    let h3 = n3 / 6.0;
    let a = h2 - 1.0;
    let b = h2 - h3;
    let c = h3 - h2 * h2;

    let mut candidates = Vec::with_capacity(2);
    if a.abs() < 1e-13 {
        if b.abs() < 1e-300 {
            return Err(InfeasibleMoments::ThirdMomentInfeasible {
                n2,
                n3,
                condition: "degenerate quadratic: no phase split exists",
            });
        }
        candidates.push(-c / b);
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Err(InfeasibleMoments::ThirdMomentInfeasible {
                n2,
                n3,
                condition: "negative discriminant: third moment outside the family",
            });
        }
        let root = disc.sqrt();
        candidates.push((-b - root) / (2.0 * a));
        candidates.push((-b + root) / (2.0 * a));
    }

    for x in candidates {
        if !(x > 0.0 && x < 1.0) {
            continue;
        }
        let y = (h2 - x) / (1.0 - x);
        if !(y > 0.0) {
            continue;
        }
        let p = (1.0 - x) / y;
        if !(-1e-12..=1.0 + 1e-12).contains(&p) {
            continue;
        }
        let coxian = CoxianPhases::new(vec![
            CoxianPhase { rate: 1.0 / (x * m1), continue_probability: p.clamp(0.0, 1.0) },
            CoxianPhase { rate: 1.0 / (y * m1), continue_probability: 0.0 },
        ])?;
        let refit = coxian_moments(&coxian);
        let deviation = ((refit.m1 - m1) / m1)
            .abs()
            .max(((refit.m2 - m2) / m2).abs())
            .max(((refit.m3 - m3) / m3).abs());
        if deviation > ROUND_TRIP_TOL {
            return Err(InfeasibleMoments::RoundTripFailed { deviation });
        }
        return Ok(coxian);
    }

    Err(InfeasibleMoments::ThirdMomentInfeasible {
        n2,
        n3,
        condition: "no quadratic root yields positive rates and a probability in [0, 1]",
    })
}

/// Closed-form totals of the two-server, no-arrivals comparison: two
/// inelastic jobs and one elastic job, `mu_E = 2 mu_I`, under each policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleValues {
    /// Expected sum of the three response times under Inelastic-First.
    pub total_if: f64,
    /// Expected sum of the three response times under Elastic-First.
    pub total_ef: f64,
}

/// First-step analysis of the start state (2 inelastic, 1 elastic) on k = 2
/// servers with `mu_E = 2 mu_I` and no arrivals. Each phase contributes
/// (jobs present) x (expected phase length), branching on which class
/// finishes first once one inelastic job is done.
///
/// Evaluates to `(35/12)/mu_I` and `(33/12)/mu_I`; Elastic-First wins.
pub fn counterexample_values(mu_i: f64) -> CounterexampleValues {
    let mu_e = 2.0 * mu_i;

    // IF: both inelastic run first; the elastic job waits.
    let both_inelastic = 3.0 / (2.0 * mu_i);
    let one_each = 2.0 / (mu_i + mu_e);
    let p_inelastic_first = mu_i / (mu_i + mu_e);
    let p_elastic_first = mu_e / (mu_i + mu_e);
    let elastic_alone = 1.0 / (2.0 * mu_e);
    let inelastic_alone = 1.0 / mu_i;
    let total_if =
        both_inelastic + one_each + p_inelastic_first * elastic_alone + p_elastic_first * inelastic_alone;

    // EF: the elastic job takes both servers, then the inelastic jobs run.
    let elastic_on_both = 3.0 / (2.0 * mu_e);
    let two_inelastic = 2.0 / (2.0 * mu_i);
    let last_inelastic = 1.0 / mu_i;
    let total_ef = elastic_on_both + two_inelastic + last_inelastic;

    CounterexampleValues { total_if, total_ef }
}
