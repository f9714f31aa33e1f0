//! Core model types shared by every other module: system parameters, chain
//! states, server allocations, and fixed arrival sequences.
//!
//! Inelastic jobs occupy at most one server. A per-job cap of `C` servers
//! reduces to this model by allocating in units of `k/C` servers, so only
//! the unit cap is implemented.

use thiserror::Error;

/// Absolute tolerance for comparisons between real-valued allocations.
///
/// Servers time-share, so allocations are fractional; every inequality on
/// them is checked up to this slack.
pub const ALLOC_TOL: f64 = 1e-12;

/// The two job classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JobClass {
    /// Runs on at most one server at any instant.
    Inelastic,
    /// Parallelizes linearly across any number of servers.
    Elastic,
}

impl std::fmt::Display for JobClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JobClass::Inelastic => write!(f, "inelastic"),
            JobClass::Elastic => write!(f, "elastic"),
        }
    }
}

/// Arrival and service rates of both classes plus the server count.
///
/// Sizes are exponential: inelastic jobs have mean size `1/mu_i`, elastic
/// jobs `1/mu_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Poisson arrival rate of inelastic jobs.
    pub lambda_i: f64,
    /// Poisson arrival rate of elastic jobs.
    pub lambda_e: f64,
    /// Inelastic service rate (reciprocal mean size).
    pub mu_i: f64,
    /// Elastic service rate (reciprocal mean size).
    pub mu_e: f64,
    /// Number of identical servers.
    pub k: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("arrival rate {name} must be nonnegative and finite, got {value}")]
    BadArrivalRate { name: &'static str, value: f64 },
    #[error("service rate {name} must be strictly positive and finite, got {value}")]
    BadServiceRate { name: &'static str, value: f64 },
    #[error("server count must be at least 1")]
    NoServers,
    #[error("load {rho} is not below 1; steady state does not exist")]
    Overloaded { rho: f64 },
}

impl SystemParams {
    /// Validates and builds parameters. Arrival rates may be zero (an empty
    /// class is a legitimate special case); service rates must be positive.
    pub fn new(lambda_i: f64, lambda_e: f64, mu_i: f64, mu_e: f64, k: u32) -> Result<Self, ParamsError> {
        for (name, value) in [("lambda_i", lambda_i), ("lambda_e", lambda_e)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(ParamsError::BadArrivalRate { name, value });
            }
        }
        for (name, value) in [("mu_i", mu_i), ("mu_e", mu_e)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ParamsError::BadServiceRate { name, value });
            }
        }
        if k == 0 {
            return Err(ParamsError::NoServers);
        }
        Ok(SystemParams { lambda_i, lambda_e, mu_i, mu_e, k })
    }

    /// Server count as a float, for rate arithmetic.
    pub fn kf(&self) -> f64 {
        f64::from(self.k)
    }

    /// Errors unless `load < 1`, as required by every steady-state operation.
    pub fn require_stable(&self) -> Result<(), ParamsError> {
        let rho = load(self);
        if rho < 1.0 {
            Ok(())
        } else {
            Err(ParamsError::Overloaded { rho })
        }
    }
}

/// System load: `rho = lambda_i/(k mu_i) + lambda_e/(k mu_e)`.
///
/// The chain is ergodic under any work-conserving policy iff this is < 1.
pub fn load(params: &SystemParams) -> f64 {
    let k = params.kf();
    params.lambda_i / (k * params.mu_i) + params.lambda_e / (k * params.mu_e)
}

/// A chain state: the number of inelastic and elastic jobs in the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub inelastic: u64,
    pub elastic: u64,
}

impl State {
    pub fn new(inelastic: u64, elastic: u64) -> Self {
        State { inelastic, elastic }
    }

    pub fn total(&self) -> u64 {
        self.inelastic + self.elastic
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.inelastic, self.elastic)
    }
}

/// Servers granted to each class in some state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    /// Servers given to inelastic jobs (at most one per job).
    pub inelastic: f64,
    /// Servers given to elastic jobs.
    pub elastic: f64,
}

impl Allocation {
    pub fn new(inelastic: f64, elastic: f64) -> Self {
        Allocation { inelastic, elastic }
    }

    pub fn total(&self) -> f64 {
        self.inelastic + self.elastic
    }
}

/// A violated allocation constraint, naming the inequality that failed.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationViolation {
    #[error("allocations must be nonnegative: ({inelastic}, {elastic})")]
    Negative { inelastic: f64, elastic: f64 },
    #[error("inelastic allocation {allocated} exceeds min(i, k) = {cap} in state {state}")]
    InelasticOverJobs { state: State, allocated: f64, cap: f64 },
    #[error("elastic allocation {allocated} is positive while no elastic job is present in state {state}")]
    ElasticWithoutJobs { state: State, allocated: f64 },
    #[error("elastic allocation {allocated} exceeds the {k} servers")]
    ElasticOverServers { allocated: f64, k: u32 },
    #[error("total allocation {total} exceeds the {k} servers")]
    TotalOverServers { total: f64, k: u32 },
}

/// Checks the three allocation constraints: `pi_I <= min(i, k)`,
/// `pi_E <= k * 1{j > 0}`, and `pi_I + pi_E <= k`, each up to [`ALLOC_TOL`].
pub fn validate_allocation(
    state: State,
    alloc: Allocation,
    params: &SystemParams,
) -> Result<(), AllocationViolation> {
    let k = params.kf();
    if alloc.inelastic < -ALLOC_TOL || alloc.elastic < -ALLOC_TOL {
        return Err(AllocationViolation::Negative {
            inelastic: alloc.inelastic,
            elastic: alloc.elastic,
        });
    }
    let cap = (state.inelastic as f64).min(k);
    if alloc.inelastic > cap + ALLOC_TOL {
        return Err(AllocationViolation::InelasticOverJobs {
            state,
            allocated: alloc.inelastic,
            cap,
        });
    }
    if state.elastic == 0 && alloc.elastic.abs() > ALLOC_TOL {
        return Err(AllocationViolation::ElasticWithoutJobs {
            state,
            allocated: alloc.elastic,
        });
    }
    if alloc.elastic > k + ALLOC_TOL {
        return Err(AllocationViolation::ElasticOverServers {
            allocated: alloc.elastic,
            k: params.k,
        });
    }
    if alloc.total() > k + ALLOC_TOL {
        return Err(AllocationViolation::TotalOverServers {
            total: alloc.total(),
            k: params.k,
        });
    }
    Ok(())
}

/// One arrival on a fixed sample path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    /// Absolute arrival time.
    pub time: f64,
    pub class: JobClass,
    /// Exact job size (units of work).
    pub size: f64,
}

/// A fixed, finite sequence of arrivals with exact sizes, ordered by time.
///
/// Absolute times make it trivial to couple two policies on one path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArrivalSequence {
    pub events: Vec<Arrival>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrivalSequenceError {
    #[error("arrival times must be nondecreasing: event {index} at {time} precedes {previous}")]
    UnorderedTimes { index: usize, time: f64, previous: f64 },
    #[error("event {index} has nonpositive size {size}")]
    BadSize { index: usize, size: f64 },
    #[error("event {index} has negative or non-finite time {time}")]
    BadTime { index: usize, time: f64 },
}

impl ArrivalSequence {
    pub fn new(events: Vec<Arrival>) -> Result<Self, ArrivalSequenceError> {
        let mut previous = 0.0f64;
        for (index, ev) in events.iter().enumerate() {
            if !(ev.time >= 0.0) || !ev.time.is_finite() {
                return Err(ArrivalSequenceError::BadTime { index, time: ev.time });
            }
            if ev.time < previous {
                return Err(ArrivalSequenceError::UnorderedTimes {
                    index,
                    time: ev.time,
                    previous,
                });
            }
            if !(ev.size > 0.0) || !ev.size.is_finite() {
                return Err(ArrivalSequenceError::BadSize { index, size: ev.size });
            }
            previous = ev.time;
        }
        Ok(ArrivalSequence { events })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda_i: f64, lambda_e: f64, mu_i: f64, mu_e: f64, k: u32) -> SystemParams {
        SystemParams::new(lambda_i, lambda_e, mu_i, mu_e, k).unwrap()
    }

    #[test]
    fn load_matches_definition() {
        assert_eq!(load(&params(1.0, 1.0, 1.0, 1.0, 4)), 0.5);
        assert_eq!(load(&params(0.0, 0.0, 1.0, 1.0, 1)), 0.0);
        let high = load(&params(1.8, 1.8, 1.0, 1.0, 4));
        assert!((high - 0.9).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(-1.0, 0.0, 1.0, 1.0, 1).is_err());
        assert!(SystemParams::new(0.0, 0.0, 0.0, 1.0, 1).is_err());
        assert!(SystemParams::new(0.0, 0.0, 1.0, 1.0, 0).is_err());
        assert!(params(3.0, 3.0, 1.0, 1.0, 4).require_stable().is_err());
        assert!(params(1.0, 1.0, 1.0, 1.0, 4).require_stable().is_ok());
    }

    #[test]
    fn allocation_examples() {
        let p = params(1.0, 1.0, 1.0, 1.0, 4);
        assert!(validate_allocation(State::new(2, 1), Allocation::new(2.0, 2.0), &p).is_ok());
        assert!(matches!(
            validate_allocation(State::new(2, 0), Allocation::new(2.0, 1.0), &p),
            Err(AllocationViolation::ElasticWithoutJobs { .. })
        ));
        assert!(matches!(
            validate_allocation(State::new(1, 1), Allocation::new(2.0, 0.0), &p),
            Err(AllocationViolation::InelasticOverJobs { .. })
        ));
    }

    #[test]
    fn arrival_sequence_ordering() {
        let ok = ArrivalSequence::new(vec![
            Arrival { time: 0.0, class: JobClass::Inelastic, size: 1.0 },
            Arrival { time: 0.5, class: JobClass::Elastic, size: 2.0 },
        ]);
        assert!(ok.is_ok());
        let bad = ArrivalSequence::new(vec![
            Arrival { time: 1.0, class: JobClass::Inelastic, size: 1.0 },
            Arrival { time: 0.5, class: JobClass::Elastic, size: 2.0 },
        ]);
        assert!(matches!(bad, Err(ArrivalSequenceError::UnorderedTimes { .. })));
        let zero = ArrivalSequence::new(vec![Arrival {
            time: 0.0,
            class: JobClass::Elastic,
            size: 0.0,
        }]);
        assert!(matches!(zero, Err(ArrivalSequenceError::BadSize { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_params() -> impl Strategy<Value = SystemParams> {
            (0.0f64..5.0, 0.0f64..5.0, 0.05f64..5.0, 0.05f64..5.0, 1u32..12)
                .prop_map(|(li, le, mi, me, k)| SystemParams::new(li, le, mi, me, k).unwrap())
        }

        proptest! {
            // Linear in each arrival rate, inversely linear in k.
            #[test]
            fn load_is_linear(p in arb_params(), a in 0.1f64..4.0) {
                let scaled_i = SystemParams { lambda_i: a * p.lambda_i, ..p };
                let zero_i = SystemParams { lambda_i: 0.0, ..p };
                let expect = a * (load(&p) - load(&zero_i)) + load(&zero_i);
                prop_assert!((load(&scaled_i) - expect).abs() < 1e-12);

                let doubled_k = SystemParams { k: 2 * p.k, ..p };
                prop_assert!((load(&doubled_k) * 2.0 - load(&p)).abs() < 1e-12);
            }

            // The validator accepts exactly the set cut out by the three
            // inequalities, re-evaluated directly here.
            #[test]
            fn validator_matches_inequalities(
                p in arb_params(),
                i in 0u64..10,
                j in 0u64..10,
                ai in -0.5f64..12.0,
                ae in -0.5f64..12.0,
            ) {
                let state = State::new(i, j);
                let alloc = Allocation::new(ai, ae);
                let k = p.kf();
                let ok = ai >= -ALLOC_TOL
                    && ae >= -ALLOC_TOL
                    && ai <= (i as f64).min(k) + ALLOC_TOL
                    && (j > 0 || ae.abs() <= ALLOC_TOL)
                    && ae <= k + ALLOC_TOL
                    && ai + ae <= k + ALLOC_TOL;
                prop_assert_eq!(validate_allocation(state, alloc, &p).is_ok(), ok);
            }
        }
    }
}
