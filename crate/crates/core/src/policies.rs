//! Allocation policies and their structural classification.
//!
//! A policy is a stationary deterministic map from the chain state `(i, j)`
//! to a server allocation. Besides the two priority policies, arbitrary
//! policies can be loaded from plain-text tables. The classifier checks work
//! conservation, non-idling, class-P membership, and the GREEDY / GREEDY*
//! departure-rate conditions over a finite state rectangle; the drift
//! certificate bounds the Lyapunov drift outside the finite set
//! `F = {(i, j) : i + j <= k}`.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::domain::{load, validate_allocation, Allocation, State, SystemParams, ALLOC_TOL};

/// A stationary deterministic allocation policy.
pub trait Policy: Sync + Send {
    /// Servers granted to each class in `state`. Must satisfy
    /// [`validate_allocation`] for every reachable state.
    fn allocate(&self, state: State, params: &SystemParams) -> Allocation;

    /// Whether the policy serves inelastic jobs in FCFS order, the declared
    /// half of class-P membership. The allocation map alone cannot express
    /// within-class ordering, so it is a flag on the policy.
    fn serves_inelastic_fcfs(&self) -> bool {
        true
    }

    fn name(&self) -> &str;
}

/// Inelastic-First: one server per inelastic job, leftovers to the earliest
/// elastic job.
#[derive(Debug, Clone, Copy, Default)]
pub struct InelasticFirst;

/// Elastic-First: all servers to the earliest elastic job whenever one is
/// present, otherwise one server per inelastic job.
#[derive(Debug, Clone, Copy, Default)]
pub struct ElasticFirst;

/// The allocation made by Inelastic-First in `state`.
pub fn inelastic_first(state: State, params: &SystemParams) -> Allocation {
    let k = params.kf();
    let serving = (state.inelastic as f64).min(k);
    let elastic = if state.elastic > 0 { k - serving } else { 0.0 };
    Allocation::new(serving, elastic)
}

/// The allocation made by Elastic-First in `state`.
pub fn elastic_first(state: State, params: &SystemParams) -> Allocation {
    let k = params.kf();
    if state.elastic > 0 {
        Allocation::new(0.0, k)
    } else {
        Allocation::new((state.inelastic as f64).min(k), 0.0)
    }
}

impl Policy for InelasticFirst {
    fn allocate(&self, state: State, params: &SystemParams) -> Allocation {
        inelastic_first(state, params)
    }

    fn name(&self) -> &str {
        "IF"
    }
}

impl Policy for ElasticFirst {
    fn allocate(&self, state: State, params: &SystemParams) -> Allocation {
        elastic_first(state, params)
    }

    fn name(&self) -> &str {
        "EF"
    }
}

/// Fallback rule for states outside a policy table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefaultRule {
    InelasticFirst,
    ElasticFirst,
}

/// A policy given by an explicit state table plus a default rule.
#[derive(Debug, Clone)]
pub struct TablePolicy {
    name: String,
    entries: HashMap<(u64, u64), Allocation>,
    default: DefaultRule,
    fcfs: bool,
}

impl TablePolicy {
    pub fn new(
        name: impl Into<String>,
        entries: HashMap<(u64, u64), Allocation>,
        default: DefaultRule,
        fcfs: bool,
    ) -> Self {
        TablePolicy { name: name.into(), entries, default, fcfs }
    }

    /// Parses the plain-text table format: one `i j pi_I pi_E` line per
    /// state and a final (or initial) default line `* * IF` or `* * EF`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, TableError> {
        let mut entries = HashMap::new();
        let mut default = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 && fields.len() != 4 {
                return Err(TableError::Malformed { line: lineno + 1 });
            }
            if fields[0] == "*" && fields[1] == "*" {
                if fields.len() != 3 {
                    return Err(TableError::Malformed { line: lineno + 1 });
                }
                let rule = match fields[2] {
                    "IF" => DefaultRule::InelasticFirst,
                    "EF" => DefaultRule::ElasticFirst,
                    other => {
                        return Err(TableError::UnknownRule { line: lineno + 1, rule: other.to_string() })
                    }
                };
                if default.replace(rule).is_some() {
                    return Err(TableError::DuplicateDefault { line: lineno + 1 });
                }
                continue;
            }
            if fields.len() != 4 {
                return Err(TableError::Malformed { line: lineno + 1 });
            }
            let i: u64 = fields[0].parse().map_err(|_| TableError::Malformed { line: lineno + 1 })?;
            let j: u64 = fields[1].parse().map_err(|_| TableError::Malformed { line: lineno + 1 })?;
            let pi_i: f64 = fields[2].parse().map_err(|_| TableError::Malformed { line: lineno + 1 })?;
            let pi_e: f64 = fields[3].parse().map_err(|_| TableError::Malformed { line: lineno + 1 })?;
            if entries.insert((i, j), Allocation::new(pi_i, pi_e)).is_some() {
                return Err(TableError::DuplicateState { line: lineno + 1, i, j });
            }
        }
        let default = default.ok_or(TableError::MissingDefault)?;
        Ok(TablePolicy { name: name.into(), entries, default, fcfs: true })
    }

    pub fn from_file(path: &Path) -> Result<Self, TableError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TableError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "table".to_string());
        Self::parse(name, &text)
    }

    /// Every table entry must pass [`validate_allocation`].
    pub fn validate(&self, params: &SystemParams) -> Result<(), TableError> {
        for (&(i, j), &alloc) in &self.entries {
            validate_allocation(State::new(i, j), alloc, params)
                .map_err(|violation| TableError::InvalidEntry { i, j, reason: violation.to_string() })?;
        }
        Ok(())
    }

    pub fn set_fcfs(&mut self, fcfs: bool) {
        self.fcfs = fcfs;
    }
}

impl Policy for TablePolicy {
    fn allocate(&self, state: State, params: &SystemParams) -> Allocation {
        match self.entries.get(&(state.inelastic, state.elastic)) {
            Some(alloc) => *alloc,
            None => match self.default {
                DefaultRule::InelasticFirst => inelastic_first(state, params),
                DefaultRule::ElasticFirst => elastic_first(state, params),
            },
        }
    }

    fn serves_inelastic_fcfs(&self) -> bool {
        self.fcfs
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read policy table {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed policy table line {line}: expected `i j pi_I pi_E` or `* * RULE`")]
    Malformed { line: usize },
    #[error("unknown default rule {rule:?} on line {line} (expected IF or EF)")]
    UnknownRule { line: usize, rule: String },
    #[error("duplicate default rule on line {line}")]
    DuplicateDefault { line: usize },
    #[error("duplicate state ({i}, {j}) on line {line}")]
    DuplicateState { line: usize, i: u64, j: u64 },
    #[error("missing default rule line `* * IF|EF`")]
    MissingDefault,
    #[error("table entry for ({i}, {j}) is not a feasible allocation: {reason}")]
    InvalidEntry { i: u64, j: u64, reason: String },
}

/// Samples a random work-conserving FCFS policy on the given rectangle.
///
/// States beyond the rectangle fall back to Inelastic-First, so the result
/// is in class P everywhere. Used to exercise the dominance theorem against
/// policies other than EF.
pub fn random_class_p(
    rng: &mut impl Rng,
    params: &SystemParams,
    i_max: u64,
    j_max: u64,
    name: impl Into<String>,
) -> TablePolicy {
    let k = params.kf();
    let mut entries = HashMap::new();
    for i in 0..=i_max {
        for j in 1..=j_max {
            // Work conservation with j > 0 pins the total at k; only the
            // split is free.
            let cap = (i as f64).min(k);
            let pi_i = match rng.gen_range(0u8..3) {
                0 => cap,
                1 => 0.0,
                _ => rng.gen_range(0.0..=cap),
            };
            entries.insert((i, j), Allocation::new(pi_i, k - pi_i));
        }
    }
    TablePolicy::new(name, entries, DefaultRule::InelasticFirst, true)
}

/// Outcome of one classifier check: whether the property held over the whole
/// rectangle and, if not, the first state that broke it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlagResult {
    pub holds: bool,
    pub first_violation: Option<State>,
}

impl FlagResult {
    fn pass() -> Self {
        FlagResult { holds: true, first_violation: None }
    }

    fn record(&mut self, state: State) {
        if self.holds {
            self.holds = false;
            self.first_violation = Some(state);
        }
    }
}

/// Structural classification of a policy over a scan rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    /// Never idles servers an eligible job could use: all `k` busy whenever
    /// an elastic job is present, every inelastic job served otherwise.
    pub work_conserving: FlagResult,
    /// No unnecessarily idle server; coincides with work conservation at the
    /// `(i, j)` level but is evaluated from the idle-capacity side.
    pub non_idling: FlagResult,
    /// Work-conserving and serves inelastic jobs FCFS.
    pub in_class_p: FlagResult,
    /// Attains the maximal total departure rate in every state.
    pub greedy: FlagResult,
    /// GREEDY with the minimal elastic allocation among rate maximizers.
    pub greedy_star: FlagResult,
}

/// Rate tolerance for the departure-rate comparisons in the classifier.
const RATE_TOL: f64 = 1e-9;

/// Default classification rectangle, `4k x 4k`: every structural
/// distinction among the shipped policies appears within `i, j <= k + 1`,
/// so this leaves generous margin.
pub fn default_scan_rectangle(params: &SystemParams) -> (u64, u64) {
    let side = 4 * u64::from(params.k);
    (side, side)
}

/// Maximal total departure rate over feasible allocations in `state`, along
/// with the minimal elastic allocation among maximizers.
fn max_departure_rate(state: State, params: &SystemParams) -> (f64, f64) {
    let k = params.kf();
    let cap_i = (state.inelastic as f64).min(k);
    let cap_e = if state.elastic > 0 { k } else { 0.0 };
    // Linear objective over a box-capped simplex: the optimum sits at a
    // vertex determined by the larger service rate.
    if params.mu_i > params.mu_e {
        let pi_i = cap_i;
        let pi_e = (k - pi_i).min(cap_e);
        (pi_i * params.mu_i + pi_e * params.mu_e, pi_e)
    } else if params.mu_i < params.mu_e {
        let pi_e = cap_e;
        let pi_i = (k - pi_e).min(cap_i);
        (pi_i * params.mu_i + pi_e * params.mu_e, pi_e)
    } else {
        let total = if state.elastic > 0 { k } else { cap_i };
        (total * params.mu_i, (total - cap_i).max(0.0))
    }
}

/// Classifies `policy` by direct check of each defining condition over the
/// rectangle `{0..=i_max} x {0..=j_max}`.
pub fn classify(
    policy: &dyn Policy,
    params: &SystemParams,
    i_max: u64,
    j_max: u64,
) -> Classification {
    let k = params.kf();
    let mut work_conserving = FlagResult::pass();
    let mut non_idling = FlagResult::pass();
    let mut greedy = FlagResult::pass();
    let mut greedy_star = FlagResult::pass();

    for i in 0..=i_max {
        for j in 0..=j_max {
            let state = State::new(i, j);
            let alloc = policy.allocate(state, params);

            let conserving = if j > 0 {
                (alloc.total() - k).abs() <= ALLOC_TOL
            } else {
                (alloc.inelastic - (i as f64).min(k)).abs() <= ALLOC_TOL
            };
            if !conserving {
                work_conserving.record(state);
            }

            // Idle capacity an eligible job could still absorb.
            let idle = k - alloc.total();
            let absorbable = if j > 0 {
                idle
            } else {
                ((i as f64).min(k) - alloc.inelastic).min(idle)
            };
            if absorbable > ALLOC_TOL {
                non_idling.record(state);
            }

            let rate = alloc.inelastic * params.mu_i + alloc.elastic * params.mu_e;
            let (max_rate, min_elastic) = max_departure_rate(state, params);
            if rate < max_rate - RATE_TOL {
                greedy.record(state);
                greedy_star.record(state);
            } else if alloc.elastic > min_elastic + ALLOC_TOL {
                greedy_star.record(state);
            }
        }
    }

    let in_class_p = if policy.serves_inelastic_fcfs() {
        work_conserving
    } else {
        FlagResult { holds: false, first_violation: work_conserving.first_violation }
    };

    Classification { work_conserving, non_idling, in_class_p, greedy, greedy_star }
}

/// The Lyapunov function `V(i, j) = i/(k mu_I) + j/(k mu_E)`.
pub fn lyapunov_value(state: State, params: &SystemParams) -> f64 {
    let k = params.kf();
    state.inelastic as f64 / (k * params.mu_i) + state.elastic as f64 / (k * params.mu_e)
}

/// Drift of `V` at `state`: the sum over the four neighbor transitions of
/// rate times the change in `V`. Work-conserving policies give exactly
/// `rho - 1` whenever `i + j > k`.
pub fn lyapunov_drift(policy: &dyn Policy, params: &SystemParams, state: State) -> f64 {
    let alloc = policy.allocate(state, params);
    let v = lyapunov_value(state, params);
    let up_i = State::new(state.inelastic + 1, state.elastic);
    let up_e = State::new(state.inelastic, state.elastic + 1);
    let mut drift = params.lambda_i * (lyapunov_value(up_i, params) - v)
        + params.lambda_e * (lyapunov_value(up_e, params) - v);
    if state.inelastic > 0 {
        let down_i = State::new(state.inelastic - 1, state.elastic);
        drift += alloc.inelastic * params.mu_i * (lyapunov_value(down_i, params) - v);
    }
    if state.elastic > 0 {
        let down_e = State::new(state.inelastic, state.elastic - 1);
        drift += alloc.elastic * params.mu_e * (lyapunov_value(down_e, params) - v);
    }
    drift
}

/// A certified negative-drift bound outside `F = {(i, j) : i + j <= k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    /// Least margin `-dV` over scanned states outside `F`; positive.
    pub epsilon: f64,
    /// State outside `F` attaining the least margin.
    pub worst_state: State,
    /// Largest drift observed inside `F` (informational; `F` is the finite
    /// exception set and carries no sign requirement).
    pub inside_set_max: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriftError {
    #[error("load must be below 1 for a drift certificate, got {rho}")]
    Unstable { rho: f64 },
    #[error("drift certificate failed: state {state} outside F has drift {drift} >= 0")]
    CertificateFailed { state: State, drift: f64 },
    #[error("scan rectangle {i_max}x{j_max} contains no state outside F for k = {k}")]
    RectangleTooSmall { i_max: u64, j_max: u64, k: u32 },
}

/// Scans the rectangle and certifies `dV <= -epsilon` on every state outside
/// `F`. Fails on the first state with nonnegative drift, which signals a
/// non-work-conserving or unstable policy.
pub fn drift_certificate(
    policy: &dyn Policy,
    params: &SystemParams,
    i_max: u64,
    j_max: u64,
) -> Result<DriftReport, DriftError> {
    let rho = load(params);
    if rho >= 1.0 {
        return Err(DriftError::Unstable { rho });
    }
    let mut epsilon = f64::INFINITY;
    let mut worst_state = None;
    let mut inside_set_max = f64::NEG_INFINITY;
    for i in 0..=i_max {
        for j in 0..=j_max {
            let state = State::new(i, j);
            let drift = lyapunov_drift(policy, params, state);
            if state.total() <= u64::from(params.k) {
                inside_set_max = inside_set_max.max(drift);
                continue;
            }
            if drift >= 0.0 {
                return Err(DriftError::CertificateFailed { state, drift });
            }
            if -drift < epsilon {
                epsilon = -drift;
                worst_state = Some(state);
            }
        }
    }
    match worst_state {
        Some(worst_state) => Ok(DriftReport { epsilon, worst_state, inside_set_max }),
        None => Err(DriftError::RectangleTooSmall { i_max, j_max, k: params.k }),
    }
}
