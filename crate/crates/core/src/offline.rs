//! Offline scheduling of one-shot instances with per-job parallelizability
//! caps, and the dual-fitting certificate of the SRPT-k approximation.
//!
//! All jobs arrive at time 0. Job `j` has inherent size `x_j` and runs at
//! rate `min(k_j, p)` when given `p` processors. SRPT-k hands processors to
//! jobs in increasing order of inherent size; its total response time is
//! certified against an LP lower bound by the dual variables
//! `alpha_j = U_j/(k s) + x_j/(s k_j)` and `beta(t) = |Q(t)|/s`, which are
//! feasible at speed `s = 2` and witness a 4-approximation at speed 1.

use std::path::Path;

use thiserror::Error;

/// One job: inherent size and parallelizability cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineJob {
    pub size: f64,
    /// Maximum useful processor count, in `[1, k]`.
    pub cap: u32,
}

/// A one-shot instance: jobs (all released at time 0) and the processor
/// count.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineInstance {
    pub jobs: Vec<OfflineJob>,
    pub k: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OfflineError {
    #[error("instance must have at least one processor")]
    NoProcessors,
    #[error("job {index} has nonpositive size {size}")]
    BadSize { index: usize, size: f64 },
    #[error("job {index} cap {cap} outside [1, {k}]")]
    BadCap { index: usize, cap: u32, k: u32 },
    #[error("speed {speed} must be >= 1")]
    BadSpeed { speed: f64 },
    #[error("brute force is limited to {limit} jobs, instance has {jobs}")]
    TooLarge { jobs: usize, limit: usize },
    #[error("cannot read instance {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed instance line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl OfflineInstance {
    pub fn new(jobs: Vec<OfflineJob>, k: u32) -> Result<Self, OfflineError> {
        if k == 0 {
            return Err(OfflineError::NoProcessors);
        }
        for (index, job) in jobs.iter().enumerate() {
            if !(job.size > 0.0) || !job.size.is_finite() {
                return Err(OfflineError::BadSize { index, size: job.size });
            }
            if job.cap == 0 || job.cap > k {
                return Err(OfflineError::BadCap { index, cap: job.cap, k });
            }
        }
        Ok(OfflineInstance { jobs, k })
    }

    /// Parses the instance file format: a `k=<int>` header line, then one
    /// `size cap` pair per line. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, OfflineError> {
        let mut k: Option<u32> = None;
        let mut jobs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("k=") {
                if k.is_some() {
                    return Err(OfflineError::Parse {
                        line: lineno + 1,
                        reason: "duplicate k= header".into(),
                    });
                }
                k = Some(v.trim().parse().map_err(|_| OfflineError::Parse {
                    line: lineno + 1,
                    reason: format!("bad server count {v:?}"),
                })?);
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(OfflineError::Parse {
                    line: lineno + 1,
                    reason: "expected `size cap`".into(),
                });
            }
            let size: f64 = fields[0].parse().map_err(|_| OfflineError::Parse {
                line: lineno + 1,
                reason: format!("bad size {:?}", fields[0]),
            })?;
            let cap: u32 = fields[1].parse().map_err(|_| OfflineError::Parse {
                line: lineno + 1,
                reason: format!("bad cap {:?}", fields[1]),
            })?;
            jobs.push(OfflineJob { size, cap });
        }
        let k = k.ok_or(OfflineError::Parse { line: 0, reason: "missing k= header".into() })?;
        OfflineInstance::new(jobs, k)
    }

    pub fn from_file(path: &Path) -> Result<Self, OfflineError> {
        let text = std::fs::read_to_string(path).map_err(|e| OfflineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Jobs indexed in nondecreasing size order, ties by input index.
    pub fn priority_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.jobs.len()).collect();
        order.sort_by(|&a, &b| {
            self.jobs[a].size.partial_cmp(&self.jobs[b].size).unwrap().then(a.cmp(&b))
        });
        order
    }
}

/// One constant-allocation stretch of a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// Processors per job (input order), constant on the segment.
    pub assignment: Vec<f64>,
}

/// An event-segmented schedule with per-job completion times.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub segments: Vec<Segment>,
    /// Completion time per job, in input order.
    pub completion_times: Vec<f64>,
    /// Processor speed the schedule was built with.
    pub speed: f64,
}

/// Total response time: sum of completion times (all releases are at 0).
pub fn total_response_time(schedule: &Schedule) -> f64 {
    schedule.completion_times.iter().sum()
}

/// Runs the priority allocation for an arbitrary job order: each job in
/// turn takes `min(cap, remaining processors)`, depleting work at
/// `assignment x speed`. Segments break at completions.
fn priority_schedule(instance: &OfflineInstance, order: &[usize], speed: f64) -> Schedule {
    let n = instance.jobs.len();
    let mut remaining: Vec<f64> = instance.jobs.iter().map(|j| j.size).collect();
    let mut done = vec![false; n];
    let mut completion_times = vec![0.0f64; n];
    let mut segments = Vec::new();
    let mut t = 0.0f64;
    let mut left = n;

    while left > 0 {
        // Assign processors in priority order.
        let mut assignment = vec![0.0f64; n];
        let mut available = f64::from(instance.k);
        for &j in order {
            if done[j] || available <= 0.0 {
                continue;
            }
            let grant = f64::from(instance.jobs[j].cap).min(available);
            assignment[j] = grant;
            available -= grant;
        }
        // Earliest completion under these rates.
        let mut dt = f64::INFINITY;
        for j in 0..n {
            if !done[j] && assignment[j] > 0.0 {
                dt = dt.min(remaining[j] / (assignment[j] * speed));
            }
        }
        assert!(dt.is_finite(), "some unfinished job must be running");
        for j in 0..n {
            if !done[j] && assignment[j] > 0.0 {
                remaining[j] -= assignment[j] * speed * dt;
            }
        }
        let end = t + dt;
        segments.push(Segment { start: t, end, assignment });
        t = end;
        // Sweep every job that hit zero within the predicted event.
        for j in 0..n {
            if !done[j] && remaining[j] <= 1e-12 * instance.jobs[j].size {
                done[j] = true;
                completion_times[j] = t;
                left -= 1;
            }
        }
    }
    Schedule { segments, completion_times, speed }
}

/// The SRPT-k schedule at the given speed: processors go to jobs in
/// increasing order of inherent size (ties by input index).
pub fn srpt_k_schedule(instance: &OfflineInstance, speed: f64) -> Result<Schedule, OfflineError> {
    if !(speed >= 1.0) {
        return Err(OfflineError::BadSpeed { speed });
    }
    Ok(priority_schedule(instance, &instance.priority_order(), speed))
}

/// A piecewise-constant step of `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaStep {
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

/// The dual-fitting certificate extracted from a speed-`s` SRPT-k schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    /// Per-job duals, in input order: `alpha_j = U_j/(k s) + x_j/(s k_j)`.
    pub alpha: Vec<f64>,
    /// `beta(t) = |Q(t)|/s`, a nonincreasing step function.
    pub beta: Vec<BetaStep>,
    pub speed: f64,
    /// Total response time of the certifying schedule.
    pub total_response: f64,
}

impl DualCertificate {
    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Exact time integral of the step function `beta`.
    pub fn beta_integral(&self) -> f64 {
        self.beta.iter().map(|s| s.value * (s.end - s.start)).sum()
    }
}

/// Builds the dual certificate from the speed-`speed` SRPT-k schedule.
pub fn dual_variables(
    instance: &OfflineInstance,
    speed: f64,
) -> Result<DualCertificate, OfflineError> {
    let schedule = srpt_k_schedule(instance, speed)?;
    let order = instance.priority_order();
    let n = instance.jobs.len();
    let k = f64::from(instance.k);

    // U_j: total work strictly ahead of j in the priority order.
    let mut alpha = vec![0.0f64; n];
    let mut ahead = 0.0f64;
    for &j in &order {
        let job = instance.jobs[j];
        alpha[j] = ahead / (k * speed) + job.size / (speed * f64::from(job.cap));
        ahead += job.size;
    }

    // |Q(t)| drops at completion times; build the right-continuous steps.
    let mut completions: Vec<f64> = schedule.completion_times.clone();
    completions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut beta = Vec::new();
    let mut unfinished = n;
    let mut t = 0.0f64;
    let mut idx = 0usize;
    while idx < completions.len() {
        let c = completions[idx];
        let mut finished_here = 0;
        while idx < completions.len() && completions[idx] == c {
            idx += 1;
            finished_here += 1;
        }
        if c > t {
            beta.push(BetaStep { start: t, end: c, value: unfinished as f64 / speed });
        }
        unfinished -= finished_here;
        t = c;
    }
    let total_response = total_response_time(&schedule);
    Ok(DualCertificate { alpha, beta, speed, total_response })
}

/// A violated dual constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct DualViolation {
    pub job: usize,
    pub time: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl std::fmt::Display for DualViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "dual constraint violated for job {} at t={}: {} > {}",
            self.job, self.time, self.lhs, self.rhs
        )
    }
}

const DUAL_TOL: f64 = 1e-9;

/// Checks `alpha_j/x_j - beta(t)/k <= t/x_j + 1/(2 k_j)` for every job at
/// `t = 0` and at every breakpoint of `beta`. Between breakpoints the left
/// side is constant and the right side increasing, so breakpoints are
/// exhaustive.
pub fn verify_dual_feasibility(
    certificate: &DualCertificate,
    instance: &OfflineInstance,
) -> Result<(), DualViolation> {
    let k = f64::from(instance.k);
    for (j, job) in instance.jobs.iter().enumerate() {
        for step in &certificate.beta {
            let lhs = certificate.alpha[j] / job.size - step.value / k;
            let rhs = step.start / job.size + 1.0 / (2.0 * f64::from(job.cap));
            if lhs > rhs + DUAL_TOL {
                return Err(DualViolation { job: j, time: step.start, lhs, rhs });
            }
        }
        // Past the last completion beta is 0 and the right side keeps
        // growing, so the last remaining check point is the final step end.
        if let Some(last) = certificate.beta.last() {
            let lhs = certificate.alpha[j] / job.size;
            let rhs = last.end / job.size + 1.0 / (2.0 * f64::from(job.cap));
            if lhs > rhs + DUAL_TOL {
                return Err(DualViolation { job: j, time: last.end, lhs, rhs });
            }
        }
    }
    Ok(())
}

/// The certificate slack `(sum alpha - integral beta) - (1 - 1/s) C`.
///
/// Nonnegative for every instance: `alpha_j` upper-bounds job `j`'s response
/// time in the speed-`s` schedule while the `beta` integral is exactly
/// `C/s`.
pub fn certificate_gap(certificate: &DualCertificate) -> f64 {
    certificate.alpha_sum() - certificate.beta_integral()
        - (1.0 - 1.0 / certificate.speed) * certificate.total_response
}

/// Brute-force reference for tiny instances: minimum total response time
/// over priority schedules of every job order. For a fixed completion
/// order the order-greedy allocation is optimal, so this meets the optimum
/// whenever some priority order is optimal; otherwise it may exceed it,
/// which only tightens any approximation-ratio check made against it.
pub fn brute_force_opt(instance: &OfflineInstance) -> Result<f64, OfflineError> {
    const LIMIT: usize = 4;
    let n = instance.jobs.len();
    if n > LIMIT {
        return Err(OfflineError::TooLarge { jobs: n, limit: LIMIT });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut order, 0, &mut |perm| {
        let schedule = priority_schedule(instance, perm, 1.0);
        let total = total_response_time(&schedule);
        if total < best {
            best = total;
        }
    });
    Ok(best)
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn instance(jobs: &[(f64, u32)], k: u32) -> OfflineInstance {
        OfflineInstance::new(
            jobs.iter().map(|&(size, cap)| OfflineJob { size, cap }).collect(),
            k,
        )
        .unwrap()
    }

    #[test]
    fn single_job_completes_at_size_over_cap() {
        let inst = instance(&[(6.0, 3)], 4);
        let schedule = srpt_k_schedule(&inst, 1.0).unwrap();
        assert!((schedule.completion_times[0] - 2.0).abs() < 1e-12);
        assert!((total_response_time(&schedule) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn serial_jobs_on_two_processors() {
        // Sizes (1, 2, 3), caps 1, k = 2: completions 1, 2, 4; total 7.
        let inst = instance(&[(1.0, 1), (2.0, 1), (3.0, 1)], 2);
        let schedule = srpt_k_schedule(&inst, 1.0).unwrap();
        assert_eq!(schedule.completion_times, vec![1.0, 2.0, 4.0]);
        assert!((total_response_time(&schedule) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn permuting_identical_jobs_keeps_total() {
        // Ties break by input index; exchanging identical jobs is a pure
        // relabeling and cannot move the total.
        let a = instance(&[(2.0, 1), (2.0, 1), (1.0, 2)], 2);
        let b = instance(&[(1.0, 2), (2.0, 1), (2.0, 1)], 2);
        let ta = total_response_time(&srpt_k_schedule(&a, 1.0).unwrap());
        let tb = total_response_time(&srpt_k_schedule(&b, 1.0).unwrap());
        assert!((ta - tb).abs() < 1e-12);
        // The tie-break itself is deterministic: equal-size jobs finish in
        // input order when caps match.
        let s = srpt_k_schedule(&a, 1.0).unwrap();
        assert!(s.completion_times[0] <= s.completion_times[1]);
    }

    #[test]
    fn doubling_speed_halves_completions() {
        let inst = instance(&[(1.0, 1), (4.0, 2), (2.5, 1)], 3);
        let s1 = srpt_k_schedule(&inst, 1.0).unwrap();
        let s2 = srpt_k_schedule(&inst, 2.0).unwrap();
        for (a, b) in s1.completion_times.iter().zip(&s2.completion_times) {
            assert!((a / 2.0 - b).abs() < 1e-12);
        }
        assert!(
            (total_response_time(&s1) / 2.0 - total_response_time(&s2)).abs() < 1e-12
        );
    }

    #[test]
    fn work_conservation_in_every_segment() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let k = rng.gen_range(1..=8u32);
            let n = rng.gen_range(1..=6usize);
            let jobs: Vec<OfflineJob> = (0..n)
                .map(|_| OfflineJob {
                    size: 10f64.powf(rng.gen_range(-2.0..2.0)),
                    cap: rng.gen_range(1..=k),
                })
                .collect();
            let inst = OfflineInstance::new(jobs, k).unwrap();
            let schedule = srpt_k_schedule(&inst, 1.0).unwrap();
            for seg in &schedule.segments {
                let unfinished: Vec<usize> = (0..inst.jobs.len())
                    .filter(|&j| schedule.completion_times[j] > seg.start + 1e-12)
                    .collect();
                let cap_sum: f64 =
                    unfinished.iter().map(|&j| f64::from(inst.jobs[j].cap)).sum();
                let used: f64 = seg.assignment.iter().sum();
                let expect = cap_sum.min(f64::from(inst.k));
                assert!(
                    (used - expect).abs() < 1e-9,
                    "segment [{}, {}] uses {used}, expected {expect}",
                    seg.start,
                    seg.end
                );
            }
        }
    }

    #[test]
    fn dual_single_job_example() {
        // One job (x=1, cap 1), k=1, s=2: alpha = 0.5, beta = 0.5 on [0, 0.5).
        let inst = instance(&[(1.0, 1)], 1);
        let cert = dual_variables(&inst, 2.0).unwrap();
        assert!((cert.alpha[0] - 0.5).abs() < 1e-12);
        assert_eq!(cert.beta.len(), 1);
        assert!((cert.beta[0].value - 0.5).abs() < 1e-12);
        assert!((cert.beta[0].end - 0.5).abs() < 1e-12);
        assert!((cert.beta_integral() - 0.25).abs() < 1e-12);
        assert!(certificate_gap(&cert).abs() < 1e-12);
        verify_dual_feasibility(&cert, &inst).unwrap();
    }

    #[test]
    fn alpha_monotone_for_equal_caps() {
        let inst = instance(&[(1.0, 1), (2.0, 1), (3.0, 1), (5.0, 1)], 2);
        let cert = dual_variables(&inst, 2.0).unwrap();
        for w in cert.alpha.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn beta_integral_is_response_over_speed() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..30 {
            let k = rng.gen_range(1..=6u32);
            let n = rng.gen_range(1..=10usize);
            let jobs: Vec<OfflineJob> = (0..n)
                .map(|_| OfflineJob {
                    size: rng.gen_range(0.1..5.0),
                    cap: rng.gen_range(1..=k),
                })
                .collect();
            let inst = OfflineInstance::new(jobs, k).unwrap();
            let cert = dual_variables(&inst, 2.0).unwrap();
            assert!(
                (cert.beta_integral() - cert.total_response / 2.0).abs() < 1e-9
            );
        }
    }

    #[test]
    fn feasible_at_speed_two_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for round in 0..500 {
            let k = rng.gen_range(1..=8u32);
            let n = rng.gen_range(1..=50usize);
            let jobs: Vec<OfflineJob> = (0..n)
                .map(|_| OfflineJob {
                    size: 10f64.powf(rng.gen_range(-2.0..2.0)),
                    cap: rng.gen_range(1..=k),
                })
                .collect();
            let inst = OfflineInstance::new(jobs, k).unwrap();
            let cert = dual_variables(&inst, 2.0).unwrap();
            verify_dual_feasibility(&cert, &inst)
                .unwrap_or_else(|v| panic!("round {round}: {v}"));
            assert!(certificate_gap(&cert) >= -1e-9, "round {round}");
        }
    }

    #[test]
    fn detector_flags_speed_one_violations() {
        // The feasibility guarantee needs s=2; at s=1 some instance must
        // break the constraint, otherwise the detector is vacuous.
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut found = false;
        for _ in 0..2000 {
            let k = rng.gen_range(1..=4u32);
            let n = rng.gen_range(2..=8usize);
            let jobs: Vec<OfflineJob> = (0..n)
                .map(|_| OfflineJob {
                    size: rng.gen_range(0.05..4.0),
                    cap: rng.gen_range(1..=k),
                })
                .collect();
            let inst = OfflineInstance::new(jobs, k).unwrap();
            let cert = dual_variables(&inst, 1.0).unwrap();
            if verify_dual_feasibility(&cert, &inst).is_err() {
                found = true;
                break;
            }
        }
        assert!(found, "no speed-1 violation found; detector may be vacuous");
    }

    #[test]
    fn gap_scales_linearly_with_time_units() {
        let inst = instance(&[(1.0, 1), (2.0, 2), (3.0, 1)], 2);
        let scaled = instance(&[(2.5, 1), (5.0, 2), (7.5, 1)], 2);
        let g1 = certificate_gap(&dual_variables(&inst, 2.0).unwrap());
        let g2 = certificate_gap(&dual_variables(&scaled, 2.0).unwrap());
        assert!((g2 - 2.5 * g1).abs() < 1e-9);
    }

    #[test]
    fn brute_force_examples() {
        let single = instance(&[(3.0, 2)], 4);
        assert!((brute_force_opt(&single).unwrap() - 1.5).abs() < 1e-12);

        let serial = instance(&[(1.0, 1), (2.0, 1), (3.0, 1)], 2);
        assert!((brute_force_opt(&serial).unwrap() - 7.0).abs() < 1e-12);

        let too_big = instance(&[(1.0, 1); 5], 2);
        assert!(matches!(brute_force_opt(&too_big), Err(OfflineError::TooLarge { .. })));
    }

    #[test]
    fn srpt_within_four_of_brute_force_small_grid() {
        let sizes = [1.0, 2.0, 3.0, 5.0, 8.0];
        for k in [1u32, 2, 4] {
            let caps: Vec<u32> = match k {
                1 => vec![1],
                2 => vec![1, 2],
                _ => vec![1, 2, k],
            };
            // All 2-job instances over the size/cap menu.
            for &s1 in &sizes {
                for &s2 in &sizes {
                    for &c1 in &caps {
                        for &c2 in &caps {
                            let inst = instance(&[(s1, c1), (s2, c2)], k);
                            let srpt =
                                total_response_time(&srpt_k_schedule(&inst, 1.0).unwrap());
                            let opt = brute_force_opt(&inst).unwrap();
                            assert!(
                                srpt <= 4.0 * opt + 1e-9,
                                "ratio {} on {inst:?}",
                                srpt / opt
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn instance_file_round_trip() {
        let text = "# demo\nk=4\n1.5 2\n3 1\n";
        let inst = OfflineInstance::parse(text).unwrap();
        assert_eq!(inst.k, 4);
        assert_eq!(inst.jobs.len(), 2);
        assert_eq!(inst.jobs[0], OfflineJob { size: 1.5, cap: 2 });

        assert!(matches!(
            OfflineInstance::parse("1.0 1\n"),
            Err(OfflineError::Parse { .. })
        ));
        assert!(matches!(
            OfflineInstance::parse("k=2\n1.0 5\n"),
            Err(OfflineError::BadCap { .. })
        ));
        assert!(matches!(
            OfflineInstance::parse("k=2\n-1.0 1\n"),
            Err(OfflineError::BadSize { .. })
        ));
    }
}
