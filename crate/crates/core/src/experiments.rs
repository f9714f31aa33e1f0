//! Experiment runners behind the CLI: policy-comparison sweeps, the
//! two-server counterexample, analytic-versus-simulation validation, coupled
//! sample-path dominance checks, and offline certification.
//!
//! Every runner writes deterministic CSV (metadata lines prefixed `#`, then
//! one header row) and, where useful, a native SVG rendering. Identical
//! options and seed produce byte-identical files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::analytic::{mean_response_ef, mean_response_if, AnalyticError, ResponseTimes};
use crate::domain::{load, State, SystemParams};
use crate::offline::{
    brute_force_opt, certificate_gap, dual_variables, srpt_k_schedule, total_response_time,
    OfflineError, OfflineInstance, OfflineJob,
};
use crate::policies::{
    random_class_p, ElasticFirst, InelasticFirst, Policy, TableError, TablePolicy,
};
use crate::simulator::{
    check_dominance, generate_arrivals, simulate_ctmc, simulate_sample_path,
    transient_total_response, Horizon, SimConfig, SimError, GENERATOR_ID,
};
use crate::svg::Plot;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid experiment options: {reason}")]
    Invalid { reason: String },
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Offline(#[from] OfflineError),
    #[error(transparent)]
    PolicyTable(#[from] TableError),
}

/// What a runner produced: whether every asserted property held and which
/// files were written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

/// Arrival rate solving the fixed-load constraint with `lambda_I =
/// lambda_E`: `lambda = rho k / (1/mu_I + 1/mu_E)`.
pub fn lambda_for(rho: f64, k: u32, mu_i: f64, mu_e: f64) -> f64 {
    rho * f64::from(k) / (1.0 / mu_i + 1.0 / mu_e)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(path)
}

fn metadata(kind: &str, seed: u64, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# experiment = {kind}");
    let _ = writeln!(out, "# seed = {seed}");
    let _ = writeln!(out, "# generator = {GENERATOR_ID}");
    for (key, value) in extra {
        let _ = writeln!(out, "# {key} = {value}");
    }
    out
}

/// Flat `key = value` configuration file; `#` starts a comment line.
pub fn load_config(path: &Path) -> Result<HashMap<String, String>, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ExperimentError::Invalid {
            reason: format!("config line {} is not `key = value`: {line:?}", lineno + 1),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// One solved grid point; a response is `None` when the analytic pipeline
/// reported an infeasible fit, which the CSV marks rather than drops.
struct GridRow {
    mu_i: f64,
    mu_e: f64,
    lambda: f64,
    k: u32,
    rho: f64,
    t_if: Option<ResponseTimes>,
    t_ef: Option<ResponseTimes>,
}

fn solve_grid_point(rho: f64, k: u32, mu_i: f64, mu_e: f64) -> GridRow {
    let lambda = lambda_for(rho, k, mu_i, mu_e);
    let params = SystemParams::new(lambda, lambda, mu_i, mu_e, k)
        .expect("grid points are valid by construction");
    debug_assert!((load(&params) - rho).abs() < 1e-9);
    GridRow {
        mu_i,
        mu_e,
        lambda,
        k,
        rho,
        t_if: mean_response_if(&params).ok(),
        t_ef: mean_response_ef(&params).ok(),
    }
}

fn grid_csv(rows: &[GridRow], header: String) -> String {
    let mut out = header;
    out.push_str("mu_I,mu_E,lambda_I,lambda_E,k,rho,T_IF,T_EF,winner\n");
    for row in rows {
        let (t_if, t_ef, winner) = match (&row.t_if, &row.t_ef) {
            (Some(a), Some(b)) => {
                (a.t.to_string(), b.t.to_string(), if a.t <= b.t { "IF" } else { "EF" })
            }
            _ => ("nan".to_string(), "nan".to_string(), "error"),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.mu_i, row.mu_e, row.lambda, row.lambda, row.k, row.rho, t_if, t_ef, winner
        );
    }
    out
}

pub struct HeatmapOpts {
    pub rhos: Vec<f64>,
    pub k: u32,
    /// Grid steps per axis; the values are `0.25, 0.50, ...`.
    pub grid: u32,
    pub seed: u64,
    pub out: PathBuf,
}

fn grid_values(grid: u32) -> Vec<f64> {
    (1..=grid).map(|i| 0.25 * f64::from(i)).collect()
}

fn check_rhos(rhos: &[f64]) -> Result<(), ExperimentError> {
    if rhos.is_empty() {
        return Err(ExperimentError::Invalid { reason: "no rho values given".into() });
    }
    for &rho in rhos {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(ExperimentError::Invalid {
                reason: format!("rho {rho} outside (0, 1); steady state needs load < 1"),
            });
        }
    }
    Ok(())
}

/// Winner map over the `(mu_I, mu_E)` plane at each load.
pub fn run_heatmap(opts: &HeatmapOpts) -> Result<RunOutput, ExperimentError> {
    check_rhos(&opts.rhos)?;
    let values = grid_values(opts.grid);
    let mut points = Vec::new();
    for &rho in &opts.rhos {
        for &mu_i in &values {
            for &mu_e in &values {
                points.push((rho, mu_i, mu_e));
            }
        }
    }
    let rows: Vec<GridRow> = points
        .par_iter()
        .map(|&(rho, mu_i, mu_e)| solve_grid_point(rho, opts.k, mu_i, mu_e))
        .collect();

    let header = metadata(
        "heatmap",
        opts.seed,
        &[
            ("k", opts.k.to_string()),
            ("rhos", join(&opts.rhos)),
            ("grid", format!("0.25..{} step 0.25", values.last().unwrap())),
        ],
    );
    let mut files = vec![write_file(&opts.out, "heatmap.csv", &grid_csv(&rows, header))?];

    for &rho in &opts.rhos {
        let max_mu = *values.last().unwrap();
        let mut plot =
            Plot::new(&format!("IF vs EF winner, rho = {rho}, k = {}", opts.k), "mu_I", "mu_E")
                .with_ranges((0.0, max_mu + 0.25), (0.0, max_mu + 0.25));
        let winners = |want_if: bool| {
            rows.iter()
                .filter(|r| r.rho == rho)
                .filter_map(|r| match (&r.t_if, &r.t_ef) {
                    (Some(a), Some(b)) if (a.t <= b.t) == want_if => Some((r.mu_i, r.mu_e)),
                    _ => None,
                })
                .collect::<Vec<_>>()
        };
        plot.circles(&winners(true), "#d62728", "IF wins");
        plot.plusses(&winners(false), "#1f77b4", "EF wins");
        files.push(write_file(&opts.out, &format!("heatmap_rho{rho}.svg"), &plot.render())?);
    }
    Ok(RunOutput { passed: true, files })
}

pub struct LinesOpts {
    pub rhos: Vec<f64>,
    pub k: u32,
    pub mu_e: f64,
    pub grid: u32,
    pub seed: u64,
    pub out: PathBuf,
}

/// Absolute mean response times as a function of `mu_I` at fixed `mu_E`.
pub fn run_lines(opts: &LinesOpts) -> Result<RunOutput, ExperimentError> {
    check_rhos(&opts.rhos)?;
    let values = grid_values(opts.grid);
    let mut points = Vec::new();
    for &rho in &opts.rhos {
        for &mu_i in &values {
            points.push((rho, mu_i));
        }
    }
    let rows: Vec<GridRow> = points
        .par_iter()
        .map(|&(rho, mu_i)| solve_grid_point(rho, opts.k, mu_i, opts.mu_e))
        .collect();

    let header = metadata(
        "lines",
        opts.seed,
        &[
            ("k", opts.k.to_string()),
            ("rhos", join(&opts.rhos)),
            ("mu_E", opts.mu_e.to_string()),
        ],
    );
    let mut files = vec![write_file(&opts.out, "lines.csv", &grid_csv(&rows, header))?];

    for &rho in &opts.rhos {
        let series: Vec<&GridRow> = rows.iter().filter(|r| r.rho == rho).collect();
        let curve = |pick: fn(&GridRow) -> Option<f64>| {
            series.iter().filter_map(|r| pick(r).map(|t| (r.mu_i, t))).collect::<Vec<_>>()
        };
        let if_curve = curve(|r| r.t_if.as_ref().map(|t| t.t));
        let ef_curve = curve(|r| r.t_ef.as_ref().map(|t| t.t));
        let y_max = if_curve.iter().chain(&ef_curve).map(|&(_, t)| t).fold(0.0f64, f64::max);
        let mut plot = Plot::new(
            &format!("mean response time, rho = {rho}, k = {}, mu_E = {}", opts.k, opts.mu_e),
            "mu_I",
            "E[T]",
        )
        .with_ranges((0.0, *values.last().unwrap() + 0.25), (0.0, y_max * 1.05));
        plot.line(&if_curve, "#d62728", false, "IF");
        plot.line(&ef_curve, "#1f77b4", true, "EF");
        files.push(write_file(&opts.out, &format!("lines_rho{rho}.svg"), &plot.render())?);
    }
    Ok(RunOutput { passed: true, files })
}

pub struct HighkOpts {
    pub rho: f64,
    pub k_min: u32,
    pub k_max: u32,
    /// `(mu_I, mu_E)` pairs to sweep.
    pub pairs: Vec<(f64, f64)>,
    pub seed: u64,
    pub out: PathBuf,
}

/// Mean response times as the server count grows at fixed load.
pub fn run_highk(opts: &HighkOpts) -> Result<RunOutput, ExperimentError> {
    check_rhos(&[opts.rho])?;
    if opts.k_min < 1 || opts.k_min > opts.k_max {
        return Err(ExperimentError::Invalid {
            reason: format!("bad k range {}..{}", opts.k_min, opts.k_max),
        });
    }
    let mut points = Vec::new();
    for &(mu_i, mu_e) in &opts.pairs {
        for k in opts.k_min..=opts.k_max {
            points.push((mu_i, mu_e, k));
        }
    }
    let rows: Vec<GridRow> = points
        .par_iter()
        .map(|&(mu_i, mu_e, k)| solve_grid_point(opts.rho, k, mu_i, mu_e))
        .collect();

    let header = metadata(
        "highk",
        opts.seed,
        &[
            ("rho", opts.rho.to_string()),
            ("k_range", format!("{}..{}", opts.k_min, opts.k_max)),
            ("pairs", format!("{:?}", opts.pairs)),
        ],
    );
    let mut files = vec![write_file(&opts.out, "highk.csv", &grid_csv(&rows, header))?];

    for &(mu_i, mu_e) in &opts.pairs {
        let series: Vec<&GridRow> =
            rows.iter().filter(|r| r.mu_i == mu_i && r.mu_e == mu_e).collect();
        let curve = |pick: fn(&GridRow) -> Option<f64>| {
            series.iter().filter_map(|r| pick(r).map(|t| (f64::from(r.k), t))).collect::<Vec<_>>()
        };
        let if_curve = curve(|r| r.t_if.as_ref().map(|t| t.t));
        let ef_curve = curve(|r| r.t_ef.as_ref().map(|t| t.t));
        let y_max = if_curve.iter().chain(&ef_curve).map(|&(_, t)| t).fold(0.0f64, f64::max);
        let mut plot =
            Plot::new(&format!("rho = {}, mu_I = {mu_i}, mu_E = {mu_e}", opts.rho), "k", "E[T]")
                .with_ranges((0.0, f64::from(opts.k_max) + 1.0), (0.0, y_max * 1.05));
        plot.line(&if_curve, "#d62728", false, "IF");
        plot.line(&ef_curve, "#1f77b4", true, "EF");
        files.push(write_file(
            &opts.out,
            &format!("highk_muI{mu_i}_muE{mu_e}.svg"),
            &plot.render(),
        )?);
    }
    Ok(RunOutput { passed: true, files })
}

pub struct CounterexampleOpts {
    pub mu_i: f64,
    pub replications: u64,
    pub seed: u64,
    pub out: PathBuf,
}

/// Closed-form versus simulated totals for the two-server start state
/// (2 inelastic, 1 elastic) with `mu_E = 2 mu_I` and no arrivals.
pub fn run_counterexample(opts: &CounterexampleOpts) -> Result<RunOutput, ExperimentError> {
    if !(opts.mu_i > 0.0) {
        return Err(ExperimentError::Invalid { reason: format!("mu_I {} must be > 0", opts.mu_i) });
    }
    let closed = crate::analytic::counterexample_values(opts.mu_i);
    let params = SystemParams::new(0.0, 0.0, opts.mu_i, 2.0 * opts.mu_i, 2)
        .expect("counterexample parameters are valid");
    let start = State::new(2, 1);
    let sim_if =
        transient_total_response(&InelasticFirst, start, &params, opts.replications, opts.seed)?;
    let sim_ef = transient_total_response(
        &ElasticFirst,
        start,
        &params,
        opts.replications,
        opts.seed ^ 0x5eed,
    )?;

    // Three-sigma agreement between simulation and the closed forms.
    let sigma = 3.0 / 1.96;
    let if_ok = (sim_if.mean - closed.total_if).abs() <= sigma * sim_if.ci_halfwidth;
    let ef_ok = (sim_ef.mean - closed.total_ef).abs() <= sigma * sim_ef.ci_halfwidth;
    let ef_wins = closed.total_ef < closed.total_if && sim_ef.mean < sim_if.mean;
    let passed = if_ok && ef_ok && ef_wins;

    let mut report = String::new();
    let _ = writeln!(
        report,
        "counterexample: k=2, mu_I={}, mu_E={}, no arrivals,",
        opts.mu_i,
        2.0 * opts.mu_i
    );
    let _ = writeln!(report, "start state: 2 inelastic jobs, 1 elastic job");
    let _ = writeln!(report);
    let _ = writeln!(report, "expected total response time (sum over the 3 jobs):");
    let _ = writeln!(report, "  IF closed form  = {}  (35/12 / mu_I)", closed.total_if);
    let _ = writeln!(report, "  EF closed form  = {}  (33/12 / mu_I)", closed.total_ef);
    let _ = writeln!(
        report,
        "  IF simulated    = {} +- {} (95% CI, {} replications)",
        sim_if.mean, sim_if.ci_halfwidth, opts.replications
    );
    let _ = writeln!(
        report,
        "  EF simulated    = {} +- {} (95% CI, {} replications)",
        sim_ef.mean, sim_ef.ci_halfwidth, opts.replications
    );
    let _ = writeln!(report);
    let _ = writeln!(report, "per-job means (total / 3):");
    let _ = writeln!(report, "  IF = {}   EF = {}", closed.total_if / 3.0, closed.total_ef / 3.0);
    let _ = writeln!(report);
    let _ = writeln!(report, "EF < IF: {ef_wins}");
    let _ = writeln!(report, "simulation within 3 sigma of closed form: IF {if_ok}, EF {ef_ok}");
    print!("{report}");

    let mut csv = metadata(
        "counterexample",
        opts.seed,
        &[("mu_I", opts.mu_i.to_string()), ("replications", opts.replications.to_string())],
    );
    csv.push_str("policy,closed_form,simulated,ci_halfwidth,per_job_mean\n");
    let _ = writeln!(
        csv,
        "IF,{},{},{},{}",
        closed.total_if,
        sim_if.mean,
        sim_if.ci_halfwidth,
        closed.total_if / 3.0
    );
    let _ = writeln!(
        csv,
        "EF,{},{},{},{}",
        closed.total_ef,
        sim_ef.mean,
        sim_ef.ci_halfwidth,
        closed.total_ef / 3.0
    );
    let files = vec![
        write_file(&opts.out, "counterexample.csv", &csv)?,
        write_file(&opts.out, "counterexample.txt", &report)?,
    ];
    Ok(RunOutput { passed, files })
}

/// One validation point: load, service rates, and the per-policy event
/// budget and replication count used to simulate it.
#[derive(Debug, Clone, Copy)]
pub struct ValidatePoint {
    pub rho: f64,
    pub mu_i: f64,
    pub mu_e: f64,
    pub events_per_rep: u64,
    pub replications: u32,
}

pub struct ValidateOpts {
    pub k: u32,
    pub points: Vec<ValidatePoint>,
    /// Relative disagreement allowed between analysis and simulation.
    pub tolerance: f64,
    /// Scales every event budget (for quick smoke runs).
    pub effort: f64,
    pub seed: u64,
    pub out: PathBuf,
}

/// The default validation grid: 48 points across loads 0.5, 0.7, and 0.9,
/// with simulation effort rising steeply with load so that the Monte-Carlo
/// half-width stays well under the 1% comparison tolerance.
pub fn default_validate_points() -> Vec<ValidatePoint> {
    let mut points = Vec::new();
    for &mu_i in &[0.25, 0.5, 1.0, 2.0, 4.0] {
        for &mu_e in &[0.25, 1.0, 2.0, 4.0] {
            points.push(ValidatePoint {
                rho: 0.5,
                mu_i,
                mu_e,
                events_per_rep: 5_000_000,
                replications: 8,
            });
        }
    }
    for &mu_i in &[0.25, 1.0, 2.0, 4.0] {
        for &mu_e in &[0.25, 1.0, 2.0, 4.0] {
            points.push(ValidatePoint {
                rho: 0.7,
                mu_i,
                mu_e,
                events_per_rep: 15_000_000,
                replications: 8,
            });
        }
    }
    for &mu_i in &[0.25, 1.0, 3.25] {
        for &mu_e in &[0.25, 1.0, 2.0, 4.0] {
            // Large slow jobs stretch the autocorrelation time, so the
            // small-mu_I points get the biggest event budgets.
            let events_per_rep = if mu_i <= 0.5 { 200_000_000 } else { 80_000_000 };
            points.push(ValidatePoint { rho: 0.9, mu_i, mu_e, events_per_rep, replications: 10 });
        }
    }
    points
}

/// Compares analytic and simulated mean response times for both policies on
/// a parameter grid; fails if any point disagrees beyond the tolerance.
pub fn run_validate(opts: &ValidateOpts) -> Result<RunOutput, ExperimentError> {
    struct Row {
        point: ValidatePoint,
        lambda: f64,
        policy: &'static str,
        analytic: f64,
        simulated: f64,
        ci: f64,
    }

    let mut work = Vec::new();
    for &point in &opts.points {
        check_rhos(&[point.rho])?;
        work.push((point, true));
        work.push((point, false));
    }

    let rows: Result<Vec<Row>, ExperimentError> = work
        .iter()
        .map(|&(point, use_if)| {
            let lambda = lambda_for(point.rho, opts.k, point.mu_i, point.mu_e);
            let params = SystemParams::new(lambda, lambda, point.mu_i, point.mu_e, opts.k)
                .expect("validate points are valid");
            let analytic =
                if use_if { mean_response_if(&params)? } else { mean_response_ef(&params)? };
            let mut config = SimConfig::new(opts.seed ^ hash_point(&point, use_if));
            let events = ((point.events_per_rep as f64) * opts.effort).max(1000.0) as u64;
            config.horizon = Horizon::Events(events);
            config.replications = point.replications;
            let stats = if use_if {
                simulate_ctmc(&InelasticFirst, &params, &config)?
            } else {
                simulate_ctmc(&ElasticFirst, &params, &config)?
            };
            Ok(Row {
                point,
                lambda,
                policy: if use_if { "IF" } else { "EF" },
                analytic: analytic.t,
                simulated: stats.t.mean,
                ci: stats.t.ci_halfwidth,
            })
        })
        .collect();
    let rows = rows?;

    let mut csv = metadata(
        "validate",
        opts.seed,
        &[
            ("k", opts.k.to_string()),
            ("tolerance", opts.tolerance.to_string()),
            ("effort", opts.effort.to_string()),
        ],
    );
    csv.push_str("rho,mu_I,mu_E,lambda_I,lambda_E,k,policy,T_analytic,T_sim,ci_halfwidth,rel_err\n");
    let mut passed = true;
    let mut worst = 0.0f64;
    for row in &rows {
        let rel = (row.analytic - row.simulated).abs() / row.simulated;
        worst = worst.max(rel);
        if rel > opts.tolerance {
            passed = false;
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.point.rho,
            row.point.mu_i,
            row.point.mu_e,
            row.lambda,
            row.lambda,
            opts.k,
            row.policy,
            row.analytic,
            row.simulated,
            row.ci,
            rel
        );
    }
    println!(
        "validate: {} comparisons, worst relative error {:.4}% (tolerance {}%): {}",
        rows.len(),
        100.0 * worst,
        100.0 * opts.tolerance,
        if passed { "PASS" } else { "FAIL" }
    );
    let files = vec![write_file(&opts.out, "validate.csv", &csv)?];
    Ok(RunOutput { passed, files })
}

fn hash_point(point: &ValidatePoint, use_if: bool) -> u64 {
    // Stable per-point stream separation for the validation runs.
    let mut h = 0xcbf29ce484222325u64;
    for bits in
        [point.rho.to_bits(), point.mu_i.to_bits(), point.mu_e.to_bits(), u64::from(use_if)]
    {
        h ^= bits;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub struct DominanceOpts {
    pub sequences: u64,
    pub horizon: f64,
    pub rho: f64,
    pub k: u32,
    pub mu_i: f64,
    pub mu_e: f64,
    pub random_policies: u32,
    /// Extra policy loaded from a table file, checked alongside the rest.
    pub policy_file: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

/// Couples Inelastic-First with each comparison policy on shared random
/// arrival sequences and asserts the pathwise work ordering everywhere.
pub fn run_dominance(opts: &DominanceOpts) -> Result<RunOutput, ExperimentError> {
    check_rhos(&[opts.rho])?;
    let lambda = lambda_for(opts.rho, opts.k, opts.mu_i, opts.mu_e);
    let params = SystemParams::new(lambda, lambda, opts.mu_i, opts.mu_e, opts.k)
        .expect("dominance parameters are valid");

    let mut policies: Vec<Box<dyn Policy>> = vec![Box::new(ElasticFirst)];
    let mut rng = rand_seed(opts.seed ^ 0xd0a11ce);
    let rect = 4 * u64::from(opts.k);
    for n in 0..opts.random_policies {
        policies.push(Box::new(random_class_p(
            &mut rng,
            &params,
            rect,
            rect,
            format!("random-P-{n}"),
        )));
    }
    if let Some(path) = &opts.policy_file {
        let table = TablePolicy::from_file(path)?;
        table.validate(&params)?;
        policies.push(Box::new(table));
    }

    type SequenceOutcomes = (u64, Vec<(String, Option<String>)>);
    let results: Vec<SequenceOutcomes> = (0..opts.sequences)
        .into_par_iter()
        .map(|s| {
            let arrivals = generate_arrivals(&params, opts.horizon, opts.seed ^ s);
            let base = simulate_sample_path(&InelasticFirst, &arrivals, &params)
                .expect("IF is in class P");
            let outcomes = policies
                .iter()
                .map(|policy| {
                    let traj = simulate_sample_path(policy.as_ref(), &arrivals, &params)
                        .expect("comparison policies are in class P");
                    let verdict = check_dominance(&base, &traj).err().map(|v| v.to_string());
                    (policy.name().to_string(), verdict)
                })
                .collect();
            (s, outcomes)
        })
        .collect();

    let mut csv = metadata(
        "dominance",
        opts.seed,
        &[
            ("sequences", opts.sequences.to_string()),
            ("horizon", opts.horizon.to_string()),
            ("rho", opts.rho.to_string()),
            ("k", opts.k.to_string()),
        ],
    );
    csv.push_str("sequence,policy,ok,violation\n");
    let mut violations = 0u64;
    for (s, outcomes) in &results {
        for (name, verdict) in outcomes {
            let ok = verdict.is_none();
            if !ok {
                violations += 1;
            }
            let _ = writeln!(
                csv,
                "{s},{name},{ok},{}",
                verdict.clone().unwrap_or_default().replace(',', ";")
            );
        }
    }
    let checks = results.len() as u64 * policies.len() as u64;
    println!(
        "dominance: {checks} coupled sample paths checked, {violations} violations: {}",
        if violations == 0 { "PASS" } else { "FAIL" }
    );
    let files = vec![write_file(&opts.out, "dominance.csv", &csv)?];
    Ok(RunOutput { passed: violations == 0, files })
}

fn rand_seed(seed: u64) -> rand_chacha::ChaCha12Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha12Rng::seed_from_u64(seed)
}

pub struct OfflineCertifyOpts {
    /// Certify this instance file; otherwise run a random batch.
    pub instance: Option<PathBuf>,
    pub random_count: u64,
    pub max_jobs: usize,
    pub k_max: u32,
    pub seed: u64,
    pub out: PathBuf,
}

/// Schedules instances with SRPT-k, verifies the speed-2 dual certificate,
/// and compares against brute force on tiny instances.
pub fn run_offline_certify(opts: &OfflineCertifyOpts) -> Result<RunOutput, ExperimentError> {
    struct Row {
        label: String,
        k: u32,
        jobs: usize,
        response: f64,
        gap: f64,
        feasible: bool,
        ratio: Option<f64>,
    }

    let certify = |label: String, instance: &OfflineInstance| -> Result<Row, ExperimentError> {
        let schedule = srpt_k_schedule(instance, 1.0)?;
        let response = total_response_time(&schedule);
        let cert = dual_variables(instance, 2.0)?;
        let feasible = crate::offline::verify_dual_feasibility(&cert, instance).is_ok();
        let gap = certificate_gap(&cert);
        let ratio = match brute_force_opt(instance) {
            Ok(opt) if opt > 0.0 => Some(response / opt),
            _ => None,
        };
        Ok(Row { label, k: instance.k, jobs: instance.jobs.len(), response, gap, feasible, ratio })
    };

    let mut rows = Vec::new();
    if let Some(path) = &opts.instance {
        let instance = OfflineInstance::from_file(path)?;
        rows.push(certify(path.display().to_string(), &instance)?);
    } else {
        use rand::Rng;
        let mut rng = rand_seed(opts.seed);
        for idx in 0..opts.random_count {
            let k = rng.gen_range(1..=opts.k_max);
            let n = rng.gen_range(1..=opts.max_jobs);
            let jobs: Vec<OfflineJob> = (0..n)
                .map(|_| OfflineJob {
                    size: 10f64.powf(rng.gen_range(-2.0..2.0)),
                    cap: rng.gen_range(1..=k),
                })
                .collect();
            let instance = OfflineInstance::new(jobs, k).expect("random instances are valid");
            rows.push(certify(format!("random-{idx}"), &instance)?);
        }
    }

    let mut csv = metadata(
        "offline-certify",
        opts.seed,
        &[
            ("instances", rows.len().to_string()),
            ("max_jobs", opts.max_jobs.to_string()),
            ("k_max", opts.k_max.to_string()),
        ],
    );
    csv.push_str(
        "instance,k,jobs,srpt_total_response,certificate_gap,dual_feasible_s2,ratio_vs_bruteforce\n",
    );
    let mut passed = true;
    let mut worst_ratio = 0.0f64;
    for row in &rows {
        if !row.feasible || row.gap < -1e-9 {
            passed = false;
        }
        if let Some(r) = row.ratio {
            worst_ratio = worst_ratio.max(r);
            if r > 4.0 + 1e-9 {
                passed = false;
            }
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.label,
            row.k,
            row.jobs,
            row.response,
            row.gap,
            row.feasible,
            row.ratio.map(|r| r.to_string()).unwrap_or_default()
        );
    }
    println!(
        "offline-certify: {} instances, all duals feasible at s=2 and gaps >= 0: {}{}",
        rows.len(),
        if passed { "PASS" } else { "FAIL" },
        if worst_ratio > 0.0 {
            format!(" (worst brute-force ratio {worst_ratio:.4})")
        } else {
            String::new()
        }
    );
    let files = vec![write_file(&opts.out, "offline_certify.csv", &csv)?];
    Ok(RunOutput { passed, files })
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
