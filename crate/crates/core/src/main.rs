//! Experiment runner CLI. Exit codes: 0 success, 1 assertion failure,
//! 2 invalid input.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use elastic_sched::experiments::{
    self, CounterexampleOpts, DominanceOpts, HeatmapOpts, HighkOpts, LinesOpts,
    OfflineCertifyOpts, RunOutput, ValidateOpts,
};

#[derive(Parser)]
#[command(
    name = "elastic-sched",
    about = "Allocation-policy workbench for elastic and inelastic jobs on k servers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/SVG files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base RNG seed; reruns with the same seed are byte-identical.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Winner map of IF vs EF over the (mu_I, mu_E) plane (default grid
    /// 0.25..4.0 step 0.25, rho in {0.5, 0.7, 0.9}, k = 4).
    Heatmap {
        #[command(flatten)]
        common: Common,
        /// Comma-separated loads, each in (0, 1) [default: 0.5,0.7,0.9].
        #[arg(long)]
        rho: Option<String>,
        /// Server count [default: 4].
        #[arg(long)]
        k: Option<u32>,
        /// Grid steps per axis, values 0.25, 0.50, ... [default: 16].
        #[arg(long)]
        grid: Option<u32>,
    },
    /// Mean response times vs mu_I at fixed mu_E (default 1.0).
    Lines {
        #[command(flatten)]
        common: Common,
        /// Comma-separated loads [default: 0.5,0.7,0.9].
        #[arg(long)]
        rho: Option<String>,
        /// Server count [default: 4].
        #[arg(long)]
        k: Option<u32>,
        /// Grid steps along mu_I [default: 16].
        #[arg(long)]
        grid: Option<u32>,
        /// Elastic service rate held fixed along the sweep [default: 1].
        #[arg(long)]
        mu_e: Option<f64>,
    },
    /// Mean response times as the server count grows at fixed load.
    Highk {
        #[command(flatten)]
        common: Common,
        /// Load [default: 0.9].
        #[arg(long)]
        rho: Option<String>,
        /// Smallest server count [default: 2].
        #[arg(long)]
        k_min: Option<u32>,
        /// Largest server count [default: 16].
        #[arg(long)]
        k_max: Option<u32>,
        /// Comma-separated mu_I:mu_E pairs [default: 0.25:1,3.25:1].
        #[arg(long)]
        pairs: Option<String>,
    },
    /// Two-server counterexample: closed forms vs transient simulation.
    Counterexample {
        #[command(flatten)]
        common: Common,
        /// Inelastic service rate; mu_E is fixed at 2 mu_I [default: 1].
        #[arg(long)]
        mu_i: Option<f64>,
        /// Monte-Carlo replications [default: 1000000].
        #[arg(long)]
        replications: Option<u64>,
    },
    /// Analytic vs simulated mean response times over the validation grid.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Server count [default: 4].
        #[arg(long)]
        k: Option<u32>,
        /// Allowed relative disagreement [default: 0.01].
        #[arg(long)]
        tolerance: Option<f64>,
        /// Multiplier on every event budget; use < 1 for smoke runs
        /// [default: 1].
        #[arg(long)]
        effort: Option<f64>,
    },
    /// Coupled sample paths: IF work never exceeds any class-P policy's.
    Dominance {
        #[command(flatten)]
        common: Common,
        /// Random arrival sequences to couple [default: 1000].
        #[arg(long)]
        sequences: Option<u64>,
        /// Time horizon per sequence [default: 1000].
        #[arg(long)]
        horizon: Option<f64>,
        /// Load [default: 0.8].
        #[arg(long)]
        rho: Option<String>,
        /// Server count [default: 4].
        #[arg(long)]
        k: Option<u32>,
        /// Inelastic service rate [default: 1].
        #[arg(long)]
        mu_i: Option<f64>,
        /// Elastic service rate [default: 1].
        #[arg(long)]
        mu_e: Option<f64>,
        /// Random class-P comparison policies [default: 5].
        #[arg(long)]
        random_policies: Option<u32>,
        /// Additional policy table file to check (lines `i j pi_I pi_E`,
        /// default rule `* * IF|EF`).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// SRPT-k schedule, speed-2 dual certificate, and brute-force ratios.
    OfflineCertify {
        #[command(flatten)]
        common: Common,
        /// Instance file (`k=<int>` header, then `size cap` lines);
        /// without it a random batch is certified.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Random instances to certify [default: 10000].
        #[arg(long)]
        count: Option<u64>,
        /// Largest random instance size [default: 50].
        #[arg(long)]
        max_jobs: Option<usize>,
        /// Largest random server count [default: 8].
        #[arg(long)]
        k_max: Option<u32>,
    },
}

/// Flag value, else config value, else default.
fn pick<T: FromStr + Clone>(
    flag: &Option<T>,
    config: &HashMap<String, String>,
    key: &str,
    default: T,
) -> Result<T, String> {
    if let Some(v) = flag {
        return Ok(v.clone());
    }
    match config.get(key) {
        Some(raw) => {
            raw.parse::<T>().map_err(|_| format!("config key {key} has bad value {raw:?}"))
        }
        None => Ok(default),
    }
}

fn parse_rhos(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad rho {s:?}")))
        .collect()
}

fn parse_pairs(raw: &str) -> Result<Vec<(f64, f64)>, String> {
    raw.split(',')
        .map(|s| {
            let (a, b) = s.split_once(':').ok_or(format!("bad pair {s:?}, expected mu_I:mu_E"))?;
            Ok((
                a.trim().parse().map_err(|_| format!("bad mu_I {a:?}"))?,
                b.trim().parse().map_err(|_| format!("bad mu_E {b:?}"))?,
            ))
        })
        .collect()
}

struct Resolved {
    config: HashMap<String, String>,
    out: PathBuf,
    seed: u64,
}

fn resolve_common(common: &Common, default_out: &str) -> Result<Resolved, String> {
    let config = match &common.config {
        Some(path) => experiments::load_config(path).map_err(|e| e.to_string())?,
        None => HashMap::new(),
    };
    let out = match (&common.out, config.get("out")) {
        (Some(path), _) => path.clone(),
        (None, Some(path)) => PathBuf::from(path),
        (None, None) => PathBuf::from(default_out),
    };
    let seed = pick(&common.seed, &config, "seed", 1u64)?;
    Ok(Resolved { config, out, seed })
}

fn run(cli: Cli) -> Result<RunOutput, String> {
    let as_run = |e: experiments::ExperimentError| e.to_string();
    match cli.command {
        Command::Heatmap { common, rho, k, grid } => {
            let r = resolve_common(&common, "out/heatmap")?;
            let rhos = parse_rhos(&pick(&rho, &r.config, "rho", "0.5,0.7,0.9".to_string())?)?;
            let opts = HeatmapOpts {
                rhos,
                k: pick(&k, &r.config, "k", 4)?,
                grid: pick(&grid, &r.config, "grid", 16)?,
                seed: r.seed,
                out: r.out,
            };
            experiments::run_heatmap(&opts).map_err(as_run)
        }
        Command::Lines { common, rho, k, grid, mu_e } => {
            let r = resolve_common(&common, "out/lines")?;
            let rhos = parse_rhos(&pick(&rho, &r.config, "rho", "0.5,0.7,0.9".to_string())?)?;
            let opts = LinesOpts {
                rhos,
                k: pick(&k, &r.config, "k", 4)?,
                grid: pick(&grid, &r.config, "grid", 16)?,
                mu_e: pick(&mu_e, &r.config, "mu_e", 1.0)?,
                seed: r.seed,
                out: r.out,
            };
            experiments::run_lines(&opts).map_err(as_run)
        }
        Command::Highk { common, rho, k_min, k_max, pairs } => {
            let r = resolve_common(&common, "out/highk")?;
            let rhos = parse_rhos(&pick(&rho, &r.config, "rho", "0.9".to_string())?)?;
            if rhos.len() != 1 {
                return Err("highk takes a single rho".to_string());
            }
            let opts = HighkOpts {
                rho: rhos[0],
                k_min: pick(&k_min, &r.config, "k_min", 2)?,
                k_max: pick(&k_max, &r.config, "k_max", 16)?,
                pairs: parse_pairs(&pick(
                    &pairs,
                    &r.config,
                    "pairs",
                    "0.25:1,3.25:1".to_string(),
                )?)?,
                seed: r.seed,
                out: r.out,
            };
            experiments::run_highk(&opts).map_err(as_run)
        }
        Command::Counterexample { common, mu_i, replications } => {
            let r = resolve_common(&common, "out/counterexample")?;
            let opts = CounterexampleOpts {
                mu_i: pick(&mu_i, &r.config, "mu_i", 1.0)?,
                replications: pick(&replications, &r.config, "replications", 1_000_000)?,
                seed: r.seed,
                out: r.out,
            };
            experiments::run_counterexample(&opts).map_err(as_run)
        }
        Command::Validate { common, k, tolerance, effort } => {
            let r = resolve_common(&common, "out/validate")?;
            let opts = ValidateOpts {
                k: pick(&k, &r.config, "k", 4)?,
                points: experiments::default_validate_points(),
                tolerance: pick(&tolerance, &r.config, "tolerance", 0.01)?,
                effort: pick(&effort, &r.config, "effort", 1.0)?,
                seed: r.seed,
                out: r.out,
            };
            experiments::run_validate(&opts).map_err(as_run)
        }
        Command::Dominance {
            common,
            sequences,
            horizon,
            rho,
            k,
            mu_i,
            mu_e,
            random_policies,
            policy,
        } => {
            let r = resolve_common(&common, "out/dominance")?;
            let rhos = parse_rhos(&pick(&rho, &r.config, "rho", "0.8".to_string())?)?;
            if rhos.len() != 1 {
                return Err("dominance takes a single rho".to_string());
            }
            let policy_file = policy.or_else(|| r.config.get("policy").map(PathBuf::from));
            let opts = DominanceOpts {
                sequences: pick(&sequences, &r.config, "sequences", 1000)?,
                horizon: pick(&horizon, &r.config, "horizon", 1000.0)?,
                rho: rhos[0],
                k: pick(&k, &r.config, "k", 4)?,
                mu_i: pick(&mu_i, &r.config, "mu_i", 1.0)?,
                mu_e: pick(&mu_e, &r.config, "mu_e", 1.0)?,
                random_policies: pick(&random_policies, &r.config, "random_policies", 5)?,
                policy_file,
                seed: r.seed,
                out: r.out,
            };
            experiments::run_dominance(&opts).map_err(as_run)
        }
        Command::OfflineCertify { common, instance, count, max_jobs, k_max } => {
            let r = resolve_common(&common, "out/offline")?;
            let instance = instance.or_else(|| r.config.get("instance").map(PathBuf::from));
            let opts = OfflineCertifyOpts {
                instance,
                random_count: pick(&count, &r.config, "count", 10_000)?,
                max_jobs: pick(&max_jobs, &r.config, "max_jobs", 50)?,
                k_max: pick(&k_max, &r.config, "k_max", 8)?,
                seed: r.seed,
                out: r.out,
            };
            experiments::run_offline_certify(&opts).map_err(as_run)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(output) => {
            for file in &output.files {
                println!("wrote {}", file.display());
            }
            if output.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
