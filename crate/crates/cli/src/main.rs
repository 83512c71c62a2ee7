//! `howard-lsc`: validate, certify, generate, solve, evaluate and simulate
//! discounted MDP models stored as JSON.
//!
//! Exit codes: 0 success, 1 domain failure (invalid model, failed
//! certificate, non-convergence, inadmissible policy), 2 I/O or parse
//! failure.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use howard_lsc::bench::{
    make_inventory, make_queueing, make_random_finite_mdp, make_threshold_model, InventoryParams, QueueingParams,
};
use howard_lsc::format::{load_model_with_warnings, load_policy, model_to_string, policy_to_string};
use howard_lsc::lyapunov::{certify_growth, w_dist, weight_discontinuities, GrowthCertificate};
use howard_lsc::montecarlo::{estimate_value, horizon_for};
use howard_lsc::operators::{evaluate_policy, EvalMethod, DEFAULT_EVAL_TOL};
use howard_lsc::solvers::{
    best_improvement_pi, rate_report, smoothed_policy_iteration, value_iteration, value_iteration_with, BestOptions,
    BestTrace, PiOptions, Termination, DEFAULT_EPSILON, DEFAULT_PI_MAX_ITER, DEFAULT_TOL, DEFAULT_VI_MAX_ITER,
};
use howard_lsc::{Error, ModelSpec, Policy};
use serde::Serialize;
use serde_json::json;

const THREADS_VAR: &str = "HOWARD_LSC_THREADS";

/// Truncation target used by `simulate` when no horizon is given.
const DEFAULT_TRUNCATION: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "howard-lsc", version, about = "Smoothed policy iteration for discounted MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check model invariants and the growth certificate.
    Validate(ValidateArgs),
    /// Print the growth certificate (M, beta, gamma) as JSON.
    Certify(CertifyArgs),
    /// Write a benchmark model.
    Gen(GenArgs),
    /// Solve a model by value iteration or policy iteration.
    Solve(SolveArgs),
    /// Evaluate a fixed policy.
    Eval(EvalArgs),
    /// Monte Carlo estimate of a policy's value at one node.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ValidateArgs {
    model: PathBuf,
    /// Fail when the weight is not continuous across envelope neighbours.
    #[arg(long)]
    strict_cc: bool,
    /// Replace the model's discount factor before certifying.
    #[arg(long)]
    alpha: Option<f64>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CertifyArgs {
    model: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    family: GenFamily,
    /// Output file; stdout when omitted.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenFamily {
    /// Move-right chain on [0, 1] with a cost jump at 1/2.
    Threshold {
        /// Number of interior cells (odd, at least 3).
        #[arg(long, default_value_t = 11)]
        n_cells: usize,
        #[arg(long, default_value_t = 1.0)]
        jump: f64,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
    },
    /// Lost-sales inventory with weight 1 + x.
    Inventory {
        #[arg(long, default_value_t = 20)]
        capacity: usize,
        /// Demand distribution over 0, 1, 2, ...
        #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.4, 0.3, 0.15, 0.1])]
        demand: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        order_cost: f64,
        #[arg(long, default_value_t = 0.1)]
        holding_cost: f64,
        #[arg(long, default_value_t = 3.0)]
        shortage_cost: f64,
        #[arg(long, default_value_t = 1)]
        max_order: usize,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
    },
    /// Single-server admission-control queue.
    Queueing {
        #[arg(long, default_value_t = 20)]
        buffer: usize,
        #[arg(long, default_value_t = 0.05)]
        arrival: f64,
        #[arg(long, default_value_t = 0.3)]
        service: f64,
        #[arg(long, default_value_t = 5.0)]
        reject_cost: f64,
        #[arg(long, default_value_t = 1.0)]
        hold_cost: f64,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
    },
    /// Random sparse MDP on a trivial grid.
    Random {
        #[arg(long, default_value_t = 50)]
        states: usize,
        #[arg(long, default_value_t = 5)]
        actions: usize,
        #[arg(long, default_value_t = 4)]
        sparsity: usize,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Vi,
    Pi,
    PiBest,
}

#[derive(Args)]
struct SolveArgs {
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = Algorithm::Pi)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Tie tolerance of the argmin sets (pi-best only).
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Initial policy file (JSON array of action ids).
    #[arg(long)]
    f0: Option<PathBuf>,
    /// Write the trace; `.csv` gives the plotting columns, anything else JSON.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the final policy.
    #[arg(long)]
    policy_out: Option<PathBuf>,
    /// Also run value iteration and check the result against it.
    #[arg(long)]
    compare: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Direct,
    Iterative,
    Auto,
}

impl From<Method> for EvalMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Direct => EvalMethod::Direct,
            Method::Iterative => EvalMethod::Iterative,
            Method::Auto => EvalMethod::Auto,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    model: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_EVAL_TOL)]
    tol: f64,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    model: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 0)]
    x0: usize,
    #[arg(long, default_value_t = 10_000)]
    n_traj: usize,
    /// Steps per trajectory; by default the shortest horizon whose
    /// truncation bound is at most 1e-3.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A failed command: the message for stderr and the exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn domain(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn env(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Parse(_) | Error::Schema(_) => Failure::env(e.to_string()),
            _ => Failure::domain(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::env(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    std::fs::write(path, contents).map_err(|e| Failure::env(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, contents: &str) -> CmdResult {
    match output {
        Some(p) => write_file(p, contents),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{contents}").map_err(|e| Failure::env(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn load(path: &Path) -> Result<ModelSpec, Failure> {
    let (m, warnings) = load_model_with_warnings(open(path)?).map_err(|e| with_path(path, e))?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(m)
}

fn with_path(path: &Path, e: Error) -> Failure {
    let mut f = Failure::from(e);
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

fn load_policy_file(path: &Path) -> Result<Policy, Failure> {
    load_policy(open(path)?).map_err(|e| with_path(path, e))
}

fn certified(m: &ModelSpec) -> Result<GrowthCertificate, Failure> {
    let c = certify_growth(m);
    if c.pass {
        Ok(c)
    } else {
        Err(Failure::domain(format!("gamma >= 1 (gamma = {})", c.gamma)))
    }
}

fn validate(args: ValidateArgs) -> CmdResult {
    let mut warnings = Vec::new();
    let loaded = open(&args.model).and_then(|r| match load_model_with_warnings(r) {
        Ok((m, w)) => {
            warnings = w;
            Ok(Ok(m))
        }
        Err(Error::Invalid(v)) => Ok(Err(v)),
        Err(e) => Err(with_path(&args.model, e)),
    })?;
    let mut model = loaded;
    if let (Ok(m), Some(alpha)) = (&model, args.alpha) {
        let m = m.with_alpha(alpha);
        let v = m.validate();
        model = if v.is_empty() { Ok(m) } else { Err(v) };
    }

    let mut problems: Vec<String> = Vec::new();
    let mut certificate = None;
    let mut discontinuities = Vec::new();
    match &model {
        Err(violations) => problems.extend(violations.iter().map(|v| v.to_string())),
        Ok(m) => {
            let c = certify_growth(m);
            if !c.pass {
                problems.push(format!("gamma >= 1: gamma = {} (alpha = {}, beta = {})", c.gamma, m.alpha, c.beta));
            }
            certificate = Some(c);
            discontinuities = weight_discontinuities(m);
            if !discontinuities.is_empty() {
                let msg = format!("weight is not continuous at boundary nodes {discontinuities:?}");
                if args.strict_cc {
                    problems.push(msg);
                } else {
                    warnings.push(msg);
                }
            }
        }
    }
    let ok = problems.is_empty();

    if args.json {
        let report = json!({
            "valid": ok,
            "violations": model.as_ref().err().map(|v| v.as_slice()).unwrap_or(&[]),
            "errors": problems,
            "warnings": warnings,
            "certificate": certificate,
            "weight_discontinuities": discontinuities,
        });
        emit(None, &to_json(&report))?;
    } else {
        let mut lines = Vec::new();
        if let Ok(m) = &model {
            lines.push(format!("nodes: {}, admissible pairs: {}, alpha: {}", m.n_nodes(), m.pair_count(), m.alpha));
        }
        if let Some(c) = &certificate {
            lines.push(format!(
                "M = {} at {:?}, beta = {} at {:?}, gamma = {}",
                c.m, c.witness_m, c.beta, c.witness_beta, c.gamma
            ));
        }
        lines.extend(warnings.iter().map(|w| format!("warning: {w}")));
        lines.extend(problems.iter().map(|p| format!("error: {p}")));
        lines.push(if ok { "valid".into() } else { "invalid".into() });
        emit(None, &lines.join("\n"))?;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::domain(format!("{} problem(s)", problems.len())))
    }
}

fn certify(args: CertifyArgs) -> CmdResult {
    let mut m = load(&args.model)?;
    if let Some(alpha) = args.alpha {
        m = m.with_alpha(alpha);
    }
    let c = certify_growth(&m);
    emit(None, &to_json(&c))?;
    if c.pass {
        Ok(())
    } else {
        Err(Failure::domain(format!("gamma >= 1 (gamma = {})", c.gamma)))
    }
}

fn gen(args: GenArgs) -> CmdResult {
    let m = match args.family {
        GenFamily::Threshold { n_cells, jump, alpha } => make_threshold_model(n_cells, jump, alpha),
        GenFamily::Inventory {
            capacity,
            demand,
            order_cost,
            holding_cost,
            shortage_cost,
            max_order,
            alpha,
        } => make_inventory(&InventoryParams {
            capacity,
            demand_probs: demand,
            order_cost,
            holding_cost,
            shortage_cost,
            max_order,
            alpha,
        }),
        GenFamily::Queueing {
            buffer,
            arrival,
            service,
            reject_cost,
            hold_cost,
            alpha,
        } => make_queueing(&QueueingParams {
            buffer,
            arrival_p: arrival,
            service_p: service,
            reject_cost,
            hold_cost,
            alpha,
        }),
        GenFamily::Random {
            states,
            actions,
            sparsity,
            alpha,
            seed,
        } => make_random_finite_mdp(states, actions, sparsity, alpha, seed),
    }?;
    emit(args.output.as_deref(), &model_to_string(&m))
}

/// Denominators below this are within the oracle's error, as in `rate_report`.
fn ratio_floor(gamma: f64, oracle_tol: f64) -> f64 {
    howard_lsc::solvers::RATIO_FLOOR.max((1.0 + gamma) * oracle_tol / 1e-6)
}

/// CSV for best-improvement traces, with the same columns as the PI trace.
/// `chain_ok` is the monotonicity `w_{n+1} <= w_n` and `lsc_check` the
/// grid-lsc property of `w_n`.
fn best_csv(m: &ModelSpec, trace: &BestTrace, v_star: Option<&[f64]>, floor: f64) -> String {
    let gaps: Vec<Option<f64>> = trace
        .records
        .iter()
        .map(|r| v_star.map(|v| w_dist(&r.w, v, &m.weight)))
        .collect();
    let num = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"));
    let mut out = String::from("n,wnorm_gap,rate_ratio,chain_ok,lsc_check,terminated_by\n");
    for (i, r) in trace.records.iter().enumerate() {
        let ratio = match (gaps[i], gaps.get(i + 1).copied().flatten()) {
            (Some(a), Some(b)) if a > floor => Some(b / a),
            _ => None,
        };
        let descends = trace
            .records
            .get(i + 1)
            .is_none_or(|next| next.w.iter().zip(r.w.iter()).all(|(a, b)| *a <= b + howard_lsc::solvers::CHAIN_TOL));
        let lsc = howard_lsc::envelope::is_grid_lsc(&m.grid, &r.w, howard_lsc::solvers::LSC_TOL);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n,
            num(gaps[i]),
            num(ratio),
            descends,
            lsc,
            trace.terminated_by.as_str()
        ));
    }
    out
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn solve(args: SolveArgs) -> CmdResult {
    let m = load(&args.model)?;
    let cert = certified(&m)?;
    let f0 = match &args.f0 {
        Some(p) => load_policy_file(p)?,
        None => m.first_policy(),
    };
    m.resolve(&f0)?;

    let oracle_tol = args.tol / 10.0;
    let v_star = if args.compare {
        Some(value_iteration(&m, oracle_tol)?.value)
    } else {
        None
    };

    let mut summary = json!({
        "algorithm": match args.algorithm {
            Algorithm::Vi => "vi",
            Algorithm::Pi => "pi",
            Algorithm::PiBest => "pi-best",
        },
        "tol": args.tol,
        "gamma": cert.gamma,
    });
    let (terminated_by, value, policy) = match args.algorithm {
        Algorithm::Vi => {
            let vi = value_iteration_with(&m, args.tol, args.max_iter.unwrap_or(DEFAULT_VI_MAX_ITER))?;
            summary["iterations"] = json!(vi.iterations);
            if let Some(p) = &args.trace_out {
                if is_csv(p) {
                    return Err(Failure::env("value iteration writes JSON traces only"));
                }
                write_file(p, &to_json(&vi))?;
            }
            (Termination::Tolerance, vi.value, vi.policy)
        }
        Algorithm::Pi => {
            let opts = PiOptions {
                tol: args.tol,
                max_iter: args.max_iter.unwrap_or(DEFAULT_PI_MAX_ITER),
                v_star: v_star.clone(),
                ..PiOptions::default()
            };
            let (mut trace, f) = smoothed_policy_iteration(&m, &f0, &opts)?;
            summary["iterations"] = json!(trace.steps());
            summary["chain_ok"] = json!(trace.records.iter().all(|r| r.chain_ok));
            if let Some(v) = &v_star {
                let rep = rate_report(&trace, v, &m, oracle_tol, &[]);
                // Drop ratios whose denominator is within the oracle's noise.
                for (r, ratio) in trace.records.iter_mut().zip(&rep.ratios) {
                    r.rate_ratio = *ratio;
                }
                summary["max_rate_ratio"] = json!(rep.max_ratio);
                summary["rate_ok"] = json!(rep.ratio_ok && rep.final_ok);
            }
            if let Some(p) = &args.trace_out {
                write_file(p, &if is_csv(p) { trace.to_csv() } else { to_json(&trace) })?;
            }
            (trace.terminated_by, trace.final_value().clone(), f)
        }
        Algorithm::PiBest => {
            let opts = BestOptions {
                epsilon: args.epsilon,
                tol: args.tol,
                max_iter: args.max_iter.unwrap_or(DEFAULT_PI_MAX_ITER),
            };
            let (trace, f) = best_improvement_pi(&m, &f0, &opts)?;
            summary["iterations"] = json!(trace.steps());
            if let Some(p) = &args.trace_out {
                let text = if is_csv(p) {
                    best_csv(&m, &trace, v_star.as_deref(), ratio_floor(cert.gamma, oracle_tol))
                } else {
                    to_json(&trace)
                };
                write_file(p, &text)?;
            }
            (trace.terminated_by, trace.last().w.clone(), f)
        }
    };
    summary["terminated_by"] = json!(terminated_by);

    let converged = matches!(terminated_by, Termination::FixedPoint | Termination::Tolerance);
    let mut compare_ok = true;
    if let Some(v) = &v_star {
        let gap = w_dist(&value, v, &m.weight);
        compare_ok = gap <= 2.0 * args.tol;
        summary["gap"] = json!(gap);
        summary["compare_ok"] = json!(compare_ok);
    }
    if let Some(p) = &args.policy_out {
        write_file(p, &policy_to_string(&policy))?;
    }
    emit(None, &to_json(&summary))?;

    if !converged {
        Err(Failure::domain(format!("solver stopped by {}", terminated_by.as_str())))
    } else if !compare_ok {
        Err(Failure::domain("gap to value iteration exceeds 2 * tol"))
    } else {
        Ok(())
    }
}

fn eval(args: EvalArgs) -> CmdResult {
    let m = load(&args.model)?;
    certified(&m)?;
    let f = load_policy_file(&args.policy)?;
    let v = evaluate_policy(&m, &f, args.method.into(), args.tol)?;
    emit(args.output.as_deref(), &serde_json::to_string(&v).expect("values serialize"))
}

fn simulate(args: SimulateArgs) -> CmdResult {
    let m = load(&args.model)?;
    certified(&m)?;
    let f = load_policy_file(&args.policy)?;
    if args.x0 >= m.n_nodes() {
        return Err(Failure::domain(format!("x0 = {} is not a node", args.x0)));
    }
    let horizon = match args.horizon {
        Some(h) => h,
        None => horizon_for(&m, args.x0, DEFAULT_TRUNCATION)?,
    };
    let e = estimate_value(&m, &f, args.x0, args.n_traj, horizon, args.seed)?;
    emit(None, &to_json(&e))
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(0) => {}
        Ok(n) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        Err(_) => log::warn!("ignoring {THREADS_VAR}={raw:?}: not a thread count"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Certify(a) => certify(a),
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
