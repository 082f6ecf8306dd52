//! Command-line surface for the lmfg library: solve a model for its
//! stationary equilibrium, simulate finite populations against it, evaluate
//! the approximation bounds, verify candidate equilibria, and compute
//! Wasserstein distances.
//!
//! Exit codes are a frozen contract for scripting: 0 success, 1 file or
//! parse errors, 2 iteration budget exhausted, 3 solver failure, 4 exact
//! path refused by the joint-state cap, 5 verification or assumption
//! failure. Every machine-readable artifact embeds the configuration that
//! produced it (a `config` field in JSON, a `# config:` comment line in
//! CSV), and identical invocations produce byte-identical outputs.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use lmfg::bounds::{self, AlphaParams};
use lmfg::finite_n::{
    build_joint_mdp_capped, exact_epsilon_on, simulate_population, AgentPolicies, FiniteNError,
    SimConfig, DEFAULT_JOINT_STATE_CAP, Z99,
};
use lmfg::gnep::default_player_two_cost;
use lmfg::ipsolver::{extract_equilibrium, solve, SolveStatus, SolverConfig};
use lmfg::mdp;
use lmfg::model::{
    validate_model, Distribution, FiniteMetricSpace, MfgModel, Policy, RawModel,
};
use lmfg::transport;

const EXIT_PARSE: u8 = 1;
const EXIT_MAX_ITER: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CAP: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Parser)]
#[command(
    name = "lmfg",
    version,
    about = "Stationary equilibria of discrete linear mean-field games",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a model for a stationary mean-field equilibrium.
    Solve(SolveArgs),
    /// Simulate an N-agent population at a solved equilibrium, or compute
    /// the exact deviation gap eps(N) for small N.
    Simulate(SimulateArgs),
    /// Evaluate the Lipschitz profile, assumptions, and Theta bounds.
    Bounds(BoundsArgs),
    /// Verify a candidate equilibrium against the dynamic-programming
    /// oracles.
    Check(CheckArgs),
    /// Wasserstein-1 distance between two distributions or two empirical
    /// sample vectors.
    W1(W1Args),
}

#[derive(Args)]
struct SolveArgs {
    /// Model JSON file.
    model: PathBuf,
    /// Centering weight in [0, 1).
    #[arg(long, default_value_t = 0.4)]
    sigma: f64,
    /// Backtracking base in (0, 1).
    #[arg(long, default_value_t = 0.001)]
    kappa: f64,
    /// Potential weight; defaults to twice the constraint count.
    #[arg(long = "K")]
    kparam: Option<f64>,
    /// Convergence threshold on the 2-norm of H.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Armijo sufficient-decrease coefficient in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    armijo: f64,
    /// Inexactness budget for the Newton direction residual.
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    /// Interior padding of the deterministic starting point.
    #[arg(long, default_value_t = 0.01)]
    init_margin: f64,
    /// Recorded in the audit header; the solve path draws no randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the equilibrium JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON file.
    model: PathBuf,
    /// Equilibrium JSON file (as written by `solve`: needs `mu` and `pi`).
    eq: PathBuf,
    #[arg(long, default_value_t = 1000)]
    agents: usize,
    /// Truncation horizon; defaults to the discounted tail falling below
    /// 1e-4.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pair replications antithetically for variance reduction.
    #[arg(long)]
    antithetic: bool,
    /// Compute the exact eps(N) record on the joint MDP instead of
    /// simulating; refused when |X|^N exceeds the cap.
    #[arg(long)]
    exact: bool,
    /// Joint-state cap for --exact.
    #[arg(long, default_value_t = DEFAULT_JOINT_STATE_CAP)]
    cap: usize,
    /// Write the W1-decay CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the cost-gap (or exact eps) JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Model JSON file.
    model: PathBuf,
    /// Population size N.
    #[arg(long = "N")]
    n: usize,
    /// Concentration resolution epsilon.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Concentration constant C of the alpha(N) rate.
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    /// Moment order q > 1 of the alpha(N) rate.
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// q-th moment bound of the state distribution.
    #[arg(long, default_value_t = 1.0)]
    moment: f64,
    /// State-space dimension in the alpha(N) rate; defaults to the doubling
    /// dimension of the model's metric.
    #[arg(long)]
    dimx: Option<f64>,
    /// Override the modulus rho of the policy class.
    #[arg(long)]
    rho: Option<f64>,
    /// Override the model's discount factor.
    #[arg(long)]
    beta: Option<f64>,
    /// Exit 5 when any of assumptions (e)-(g) fails.
    #[arg(long)]
    require_assumptions: bool,
    /// Write the report JSON here (the table always prints to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Model JSON file.
    model: PathBuf,
    /// Equilibrium JSON file (needs `mu` and `pi`).
    eq: PathBuf,
    /// Tolerance on both the exploitability and the invariance residual.
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
    /// Write the report JSON here in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct W1Args {
    /// Treat the vectors as state-index samples ("0,0,1") instead of
    /// probability weights ("0.5,0.5").
    #[arg(long)]
    empirical: bool,
    /// First vector, comma-separated.
    a: String,
    /// Second vector, comma-separated.
    b: String,
    /// Metric: "unitK" for the 0/1 metric on K states, or a path to a JSON
    /// distance matrix. Defaults to the unit metric sized from the data.
    #[arg(long)]
    metric: Option<String>,
}

/// A failure that already knows its exit code and message.
struct Fail {
    code: u8,
    msg: String,
}

impl Fail {
    fn new(code: u8, msg: impl Into<String>) -> Self {
        Fail { code, msg: msg.into() }
    }

    fn parse(msg: impl std::fmt::Display) -> Self {
        Fail::new(EXIT_PARSE, format!("error: {msg}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_PARSE,
            };
            // Help and version go to stdout, diagnostics to stderr.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.cmd {
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Bounds(a) => cmd_bounds(a),
        Cmd::Check(a) => cmd_check(a),
        Cmd::W1(a) => cmd_w1(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn read_model(path: &PathBuf) -> Result<MfgModel, Fail> {
    let text = fs::read_to_string(path)
        .map_err(|e| Fail::parse(format!("cannot read {}: {e}", path.display())))?;
    let raw: RawModel = serde_json::from_str(&text)
        .map_err(|e| Fail::parse(format!("{}: {e}", path.display())))?;
    validate_model(&raw).map_err(|e| Fail::parse(format!("{}: {e}", path.display())))
}

/// The subset of the `solve` output other subcommands consume. Extra keys
/// are ignored so solver JSON round-trips directly.
#[derive(Deserialize)]
struct EqFile {
    mu: Vec<f64>,
    pi: Vec<Vec<f64>>,
}

fn read_equilibrium(path: &PathBuf) -> Result<(Distribution, Policy), Fail> {
    let text = fs::read_to_string(path)
        .map_err(|e| Fail::parse(format!("cannot read {}: {e}", path.display())))?;
    let eq: EqFile = serde_json::from_str(&text)
        .map_err(|e| Fail::parse(format!("{}: {e}", path.display())))?;
    let mu = Distribution::new(eq.mu)
        .map_err(|e| Fail::parse(format!("{}: mu: {e}", path.display())))?;
    let rows: Result<Vec<Distribution>, _> = eq.pi.into_iter().map(Distribution::new).collect();
    let pi = Policy::new(rows.map_err(|e| Fail::parse(format!("{}: pi: {e}", path.display())))?)
        .map_err(|e| Fail::parse(format!("{}: pi: {e}", path.display())))?;
    Ok((mu, pi))
}

fn write_or_print(path: Option<&PathBuf>, content: &str) -> Result<(), Fail> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| Fail::parse(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// JSON value for a float that may be non-finite; mirrors the library's
/// report serialization ("inf", "-inf", "nan" as strings).
fn real_json(x: f64) -> Value {
    if x.is_nan() {
        json!("nan")
    } else if x.is_infinite() {
        json!(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        json!(x)
    }
}

fn cmd_solve(args: SolveArgs) -> Result<u8, Fail> {
    let model = read_model(&args.model)?;
    let cfg = SolverConfig {
        sigma: args.sigma,
        kappa: args.kappa,
        kparam: args.kparam,
        armijo_coeff: args.armijo,
        tol_h: args.tol,
        max_iter: args.max_iter,
        eta: args.eta,
        init_margin: args.init_margin,
        seed: args.seed,
    };
    let config = json!({
        "subcommand": "solve",
        "model": args.model.display().to_string(),
        "sigma": cfg.sigma,
        "kappa": cfg.kappa,
        "kparam": cfg.kparam,
        "tol_h": cfg.tol_h,
        "max_iter": cfg.max_iter,
        "armijo_coeff": cfg.armijo_coeff,
        "eta": cfg.eta,
        "init_margin": cfg.init_margin,
        "seed": cfg.seed,
    });
    let g = default_player_two_cost(&model);
    let result = match solve(&model, &g, &cfg) {
        Ok(r) => r,
        Err(lmfg::ipsolver::IpError::InvalidConfig { what }) => {
            return Err(Fail::parse(format!("invalid solver configuration: {what}")))
        }
        Err(e) => return Err(Fail::new(EXIT_SOLVER, format!("solver error: {e}"))),
    };

    if let Some(trace_path) = &args.trace {
        let csv = format!("# config: {config}\n{}", result.trace.to_csv());
        fs::write(trace_path, csv)
            .map_err(|e| Fail::parse(format!("cannot write {}: {e}", trace_path.display())))?;
    }

    let status = match result.status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::SingularJacobian => "singular_jacobian",
        SolveStatus::LineSearchFailed => "line_search_failed",
    };
    let mut payload = json!({
        "config": config,
        "status": status,
        "iterations": result.iterations,
        "norm_h": result.norm_h,
    });
    match extract_equilibrium(&result.point, 1e-6) {
        Ok(eq) => {
            let nx = eq.pi.n_states();
            let na = eq.pi.n_actions();
            payload["mu"] = json!(eq.mu.weights());
            payload["pi"] =
                json!((0..nx).map(|x| eq.pi.row(x).weights().to_vec()).collect::<Vec<_>>());
            payload["zeta"] = json!((0..nx)
                .map(|x| (0..na).map(|a| eq.zeta.get(x, a)).collect::<Vec<_>>())
                .collect::<Vec<_>>());
            payload["uniform_rows"] = json!(eq.uniform_rows);
        }
        Err(e) => {
            payload["extraction_error"] = json!(e.to_string());
        }
    }
    write_or_print(args.out.as_ref(), &format!("{}\n", serde_json::to_string_pretty(&payload).expect("finite payload")))?;
    Ok(match result.status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIter => EXIT_MAX_ITER,
        _ => EXIT_SOLVER,
    })
}

fn map_finite_n_err(e: FiniteNError) -> Fail {
    match e {
        FiniteNError::StateSpaceTooLarge { .. } => Fail::new(EXIT_CAP, format!("error: {e}")),
        FiniteNError::PolicyMismatch { .. } | FiniteNError::InvalidConfig { .. } => {
            Fail::parse(e)
        }
        other => Fail::new(EXIT_SOLVER, format!("error: {other}")),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Fail> {
    let model = read_model(&args.model)?;
    let (mu, pi) = read_equilibrium(&args.eq)?;

    if args.exact {
        let config = json!({
            "subcommand": "simulate",
            "mode": "exact",
            "model": args.model.display().to_string(),
            "eq": args.eq.display().to_string(),
            "agents": args.agents,
            "cap": args.cap,
        });
        let joint = build_joint_mdp_capped(&model, &pi, args.agents, args.cap)
            .map_err(map_finite_n_err)?;
        let record =
            exact_epsilon_on(&model, &mu, &pi, &joint).map_err(map_finite_n_err)?;
        let payload = json!({
            "config": config,
            "n": args.agents,
            "j_equilibrium": record.j_equilibrium,
            "j_best_response": record.j_best_response,
            "eps_n": record.eps_n,
        });
        write_or_print(
            args.out.as_ref(),
            &format!("{}\n", serde_json::to_string_pretty(&payload).expect("finite payload")),
        )?;
        return Ok(0);
    }

    let horizon = args.horizon.unwrap_or_else(|| SimConfig::default_horizon(&model, 1e-4));
    let cfg = SimConfig {
        n: args.agents,
        horizon,
        reps: args.reps,
        seed: args.seed,
        antithetic: args.antithetic,
    };
    let config = json!({
        "subcommand": "simulate",
        "mode": "monte_carlo",
        "model": args.model.display().to_string(),
        "eq": args.eq.display().to_string(),
        "agents": cfg.n,
        "horizon": cfg.horizon,
        "reps": cfg.reps,
        "seed": cfg.seed,
        "antithetic": cfg.antithetic,
    });
    let stats = simulate_population(&model, &AgentPolicies::Shared(&pi), &mu, &mu, &cfg)
        .map_err(map_finite_n_err)?;
    let csv = format!("# config: {config}\n{}", stats.to_csv());
    write_or_print(args.csv.as_ref(), &csv)?;

    let reduced = lmfg::model::mean_field_reduction(&model, &mu)
        .map_err(|e| Fail::new(EXIT_SOLVER, format!("error: {e}")))?;
    let (_, j_exact) = mdp::policy_evaluation(&reduced, &pi, &mu)
        .map_err(|e| Fail::new(EXIT_SOLVER, format!("error: {e}")))?;
    let ci_half = Z99 * stats.cost_se;
    let gap = (stats.cost_mean - j_exact).abs();
    let payload = json!({
        "config": config,
        "j_simulated": stats.cost_mean,
        "j_exact": j_exact,
        "gap": gap,
        "ci_half": ci_half,
        "truncation_bound": stats.truncation_bound,
        "consistent_with_zero": gap <= ci_half + stats.truncation_bound,
    });
    write_or_print(
        args.out.as_ref(),
        &format!("{}\n", serde_json::to_string_pretty(&payload).expect("finite payload")),
    )?;
    Ok(0)
}

fn cmd_bounds(args: BoundsArgs) -> Result<u8, Fail> {
    if args.n == 0 {
        return Err(Fail::parse("N must be at least 1"));
    }
    let model = read_model(&args.model)?;
    let mut profile = bounds::estimate_lipschitz(&model);
    if let Some(rho) = args.rho {
        profile.rho = rho;
    }
    let beta = args.beta.unwrap_or_else(|| model.beta());
    let dimx = args.dimx.unwrap_or(profile.ddim);
    let alpha = AlphaParams { q: args.q, moment_q: args.moment, dim_x: dimx, c: args.c };
    let config = json!({
        "subcommand": "bounds",
        "model": args.model.display().to_string(),
        "N": args.n,
        "eps": args.eps,
        "C": alpha.c,
        "q": alpha.q,
        "moment": alpha.moment_q,
        "dimx": alpha.dim_x,
        "rho": profile.rho,
        "beta": beta,
    });

    let mut rows: Vec<(String, Value)> = [
        ("L1", profile.l1),
        ("L2", profile.l2),
        ("L3", profile.l3),
        ("K1", profile.k1),
        ("K2", profile.k2),
        ("K3", profile.k3),
        ("rho", profile.rho),
        ("diam", profile.diam),
        ("ddim", profile.ddim),
        ("cbar_max", profile.cbar_max),
        ("Kclass", profile.kclass),
    ]
    .into_iter()
    .map(|(name, v)| (name.to_string(), real_json(v)))
    .collect();
    let (all_pass, report_value) = if args.n >= 2 {
        let report = bounds::bound_report(&profile, beta, args.n, args.eps, &alpha)
            .map_err(Fail::parse)?;
        let value = serde_json::to_value(&report).expect("report serializes");
        for (k, v) in value.as_object().expect("report is an object") {
            rows.push((k.clone(), v.clone()));
        }
        (report.assumption_e && report.assumption_f && report.assumption_g, value)
    } else {
        let check = bounds::check_assumptions(&profile, beta, args.n);
        rows.push(("assumption_e".to_string(), json!(check.e)));
        rows.push(("assumption_f".to_string(), json!(check.f)));
        rows.push(("assumption_g".to_string(), json!(check.g)));
        let value = json!({
            "assumption_e": check.e,
            "assumption_f": check.f,
            "assumption_g": check.g,
            "note": "Theta bounds need N >= 2",
        });
        (check.e && check.f && check.g, value)
    };

    let mut table = String::new();
    for (name, v) in &rows {
        let shown = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        table.push_str(&format!("{name:<14} {shown}\n"));
    }
    print!("{table}");
    if let Some(out) = &args.out {
        let payload = json!({ "config": config, "report": report_value });
        fs::write(out, format!("{}\n", serde_json::to_string_pretty(&payload).expect("finite payload")))
            .map_err(|e| Fail::parse(format!("cannot write {}: {e}", out.display())))?;
    }
    if args.require_assumptions && !all_pass {
        eprintln!("assumptions (e)-(g) do not all hold at N = {}", args.n);
        return Ok(EXIT_VERIFY);
    }
    Ok(0)
}

fn cmd_check(args: CheckArgs) -> Result<u8, Fail> {
    let model = read_model(&args.model)?;
    let (mu, pi) = read_equilibrium(&args.eq)?;
    let report = mdp::verify_mfe(&model, &mu, &pi, args.tol).map_err(Fail::parse)?;
    let config = json!({
        "subcommand": "check",
        "model": args.model.display().to_string(),
        "eq": args.eq.display().to_string(),
        "tol": args.tol,
    });
    let payload = json!({
        "config": config,
        "bellman_residual": report.bellman_residual,
        "invariance_residual": report.invariance_residual,
        "pass": report.pass,
    });
    let text = format!("{}\n", serde_json::to_string_pretty(&payload).expect("finite payload"));
    print!("{text}");
    if let Some(out) = &args.out {
        fs::write(out, &text)
            .map_err(|e| Fail::parse(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(if report.pass { 0 } else { EXIT_VERIFY })
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Fail>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|e| Fail::parse(format!("{what}: bad entry {tok:?}: {e}")))
        })
        .collect()
}

fn metric_space(spec: Option<&str>, n_default: usize) -> Result<FiniteMetricSpace, Fail> {
    let build_unit = |n: usize| {
        FiniteMetricSpace::unit(n)
    };
    match spec {
        None => Ok(build_unit(n_default)),
        Some(s) => {
            if let Some(k) = s.strip_prefix("unit") {
                let n: usize = k
                    .parse()
                    .map_err(|_| Fail::parse(format!("metric {s:?}: expected unitK, e.g. unit2")))?;
                if n == 0 {
                    return Err(Fail::parse("metric unit0 has no points"));
                }
                Ok(build_unit(n))
            } else {
                let text = fs::read_to_string(s)
                    .map_err(|e| Fail::parse(format!("cannot read {s}: {e}")))?;
                let matrix: Vec<Vec<f64>> = serde_json::from_str(&text)
                    .map_err(|e| Fail::parse(format!("{s}: {e}")))?;
                let labels = (0..matrix.len()).map(|i| i.to_string()).collect();
                FiniteMetricSpace::new(labels, matrix)
                    .map_err(|e| Fail::parse(format!("{s}: {e}")))
            }
        }
    }
}

fn cmd_w1(args: W1Args) -> Result<u8, Fail> {
    let value = if args.empirical {
        let xs: Vec<usize> = parse_list(&args.a, "first vector")?;
        let ys: Vec<usize> = parse_list(&args.b, "second vector")?;
        if xs.is_empty() || ys.is_empty() {
            return Err(Fail::parse("empirical vectors must be nonempty"));
        }
        let max_state = xs.iter().chain(&ys).copied().max().unwrap_or(0);
        let space = metric_space(args.metric.as_deref(), max_state + 1)?;
        if max_state >= space.len() {
            return Err(Fail::parse(format!(
                "state {max_state} is outside the {}-point metric",
                space.len()
            )));
        }
        if xs.len() == ys.len() {
            transport::w1_empirical(&xs, &ys, &space).map_err(Fail::parse)?
        } else {
            // Unequal sample counts have no assignment form; fall back to
            // the distributional distance of the two empirical measures.
            let ex = lmfg::model::empirical_measure(&xs, space.len()).map_err(Fail::parse)?;
            let ey = lmfg::model::empirical_measure(&ys, space.len()).map_err(Fail::parse)?;
            transport::w1(&ex, &ey, &space).map_err(Fail::parse)?
        }
    } else {
        let wa: Vec<f64> = parse_list(&args.a, "first vector")?;
        let wb: Vec<f64> = parse_list(&args.b, "second vector")?;
        if wa.len() != wb.len() {
            return Err(Fail::parse(format!(
                "weight vectors differ in length: {} vs {}",
                wa.len(),
                wb.len()
            )));
        }
        let space = metric_space(args.metric.as_deref(), wa.len())?;
        if space.len() != wa.len() {
            return Err(Fail::parse(format!(
                "metric has {} points but the vectors have {}",
                space.len(),
                wa.len()
            )));
        }
        let da = Distribution::new(wa).map_err(Fail::parse)?;
        let db = Distribution::new(wb).map_err(Fail::parse)?;
        transport::w1(&da, &db, &space).map_err(Fail::parse)?
    };
    println!("{value:.6}");
    Ok(0)
}
