//! The release gate: ten numbered end-to-end criteria covering equilibrium
//! reproduction on the bundled model, KKT dimensions and residual blocks,
//! oracle cross-validation, derivative correctness, the transport lemma
//! inequalities, exact finite-N Nash gaps, simulated W1 decay against the
//! analytic envelope, bounds arithmetic, and binary determinism.
//!
//! Each test prints exactly one `criterion N: PASS` or `criterion N: FAIL`
//! line (visible under `--nocapture`) and then asserts on the collected
//! clause failures, so a red test names every clause that broke.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use lmfg::bounds::{
    alpha_n, alpha_t, alpha_tilde_t, derive_constants, estimate_lipschitz, theta1, theta2,
    value_lipschitz_n, LipschitzProfile,
};
use lmfg::finite_n::{
    build_joint_mdp, check_symmetry_and_lipschitz, exact_epsilon_n, simulate_population,
    AgentPolicies, SimConfig,
};
use lmfg::gnep::{
    default_player_two_cost, eval_big_h, grad_potential, jacobian_big_h, potential, GnepDims,
    KktPoint, PlayerTwoCost,
};
use lmfg::ipsolver::{extract_equilibrium, solve, Equilibrium, SolveStatus, SolverConfig};
use lmfg::mdp::{occupation_measure, verify_mfe};
use lmfg::model::{
    empirical_measure, mean_field_reduction, validate_model, Distribution, FiniteMetricSpace,
    MfgModel, RawModel,
};
use lmfg::transport::{w1, w1_dual, w1_empirical};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model_path() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/examples/malware.json")
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmfg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn load_model() -> MfgModel {
    let text = fs::read_to_string(model_path()).expect("bundled model is readable");
    let raw: RawModel = serde_json::from_str(&text).expect("bundled model parses");
    validate_model(&raw).expect("bundled model validates")
}

/// Library-route solve of the bundled model with the practical profile; the
/// criteria that need an equilibrium all start from this converged iterate.
fn solved_malware() -> (MfgModel, lmfg::ipsolver::SolveResult) {
    let model = load_model();
    let g = default_player_two_cost(&model);
    let res = solve(&model, &g, &SolverConfig::practical()).expect("solver accepts the config");
    assert!(
        matches!(res.status, SolveStatus::Converged),
        "practical profile must converge on the bundled model, got {:?} after {} iterations",
        res.status,
        res.iterations
    );
    (model, res)
}

fn equilibrium_of(res: &lmfg::ipsolver::SolveResult) -> Equilibrium {
    extract_equilibrium(&res.point, 1e-6).expect("converged iterate extracts cleanly")
}

fn ensure(fails: &mut Vec<String>, ok: bool, what: impl FnOnce() -> String) {
    if !ok {
        fails.push(what());
    }
}

/// Prints the single verdict line for a criterion, then panics with the
/// full clause list when anything failed.
fn verdict(criterion: usize, fails: Vec<String>) {
    if fails.is_empty() {
        println!("criterion {criterion}: PASS");
    } else {
        println!("criterion {criterion}: FAIL");
        panic!("criterion {criterion} failed:\n  {}", fails.join("\n  "));
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

#[test]
fn criterion_01_malware_equilibrium_reproduction() {
    let mut fails = Vec::new();
    let started = Instant::now();
    let out = run(&[
        "solve",
        model_path(),
        "--sigma",
        "0.4",
        "--kappa",
        "0.001",
        "--eta",
        "0",
        "--max-iter",
        "10000",
    ]);
    let wall = started.elapsed();
    ensure(&mut fails, out.status.code() == Some(0), || {
        format!("solve exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    });
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap_or_default();
    ensure(&mut fails, v["status"] == "converged", || format!("status {}", v["status"]));
    let iterations = v["iterations"].as_u64().unwrap_or(u64::MAX);
    ensure(&mut fails, iterations <= 10_000, || format!("{iterations} iterations"));
    let norm_h = v["norm_h"].as_f64().unwrap_or(f64::NAN);
    ensure(&mut fails, norm_h <= 1e-6, || format!("|H| = {norm_h}"));

    let mu: Vec<f64> = v["mu"]
        .as_array()
        .map(|a| a.iter().filter_map(|x| x.as_f64()).collect())
        .unwrap_or_default();
    let pi: Vec<Vec<f64>> = v["pi"]
        .as_array()
        .map(|rows| {
            rows.iter()
                .map(|r| {
                    r.as_array()
                        .map(|a| a.iter().filter_map(|x| x.as_f64()).collect())
                        .unwrap_or_default()
                })
                .collect()
        })
        .unwrap_or_default();
    let near = |got: &[f64], want: &[f64], tol: f64| {
        got.len() == want.len()
            && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
    };
    ensure(&mut fails, near(&mu, &[0.59, 0.41], 0.01), || {
        format!("mu {mu:?} not within 0.01 of [0.59, 0.41]")
    });
    ensure(
        &mut fails,
        pi.len() == 2 && near(&pi[0], &[0.76, 0.24], 0.02),
        || format!("pi(.|healthy) {:?} not within 0.02 of [0.76, 0.24]", pi.first()),
    );
    ensure(
        &mut fails,
        pi.len() == 2 && near(&pi[1], &[0.02, 0.98], 0.02),
        || format!("pi(.|infected) {:?} not within 0.02 of [0.02, 0.98]", pi.get(1)),
    );
    ensure(&mut fails, wall < Duration::from_secs(10), || format!("solve took {wall:?}"));
    verdict(1, fails);
}

#[test]
fn criterion_02_kkt_dimension_check() {
    let mut fails = Vec::new();
    let model = load_model();
    let dims = GnepDims::of_model(&model);
    ensure(&mut fails, dims.n == 6, || format!("n = {}", dims.n));
    ensure(&mut fails, dims.m == 11, || format!("m = {}", dims.m));
    ensure(&mut fails, dims.h_len() == 28, || format!("H length = {}", dims.h_len()));
    let nxa = dims.nx * dims.na;
    let blocks = [dims.n, nxa + dims.nx, 2 * dims.nx + 1, nxa + dims.nx, 2 * dims.nx + 1];
    ensure(&mut fails, blocks == [6, 6, 5, 6, 5], || format!("blocks {blocks:?}"));
    ensure(&mut fails, blocks.iter().sum::<usize>() == dims.h_len(), || {
        format!("blocks {blocks:?} do not tile H of length {}", dims.h_len())
    });
    verdict(2, fails);
}

#[test]
fn criterion_03_residual_blocks_and_monotone_potential() {
    let mut fails = Vec::new();
    let (model, res) = solved_malware();
    let g = default_player_two_cost(&model);
    let dims = GnepDims::of_model(&model);
    let nxa = dims.nx * dims.na;
    let h = eval_big_h(&model, &g, &res.point).expect("H evaluates at the final iterate");

    let sizes = [dims.n, nxa + dims.nx, 2 * dims.nx + 1, nxa + dims.nx, 2 * dims.nx + 1];
    let names = ["stationarity", "slacked lambda", "slacked gamma", "compl lambda", "compl gamma"];
    let mut start = 0;
    for (name, &len) in names.iter().zip(&sizes) {
        let worst = max_abs(&h[start..start + len]);
        ensure(&mut fails, worst <= 1e-6, || format!("{name} block max-abs {worst:.3e}"));
        start += len;
    }

    ensure(&mut fails, res.trace.records.len() >= 2, || {
        format!("trace has only {} records", res.trace.records.len())
    });
    for w in res.trace.records.windows(2) {
        if w[1].psi > w[0].psi {
            fails.push(format!(
                "psi increased at iteration {}: {} -> {}",
                w[1].iter, w[0].psi, w[1].psi
            ));
            break;
        }
    }
    verdict(3, fails);
}

#[test]
fn criterion_04_oracle_cross_validation() {
    let mut fails = Vec::new();
    let (model, res) = solved_malware();
    let eq = equilibrium_of(&res);

    let report = verify_mfe(&model, &eq.mu, &eq.pi, 0.02).expect("verifier runs");
    ensure(&mut fails, report.pass, || {
        format!(
            "verify_mfe rejected: bellman residual {}, invariance residual {}",
            report.bellman_residual, report.invariance_residual
        )
    });

    let mdp = mean_field_reduction(&model, &eq.mu).expect("reduction at the solved field");
    let occ = occupation_measure(&mdp, &eq.pi, &eq.mu).expect("occupation measure");
    let zhat = occ.state_marginal();
    let gap = zhat
        .iter()
        .zip(eq.mu.weights())
        .map(|(z, m)| (z - m).abs())
        .fold(0.0f64, f64::max);
    ensure(&mut fails, gap <= 0.02, || {
        format!("state marginal {zhat:?} is {gap:.3e} away from mu in sup norm")
    });
    verdict(4, fails);
}

/// A strictly interior KKT point: every coordinate positive and every
/// slacked coordinate of H held at a positive margin, so the potential and
/// its gradient are defined in a finite-difference neighborhood.
fn random_interior_point(
    model: &MfgModel,
    g: &dyn PlayerTwoCost,
    dims: &GnepDims,
    rng: &mut ChaCha8Rng,
) -> KktPoint {
    let nn = dims.h_len();
    let m = dims.m;
    let mut flat: Vec<f64> = (0..nn).map(|_| rng.random_range(0.1..1.0)).collect();
    let probe = KktPoint::from_flat(dims, &flat).expect("probe dimensions");
    let hval = eval_big_h(model, g, &probe).expect("H at the probe");
    for i in 0..m {
        let h_i = hval[dims.n + i] - flat[nn - m + i];
        flat[nn - m + i] = (-h_i).max(0.0) + rng.random_range(0.1..0.6);
    }
    KktPoint::from_flat(dims, &flat).expect("padded dimensions")
}

#[test]
fn criterion_05_derivatives_match_finite_differences() {
    let mut fails = Vec::new();
    let model = load_model();
    let g = default_player_two_cost(&model);
    let dims = GnepDims::of_model(&model);
    let nn = dims.h_len();
    let kparam = SolverConfig::default().resolve_kparam(&dims).expect("default config resolves");
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let mut worst_jac = 0.0f64;
    let mut worst_grad = 0.0f64;
    for _ in 0..120 {
        let z = random_interior_point(&model, &g, &dims, &mut rng);
        let flat = z.to_flat();
        let jac = jacobian_big_h(&model, &g, &z).expect("analytic Jacobian");
        let grad = grad_potential(&model, &g, &z, kparam).expect("analytic gradient");
        for j in 0..nn {
            let delta = 1e-4 * flat[j].abs().max(1.0);
            let mut hi = flat.clone();
            let mut lo = flat.clone();
            hi[j] += delta;
            lo[j] -= delta;
            let zp = KktPoint::from_flat(&dims, &hi).expect("shifted point");
            let zm = KktPoint::from_flat(&dims, &lo).expect("shifted point");
            let hp = eval_big_h(&model, &g, &zp).expect("H at z + delta");
            let hm = eval_big_h(&model, &g, &zm).expect("H at z - delta");
            for r in 0..nn {
                let fd = (hp[r] - hm[r]) / (2.0 * delta);
                let a = jac[r * nn + j];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
                worst_jac = worst_jac.max(rel);
            }
            let pp = potential(&hp, &dims, kparam).expect("potential at z + delta");
            let pm = potential(&hm, &dims, kparam).expect("potential at z - delta");
            let fd = (pp - pm) / (2.0 * delta);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1.0);
            worst_grad = worst_grad.max(rel);
        }
    }
    ensure(&mut fails, worst_jac <= 1e-6, || {
        format!("Jacobian vs central differences: max relative error {worst_jac:.3e}")
    });
    ensure(&mut fails, worst_grad <= 1e-5, || {
        format!("potential gradient vs central differences: max relative error {worst_grad:.3e}")
    });
    verdict(5, fails);
}

/// Manhattan metric between distinct points of a 7x7 lattice, scaled by a
/// power of two: integer arithmetic keeps every metric axiom exact.
fn lattice_space(rng: &mut ChaCha8Rng, n: usize) -> FiniteMetricSpace {
    let mut pts: Vec<(i64, i64)> =
        (0..7i64).flat_map(|x| (0..7i64).map(move |y| (x, y))).collect();
    for i in 0..n {
        let j = rng.random_range(i..pts.len());
        pts.swap(i, j);
    }
    let scale = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let labels = (0..n).map(|i| format!("s{i}")).collect();
    let dist = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let dx = (pts[i].0 - pts[j].0).abs();
                    let dy = (pts[i].1 - pts[j].1).abs();
                    scale * (dx + dy) as f64
                })
                .collect()
        })
        .collect();
    FiniteMetricSpace::new(labels, dist).expect("lattice metric satisfies the axioms")
}

fn random_space(rng: &mut ChaCha8Rng, n: usize) -> FiniteMetricSpace {
    if rng.random_range(0..4) < 3 {
        lattice_space(rng, n)
    } else {
        FiniteMetricSpace::unit(n)
    }
}

/// A probability vector that may place exact zeros on part of the support.
fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Distribution {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.random_range(0..3) == 0 { 0.0 } else { rng.random_range(0.01..1.0) })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return Distribution::new(w.iter().map(|v| v / s).collect()).expect("normalized");
        }
    }
}

/// Minimum assignment cost by explicit enumeration of all permutations.
fn brute_force_assignment(xs: &[usize], zs: &[usize], space: &FiniteMetricSpace) -> f64 {
    fn rec(
        xs: &[usize],
        zs: &[usize],
        used: &mut [bool],
        i: usize,
        acc: f64,
        best: &mut f64,
        space: &FiniteMetricSpace,
    ) {
        if i == xs.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..zs.len() {
            if !used[j] {
                used[j] = true;
                rec(xs, zs, used, i + 1, acc + space.d(xs[i], zs[j]), best, space);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    let mut used = vec![false; zs.len()];
    rec(xs, zs, &mut used, 0, 0.0, &mut best, space);
    best
}

#[test]
fn criterion_06_wasserstein_oracle_equivalence() {
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    'instances: for instance in 0..500 {
        let n = rng.random_range(2..=6);
        let space = random_space(&mut rng, n);
        let m = rng.random_range(2..=7usize);
        let xs: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
        let zs: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
        let mu = empirical_measure(&xs, n).expect("empirical measure");
        let nu = empirical_measure(&zs, n).expect("empirical measure");

        let mut clause = |ok: bool, what: String| {
            if !ok {
                fails.push(format!("instance {instance}: {what}"));
            }
            ok
        };

        // Assignment and LP routes agree.
        let direct = w1_empirical(&xs, &zs, &space).expect("assignment route");
        let via_lp = w1(&mu, &nu, &space).expect("LP route");
        if !clause(
            (direct - via_lp).abs() <= 1e-9,
            format!("assignment {direct} vs LP {via_lp}"),
        ) {
            break 'instances;
        }

        // Dual value, attained gap, and witness admissibility.
        let dual = w1_dual(&mu, &nu, &space).expect("dual route");
        let gap: f64 = dual
            .witness
            .iter()
            .enumerate()
            .map(|(k, &gk)| gk * (mu.get(k) - nu.get(k)))
            .sum();
        let floor = dual.witness.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut lipschitz = true;
        for (k, &gk) in dual.witness.iter().enumerate() {
            for (l, &gl) in dual.witness.iter().enumerate() {
                lipschitz &= (gk - gl).abs() <= space.d(k, l) + 1e-9;
            }
        }
        let dual_ok = clause(
            (dual.value - via_lp).abs() <= 1e-9
                && (gap - dual.value).abs() <= 1e-9
                && floor.abs() <= 1e-12
                && dual.witness.iter().all(|&gk| gk >= 0.0)
                && lipschitz
                && dual.witness_exact,
            format!(
                "dual value {} vs primal {via_lp}, attained gap {gap}, witness floor {floor}",
                dual.value
            ),
        );
        if !dual_ok {
            break 'instances;
        }

        // Coupling bound: the aligned pairing is one admissible coupling.
        let aligned: f64 =
            xs.iter().zip(&zs).map(|(&x, &z)| space.d(x, z)).sum::<f64>() / m as f64;
        if !clause(
            direct <= aligned + 1e-12,
            format!("assignment {direct} exceeds aligned coupling {aligned}"),
        ) {
            break 'instances;
        }

        // Decomposition bound: split off the first coordinate.
        let tails = w1(
            &empirical_measure(&xs[1..], n).expect("tail measure"),
            &empirical_measure(&zs[1..], n).expect("tail measure"),
            &space,
        )
        .expect("tail distance");
        let bound = (m as f64 - 1.0) / m as f64 * tails + space.d(xs[0], zs[0]) / m as f64;
        if !clause(direct <= bound + 1e-9, format!("decomposition {direct} > {bound}")) {
            break 'instances;
        }

        // Shared-atom form: a common prepended atom drops out of the
        // assignment, checked by brute force on short tails.
        let mt = m.min(5);
        let shared = rng.random_range(0..n);
        let full_x: Vec<usize> = std::iter::once(shared).chain(xs[..mt].iter().copied()).collect();
        let full_z: Vec<usize> = std::iter::once(shared).chain(zs[..mt].iter().copied()).collect();
        let full = w1(
            &empirical_measure(&full_x, n).expect("shared measure"),
            &empirical_measure(&full_z, n).expect("shared measure"),
            &space,
        )
        .expect("shared distance");
        let tail_only =
            brute_force_assignment(&xs[..mt], &zs[..mt], &space) / full_x.len() as f64;
        if !clause(
            (full - tail_only).abs() <= 1e-9,
            format!("shared atom: full {full} vs tail assignment {tail_only}"),
        ) {
            break 'instances;
        }

        // Product bound: product measures on the averaged-metric product of
        // a fresh two-point base, against the average marginal distance.
        let base = random_space(&mut rng, 2);
        let mp = rng.random_range(2..=3usize);
        let mus: Vec<Distribution> = (0..mp).map(|_| random_distribution(&mut rng, 2)).collect();
        let nus: Vec<Distribution> = (0..mp).map(|_| random_distribution(&mut rng, 2)).collect();
        let tuples: Vec<Vec<usize>> = (0..1usize << mp)
            .map(|code| (0..mp).map(|i| (code >> i) & 1).collect())
            .collect();
        let labels = tuples
            .iter()
            .map(|t| t.iter().map(usize::to_string).collect::<Vec<_>>().join(""))
            .collect();
        let dist = tuples
            .iter()
            .map(|s| {
                tuples
                    .iter()
                    .map(|t| s.iter().zip(t).map(|(&a, &b)| base.d(a, b)).sum::<f64>() / mp as f64)
                    .collect()
            })
            .collect();
        let product_space = FiniteMetricSpace::new(labels, dist).expect("averaged metric");
        let product = |parts: &[Distribution]| {
            Distribution::new(
                tuples
                    .iter()
                    .map(|t| t.iter().enumerate().map(|(i, &b)| parts[i].get(b)).product())
                    .collect(),
            )
            .expect("product of distributions")
        };
        let lhs = w1(&product(&mus), &product(&nus), &product_space).expect("product distance");
        let rhs: f64 = mus
            .iter()
            .zip(&nus)
            .map(|(a, b)| w1(a, b, &base).expect("marginal distance"))
            .sum::<f64>()
            / mp as f64;
        if !clause(lhs <= rhs + 1e-9, format!("product bound {lhs} > {rhs}")) {
            break 'instances;
        }
    }
    verdict(6, fails);
}

#[test]
fn criterion_07_exact_nash_gap_decay_and_joint_symmetry() {
    let mut fails = Vec::new();
    let (model, res) = solved_malware();
    let eq = equilibrium_of(&res);

    let started = Instant::now();
    let mut eps = Vec::new();
    for n in 2..=10usize {
        match exact_epsilon_n(&model, &eq.mu, &eq.pi, n) {
            Ok(record) => eps.push(record.eps_n),
            Err(e) => {
                fails.push(format!("exact gap at N = {n} failed: {e}"));
                break;
            }
        }
    }
    let wall = started.elapsed();
    ensure(&mut fails, wall < Duration::from_secs(60), || {
        format!("exact gaps took {wall:?}")
    });
    for (i, &e) in eps.iter().enumerate() {
        ensure(&mut fails, e >= -1e-8, || format!("eps({}) = {e} is negative", i + 2));
    }
    if eps.len() == 9 {
        ensure(&mut fails, eps[8] <= eps[0] / 2.0, || {
            format!("eps(10) = {} did not halve eps(2) = {}", eps[8], eps[0])
        });
    }

    let joint = build_joint_mdp(&model, &eq.pi, 3).expect("three-agent joint problem");
    let profile = LipschitzProfile { rho: 2.4, ..estimate_lipschitz(&model) };
    let derived =
        derive_constants(&profile, model.beta(), 3, 1.0, 0.1).expect("stiffened profile passes");
    let report =
        check_symmetry_and_lipschitz(&joint, model.space(), derived.k1starn, derived.k2starn)
            .expect("joint value check runs");
    ensure(&mut fails, report.max_symmetry_residual <= 1e-9 && report.symmetric, || {
        format!("joint V* symmetry residual {}", report.max_symmetry_residual)
    });
    ensure(&mut fails, report.lipschitz_holds && report.violations == 0, || {
        format!(
            "Lipschitz bound broke on {} of {} pairs (max excess {})",
            report.violations, report.pairs_checked, report.max_excess
        )
    });
    verdict(7, fails);
}

#[test]
fn criterion_08_w1_decay_under_the_envelope() {
    let mut fails = Vec::new();
    let (model, res) = solved_malware();
    let eq = equilibrium_of(&res);

    let started = Instant::now();
    let mut curves = Vec::new();
    for &n in &[100usize, 1000, 10_000] {
        let cfg = SimConfig { n, horizon: 50, reps: 200, seed: 0, antithetic: false };
        let stats =
            simulate_population(&model, &AgentPolicies::Shared(&eq.pi), &eq.mu, &eq.mu, &cfg)
                .expect("population simulation");
        curves.push((n, stats));
    }
    let wall = started.elapsed();

    for pair in curves.windows(2) {
        let (n_small, ref small) = pair[0];
        let (n_large, ref large) = pair[1];
        for (a, b) in small.points.iter().zip(&large.points) {
            ensure(&mut fails, b.mean_w1 < a.mean_w1, || {
                format!(
                    "mean W1 at t = {} did not drop from N = {n_small} ({}) to N = {n_large} ({})",
                    a.t, a.mean_w1, b.mean_w1
                )
            });
        }
    }

    let profile = LipschitzProfile { rho: 2.4, ..estimate_lipschitz(&model) };
    let alphan = alpha_n(10_000, 2.0, 1.0, profile.ddim, 1.0);
    let derived = derive_constants(&profile, model.beta(), 10_000, 0.05, alphan)
        .expect("stiffened profile passes at N = 10000");
    let big = &curves.last().expect("three curves").1;
    for point in &big.points {
        let envelope = alpha_t(10_000, 0.05, point.t, derived.kappa1, derived.kappa2, alphan);
        ensure(&mut fails, point.ci_high <= envelope, || {
            format!(
                "99% band {} at t = {} exceeds the envelope {envelope}",
                point.ci_high, point.t
            )
        });
    }
    ensure(&mut fails, wall < Duration::from_secs(300), || {
        format!("simulations took {wall:?}")
    });
    verdict(8, fails);
}

#[test]
fn criterion_09_bounds_arithmetic() {
    let mut fails = Vec::new();
    let model = load_model();

    // Closed forms equal their one-step recursions.
    let (n, eps, kappa2, alphan) = (200usize, 1e-4, 0.05, 1e-4);
    for kappa1 in [0.6, 1.0, 1.1] {
        let per_step = kappa2 * (2.0 / n as f64).sqrt() + 2.0 * eps;
        let mut a = alphan;
        for t in 0..=50usize {
            let closed = alpha_t(n, eps, t, kappa1, kappa2, alphan);
            ensure(&mut fails, (closed - a).abs() <= 1e-12, || {
                format!("alpha_t(kappa1 = {kappa1}, t = {t}): closed {closed} vs recursion {a}")
            });
            a = kappa1 * a + per_step;
        }
        let per_step_tilde = kappa2 * (2.0 / (n as f64 - 1.0)).sqrt() + 2.0 * eps;
        let mut at = alphan;
        for t in 0..=50usize {
            let closed = alpha_tilde_t(n, eps, t, kappa1, kappa2, alphan);
            ensure(&mut fails, (closed - at).abs() <= 1e-12, || {
                format!(
                    "alpha_tilde_t(kappa1 = {kappa1}, t = {t}): closed {closed} vs recursion {at}"
                )
            });
            at = kappa1 * at + per_step_tilde;
        }
    }

    // Value constants approach their large-N limits.
    let synthetic = LipschitzProfile {
        l1: 1.0,
        l2: 0.0,
        l3: 0.5,
        k1: 0.3,
        k2: 0.2,
        k3: 0.4,
        rho: 1.0,
        diam: 1.0,
        ddim: 0.0,
        cbar_max: 1.0,
        kclass: 1.0,
        ..estimate_lipschitz(&model)
    };
    let lstar = 1.0;
    let beta = 0.8;
    let (k1n, k2n) =
        value_lipschitz_n(&synthetic, beta, 100_000_000, lstar).expect("contractive profile");
    let kappa1_of = synthetic.k1 + synthetic.k2 * lstar + synthetic.k3;
    let lim1 = synthetic.l1 / (1.0 - beta * synthetic.k1);
    let lim2 = synthetic.l3 / (1.0 - beta * kappa1_of);
    ensure(&mut fails, (k1n - lim1).abs() <= 1e-6, || {
        format!("K1starN at N = 1e8 is {k1n}, limit {lim1}")
    });
    ensure(&mut fails, (k2n - lim2).abs() <= 1e-6, || {
        format!("K2starN at N = 1e8 is {k2n}, limit {lim2}")
    });

    // beta = 0 wipes every kernel term exactly.
    let (k1z, k2z) = value_lipschitz_n(&synthetic, 0.0, 5, 7.0).expect("beta 0 always solves");
    let k1z_want = synthetic.l1 + synthetic.l3 / 5.0;
    ensure(&mut fails, k1z == k1z_want, || {
        format!("K1starN at beta 0 is {k1z}, want L1 + L3/N = {k1z_want}")
    });
    ensure(&mut fails, k2z == synthetic.l3, || {
        format!("K2starN at beta 0 is {k2z}, want L3 = {}", synthetic.l3)
    });

    let stiff = LipschitzProfile { rho: 2.4, ..estimate_lipschitz(&model) };
    let d0 = derive_constants(&stiff, 0.0, 6, 0.01, 0.07).expect("assumptions at beta 0");
    let t1 = theta1(6, 0.01, &stiff, 0.0, &d0).expect("theta1 at beta 0");
    let t1_want = (stiff.l1 + stiff.l2 * d0.lstar + stiff.l3) * d0.alphan;
    ensure(&mut fails, t1 == t1_want, || {
        format!("theta1 at beta 0 is {t1}, want (L1 + L2 Lstar + L3) alphaN = {t1_want}")
    });
    let t2 = theta2(6, 0.01, &stiff, 0.0, &d0).expect("theta2 at beta 0");
    let t2_want = (stiff.l2 * d0.l1starn + stiff.l3) * d0.alphan;
    ensure(&mut fails, t2 == t2_want, || {
        format!("theta2 at beta 0 is {t2}, want (L2 L1starN + L3) alphaN = {t2_want}")
    });
    verdict(9, fails);
}

#[test]
fn criterion_10_byte_identical_reruns() {
    let mut fails = Vec::new();

    // The binary runs a single fixed-schedule thread and draws by
    // (replication, agent, time) position, so worker count cannot enter;
    // identical reruns must agree byte for byte on stdout and on files.
    let mut rerun = |name: &str, args: &[&str], outputs: &[&PathBuf]| {
        let first = run(args);
        let first_files: Vec<Vec<u8>> = outputs
            .iter()
            .map(|p| {
                let bytes = fs::read(p).unwrap_or_default();
                fs::remove_file(p).ok();
                bytes
            })
            .collect();
        let replay = run(args);
        if first.status.code() != replay.status.code() {
            fails.push(format!(
                "{name}: exit codes differ, {:?} vs {:?}",
                first.status.code(),
                replay.status.code()
            ));
            return;
        }
        if first.stdout != replay.stdout {
            fails.push(format!("{name}: stdout differs between identical runs"));
        }
        for (path, a) in outputs.iter().zip(first_files) {
            let b = fs::read(path).unwrap_or_default();
            if a.is_empty() || a != b {
                fails.push(format!(
                    "{name}: file {} differs between identical runs",
                    path.display()
                ));
            }
        }
    };

    let eq_path = tmp("acc_eq.json");
    let trace_path = tmp("acc_trace.csv");
    let eq_arg = eq_path.to_str().expect("utf8 path");
    let trace_arg = trace_path.to_str().expect("utf8 path");
    rerun(
        "solve",
        &["solve", model_path(), "--out", eq_arg, "--trace", trace_arg],
        &[&eq_path, &trace_path],
    );

    let csv_path = tmp("acc_sim.csv");
    let gap_path = tmp("acc_gap.json");
    let csv_arg = csv_path.to_str().expect("utf8 path");
    let gap_arg = gap_path.to_str().expect("utf8 path");
    rerun(
        "simulate",
        &[
            "simulate",
            model_path(),
            eq_arg,
            "--agents",
            "60",
            "--horizon",
            "12",
            "--reps",
            "40",
            "--seed",
            "11",
            "--csv",
            csv_arg,
            "--out",
            gap_arg,
        ],
        &[&csv_path, &gap_path],
    );
    rerun(
        "simulate --exact",
        &["simulate", model_path(), eq_arg, "--exact", "--agents", "3"],
        &[],
    );
    rerun("bounds", &["bounds", model_path(), "--N", "50", "--rho", "2.4"], &[]);
    rerun("check", &["check", model_path(), eq_arg], &[]);
    rerun("w1", &["w1", "--empirical", "0,1,1,0", "1,1,0,0"], &[]);
    verdict(10, fails);
}
