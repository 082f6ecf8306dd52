//! Finite-population verification: the exact joint MDP a single deviating
//! agent faces against opponents frozen at the equilibrium policy, the
//! per-agent suboptimality eps(N) it yields for small N, and Monte-Carlo
//! estimation of mean-field W1 decay and cost gaps for populations far too
//! large to enumerate.
//!
//! The exact path is deliberately dense: joint states are tuples in X^N
//! encoded as base-|X| digits (the controlled agent is digit 0), opponent
//! randomness is marginalized analytically, and everything downstream is
//! plain MDP machinery. The Monte-Carlo path is deterministic by
//! construction: every uniform draw has a fixed counter-derived position in
//! a per-replication ChaCha stream, so results are independent of execution
//! order, and aggregation uses pairwise summation over replication indices.

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::mdp::{self, Mdp, MdpError};
use crate::model::{
    empirical_measure, mean_field_reduction, Distribution, FiniteMetricSpace, MfgModel,
    ModelError, Policy,
};
use crate::transport::{self, TransportError};

/// Default ceiling on |X|^N joint states for the exact path.
pub const DEFAULT_JOINT_STATE_CAP: usize = 4096;

/// Two-sided 99% normal quantile used for every reported confidence
/// interval.
pub const Z99: f64 = 2.5758293035489004;

/// Value-iteration tolerance for joint value functions; symmetry and
/// Lipschitz verdicts allow slack of the same size.
const VALUE_TOL: f64 = 1e-9;

/// Extra slack on the Lipschitz inequality to absorb value-iteration error.
const LIPSCHITZ_SLACK: f64 = 1e-9;

/// Uniform words per (agent, time) block in the ChaCha counter layout.
/// Three 64-bit draws are consumed per block (peer sample, action, next
/// state); the spare capacity keeps blocks cache-aligned and leaves room.
const WORDS_PER_BLOCK: u128 = 8;

#[derive(Debug, Error)]
pub enum FiniteNError {
    #[error("{base}^{n_agents} joint states exceed the cap of {cap}")]
    StateSpaceTooLarge { base: usize, n_agents: usize, cap: usize },
    #[error("policy shape mismatch: {what}")]
    PolicyMismatch { what: String },
    #[error("invalid configuration: {what}")]
    InvalidConfig { what: String },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// The exact decision problem of agent 0 against N-1 opponents locked to a
/// fixed policy: an ordinary [`Mdp`] over X^N with the digit encoding
/// joint = sum_i x_i * |X|^i.
#[derive(Debug, Clone)]
pub struct JointMdp {
    mdp: Mdp,
    n_agents: usize,
    base: usize,
}

impl JointMdp {
    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn base_states(&self) -> usize {
        self.base
    }

    /// Per-agent coordinates of a joint index; agent 0 is the least
    /// significant digit.
    pub fn decode(&self, joint: usize) -> Vec<usize> {
        decode_digits(joint, self.base, self.n_agents)
    }

    pub fn encode(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &x| acc * self.base + x)
    }
}

fn decode_digits(mut joint: usize, base: usize, n: usize) -> Vec<usize> {
    let mut coords = vec![0usize; n];
    for c in coords.iter_mut() {
        *c = joint % base;
        joint /= base;
    }
    coords
}

/// The transition row of one agent after integrating out the sampled peer
/// state: row(y) = sum_z e(z) pbar(y | x, a, z).
fn mixed_row(model: &MfgModel, x: usize, a: usize, e: &[f64]) -> Vec<f64> {
    let nx = model.n_states();
    let mut row = vec![0.0; nx];
    for (z, &ez) in e.iter().enumerate() {
        if ez == 0.0 {
            continue;
        }
        for (y, &p) in model.pbar(x, a, z).iter().enumerate() {
            row[y] += ez * p;
        }
    }
    row
}

/// Builds the joint MDP with the default state cap. See
/// [`build_joint_mdp_capped`].
pub fn build_joint_mdp(
    model: &MfgModel,
    pi_star: &Policy,
    n: usize,
) -> Result<JointMdp, FiniteNError> {
    build_joint_mdp_capped(model, pi_star, n, DEFAULT_JOINT_STATE_CAP)
}

/// Builds the exact N-agent decision problem of agent 0: at joint state
/// x-vec with empirical measure e, each opponent i moves by
/// sum_a pi_star(a|x_i) sum_z e(z) pbar(.|x_i,a,z), agent 0 moves by
/// sum_z e(z) pbar(.|x_0,a,z) under the chosen action, transitions are
/// independent across agents, and the stage cost is
/// sum_z cbar(x_0,a,z) e(z). Opponent randomness is marginalized
/// analytically; nothing is sampled.
pub fn build_joint_mdp_capped(
    model: &MfgModel,
    pi_star: &Policy,
    n: usize,
    cap: usize,
) -> Result<JointMdp, FiniteNError> {
    let nx = model.n_states();
    let na = model.n_actions();
    if n == 0 {
        return Err(FiniteNError::InvalidConfig { what: "zero agents".to_string() });
    }
    if pi_star.n_states() != nx || pi_star.n_actions() != na {
        return Err(FiniteNError::PolicyMismatch {
            what: format!(
                "policy is {}x{}, model needs {nx}x{na}",
                pi_star.n_states(),
                pi_star.n_actions()
            ),
        });
    }
    let count = (nx as u128)
        .checked_pow(n as u32)
        .filter(|&c| c <= cap as u128)
        .ok_or(FiniteNError::StateSpaceTooLarge { base: nx, n_agents: n, cap })?;
    let ns = count as usize;

    let mut p = vec![0.0; ns * na * ns];
    let mut c = vec![0.0; ns * na];
    for s in 0..ns {
        let coords = decode_digits(s, nx, n);
        let e = empirical_measure(&coords, nx)?;
        let e = e.weights();
        // Tensor product of the opponents' marginalized rows, indexed by
        // the digits of agents 1..N in order.
        let mut opp = vec![1.0];
        for &xi in &coords[1..] {
            let mut row = vec![0.0; nx];
            for a in 0..na {
                let pa = pi_star.prob(xi, a);
                if pa == 0.0 {
                    continue;
                }
                for (y, &v) in mixed_row(model, xi, a, e).iter().enumerate() {
                    row[y] += pa * v;
                }
            }
            let mut next = vec![0.0; opp.len() * nx];
            for (y, &ry) in row.iter().enumerate() {
                for (j, &t) in opp.iter().enumerate() {
                    next[j + opp.len() * y] = t * ry;
                }
            }
            opp = next;
        }
        for a in 0..na {
            let row0 = mixed_row(model, coords[0], a, e);
            let out = &mut p[(s * na + a) * ns..(s * na + a + 1) * ns];
            for (j, &t) in opp.iter().enumerate() {
                for (y0, &r0) in row0.iter().enumerate() {
                    out[y0 + nx * j] = r0 * t;
                }
            }
            c[s * na + a] =
                (0..nx).map(|z| model.cbar(coords[0], a, z) * e[z]).sum();
        }
    }
    let mdp = Mdp::new(ns, na, p, c, model.beta())?;
    Ok(JointMdp { mdp, n_agents: n, base: nx })
}

/// Exact per-agent suboptimality of a symmetric policy profile in the
/// N-agent game, both sides started from the product measure
/// mu_star^(x)N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonN {
    /// Cost of agent 0 when every agent, itself included, plays pi_star.
    pub j_equilibrium: f64,
    /// Optimal cost of agent 0 against the frozen opponents, over the full
    /// class of joint-state-feedback policies.
    pub j_best_response: f64,
    /// j_equilibrium - j_best_response; nonnegative up to value-iteration
    /// error.
    pub eps_n: f64,
}

/// Computes eps(N) exactly: evaluates the all-pi_star chain and the optimal
/// deviation on the joint MDP, both from the product initial distribution.
pub fn exact_epsilon_n(
    model: &MfgModel,
    mu_star: &Distribution,
    pi_star: &Policy,
    n: usize,
) -> Result<EpsilonN, FiniteNError> {
    let joint = build_joint_mdp(model, pi_star, n)?;
    exact_epsilon_on(model, mu_star, pi_star, &joint)
}

/// As [`exact_epsilon_n`] but reusing an already built joint MDP.
pub fn exact_epsilon_on(
    model: &MfgModel,
    mu_star: &Distribution,
    pi_star: &Policy,
    joint: &JointMdp,
) -> Result<EpsilonN, FiniteNError> {
    let nx = model.n_states();
    if mu_star.len() != nx {
        return Err(FiniteNError::InvalidConfig {
            what: format!("mu_star has {} states, model has {nx}", mu_star.len()),
        });
    }
    let ns = joint.mdp().n_states();
    let init_weights: Vec<f64> = (0..ns)
        .map(|s| joint.decode(s).iter().map(|&x| mu_star.get(x)).product())
        .collect();
    let init = Distribution::new(init_weights.clone())?;
    let lifted = Policy::new(
        (0..ns).map(|s| pi_star.row(joint.decode(s)[0]).clone()).collect(),
    )?;
    let (_, j_equilibrium) = mdp::policy_evaluation(joint.mdp(), &lifted, &init)?;
    let (v_star, _) = mdp::value_iteration(joint.mdp(), VALUE_TOL);
    let j_best_response =
        init_weights.iter().zip(&v_star).map(|(&w, &v)| w * v).sum::<f64>();
    Ok(EpsilonN {
        j_equilibrium,
        j_best_response,
        eps_n: j_equilibrium - j_best_response,
    })
}

/// Verdicts of the structural checks on the joint optimal value function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryLipschitzReport {
    /// Largest spread of V* within a class of states that agree in the
    /// controlled coordinate and as multisets of opponents.
    pub max_symmetry_residual: f64,
    pub symmetric: bool,
    /// State pairs tested against the Lipschitz inequality.
    pub pairs_checked: usize,
    /// Pairs where |dV*| exceeded the bound beyond numerical slack.
    pub violations: usize,
    /// Largest |dV*| - bound over all pairs (negative when every pair has
    /// margin).
    pub max_excess: f64,
    pub lipschitz_holds: bool,
}

/// Exhaustively verifies two structural facts about V* of a joint MDP:
/// invariance under permutations of the opponent coordinates, and the
/// two-term Lipschitz bound
/// |V*(x) - V*(y)| <= k1n * d(x_0, y_0) + k2n * W1(opponents of x, of y)
/// with the W1 taken between the opponent empirical measures. For a single
/// agent the second term is vacuous.
pub fn check_symmetry_and_lipschitz(
    joint: &JointMdp,
    space: &FiniteMetricSpace,
    k1n: f64,
    k2n: f64,
) -> Result<SymmetryLipschitzReport, FiniteNError> {
    if space.len() != joint.base_states() {
        return Err(FiniteNError::InvalidConfig {
            what: format!(
                "metric space over {} points, joint MDP over base {}",
                space.len(),
                joint.base_states()
            ),
        });
    }
    let (v, _) = mdp::value_iteration(joint.mdp(), VALUE_TOL);
    let ns = joint.mdp().n_states();
    let n = joint.n_agents();
    let canon: Vec<(usize, Vec<usize>)> = (0..ns)
        .map(|s| {
            let coords = joint.decode(s);
            let mut rest = coords[1..].to_vec();
            rest.sort_unstable();
            (coords[0], rest)
        })
        .collect();

    let mut classes: HashMap<&(usize, Vec<usize>), (f64, f64)> = HashMap::new();
    for (s, key) in canon.iter().enumerate() {
        let entry = classes.entry(key).or_insert((v[s], v[s]));
        entry.0 = entry.0.min(v[s]);
        entry.1 = entry.1.max(v[s]);
    }
    let max_symmetry_residual =
        classes.values().map(|&(lo, hi)| hi - lo).fold(0.0, f64::max);

    let mut w1_memo: HashMap<(&[usize], &[usize]), f64> = HashMap::new();
    let mut violations = 0usize;
    let mut pairs_checked = 0usize;
    let mut max_excess = f64::NEG_INFINITY;
    for s in 0..ns {
        for s2 in (s + 1)..ns {
            let w = if n >= 2 {
                let key = if canon[s].1 <= canon[s2].1 {
                    (canon[s].1.as_slice(), canon[s2].1.as_slice())
                } else {
                    (canon[s2].1.as_slice(), canon[s].1.as_slice())
                };
                match w1_memo.get(&key) {
                    Some(&w) => w,
                    None => {
                        let w = transport::w1_empirical(key.0, key.1, space)?;
                        w1_memo.insert(key, w);
                        w
                    }
                }
            } else {
                0.0
            };
            let bound = k1n * space.d(canon[s].0, canon[s2].0) + k2n * w;
            let excess = (v[s] - v[s2]).abs() - bound;
            if excess > LIPSCHITZ_SLACK {
                violations += 1;
            }
            max_excess = max_excess.max(excess);
            pairs_checked += 1;
        }
    }
    if pairs_checked == 0 {
        max_excess = 0.0;
    }
    Ok(SymmetryLipschitzReport {
        max_symmetry_residual,
        symmetric: max_symmetry_residual <= VALUE_TOL,
        pairs_checked,
        violations,
        max_excess,
        lipschitz_holds: violations == 0,
    })
}

/// Monte-Carlo configuration. `horizon` is where trajectories are cut; pick
/// it via [`SimConfig::default_horizon`] so the discarded discounted tail
/// is provably below a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n: usize,
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    /// Pair replications 2k and 2k+1 on one random stream with the odd
    /// member's uniforms flipped u -> 1-u, a classical variance-reduction
    /// coupling.
    pub antithetic: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), FiniteNError> {
        if self.n == 0 || self.reps == 0 || self.horizon == 0 {
            return Err(FiniteNError::InvalidConfig {
                what: format!(
                    "need n, reps, horizon all positive, got {}, {}, {}",
                    self.n, self.reps, self.horizon
                ),
            });
        }
        Ok(())
    }

    /// Smallest T with beta^T cbar_max / (1 - beta) <= eps_trunc, floored
    /// at one step.
    pub fn default_horizon(model: &MfgModel, eps_trunc: f64) -> usize {
        assert!(eps_trunc > 0.0, "truncation target must be positive, got {eps_trunc}");
        let beta = model.beta();
        let scale = model.cbar_max() / (1.0 - beta);
        if scale <= eps_trunc {
            return 1;
        }
        let t = ((eps_trunc / scale).ln() / beta.ln()).ceil();
        (t as usize).max(1)
    }

    /// The exact discarded tail mass beta^T cbar_max / (1 - beta).
    pub fn truncation_bound(model: &MfgModel, horizon: usize) -> f64 {
        model.beta().powi(horizon as i32) * model.cbar_max() / (1.0 - model.beta())
    }
}

/// Policy assignment for a simulated population: one policy for everyone or
/// one per agent.
#[derive(Debug, Clone, Copy)]
pub enum AgentPolicies<'a> {
    Shared(&'a Policy),
    PerAgent(&'a [Policy]),
}

impl<'a> AgentPolicies<'a> {
    fn get(&self, i: usize) -> &'a Policy {
        match self {
            AgentPolicies::Shared(p) => p,
            AgentPolicies::PerAgent(ps) => &ps[i],
        }
    }

    fn validate(&self, n: usize, nx: usize, na: usize) -> Result<(), FiniteNError> {
        let check = |p: &Policy| -> Result<(), FiniteNError> {
            if p.n_states() != nx || p.n_actions() != na {
                return Err(FiniteNError::PolicyMismatch {
                    what: format!(
                        "policy is {}x{}, model needs {nx}x{na}",
                        p.n_states(),
                        p.n_actions()
                    ),
                });
            }
            Ok(())
        };
        match self {
            AgentPolicies::Shared(p) => check(p),
            AgentPolicies::PerAgent(ps) => {
                if ps.len() != n {
                    return Err(FiniteNError::PolicyMismatch {
                        what: format!("{} per-agent policies for {n} agents", ps.len()),
                    });
                }
                ps.iter().try_for_each(check)
            }
        }
    }
}

/// One time point of the simulated W1 curve with its 99% confidence band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct W1Point {
    pub t: usize,
    pub mean_w1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Aggregated trajectory statistics of a population simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    /// W1 distance of the empirical measure to the reference, per time.
    pub points: Vec<W1Point>,
    /// Agent 0's discounted cost truncated at the horizon, averaged over
    /// replications.
    pub cost_mean: f64,
    /// Standard error of `cost_mean` across replications.
    pub cost_se: f64,
    /// Discounted tail discarded by the truncation.
    pub truncation_bound: f64,
    pub reps: usize,
    pub horizon: usize,
}

impl SimStats {
    /// The W1 curve as CSV with header `t,mean_w1,ci_low,ci_high`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean_w1,ci_low,ci_high\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.t, p.mean_w1, p.ci_low, p.ci_high));
        }
        out
    }
}

/// Summation with a fixed pairwise tree over the index range, so the result
/// is independent of how the values were produced.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        len => {
            let mid = len / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Mean and standard error of a replication sample via pairwise summation;
/// a single replication reports zero error.
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let devs: Vec<f64> = values.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&devs) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Inverse-CDF sample from a weight vector; the final index absorbs any
/// floating-point shortfall of the cumulative sum.
fn sample_indexed(weights: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return k;
        }
    }
    weights.len() - 1
}

/// The deterministic draw layout: every (agent, time) pair owns a fixed
/// window of the stream, so trajectories do not depend on evaluation order.
fn block_pos(agent: usize, t: usize, horizon: usize) -> u128 {
    (agent as u128 * (horizon as u128 + 1) + t as u128) * WORDS_PER_BLOCK
}

fn draw_unit(rng: &mut ChaCha8Rng, flip: bool) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
    if flip {
        1.0 - u
    } else {
        u
    }
}

/// Simulates `cfg.reps` independent populations of `cfg.n` agents started
/// i.i.d. from `init`. Each step, every agent independently samples a peer
/// state from the current empirical measure, an action from its policy, and
/// a successor from the kernel at that triple. Returns the per-time mean
/// and 99% band of W1(empirical measure, `mu_ref`) together with agent 0's
/// truncated discounted cost, whose stage cost averages the peer state out
/// exactly against the empirical measure.
///
/// Identical inputs give identical outputs: draw positions are fixed by
/// (replication, agent, time), not by execution order.
pub fn simulate_population(
    model: &MfgModel,
    policies: &AgentPolicies,
    init: &Distribution,
    mu_ref: &Distribution,
    cfg: &SimConfig,
) -> Result<SimStats, FiniteNError> {
    cfg.validate()?;
    let nx = model.n_states();
    let beta = model.beta();
    policies.validate(cfg.n, nx, model.n_actions())?;
    for (name, d) in [("init", init), ("mu_ref", mu_ref)] {
        if d.len() != nx {
            return Err(FiniteNError::InvalidConfig {
                what: format!("{name} has {} states, model has {nx}", d.len()),
            });
        }
    }

    let t_points = cfg.horizon + 1;
    let mut w1_mat = vec![0.0; cfg.reps * t_points];
    let mut costs = vec![0.0; cfg.reps];
    let mut states = vec![0usize; cfg.n];
    let mut next = vec![0usize; cfg.n];
    for rep in 0..cfg.reps {
        let stream = if cfg.antithetic { (rep & !1) as u64 } else { rep as u64 };
        let flip = cfg.antithetic && rep % 2 == 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        for (i, s) in states.iter_mut().enumerate() {
            rng.set_word_pos(block_pos(i, 0, cfg.horizon));
            *s = sample_indexed(init.weights(), draw_unit(&mut rng, flip));
        }
        let mut discount = 1.0;
        let mut cost = 0.0;
        for t in 0..=cfg.horizon {
            let e = empirical_measure(&states, nx)?;
            w1_mat[rep * t_points + t] = transport::w1(&e, mu_ref, model.space())?;
            if t == cfg.horizon {
                break;
            }
            let ew = e.weights();
            for i in 0..cfg.n {
                rng.set_word_pos(block_pos(i, t + 1, cfg.horizon));
                let z = sample_indexed(ew, draw_unit(&mut rng, flip));
                let pol = policies.get(i);
                let a = sample_indexed(pol.row(states[i]).weights(), draw_unit(&mut rng, flip));
                next[i] = sample_indexed(model.pbar(states[i], a, z), draw_unit(&mut rng, flip));
                if i == 0 {
                    let stage: f64 =
                        (0..nx).map(|zz| model.cbar(states[0], a, zz) * ew[zz]).sum();
                    cost += discount * stage;
                }
            }
            std::mem::swap(&mut states, &mut next);
            discount *= beta;
        }
        costs[rep] = cost;
    }

    let points = (0..t_points)
        .map(|t| {
            let col: Vec<f64> = (0..cfg.reps).map(|r| w1_mat[r * t_points + t]).collect();
            let (mean, se) = mean_and_se(&col);
            W1Point {
                t,
                mean_w1: mean,
                ci_low: mean - Z99 * se,
                ci_high: mean + Z99 * se,
            }
        })
        .collect();
    let (cost_mean, cost_se) = mean_and_se(&costs);
    Ok(SimStats {
        points,
        cost_mean,
        cost_se,
        truncation_bound: SimConfig::truncation_bound(model, cfg.horizon),
        reps: cfg.reps,
        horizon: cfg.horizon,
    })
}

/// Monte-Carlo comparison of an agent's cost in the N-agent game against
/// the limit-model cost of the same policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostGap {
    /// |j_simulated - j_exact|.
    pub gap: f64,
    /// 99% half-width of the simulation mean.
    pub ci_half: f64,
    /// Deterministic truncation error of the simulated cost.
    pub truncation_bound: f64,
    pub j_simulated: f64,
    pub j_exact: f64,
}

impl CostGap {
    /// Whether the observed gap is explainable by sampling noise plus
    /// truncation alone.
    pub fn consistent_with_zero(&self) -> bool {
        self.gap <= self.ci_half + self.truncation_bound
    }
}

/// Estimates |J_N(pi_star) - J(mu_star; pi_star)|: simulates the N-agent
/// population with everyone on `pi_star` from `mu_star`, and evaluates the
/// limit model exactly at the same pair.
pub fn estimate_cost_gap(
    model: &MfgModel,
    mu_star: &Distribution,
    pi_star: &Policy,
    cfg: &SimConfig,
) -> Result<CostGap, FiniteNError> {
    let sim =
        simulate_population(model, &AgentPolicies::Shared(pi_star), mu_star, mu_star, cfg)?;
    let limit = mean_field_reduction(model, mu_star)?;
    let (_, j_exact) = mdp::policy_evaluation(&limit, pi_star, mu_star)?;
    Ok(CostGap {
        gap: (sim.cost_mean - j_exact).abs(),
        ci_half: Z99 * sim.cost_se,
        truncation_bound: sim.truncation_bound,
        j_simulated: sim.cost_mean,
        j_exact,
    })
}

/// One witness function's verdict in [`variance_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessCheck {
    /// The base point y of the witness g = d(., y).
    pub state: usize,
    /// Monte-Carlo estimate of E|integral of g against the one-step
    /// empirical measure minus its exact mean|.
    pub estimate: f64,
    /// The variance bound sqrt((1/N^2) sum_i Var g(x_i)).
    pub bound: f64,
    /// Standard error of `estimate`.
    pub se: f64,
    pub pass: bool,
}

/// Verdicts over the whole 1-Lipschitz witness family {d(., y) : y in X}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub checks: Vec<WitnessCheck>,
    pub pass: bool,
}

/// Checks the one-step concentration inequality of the empirical measure:
/// from a frozen population `y_vec`, each agent independently samples a
/// peer from the empirical measure, an action from `pi`, and a successor;
/// for each witness g the mean absolute deviation of the sampled average of
/// g from its exact mean must not exceed the independent-sum variance bound
/// (plus three standard errors of the Monte-Carlo estimate).
pub fn variance_bound_check(
    model: &MfgModel,
    pi: &Policy,
    y_vec: &[usize],
    reps: usize,
    seed: u64,
) -> Result<VarianceReport, FiniteNError> {
    let nx = model.n_states();
    let na = model.n_actions();
    let n = y_vec.len();
    if n == 0 || reps == 0 {
        return Err(FiniteNError::InvalidConfig {
            what: format!("need agents and replications, got {n} and {reps}"),
        });
    }
    AgentPolicies::Shared(pi).validate(n, nx, na)?;
    let e = empirical_measure(y_vec, nx)?;
    let ew = e.weights();
    let space = model.space();

    // Exact per-agent successor marginals with peer and action integrated
    // out, then exact means and variances of every witness.
    let marginals: Vec<Vec<f64>> = y_vec
        .iter()
        .map(|&yi| {
            let mut q = vec![0.0; nx];
            for a in 0..na {
                let pa = pi.prob(yi, a);
                if pa == 0.0 {
                    continue;
                }
                for (y, &v) in mixed_row(model, yi, a, ew).iter().enumerate() {
                    q[y] += pa * v;
                }
            }
            q
        })
        .collect();
    let witnesses: Vec<Vec<f64>> =
        (0..nx).map(|ystar| (0..nx).map(|x| space.d(x, ystar)).collect()).collect();
    let mut exact_mean = vec![0.0; nx];
    let mut bound = vec![0.0; nx];
    for (w, g) in witnesses.iter().enumerate() {
        let mut var_sum = 0.0;
        let mut mean_sum = 0.0;
        for q in &marginals {
            let m: f64 = q.iter().zip(g).map(|(&qx, &gx)| qx * gx).sum();
            let s: f64 = q.iter().zip(g).map(|(&qx, &gx)| qx * gx * gx).sum();
            mean_sum += m;
            var_sum += (s - m * m).max(0.0);
        }
        exact_mean[w] = mean_sum / n as f64;
        bound[w] = (var_sum / (n as f64 * n as f64)).sqrt();
    }

    let mut devs = vec![vec![0.0; reps]; nx];
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        let mut g_sums = vec![0.0; nx];
        for (i, &yi) in y_vec.iter().enumerate() {
            rng.set_word_pos(i as u128 * WORDS_PER_BLOCK);
            let z = sample_indexed(ew, draw_unit(&mut rng, false));
            let a = sample_indexed(pi.row(yi).weights(), draw_unit(&mut rng, false));
            let x = sample_indexed(model.pbar(yi, a, z), draw_unit(&mut rng, false));
            for (w, g) in witnesses.iter().enumerate() {
                g_sums[w] += g[x];
            }
        }
        for w in 0..nx {
            devs[w][rep] = (g_sums[w] / n as f64 - exact_mean[w]).abs();
        }
    }

    let checks: Vec<WitnessCheck> = (0..nx)
        .map(|w| {
            let (estimate, se) = mean_and_se(&devs[w]);
            WitnessCheck {
                state: w,
                estimate,
                bound: bound[w],
                se,
                pass: estimate <= bound[w] + 3.0 * se,
            }
        })
        .collect();
    let pass = checks.iter().all(|c| c.pass);
    Ok(VarianceReport { checks, pass })
}
