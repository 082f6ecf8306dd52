//! Discounted-MDP machinery: value iteration, greedy policies, exact policy
//! evaluation, occupation measures, stationary distributions, and the
//! exploitability / equilibrium checks built from them.
//!
//! Everything here is deliberately direct: linear systems are solved by LU
//! factorization with iterative refinement rather than by fixed-point
//! iteration, because these routines serve as the independent oracle against
//! which the equilibrium solver is judged.

use thiserror::Error;

use crate::linalg::{lu_factor, solve_refined, strongly_connected_components, LinalgError};
use crate::model::{mean_field_reduction, Distribution, MfgModel, ModelError, Policy};

/// Default tolerance under which greedy action values count as tied.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("transition row (x={x}, a={a}) is not a probability vector (sum {sum})")]
    NonStochasticRow { x: usize, a: usize, sum: f64 },
    #[error("kernel row {x} is not a probability vector (sum {sum})")]
    NonStochasticKernelRow { x: usize, sum: f64 },
    #[error("cost (x={x}, a={a}) is negative: {value}")]
    NegativeCost { x: usize, a: usize, value: f64 },
    #[error("beta must lie strictly inside (0, 1), got {0}")]
    InvalidBeta(f64),
    #[error("negative mass at flat index {index}: {value}")]
    NegativeMass { index: usize, value: f64 },
    #[error("linear system for {what} is numerically singular")]
    SingularSystem { what: String },
    #[error("stationary distribution residual {residual} exceeds 1e-9")]
    NoConvergence { residual: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<LinalgError> for MdpError {
    fn from(e: LinalgError) -> Self {
        MdpError::SingularSystem { what: e.to_string() }
    }
}

/// A finite discounted MDP with dense transition and cost tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    nx: usize,
    na: usize,
    /// Flat `[x][a][y]`.
    p: Vec<f64>,
    /// Flat `[x][a]`.
    c: Vec<f64>,
    beta: f64,
}

impl Mdp {
    pub fn new(
        nx: usize,
        na: usize,
        p: Vec<f64>,
        c: Vec<f64>,
        beta: f64,
    ) -> Result<Self, MdpError> {
        if nx == 0 || na == 0 || p.len() != nx * na * nx || c.len() != nx * na {
            return Err(MdpError::DimensionMismatch(format!(
                "expected {nx}x{na}x{nx} transitions and {nx}x{na} costs, got {} and {}",
                p.len(),
                c.len()
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(MdpError::InvalidBeta(beta));
        }
        for x in 0..nx {
            for a in 0..na {
                let row = &p[(x * na + a) * nx..(x * na + a + 1) * nx];
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-10
                {
                    return Err(MdpError::NonStochasticRow { x, a, sum });
                }
                let cost = c[x * na + a];
                if !(cost >= 0.0) || !cost.is_finite() {
                    return Err(MdpError::NegativeCost { x, a, value: cost });
                }
            }
        }
        Ok(Mdp { nx, na, p, c, beta })
    }

    pub fn n_states(&self) -> usize {
        self.nx
    }

    pub fn n_actions(&self) -> usize {
        self.na
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The transition row p(. | x, a) over next states.
    pub fn p_row(&self, x: usize, a: usize) -> &[f64] {
        &self.p[(x * self.na + a) * self.nx..(x * self.na + a + 1) * self.nx]
    }

    pub fn cost(&self, x: usize, a: usize) -> f64 {
        self.c[x * self.na + a]
    }
}

/// A nonnegative measure on state-action pairs. Outputs of
/// [`occupation_measure`] carry total mass 1; intermediate solver iterates
/// and scaled variants may carry any finite nonnegative mass.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    nx: usize,
    na: usize,
    weights: Vec<f64>,
}

impl OccupationMeasure {
    pub fn new(nx: usize, na: usize, weights: Vec<f64>) -> Result<Self, MdpError> {
        if weights.len() != nx * na {
            return Err(MdpError::DimensionMismatch(format!(
                "occupation measure needs {nx}*{na} weights, got {}",
                weights.len()
            )));
        }
        for (index, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(MdpError::NegativeMass { index, value: w });
            }
        }
        Ok(OccupationMeasure { nx, na, weights })
    }

    pub fn n_states(&self) -> usize {
        self.nx
    }

    pub fn n_actions(&self) -> usize {
        self.na
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.weights[x * self.na + a]
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The state marginal zeta(x) = sum_a zeta(x, a).
    pub fn state_marginal(&self) -> Vec<f64> {
        (0..self.nx)
            .map(|x| self.weights[x * self.na..(x + 1) * self.na].iter().sum())
            .collect()
    }
}

/// Solves the optimality equation by value iteration until the sup-norm
/// update gap falls below tol * (1 - beta) / (2 beta), which puts the
/// returned value within tol/2 of the fixed point. Returns the value
/// function together with Q(x, a) = c(x, a) + beta * sum_y p(y|x,a) V(y)
/// evaluated at the returned V.
pub fn value_iteration(mdp: &Mdp, tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let nx = mdp.n_states();
    let na = mdp.n_actions();
    let beta = mdp.beta();
    let tau = (tol.max(f64::MIN_POSITIVE) * (1.0 - beta) / (2.0 * beta)).max(1e-300);
    let mut v = vec![0.0; nx];
    loop {
        let mut next = vec![0.0; nx];
        let mut diff = 0.0f64;
        for x in 0..nx {
            let mut best = f64::INFINITY;
            for a in 0..na {
                let row = mdp.p_row(x, a);
                let q: f64 = mdp.cost(x, a)
                    + beta * row.iter().zip(&v).map(|(&p, &vy)| p * vy).sum::<f64>();
                best = best.min(q);
            }
            next[x] = best;
            diff = diff.max((best - v[x]).abs());
        }
        let scale = 1.0 + next.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let converged = diff <= tau || diff <= 1e-15 * scale;
        v = next;
        if converged {
            break;
        }
    }
    let q = (0..nx)
        .map(|x| {
            (0..na)
                .map(|a| {
                    mdp.cost(x, a)
                        + beta
                            * mdp
                                .p_row(x, a)
                                .iter()
                                .zip(&v)
                                .map(|(&p, &vy)| p * vy)
                                .sum::<f64>()
                })
                .collect()
        })
        .collect();
    (v, q)
}

/// The deterministic policy picking the min-Q action at each state, with
/// ties within `tie_tol` broken toward the lowest action index.
pub fn greedy_policy(q: &[Vec<f64>], tie_tol: f64) -> Policy {
    assert!(!q.is_empty(), "greedy_policy needs at least one state row");
    let na = q[0].len();
    let actions: Vec<usize> = q
        .iter()
        .map(|row| {
            let best = row.iter().cloned().fold(f64::INFINITY, f64::min);
            row.iter().position(|&v| v <= best + tie_tol).expect("row has a minimum")
        })
        .collect();
    Policy::deterministic(&actions, na)
}

/// Evaluates a stationary policy exactly: solves (I - beta P_pi) V = c_pi by
/// direct factorization and returns (V_pi, J) with J = <init, V_pi>.
pub fn policy_evaluation(
    mdp: &Mdp,
    pi: &Policy,
    init: &Distribution,
) -> Result<(Vec<f64>, f64), MdpError> {
    let nx = mdp.n_states();
    check_policy_dims(mdp, pi)?;
    if init.len() != nx {
        return Err(MdpError::DimensionMismatch(format!(
            "initial distribution over {} states, MDP has {nx}",
            init.len()
        )));
    }
    let p_pi = closed_loop(mdp, pi);
    let c_pi: Vec<f64> = (0..nx)
        .map(|x| (0..mdp.n_actions()).map(|a| pi.prob(x, a) * mdp.cost(x, a)).sum())
        .collect();
    let mut a = vec![0.0; nx * nx];
    for x in 0..nx {
        for y in 0..nx {
            a[x * nx + y] = if x == y { 1.0 } else { 0.0 } - mdp.beta() * p_pi[x][y];
        }
    }
    let factors = lu_factor(nx, &a, 1e-14)
        .map_err(|_| MdpError::SingularSystem { what: "policy evaluation".to_string() })?;
    let (v, _) = solve_refined(nx, &a, &factors, &c_pi, 1e-14, 3);
    let j = init.weights().iter().zip(&v).map(|(&w, &vx)| w * vx).sum();
    Ok((v, j))
}

/// The beta-discounted expected occupation measure of a policy: solves the
/// stationarity system zeta_hat = (1 - beta) init + beta zeta_hat P_pi
/// directly and sets zeta(x, a) = pi(a|x) zeta_hat(x).
pub fn occupation_measure(
    mdp: &Mdp,
    pi: &Policy,
    init: &Distribution,
) -> Result<OccupationMeasure, MdpError> {
    let nx = mdp.n_states();
    let na = mdp.n_actions();
    check_policy_dims(mdp, pi)?;
    if init.len() != nx {
        return Err(MdpError::DimensionMismatch(format!(
            "initial distribution over {} states, MDP has {nx}",
            init.len()
        )));
    }
    let p_pi = closed_loop(mdp, pi);
    // Transposed system (I - beta P_pi)^T zeta_hat = (1 - beta) init.
    let mut at = vec![0.0; nx * nx];
    for y in 0..nx {
        for x in 0..nx {
            at[y * nx + x] = if x == y { 1.0 } else { 0.0 } - mdp.beta() * p_pi[x][y];
        }
    }
    let rhs: Vec<f64> = init.weights().iter().map(|&w| (1.0 - mdp.beta()) * w).collect();
    let factors = lu_factor(nx, &at, 1e-14)
        .map_err(|_| MdpError::SingularSystem { what: "occupation measure".to_string() })?;
    let (zeta_hat, _) = solve_refined(nx, &at, &factors, &rhs, 1e-14, 3);
    let mut weights = vec![0.0; nx * na];
    for x in 0..nx {
        let zx = zeta_hat[x].max(0.0);
        for a in 0..na {
            weights[x * na + a] = pi.prob(x, a) * zx;
        }
    }
    OccupationMeasure::new(nx, na, weights)
}

/// The closed-loop kernel P_pi(y | x) = sum_a p(y|x,a) pi(a|x).
pub fn closed_loop_kernel(mdp: &Mdp, pi: &Policy) -> Result<Vec<Vec<f64>>, MdpError> {
    check_policy_dims(mdp, pi)?;
    Ok(closed_loop(mdp, pi))
}

fn closed_loop(mdp: &Mdp, pi: &Policy) -> Vec<Vec<f64>> {
    let nx = mdp.n_states();
    let na = mdp.n_actions();
    (0..nx)
        .map(|x| {
            let mut row = vec![0.0; nx];
            for a in 0..na {
                let w = pi.prob(x, a);
                if w == 0.0 {
                    continue;
                }
                for (y, &p) in mdp.p_row(x, a).iter().enumerate() {
                    row[y] += w * p;
                }
            }
            row
        })
        .collect()
}

fn check_policy_dims(mdp: &Mdp, pi: &Policy) -> Result<(), MdpError> {
    if pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions() {
        return Err(MdpError::DimensionMismatch(format!(
            "policy is {}x{}, MDP is {}x{}",
            pi.n_states(),
            pi.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// One invariant distribution of a row-stochastic kernel plus diagnostics.
/// When the chain is reducible the solver restricts to the recurrent class
/// containing the smallest state index, so the returned member of the
/// invariant set is deterministic; `communication_classes` counts all
/// strongly connected components so callers can detect non-uniqueness.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub dist: Distribution,
    pub residual: f64,
    pub communication_classes: usize,
}

/// Solves mu = mu P with <mu, 1> = 1 by a direct null-space solve on one
/// recurrent class of the support graph.
pub fn stationary_distribution(kernel: &[Vec<f64>]) -> Result<StationaryResult, MdpError> {
    let n = kernel.len();
    if n == 0 || kernel.iter().any(|row| row.len() != n) {
        return Err(MdpError::DimensionMismatch(
            "stationary_distribution needs a square nonempty kernel".to_string(),
        ));
    }
    for (x, row) in kernel.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-10 {
            return Err(MdpError::NonStochasticKernelRow { x, sum });
        }
    }
    let adj: Vec<Vec<usize>> = kernel
        .iter()
        .map(|row| row.iter().enumerate().filter(|&(_, &p)| p > 0.0).map(|(y, _)| y).collect())
        .collect();
    let comp = strongly_connected_components(&adj);
    let n_comp = comp.iter().max().map_or(0, |&c| c + 1);
    let mut recurrent = vec![true; n_comp];
    for (x, nbrs) in adj.iter().enumerate() {
        for &y in nbrs {
            if comp[y] != comp[x] {
                recurrent[comp[x]] = false;
            }
        }
    }
    let target = comp
        .iter()
        .position(|&c| recurrent[c])
        .expect("a finite chain always has a recurrent class");
    let class: Vec<usize> = (0..n).filter(|&x| comp[x] == comp[target]).collect();
    let k = class.len();
    // Balance system on the class: (I - P^T) mu = 0 with the redundant last
    // row replaced by the normalization <mu, 1> = 1. Rows of the restricted
    // kernel are exactly stochastic because a recurrent class has no
    // positive mass leaving it.
    let mut a = vec![0.0; k * k];
    for (i, &y) in class.iter().enumerate() {
        for (j, &x) in class.iter().enumerate() {
            a[i * k + j] = if i == j { 1.0 } else { 0.0 } - kernel[x][y];
        }
    }
    for j in 0..k {
        a[(k - 1) * k + j] = 1.0;
    }
    let mut rhs = vec![0.0; k];
    rhs[k - 1] = 1.0;
    let factors = lu_factor(k, &a, 1e-14)
        .map_err(|_| MdpError::SingularSystem { what: "stationary balance".to_string() })?;
    let (mu_class, _) = solve_refined(k, &a, &factors, &rhs, 1e-14, 3);
    let mut weights = vec![0.0; n];
    for (i, &x) in class.iter().enumerate() {
        weights[x] = mu_class[i].max(0.0);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let mut residual = 0.0f64;
    for y in 0..n {
        let flow: f64 = (0..n).map(|x| weights[x] * kernel[x][y]).sum();
        residual = residual.max((weights[y] - flow).abs());
    }
    if residual > 1e-9 {
        return Err(MdpError::NoConvergence { residual });
    }
    let dist = Distribution::new(weights).map_err(MdpError::Model)?;
    Ok(StationaryResult { dist, residual, communication_classes: n_comp })
}

/// How much an agent can gain by deviating from pi when the population is
/// frozen at mu: J(mu; pi) - min over policies of J(mu; .), evaluated on the
/// reduced MDP with the population distribution itself as the initial law.
pub fn exploitability(
    model: &MfgModel,
    mu: &Distribution,
    pi: &Policy,
) -> Result<f64, MdpError> {
    let reduced = mean_field_reduction(model, mu)?;
    let (_, q) = value_iteration(&reduced, 1e-12);
    let best = greedy_policy(&q, DEFAULT_TIE_TOL);
    let (_, j_best) = policy_evaluation(&reduced, &best, mu)?;
    let (_, j_pi) = policy_evaluation(&reduced, pi, mu)?;
    Ok(j_pi - j_best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfeReport {
    pub bellman_residual: f64,
    pub invariance_residual: f64,
    pub pass: bool,
}

/// Checks the two defining properties of a stationary mean-field
/// equilibrium: pi is (tol-)optimal against mu, and mu is (tol-)invariant
/// under the closed-loop kernel it induces.
pub fn verify_mfe(
    model: &MfgModel,
    mu: &Distribution,
    pi: &Policy,
    tol: f64,
) -> Result<MfeReport, MdpError> {
    let bellman_residual = exploitability(model, mu, pi)?;
    let reduced = mean_field_reduction(model, mu)?;
    let p_pi = closed_loop_kernel(&reduced, pi)?;
    let n = reduced.n_states();
    let mut invariance_residual = 0.0f64;
    for y in 0..n {
        let flow: f64 = (0..n).map(|x| mu.get(x) * p_pi[x][y]).sum();
        invariance_residual = invariance_residual.max((mu.get(y) - flow).abs());
    }
    let pass = bellman_residual <= tol && invariance_residual <= tol;
    Ok(MfeReport { bellman_residual, invariance_residual, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_inf;
    use crate::model::validate_model;
    use crate::testutil::{malware_model, malware_raw};

    fn malware_reduced() -> Mdp {
        let mu = Distribution::new(vec![0.59, 0.41]).unwrap();
        mean_field_reduction(&malware_model(), &mu).unwrap()
    }

    fn paper_policy() -> Policy {
        Policy::new(vec![
            Distribution::new(vec![0.76, 0.24]).unwrap(),
            Distribution::new(vec![0.02, 0.98]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn zero_cost_value_iteration_is_zero() {
        let mdp = Mdp::new(2, 2, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5], vec![0.0; 4], 0.9)
            .unwrap();
        let (v, q) = value_iteration(&mdp, 1e-10);
        assert!(v.iter().all(|&x| x == 0.0), "zero cost must give V = 0, got {v:?}");
        assert!(q.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = Mdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 1.0], 0.9).unwrap();
        let (v, _) = value_iteration(&mdp, 1e-9);
        assert!((v[0] - 10.0).abs() <= 1e-9, "V should be 1/(1-0.9) = 10, got {}", v[0]);
    }

    #[test]
    fn malware_reduction_fixed_point_and_action_gaps() {
        let (v, q) = value_iteration(&malware_reduced(), 1e-12);
        // Exact fixed point: V0 = 8991/1810, V1 = 10101/1810 (wait is
        // optimal at 0, repair at 1).
        assert!((v[0] - 8991.0 / 1810.0).abs() < 1e-9, "V0 = {}", v[0]);
        assert!((v[1] - 10101.0 / 1810.0).abs() < 1e-9, "V1 = {}", v[1]);
        let gap0 = (q[0][0] - q[0][1]).abs();
        let gap1 = (q[1][0] - q[1][1]).abs();
        assert!((gap0 - 59.0 / 18100.0).abs() < 1e-9, "healthy-state gap = {gap0}");
        assert!(gap0 <= 0.02, "healthy state is near-indifferent");
        // The infected-state action gap is genuinely about 0.052, not
        // inside the 0.02 indifference band: the reported equilibrium
        // randomizes only at the healthy state.
        assert!((gap1 - 47.0 / 905.0).abs() < 1e-9, "infected-state gap = {gap1}");
    }

    #[test]
    fn contraction_of_value_iteration_sweeps() {
        let mdp = malware_reduced();
        let beta = mdp.beta();
        let mut v = vec![0.0; 2];
        let mut prev_diff: Option<f64> = None;
        for _ in 0..25 {
            let mut next = vec![0.0; 2];
            for x in 0..2 {
                next[x] = (0..2)
                    .map(|a| {
                        mdp.cost(x, a)
                            + beta
                                * mdp.p_row(x, a).iter().zip(&v).map(|(&p, &vy)| p * vy).sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
            }
            let diff = norm_inf(&next.iter().zip(&v).map(|(&a, &b)| a - b).collect::<Vec<_>>());
            if let Some(pd) = prev_diff {
                assert!(diff <= beta * pd + 1e-14, "sweeps must contract: {diff} vs {pd}");
            }
            prev_diff = Some(diff);
            v = next;
        }
    }

    #[test]
    fn greedy_policy_examples() {
        let pi = greedy_policy(&[vec![1.0, 2.0], vec![3.0, 0.0]], DEFAULT_TIE_TOL);
        assert_eq!(pi.prob(0, 0), 1.0);
        assert_eq!(pi.prob(1, 1), 1.0);
        let pi = greedy_policy(&[vec![1.0, 1.0 + 1e-12]], 1e-9);
        assert_eq!(pi.prob(0, 0), 1.0, "ties break to the lowest action index");
    }

    #[test]
    fn policy_evaluation_examples() {
        let mdp = Mdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 1.0], 0.5).unwrap();
        let init = Distribution::point_mass(0, 1);
        let pi = Policy::uniform(1, 2);
        let (v, j) = policy_evaluation(&mdp, &pi, &init).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert!((j - 2.0).abs() < 1e-12);

        let zero = Mdp::new(1, 1, vec![1.0], vec![0.0], 0.5).unwrap();
        let (v, _) =
            policy_evaluation(&zero, &Policy::uniform(1, 1), &Distribution::point_mass(0, 1))
                .unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn greedy_policy_beats_alternatives_on_malware() {
        let mdp = malware_reduced();
        let init = Distribution::new(vec![0.59, 0.41]).unwrap();
        let (_, q) = value_iteration(&mdp, 1e-12);
        let greedy = greedy_policy(&q, DEFAULT_TIE_TOL);
        let (_, j_greedy) = policy_evaluation(&mdp, &greedy, &init).unwrap();
        for other in [
            Policy::uniform(2, 2),
            Policy::deterministic(&[0, 0], 2),
            Policy::deterministic(&[1, 1], 2),
            paper_policy(),
        ] {
            let (_, j) = policy_evaluation(&mdp, &other, &init).unwrap();
            assert!(j_greedy <= j + 1e-9, "greedy J {j_greedy} must not exceed {j}");
        }
    }

    #[test]
    fn occupation_measure_single_absorbing_state() {
        let mdp = Mdp::new(1, 1, vec![1.0], vec![1.0], 0.9).unwrap();
        let zeta =
            occupation_measure(&mdp, &Policy::uniform(1, 1), &Distribution::point_mass(0, 1))
                .unwrap();
        assert!((zeta.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupation_measure_identities_on_malware() {
        let mdp = malware_reduced();
        let pi = paper_policy();
        let init = Distribution::new(vec![0.3, 0.7]).unwrap();
        let zeta = occupation_measure(&mdp, &pi, &init).unwrap();
        assert!((zeta.mass() - 1.0).abs() < 1e-10, "mass = {}", zeta.mass());
        // <zeta, c> = (1 - beta) J.
        let (_, j) = policy_evaluation(&mdp, &pi, &init).unwrap();
        let inner: f64 =
            (0..2).flat_map(|x| (0..2).map(move |a| (x, a))).map(|(x, a)| zeta.get(x, a) * mdp.cost(x, a)).sum();
        assert!(
            (inner - (1.0 - mdp.beta()) * j).abs() < 1e-9,
            "<zeta,c> = {inner} vs (1-beta)J = {}",
            (1.0 - mdp.beta()) * j
        );
        // Marginal stationarity: zeta_hat = (1-beta) init + beta zeta_hat P_pi.
        let marginal = zeta.state_marginal();
        let p_pi = closed_loop_kernel(&mdp, &pi).unwrap();
        for y in 0..2 {
            let flow: f64 = (0..2).map(|x| marginal[x] * p_pi[x][y]).sum();
            let expect = (1.0 - mdp.beta()) * init.get(y) + mdp.beta() * flow;
            assert!(
                (marginal[y] - expect).abs() < 1e-10,
                "marginal identity fails at {y}: {} vs {expect}",
                marginal[y]
            );
        }
    }

    #[test]
    fn occupation_measure_matches_truncated_forward_recursion() {
        // Fixed 3-state, 2-action MDP; the oracle runs the definition
        // directly: (1-beta) sum_t beta^t Pr[(x_t, a_t)] truncated once the
        // tail weight drops below 1e-10.
        let p = vec![
            0.6, 0.3, 0.1, /* (0,0) */ 0.1, 0.8, 0.1, /* (0,1) */
            0.2, 0.2, 0.6, /* (1,0) */ 0.5, 0.4, 0.1, /* (1,1) */
            0.3, 0.3, 0.4, /* (2,0) */ 0.0, 0.1, 0.9, /* (2,1) */
        ];
        let c = vec![1.0, 0.5, 0.2, 0.7, 0.4, 0.9];
        let beta = 0.8;
        let mdp = Mdp::new(3, 2, p, c, beta).unwrap();
        let pi = Policy::new(vec![
            Distribution::new(vec![0.7, 0.3]).unwrap(),
            Distribution::new(vec![0.4, 0.6]).unwrap(),
            Distribution::new(vec![0.9, 0.1]).unwrap(),
        ])
        .unwrap();
        let init = Distribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        let zeta = occupation_measure(&mdp, &pi, &init).unwrap();

        let horizon = (1e-10f64.ln() / beta.ln()).ceil() as usize;
        let p_pi = closed_loop_kernel(&mdp, &pi).unwrap();
        let mut dist = init.weights().to_vec();
        let mut oracle = vec![0.0; 6];
        let mut discount = 1.0 - beta;
        for _ in 0..=horizon {
            for x in 0..3 {
                for a in 0..2 {
                    oracle[x * 2 + a] += discount * dist[x] * pi.prob(x, a);
                }
            }
            let mut next = vec![0.0; 3];
            for x in 0..3 {
                for y in 0..3 {
                    next[y] += dist[x] * p_pi[x][y];
                }
            }
            dist = next;
            discount *= beta;
        }
        for (i, (&got, &want)) in zeta.weights().iter().zip(&oracle).enumerate() {
            assert!((got - want).abs() < 1e-8, "entry {i}: solver {got} vs oracle {want}");
        }
    }

    #[test]
    fn stationary_identity_kernel_is_deterministic() {
        let kernel = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let res = stationary_distribution(&kernel).unwrap();
        assert!(res.residual <= 1e-9);
        assert_eq!(res.communication_classes, 2, "identity chain has two classes");
        // Non-unique invariant set; the solver deterministically restricts
        // to the class containing state 0.
        assert_eq!(res.dist.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn stationary_malware_closed_loop() {
        // Closed loop under pi(repair|0) = 0.24, pi(repair|1) = 0.98 with
        // q = 0.9: rows [0.316, 0.684] and [0.98, 0.02]; balance gives
        // 0.684 mu0 = 0.98 (1 - mu0), mu0 = 0.98/1.664.
        let kernel = vec![vec![0.316, 0.684], vec![0.98, 0.02]];
        let res = stationary_distribution(&kernel).unwrap();
        assert_eq!(res.communication_classes, 1);
        assert!((res.dist.get(0) - 0.98 / 1.664).abs() < 1e-12, "mu0 = {}", res.dist.get(0));
        assert!((res.dist.get(0) - 0.589).abs() < 1e-3);
        assert!((res.dist.get(1) - 0.411).abs() < 1e-3);
    }

    #[test]
    fn stationary_doubly_stochastic_is_uniform() {
        let kernel = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
        ];
        let res = stationary_distribution(&kernel).unwrap();
        for x in 0..3 {
            assert!((res.dist.get(x) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_transient_states_get_zero_mass() {
        // State 0 leaks into the absorbing pair {1, 2}.
        let kernel = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.2, 0.8],
            vec![0.0, 0.6, 0.4],
        ];
        let res = stationary_distribution(&kernel).unwrap();
        assert_eq!(res.dist.get(0), 0.0);
        assert_eq!(res.communication_classes, 2);
        // Balance on {1,2}: 0.8 mu1 = 0.6 mu2.
        assert!((res.dist.get(1) - 0.6 / 1.4).abs() < 1e-12);
        assert!((res.dist.get(2) - 0.8 / 1.4).abs() < 1e-12);
    }

    #[test]
    fn exploitability_of_greedy_is_negligible() {
        let model = malware_model();
        let mu = Distribution::new(vec![0.59, 0.41]).unwrap();
        let (_, q) = value_iteration(&mean_field_reduction(&model, &mu).unwrap(), 1e-12);
        let greedy = greedy_policy(&q, DEFAULT_TIE_TOL);
        let e = exploitability(&model, &mu, &greedy).unwrap();
        assert!(e.abs() <= 1e-6, "greedy exploits itself by {e}");
    }

    #[test]
    fn exploitability_of_always_waiting() {
        let model = malware_model();
        let mu = Distribution::new(vec![0.59, 0.41]).unwrap();
        let noop = Policy::deterministic(&[0, 0], 2);
        let e = exploitability(&model, &mu, &noop).unwrap();
        // Hand computation: J(wait-always) = 5.70450549..., J* = 9446.1/1810.
        assert!((e - 0.4856657).abs() < 1e-6, "exploitability = {e}");
        assert!(e > 0.1, "never repairing must be clearly suboptimal");
    }

    #[test]
    fn verify_mfe_accepts_the_reported_equilibrium() {
        let model = malware_model();
        let mu = Distribution::new(vec![0.59, 0.41]).unwrap();
        let report = verify_mfe(&model, &mu, &paper_policy(), 0.02).unwrap();
        assert!(report.pass, "reported equilibrium must verify at tol 0.02: {report:?}");
        assert!((report.invariance_residual - 0.00176).abs() < 1e-9);
        assert!((report.bellman_residual - 0.0088767959).abs() < 1e-8);
    }

    #[test]
    fn verify_mfe_rejects_uniform_play() {
        let model = malware_model();
        let mu = Distribution::new(vec![0.5, 0.5]).unwrap();
        let report = verify_mfe(&model, &mu, &Policy::uniform(2, 2), 0.02).unwrap();
        assert!(!report.pass, "uniform play at uniform mu is not an equilibrium");
        assert!((report.invariance_residual - 0.025).abs() < 1e-12);
    }

    #[test]
    fn verify_mfe_zero_cost_accepts_any_invariant_pair() {
        let mut raw = malware_raw();
        for x in &mut raw.cost {
            for a in x.iter_mut() {
                for z in a.iter_mut() {
                    *z = 0.0;
                }
            }
        }
        // Identity dynamics so every distribution is invariant.
        for x in 0..2 {
            for a in 0..2 {
                for z in 0..2 {
                    raw.kernel[x][a][z] = if x == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
                }
            }
        }
        let model = validate_model(&raw).unwrap();
        let mu = Distribution::new(vec![0.3, 0.7]).unwrap();
        let report = verify_mfe(&model, &mu, &Policy::uniform(2, 2), 1e-9).unwrap();
        assert!(report.pass, "zero cost makes every invariant pair an equilibrium");
    }

    #[test]
    fn dimension_errors_are_reported() {
        let mdp = malware_reduced();
        let bad_init = Distribution::uniform(3);
        assert!(matches!(
            policy_evaluation(&mdp, &Policy::uniform(2, 2), &bad_init),
            Err(MdpError::DimensionMismatch(_))
        ));
        assert!(matches!(
            occupation_measure(&mdp, &Policy::uniform(3, 2), &Distribution::uniform(2)),
            Err(MdpError::DimensionMismatch(_))
        ));
        assert!(matches!(
            stationary_distribution(&[vec![0.5, 0.6], vec![0.5, 0.5]]),
            Err(MdpError::NonStochasticKernelRow { x: 0, .. })
        ));
    }
}
