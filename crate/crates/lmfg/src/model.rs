//! Game primitives: finite metric state spaces, distributions, policies, and
//! the linear mean-field model with its reductions.
//!
//! The model couples a population of identical agents only through the
//! empirical state distribution. Transition kernel and stage cost are linear
//! in that distribution: each agent samples a peer state z from the
//! empirical measure and then moves according to a primitive kernel
//! pbar(y | x, a, z) while paying cbar(x, a, z). Freezing the population
//! distribution at mu therefore yields an ordinary MDP with
//!
//! ```text
//! p_mu(y | x, a) = sum_z pbar(y | x, a, z) mu(z)
//! c_mu(x, a)     = sum_z cbar(x, a, z) mu(z)
//! ```
//!
//! which is what [`mean_field_reduction`] computes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Mdp, OccupationMeasure};

/// Tolerance for stochasticity of rows supplied as input data.
pub const INPUT_STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance for probability vectors produced by downstream arithmetic.
pub const DISTRIBUTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("kernel row (x={x}, a={a}, z={z}) is not a probability vector (sum {sum})")]
    NonStochasticRow { x: usize, a: usize, z: usize, sum: f64 },
    #[error("cost entry (x={x}, a={a}, z={z}) is negative: {value}")]
    NegativeCost { x: usize, a: usize, z: usize, value: f64 },
    #[error("metric violation involving points ({i}, {j}, {k})")]
    MetricViolation { i: usize, j: usize, k: usize },
    #[error("beta must lie strictly inside (0, 1), got {0}")]
    InvalidBeta(f64),
    #[error("state vector is empty")]
    EmptyVector,
    #[error("state index {index} out of range for {n_states} states")]
    StateIndexOutOfRange { index: usize, n_states: usize },
    #[error("negative mass at flat index {index}: {value}")]
    NegativeMass { index: usize, value: f64 },
    #[error("regularization weight must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("weights do not sum to 1 (sum {sum})")]
    NotADistribution { sum: f64 },
}

/// Every invariant violation found while validating raw model data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelErrors(pub Vec<ModelError>);

impl std::fmt::Display for ModelErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "model validation failed: ")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ModelErrors {}

impl From<ModelError> for ModelErrors {
    fn from(e: ModelError) -> Self {
        ModelErrors(vec![e])
    }
}

/// A finite set of labeled points with a (pseudo)metric given as a dense
/// matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
}

impl FiniteMetricSpace {
    /// Validates symmetry, a zero diagonal, nonnegativity, and the triangle
    /// inequality on every triple.
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self, ModelErrors> {
        let n = labels.len();
        let mut errs = Vec::new();
        if dist.len() != n || dist.iter().any(|row| row.len() != n) {
            errs.push(ModelError::DimensionMismatch(format!(
                "metric must be a {n}x{n} matrix matching the {n} state labels"
            )));
            return Err(ModelErrors(errs));
        }
        for i in 0..n {
            if dist[i][i] != 0.0 {
                errs.push(ModelError::MetricViolation { i, j: i, k: i });
            }
            for j in 0..n {
                if !(dist[i][j] >= 0.0) || !dist[i][j].is_finite() {
                    errs.push(ModelError::MetricViolation { i, j, k: i });
                } else if (dist[i][j] - dist[j][i]).abs() > 1e-12 {
                    errs.push(ModelError::MetricViolation { i, j, k: j });
                }
            }
        }
        if errs.is_empty() {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if dist[i][k] > dist[i][j] + dist[j][k] + 1e-12 {
                            errs.push(ModelError::MetricViolation { i, j, k });
                        }
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(FiniteMetricSpace { labels, dist })
        } else {
            Err(ModelErrors(errs))
        }
    }

    /// The discrete unit metric on n points, labeled "0", "1", ...
    pub fn unit(n: usize) -> Self {
        let labels = (0..n).map(|i| i.to_string()).collect();
        let dist = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        FiniteMetricSpace { labels, dist }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn diam(&self) -> f64 {
        let mut m = 0.0f64;
        for row in &self.dist {
            for &v in row {
                m = m.max(v);
            }
        }
        m
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dist_matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }
}

/// A probability vector over a finite index set.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::EmptyVector);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(ModelError::NegativeMass { index, value: w });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(ModelError::NotADistribution { sum });
        }
        Ok(Distribution { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Distribution { weights: vec![1.0 / n as f64; n] }
    }

    pub fn point_mass(i: usize, n: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        Distribution { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

/// A row-stochastic map from states to distributions over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    rows: Vec<Distribution>,
}

impl Policy {
    pub fn new(rows: Vec<Distribution>) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::EmptyVector);
        }
        let na = rows[0].len();
        if rows.iter().any(|r| r.len() != na) {
            return Err(ModelError::DimensionMismatch(
                "all policy rows must have the same number of actions".to_string(),
            ));
        }
        Ok(Policy { rows })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy { rows: vec![Distribution::uniform(n_actions); n_states] }
    }

    /// The deterministic policy choosing `actions[x]` at state x.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        Policy {
            rows: actions.iter().map(|&a| Distribution::point_mass(a, n_actions)).collect(),
        }
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.rows[x].get(a)
    }

    pub fn row(&self, x: usize) -> &Distribution {
        &self.rows[x]
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn n_actions(&self) -> usize {
        self.rows[0].len()
    }
}

/// Raw, serde-facing model data exactly mirroring the JSON schema: `states`
/// (labels), `metric` (|X| x |X|), `actions` (labels), `beta`, `kernel`
/// (nested `[x][a][z]` rows over the next state), `cost` (`[x][a][z]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModel {
    pub states: Vec<String>,
    pub metric: Vec<Vec<f64>>,
    pub actions: Vec<String>,
    pub beta: f64,
    pub kernel: Vec<Vec<Vec<Vec<f64>>>>,
    pub cost: Vec<Vec<Vec<f64>>>,
}

/// A validated linear mean-field game. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MfgModel {
    states: FiniteMetricSpace,
    actions: Vec<String>,
    /// Flat `[x][a][z][y]`.
    kernel: Vec<f64>,
    /// Flat `[x][a][z]`.
    cost: Vec<f64>,
    beta: f64,
}

/// Checks every model invariant and returns either the validated model or
/// the full list of violations.
pub fn validate_model(raw: &RawModel) -> Result<MfgModel, ModelErrors> {
    let nx = raw.states.len();
    let na = raw.actions.len();
    let mut errs = Vec::new();
    if nx == 0 || na == 0 {
        errs.push(ModelError::DimensionMismatch(
            "model needs at least one state and one action".to_string(),
        ));
        return Err(ModelErrors(errs));
    }
    let states = match FiniteMetricSpace::new(raw.states.clone(), raw.metric.clone()) {
        Ok(s) => Some(s),
        Err(mut e) => {
            errs.append(&mut e.0);
            None
        }
    };
    if !(raw.beta > 0.0 && raw.beta < 1.0) {
        errs.push(ModelError::InvalidBeta(raw.beta));
    }
    let kernel_shape_ok = raw.kernel.len() == nx
        && raw.kernel.iter().all(|ax| {
            ax.len() == na && ax.iter().all(|az| az.len() == nx && az.iter().all(|row| row.len() == nx))
        });
    if !kernel_shape_ok {
        errs.push(ModelError::DimensionMismatch(format!(
            "kernel must have shape [{nx}][{na}][{nx}] with rows of length {nx}"
        )));
    }
    let cost_shape_ok = raw.cost.len() == nx
        && raw.cost.iter().all(|ax| ax.len() == na && ax.iter().all(|az| az.len() == nx));
    if !cost_shape_ok {
        errs.push(ModelError::DimensionMismatch(format!(
            "cost must have shape [{nx}][{na}][{nx}]"
        )));
    }
    let mut kernel = Vec::new();
    let mut cost = Vec::new();
    if kernel_shape_ok && cost_shape_ok {
        kernel.reserve(nx * na * nx * nx);
        cost.reserve(nx * na * nx);
        for x in 0..nx {
            for a in 0..na {
                for z in 0..nx {
                    let row = &raw.kernel[x][a][z];
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
                        || (sum - 1.0).abs() > INPUT_STOCHASTIC_TOL
                    {
                        errs.push(ModelError::NonStochasticRow { x, a, z, sum });
                    }
                    kernel.extend_from_slice(row);
                    let c = raw.cost[x][a][z];
                    if !(c >= 0.0) || !c.is_finite() {
                        errs.push(ModelError::NegativeCost { x, a, z, value: c });
                    }
                    cost.push(c);
                }
            }
        }
    }
    match (errs.is_empty(), states) {
        (true, Some(states)) => Ok(MfgModel {
            states,
            actions: raw.actions.clone(),
            kernel,
            cost,
            beta: raw.beta,
        }),
        _ => Err(ModelErrors(errs)),
    }
}

impl MfgModel {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn space(&self) -> &FiniteMetricSpace {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    /// The kernel row pbar(. | x, a, z) over next states.
    pub fn pbar(&self, x: usize, a: usize, z: usize) -> &[f64] {
        let nx = self.n_states();
        let base = ((x * self.n_actions() + a) * nx + z) * nx;
        &self.kernel[base..base + nx]
    }

    pub fn cbar(&self, x: usize, a: usize, z: usize) -> f64 {
        let nx = self.n_states();
        self.cost[(x * self.n_actions() + a) * nx + z]
    }

    pub fn cbar_max(&self) -> f64 {
        self.cost.iter().fold(0.0f64, |m, &c| m.max(c))
    }

    /// Round-trips back to the raw serde representation.
    pub fn to_raw(&self) -> RawModel {
        let nx = self.n_states();
        let na = self.n_actions();
        let kernel = (0..nx)
            .map(|x| {
                (0..na)
                    .map(|a| (0..nx).map(|z| self.pbar(x, a, z).to_vec()).collect())
                    .collect()
            })
            .collect();
        let cost = (0..nx)
            .map(|x| {
                (0..na)
                    .map(|a| (0..nx).map(|z| self.cbar(x, a, z)).collect())
                    .collect()
            })
            .collect();
        RawModel {
            states: self.states.labels().to_vec(),
            metric: self.states.dist_matrix().to_vec(),
            actions: self.actions.clone(),
            beta: self.beta,
            kernel,
            cost,
        }
    }
}

/// Freezes the population distribution at `mu` and returns the induced MDP
/// with kernel p_mu and cost c_mu. Both are exactly linear in `mu`.
pub fn mean_field_reduction(model: &MfgModel, mu: &Distribution) -> Result<Mdp, ModelError> {
    let nx = model.n_states();
    let na = model.n_actions();
    if mu.len() != nx {
        return Err(ModelError::DimensionMismatch(format!(
            "mu has {} entries, model has {nx} states",
            mu.len()
        )));
    }
    let mut p = vec![0.0; nx * na * nx];
    let mut c = vec![0.0; nx * na];
    for x in 0..nx {
        for a in 0..na {
            let pc = &mut p[(x * na + a) * nx..(x * na + a + 1) * nx];
            let mut cc = 0.0;
            for z in 0..nx {
                let w = mu.get(z);
                if w == 0.0 {
                    continue;
                }
                let row = model.pbar(x, a, z);
                for y in 0..nx {
                    pc[y] += w * row[y];
                }
                cc += w * model.cbar(x, a, z);
            }
            c[x * na + a] = cc;
        }
    }
    Mdp::new(nx, na, p, c, model.beta())
        .map_err(|e| ModelError::DimensionMismatch(format!("reduction produced an invalid MDP: {e}")))
}

/// The empirical measure of a vector of state indices, normalized by the
/// vector length so the result is a probability measure.
pub fn empirical_measure(states: &[usize], n_states: usize) -> Result<Distribution, ModelError> {
    if states.is_empty() {
        return Err(ModelError::EmptyVector);
    }
    let mut weights = vec![0.0; n_states];
    let w = 1.0 / states.len() as f64;
    for &s in states {
        if s >= n_states {
            return Err(ModelError::StateIndexOutOfRange { index: s, n_states });
        }
        weights[s] += w;
    }
    Ok(Distribution { weights })
}

/// The population flow matrix p_zeta(y | x) = sum_{(s,a)} pbar(y | s, a, x)
/// zeta(s, a), one row per conditioning state x. Each row sums to the total
/// mass of zeta.
pub fn population_kernel(
    model: &MfgModel,
    zeta: &OccupationMeasure,
) -> Result<Vec<Vec<f64>>, ModelError> {
    let nx = model.n_states();
    let na = model.n_actions();
    if zeta.n_states() != nx || zeta.n_actions() != na {
        return Err(ModelError::DimensionMismatch(format!(
            "occupation measure is {}x{}, model is {nx}x{na}",
            zeta.n_states(),
            zeta.n_actions()
        )));
    }
    for (index, &w) in zeta.weights().iter().enumerate() {
        if !(w >= 0.0) {
            return Err(ModelError::NegativeMass { index, value: w });
        }
    }
    let mut out = vec![vec![0.0; nx]; nx];
    for s in 0..nx {
        for a in 0..na {
            let w = zeta.get(s, a);
            if w == 0.0 {
                continue;
            }
            for x in 0..nx {
                let row = model.pbar(s, a, x);
                for y in 0..nx {
                    out[x][y] += w * row[y];
                }
            }
        }
    }
    Ok(out)
}

/// Stage cost of a mixed action u at (x, z) with negative-entropy
/// regularization weight lambda: sum_a cbar(x,a,z) u(a) + lambda * sum_a
/// u(a) ln u(a), with 0 ln 0 = 0.
pub fn regularized_stage_cost(
    model: &MfgModel,
    lambda_reg: f64,
    mixed_action: &Distribution,
    x: usize,
    z: usize,
) -> Result<f64, ModelError> {
    if lambda_reg < 0.0 {
        return Err(ModelError::NegativeLambda(lambda_reg));
    }
    let nx = model.n_states();
    if x >= nx {
        return Err(ModelError::StateIndexOutOfRange { index: x, n_states: nx });
    }
    if z >= nx {
        return Err(ModelError::StateIndexOutOfRange { index: z, n_states: nx });
    }
    if mixed_action.len() != model.n_actions() {
        return Err(ModelError::DimensionMismatch(format!(
            "mixed action has {} entries, model has {} actions",
            mixed_action.len(),
            model.n_actions()
        )));
    }
    let mut total = 0.0;
    for a in 0..model.n_actions() {
        let u = mixed_action.get(a);
        total += model.cbar(x, a, z) * u;
        if u > 0.0 {
            total += lambda_reg * u * u.ln();
        }
    }
    Ok(total)
}
