//! The two-player generalized Nash reformulation of the stationary
//! equilibrium problem.
//!
//! Player one picks a discounted occupation measure zeta, player two picks a
//! population distribution mu; their KKT systems are stacked into one square
//! map
//!
//! ```text
//! H(z) = ( F(z); h(z) + s; multipliers .* s )
//! ```
//!
//! over z = (zeta, mu, lambda1, lambda2, gamma1, gamma2, gamma3, slacks),
//! whose interior roots are exactly the stationary mean-field equilibria.
//! This module evaluates F, h, H, the exact analytic Jacobian of H, and the
//! log-barrier potential that the interior-point solver descends. The
//! Jacobian is assembled block by block from the closed forms; every block
//! is cross-checked against finite differences in the test suite, which is
//! cheap insurance given that H is at most quadratic in z.

use thiserror::Error;

use crate::model::MfgModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GnepError {
    #[error("{what}: got length {got}, expected {expected}")]
    DimensionMismatch { what: String, got: usize, expected: usize },
    #[error("H image component {index} = {value} is not strictly positive")]
    NotInteriorImage { index: usize, value: f64 },
}

/// Problem dimensions: n primal variables (zeta and mu stacked) and m
/// inequality constraints, so H maps into dimension n + 2m.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GnepDims {
    pub nx: usize,
    pub na: usize,
    pub n: usize,
    pub m: usize,
}

impl GnepDims {
    pub fn new(nx: usize, na: usize) -> Self {
        let n = nx * na + nx;
        let m = nx * na + 3 * nx + 1;
        GnepDims { nx, na, n, m }
    }

    pub fn of_model(model: &MfgModel) -> Self {
        GnepDims::new(model.n_states(), model.n_actions())
    }

    /// Output length of H: n + 2m.
    pub fn h_len(&self) -> usize {
        self.n + 2 * self.m
    }

    // Flat layout of z: zeta, mu, lambda1, lambda2, gamma1, gamma2, gamma3,
    // slack_lambda, slack_gamma. Multipliers occupy n..n+m in the same order
    // as the constraints they pair with, slacks occupy n+m..n+2m.
    pub fn col_zeta(&self, x: usize, a: usize) -> usize {
        x * self.na + a
    }

    pub fn col_mu(&self, z: usize) -> usize {
        self.nx * self.na + z
    }

    pub fn col_mult(&self, i: usize) -> usize {
        self.n + i
    }

    pub fn col_slack(&self, i: usize) -> usize {
        self.n + self.m + i
    }
}

/// One point of the stacked KKT system. Multipliers and slacks must stay
/// strictly positive along interior-point iterates; zeta and mu live in the
/// ambient space, their nonnegativity is enforced through h.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub zeta: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: f64,
    pub gamma3: Vec<f64>,
    pub slack_lambda: Vec<f64>,
    pub slack_gamma: Vec<f64>,
}

impl KktPoint {
    pub fn from_flat(dims: &GnepDims, z: &[f64]) -> Result<Self, GnepError> {
        if z.len() != dims.h_len() {
            return Err(GnepError::DimensionMismatch {
                what: "flat KKT vector".to_string(),
                got: z.len(),
                expected: dims.h_len(),
            });
        }
        let (nx, na, n, m) = (dims.nx, dims.na, dims.n, dims.m);
        let nxa = nx * na;
        let mut at = 0usize;
        let mut take = |len: usize| {
            let v = z[at..at + len].to_vec();
            at += len;
            v
        };
        let zeta = take(nxa);
        let mu = take(nx);
        let lambda1 = take(nxa);
        let lambda2 = take(nx);
        let gamma1 = take(nx);
        let gamma2 = take(1)[0];
        let gamma3 = take(nx);
        let slack_lambda = take(nxa + nx);
        let slack_gamma = take(2 * nx + 1);
        debug_assert_eq!(at, n + 2 * m);
        Ok(KktPoint {
            zeta,
            mu,
            lambda1,
            lambda2,
            gamma1,
            gamma2,
            gamma3,
            slack_lambda,
            slack_gamma,
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(
            self.zeta.len()
                + self.mu.len()
                + self.lambda1.len()
                + self.lambda2.len()
                + self.gamma1.len()
                + 1
                + self.gamma3.len()
                + self.slack_lambda.len()
                + self.slack_gamma.len(),
        );
        z.extend_from_slice(&self.zeta);
        z.extend_from_slice(&self.mu);
        z.extend_from_slice(&self.lambda1);
        z.extend_from_slice(&self.lambda2);
        z.extend_from_slice(&self.gamma1);
        z.push(self.gamma2);
        z.extend_from_slice(&self.gamma3);
        z.extend_from_slice(&self.slack_lambda);
        z.extend_from_slice(&self.slack_gamma);
        z
    }

    /// The multiplier block (lambda1, lambda2, gamma1, gamma2, gamma3) in
    /// constraint order.
    pub fn multipliers(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(
            self.lambda1.len() + self.lambda2.len() + self.gamma1.len() + 1 + self.gamma3.len(),
        );
        v.extend_from_slice(&self.lambda1);
        v.extend_from_slice(&self.lambda2);
        v.extend_from_slice(&self.gamma1);
        v.push(self.gamma2);
        v.extend_from_slice(&self.gamma3);
        v
    }

    /// The slack block (slack_lambda, slack_gamma) in constraint order.
    pub fn slacks(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.slack_lambda.len() + self.slack_gamma.len());
        v.extend_from_slice(&self.slack_lambda);
        v.extend_from_slice(&self.slack_gamma);
        v
    }
}

/// Player two's cost g(zeta, mu) with the derivatives the Jacobian assembly
/// needs. All callbacks receive raw slices because solver iterates are not
/// normalized distributions.
pub trait PlayerTwoCost {
    fn value(&self, zeta: &[f64], mu: &[f64]) -> f64;
    /// d g / d mu(x), length |X|.
    fn grad_mu(&self, zeta: &[f64], mu: &[f64]) -> Vec<f64>;
    /// d^2 g / d mu(x) d mu(z), row-major |X| x |X|.
    fn hess_mu(&self, zeta: &[f64], mu: &[f64]) -> Vec<f64>;
    /// d/d zeta(s,a) of grad_mu(x), row-major |X| x |X·A|.
    fn cross_grad_zeta_of_grad_mu(&self, zeta: &[f64], mu: &[f64]) -> Vec<f64>;
}

/// The default coupling cost: player two pays exactly what the population
/// pays, g(zeta, mu) = <zeta, c_mu> = sum_{x,a,z} cbar(x,a,z) zeta(x,a) mu(z).
#[derive(Debug, Clone)]
pub struct DefaultPlayerTwoCost {
    nx: usize,
    na: usize,
    /// Flat `[x][a][z]`.
    cbar: Vec<f64>,
    sign: f64,
}

/// g(zeta, mu) = <zeta, c_mu>, the §-free statement of "player two's cost is
/// the same as player one's". Bilinear, hence trivially convex in mu.
pub fn default_player_two_cost(model: &MfgModel) -> DefaultPlayerTwoCost {
    build_bilinear_cost(model, 1.0)
}

/// The zero-sum variant g(zeta, mu) = -<zeta, c_mu>. Still linear in mu for
/// fixed zeta, so the convexity requirement on g holds trivially.
pub fn zero_sum_player_two_cost(model: &MfgModel) -> DefaultPlayerTwoCost {
    build_bilinear_cost(model, -1.0)
}

fn build_bilinear_cost(model: &MfgModel, sign: f64) -> DefaultPlayerTwoCost {
    let nx = model.n_states();
    let na = model.n_actions();
    let mut cbar = Vec::with_capacity(nx * na * nx);
    for x in 0..nx {
        for a in 0..na {
            for z in 0..nx {
                cbar.push(model.cbar(x, a, z));
            }
        }
    }
    DefaultPlayerTwoCost { nx, na, cbar, sign }
}

impl PlayerTwoCost for DefaultPlayerTwoCost {
    fn value(&self, zeta: &[f64], mu: &[f64]) -> f64 {
        let mut total = 0.0;
        for sa in 0..self.nx * self.na {
            let w = zeta[sa];
            if w == 0.0 {
                continue;
            }
            let row = &self.cbar[sa * self.nx..(sa + 1) * self.nx];
            total += w * row.iter().zip(mu).map(|(&c, &m)| c * m).sum::<f64>();
        }
        self.sign * total
    }

    fn grad_mu(&self, zeta: &[f64], _mu: &[f64]) -> Vec<f64> {
        (0..self.nx)
            .map(|x| {
                self.sign
                    * (0..self.nx * self.na)
                        .map(|sa| self.cbar[sa * self.nx + x] * zeta[sa])
                        .sum::<f64>()
            })
            .collect()
    }

    fn hess_mu(&self, _zeta: &[f64], _mu: &[f64]) -> Vec<f64> {
        vec![0.0; self.nx * self.nx]
    }

    fn cross_grad_zeta_of_grad_mu(&self, _zeta: &[f64], _mu: &[f64]) -> Vec<f64> {
        let nxa = self.nx * self.na;
        let mut out = vec![0.0; self.nx * nxa];
        for x in 0..self.nx {
            for sa in 0..nxa {
                out[x * nxa + sa] = self.sign * self.cbar[sa * self.nx + x];
            }
        }
        out
    }
}

/// c_mu(x, a) = sum_z cbar(x,a,z) mu(z) for a raw (not necessarily
/// normalized) mu, flat `[x][a]`.
fn c_mu_raw(model: &MfgModel, mu: &[f64]) -> Vec<f64> {
    let nx = model.n_states();
    let na = model.n_actions();
    let mut out = vec![0.0; nx * na];
    for x in 0..nx {
        for a in 0..na {
            out[x * na + a] = (0..nx).map(|z| model.cbar(x, a, z) * mu[z]).sum();
        }
    }
    out
}

/// p_mu(y | x, a) = sum_z pbar(y|x,a,z) mu(z) for raw mu, flat `[x][a][y]`.
fn p_mu_raw(model: &MfgModel, mu: &[f64]) -> Vec<f64> {
    let nx = model.n_states();
    let na = model.n_actions();
    let mut out = vec![0.0; nx * na * nx];
    for x in 0..nx {
        for a in 0..na {
            let base = (x * na + a) * nx;
            for z in 0..nx {
                let w = mu[z];
                if w == 0.0 {
                    continue;
                }
                for (y, &p) in model.pbar(x, a, z).iter().enumerate() {
                    out[base + y] += w * p;
                }
            }
        }
    }
    out
}

/// p_zeta(y | x) = sum_{s,a} pbar(y|s,a,x) zeta(s,a) for raw zeta, flat
/// `[x][y]`.
fn p_zeta_raw(model: &MfgModel, zeta: &[f64]) -> Vec<f64> {
    let nx = model.n_states();
    let na = model.n_actions();
    let mut out = vec![0.0; nx * nx];
    for s in 0..nx {
        for a in 0..na {
            let w = zeta[s * na + a];
            if w == 0.0 {
                continue;
            }
            for x in 0..nx {
                for (y, &p) in model.pbar(s, a, x).iter().enumerate() {
                    out[x * nx + y] += w * p;
                }
            }
        }
    }
    out
}

fn check_dims(model: &MfgModel, z: &KktPoint) -> Result<GnepDims, GnepError> {
    let dims = GnepDims::of_model(model);
    let nxa = dims.nx * dims.na;
    let checks = [
        ("zeta", z.zeta.len(), nxa),
        ("mu", z.mu.len(), dims.nx),
        ("lambda1", z.lambda1.len(), nxa),
        ("lambda2", z.lambda2.len(), dims.nx),
        ("gamma1", z.gamma1.len(), dims.nx),
        ("gamma3", z.gamma3.len(), dims.nx),
        ("slack_lambda", z.slack_lambda.len(), nxa + dims.nx),
        ("slack_gamma", z.slack_gamma.len(), 2 * dims.nx + 1),
    ];
    for (what, got, expected) in checks {
        if got != expected {
            return Err(GnepError::DimensionMismatch { what: what.to_string(), got, expected });
        }
    }
    Ok(dims)
}

/// The stacked first-order residuals of both players: the first |X·A|
/// entries are player one's Bellman-type stationarity
/// c_mu(x,a) - lambda1(x,a) - lambda2(x) + beta sum_y lambda2(y) p_mu(y|x,a),
/// the last |X| entries are player two's stationarity
/// dg/dmu(x) - gamma1(x) - gamma2 - gamma3(x) + sum_y gamma3(y) p_zeta(y|x).
pub fn eval_f(
    model: &MfgModel,
    g: &dyn PlayerTwoCost,
    z: &KktPoint,
) -> Result<Vec<f64>, GnepError> {
    let dims = check_dims(model, z)?;
    let (nx, na) = (dims.nx, dims.na);
    let beta = model.beta();
    let c_mu = c_mu_raw(model, &z.mu);
    let p_mu = p_mu_raw(model, &z.mu);
    let p_zeta = p_zeta_raw(model, &z.zeta);
    let grad = g.grad_mu(&z.zeta, &z.mu);
    let mut f = Vec::with_capacity(dims.n);
    for x in 0..nx {
        for a in 0..na {
            let drift: f64 = (0..nx).map(|y| z.lambda2[y] * p_mu[(x * na + a) * nx + y]).sum();
            f.push(c_mu[x * na + a] - z.lambda1[x * na + a] - z.lambda2[x] + beta * drift);
        }
    }
    for x in 0..nx {
        let drift: f64 = (0..nx).map(|y| z.gamma3[y] * p_zeta[x * nx + y]).sum();
        f.push(grad[x] - z.gamma1[x] - z.gamma2 - z.gamma3[x] + drift);
    }
    Ok(f)
}

/// The stacked inequality constraints h = (h1; h2) with
/// h1 = (-zeta; -zeta_hat + (1-beta) mu + beta zeta p_mu) and
/// h2 = (-mu; -<mu,1> + 1; -mu + zeta p_mu), where
/// zeta p_mu(y) = sum_{x,a} p_mu(y|x,a) zeta(x,a). Feasible points satisfy
/// h <= 0 componentwise.
pub fn eval_h(model: &MfgModel, z: &KktPoint) -> Result<Vec<f64>, GnepError> {
    let dims = check_dims(model, z)?;
    let (nx, na) = (dims.nx, dims.na);
    let beta = model.beta();
    let p_mu = p_mu_raw(model, &z.mu);
    let flow: Vec<f64> = (0..nx)
        .map(|y| {
            (0..nx * na).map(|sa| p_mu[sa * nx + y] * z.zeta[sa]).sum()
        })
        .collect();
    let zeta_hat: Vec<f64> =
        (0..nx).map(|x| z.zeta[x * na..(x + 1) * na].iter().sum()).collect();
    let mut h = Vec::with_capacity(dims.m);
    for sa in 0..nx * na {
        h.push(-z.zeta[sa]);
    }
    for y in 0..nx {
        h.push(-zeta_hat[y] + (1.0 - beta) * z.mu[y] + beta * flow[y]);
    }
    for y in 0..nx {
        h.push(-z.mu[y]);
    }
    h.push(1.0 - z.mu.iter().sum::<f64>());
    for y in 0..nx {
        h.push(-z.mu[y] + flow[y]);
    }
    Ok(h)
}

/// The full root-finding map H(z) = (F; h + s; multipliers .* s), where the
/// i-th multiplier pairs with the i-th slack in the frozen constraint order
/// (lambda1, lambda2, gamma1, gamma2, gamma3).
pub fn eval_big_h(
    model: &MfgModel,
    g: &dyn PlayerTwoCost,
    z: &KktPoint,
) -> Result<Vec<f64>, GnepError> {
    let dims = check_dims(model, z)?;
    let f = eval_f(model, g, z)?;
    let h = eval_h(model, z)?;
    let mult = z.multipliers();
    let s = z.slacks();
    let mut out = Vec::with_capacity(dims.h_len());
    out.extend_from_slice(&f);
    for i in 0..dims.m {
        out.push(h[i] + s[i]);
    }
    for i in 0..dims.m {
        out.push(mult[i] * s[i]);
    }
    Ok(out)
}

/// The exact analytic Jacobian of H as a dense row-major square matrix of
/// size n + 2m.
pub fn jacobian_big_h(
    model: &MfgModel,
    g: &dyn PlayerTwoCost,
    z: &KktPoint,
) -> Result<Vec<f64>, GnepError> {
    let dims = check_dims(model, z)?;
    let (nx, na) = (dims.nx, dims.na);
    let nxa = nx * na;
    let nn = dims.h_len();
    let beta = model.beta();
    let p_mu = p_mu_raw(model, &z.mu);
    let p_zeta = p_zeta_raw(model, &z.zeta);
    let hess = g.hess_mu(&z.zeta, &z.mu);
    let cross = g.cross_grad_zeta_of_grad_mu(&z.zeta, &z.mu);
    let mult = z.multipliers();
    let s = z.slacks();
    let mut jac = vec![0.0; nn * nn];

    // F1 rows: d/dmu(z') = cbar(x,a,z') + beta sum_y lambda2(y) pbar(y|x,a,z'),
    // d/dlambda1 = -Id, d/dlambda2(y) = beta p_mu(y|x,a) - delta_{y,x}.
    for x in 0..nx {
        for a in 0..na {
            let row = (x * na + a) * nn;
            for zp in 0..nx {
                let pbar = model.pbar(x, a, zp);
                let drift: f64 = (0..nx).map(|y| z.lambda2[y] * pbar[y]).sum();
                jac[row + dims.col_mu(zp)] = model.cbar(x, a, zp) + beta * drift;
            }
            jac[row + dims.col_mult(x * na + a)] = -1.0;
            for y in 0..nx {
                let mut v = beta * p_mu[(x * na + a) * nx + y];
                if y == x {
                    v -= 1.0;
                }
                jac[row + dims.col_mult(nxa + y)] = v;
            }
        }
    }

    // F2 rows: d/dzeta(s,a) = cross(x;(s,a)) + sum_y gamma3(y) pbar(y|s,a,x),
    // d/dmu = hess row, d/dgamma1 = -Id, d/dgamma2 = -1,
    // d/dgamma3(y) = p_zeta(y|x) - delta_{y,x}.
    for x in 0..nx {
        let row = (nxa + x) * nn;
        for sp in 0..nx {
            for a in 0..na {
                let pbar = model.pbar(sp, a, x);
                let drift: f64 = (0..nx).map(|y| z.gamma3[y] * pbar[y]).sum();
                jac[row + dims.col_zeta(sp, a)] = cross[x * nxa + sp * na + a] + drift;
            }
        }
        for zp in 0..nx {
            jac[row + dims.col_mu(zp)] = hess[x * nx + zp];
        }
        jac[row + dims.col_mult(nxa + nx + x)] = -1.0;
        jac[row + dims.col_mult(nxa + 2 * nx)] = -1.0;
        for y in 0..nx {
            let mut v = p_zeta[x * nx + y];
            if y == x {
                v -= 1.0;
            }
            jac[row + dims.col_mult(nxa + 2 * nx + 1 + y)] = v;
        }
    }

    // Constraint rows h + s. Every row i has +1 in its own slack column.
    // h1a: -zeta.
    for sa in 0..nxa {
        let row = (dims.n + sa) * nn;
        jac[row + sa] = -1.0;
        jac[row + dims.col_slack(sa)] = 1.0;
    }
    // h1b: -zeta_hat(y) + (1-beta) mu(y) + beta (zeta p_mu)(y).
    for y in 0..nx {
        let row = (dims.n + nxa + y) * nn;
        for sp in 0..nx {
            for a in 0..na {
                let mut v = beta * p_mu[(sp * na + a) * nx + y];
                if sp == y {
                    v -= 1.0;
                }
                jac[row + dims.col_zeta(sp, a)] = v;
            }
        }
        for zp in 0..nx {
            let mut v = beta * p_zeta[zp * nx + y];
            if zp == y {
                v += 1.0 - beta;
            }
            jac[row + dims.col_mu(zp)] = v;
        }
        jac[row + dims.col_slack(nxa + y)] = 1.0;
    }
    // h2a: -mu.
    for y in 0..nx {
        let row = (dims.n + nxa + nx + y) * nn;
        jac[row + dims.col_mu(y)] = -1.0;
        jac[row + dims.col_slack(nxa + nx + y)] = 1.0;
    }
    // h2b: 1 - <mu, 1>.
    {
        let row = (dims.n + nxa + 2 * nx) * nn;
        for zp in 0..nx {
            jac[row + dims.col_mu(zp)] = -1.0;
        }
        jac[row + dims.col_slack(nxa + 2 * nx)] = 1.0;
    }
    // h2c: -mu(y) + (zeta p_mu)(y); note the flow term carries no beta here.
    for y in 0..nx {
        let row = (dims.n + nxa + 2 * nx + 1 + y) * nn;
        for sp in 0..nx {
            for a in 0..na {
                jac[row + dims.col_zeta(sp, a)] = p_mu[(sp * na + a) * nx + y];
            }
        }
        for zp in 0..nx {
            let mut v = p_zeta[zp * nx + y];
            if zp == y {
                v -= 1.0;
            }
            jac[row + dims.col_mu(zp)] = v;
        }
        jac[row + dims.col_slack(nxa + 2 * nx + 1 + y)] = 1.0;
    }

    // Complementarity rows: d(mult_i s_i) has exactly two nonzeros.
    for i in 0..dims.m {
        let row = (dims.n + dims.m + i) * nn;
        jac[row + dims.col_mult(i)] = s[i];
        jac[row + dims.col_slack(i)] = mult[i];
    }
    Ok(jac)
}

/// The merit potential p(u, v) = K log(|u|^2 + |v|^2) - sum_j log v_j over a
/// value Hval of H, split as u = first n components, v = last 2m. Finite
/// exactly on the interior image v > 0.
pub fn potential(hval: &[f64], dims: &GnepDims, kparam: f64) -> Result<f64, GnepError> {
    if hval.len() != dims.h_len() {
        return Err(GnepError::DimensionMismatch {
            what: "H value".to_string(),
            got: hval.len(),
            expected: dims.h_len(),
        });
    }
    let (u, v) = hval.split_at(dims.n);
    for (i, &vi) in v.iter().enumerate() {
        if !(vi > 0.0) {
            return Err(GnepError::NotInteriorImage { index: dims.n + i, value: vi });
        }
    }
    let s: f64 = u.iter().chain(v).map(|&x| x * x).sum();
    let barrier: f64 = v.iter().map(|&x| x.ln()).sum();
    Ok(kparam * s.ln() - barrier)
}

/// Gradient of psi(z) = potential(H(z)) by the chain rule: nabla psi =
/// J_H(z)^T nabla p(H(z)) with nabla p as in the potential definition.
pub fn grad_potential(
    model: &MfgModel,
    g: &dyn PlayerTwoCost,
    z: &KktPoint,
    kparam: f64,
) -> Result<Vec<f64>, GnepError> {
    let dims = check_dims(model, z)?;
    let hval = eval_big_h(model, g, z)?;
    let gp = grad_potential_image(&hval, &dims, kparam)?;
    let jac = jacobian_big_h(model, g, z)?;
    let nn = dims.h_len();
    let mut out = vec![0.0; nn];
    for r in 0..nn {
        let w = gp[r];
        if w == 0.0 {
            continue;
        }
        let row = &jac[r * nn..(r + 1) * nn];
        for (c, &jv) in row.iter().enumerate() {
            out[c] += w * jv;
        }
    }
    Ok(out)
}

/// nabla p at a point of the image space: 2K u_i / s for the first n
/// components and 2K v_j / s - 1/v_j for the barrier block, s = |u|^2+|v|^2.
pub(crate) fn grad_potential_image(
    hval: &[f64],
    dims: &GnepDims,
    kparam: f64,
) -> Result<Vec<f64>, GnepError> {
    let (u, v) = hval.split_at(dims.n);
    for (i, &vi) in v.iter().enumerate() {
        if !(vi > 0.0) {
            return Err(GnepError::NotInteriorImage { index: dims.n + i, value: vi });
        }
    }
    let s: f64 = u.iter().chain(v.iter()).map(|&x| x * x).sum();
    let mut gp = Vec::with_capacity(hval.len());
    for &ui in u {
        gp.push(2.0 * kparam * ui / s);
    }
    for &vi in v {
        gp.push(2.0 * kparam * vi / s - 1.0 / vi);
    }
    Ok(gp)
}
