//! Closed-form error bounds for approximating the N-agent game by its
//! mean-field limit: Lipschitz-constant propagation through the fixed-point
//! operators, covering numbers for the dual Wasserstein function class,
//! empirical-measure convergence rates, and the per-agent suboptimality
//! bound `eps_N = Theta1 + Theta2`.
//!
//! Everything here is plain arithmetic over a small bag of constants
//! ([`LipschitzProfile`]). The constants are astronomically conservative by
//! design, so the module is explicit about failure: quantities that are
//! undefined when a hypothesis fails come back as NaN next to an assumption
//! flag, covering numbers that overflow come back as `+inf`, and the final
//! bound evaluators refuse outright rather than report a number whose
//! derivation does not apply.

use std::fmt;
use std::sync::Arc;

use serde::ser::Serializer;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Distribution, FiniteMetricSpace, MfgModel};
use crate::transport;

/// Natural-log threshold beyond which a covering bound is reported as +inf.
const LN_OVERFLOW: f64 = 700.0;

/// Largest ball size for which the doubling constant uses exact set cover;
/// larger balls fall back to a greedy cover, which can only overestimate the
/// constant (the conservative direction for covering bounds).
const MAX_EXACT_COVER: usize = 16;

/// Cost differences at metric distance zero below this tolerance count as
/// ties instead of forcing an infinite Lipschitz constant.
const ZERO_DIST_COST_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("discounted state coupling is expansive: beta*K1 = {value} >= 1")]
    ContractionViolation { value: f64 },
    #[error("the N-agent value Lipschitz system is unsolvable at N = {n}: {what} = {value}")]
    AssumptionFViolation { n: usize, what: String, value: f64 },
    #[error("N = {n} is too small for the requested constants")]
    NTooSmall { n: usize },
    #[error("assumption ({which}) fails: {what} = {value}")]
    AssumptionViolation { which: char, what: String, value: f64 },
    #[error("invalid parameter: {what}")]
    InvalidParameter { what: String },
}

/// Maps value-function Lipschitz constants `(R1, R2, R3)` to the pair
/// `(Lbar1, Lbar2)` bounding how the action gradient of the one-step
/// best-response objective moves with the state and with the measure.
pub type LFun = Arc<dyn Fn(f64, f64, f64) -> (f64, f64) + Send + Sync>;

/// Inputs for [`sufficient_l`]: gradient-level Lipschitz constants of the
/// stage cost (`l1g`, `l2g`) and of the kernel density (`k1g`, `k2g`), the
/// Euclidean-to-sup norm constant on actions (`c2inf`), and the two mass
/// integrals of the density gradient and of the distance to the base point.
#[derive(Debug, Clone, Copy)]
pub struct DensityParams {
    pub l1g: f64,
    pub l2g: f64,
    pub k1g: f64,
    pub k2g: f64,
    pub c2inf: f64,
    pub grad_mass: f64,
    pub dist_mass: f64,
}

/// The generic sufficient construction for the gradient-sensitivity
/// callback: under a strongly convex stage cost with a smooth kernel
/// density,
///
/// ```text
/// Lbar1(R1, R2, R3) = l1g        + beta*(R3*grad_mass + k1g*R1*dist_mass)
/// Lbar2(R1, R2, R3) = l2g*c2inf  + beta*(R2*grad_mass + k2g*c2inf*R1*dist_mass)
/// ```
///
/// These constants are deliberately crude; problem-specific callbacks are
/// usually much tighter.
pub fn sufficient_l(params: DensityParams, beta: f64) -> LFun {
    Arc::new(move |r1, r2, r3| {
        let first = params.l1g + damp(beta, r3 * params.grad_mass + params.k1g * r1 * params.dist_mass);
        let second = params.l2g * params.c2inf
            + damp(beta, r2 * params.grad_mass + params.k2g * params.c2inf * r1 * params.dist_mass);
        (first, second)
    })
}

/// The Lipschitz data of a model: cost slopes `(L1, L2, L3)` in state,
/// action, and measure argument; kernel W1 slopes `(K1, K2, K3)`; the
/// strong-convexity modulus `rho` of the best-response objective in the
/// action; metric geometry (`diam`, doubling dimension `ddim`); the ceiling
/// `kclass >= max(cbar_max, diam)` of the dual function class; and the
/// gradient-sensitivity callback `lfun`.
#[derive(Clone)]
pub struct LipschitzProfile {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub rho: f64,
    pub diam: f64,
    pub ddim: f64,
    pub cbar_max: f64,
    pub kclass: f64,
    pub lfun: LFun,
}

impl LipschitzProfile {
    /// Checks the profile invariants: every constant finite and nonnegative,
    /// `rho` strictly positive, and `kclass` dominating both the cost
    /// ceiling and the diameter.
    pub fn validate(&self) -> Result<(), BoundsError> {
        let named = [
            ("L1", self.l1),
            ("L2", self.l2),
            ("L3", self.l3),
            ("K1", self.k1),
            ("K2", self.k2),
            ("K3", self.k3),
            ("rho", self.rho),
            ("diam", self.diam),
            ("ddim", self.ddim),
            ("cbar_max", self.cbar_max),
            ("Kclass", self.kclass),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(BoundsError::InvalidParameter {
                    what: format!("{name} must be finite and nonnegative, got {v}"),
                });
            }
        }
        if self.rho <= 0.0 {
            return Err(BoundsError::InvalidParameter {
                what: format!("rho must be strictly positive, got {}", self.rho),
            });
        }
        if self.kclass + 1e-12 < self.cbar_max.max(self.diam) {
            return Err(BoundsError::InvalidParameter {
                what: format!(
                    "Kclass = {} must dominate max(cbar_max, diam) = {}",
                    self.kclass,
                    self.cbar_max.max(self.diam)
                ),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for LipschitzProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzProfile")
            .field("l1", &self.l1)
            .field("l2", &self.l2)
            .field("l3", &self.l3)
            .field("k1", &self.k1)
            .field("k2", &self.k2)
            .field("k3", &self.k3)
            .field("rho", &self.rho)
            .field("diam", &self.diam)
            .field("ddim", &self.ddim)
            .field("cbar_max", &self.cbar_max)
            .field("kclass", &self.kclass)
            .field("lfun", &"<callback>")
            .finish()
    }
}

/// Estimates every profile constant of a finite model by exact enumeration,
/// with the discrete unit metric on actions. See
/// [`estimate_lipschitz_with`] for the conventions.
pub fn estimate_lipschitz(model: &MfgModel) -> LipschitzProfile {
    let na = model.n_actions();
    let unit: Vec<Vec<f64>> = (0..na)
        .map(|i| (0..na).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
        .collect();
    estimate_lipschitz_with(model, &unit).expect("the unit action metric is valid")
}

/// Estimates the Lipschitz profile under a caller-supplied action metric
/// (square, zero diagonal, symmetric, strictly positive off the diagonal).
///
/// The cost slopes are exact maxima of difference quotients over all pairs
/// varying one argument; the kernel slopes divide exact W1 distances of
/// kernel rows by the same argument distances. A pair of distinct states at
/// metric distance zero with different outcomes yields an infinite
/// constant. Conventions that enumeration cannot decide are filled with
/// documented defaults: `rho = 1` (the modulus belongs to the regularizer,
/// not to the model) and `lfun` constant at `(L1, L3)`, a value-level proxy
/// for the gradient-level constants, which do not exist on a finite action
/// set. Callers with a smooth action embedding should override both.
pub fn estimate_lipschitz_with(
    model: &MfgModel,
    action_metric: &[Vec<f64>],
) -> Result<LipschitzProfile, BoundsError> {
    let nx = model.n_states();
    let na = model.n_actions();
    if action_metric.len() != na || action_metric.iter().any(|row| row.len() != na) {
        return Err(BoundsError::InvalidParameter {
            what: format!("action metric must be {na}x{na}"),
        });
    }
    for i in 0..na {
        for j in 0..na {
            let d = action_metric[i][j];
            if !d.is_finite() || d < 0.0 {
                return Err(BoundsError::InvalidParameter {
                    what: format!("action metric entry ({i}, {j}) = {d} is not a distance"),
                });
            }
            if (d - action_metric[j][i]).abs() > 1e-12 {
                return Err(BoundsError::InvalidParameter {
                    what: format!("action metric is asymmetric at ({i}, {j})"),
                });
            }
            if i == j && d != 0.0 {
                return Err(BoundsError::InvalidParameter {
                    what: format!("action metric diagonal ({i}, {i}) = {d} is nonzero"),
                });
            }
            if i != j && d == 0.0 {
                return Err(BoundsError::InvalidParameter {
                    what: format!("distinct actions {i} and {j} are at distance zero"),
                });
            }
        }
    }

    let space = model.space();
    let (mut l1, mut l2, mut l3) = (0.0f64, 0.0f64, 0.0f64);
    let (mut k1, mut k2, mut k3) = (0.0f64, 0.0f64, 0.0f64);
    // Vary the current state.
    for a in 0..na {
        for z in 0..nx {
            for x in 0..nx {
                for x2 in (x + 1)..nx {
                    let dist = space.d(x, x2);
                    l1 = l1.max(slope((model.cbar(x, a, z) - model.cbar(x2, a, z)).abs(), dist));
                    k1 = k1.max(slope(kernel_w1(model, (x, a, z), (x2, a, z)), dist));
                }
            }
        }
    }
    // Vary the action.
    for x in 0..nx {
        for z in 0..nx {
            for a in 0..na {
                for a2 in (a + 1)..na {
                    let dist = action_metric[a][a2];
                    l2 = l2.max(slope((model.cbar(x, a, z) - model.cbar(x, a2, z)).abs(), dist));
                    k2 = k2.max(slope(kernel_w1(model, (x, a, z), (x, a2, z)), dist));
                }
            }
        }
    }
    // Vary the sampled population state.
    for x in 0..nx {
        for a in 0..na {
            for z in 0..nx {
                for z2 in (z + 1)..nx {
                    let dist = space.d(z, z2);
                    l3 = l3.max(slope((model.cbar(x, a, z) - model.cbar(x, a, z2)).abs(), dist));
                    k3 = k3.max(slope(kernel_w1(model, (x, a, z), (x, a, z2)), dist));
                }
            }
        }
    }

    let diam = space.diam();
    let cbar_max = model.cbar_max();
    let (pl1, pl3) = (l1, l3);
    Ok(LipschitzProfile {
        l1,
        l2,
        l3,
        k1,
        k2,
        k3,
        rho: 1.0,
        diam,
        ddim: doubling_dimension(space),
        cbar_max,
        kclass: cbar_max.max(diam),
        lfun: Arc::new(move |_, _, _| (pl1, pl3)),
    })
}

fn slope(diff: f64, dist: f64) -> f64 {
    if dist > 0.0 {
        diff / dist
    } else if diff > ZERO_DIST_COST_TOL {
        f64::INFINITY
    } else {
        0.0
    }
}

fn kernel_w1(model: &MfgModel, lhs: (usize, usize, usize), rhs: (usize, usize, usize)) -> f64 {
    let p = Distribution::new(model.pbar(lhs.0, lhs.1, lhs.2).to_vec())
        .expect("validated kernel row is a distribution");
    let q = Distribution::new(model.pbar(rhs.0, rhs.1, rhs.2).to_vec())
        .expect("validated kernel row is a distribution");
    transport::w1(&p, &q, model.space()).expect("transport between validated rows")
}

/// The doubling dimension of a finite metric space: log2 of the smallest
/// `lambda` such that every ball of radius `r` is covered by at most
/// `lambda` balls of radius `r/2`, with centers ranging over the whole
/// space. Computed by brute force over the finitely many combinatorially
/// distinct radii (every pairwise distance, its double, and the midpoints
/// between consecutive such values).
pub fn doubling_dimension(space: &FiniteMetricSpace) -> f64 {
    let n = space.len();
    if n <= 1 {
        return 0.0;
    }
    let mut dists = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = space.d(i, j);
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    let mut crit: Vec<f64> = dists.iter().flat_map(|&d| [d, 2.0 * d]).collect();
    crit.sort_by(f64::total_cmp);
    crit.dedup();
    let mut radii = crit.clone();
    for w in crit.windows(2) {
        radii.push(0.5 * (w[0] + w[1]));
    }
    let mut lambda = 1usize;
    for x in 0..n {
        for &r in &radii {
            let ball: Vec<usize> = (0..n).filter(|&y| space.d(x, y) <= r).collect();
            if ball.len() > 1 {
                lambda = lambda.max(min_ball_cover(space, &ball, 0.5 * r));
            }
        }
    }
    (lambda as f64).log2()
}

/// Minimum number of radius-`radius` balls (centers anywhere in the space)
/// covering the given ball members. Exact subset-DP set cover for small
/// balls, greedy otherwise.
fn min_ball_cover(space: &FiniteMetricSpace, ball: &[usize], radius: f64) -> usize {
    let k = ball.len();
    let n = space.len();
    if k <= MAX_EXACT_COVER {
        let mut sets: Vec<usize> = (0..n)
            .map(|c| {
                let mut mask = 0usize;
                for (bit, &y) in ball.iter().enumerate() {
                    if space.d(c, y) <= radius {
                        mask |= 1 << bit;
                    }
                }
                mask
            })
            .filter(|&m| m != 0)
            .collect();
        sets.sort_unstable();
        sets.dedup();
        let full = (1usize << k) - 1;
        let mut dp = vec![u32::MAX; full + 1];
        dp[0] = 0;
        for mask in 1..=full {
            let low = mask.trailing_zeros();
            let mut best = u32::MAX;
            for &s in &sets {
                if s & (1 << low) != 0 {
                    let prev = dp[mask & !s];
                    if prev != u32::MAX {
                        best = best.min(prev + 1);
                    }
                }
            }
            dp[mask] = best;
        }
        dp[full] as usize
    } else {
        let mut uncovered: Vec<usize> = ball.to_vec();
        let mut count = 0usize;
        while !uncovered.is_empty() {
            let best = (0..n)
                .max_by_key(|&c| uncovered.iter().filter(|&&y| space.d(c, y) <= radius).count())
                .expect("nonempty space");
            let before = uncovered.len();
            uncovered.retain(|&y| space.d(best, y) > radius);
            assert!(uncovered.len() < before, "every point covers itself at positive radius");
            count += 1;
        }
        count
    }
}

/// `beta * x` with the convention that a zero discount annihilates the term
/// outright; IEEE `0 * inf` would otherwise surface as NaN.
fn damp(beta: f64, x: f64) -> f64 {
    if beta == 0.0 {
        0.0
    } else {
        beta * x
    }
}

/// The Lipschitz constant of the equilibrium best-response policy in the
/// state: `Lstar = 2 * Lbar1(L1/(1 - beta*K1), 0, 0) / rho`.
pub fn policy_lipschitz(profile: &LipschitzProfile, beta: f64) -> Result<f64, BoundsError> {
    let bk1 = damp(beta, profile.k1);
    if bk1 >= 1.0 {
        return Err(BoundsError::ContractionViolation { value: bk1 });
    }
    let r1 = profile.l1 / (1.0 - bk1);
    let (lbar1, _) = (profile.lfun)(r1, 0.0, 0.0);
    Ok(2.0 * lbar1 / profile.rho)
}

/// Intermediate constants of the N-agent value Lipschitz system. The
/// denominators decide assumption (f).
struct FSystem {
    a1n: f64,
    b1n: f64,
    a2: f64,
    c2: f64,
    denom1: f64,
    denom2: f64,
}

fn f_system(profile: &LipschitzProfile, beta: f64, nf: f64, kappa1: f64) -> FSystem {
    let a1n = profile.l1 + profile.l3 / nf;
    let b1n = damp(beta, profile.k1 + profile.k3 / nf);
    let c1n = damp(beta, profile.k3 / nf);
    let a2 = profile.l3;
    let b2 = damp(beta, profile.k3);
    let c2 = damp(beta, kappa1);
    let denom1 = (1.0 - b1n) * (1.0 - c2) - c1n * a2 * b2;
    let denom2 = (1.0 - b1n) * (1.0 - c2) - c1n * a1n * b2;
    FSystem { a1n, b1n, a2, c2, denom1, denom2 }
}

/// Lipschitz constants `(K1starN, K2starN)` of the N-agent optimal value
/// function, in the first coordinate and in the empirical measure of the
/// rest. Solves the two-unknown linear system left by one application of
/// the Bellman operator:
///
/// ```text
/// K1starN = a1N*(1 - c2) / ((1 - b1N)*(1 - c2) - c1N*a2*b2)
/// K2starN = a2*(1 - b1N) / ((1 - b1N)*(1 - c2) - c1N*a1N*b2)
/// ```
///
/// with `a1N = L1 + L3/N`, `b1N = beta*(K1 + K3/N)`, `c1N = beta*K3/N`,
/// `a2 = L3`, `b2 = beta*K3`, and `c2 = beta*(K1 + K2*Lstar + K3)`.
pub fn value_lipschitz_n(
    profile: &LipschitzProfile,
    beta: f64,
    n: usize,
    lstar: f64,
) -> Result<(f64, f64), BoundsError> {
    if n == 0 {
        return Err(BoundsError::NTooSmall { n });
    }
    let kappa1 = profile.k1 + profile.k2 * lstar + profile.k3;
    let sys = f_system(profile, beta, n as f64, kappa1);
    if !(sys.b1n < 1.0) {
        return Err(BoundsError::AssumptionFViolation {
            n,
            what: "b1N".to_string(),
            value: sys.b1n,
        });
    }
    if !(sys.denom1 > 0.0) {
        return Err(BoundsError::AssumptionFViolation {
            n,
            what: "the K1starN denominator".to_string(),
            value: sys.denom1,
        });
    }
    if !(sys.denom2 > 0.0) {
        return Err(BoundsError::AssumptionFViolation {
            n,
            what: "the K2starN denominator".to_string(),
            value: sys.denom2,
        });
    }
    Ok((
        sys.a1n * (1.0 - sys.c2) / sys.denom1,
        sys.a2 * (1.0 - sys.b1n) / sys.denom2,
    ))
}

/// Lipschitz constants of the N-agent best-response map: the value
/// constants transported one step through the population kernel,
///
/// ```text
/// R1N = K1starN
/// R2N = K2starN*K3 + K2starN*(K1 + K2*Lstar) * N/(N-1)
/// R3N = K2starN*(K1 + K2*Lstar) / (N-1)
/// ```
///
/// and then pushed through the gradient callback,
/// `(L1starN, L2starN) = 2 * Lbar(R1N, R2N, R3N) / rho`. Returns
/// `(R1N, R2N, R3N, L1starN, L2starN)`. `beta` does not enter these
/// formulas; it stays in the signature for uniformity with the rest of the
/// constant chain.
pub fn best_response_constants(
    profile: &LipschitzProfile,
    _beta: f64,
    n: usize,
    lstar: f64,
    k1starn: f64,
    k2starn: f64,
) -> Result<(f64, f64, f64, f64, f64), BoundsError> {
    if n < 2 {
        return Err(BoundsError::NTooSmall { n });
    }
    let nf = n as f64;
    let drift = profile.k1 + profile.k2 * lstar;
    let r1n = k1starn;
    let r2n = k2starn * profile.k3 + k2starn * drift * nf / (nf - 1.0);
    let r3n = k2starn * drift / (nf - 1.0);
    let (m1, m2) = (profile.lfun)(r1n, r2n, r3n);
    Ok((r1n, r2n, r3n, 2.0 * m1 / profile.rho, 2.0 * m2 / profile.rho))
}

/// Computed left-hand sides of the assumption inequalities. Quantities that
/// cannot be evaluated because an upstream assumption already failed are
/// NaN (or +inf where the failure is a genuine blow-up).
#[derive(Debug, Clone, Copy)]
pub struct AssumptionDetails {
    /// `beta*(K1 + K2*Lstar + K3)`, the first half of (e); must be < 1.
    pub e_first: f64,
    /// `beta*(K1 + K2*L2star)`, the second half of (e); must be < 1.
    pub e_second: f64,
    /// `b1N = beta*(K1 + K3/N)`; must be < 1 for (f).
    pub f_b1n: f64,
    /// `(1 - b1N)(1 - c2) - c1N*a2*b2`; must be > 0 for (f).
    pub f_denom1: f64,
    /// `(1 - b1N)(1 - c2) - c1N*a1N*b2`; must be > 0 for (f).
    pub f_denom2: f64,
    /// `beta*hat_kappa2N`; must be < 1 for (g).
    pub g_lhs: f64,
}

/// Verdicts of the three numeric feasibility assumptions.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionCheck {
    pub e: bool,
    pub f: bool,
    pub g: bool,
    pub details: AssumptionDetails,
}

/// Every constant the assumption chain produces, evaluated leniently: a
/// failed assumption turns the quantities depending on it into NaN and
/// clears the corresponding flag instead of aborting.
struct Propagated {
    lstar: f64,
    l2star: f64,
    kappa1: f64,
    k1starn: f64,
    k2starn: f64,
    r1n: f64,
    r2n: f64,
    r3n: f64,
    l1starn: f64,
    l2starn: f64,
    hat_kappa1n: f64,
    hat_kappa2n: f64,
    check: AssumptionCheck,
}

fn propagate(profile: &LipschitzProfile, beta: f64, n: usize) -> Propagated {
    let nan = f64::NAN;
    // (e), first inequality. When beta*K1 >= 1 the policy constant blows
    // up; kappa1 inherits the blow-up only through K2.
    let bk1 = damp(beta, profile.k1);
    let (lstar, r1) = if bk1 < 1.0 {
        let r1 = profile.l1 / (1.0 - bk1);
        (2.0 * (profile.lfun)(r1, 0.0, 0.0).0 / profile.rho, r1)
    } else {
        (f64::INFINITY, nan)
    };
    let kappa1 = if profile.k2 == 0.0 {
        profile.k1 + profile.k3
    } else {
        profile.k1 + profile.k2 * lstar + profile.k3
    };
    let e_first = damp(beta, kappa1);
    // (e), second inequality, defined only once the first one holds.
    let (l2star, e_second) = if e_first < 1.0 {
        let r2 = profile.l3 * kappa1 / (1.0 - e_first);
        let l2star = 2.0 * (profile.lfun)(r1, r2, 0.0).1 / profile.rho;
        (l2star, damp(beta, profile.k1 + profile.k2 * l2star))
    } else {
        (nan, nan)
    };
    let e = e_first < 1.0 && e_second < 1.0;

    // (f): solvability of the two-unknown value Lipschitz system.
    let sys = f_system(profile, beta, n as f64, kappa1);
    let f = sys.b1n < 1.0 && sys.denom1 > 0.0 && sys.denom2 > 0.0;
    let (k1starn, k2starn) = if f {
        (
            sys.a1n * (1.0 - sys.c2) / sys.denom1,
            sys.a2 * (1.0 - sys.b1n) / sys.denom2,
        )
    } else {
        (nan, nan)
    };

    // (g): contraction of the best-response propagation for N agents.
    let (r1n, r2n, r3n, l1starn, l2starn, hat_kappa1n, hat_kappa2n, g_lhs) =
        if f && n >= 2 && lstar.is_finite() {
            let nf = n as f64;
            let drift = profile.k1 + profile.k2 * lstar;
            let r1n = k1starn;
            let r2n = k2starn * profile.k3 + k2starn * drift * nf / (nf - 1.0);
            let r3n = k2starn * drift / (nf - 1.0);
            let (m1, m2) = (profile.lfun)(r1n, r2n, r3n);
            let l1starn = 2.0 * m1 / profile.rho;
            let l2starn = 2.0 * m2 / profile.rho;
            let hat1 = profile.k3 + profile.k2 * l1starn;
            let hat2 = profile.k1 + profile.k2 * l2starn;
            (r1n, r2n, r3n, l1starn, l2starn, hat1, hat2, damp(beta, hat2))
        } else {
            (nan, nan, nan, nan, nan, nan, nan, nan)
        };
    let g = g_lhs < 1.0;

    Propagated {
        lstar,
        l2star,
        kappa1,
        k1starn,
        k2starn,
        r1n,
        r2n,
        r3n,
        l1starn,
        l2starn,
        hat_kappa1n,
        hat_kappa2n,
        check: AssumptionCheck {
            e,
            f,
            g,
            details: AssumptionDetails {
                e_first,
                e_second,
                f_b1n: sys.b1n,
                f_denom1: sys.denom1,
                f_denom2: sys.denom2,
                g_lhs,
            },
        },
    }
}

/// Evaluates the three feasibility assumptions at population size `n` and
/// reports the verdicts together with every computed left-hand side.
pub fn check_assumptions(profile: &LipschitzProfile, beta: f64, n: usize) -> AssumptionCheck {
    propagate(profile, beta, n).check
}

fn require(check: &AssumptionCheck) -> Result<(), BoundsError> {
    let d = &check.details;
    if !check.e {
        let (what, value) = if !(d.e_first < 1.0) {
            ("beta*(K1 + K2*Lstar + K3)", d.e_first)
        } else {
            ("beta*(K1 + K2*L2star)", d.e_second)
        };
        return Err(BoundsError::AssumptionViolation { which: 'e', what: what.to_string(), value });
    }
    if !check.f {
        let (what, value) = if !(d.f_b1n < 1.0) {
            ("b1N", d.f_b1n)
        } else if !(d.f_denom1 > 0.0) {
            ("the K1starN denominator", d.f_denom1)
        } else {
            ("the K2starN denominator", d.f_denom2)
        };
        return Err(BoundsError::AssumptionViolation { which: 'f', what: what.to_string(), value });
    }
    if !check.g {
        return Err(BoundsError::AssumptionViolation {
            which: 'g',
            what: "beta*hat_kappa2N".to_string(),
            value: d.g_lhs,
        });
    }
    Ok(())
}

/// Upper bound on the epsilon-covering number of the dual function class
/// (1-Lipschitz functions bounded by `kclass` up to an additive constant):
/// `(8K/eps) ^ ((16K*diam/eps)^ddim)`, evaluated in log space. Returns +inf
/// once the natural log of the bound exceeds 700, and never returns less
/// than one (a covering number cannot).
pub fn covering_number_bound(eps: f64, kclass: f64, diam: f64, ddim: f64) -> f64 {
    assert!(eps > 0.0, "covering bound needs eps > 0, got {eps}");
    assert!(
        kclass >= 0.0 && diam >= 0.0 && ddim >= 0.0,
        "covering bound needs nonnegative kclass, diam, ddim"
    );
    let base = 8.0 * kclass / eps;
    if base <= 1.0 {
        return 1.0;
    }
    let exponent = (16.0 * kclass * diam / eps).powf(ddim);
    let ln_bound = exponent * base.ln();
    if ln_bound > LN_OVERFLOW {
        f64::INFINITY
    } else {
        ln_bound.exp()
    }
}

/// The empirical-measure convergence rate for N i.i.d. samples: the moment
/// scale `C * moment_q^(1/q)` times a rate selected by the dimension
/// parameter,
///
/// ```text
/// dim < 2:   1/sqrt(N)       + N^(1/q)/N
/// dim = 2:   ln(1+N)/sqrt(N) + N^(1/q)/N
/// dim > 2:   N^(-1/dim)      + N^(1/q)/N
/// ```
///
/// The selector is exposed as an explicit argument; pass exactly `2.0` to
/// hit the boundary case.
pub fn alpha_n(n: usize, q: f64, moment_q: f64, dim_x: f64, c: f64) -> f64 {
    assert!(n >= 1, "alpha_n needs N >= 1, got {n}");
    assert!(q > 1.0, "alpha_n needs q > 1, got {q}");
    assert!(c > 0.0, "alpha_n needs C > 0, got {c}");
    assert!(moment_q >= 0.0, "alpha_n needs a nonnegative moment, got {moment_q}");
    assert!(dim_x >= 0.0, "alpha_n needs a nonnegative dimension, got {dim_x}");
    let nf = n as f64;
    let tail = nf.powf(1.0 / q) / nf;
    let rate = if dim_x < 2.0 {
        1.0 / nf.sqrt() + tail
    } else if dim_x == 2.0 {
        (1.0 + nf).ln() / nf.sqrt() + tail
    } else {
        nf.powf(-1.0 / dim_x) + tail
    };
    c * moment_q.powf(1.0 / q) * rate
}

fn geom_sum(k: f64, t: usize) -> f64 {
    if t == 0 {
        0.0
    } else if k == 1.0 {
        t as f64
    } else {
        (1.0 - k.powi(t as i32)) / (1.0 - k)
    }
}

/// Drift of the mean-field flow of the N-agent empirical measure under the
/// equilibrium policy: the closed form of the recursion
/// `alpha_{t+1} = kappa1*alpha_t + kappa2*sqrt(2/N) + 2*eps` started at
/// `alpha_0 = alphan`,
///
/// ```text
/// alpha_t = kappa1^t * alphan + (kappa2*sqrt(2/N) + 2*eps) * sum_{i<t} kappa1^i
/// ```
pub fn alpha_t(n: usize, eps: f64, t: usize, kappa1: f64, kappa2: f64, alphan: f64) -> f64 {
    assert!(n >= 1, "alpha_t needs N >= 1, got {n}");
    assert!(eps >= 0.0 && kappa1 >= 0.0 && kappa2 >= 0.0, "alpha_t needs nonnegative inputs");
    let per_step = kappa2 * (2.0 / n as f64).sqrt() + 2.0 * eps;
    kappa1.powi(t as i32) * alphan + per_step * geom_sum(kappa1, t)
}

/// The deviation variant of [`alpha_t`] seen by a single deviating agent,
/// driven by the other N-1 agents: same closed form with `kappa2n` and
/// `sqrt(2/(N-1))`.
pub fn alpha_tilde_t(n: usize, eps: f64, t: usize, kappa1: f64, kappa2n: f64, alphan: f64) -> f64 {
    assert!(n >= 2, "alpha_tilde_t needs N >= 2, got {n}");
    assert!(eps >= 0.0 && kappa1 >= 0.0 && kappa2n >= 0.0, "alpha_tilde_t needs nonnegative inputs");
    let per_step = kappa2n * (2.0 / (n as f64 - 1.0)).sqrt() + 2.0 * eps;
    kappa1.powi(t as i32) * alphan + per_step * geom_sum(kappa1, t)
}

/// The constant chain feeding the final bounds, produced by
/// [`derive_constants`] for a specific `(N, eps)` pair. `covering` is the
/// evaluated covering bound behind `kappa2` and `kappa2n`.
#[derive(Debug, Clone, Copy)]
pub struct DerivedConstants {
    pub lstar: f64,
    pub l2star: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa2n: f64,
    pub k1starn: f64,
    pub k2starn: f64,
    pub r1n: f64,
    pub r2n: f64,
    pub r3n: f64,
    pub l1starn: f64,
    pub l2starn: f64,
    pub hat_kappa1n: f64,
    pub hat_kappa2n: f64,
    pub alphan: f64,
    pub covering: f64,
}

fn scale_by_diam(diam: f64, v: f64) -> f64 {
    // A one-point space has diam 0 and every W1 term vanishes; 0 * inf
    // from an overflowed covering bound must not poison that case.
    if diam == 0.0 {
        0.0
    } else {
        diam * v
    }
}

/// Runs the whole assumption chain strictly and returns every derived
/// constant, or the first violated assumption. `alphan` is the caller's
/// evaluation of the sampling rate (usually [`alpha_n`]).
pub fn derive_constants(
    profile: &LipschitzProfile,
    beta: f64,
    n: usize,
    eps: f64,
    alphan: f64,
) -> Result<DerivedConstants, BoundsError> {
    if n < 2 {
        return Err(BoundsError::NTooSmall { n });
    }
    let p = propagate(profile, beta, n);
    require(&p.check)?;
    let covering = covering_number_bound(eps, profile.kclass, profile.diam, profile.ddim);
    let nf = n as f64;
    Ok(DerivedConstants {
        lstar: p.lstar,
        l2star: p.l2star,
        kappa1: p.kappa1,
        kappa2: scale_by_diam(profile.diam, covering),
        kappa2n: scale_by_diam(profile.diam, covering + (8.0 / (nf - 1.0)).sqrt()),
        k1starn: p.k1starn,
        k2starn: p.k2starn,
        r1n: p.r1n,
        r2n: p.r2n,
        r3n: p.r3n,
        l1starn: p.l1starn,
        l2starn: p.l2starn,
        hat_kappa1n: p.hat_kappa1n,
        hat_kappa2n: p.hat_kappa2n,
        alphan,
        covering,
    })
}

/// Product where an exact zero annihilates the other factor, so a vanished
/// coefficient keeps its term at zero against the +inf covering sentinel.
fn vanish_prod(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// Cost gap between playing the mean-field equilibrium policy in the
/// N-agent game and its value in the limit model:
///
/// ```text
/// Theta1 = (L1 + L2*Lstar + L3) * ( alphan/(1 - beta*kappa1)
///          + beta*(kappa2*sqrt(2/N) + 2*eps) / ((1 - beta*kappa1)*(1 - beta)) )
/// ```
///
/// Refuses with [`BoundsError::AssumptionViolation`] whenever any of the
/// assumptions (e)-(g) fails at `(profile, beta, n)`; an overflowed
/// covering bound propagates as +inf. Pass the same `n` and `eps` the
/// constants were derived with.
pub fn theta1(
    n: usize,
    eps: f64,
    profile: &LipschitzProfile,
    beta: f64,
    derived: &DerivedConstants,
) -> Result<f64, BoundsError> {
    assert!((0.0..1.0).contains(&beta), "theta1 needs beta in [0, 1), got {beta}");
    require(&check_assumptions(profile, beta, n))?;
    let front = profile.l1 + vanish_prod(profile.l2, derived.lstar) + profile.l3;
    let tail = if beta == 0.0 {
        0.0
    } else {
        beta * (derived.kappa2 * (2.0 / n as f64).sqrt() + 2.0 * eps)
            / ((1.0 - beta * derived.kappa1) * (1.0 - beta))
    };
    Ok(vanish_prod(front, derived.alphan / (1.0 - beta * derived.kappa1) + tail))
}

/// Cost gap between the best deviation against N-1 equilibrium opponents
/// and the limit-model best response:
///
/// ```text
/// Theta2 = ( L2*L1starN + L3 + (L1 + L2*L2starN)*hat_kappa1N*beta/(1 - beta*hat_kappa2N) )
///          * ( alphan/(1 - beta*kappa1)
///              + beta*(kappa2n*sqrt(2/(N-1)) + 2*eps) / ((1 - beta)*(1 - beta*kappa1)) )
/// ```
///
/// Same refusal and propagation rules as [`theta1`].
pub fn theta2(
    n: usize,
    eps: f64,
    profile: &LipschitzProfile,
    beta: f64,
    derived: &DerivedConstants,
) -> Result<f64, BoundsError> {
    assert!((0.0..1.0).contains(&beta), "theta2 needs beta in [0, 1), got {beta}");
    if n < 2 {
        return Err(BoundsError::NTooSmall { n });
    }
    require(&check_assumptions(profile, beta, n))?;
    let mid = profile.l1 + vanish_prod(profile.l2, derived.l2starn);
    let front = vanish_prod(profile.l2, derived.l1starn)
        + profile.l3
        + vanish_prod(vanish_prod(mid, derived.hat_kappa1n), beta)
            / (1.0 - beta * derived.hat_kappa2n);
    let tail = if beta == 0.0 {
        0.0
    } else {
        beta * (derived.kappa2n * (2.0 / (n as f64 - 1.0)).sqrt() + 2.0 * eps)
            / ((1.0 - beta) * (1.0 - beta * derived.kappa1))
    };
    Ok(vanish_prod(front, derived.alphan / (1.0 - beta * derived.kappa1) + tail))
}

/// The per-agent suboptimality of the mean-field equilibrium policy in the
/// N-agent game: `eps_N = Theta1 + Theta2`.
pub fn eps_n(
    n: usize,
    eps: f64,
    profile: &LipschitzProfile,
    beta: f64,
    derived: &DerivedConstants,
) -> Result<f64, BoundsError> {
    Ok(theta1(n, eps, profile, beta, derived)? + theta2(n, eps, profile, beta, derived)?)
}

/// Inputs for the sampling rate [`alpha_n`] inside [`bound_report`].
#[derive(Debug, Clone, Copy)]
pub struct AlphaParams {
    pub q: f64,
    pub moment_q: f64,
    pub dim_x: f64,
    pub c: f64,
}

fn ser_real<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_nan() {
        s.serialize_str("nan")
    } else if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

/// Every named constant of the bound chain in one serializable record.
/// Non-finite entries serialize as the strings `"inf"`, `"-inf"`, `"nan"`
/// so the JSON stays lossless where the arithmetic overflowed or an
/// assumption failed.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundReport {
    #[serde(serialize_with = "ser_real")]
    pub lstar: f64,
    #[serde(serialize_with = "ser_real")]
    pub l2star: f64,
    #[serde(serialize_with = "ser_real")]
    pub kappa1: f64,
    #[serde(serialize_with = "ser_real")]
    pub kappa2: f64,
    #[serde(serialize_with = "ser_real")]
    pub kappa2n: f64,
    #[serde(serialize_with = "ser_real")]
    pub k1starn: f64,
    #[serde(serialize_with = "ser_real")]
    pub k2starn: f64,
    #[serde(serialize_with = "ser_real")]
    pub r1n: f64,
    #[serde(serialize_with = "ser_real")]
    pub r2n: f64,
    #[serde(serialize_with = "ser_real")]
    pub r3n: f64,
    #[serde(serialize_with = "ser_real")]
    pub l1starn: f64,
    #[serde(serialize_with = "ser_real")]
    pub l2starn: f64,
    #[serde(serialize_with = "ser_real")]
    pub hat_kappa1n: f64,
    #[serde(serialize_with = "ser_real")]
    pub hat_kappa2n: f64,
    #[serde(serialize_with = "ser_real")]
    pub alphan: f64,
    #[serde(serialize_with = "ser_real")]
    pub theta1: f64,
    #[serde(serialize_with = "ser_real")]
    pub theta2: f64,
    #[serde(serialize_with = "ser_real")]
    pub epsn: f64,
    pub assumption_e: bool,
    pub assumption_f: bool,
    pub assumption_g: bool,
}

/// Evaluates the full bound chain at `(N, eps)` and reports every constant
/// together with the assumption flags. Unlike the individual evaluators,
/// the report never refuses on a failed assumption: the unevaluable
/// quantities are NaN and the flags record which hypothesis broke. Errors
/// are reserved for invalid inputs.
pub fn bound_report(
    profile: &LipschitzProfile,
    beta: f64,
    n: usize,
    eps: f64,
    alpha: &AlphaParams,
) -> Result<BoundReport, BoundsError> {
    profile.validate()?;
    if !(0.0..1.0).contains(&beta) {
        return Err(BoundsError::InvalidParameter {
            what: format!("beta must lie in [0, 1), got {beta}"),
        });
    }
    if n < 2 {
        return Err(BoundsError::NTooSmall { n });
    }
    if !(eps > 0.0) {
        return Err(BoundsError::InvalidParameter { what: format!("eps must be positive, got {eps}") });
    }
    if !(alpha.q > 1.0) || !(alpha.c > 0.0) || alpha.moment_q < 0.0 || alpha.dim_x < 0.0 {
        return Err(BoundsError::InvalidParameter {
            what: "alpha needs q > 1, C > 0, and nonnegative moment and dimension".to_string(),
        });
    }

    let alphan = alpha_n(n, alpha.q, alpha.moment_q, alpha.dim_x, alpha.c);
    let p = propagate(profile, beta, n);
    let covering = covering_number_bound(eps, profile.kclass, profile.diam, profile.ddim);
    let nf = n as f64;
    let kappa2 = scale_by_diam(profile.diam, covering);
    let kappa2n = scale_by_diam(profile.diam, covering + (8.0 / (nf - 1.0)).sqrt());
    let all_pass = p.check.e && p.check.f && p.check.g;
    let (t1, t2) = if all_pass {
        let derived = DerivedConstants {
            lstar: p.lstar,
            l2star: p.l2star,
            kappa1: p.kappa1,
            kappa2,
            kappa2n,
            k1starn: p.k1starn,
            k2starn: p.k2starn,
            r1n: p.r1n,
            r2n: p.r2n,
            r3n: p.r3n,
            l1starn: p.l1starn,
            l2starn: p.l2starn,
            hat_kappa1n: p.hat_kappa1n,
            hat_kappa2n: p.hat_kappa2n,
            alphan,
            covering,
        };
        (
            theta1(n, eps, profile, beta, &derived)?,
            theta2(n, eps, profile, beta, &derived)?,
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(BoundReport {
        lstar: p.lstar,
        l2star: p.l2star,
        kappa1: p.kappa1,
        kappa2,
        kappa2n,
        k1starn: p.k1starn,
        k2starn: p.k2starn,
        r1n: p.r1n,
        r2n: p.r2n,
        r3n: p.r3n,
        l1starn: p.l1starn,
        l2starn: p.l2starn,
        hat_kappa1n: p.hat_kappa1n,
        hat_kappa2n: p.hat_kappa2n,
        alphan,
        theta1: t1,
        theta2: t2,
        epsn: t1 + t2,
        assumption_e: p.check.e,
        assumption_f: p.check.f,
        assumption_g: p.check.g,
    })
}
