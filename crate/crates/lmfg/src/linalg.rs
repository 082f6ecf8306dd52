//! Small dense linear-algebra kernels shared by the solver and the MDP
//! oracles: LU with partial pivoting, iterative refinement, a one-norm
//! reciprocal-condition estimate, and strongly connected components.
//!
//! Everything here targets systems with tens of unknowns, so the
//! implementations favor exactness, determinism, and simplicity over
//! asymptotics. Matrices are row-major flat slices with an explicit
//! dimension.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub(crate) enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot:.3e} at elimination step {step})")]
    SingularPivot { step: usize, pivot: f64 },
}

/// LU factorization PA = LU with partial pivoting. `lu` packs the unit-lower
/// factor below the diagonal and the upper factor on and above it; `piv[k]`
/// is the row swapped into position k at step k.
#[derive(Debug)]
pub(crate) struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

pub(crate) fn lu_factor(n: usize, a: &[f64], pivot_tol: f64) -> Result<LuFactors, LinalgError> {
    debug_assert_eq!(a.len(), n * n, "matrix storage must be n*n");
    let mut lu = a.to_vec();
    let mut piv = vec![0usize; n];
    for k in 0..n {
        let mut p = k;
        let mut best = lu[k * n + k].abs();
        for i in (k + 1)..n {
            let v = lu[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        piv[k] = p;
        if !(best >= pivot_tol) {
            return Err(LinalgError::SingularPivot { step: k, pivot: best });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
        }
        let d = lu[k * n + k];
        for i in (k + 1)..n {
            let f = lu[i * n + k] / d;
            lu[i * n + k] = f;
            for j in (k + 1)..n {
                lu[i * n + j] -= f * lu[k * n + j];
            }
        }
    }
    Ok(LuFactors { n, lu, piv })
}

impl LuFactors {
    /// Solves A x = b.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
        }
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solves A^T x = b. With PA = LU this is U^T w = b, L^T y = w, then the
    /// row swaps applied in reverse.
    pub(crate) fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[j * n + i] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[j * n + i] * x[j];
            }
            x[i] = s;
        }
        for k in (0..n).rev() {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
        }
        x
    }
}

/// Solves A x = b through an existing factorization, then polishes by
/// iterative refinement against the original matrix until the residual
/// two-norm drops below `rel_tol * ||b||` or `max_passes` corrections have
/// been applied. Returns the best iterate seen and its residual norm.
pub(crate) fn solve_refined(
    n: usize,
    a: &[f64],
    factors: &LuFactors,
    b: &[f64],
    rel_tol: f64,
    max_passes: usize,
) -> (Vec<f64>, f64) {
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return (vec![0.0; n], 0.0);
    }
    let mut x = factors.solve(b);
    let mut best = x.clone();
    let mut best_res = f64::INFINITY;
    for pass in 0..=max_passes {
        let mut r = b.to_vec();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += a[i * n + j] * x[j];
            }
            r[i] -= s;
        }
        let rn = norm2(&r);
        if rn < best_res {
            best_res = rn;
            best.copy_from_slice(&x);
        }
        if rn <= rel_tol * bnorm || pass == max_passes {
            break;
        }
        let dx = factors.solve(&r);
        for i in 0..n {
            x[i] += dx[i];
        }
    }
    (best, best_res)
}

/// One-norm reciprocal-condition estimate using Hager's method: the one-norm
/// of the inverse is estimated from a handful of solves with A and A^T.
pub(crate) fn rcond_estimate(n: usize, a: &[f64], factors: &LuFactors) -> f64 {
    let mut anorm: f64 = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += a[i * n + j].abs();
        }
        anorm = anorm.max(col);
    }
    if anorm == 0.0 || n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0f64;
    let mut prev_j = usize::MAX;
    for _ in 0..5 {
        let y = factors.solve(&x);
        est = y.iter().map(|v| v.abs()).sum();
        let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = factors.solve_transpose(&xi);
        let mut j_max = 0;
        let mut z_max = 0.0;
        for (j, zj) in z.iter().enumerate() {
            if zj.abs() > z_max {
                z_max = zj.abs();
                j_max = j;
            }
        }
        let ztx: f64 = z.iter().zip(x.iter()).map(|(zi, xi)| zi * xi).sum();
        if z_max <= ztx || j_max == prev_j {
            break;
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        x[j_max] = 1.0;
        prev_j = j_max;
    }
    if est == 0.0 {
        return 1.0;
    }
    1.0 / (anorm * est)
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Kosaraju's algorithm, iterative in both passes. Returns one component id
/// per node; ids are dense starting at 0.
pub(crate) fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    for s in 0..n {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        let mut stack: Vec<(usize, usize)> = vec![(s, 0)];
        while let Some(frame) = stack.last_mut() {
            let (v, i) = (frame.0, frame.1);
            if i < adj[v].len() {
                frame.1 += 1;
                let w = adj[v][i];
                if !visited[w] {
                    visited[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }
    let mut radj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, outs) in adj.iter().enumerate() {
        for &w in outs {
            radj[w].push(v);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut next_id = 0;
    for &s in order.iter().rev() {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next_id;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &w in &radj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = next_id;
                    stack.push(w);
                }
            }
        }
        next_id += 1;
    }
    comp
}
