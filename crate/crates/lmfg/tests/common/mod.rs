//! Shared proptest strategies for the integration suites. Each test target
//! pulls in the subset it needs.
#![allow(dead_code)]

use lmfg::model::{validate_model, Distribution, FiniteMetricSpace, MfgModel, Policy, RawModel};
use proptest::prelude::*;

/// Lattice points available for metric-space embeddings. Distinct points are
/// at Manhattan distance >= 1, so the induced metric separates points.
const LATTICE: usize = 7;

fn lattice_points() -> Vec<(i64, i64)> {
    (0..LATTICE as i64)
        .flat_map(|x| (0..LATTICE as i64).map(move |y| (x, y)))
        .collect()
}

/// A true metric on `n` labeled points: Manhattan distance between distinct
/// lattice points, scaled by a power of two. Integer arithmetic and exponent
/// shifts keep every axiom exact in floating point.
pub fn metric_space(n: usize) -> impl Strategy<Value = FiniteMetricSpace> {
    let scales = prop_oneof![Just(0.5f64), Just(1.0), Just(2.0)];
    let points = proptest::sample::subsequence(lattice_points(), n).prop_shuffle();
    (points, scales).prop_map(move |(pts, scale)| {
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
    })
}

/// Either a lattice metric or the unit (discrete) metric on `n` points.
pub fn any_metric_space(n: usize) -> impl Strategy<Value = FiniteMetricSpace> {
    prop_oneof![
        3 => metric_space(n),
        1 => Just(FiniteMetricSpace::unit(n)),
    ]
}

/// A probability vector of length `n` with all entries at least 1e-3 after
/// normalization.
pub fn interior_distribution(n: usize) -> impl Strategy<Value = Distribution> {
    proptest::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        Distribution::new(w.iter().map(|v| v / s).collect()).expect("normalized weights")
    })
}

/// A probability vector that may place exact zeros on part of the support.
pub fn distribution(n: usize) -> impl Strategy<Value = Distribution> {
    let sparse = proptest::collection::vec(prop_oneof![2 => 0.01f64..1.0, 1 => Just(0.0)], n)
        .prop_filter("needs positive mass", |w| w.iter().sum::<f64>() > 0.0)
        .prop_map(|w| {
            let s: f64 = w.iter().sum();
            Distribution::new(w.iter().map(|v| v / s).collect()).expect("normalized weights")
        });
    prop_oneof![3 => interior_distribution(n), 2 => sparse]
}

/// A stochastic policy with fully mixed rows.
pub fn interior_policy(nx: usize, na: usize) -> impl Strategy<Value = Policy> {
    proptest::collection::vec(interior_distribution(na), nx)
        .prop_map(|rows| Policy::new(rows).expect("rows share the action count"))
}

/// Any stationary policy: mixed rows or a deterministic one.
pub fn policy(nx: usize, na: usize) -> impl Strategy<Value = Policy> {
    let det = proptest::collection::vec(0..na, nx)
        .prop_map(move |acts| Policy::deterministic(&acts, na));
    prop_oneof![2 => interior_policy(nx, na), 1 => det]
}

/// A validated mean-field game with `nx` states and `na` actions: normalized
/// positive kernel rows, costs in [0, 5], discount in [0.1, 0.9].
pub fn mfg_model(nx: usize, na: usize) -> impl Strategy<Value = MfgModel> {
    let kernel_row = proptest::collection::vec(0.01f64..1.0, nx).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect::<Vec<f64>>()
    });
    let kernel = proptest::collection::vec(
        proptest::collection::vec(proptest::collection::vec(kernel_row, nx), na),
        nx,
    );
    let cost = proptest::collection::vec(
        proptest::collection::vec(proptest::collection::vec(0.0f64..5.0, nx), na),
        nx,
    );
    (any_metric_space(nx), kernel, cost, 0.1f64..=0.9).prop_map(
        move |(space, kernel, cost, beta)| {
            let raw = RawModel {
                states: (0..nx).map(|i| format!("s{i}")).collect(),
                metric: (0..nx).map(|i| (0..nx).map(|j| space.d(i, j)).collect()).collect(),
                actions: (0..na).map(|a| format!("a{a}")).collect(),
                beta,
                kernel,
                cost,
            };
            validate_model(&raw).expect("generated model is well formed")
        },
    )
}

/// Model dimensions drawn small enough for brute-force oracles.
pub fn small_model() -> impl Strategy<Value = MfgModel> {
    (2usize..=4, 1usize..=3).prop_flat_map(|(nx, na)| mfg_model(nx, na))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
