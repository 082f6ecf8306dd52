//! Shared fixtures for unit tests.

use crate::model::{validate_model, MfgModel, RawModel};

/// The two-state malware model used as the running example throughout the
/// test suite. States are healthy (0) and infected (1); actions are wait (0)
/// and repair (1). Waiting while healthy gets you infected with probability
/// q = 0.9 regardless of the population; repairing always restores health.
/// The stage cost is (k + z) * x + theta * a with k = 0.2 and theta = 0.5,
/// so only the cost couples to the peer state z.
pub fn malware_raw() -> RawModel {
    let q = 0.9;
    let k = 0.2;
    let theta = 0.5;
    let states = vec!["healthy".to_string(), "infected".to_string()];
    let actions = vec!["wait".to_string(), "repair".to_string()];
    let metric = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    // kernel[x][a][z] is a row over next states; z never matters here.
    let row = |p0: f64, p1: f64| vec![vec![p0, p1], vec![p0, p1]];
    let kernel = vec![
        vec![row(1.0 - q, q), row(1.0, 0.0)],
        vec![row(0.0, 1.0), row(1.0, 0.0)],
    ];
    let mut cost = vec![vec![vec![0.0; 2]; 2]; 2];
    for x in 0..2 {
        for a in 0..2 {
            for z in 0..2 {
                cost[x][a][z] = (k + z as f64) * x as f64 + theta * a as f64;
            }
        }
    }
    RawModel { states, metric, actions, beta: 0.9, kernel, cost }
}

pub fn malware_model() -> MfgModel {
    validate_model(&malware_raw()).expect("malware fixture must validate")
}
