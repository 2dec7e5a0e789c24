//! Shared fixtures for unit tests.

use nalgebra::{DMatrix, DVector};

use crate::graph::NetworkModel;

/// Single node with the given self-loop gain and the stock parameters
/// `w = 1`, `δ = 0.5`, `κ = 0.3`.
pub fn single_node(theta: f64) -> NetworkModel {
    NetworkModel::new(
        DMatrix::zeros(1, 1),
        DVector::from_element(1, theta),
        DVector::from_element(1, 1.0),
        DVector::from_element(1, 0.5),
        DVector::from_element(1, 0.3),
    )
    .unwrap()
}

/// Two-node bidirectional cycle with unit gains.
pub fn two_node_cycle(theta: f64) -> NetworkModel {
    NetworkModel::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        DVector::from_element(2, theta),
        DVector::from_element(2, 1.0),
        DVector::from_element(2, 0.5),
        DVector::from_element(2, 0.3),
    )
    .unwrap()
}

/// Directed ring on `n` nodes (strongly connected, sparse).
pub fn ring(n: usize, theta: f64) -> NetworkModel {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, (i + 1) % n)] = 1.0;
    }
    NetworkModel::new(
        a,
        DVector::from_element(n, theta),
        DVector::from_element(n, 1.0),
        DVector::from_element(n, 0.5),
        DVector::from_element(n, 0.3),
    )
    .unwrap()
}

/// Seeded dense-ish random model for property checks.
pub fn random_model(n: usize, seed: u64) -> NetworkModel {
    crate::graph::generate_erdos_renyi(n, 0.4, seed, &Default::default()).unwrap()
}

pub fn assert_rel_close(actual: f64, expected: f64, rel: f64) {
    let err = (actual - expected).abs() / expected.abs().max(1e-300);
    assert!(
        err <= rel,
        "expected {expected}, got {actual} (relative error {err:.3e} > {rel:.1e})"
    );
}
