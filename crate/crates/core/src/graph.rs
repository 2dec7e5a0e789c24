//! Networked control system model: digraph, in-degree Laplacian, node
//! parameters, and seeded random instance generation.
//!
//! A network is a strongly connected digraph of `n` scalar nodes. Edge gains
//! live in the adjacency matrix `A` (entry `A[i][j] > 0` is an edge from `j`
//! into `i`), every node carries a positive self-loop gain, a performance
//! weight, an alarm threshold, and a sensor cost. The closed-loop drift
//! matrix is the in-degree Laplacian `L = Θ + diag(A·1) − A`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by model construction and generation.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("adjacency entry ({i},{j}) is negative: {value}")]
    NegativeAdjacency { i: usize, j: usize, value: f64 },
    #[error("adjacency diagonal entry ({0},{0}) must be zero")]
    NonzeroAdjacencyDiagonal(usize),
    #[error("self-loop gain at node {node} must be strictly positive (got {value})")]
    NonPositiveSelfLoop { node: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate node index {0}")]
    DuplicateIndex(usize),
    #[error("no strongly connected graph found after {draws} draws")]
    GenerationExhausted { draws: usize },
    #[error("model file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// In-degree Laplacian `L = Θ + diag(A·1) − A`.
///
/// Row sums of `L` equal the self-loop gains, off-diagonal entries are
/// `−A[i][j] ≤ 0`, and diagonal entries are `θ_i + Σ_j A[i][j]`.
pub fn build_laplacian(
    adjacency: &DMatrix<f64>,
    self_loops: &DVector<f64>,
) -> Result<DMatrix<f64>, GraphError> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(GraphError::DimensionMismatch(format!(
            "adjacency is {}x{}, expected square",
            adjacency.nrows(),
            adjacency.ncols()
        )));
    }
    if self_loops.len() != n {
        return Err(GraphError::DimensionMismatch(format!(
            "self_loops has {} entries, adjacency is {n}x{n}",
            self_loops.len()
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let v = adjacency[(i, j)];
            if v < 0.0 {
                return Err(GraphError::NegativeAdjacency { i, j, value: v });
            }
            if i == j && v != 0.0 {
                return Err(GraphError::NonzeroAdjacencyDiagonal(i));
            }
        }
    }
    for (i, &theta) in self_loops.iter().enumerate() {
        if !(theta > 0.0) {
            return Err(GraphError::NonPositiveSelfLoop {
                node: i,
                value: theta,
            });
        }
    }
    Ok(laplacian_unchecked(adjacency, self_loops))
}

/// The defining formula without value checks; used internally so that
/// invalid models can still be constructed and then reported on.
fn laplacian_unchecked(adjacency: &DMatrix<f64>, self_loops: &DVector<f64>) -> DMatrix<f64> {
    let n = adjacency.nrows();
    let mut l = -adjacency.clone();
    for i in 0..n {
        let row_sum: f64 = adjacency.row(i).iter().sum();
        l[(i, i)] = self_loops[i] + row_sum - adjacency[(i, i)];
    }
    l
}

/// True iff every node reaches every node along directed edges (`A[i][j] > 0`
/// is an edge from `j` into `i`). A single node with no edges counts as
/// strongly connected.
///
/// Implemented as a forward and a reverse breadth-first sweep from node 0,
/// which agrees with the power-sum characterization (`Σ_{k=1}^{n−1} A^k` has
/// no zero entry) at a fraction of the cost.
pub fn is_strongly_connected(adjacency: &DMatrix<f64>) -> Result<bool, GraphError> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(GraphError::DimensionMismatch(format!(
            "adjacency is {}x{}, expected square",
            adjacency.nrows(),
            adjacency.ncols()
        )));
    }
    if n == 0 {
        return Err(GraphError::InvalidParameter("empty adjacency".into()));
    }
    if n == 1 {
        return Ok(true);
    }
    // A[i][j] > 0: edge j -> i. Forward sweep follows j -> i, reverse sweep
    // follows i -> j.
    let forward = reach(n, |from, to| adjacency[(to, from)] > 0.0);
    let reverse = reach(n, |from, to| adjacency[(from, to)] > 0.0);
    Ok(forward.iter().all(|&r| r) && reverse.iter().all(|&r| r))
}

fn reach(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            if !seen[v] && edge(u, v) {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// A networked control system instance.
///
/// Construction checks dimensions only; semantic invariants (positivity,
/// strong connectivity, Hurwitz Laplacian) are reported by
/// [`validate_network`] so that defective inputs can be diagnosed instead of
/// rejected blindly.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    n: usize,
    adjacency: DMatrix<f64>,
    self_loops: DVector<f64>,
    weights: DVector<f64>,
    thresholds: DVector<f64>,
    sensor_costs: DVector<f64>,
    laplacian: DMatrix<f64>,
}

impl NetworkModel {
    pub fn new(
        adjacency: DMatrix<f64>,
        self_loops: DVector<f64>,
        weights: DVector<f64>,
        thresholds: DVector<f64>,
        sensor_costs: DVector<f64>,
    ) -> Result<Self, GraphError> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(GraphError::DimensionMismatch(format!(
                "adjacency is {}x{}, expected square",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if n == 0 {
            return Err(GraphError::InvalidParameter("model must have n >= 1".into()));
        }
        for (name, v) in [
            ("self_loops", &self_loops),
            ("weights", &weights),
            ("thresholds", &thresholds),
            ("sensor_costs", &sensor_costs),
        ] {
            if v.len() != n {
                return Err(GraphError::DimensionMismatch(format!(
                    "{name} has {} entries, expected {n}",
                    v.len()
                )));
            }
        }
        let laplacian = laplacian_unchecked(&adjacency, &self_loops);
        Ok(Self {
            n,
            adjacency,
            self_loops,
            weights,
            thresholds,
            sensor_costs,
            laplacian,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn self_loops(&self) -> &DVector<f64> {
        &self.self_loops
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn thresholds(&self) -> &DVector<f64> {
        &self.thresholds
    }

    pub fn sensor_costs(&self) -> &DVector<f64> {
        &self.sensor_costs
    }

    /// The in-degree Laplacian, computed once at construction.
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// A copy of this model with each self-loop gain increased by `eta`.
    pub fn with_self_loop_increment(&self, eta: f64) -> Self {
        let bumped = self.self_loops.map(|t| t + eta);
        Self {
            laplacian: laplacian_unchecked(&self.adjacency, &bumped),
            self_loops: bumped,
            ..self.clone()
        }
    }

    /// Returns an error unless [`validate_network`] reports no violations.
    pub fn ensure_valid(&self) -> Result<(), GraphError> {
        let report = validate_network(self);
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(GraphError::InvalidParameter(format!(
                "invalid model: {v}"
            ))),
        }
    }

    /// Loads a model from the JSON document format (see [`ModelJson`]).
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: ModelJson = serde_json::from_str(text)?;
        doc.into_model()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let doc = ModelJson {
            n: self.n,
            adjacency: self.adjacency.transpose().as_slice().to_vec(),
            self_loops: self.self_loops.as_slice().to_vec(),
            weights: self.weights.as_slice().to_vec(),
            thresholds: self.thresholds.as_slice().to_vec(),
            sensor_costs: self.sensor_costs.as_slice().to_vec(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
    }

    /// Laplacian rows as CSV, one row per line, for debugging.
    pub fn laplacian_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| format!("{}", self.laplacian[(i, j)]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// On-disk JSON layout for a [`NetworkModel`]; `adjacency` is dense and
/// row-major.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub n: usize,
    pub adjacency: Vec<f64>,
    pub self_loops: Vec<f64>,
    pub weights: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub sensor_costs: Vec<f64>,
}

impl ModelJson {
    pub fn into_model(self) -> Result<NetworkModel, GraphError> {
        let n = self.n;
        if n == 0 {
            return Err(GraphError::InvalidParameter("n must be >= 1".into()));
        }
        if self.adjacency.len() != n * n {
            return Err(GraphError::DimensionMismatch(format!(
                "adjacency has {} entries, expected n*n = {}",
                self.adjacency.len(),
                n * n
            )));
        }
        let adjacency = DMatrix::from_row_slice(n, n, &self.adjacency);
        NetworkModel::new(
            adjacency,
            DVector::from_vec(self.self_loops),
            DVector::from_vec(self.weights),
            DVector::from_vec(self.thresholds),
            DVector::from_vec(self.sensor_costs),
        )
    }
}

/// A single violated model invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NonzeroAdjacencyDiagonal { node: usize },
    NegativeAdjacencyEntry { i: usize, j: usize },
    NonPositiveSelfLoop { node: usize },
    NonPositiveWeight { node: usize },
    NonPositiveThreshold { node: usize },
    NonPositiveSensorCost { node: usize },
    NotStronglyConnected,
    LaplacianRowSumMismatch { node: usize, error: f64 },
    PositiveLaplacianOffDiagonal { i: usize, j: usize },
    NotHurwitz { spectral_abscissa: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonzeroAdjacencyDiagonal { node } => {
                write!(f, "nonzero adjacency diagonal at node {node}")
            }
            Violation::NegativeAdjacencyEntry { i, j } => {
                write!(f, "negative adjacency entry ({i},{j})")
            }
            Violation::NonPositiveSelfLoop { node } => {
                write!(f, "non-positive self-loop at node {node}")
            }
            Violation::NonPositiveWeight { node } => {
                write!(f, "non-positive weight at node {node}")
            }
            Violation::NonPositiveThreshold { node } => {
                write!(f, "non-positive threshold at node {node}")
            }
            Violation::NonPositiveSensorCost { node } => {
                write!(f, "non-positive sensor cost at node {node}")
            }
            Violation::NotStronglyConnected => write!(f, "not strongly connected"),
            Violation::LaplacianRowSumMismatch { node, error } => {
                write!(f, "laplacian row-sum mismatch at node {node} (error {error:.3e})")
            }
            Violation::PositiveLaplacianOffDiagonal { i, j } => {
                write!(f, "positive laplacian off-diagonal ({i},{j})")
            }
            Violation::NotHurwitz { spectral_abscissa } => {
                write!(f, "-L not Hurwitz (spectral abscissa {spectral_abscissa:.3e})")
            }
        }
    }
}

/// Result of [`validate_network`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Largest real part over the eigenvalues of `−L`; negative for a
    /// healthy model.
    pub spectral_abscissa: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Tolerance on the Hurwitz check; theory guarantees stability for valid
/// models, the numeric check catches bad user input.
pub const HURWITZ_TOL: f64 = 1e-9;

/// Checks every model invariant and reports the spectral abscissa of `−L`.
pub fn validate_network(model: &NetworkModel) -> ValidationReport {
    let n = model.n;
    let mut violations = Vec::new();
    for i in 0..n {
        if model.adjacency[(i, i)] != 0.0 {
            violations.push(Violation::NonzeroAdjacencyDiagonal { node: i });
        }
        for j in 0..n {
            if model.adjacency[(i, j)] < 0.0 {
                violations.push(Violation::NegativeAdjacencyEntry { i, j });
            }
        }
    }
    for i in 0..n {
        if !(model.self_loops[i] > 0.0) {
            violations.push(Violation::NonPositiveSelfLoop { node: i });
        }
        if !(model.weights[i] > 0.0) {
            violations.push(Violation::NonPositiveWeight { node: i });
        }
        if !(model.thresholds[i] > 0.0) {
            violations.push(Violation::NonPositiveThreshold { node: i });
        }
        if !(model.sensor_costs[i] > 0.0) {
            violations.push(Violation::NonPositiveSensorCost { node: i });
        }
    }
    if !is_strongly_connected(&model.adjacency).unwrap_or(false) {
        violations.push(Violation::NotStronglyConnected);
    }
    let l = &model.laplacian;
    for i in 0..n {
        let row_sum: f64 = l.row(i).iter().sum();
        let err = (row_sum - model.self_loops[i]).abs();
        if err > 1e-12 * model.self_loops[i].abs().max(1.0) {
            violations.push(Violation::LaplacianRowSumMismatch { node: i, error: err });
        }
        for j in 0..n {
            if i != j && l[(i, j)] > 0.0 {
                violations.push(Violation::PositiveLaplacianOffDiagonal { i, j });
            }
        }
    }
    let spectral_abscissa = (-l.clone())
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if spectral_abscissa >= -HURWITZ_TOL {
        violations.push(Violation::NotHurwitz { spectral_abscissa });
    }
    ValidationReport {
        violations,
        spectral_abscissa,
    }
}

/// Per-node defaults and the retry cap for random generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorParams {
    pub theta: f64,
    pub delta: f64,
    pub weight: f64,
    pub kappa: f64,
    pub max_draws: usize,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            theta: 0.7,
            delta: 0.5,
            weight: 1.0,
            kappa: 0.3,
            max_draws: 10_000,
        }
    }
}

/// Seeded Erdős–Rényi digraph: each ordered pair `(i, j)`, `i ≠ j`, carries a
/// unit-gain edge independently with probability `p`. Draws advance a
/// deterministic stream until the graph is strongly connected.
pub fn generate_erdos_renyi(
    n: usize,
    p: f64,
    seed: u64,
    params: &GeneratorParams,
) -> Result<NetworkModel, GraphError> {
    if n < 1 {
        return Err(GraphError::InvalidParameter("n must be >= 1".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(GraphError::InvalidParameter(format!(
            "edge probability must lie in (0, 1], got {p}"
        )));
    }
    for (name, v) in [
        ("theta", params.theta),
        ("delta", params.delta),
        ("weight", params.weight),
        ("kappa", params.kappa),
    ] {
        if !(v > 0.0) {
            return Err(GraphError::InvalidParameter(format!(
                "{name} must be strictly positive, got {v}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..params.max_draws {
        let mut adjacency = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < p {
                    adjacency[(i, j)] = 1.0;
                }
            }
        }
        if is_strongly_connected(&adjacency)? {
            let fill = |v: f64| DVector::from_element(n, v);
            return NetworkModel::new(
                adjacency,
                fill(params.theta),
                fill(params.weight),
                fill(params.delta),
                fill(params.kappa),
            );
        }
    }
    Err(GraphError::GenerationExhausted {
        draws: params.max_draws,
    })
}

/// Monitor nodes instrumented by the defender, with the sensor budget that
/// admitted them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorSet {
    nodes: Vec<usize>,
    budget: usize,
}

impl MonitorSet {
    pub fn new(mut nodes: Vec<usize>, budget: usize) -> Result<Self, GraphError> {
        nodes.sort_unstable();
        if let Some(w) = nodes.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateIndex(w[0]));
        }
        if nodes.len() > budget {
            return Err(GraphError::InvalidParameter(format!(
                "{} monitors exceed budget {budget}",
                nodes.len()
            )));
        }
        Ok(Self { nodes, budget })
    }

    pub fn empty(budget: usize) -> Self {
        Self { nodes: Vec::new(), budget }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn check_against(&self, n: usize) -> Result<(), GraphError> {
        match self.nodes.iter().find(|&&m| m >= n) {
            Some(&m) => Err(GraphError::IndexOutOfRange { index: m, n }),
            None => Ok(()),
        }
    }
}

/// Attack nodes and the shared per-channel energy bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    nodes: Vec<usize>,
    energy_bound: f64,
}

impl AttackScenario {
    pub fn new(mut nodes: Vec<usize>, energy_bound: f64) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::InvalidParameter(
                "attack set must contain at least one node".into(),
            ));
        }
        nodes.sort_unstable();
        if let Some(w) = nodes.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateIndex(w[0]));
        }
        if !(energy_bound > 0.0) {
            return Err(GraphError::InvalidParameter(format!(
                "attack energy bound must be strictly positive, got {energy_bound}"
            )));
        }
        Ok(Self { nodes, energy_bound })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn energy_bound(&self) -> f64 {
        self.energy_bound
    }

    pub fn check_against(&self, n: usize) -> Result<(), GraphError> {
        match self.nodes.iter().find(|&&a| a >= n) {
            Some(&a) => Err(GraphError::IndexOutOfRange { index: a, n }),
            None => Ok(()),
        }
    }

    /// Columns of the identity selecting the attack nodes (full column rank
    /// by construction).
    pub fn input_matrix(&self, n: usize) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(n, self.nodes.len());
        for (col, &a) in self.nodes.iter().enumerate() {
            b[(a, col)] = 1.0;
        }
        b
    }
}

/// One attack type: a cardinality and its prior probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackType {
    pub alpha: usize,
    pub prob: f64,
}

/// The defender's prior over attack-set cardinalities plus the per-channel
/// energy bound shared by all scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatModel {
    types: Vec<AttackType>,
    energy_bound: f64,
}

impl ThreatModel {
    pub fn new(types: Vec<AttackType>, energy_bound: f64) -> Result<Self, GraphError> {
        if types.is_empty() {
            return Err(GraphError::InvalidParameter(
                "threat model needs at least one attack type".into(),
            ));
        }
        if !(energy_bound > 0.0) {
            return Err(GraphError::InvalidParameter(format!(
                "energy_bound must be strictly positive, got {energy_bound}"
            )));
        }
        let sum: f64 = types.iter().map(|t| t.prob).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(GraphError::InvalidParameter(format!(
                "type probabilities sum to {sum}, expected 1"
            )));
        }
        for t in &types {
            if t.alpha == 0 {
                return Err(GraphError::InvalidParameter(
                    "attack type cardinality must be >= 1".into(),
                ));
            }
            if !(0.0..=1.0).contains(&t.prob) {
                return Err(GraphError::InvalidParameter(format!(
                    "probability {} outside [0, 1]",
                    t.prob
                )));
            }
        }
        for a in &types {
            for b in &types {
                if a.alpha == b.alpha && !std::ptr::eq(a, b) {
                    return Err(GraphError::InvalidParameter(format!(
                        "duplicate attack type cardinality {}",
                        a.alpha
                    )));
                }
                // Costlier attacks must be rarer.
                if a.alpha > b.alpha && a.prob >= b.prob {
                    return Err(GraphError::InvalidParameter(format!(
                        "type {} has probability {} >= probability {} of smaller type {}",
                        a.alpha, a.prob, b.prob, b.alpha
                    )));
                }
            }
        }
        Ok(Self { types, energy_bound })
    }

    pub fn types(&self) -> &[AttackType] {
        &self.types
    }

    pub fn energy_bound(&self) -> f64 {
        self.energy_bound
    }

    pub fn max_alpha(&self) -> usize {
        self.types.iter().map(|t| t.alpha).max().unwrap_or(0)
    }

    pub fn check_against(&self, n: usize) -> Result<(), GraphError> {
        match self.types.iter().find(|t| t.alpha > n) {
            Some(t) => Err(GraphError::InvalidParameter(format!(
                "attack type cardinality {} exceeds node count {n}",
                t.alpha
            ))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_rel_close, two_node_cycle};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    #[test]
    fn laplacian_two_node_cycle() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let theta = DVector::from_element(2, 0.7);
        let l = build_laplacian(&a, &theta).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.7, -1.0, -1.0, 1.7]);
        assert_eq!(l, expected);
    }

    #[test]
    fn laplacian_no_edges_is_diagonal() {
        let a = DMatrix::zeros(3, 3);
        let theta = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let l = build_laplacian(&a, &theta).unwrap();
        assert_eq!(l, DMatrix::from_diagonal(&theta));
    }

    #[test]
    fn laplacian_ring_row_sums_equal_theta() {
        let mut a = DMatrix::zeros(3, 3);
        a[(1, 0)] = 1.0;
        a[(2, 1)] = 1.0;
        a[(0, 2)] = 1.0;
        let l = build_laplacian(&a, &DVector::from_element(3, 0.7)).unwrap();
        for i in 0..3 {
            let row_sum: f64 = l.row(i).iter().sum();
            assert_rel_close(row_sum, 0.7, 1e-14);
        }
    }

    #[test]
    fn laplacian_rejects_bad_input() {
        let theta = DVector::from_element(2, 0.7);
        let negative = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(
            build_laplacian(&negative, &theta),
            Err(GraphError::NegativeAdjacency { .. })
        ));
        let ok = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            build_laplacian(&ok, &DVector::from_vec(vec![0.7, 0.0])),
            Err(GraphError::NonPositiveSelfLoop { node: 1, .. })
        ));
        assert!(matches!(
            build_laplacian(&ok, &DVector::from_element(3, 0.7)),
            Err(GraphError::DimensionMismatch(_))
        ));
        let diag = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 0.0]);
        assert!(matches!(
            build_laplacian(&diag, &theta),
            Err(GraphError::NonzeroAdjacencyDiagonal(0))
        ));
    }

    #[test]
    fn strong_connectivity_basics() {
        let both = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(is_strongly_connected(&both).unwrap());
        let one_way = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert!(!is_strongly_connected(&one_way).unwrap());
        assert!(is_strongly_connected(&DMatrix::zeros(1, 1)).unwrap());
        let rect = DMatrix::zeros(2, 3);
        assert!(is_strongly_connected(&rect).is_err());
    }

    /// The paper-style characterization: sum of boolean adjacency powers up
    /// to n-1 has no zero entry.
    fn strongly_connected_by_power_sum(a: &DMatrix<f64>) -> bool {
        let n = a.nrows();
        if n == 1 {
            return true;
        }
        let reach0: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)] > 0.0).collect())
            .collect();
        let mut acc = reach0.clone();
        let mut power = reach0.clone();
        for _ in 2..n {
            let mut next = vec![vec![false; n]; n];
            for i in 0..n {
                for k in 0..n {
                    if power[i][k] {
                        for j in 0..n {
                            next[i][j] |= reach0[k][j];
                        }
                    }
                }
            }
            power = next;
            for i in 0..n {
                for j in 0..n {
                    acc[i][j] |= power[i][j];
                }
            }
        }
        (0..n).all(|i| (0..n).all(|j| i == j || acc[i][j]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn reachability_matches_power_sum(n in 2usize..7, bits in proptest::collection::vec(any::<bool>(), 49)) {
            let mut a = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j && bits[i * 7 + j] {
                        a[(i, j)] = 1.0;
                    }
                }
            }
            prop_assert_eq!(
                is_strongly_connected(&a).unwrap(),
                strongly_connected_by_power_sum(&a)
            );
        }
    }

    #[test]
    fn generator_defaults_and_connectivity() {
        let model = generate_erdos_renyi(10, 0.25, 7, &GeneratorParams::default()).unwrap();
        assert_eq!(model.n(), 10);
        assert!(is_strongly_connected(model.adjacency()).unwrap());
        assert!(model.self_loops().iter().all(|&t| t == 0.7));
        assert!(model.thresholds().iter().all(|&d| d == 0.5));
        assert!(model.weights().iter().all(|&w| w == 1.0));
        assert!(model.sensor_costs().iter().all(|&k| k == 0.3));
    }

    #[test]
    fn generator_single_node_and_complete() {
        let one = generate_erdos_renyi(1, 0.5, 3, &GeneratorParams::default()).unwrap();
        assert_eq!(one.n(), 1);
        assert_eq!(one.adjacency()[(0, 0)], 0.0);
        let complete = generate_erdos_renyi(3, 1.0, 9, &GeneratorParams::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(complete.adjacency()[(i, j)], if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn generator_is_reproducible() {
        let a = generate_erdos_renyi(8, 0.3, 42, &GeneratorParams::default()).unwrap();
        let b = generate_erdos_renyi(8, 0.3, 42, &GeneratorParams::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_erdos_renyi(8, 0.3, 43, &GeneratorParams::default()).unwrap();
        assert!(a != c || a.adjacency() == c.adjacency());
    }

    #[test]
    fn validation_healthy_cycle() {
        let model = two_node_cycle(0.7);
        let report = validate_network(&model);
        assert!(report.is_valid(), "violations: {:?}", report.violations);
        assert_rel_close(report.spectral_abscissa, -0.7, 1e-9);
    }

    #[test]
    fn validation_flags_bad_models() {
        let model = NetworkModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.7]),
            DVector::from_element(2, 1.0),
            DVector::from_element(2, 0.5),
            DVector::from_element(2, 0.3),
        )
        .unwrap();
        let report = validate_network(&model);
        assert!(report
            .violations
            .contains(&Violation::NonPositiveSelfLoop { node: 0 }));

        let disconnected = NetworkModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            DVector::from_element(2, 0.7),
            DVector::from_element(2, 1.0),
            DVector::from_element(2, 0.5),
            DVector::from_element(2, 0.3),
        )
        .unwrap();
        let report = validate_network(&disconnected);
        assert!(report.violations.contains(&Violation::NotStronglyConnected));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn generated_models_satisfy_invariants(n in 2usize..9, seed in 0u64..500) {
            let model = generate_erdos_renyi(n, 0.4, seed, &GeneratorParams::default()).unwrap();
            let l = model.laplacian();
            for i in 0..n {
                let row_sum: f64 = l.row(i).iter().sum();
                prop_assert!((row_sum - model.self_loops()[i]).abs() <= 1e-12);
                prop_assert!(l[(i, i)] >= model.self_loops()[i]);
                for j in 0..n {
                    if i != j {
                        prop_assert!(l[(i, j)] <= 0.0);
                    }
                }
            }
            let report = validate_network(&model);
            prop_assert!(report.is_valid());
            prop_assert!(report.spectral_abscissa < 0.0);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let model = two_node_cycle(0.7);
        let text = model.to_json();
        let back = NetworkModel::from_json(&text).unwrap();
        assert_eq!(model, back);
        // row-major adjacency layout
        let doc: ModelJson = serde_json::from_str(&text).unwrap();
        assert_eq!(doc.adjacency, vec![0.0, 1.0, 1.0, 0.0]);
        assert!(NetworkModel::from_json("{\"n\":1}").is_err());
        assert!(NetworkModel::from_json("{\"n\":1,\"adjacency\":[0],\"self_loops\":[1],\"weights\":[1],\"thresholds\":[1],\"sensor_costs\":[1],\"extra\":3}").is_err());
    }

    #[test]
    fn laplacian_csv_layout() {
        let model = two_node_cycle(0.7);
        assert_eq!(model.laplacian_csv(), "1.7,-1\n-1,1.7\n");
    }

    #[test]
    fn monitor_set_invariants() {
        assert!(MonitorSet::new(vec![0, 1], 2).is_ok());
        assert!(matches!(
            MonitorSet::new(vec![0, 0], 3),
            Err(GraphError::DuplicateIndex(0))
        ));
        assert!(MonitorSet::new(vec![0, 1, 2], 2).is_err());
        let m = MonitorSet::new(vec![2, 0], 2).unwrap();
        assert_eq!(m.nodes(), &[0, 2]);
        assert!(m.check_against(3).is_ok());
        assert!(m.check_against(2).is_err());
    }

    #[test]
    fn attack_scenario_invariants() {
        assert!(AttackScenario::new(vec![], 1.0).is_err());
        assert!(AttackScenario::new(vec![0], 0.0).is_err());
        let a = AttackScenario::new(vec![3, 1], 10.0).unwrap();
        assert_eq!(a.nodes(), &[1, 3]);
        let b = a.input_matrix(4);
        assert_eq!(b[(1, 0)], 1.0);
        assert_eq!(b[(3, 1)], 1.0);
        assert_eq!(b.column(0).sum(), 1.0);
    }

    #[test]
    fn threat_model_invariants() {
        let ok = ThreatModel::new(
            vec![
                AttackType { alpha: 1, prob: 0.5 },
                AttackType { alpha: 2, prob: 0.35 },
                AttackType { alpha: 3, prob: 0.15 },
            ],
            10.0,
        );
        assert!(ok.is_ok());
        assert_eq!(ok.unwrap().max_alpha(), 3);

        // probabilities off by more than 1e-12
        assert!(ThreatModel::new(
            vec![AttackType { alpha: 1, prob: 0.6 }, AttackType { alpha: 2, prob: 0.5 }],
            10.0
        )
        .is_err());
        // larger attacks must be rarer
        assert!(ThreatModel::new(
            vec![AttackType { alpha: 1, prob: 0.4 }, AttackType { alpha: 2, prob: 0.6 }],
            10.0
        )
        .is_err());
        // duplicate cardinality
        assert!(ThreatModel::new(
            vec![AttackType { alpha: 2, prob: 0.5 }, AttackType { alpha: 2, prob: 0.5 }],
            10.0
        )
        .is_err());
    }
}
