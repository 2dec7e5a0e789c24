//! Run configuration: one strict JSON document binding a model source to
//! the operation parameters. Unknown keys are rejected everywhere — silent
//! typos in security-parameter names are dangerous.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    AttackType, GeneratorParams, GraphError, NetworkModel, ThreatModel,
};
use crate::sdp::SolveOptions;
use crate::sim::SinusoidTerm;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not well-formed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn schema(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema { field: field.into(), message: message.into() }
}

/// Where the model comes from; exactly one source must be given.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub n: usize,
    pub p: f64,
    #[serde(default)]
    pub params: GeneratorParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreatSpec {
    pub types: Vec<AttackType>,
    pub energy_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub feas_tol: f64,
    pub gap_rel: f64,
    pub gap_abs: f64,
    pub max_iter: u32,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self { feas_tol: d.feas_tol, gap_rel: d.gap_rel, gap_abs: d.gap_abs, max_iter: d.max_iter }
    }
}

impl SolverSpec {
    pub fn to_options(&self) -> SolveOptions {
        SolveOptions {
            feas_tol: self.feas_tol,
            gap_rel: self.gap_rel,
            gap_abs: self.gap_abs,
            max_iter: self.max_iter,
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub horizon: f64,
    pub dt: f64,
    /// Explicit per-channel terms; when absent, signals are drawn from the
    /// seeded admissible-attack sampler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<Vec<Vec<SinusoidTerm>>>,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self { horizon: 40.0, dt: 1e-3, attack: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneSpec {
    pub eta0: f64,
    pub max_iters: usize,
    pub shrink: bool,
}

impl Default for TuneSpec {
    fn default() -> Self {
        Self { eta0: 0.1, max_iters: 200, shrink: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1Spec {
    pub n_graphs: usize,
    pub n: usize,
    pub p: f64,
}

impl Default for Fig1Spec {
    fn default() -> Self {
        Self { n_graphs: 20, n: 10, p: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub p: f64,
    pub monitor_count: usize,
    pub eta0: f64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self { sizes: vec![10, 20, 35, 50], reps: 2, p: 0.25, monitor_count: 2, eta0: 2.0 }
    }
}

/// Certificate mode requested for the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Full,
    Diagonal,
}

/// Raw document; see [`RunConfig::parse`] for the validated form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigDoc {
    pub model: ModelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threat: Option<ThreatSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitors: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_nodes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub tune: TuneSpec,
    #[serde(default)]
    pub fig1: Fig1Spec,
    #[serde(default)]
    pub bench: BenchSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub doc: RunConfigDoc,
}

impl RunConfig {
    /// Parses and validates a JSON document: strict schema, range checks on
    /// every numeric field, and existence of referenced files.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let doc: RunConfigDoc = serde_json::from_str(text)?;
        Self::validate(doc)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn validate(doc: RunConfigDoc) -> Result<Self, ConfigError> {
        match (&doc.model.file, &doc.model.generate) {
            (Some(_), Some(_)) => {
                return Err(schema("model", "give exactly one of `file` or `generate`"))
            }
            (None, None) => {
                return Err(schema("model", "give one of `file` or `generate`"))
            }
            (Some(path), None) => {
                if !path.exists() {
                    return Err(ConfigError::MissingFile(path.clone()));
                }
            }
            (None, Some(g)) => {
                if g.n < 1 {
                    return Err(schema("model.generate.n", "must be at least 1"));
                }
                if !(g.p > 0.0 && g.p <= 1.0) {
                    return Err(schema("model.generate.p", "must lie in (0, 1]"));
                }
                for (name, v) in [
                    ("theta", g.params.theta),
                    ("delta", g.params.delta),
                    ("weight", g.params.weight),
                    ("kappa", g.params.kappa),
                ] {
                    if !(v > 0.0) {
                        return Err(schema(
                            &format!("model.generate.params.{name}"),
                            "must be strictly positive",
                        ));
                    }
                }
            }
        }
        if let Some(threat) = &doc.threat {
            if !(threat.energy_bound > 0.0) {
                return Err(schema("threat.energy_bound", "must be strictly positive"));
            }
            // Full construction check: probabilities, distinctness, and the
            // rarer-when-costlier ordering.
            ThreatModel::new(threat.types.clone(), threat.energy_bound)
                .map_err(|e| schema("threat", e.to_string()))?;
        }
        for (name, v) in [("solver.feas_tol", doc.solver.feas_tol),
                          ("solver.gap_rel", doc.solver.gap_rel),
                          ("solver.gap_abs", doc.solver.gap_abs)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(schema(name, "must be a positive finite tolerance"));
            }
        }
        if !(doc.sim.horizon > 0.0) {
            return Err(schema("sim.horizon", "must be strictly positive"));
        }
        if !(doc.sim.dt > 0.0 && doc.sim.dt <= doc.sim.horizon / 100.0) {
            return Err(schema("sim.dt", "must be positive and at most horizon/100"));
        }
        if !(doc.tune.eta0 > 0.0) {
            return Err(schema("tune.eta0", "must be strictly positive"));
        }
        if doc.fig1.n_graphs < 1 || doc.fig1.n < 1 {
            return Err(schema("fig1", "n_graphs and n must be at least 1"));
        }
        if !(doc.fig1.p > 0.0 && doc.fig1.p <= 1.0) {
            return Err(schema("fig1.p", "must lie in (0, 1]"));
        }
        if doc.bench.sizes.is_empty() || doc.bench.sizes.iter().any(|&n| n < 1) {
            return Err(schema("bench.sizes", "must list sizes of at least 1"));
        }
        if !(doc.bench.p > 0.0 && doc.bench.p <= 1.0) {
            return Err(schema("bench.p", "must lie in (0, 1]"));
        }
        if !(doc.bench.eta0 > 0.0) {
            return Err(schema("bench.eta0", "must be strictly positive"));
        }
        Ok(Self { doc })
    }

    /// Loads or generates the configured model.
    pub fn load_model(&self) -> Result<NetworkModel, ConfigError> {
        match (&self.doc.model.file, &self.doc.model.generate) {
            (Some(path), None) => Ok(NetworkModel::from_json_file(path)?),
            (None, Some(g)) => Ok(crate::graph::generate_erdos_renyi(
                g.n,
                g.p,
                self.doc.seed,
                &g.params,
            )?),
            _ => unreachable!("validated to exactly one source"),
        }
    }

    pub fn threat(&self) -> Result<Option<ThreatModel>, ConfigError> {
        match &self.doc.threat {
            None => Ok(None),
            Some(t) => Ok(Some(
                ThreatModel::new(t.types.clone(), t.energy_bound)
                    .map_err(|e| schema("threat", e.to_string()))?,
            )),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        self.doc.solver.to_options()
    }
}
