//! Experiment harnesses: the optimality comparison between the exhaustive
//! search and the mixed-integer route over seeded random graphs, and the
//! full-versus-diagonal runtime comparison across network sizes.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::allocation::{
    optimal_allocation_enumerate, optimal_allocation_misdp, AllocationError, BigM,
    DEFAULT_MISDP_BLOCK_CAP, DEFAULT_MONITOR_SET_CAP,
};
use crate::disruption::{
    worst_case_disruption, DisruptionError, SolveMode, DEFAULT_ATTACK_SET_CAP,
};
use crate::graph::{
    generate_erdos_renyi, AttackScenario, GeneratorParams, GraphError, MonitorSet, ThreatModel,
};
use crate::scalable::{tune_self_loops, ScalableError};
use crate::sdp::SolveOptions;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Disruption(#[from] DisruptionError),
    #[error(transparent)]
    Scalable(#[from] ScalableError),
}

/// Parameters of the optimality comparison.
#[derive(Debug, Clone, Serialize)]
pub struct Fig1Config {
    pub n_graphs: usize,
    pub n: usize,
    pub p: f64,
    pub params: GeneratorParams,
    pub budget: usize,
    pub threat: ThreatModel,
    pub seed: u64,
}

/// One random graph's comparison row.
#[derive(Debug, Clone, Serialize)]
pub struct Fig1Row {
    pub graph: usize,
    pub seed: u64,
    pub cost_enumerate: f64,
    pub cost_bnb: f64,
    /// `(bnb − enumerate) / enumerate`, in percent.
    pub deviation_pct: f64,
    pub monitors_enumerate: Vec<usize>,
    pub monitors_bnb: Vec<usize>,
    pub bnb_nodes: usize,
}

/// Optimality comparison: for each seeded random graph, solve the
/// allocation by exhaustive search and by branch and bound, and record the
/// relative deviation.
pub fn experiment_fig1(
    cfg: &Fig1Config,
    mode: &SolveMode,
    opts: &SolveOptions,
) -> Result<Vec<Fig1Row>, ExperimentError> {
    let rows: Result<Vec<Fig1Row>, ExperimentError> = (0..cfg.n_graphs)
        .into_par_iter()
        .map(|g| {
            let seed = cfg.seed.wrapping_add(g as u64);
            let model = generate_erdos_renyi(cfg.n, cfg.p, seed, &cfg.params)?;
            let enumerate = optimal_allocation_enumerate(
                &model,
                &cfg.threat,
                cfg.budget,
                mode,
                opts,
                DEFAULT_MONITOR_SET_CAP,
                DEFAULT_ATTACK_SET_CAP,
            )?;
            let bnb = optimal_allocation_misdp(
                &model,
                &cfg.threat,
                cfg.budget,
                BigM::Exact,
                mode,
                opts,
                DEFAULT_MISDP_BLOCK_CAP,
                DEFAULT_ATTACK_SET_CAP,
            )?;
            let deviation_pct =
                (bnb.expected_cost - enumerate.expected_cost) / enumerate.expected_cost * 100.0;
            Ok(Fig1Row {
                graph: g,
                seed,
                cost_enumerate: enumerate.expected_cost,
                cost_bnb: bnb.expected_cost,
                deviation_pct,
                monitors_enumerate: enumerate.monitors,
                monitors_bnb: bnb.monitors,
                bnb_nodes: bnb.node_count,
            })
        })
        .collect();
    rows
}

/// Fixed CSV schema for the optimality comparison; float formatting is
/// pinned so equal seeds give byte-identical files.
pub fn fig1_csv(rows: &[Fig1Row]) -> String {
    let mut out =
        String::from("graph,seed,cost_enumerate,cost_bnb,deviation_pct,monitors_enumerate,monitors_bnb,bnb_nodes\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.6e},{},{},{}\n",
            r.graph,
            r.seed,
            r.cost_enumerate,
            r.cost_bnb,
            r.deviation_pct,
            join_ids(&r.monitors_enumerate),
            join_ids(&r.monitors_bnb),
            r.bnb_nodes,
        ));
    }
    out
}

fn join_ids(ids: &[usize]) -> String {
    if ids.is_empty() {
        "-".into()
    } else {
        ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("+")
    }
}

/// Parameters of the runtime comparison sweep.
#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    /// Timed repetitions after one discarded warm-up.
    pub reps: usize,
    pub p: f64,
    pub params: GeneratorParams,
    pub threat: ThreatModel,
    /// Monitors instrumented in the timed solves (lowest-index nodes).
    pub monitor_count: usize,
    pub seed: u64,
    pub eta0: f64,
    pub tune_max_iters: usize,
}

/// One size's comparison row.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub value_full: f64,
    pub value_diag: f64,
    pub time_full: f64,
    pub time_diag: f64,
    pub speedup: f64,
    pub tune_eta: f64,
}

/// Runtime comparison: per size, generate a connected graph, raise the
/// self-loop gains until the weighting condition certifies, then time the
/// disruption solve with a full and with a diagonal certificate on the same
/// instance. Timing runs are sequential.
pub fn benchmark_compare(
    cfg: &BenchConfig,
    opts: &SolveOptions,
) -> Result<Vec<BenchRow>, ExperimentError> {
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for (i, &n) in cfg.sizes.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        let model = generate_erdos_renyi(n, cfg.p, seed, &cfg.params)?;
        let tuned = tune_self_loops(
            &model,
            &cfg.threat,
            cfg.eta0,
            cfg.tune_max_iters,
            false,
            opts,
            DEFAULT_ATTACK_SET_CAP,
        )?;
        let alpha = cfg.threat.max_alpha().min(n);
        let attack = AttackScenario::new((0..alpha).collect(), cfg.threat.energy_bound())?;
        let m_count = cfg.monitor_count.min(n);
        let monitors = MonitorSet::new((0..m_count).collect(), m_count.max(1))?;

        let timed = |sdp_mode: &SolveMode| -> Result<(f64, f64), ExperimentError> {
            let mut value = 0.0;
            // warm-up discarded
            worst_case_disruption(&tuned.model, &monitors, &attack, sdp_mode, opts)?;
            let started = std::time::Instant::now();
            for _ in 0..cfg.reps.max(1) {
                value = worst_case_disruption(&tuned.model, &monitors, &attack, sdp_mode, opts)?
                    .value;
            }
            let elapsed = started.elapsed().as_secs_f64() / cfg.reps.max(1) as f64;
            Ok((value, elapsed))
        };

        let (value_full, time_full) = timed(&SolveMode::Full)?;
        let (value_diag, time_diag) =
            timed(&SolveMode::Diagonal(tuned.certificate.clone()))?;
        rows.push(BenchRow {
            n,
            value_full,
            value_diag,
            time_full,
            time_diag,
            speedup: time_full / time_diag,
            tune_eta: tuned.eta,
        });
    }
    Ok(rows)
}

/// Fixed CSV schema for the runtime comparison.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,value_full,value_diag,time_full_s,time_diag_s,speedup,tune_eta\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            r.n, r.value_full, r.value_diag, r.time_full, r.time_diag, r.speedup, r.tune_eta,
        ));
    }
    out
}
