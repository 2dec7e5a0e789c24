//! Attack-energy-constrained output-to-output gain: the worst squared-L2
//! performance disruption a stealthy, per-channel energy-bounded injection
//! can cause, together with the quantities the defender derives from it.
//!
//! The gain `V(M, A)` for a monitor set `M` and attack set `A` is certified
//! through its dual semidefinite program: minimise
//! `Σ_m γ_m δ_m + E·Σ_j ψ_j` over stealthiness multipliers `γ`, energy
//! multipliers `ψ`, and a storage certificate `P ⪰ 0` subject to
//!
//! ```text
//! [ −LᵀP − P L + W² − Σ_m γ_m e_m e_mᵀ    P B_A        ]
//! [ B_AᵀP                                 −diag(ψ)     ]  ⪯ 0.
//! ```
//!
//! The per-type worst case `Q(M|α)` maximises `V` over all attack sets of
//! cardinality `α`, one subproblem per set; the decomposition returns the
//! same optimum as the stacked program and the subproblems are independent.

use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{AttackScenario, AttackType, GraphError, MonitorSet, NetworkModel, ThreatModel};
use crate::scalable::ScalabilityCertificate;
use crate::sdp::{LinExpr, LmiBlock, MatId, SdpError, SdpProblem, SolveOptions, SolveStatusKind, VarId};

/// Relative tolerance for value comparisons, one order above the solver gap.
pub const REL_TOL: f64 = 1e-6;

/// Refusal threshold on enumerated attack sets per type.
pub const DEFAULT_ATTACK_SET_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum DisruptionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("solver returned {status:?} on the disruption program")]
    Solver { status: SolveStatusKind },
    #[error("diagonal certificate mode refused: {0}")]
    DiagonalNotCertified(String),
    #[error("enumeration of {needed} attack sets exceeds the cap {cap}")]
    EnumerationCap { needed: usize, cap: usize },
}

/// Certificate shape used by a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CertKind {
    #[serde(rename = "full-certificate")]
    Full,
    #[serde(rename = "diagonal-certificate")]
    Diagonal,
}

/// Whether to solve with a full storage matrix or the diagonal one enabled
/// by a certified weighting condition.
#[derive(Debug, Clone)]
pub enum SolveMode {
    Full,
    /// Carries the certificate produced by the scalability check; solving is
    /// refused unless it holds and covers the requested monitor set.
    Diagonal(ScalabilityCertificate),
}

impl SolveMode {
    pub fn kind(&self) -> CertKind {
        match self {
            SolveMode::Full => CertKind::Full,
            SolveMode::Diagonal(_) => CertKind::Diagonal,
        }
    }

    fn authorize(&self, monitors: &[usize]) -> Result<bool, DisruptionError> {
        match self {
            SolveMode::Full => Ok(false),
            SolveMode::Diagonal(cert) => {
                if !cert.holds {
                    return Err(DisruptionError::DiagonalNotCertified(
                        "weighting condition does not hold for this model".into(),
                    ));
                }
                if !cert.covers(monitors) {
                    return Err(DisruptionError::DiagonalNotCertified(
                        "certificate scope does not cover the requested monitor set".into(),
                    ));
                }
                Ok(true)
            }
        }
    }
}

/// Optimal multipliers and certificate for one `(M, A)` pair.
#[derive(Debug, Clone)]
pub struct DisruptionResult {
    /// `V(M, A)` in squared-L2 impact units.
    pub value: f64,
    /// Stealthiness multiplier per monitor node.
    pub gammas: BTreeMap<usize, f64>,
    /// Energy multiplier per attack node.
    pub psis: BTreeMap<usize, f64>,
    /// Storage certificate `P`; diagonal in diagonal mode.
    pub certificate: DMatrix<f64>,
    pub mode: CertKind,
    pub solver_status: SolveStatusKind,
}

impl DisruptionResult {
    /// Reassembles the dual LMI block from the stored multipliers and
    /// certificate, for independent feasibility checking.
    pub fn assemble_lmi(&self, model: &NetworkModel, attack: &AttackScenario) -> DMatrix<f64> {
        let n = model.n();
        let mut omega = nalgebra::DVector::zeros(n);
        for (&m, &g) in &self.gammas {
            omega[m] = g;
        }
        let psi: Vec<f64> = attack.nodes().iter().map(|a| self.psis[a]).collect();
        dual_lmi_dense(model, &omega, attack, &psi, &self.certificate)
    }
}

/// Direct dense evaluation of the dual LMI block
/// `[−LᵀP−PL+W²−diag(ω), PB; BᵀP, −diag(ψ)]`.
///
/// Written independently of the SDP assembly so the two construction paths
/// check each other.
pub fn dual_lmi_dense(
    model: &NetworkModel,
    omega: &nalgebra::DVector<f64>,
    attack: &AttackScenario,
    psi: &[f64],
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = model.n();
    let alpha = attack.len();
    let l = model.laplacian();
    let b = attack.input_matrix(n);
    let mut top_left = -(l.transpose() * p) - p * l;
    for i in 0..n {
        top_left[(i, i)] += model.weights()[i] * model.weights()[i] - omega[i];
    }
    let pb = p * &b;
    let mut m = DMatrix::zeros(n + alpha, n + alpha);
    m.view_mut((0, 0), (n, n)).copy_from(&top_left);
    m.view_mut((0, n), (n, alpha)).copy_from(&pb);
    m.view_mut((n, 0), (alpha, n)).copy_from(&pb.transpose());
    for j in 0..alpha {
        m[(n + j, n + j)] = -psi[j];
    }
    m
}

/// Handles into the SDP built by [`build_disruption_sdp`].
pub struct DisruptionVars {
    pub gammas: Vec<(usize, VarId)>,
    pub psis: Vec<(usize, VarId)>,
    pub p: MatId,
}

/// Builds the dual program for one `(M, A)` pair. The returned problem has
/// exactly `|M| + |A|` scalar slots plus `n(n+1)/2` (full) or `n` (diagonal)
/// certificate slots.
pub fn build_disruption_sdp(
    model: &NetworkModel,
    monitors: &[usize],
    attack: &AttackScenario,
    diagonal: bool,
) -> (SdpProblem, DisruptionVars) {
    let n = model.n();
    let _alpha = attack.len();
    let energy = attack.energy_bound();
    let mut prob = SdpProblem::new();

    let gammas: Vec<(usize, VarId)> = monitors
        .iter()
        .map(|&m| (m, prob.add_scalar(format!("gamma_{m}"), true)))
        .collect();
    let psis: Vec<(usize, VarId)> = attack
        .nodes()
        .iter()
        .map(|&a| (a, prob.add_scalar(format!("psi_{a}"), true)))
        .collect();
    let p = prob.add_matrix("P", n, diagonal);

    let mut objective = LinExpr::default();
    for &(m, var) in &gammas {
        objective.push(var, model.thresholds()[m]);
    }
    for &(_, var) in &psis {
        objective.push(var, energy);
    }
    prob.set_objective(objective);

    let lmi = dual_lmi_block_for(model, &prob, &gammas, &psis, p, attack);
    prob.add_lmi(lmi);
    (prob, DisruptionVars { gammas, psis, p })
}

/// Populates the dual LMI block coefficient by coefficient. The `gammas`
/// slots land as `−γ` on the named diagonal entries, which covers both the
/// per-monitor multipliers and the lifted `ω` vector of the allocation
/// program.
pub(crate) fn dual_lmi_block_for(
    model: &NetworkModel,
    prob: &SdpProblem,
    gammas: &[(usize, VarId)],
    psis: &[(usize, VarId)],
    p: MatId,
    attack: &AttackScenario,
) -> LmiBlock {
    let n = model.n();
    let alpha = attack.len();
    let l = model.laplacian();
    let diagonal = prob.is_diagonal(p);
    let mut lmi = LmiBlock::new(n + alpha);

    for i in 0..n {
        let w = model.weights()[i];
        lmi.add_const(i, i, w * w);
    }
    for &(m, var) in gammas {
        lmi.add_term(var, m, m, -1.0);
    }
    for (j, &(_, var)) in psis.iter().enumerate() {
        lmi.add_term(var, n + j, n + j, -1.0);
    }

    // Contribution of certificate slot (k, l), k <= l, to −LᵀP − P L:
    // upper-triangle families; overlapping indices accumulate.
    for l_idx in 0..n {
        for k_idx in 0..=l_idx {
            if diagonal && k_idx != l_idx {
                continue;
            }
            let slot = prob.mat_slot(p, k_idx, l_idx);
            if k_idx == l_idx {
                let k = k_idx;
                for r in 0..=k {
                    lmi.add_term(slot, r, k, -l[(k, r)]);
                }
                for c in k..n {
                    lmi.add_term(slot, k, c, -l[(k, c)]);
                }
            } else {
                let (k, lq) = (k_idx, l_idx);
                for r in 0..=lq {
                    lmi.add_term(slot, r, lq, -l[(k, r)]);
                }
                for r in 0..=k {
                    lmi.add_term(slot, r, k, -l[(lq, r)]);
                }
                for c in k..n {
                    lmi.add_term(slot, k, c, -l[(lq, c)]);
                }
                for c in lq..n {
                    lmi.add_term(slot, lq, c, -l[(k, c)]);
                }
            }
            // P B block: column n + j selects P[:, a_j].
            for (j, &a) in attack.nodes().iter().enumerate() {
                if a == l_idx {
                    lmi.add_term(slot, k_idx, n + j, 1.0);
                }
                if a == k_idx && k_idx != l_idx {
                    lmi.add_term(slot, l_idx, n + j, 1.0);
                }
            }
        }
    }
    lmi
}

/// Worst-case disruption `V(M, A)`: the optimum of the dual program. An
/// empty monitor set is legal and yields the unconstrained bound `V_∞(A)`.
pub fn worst_case_disruption(
    model: &NetworkModel,
    monitors: &MonitorSet,
    attack: &AttackScenario,
    mode: &SolveMode,
    opts: &SolveOptions,
) -> Result<DisruptionResult, DisruptionError> {
    model.ensure_valid()?;
    monitors.check_against(model.n())?;
    attack.check_against(model.n())?;
    let diagonal = mode.authorize(monitors.nodes())?;
    solve_disruption_unchecked(model, monitors.nodes(), attack, diagonal, mode.kind(), opts)
}

/// Inner solve without model revalidation, for enumeration loops.
pub(crate) fn solve_disruption_unchecked(
    model: &NetworkModel,
    monitors: &[usize],
    attack: &AttackScenario,
    diagonal: bool,
    kind: CertKind,
    opts: &SolveOptions,
) -> Result<DisruptionResult, DisruptionError> {
    let (prob, vars) = build_disruption_sdp(model, monitors, attack, diagonal);
    let sol = prob.solve(opts)?;
    if sol.status != SolveStatusKind::Optimal {
        return Err(DisruptionError::Solver { status: sol.status });
    }
    let gammas = vars
        .gammas
        .iter()
        .map(|&(m, slot)| (m, sol.raw()[slot].max(0.0)))
        .collect();
    let psis = vars
        .psis
        .iter()
        .map(|&(a, slot)| (a, sol.raw()[slot].max(0.0)))
        .collect();
    let certificate = sol
        .matrix("P")
        .expect("certificate variable always present")
        .clone();
    Ok(DisruptionResult {
        value: sol.objective_value,
        gammas,
        psis,
        certificate,
        mode: kind,
        solver_status: sol.status,
    })
}

/// Unconstrained bound `V_∞(A) = V(∅, A)`: per-channel energy limits only
/// (a diagonal norm-bound rather than a single aggregate constraint).
pub fn v_infinity(
    model: &NetworkModel,
    attack: &AttackScenario,
    mode: &SolveMode,
    opts: &SolveOptions,
) -> Result<f64, DisruptionError> {
    worst_case_disruption(model, &MonitorSet::empty(0), attack, mode, opts).map(|r| r.value)
}

/// Worst case over one attack type.
#[derive(Debug, Clone, Serialize)]
pub struct TypeWorstCase {
    pub alpha: usize,
    /// `Q(M|α)`.
    pub value: f64,
    pub argmax_attack: Vec<usize>,
    pub per_attack_values: BTreeMap<Vec<usize>, f64>,
}

/// Number of `k`-subsets of `n` items, saturating.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// All attack sets of cardinality `alpha`, lexicographically ordered.
pub fn attack_sets(n: usize, alpha: usize) -> Vec<Vec<usize>> {
    (0..n).combinations(alpha).collect()
}

/// `Q(M|α)`: enumerates every attack set of cardinality `alpha`, solves the
/// per-set subproblems independently, and reduces by maximum. Ties go to the
/// lexicographically smallest set regardless of scheduling.
pub fn worst_case_over_attacks(
    model: &NetworkModel,
    monitors: &MonitorSet,
    alpha: usize,
    threat: &ThreatModel,
    mode: &SolveMode,
    opts: &SolveOptions,
    cap: usize,
) -> Result<TypeWorstCase, DisruptionError> {
    model.ensure_valid()?;
    monitors.check_against(model.n())?;
    let n = model.n();
    if alpha == 0 || alpha > n {
        return Err(DisruptionError::Graph(GraphError::InvalidParameter(format!(
            "attack type cardinality {alpha} outside 1..={n}"
        ))));
    }
    let needed = binomial(n, alpha);
    if needed > cap {
        return Err(DisruptionError::EnumerationCap { needed, cap });
    }
    let diagonal = mode.authorize(monitors.nodes())?;
    let sets = attack_sets(n, alpha);
    let energy = threat.energy_bound();
    let values: Vec<(Vec<usize>, f64)> = sets
        .into_par_iter()
        .map(|set| {
            let attack = AttackScenario::new(set.clone(), energy)?;
            let r = solve_disruption_unchecked(model, monitors.nodes(), &attack, diagonal, mode.kind(), opts)?;
            Ok((set, r.value))
        })
        .collect::<Result<_, DisruptionError>>()?;

    // Sequential reduction in lexicographic order keeps the argmax
    // deterministic under any parallel schedule.
    let mut best: Option<(&Vec<usize>, f64)> = None;
    for (set, value) in &values {
        if best.map_or(true, |(_, bv)| *value > bv) {
            best = Some((set, *value));
        }
    }
    let (argmax, value) = best.expect("at least one attack set");
    Ok(TypeWorstCase {
        alpha,
        value,
        argmax_attack: argmax.clone(),
        per_attack_values: values.into_iter().collect(),
    })
}

/// Per-type worst cases with the sensor cost folded in.
#[derive(Debug, Clone, Serialize)]
pub struct DefenseCost {
    pub monitors: Vec<usize>,
    pub sensor_cost: f64,
    /// `(type, Q(M|α_k), U(M|α_k))` per attack type.
    pub per_type: Vec<(AttackType, TypeWorstCase, f64)>,
    /// `R(M) = Σ_k φ_k U(M|α_k)`.
    pub expected: f64,
}

/// Defender cost of a monitor set: `U(M|α_k) = c_s(M) + Q(M|α_k)` per type
/// and the expectation over the type prior.
pub fn defense_cost(
    model: &NetworkModel,
    monitors: &MonitorSet,
    threat: &ThreatModel,
    mode: &SolveMode,
    opts: &SolveOptions,
    cap: usize,
) -> Result<DefenseCost, DisruptionError> {
    threat.check_against(model.n())?;
    let sensor_cost: f64 = monitors
        .nodes()
        .iter()
        .map(|&m| model.sensor_costs()[m])
        .sum();
    let mut per_type = Vec::with_capacity(threat.types().len());
    let mut expected = 0.0;
    for t in threat.types() {
        let q = worst_case_over_attacks(model, monitors, t.alpha, threat, mode, opts, cap)?;
        let u = sensor_cost + q.value;
        expected += t.prob * u;
        per_type.push((*t, q, u));
    }
    Ok(DefenseCost {
        monitors: monitors.nodes().to_vec(),
        sensor_cost,
        per_type,
        expected,
    })
}

/// Exact multiplier bound `[min_i δ_i]⁻¹ · max_k max_{A} V_∞(A)`: dominates
/// every optimal stealthiness multiplier, which is what links binary monitor
/// indicators to the continuous multipliers in the allocation program.
pub fn multiplier_bound(
    model: &NetworkModel,
    threat: &ThreatModel,
    mode: &SolveMode,
    opts: &SolveOptions,
    cap: usize,
) -> Result<f64, DisruptionError> {
    model.ensure_valid()?;
    threat.check_against(model.n())?;
    let min_delta = model.thresholds().min();
    let mut max_vinf = f64::NEG_INFINITY;
    for t in threat.types() {
        let needed = binomial(model.n(), t.alpha);
        if needed > cap {
            return Err(DisruptionError::EnumerationCap { needed, cap });
        }
        let q = worst_case_over_attacks(
            model,
            &MonitorSet::empty(0),
            t.alpha,
            threat,
            mode,
            opts,
            cap,
        )?;
        max_vinf = max_vinf.max(q.value);
    }
    Ok(max_vinf / min_delta)
}
