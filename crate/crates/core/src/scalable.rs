//! Scalable certificate track: the weighting condition under which a
//! diagonal storage certificate loses no optimality, the self-loop tuning
//! procedure that enforces it, and the positive-system checks backing the
//! diagonal KYP certificate.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::disruption::{
    worst_case_over_attacks, DisruptionError, SolveMode, DEFAULT_ATTACK_SET_CAP,
};
use crate::graph::{AttackScenario, MonitorSet, NetworkModel, ThreatModel};
use crate::sdp::{check_lmi_feasibility, SdpError, SolveOptions};

#[derive(Debug, Error)]
pub enum ScalableError {
    #[error(transparent)]
    Disruption(#[from] DisruptionError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("tuning did not certify the condition within {iters} evaluations (last margin {last_margin:.6e})")]
    TuningExhausted { iters: usize, last_margin: f64 },
    #[error("largest unconstrained gain failed to decrease when self-loops grew (eta {eta_prev} -> {eta}: {v_prev} -> {v})")]
    NonMonotoneTuning { eta_prev: f64, eta: f64, v_prev: f64, v: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("diagonal certificate entries must be strictly positive")]
    NonPositiveCertificate,
}

/// Which alarm thresholds enter the condition's `min δ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DeltaScope {
    /// Conservative default: one certification covers every monitor set the
    /// allocator may choose.
    AllNodes,
    MonitorSet(Vec<usize>),
}

/// Outcome of checking `min_i w_i² ≥ [min δ]⁻¹ · max_A V_∞(A)`.
#[derive(Debug, Clone, Serialize)]
pub struct ScalabilityCertificate {
    pub holds: bool,
    /// `min_i w_i² − [min δ]⁻¹ · max_A V_∞(A)`; non-negative iff the
    /// condition holds (the boundary counts as holding).
    pub margin: f64,
    pub max_v_infinity: f64,
    pub worst_attack: Vec<usize>,
    pub scope: DeltaScope,
}

impl ScalabilityCertificate {
    /// Whether this certificate authorizes diagonal solves for `monitors`.
    pub fn covers(&self, monitors: &[usize]) -> bool {
        self.holds
            && match &self.scope {
                DeltaScope::AllNodes => true,
                DeltaScope::MonitorSet(set) => set.as_slice() == monitors,
            }
    }
}

fn min_delta_for_scope(model: &NetworkModel, scope: &DeltaScope) -> f64 {
    match scope {
        DeltaScope::AllNodes => model.thresholds().min(),
        DeltaScope::MonitorSet(set) if set.is_empty() => model.thresholds().min(),
        DeltaScope::MonitorSet(set) => set
            .iter()
            .map(|&m| model.thresholds()[m])
            .fold(f64::INFINITY, f64::min),
    }
}

/// Checks the weighting condition. The maximum of `V_∞` is taken over the
/// largest attack type only: every smaller set extends to a larger one whose
/// extra channels may inject zero, so the largest type dominates.
pub fn check_scalability_condition(
    model: &NetworkModel,
    threat: &ThreatModel,
    scope: DeltaScope,
    opts: &SolveOptions,
    cap: usize,
) -> Result<ScalabilityCertificate, ScalableError> {
    model.ensure_valid().map_err(DisruptionError::from)?;
    threat.check_against(model.n()).map_err(DisruptionError::from)?;
    let alpha = threat.max_alpha();
    // The condition must be certified with full certificates before diagonal
    // ones may be trusted; no bootstrapping.
    let q = worst_case_over_attacks(
        model,
        &MonitorSet::empty(0),
        alpha,
        threat,
        &SolveMode::Full,
        opts,
        cap,
    )?;
    let min_w2 = model.weights().iter().map(|w| w * w).fold(f64::INFINITY, f64::min);
    let min_delta = min_delta_for_scope(model, &scope);
    let margin = min_w2 - q.value / min_delta;
    Ok(ScalabilityCertificate {
        holds: margin >= 0.0,
        margin,
        max_v_infinity: q.value,
        worst_attack: q.argmax_attack,
        scope,
    })
}

/// One condition evaluation during tuning.
#[derive(Debug, Clone, Serialize)]
pub struct TuneStep {
    pub eta: f64,
    pub max_v_infinity: f64,
    pub margin: f64,
    pub holds: bool,
}

/// Result of [`tune_self_loops`].
#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub model: NetworkModel,
    pub eta: f64,
    pub certificate: ScalabilityCertificate,
    pub steps: Vec<TuneStep>,
}

/// Bisection width on the self-loop increment.
pub const TUNE_BISECTION_TOL: f64 = 1e-3;

/// Raises all self-loop gains uniformly until the weighting condition
/// holds: the increment doubles from `eta0` and, when `shrink_to_margin` is
/// set, is then bisected to within `1e-3` of the smallest sufficient value.
///
/// Growing the gains strictly shrinks the unconstrained gain, which is
/// asserted across the evaluated increments.
pub fn tune_self_loops(
    model: &NetworkModel,
    threat: &ThreatModel,
    eta0: f64,
    max_iters: usize,
    shrink_to_margin: bool,
    opts: &SolveOptions,
    cap: usize,
) -> Result<TuneOutcome, ScalableError> {
    let mut steps: Vec<TuneStep> = Vec::new();
    let check = |eta: f64, steps: &mut Vec<TuneStep>| -> Result<ScalabilityCertificate, ScalableError> {
        let candidate = model.with_self_loop_increment(eta);
        let cert =
            check_scalability_condition(&candidate, threat, DeltaScope::AllNodes, opts, cap)?;
        steps.push(TuneStep {
            eta,
            max_v_infinity: cert.max_v_infinity,
            margin: cert.margin,
            holds: cert.holds,
        });
        Ok(cert)
    };

    let base = check(0.0, &mut steps)?;
    if base.holds {
        return Ok(TuneOutcome {
            model: model.clone(),
            eta: 0.0,
            certificate: base,
            steps,
        });
    }

    let mut eta_lo = 0.0; // condition fails here
    let mut eta = eta0.max(f64::MIN_POSITIVE);
    let mut cert;
    loop {
        if steps.len() >= max_iters {
            let last_margin = steps.last().map(|s| s.margin).unwrap_or(f64::NEG_INFINITY);
            return Err(ScalableError::TuningExhausted { iters: steps.len(), last_margin });
        }
        cert = check(eta, &mut steps)?;
        assert_monotone(&steps)?;
        if cert.holds {
            break;
        }
        eta_lo = eta;
        eta *= 2.0;
    }

    let mut eta_hi = eta;
    if shrink_to_margin {
        while eta_hi - eta_lo > TUNE_BISECTION_TOL {
            if steps.len() >= max_iters {
                let last_margin = steps.last().map(|s| s.margin).unwrap_or(f64::NEG_INFINITY);
                return Err(ScalableError::TuningExhausted { iters: steps.len(), last_margin });
            }
            let mid = 0.5 * (eta_lo + eta_hi);
            let mid_cert = check(mid, &mut steps)?;
            assert_monotone(&steps)?;
            if mid_cert.holds {
                eta_hi = mid;
                cert = mid_cert;
            } else {
                eta_lo = mid;
            }
        }
    }

    Ok(TuneOutcome {
        model: model.with_self_loop_increment(eta_hi),
        eta: eta_hi,
        certificate: cert,
        steps,
    })
}

/// The unconstrained gain must strictly shrink as the increment grows;
/// tolerate only eigenvalue-level noise.
fn assert_monotone(steps: &[TuneStep]) -> Result<(), ScalableError> {
    let mut ordered: Vec<&TuneStep> = steps.iter().collect();
    ordered.sort_by(|a, b| a.eta.total_cmp(&b.eta));
    for w in ordered.windows(2) {
        if w[1].max_v_infinity >= w[0].max_v_infinity + 1e-9 {
            return Err(ScalableError::NonMonotoneTuning {
                eta_prev: w[0].eta,
                eta: w[1].eta,
                v_prev: w[0].max_v_infinity,
                v: w[1].max_v_infinity,
            });
        }
    }
    Ok(())
}

/// Structural positivity of the attacked dynamics: `−L` Metzler,
/// non-negative input columns, non-negative stacked outputs. Always true for
/// a validated model; guards file-loaded data that bypassed validation.
pub fn verify_positive_system(
    model: &NetworkModel,
    attack: &AttackScenario,
    monitors: &MonitorSet,
) -> bool {
    let n = model.n();
    if attack.check_against(n).is_err() || monitors.check_against(n).is_err() {
        return false;
    }
    let l = model.laplacian();
    for i in 0..n {
        for j in 0..n {
            if i != j && -l[(i, j)] < 0.0 {
                return false;
            }
        }
    }
    // Input matrix entries are canonical basis columns, hence non-negative
    // by construction; the stacked output is W on top of the monitor
    // selector rows scaled by sqrt(gamma) >= 0.
    model.weights().iter().all(|&w| w >= 0.0)
}

/// Verifies a diagonal certificate against the positive-system KYP block
///
/// ```text
/// [ −LᵀP − P L + C₂ᵀC₂ − C₁ᵀC₁   P B   ]
/// [ BᵀP                          −Γ    ]  ⪯ 0
/// ```
///
/// with `C₂ = W`, `C₁` the √γ-scaled monitor selectors, and `Γ = diag(ψ)`,
/// plus the element-wise hypothesis `C₂ᵀC₂ ≥ C₁ᵀC₁`, which for this data is
/// `w_m² ≥ γ_m` per monitored node.
pub fn kyp_certificate_check(
    model: &NetworkModel,
    attack: &AttackScenario,
    monitors: &MonitorSet,
    gammas: &BTreeMap<usize, f64>,
    psis: &BTreeMap<usize, f64>,
    certificate: &DVector<f64>,
    tol: f64,
) -> Result<bool, ScalableError> {
    let n = model.n();
    if certificate.len() != n {
        return Err(ScalableError::Dimension(format!(
            "certificate has {} entries, expected {n}",
            certificate.len()
        )));
    }
    for m in monitors.nodes() {
        if !gammas.contains_key(m) {
            return Err(ScalableError::Dimension(format!("missing gamma for monitor {m}")));
        }
    }
    for a in attack.nodes() {
        if !psis.contains_key(a) {
            return Err(ScalableError::Dimension(format!("missing psi for attack node {a}")));
        }
    }
    if certificate.iter().any(|&p| !(p > 0.0)) {
        return Err(ScalableError::NonPositiveCertificate);
    }

    // Element-wise hypothesis.
    for &m in monitors.nodes() {
        let w = model.weights()[m];
        if gammas[&m] > w * w {
            return Ok(false);
        }
    }

    let mut omega = DVector::zeros(n);
    for &m in monitors.nodes() {
        omega[m] = gammas[&m];
    }
    let psi: Vec<f64> = attack.nodes().iter().map(|a| psis[a]).collect();
    let p = DMatrix::from_diagonal(certificate);
    let block = crate::disruption::dual_lmi_dense(model, &omega, attack, &psi, &p);
    Ok(check_lmi_feasibility(&block, tol)?)
}

/// Variable count of the disruption program: `n + |M| + |A|` diagonal,
/// `n(n+1)/2 + |M| + |A|` full.
pub fn disruption_variable_count(n: usize, monitors: usize, alpha: usize, diagonal: bool) -> usize {
    let cert = if diagonal { n } else { n * (n + 1) / 2 };
    cert + monitors + alpha
}

/// Default cap re-exported for callers configuring enumeration limits.
pub const ATTACK_SET_CAP: usize = DEFAULT_ATTACK_SET_CAP;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disruption::{worst_case_disruption, SolveMode};
    use crate::graph::AttackType;
    use crate::sdp::EPS_STRICT;
    use crate::testutil::{assert_rel_close, random_model, single_node};
    use nalgebra::{DMatrix, DVector};

    fn threat_one(energy: f64) -> ThreatModel {
        ThreatModel::new(vec![AttackType { alpha: 1, prob: 1.0 }], energy).unwrap()
    }

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn condition_fails_for_weak_self_loops() {
        let cert = check_scalability_condition(
            &single_node(0.7),
            &threat_one(10.0),
            DeltaScope::AllNodes,
            &opts(),
            ATTACK_SET_CAP,
        )
        .unwrap();
        assert!(!cert.holds);
        assert_rel_close(cert.margin, 1.0 - 2.0 * 20.408163265306122, 1e-5);
        assert_eq!(cert.worst_attack, vec![0]);
    }

    #[test]
    fn condition_holds_for_strong_self_loops() {
        let cert = check_scalability_condition(
            &single_node(5.0),
            &threat_one(10.0),
            DeltaScope::AllNodes,
            &opts(),
            ATTACK_SET_CAP,
        )
        .unwrap();
        assert!(cert.holds);
        assert_rel_close(cert.max_v_infinity, 0.4, 1e-6);
        assert_rel_close(cert.margin, 0.2, 1e-5);
    }

    #[test]
    fn boundary_counts_as_holding() {
        // theta a hair above the analytic threshold sqrt(2E) keeps the
        // margin non-negative; the verdict is exactly margin >= 0.
        let just_above = single_node(20f64.sqrt() * (1.0 + 1e-3));
        let cert = check_scalability_condition(
            &just_above,
            &threat_one(10.0),
            DeltaScope::AllNodes,
            &opts(),
            ATTACK_SET_CAP,
        )
        .unwrap();
        assert!(cert.holds);
        assert!(cert.margin >= 0.0);
        assert_eq!(cert.holds, cert.margin >= 0.0);
    }

    #[test]
    fn monitor_scope_uses_its_own_thresholds() {
        let mut thresholds = DVector::from_element(2, 0.5);
        thresholds[1] = 5.0;
        let model = NetworkModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DVector::from_element(2, 9.0),
            DVector::from_element(2, 1.0),
            thresholds,
            DVector::from_element(2, 0.3),
        )
        .unwrap();
        let all = check_scalability_condition(
            &model,
            &threat_one(10.0),
            DeltaScope::AllNodes,
            &opts(),
            ATTACK_SET_CAP,
        )
        .unwrap();
        let scoped = check_scalability_condition(
            &model,
            &threat_one(10.0),
            DeltaScope::MonitorSet(vec![1]),
            &opts(),
            ATTACK_SET_CAP,
        )
        .unwrap();
        // larger threshold relaxes the bound, so the margin can only grow
        assert!(scoped.margin > all.margin);
        assert!(scoped.covers(&[1]));
        assert!(!scoped.covers(&[0]));
        assert!(all.covers(&[0]) && all.covers(&[1]));
    }

    #[test]
    fn tuning_single_node_hits_analytic_threshold() {
        let outcome = tune_self_loops(
            &single_node(0.7),
            &threat_one(10.0),
            0.1,
            200,
            true,
            &opts(),
            ATTACK_SET_CAP,
        )
        .unwrap();
        let theta = outcome.model.self_loops()[0];
        assert!(
            (4.4721..=4.4772).contains(&theta),
            "tuned self-loop {theta} outside the analytic window"
        );
        assert!(outcome.certificate.holds);
        // strictly decreasing max gain along increasing increments
        let mut ordered = outcome.steps.clone();
        ordered.sort_by(|a, b| a.eta.total_cmp(&b.eta));
        for w in ordered.windows(2) {
            assert!(w[1].max_v_infinity < w[0].max_v_infinity + 1e-9);
        }
    }

    #[test]
    fn tuning_short_circuits_when_condition_already_holds() {
        let model = single_node(5.0);
        let outcome = tune_self_loops(
            &model,
            &threat_one(10.0),
            0.1,
            200,
            true,
            &opts(),
            ATTACK_SET_CAP,
        )
        .unwrap();
        assert_eq!(outcome.eta, 0.0);
        assert_eq!(outcome.steps.len(), 1);
        assert_eq!(outcome.model, model);
    }

    #[test]
    fn tuning_respects_iteration_budget() {
        let err = tune_self_loops(
            &single_node(0.7),
            &threat_one(10.0),
            1e-6,
            4,
            false,
            &opts(),
            ATTACK_SET_CAP,
        );
        assert!(matches!(err, Err(ScalableError::TuningExhausted { .. })));
    }

    #[test]
    fn positive_system_verdicts() {
        let model = random_model(3, 17);
        let attack = AttackScenario::new(vec![0], 10.0).unwrap();
        let monitors = MonitorSet::new(vec![1], 3).unwrap();
        assert!(verify_positive_system(&model, &attack, &monitors));

        // negative edge gain bypassing validation breaks the Metzler check
        let bad = NetworkModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
            DVector::from_element(2, 0.7),
            DVector::from_element(2, 1.0),
            DVector::from_element(2, 0.5),
            DVector::from_element(2, 0.3),
        )
        .unwrap();
        let attack2 = AttackScenario::new(vec![0], 10.0).unwrap();
        assert!(!verify_positive_system(&bad, &attack2, &MonitorSet::empty(0)));
    }

    #[test]
    fn kyp_check_roundtrips_diagonal_results() {
        let model = single_node(5.0);
        let threat = threat_one(10.0);
        let cert = check_scalability_condition(
            &model,
            &threat,
            DeltaScope::AllNodes,
            &opts(),
            ATTACK_SET_CAP,
        )
        .unwrap();
        assert!(cert.holds);
        let monitors = MonitorSet::new(vec![0], 1).unwrap();
        let attack = AttackScenario::new(vec![0], 10.0).unwrap();
        let r = worst_case_disruption(
            &model,
            &monitors,
            &attack,
            &SolveMode::Diagonal(cert),
            &opts(),
        )
        .unwrap();
        let diag = DVector::from_iterator(1, (0..1).map(|i| r.certificate[(i, i)].max(EPS_STRICT)));
        assert!(kyp_certificate_check(&model, &attack, &monitors, &r.gammas, &r.psis, &diag, 1e-6)
            .unwrap());

        // an injected certificate perturbation must be detected
        let perturbed = DVector::from_element(1, diag[0] + 1.0);
        let block_ok = kyp_certificate_check(
            &model,
            &attack,
            &monitors,
            &r.gammas,
            &r.psis,
            &perturbed,
            1e-6,
        )
        .unwrap();
        assert!(!block_ok);

        // gamma above w^2 fails the element-wise hypothesis
        let mut bad_gammas = r.gammas.clone();
        bad_gammas.insert(0, model.weights()[0] * model.weights()[0] + 0.1);
        assert!(!kyp_certificate_check(
            &model,
            &attack,
            &monitors,
            &bad_gammas,
            &r.psis,
            &diag,
            1e-6
        )
        .unwrap());
    }

    #[test]
    fn perturbed_certificate_violation_is_visible_in_eigenvalues() {
        let model = single_node(5.0);
        let attack = AttackScenario::new(vec![0], 10.0).unwrap();
        let monitors = MonitorSet::empty(0);
        let threat = threat_one(10.0);
        let cert = check_scalability_condition(&model, &threat, DeltaScope::AllNodes, &opts(), ATTACK_SET_CAP).unwrap();
        let r = worst_case_disruption(&model, &monitors, &attack, &SolveMode::Diagonal(cert), &opts()).unwrap();
        // scale the certificate until the assembled block clearly breaks
        let mut omega = DVector::zeros(1);
        for (&m, &g) in &r.gammas {
            omega[m] = g;
        }
        let psi: Vec<f64> = attack.nodes().iter().map(|a| r.psis[a]).collect();
        let mut scale = 1.0;
        loop {
            scale *= 2.0;
            let p = &r.certificate * scale;
            let block = crate::disruption::dual_lmi_dense(&model, &omega, &attack, &psi, &p);
            let lam = crate::sdp::sym_eig_max(&block);
            if lam > 1e-3 {
                assert!(!check_lmi_feasibility(&block, 1e-6).unwrap());
                break;
            }
            assert!(scale < 1e9, "scaling must eventually violate the block");
        }
    }

    #[test]
    fn variable_count_formulas() {
        let model = random_model(6, 51);
        let attack = AttackScenario::new(vec![0, 3], 10.0).unwrap();
        let (full, _) = crate::disruption::build_disruption_sdp(&model, &[1, 2], &attack, false);
        assert_eq!(full.variable_count(), 6 * 7 / 2 + 2 + 2);
        assert_eq!(full.variable_count(), disruption_variable_count(6, 2, 2, false));
        let (diag, _) = crate::disruption::build_disruption_sdp(&model, &[1, 2], &attack, true);
        assert_eq!(diag.variable_count(), 6 + 2 + 2);
        assert_eq!(diag.variable_count(), disruption_variable_count(6, 2, 2, true));
    }
}
