//! Solver-agnostic semidefinite programs and the in-process conic backend.
//!
//! Problems are affine in a flat slot space: scalar variables take one slot,
//! symmetric matrix variables take `d(d+1)/2` slots (or `d` when flagged
//! diagonal). Constraints are linear inequalities `expr ≤ 0` and LMI blocks
//! `C + Σ x_v G_v ⪯ 0` that are symmetric by construction. Matrix variables
//! are kept positive semidefinite through an eigenvalue floor of
//! [`EPS_STRICT`], the same floor used for strictly positive scalars, so the
//! full and diagonal certificate paths share one code path.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT,
    SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

/// Lower bound standing in for strict inequalities; conic solvers operate on
/// closed sets and the optima here are attained in the closure.
pub const EPS_STRICT: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("malformed problem: {0}")]
    BadProblem(String),
    #[error("solver setup failed: {0}")]
    Setup(String),
    #[error("solver did not produce a usable point: {0}")]
    NumericalFailure(String),
    #[error("problem reported infeasible")]
    Infeasible,
    #[error("problem reported unbounded")]
    Unbounded,
}

/// Flat index of one decision slot.
pub type VarId = usize;

/// Handle to a declared matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatId(usize);

#[derive(Debug, Clone)]
struct ScalarVar {
    name: String,
    slot: VarId,
    lower: f64,
    upper: Option<f64>,
    binary: bool,
}

#[derive(Debug, Clone)]
struct MatrixVar {
    name: String,
    dim: usize,
    diagonal: bool,
    base: VarId,
}

impl MatrixVar {
    fn slots(&self) -> usize {
        if self.diagonal {
            self.dim
        } else {
            self.dim * (self.dim + 1) / 2
        }
    }
}

/// Linear expression `Σ coeff·x + constant` over slots.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn term(var: VarId, coeff: f64) -> Self {
        Self { terms: vec![(var, coeff)], constant: 0.0 }
    }

    pub fn push(&mut self, var: VarId, coeff: f64) {
        self.terms.push((var, coeff));
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }
}

/// One affine matrix inequality `C + Σ x_v G_v ⪯ 0`.
///
/// Entries are stored on the upper triangle only; adding `(r, c)` and
/// `(c, r)` addresses the same symmetric entry.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    dim: usize,
    constant: BTreeMap<(usize, usize), f64>,
    coeffs: BTreeMap<VarId, BTreeMap<(usize, usize), f64>>,
}

impl LmiBlock {
    pub fn new(dim: usize) -> Self {
        Self { dim, constant: BTreeMap::new(), coeffs: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn key(&self, r: usize, c: usize) -> (usize, usize) {
        assert!(r < self.dim && c < self.dim, "LMI entry out of range");
        (r.min(c), r.max(c))
    }

    pub fn add_const(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            *self.constant.entry(self.key(r, c)).or_insert(0.0) += v;
        }
    }

    pub fn add_term(&mut self, var: VarId, r: usize, c: usize, coeff: f64) {
        if coeff != 0.0 {
            let key = self.key(r, c);
            *self.coeffs.entry(var).or_default().entry(key).or_insert(0.0) += coeff;
        }
    }

    /// Dense value of the block at the point `x`.
    pub fn assemble(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut set = |&(r, c): &(usize, usize), v: f64| {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        };
        for (key, v) in &self.constant {
            set(key, *v);
        }
        for (var, entries) in &self.coeffs {
            let xv = x[*var];
            if xv != 0.0 {
                for (key, coeff) in entries {
                    set(key, coeff * xv);
                }
            }
        }
        m
    }
}

/// Termination status of a solve, normalised across backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatusKind {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Solver tolerances; `feas_tol` is also the acceptance threshold on the
/// eigenvalue check of every returned LMI block.
#[derive(Debug, Clone, Serialize)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub gap_rel: f64,
    pub gap_abs: f64,
    pub max_iter: u32,
    pub verbose: bool,
    pub static_regularization: f64,
    pub equilibrate: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            gap_rel: 1e-7,
            gap_abs: 1e-8,
            max_iter: 200,
            verbose: false,
            static_regularization: 1e-12,
            equilibrate: true,
        }
    }
}

/// A solved point with values recoverable by variable name.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatusKind,
    pub objective_value: f64,
    pub scalar_values: BTreeMap<String, f64>,
    pub matrix_values: BTreeMap<String, DMatrix<f64>>,
    /// Largest eigenvalue over all assembled LMI blocks at the returned
    /// point; at most `feas_tol` whenever the status is optimal.
    pub max_lmi_violation: f64,
    pub iterations: u32,
    pub solve_time: f64,
    x: Vec<f64>,
}

impl SdpSolution {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalar_values.get(name).copied()
    }

    pub fn matrix(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.matrix_values.get(name)
    }

    pub fn raw(&self) -> &[f64] {
        &self.x
    }
}

/// Semidefinite program over named scalar and matrix variables.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    scalars: Vec<ScalarVar>,
    matrices: Vec<MatrixVar>,
    objective: LinExpr,
    lmis: Vec<LmiBlock>,
    linear: Vec<LinExpr>,
    slots: usize,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a non-negative scalar; `strictly_positive` floors it at
    /// [`EPS_STRICT`] instead of zero.
    pub fn add_scalar(&mut self, name: impl Into<String>, strictly_positive: bool) -> VarId {
        let slot = self.slots;
        self.slots += 1;
        self.scalars.push(ScalarVar {
            name: name.into(),
            slot,
            lower: if strictly_positive { EPS_STRICT } else { 0.0 },
            upper: None,
            binary: false,
        });
        slot
    }

    /// Declares a binary-marked scalar, relaxed to `[0, 1]` by the backend;
    /// integrality is the caller's concern (branch and bound).
    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        let slot = self.slots;
        self.slots += 1;
        self.scalars.push(ScalarVar {
            name: name.into(),
            slot,
            lower: 0.0,
            upper: Some(1.0),
            binary: true,
        });
        slot
    }

    /// Declares a symmetric PSD matrix variable of size `dim`; when
    /// `diagonal` is set only the diagonal slots exist.
    pub fn add_matrix(&mut self, name: impl Into<String>, dim: usize, diagonal: bool) -> MatId {
        let base = self.slots;
        let var = MatrixVar { name: name.into(), dim, diagonal, base };
        self.slots += var.slots();
        self.matrices.push(var);
        MatId(self.matrices.len() - 1)
    }

    /// Slot of entry `(i, j)` of a matrix variable.
    pub fn mat_slot(&self, mat: MatId, i: usize, j: usize) -> VarId {
        let m = &self.matrices[mat.0];
        assert!(i < m.dim && j < m.dim, "matrix entry out of range");
        if m.diagonal {
            assert!(i == j, "off-diagonal entry of a diagonal matrix variable");
            m.base + i
        } else {
            let (r, c) = (i.min(j), i.max(j));
            m.base + c * (c + 1) / 2 + r
        }
    }

    pub fn mat_dim(&self, mat: MatId) -> usize {
        self.matrices[mat.0].dim
    }

    pub fn is_diagonal(&self, mat: MatId) -> bool {
        self.matrices[mat.0].diagonal
    }

    pub fn set_objective(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    /// Adds `expr ≤ 0`.
    pub fn add_linear(&mut self, expr: LinExpr) {
        self.linear.push(expr);
    }

    pub fn add_lmi(&mut self, lmi: LmiBlock) {
        self.lmis.push(lmi);
    }

    /// Total declared decision slots: one per scalar, `d(d+1)/2` per full
    /// matrix variable, `d` per diagonal one.
    pub fn variable_count(&self) -> usize {
        self.slots
    }

    pub fn lmi_count(&self) -> usize {
        self.lmis.len()
    }

    pub fn lmis(&self) -> &[LmiBlock] {
        &self.lmis
    }

    pub fn binary_vars(&self) -> Vec<(String, VarId)> {
        self.scalars
            .iter()
            .filter(|s| s.binary)
            .map(|s| (s.name.clone(), s.slot))
            .collect()
    }

    /// Overrides the box bounds of a scalar slot (used to fix binaries
    /// during branch and bound).
    pub fn set_scalar_bounds(&mut self, slot: VarId, lower: f64, upper: Option<f64>) {
        let var = self
            .scalars
            .iter_mut()
            .find(|s| s.slot == slot)
            .expect("slot is not a scalar variable");
        var.lower = lower;
        var.upper = upper;
    }

    fn check(&self) -> Result<(), SdpError> {
        for expr in self.linear.iter().chain(std::iter::once(&self.objective)) {
            for &(v, _) in &expr.terms {
                if v >= self.slots {
                    return Err(SdpError::BadProblem(format!("undeclared slot {v}")));
                }
            }
        }
        for lmi in &self.lmis {
            for v in lmi.coeffs.keys() {
                if *v >= self.slots {
                    return Err(SdpError::BadProblem(format!("undeclared slot {v} in LMI")));
                }
            }
        }
        Ok(())
    }

    /// Sparse text dump: per LMI block, one line per (row, col, variable,
    /// coefficient) entry plus the constant block. Debugging aid only.
    pub fn dump_sparse_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let name_of = |slot: VarId| -> String {
            if let Some(s) = self.scalars.iter().find(|s| s.slot == slot) {
                return s.name.clone();
            }
            for m in &self.matrices {
                if slot >= m.base && slot < m.base + m.slots() {
                    let k = slot - m.base;
                    let (i, j) = if m.diagonal {
                        (k, k)
                    } else {
                        // invert c(c+1)/2 + r
                        let mut c = 0usize;
                        while (c + 1) * (c + 2) / 2 <= k {
                            c += 1;
                        }
                        (k - c * (c + 1) / 2, c)
                    };
                    return format!("{}[{},{}]", m.name, i, j);
                }
            }
            format!("slot{slot}")
        };
        writeln!(out, "vars {}", self.slots).unwrap();
        for (idx, lmi) in self.lmis.iter().enumerate() {
            writeln!(out, "lmi {idx} dim {}", lmi.dim).unwrap();
            for (&(r, c), v) in &lmi.constant {
                writeln!(out, "  const {r} {c} {v}").unwrap();
            }
            for (var, entries) in &lmi.coeffs {
                for (&(r, c), coeff) in entries {
                    writeln!(out, "  term {r} {c} {} {coeff}", name_of(*var)).unwrap();
                }
            }
        }
        out
    }

    /// Solves the program with the in-process conic backend.
    ///
    /// A returned optimal point is accepted only if every assembled LMI
    /// clears the eigenvalue check at `feas_tol`. When the raw interior
    /// point falls short, the LMIs are tightened by a small diagonal shift
    /// scaled to the observed violation and the program is re-solved, so
    /// the returned point is strictly feasible for the original blocks;
    /// the shift is microscopic against the objective scale.
    pub fn solve(&self, opts: &SolveOptions) -> Result<SdpSolution, SdpError> {
        let first = self.solve_raw(opts, 0.0)?;
        if first.status != SolveStatusKind::NumericalFailure {
            return Ok(first);
        }
        // Escalation ladder: tighten the blocks past the observed
        // violation, then fall back to a heavier-regularized (more robustly
        // factorizable) solve for degenerate instances that stall.
        let mut shift = (4.0 * first.max_lmi_violation).max(1e-9);
        let mut last = first;
        let robust = SolveOptions {
            static_regularization: opts.static_regularization.max(1e-8),
            ..opts.clone()
        };
        for attempt_opts in [opts, &robust, &robust] {
            let repaired = self.solve_raw(attempt_opts, shift)?;
            if repaired.status != SolveStatusKind::NumericalFailure {
                return Ok(repaired);
            }
            shift = (4.0 * repaired.max_lmi_violation).max(shift * 8.0);
            last = repaired;
        }
        Ok(last)
    }

    fn solve_raw(&self, opts: &SolveOptions, lmi_shift: f64) -> Result<SdpSolution, SdpError> {
        self.check()?;
        let k = self.slots;
        let mut q = vec![0.0; k];
        for &(v, c) in &self.objective.terms {
            q[v] += c;
        }

        let mut rows = TripletRows::new();
        // Non-negative cone: scalar bounds, diagonal-matrix floors, then the
        // explicit linear inequalities.
        for s in &self.scalars {
            rows.push_row(vec![(s.slot, -1.0)], -s.lower);
            if let Some(u) = s.upper {
                rows.push_row(vec![(s.slot, 1.0)], u);
            }
        }
        for m in &self.matrices {
            if m.diagonal {
                for i in 0..m.dim {
                    rows.push_row(vec![(m.base + i, -1.0)], -EPS_STRICT);
                }
            }
        }
        for expr in &self.linear {
            rows.push_row(expr.terms.clone(), -expr.constant);
        }
        let nonneg_rows = rows.m;

        // One PSD cone per full matrix variable: P − eps·I ⪰ 0.
        let mut cones: Vec<SupportedConeT<f64>> = vec![NonnegativeConeT(nonneg_rows)];
        for (idx, m) in self.matrices.iter().enumerate() {
            if m.diagonal {
                continue;
            }
            let d = m.dim;
            for c in 0..d {
                for r in 0..=c {
                    let scale = if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
                    let rhs = if r == c { -EPS_STRICT } else { 0.0 };
                    rows.push_row(vec![(self.mat_slot(MatId(idx), r, c), -scale)], rhs);
                }
            }
            cones.push(PSDTriangleConeT(d));
        }

        // One PSD cone per LMI block: −C − Σ x_v G_v ⪰ 0.
        for lmi in &self.lmis {
            let d = lmi.dim;
            let tri = d * (d + 1) / 2;
            let mut row_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); tri];
            let mut rhs = vec![0.0; tri];
            let sidx = |r: usize, c: usize| c * (c + 1) / 2 + r;
            for (&(r, c), v) in &lmi.constant {
                let scale = if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
                rhs[sidx(r, c)] -= scale * v;
            }
            if lmi_shift != 0.0 {
                for r in 0..d {
                    rhs[sidx(r, r)] -= lmi_shift;
                }
            }
            for (var, entries) in &lmi.coeffs {
                for (&(r, c), coeff) in entries {
                    let scale = if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
                    row_terms[sidx(r, c)].push((*var, scale * coeff));
                }
            }
            for (terms, b) in row_terms.into_iter().zip(rhs) {
                rows.push_row(terms, b);
            }
            cones.push(PSDTriangleConeT(d));
        }

        let a = rows.into_csc(k);
        let p = CscMatrix::<f64>::zeros((k, k));
        let settings = DefaultSettingsBuilder::default()
            .verbose(opts.verbose)
            .max_iter(opts.max_iter)
            .tol_gap_abs(opts.gap_abs)
            .tol_gap_rel(opts.gap_rel)
            .tol_feas(opts.feas_tol * 0.1)
            .static_regularization_constant(opts.static_regularization)
            .equilibrate_enable(opts.equilibrate)
            .build()
            .map_err(|e| SdpError::Setup(e.to_string()))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &rows.rhs, &cones, settings)
            .map_err(|e| SdpError::Setup(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;

        let mut status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatusKind::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatusKind::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatusKind::Unbounded
            }
            _ => SolveStatusKind::NumericalFailure,
        };
        let x = sol.x.clone();
        let mut max_lmi_violation: f64 = 0.0;
        if status == SolveStatusKind::Optimal {
            for lmi in &self.lmis {
                let m = lmi.assemble(&x);
                max_lmi_violation = max_lmi_violation.max(sym_eig_max(&m));
            }
            if max_lmi_violation > opts.feas_tol {
                log::debug!(
                    "point violates an LMI by {max_lmi_violation:.3e} > {:.3e} (shift {lmi_shift:.1e})",
                    opts.feas_tol
                );
                status = SolveStatusKind::NumericalFailure;
            }
        }

        let mut scalar_values = BTreeMap::new();
        for s in &self.scalars {
            scalar_values.insert(s.name.clone(), x[s.slot]);
        }
        let mut matrix_values = BTreeMap::new();
        for (idx, m) in self.matrices.iter().enumerate() {
            let mut mat = DMatrix::zeros(m.dim, m.dim);
            for i in 0..m.dim {
                for j in 0..m.dim {
                    if m.diagonal && i != j {
                        continue;
                    }
                    mat[(i, j)] = x[self.mat_slot(MatId(idx), i, j)];
                }
            }
            matrix_values.insert(m.name.clone(), mat);
        }

        Ok(SdpSolution {
            status,
            objective_value: sol.obj_val + self.objective.constant,
            scalar_values,
            matrix_values,
            max_lmi_violation,
            iterations: solver.info.iterations,
            solve_time: solver.info.solve_time,
            x,
        })
    }
}

struct TripletRows {
    m: usize,
    entries: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl TripletRows {
    fn new() -> Self {
        Self { m: 0, entries: Vec::new(), rhs: Vec::new() }
    }

    fn push_row(&mut self, terms: Vec<(VarId, f64)>, rhs: f64) {
        for (v, c) in terms {
            if c != 0.0 {
                self.entries.push((self.m, v, c));
            }
        }
        self.rhs.push(rhs);
        self.m += 1;
    }

    fn into_csc(&self, n: usize) -> CscMatrix<f64> {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; n + 1];
        let mut rowval = Vec::with_capacity(entries.len());
        let mut nzval = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            // builder never emits duplicates within a row
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
        }
        for c in 0..n {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(self.m, n, colptr, rowval, nzval)
    }
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_eig_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// True iff `matrix` (symmetric within `1e-10`) satisfies
/// `λ_max(matrix) ≤ tol`.
pub fn check_lmi_feasibility(matrix: &DMatrix<f64>, tol: f64) -> Result<bool, SdpError> {
    let asym = (matrix - matrix.transpose()).abs().max();
    if asym > 1e-10 {
        return Err(SdpError::Asymmetric(asym));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    Ok(sym_eig_max(&sym) <= tol)
}
