//! Dense LMI feasibility for small problems.
//!
//! A problem consists of unknowns that are either symmetric matrices or
//! nonnegative scalars, together with affine constraints required to be
//! positive semidefinite or positive definite.  The solver maximises a
//! uniform slack `t` such that every constraint satisfies `F_j(x) ⪰ t·I`,
//! using a log-det barrier path-following method on the bounded region
//! `|x_i| ≤ BOX_RADIUS`.
//!
//! Three properties matter more than speed here:
//!
//! * **Margins are re-verified.**  Reported margins are exact eigenvalue
//!   computations at the returned assignment, not solver by-products, and a
//!   returned `Feasible` always passes [`verify_solution`].
//! * **Infeasibility is certified.**  Whenever `Infeasible` is returned, a
//!   dual witness (one PSD multiplier per constraint plus box multipliers)
//!   proves, by weak duality alone, that the best achievable slack within
//!   the box is below `-eps_psd`.  The witness is stored in the solution so
//!   third parties can recheck the claim without rerunning the solver.
//! * **Determinism.**  No randomisation; identical inputs produce identical
//!   outputs.
//!
//! Constraints are internally normalised by the largest absolute entry of
//! their coefficient matrices, so the reported status is invariant under
//! rescaling any constraint by a positive scalar.  Margins are reported in
//! the original (raw) units together with the normalisation scale.

use nalgebra::DMatrix;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::symmat::{SymMat, Tolerances};

/// Bound on every scalar unknown; feasibility is decided within this box.
const BOX_RADIUS: f64 = 1.0e5;
/// Barrier cap on the uniform slack variable.
const SLACK_CAP: f64 = 1.5;
/// Normalised slack at which a problem is declared comfortably feasible.
const SLACK_STOP: f64 = 1.0;
/// Initial barrier weight.
const MU_INIT: f64 = 1.0;
/// Geometric barrier reduction factor.
const MU_SHRINK: f64 = 0.15;
/// Final barrier weight.
const MU_MIN: f64 = 1.0e-12;
/// Newton decrement threshold declaring a barrier stage centred.
const NEWTON_DECREMENT_TOL: f64 = 1.0e-10;

/// Handle to a declared unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

/// Kind of unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Symmetric `k × k` matrix variable.
    SymMatrix(usize),
    /// Scalar variable constrained to `[0, BOX_RADIUS]`.
    NonnegScalar,
}

/// Definiteness requirement attached to a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Normalised margin must reach `-eps_psd`.
    Psd,
    /// Normalised margin must reach `+eps_strict`.
    Pd,
}

/// Requested solver behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Stop as soon as all constraints pass their thresholds.
    Feasibility,
    /// Push the uniform slack towards its maximum (capped at
    /// `SLACK_STOP` in normalised units) before reporting.
    MaximizeMargin,
}

#[derive(Debug, Clone)]
enum Term {
    /// `coeff · L · X · Lᵀ` for a symmetric matrix unknown `X`.
    Congruence {
        var: VarId,
        left: DMatrix<f64>,
        coeff: f64,
    },
    /// `x · M` for a scalar unknown `x` and symmetric `M`.
    ScalarMul { var: VarId, mat: DMatrix<f64> },
}

/// Affine symmetric-matrix-valued expression in the declared unknowns.
#[derive(Debug, Clone)]
pub struct AffineExpr {
    dim: usize,
    constant: DMatrix<f64>,
    terms: Vec<Term>,
}

impl AffineExpr {
    /// Expression equal to a constant symmetric matrix (symmetrised).
    pub fn constant(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::spec("constraint constant must be square and nonempty"));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::spec("constraint constant contains non-finite entries"));
        }
        let sym = SymMat::symmetrize(mat).into_inner();
        Ok(AffineExpr {
            dim: sym.nrows(),
            constant: sym,
            terms: Vec::new(),
        })
    }

    /// Zero expression of the given dimension.
    pub fn zero(dim: usize) -> Result<Self> {
        Self::constant(DMatrix::zeros(dim, dim))
    }

    /// Adds `coeff · L · X · Lᵀ` where `X` is the matrix unknown `var`.
    pub fn add_congruence(mut self, var: VarId, left: DMatrix<f64>, coeff: f64) -> Result<Self> {
        if left.nrows() != self.dim {
            return Err(Error::spec(format!(
                "congruence factor has {} rows, expression dimension is {}",
                left.nrows(),
                self.dim
            )));
        }
        if left.iter().any(|v| !v.is_finite()) || !coeff.is_finite() {
            return Err(Error::spec("congruence term contains non-finite values"));
        }
        self.terms.push(Term::Congruence { var, left, coeff });
        Ok(self)
    }

    /// Adds `x · M` where `x` is the scalar unknown `var` (`M` symmetrised).
    pub fn add_scalar_mul(mut self, var: VarId, mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != self.dim || mat.ncols() != self.dim {
            return Err(Error::spec(format!(
                "scalar coefficient is {}x{}, expression dimension is {}",
                mat.nrows(),
                mat.ncols(),
                self.dim
            )));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::spec("scalar coefficient contains non-finite entries"));
        }
        self.terms.push(Term::ScalarMul {
            var,
            mat: SymMat::symmetrize(mat).into_inner(),
        });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone)]
struct VarDecl {
    name: String,
    kind: VarKind,
}

#[derive(Debug, Clone)]
struct Constraint {
    label: String,
    kind: ConstraintKind,
    expr: AffineExpr,
}

/// Feasibility problem: declared unknowns plus affine definiteness
/// constraints.
#[derive(Debug, Clone)]
pub struct AffineLmiProblem {
    vars: Vec<VarDecl>,
    constraints: Vec<Constraint>,
    objective: Objective,
}

impl AffineLmiProblem {
    pub fn new(objective: Objective) -> Self {
        AffineLmiProblem {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective,
        }
    }

    /// Declares a symmetric `k × k` matrix unknown.
    pub fn add_sym_var(&mut self, name: &str, k: usize) -> Result<VarId> {
        if k == 0 {
            return Err(Error::spec("matrix variable dimension must be >= 1"));
        }
        self.check_fresh_name(name)?;
        self.vars.push(VarDecl {
            name: name.to_string(),
            kind: VarKind::SymMatrix(k),
        });
        Ok(VarId(self.vars.len() - 1))
    }

    /// Declares a nonnegative scalar unknown.
    pub fn add_nonneg_scalar(&mut self, name: &str) -> Result<VarId> {
        self.check_fresh_name(name)?;
        self.vars.push(VarDecl {
            name: name.to_string(),
            kind: VarKind::NonnegScalar,
        });
        Ok(VarId(self.vars.len() - 1))
    }

    fn check_fresh_name(&self, name: &str) -> Result<()> {
        if name.is_empty() {
            return Err(Error::spec("variable name must be nonempty"));
        }
        if self.vars.iter().any(|v| v.name == name) {
            return Err(Error::spec(format!("duplicate variable name {name}")));
        }
        Ok(())
    }

    /// Adds a constraint `expr ⪰ 0` (Psd) or `expr ≻ 0` (Pd).
    pub fn require(&mut self, kind: ConstraintKind, label: &str, expr: AffineExpr) -> Result<()> {
        for term in &expr.terms {
            let (id, needs) = match term {
                Term::Congruence { var, left, .. } => (var.0, Some(left.ncols())),
                Term::ScalarMul { var, .. } => (var.0, None),
            };
            let decl = self
                .vars
                .get(id)
                .ok_or_else(|| Error::spec("constraint references undeclared variable"))?;
            match (decl.kind, needs) {
                (VarKind::SymMatrix(k), Some(c)) if c == k => {}
                (VarKind::SymMatrix(k), Some(c)) => {
                    return Err(Error::spec(format!(
                        "congruence factor has {c} columns but variable {} is {k}x{k}",
                        decl.name
                    )))
                }
                (VarKind::NonnegScalar, None) => {}
                _ => {
                    return Err(Error::spec(format!(
                        "term kind does not match variable kind for {}",
                        decl.name
                    )))
                }
            }
        }
        self.constraints.push(Constraint {
            label: label.to_string(),
            kind,
            expr,
        });
        Ok(())
    }

    pub fn require_psd(&mut self, label: &str, expr: AffineExpr) -> Result<()> {
        self.require(ConstraintKind::Psd, label, expr)
    }

    pub fn require_pd(&mut self, label: &str, expr: AffineExpr) -> Result<()> {
        self.require(ConstraintKind::Pd, label, expr)
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }
}

/// Iteration budget for [`solve_feasibility`].
#[derive(Debug, Clone, Copy)]
pub struct SolveBudget {
    /// Maximum number of barrier stages.
    pub max_outer: usize,
    /// Maximum Newton iterations per stage.
    pub max_newton: usize,
}

impl Default for SolveBudget {
    fn default() -> Self {
        SolveBudget {
            max_outer: 90,
            max_newton: 60,
        }
    }
}

/// Decision reached by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiStatus {
    Feasible,
    Infeasible,
    Inconclusive,
}

/// Exact margin of one constraint at the returned assignment.
#[derive(Debug, Clone)]
pub struct ConstraintMargin {
    pub label: String,
    pub kind: ConstraintKind,
    /// Smallest eigenvalue of the constraint matrix in original units.
    pub lambda_min: f64,
    /// Normalisation scale (largest absolute coefficient entry, at least 1).
    pub scale: f64,
}

impl ConstraintMargin {
    /// Margin in normalised units; this is what thresholds are applied to.
    pub fn normalized(&self) -> f64 {
        self.lambda_min / self.scale
    }

    /// Whether the margin passes its kind's threshold.
    pub fn passes(&self, tol: &Tolerances) -> bool {
        match self.kind {
            ConstraintKind::Psd => self.normalized() >= -tol.eps_psd,
            ConstraintKind::Pd => self.normalized() >= tol.eps_strict,
        }
    }
}

/// Dual witness proving an upper bound on the achievable uniform slack.
///
/// Validity is a weak-duality identity: for any PSD multipliers `Z_j` (one
/// per constraint, in normalised units), cap multiplier `w ≥ 0` and box
/// multipliers derived from the stationarity residuals `σ_i = Σ_j ⟨Z_j,
/// A_ji⟩`, every point of the box satisfies
/// `t ≤ (Σ_j ⟨Z_j, A_j0⟩ + w·cap + Σ_i box_i) / (Σ_j tr Z_j + w)`.
/// Checking the witness therefore needs only eigenvalue tests (each `Z_j ⪰
/// 0`) and inner products.
#[derive(Debug, Clone)]
pub struct InfeasibilityWitness {
    /// One PSD multiplier per constraint, same order as the margins.
    pub duals: Vec<DMatrix<f64>>,
    /// Multiplier of the slack cap row.
    pub cap_dual: f64,
    /// Certified upper bound on the normalised slack within the box.
    pub bound: f64,
    /// Box radius the bound is valid for.
    pub box_radius: f64,
    /// Slack cap constant used in the bound.
    pub slack_cap: f64,
}

/// Solver progress summary.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub outer_iters: usize,
    pub newton_iters: usize,
    pub final_mu: f64,
    pub stop_reason: String,
}

/// Result of [`solve_feasibility`].
#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub status: LmiStatus,
    /// Values of the unknowns by name (scalars as `1 × 1` matrices).
    pub assignment: BTreeMap<String, DMatrix<f64>>,
    /// Exact per-constraint margins at the assignment.
    pub margins: Vec<ConstraintMargin>,
    /// Smallest normalised margin at the assignment.
    pub normalized_slack: f64,
    /// Best certified upper bound on the normalised slack, if a dual witness
    /// was extracted.
    pub witness: Option<InfeasibilityWitness>,
    pub trace: SolveTrace,
}

// ---------------------------------------------------------------------------
// Flattened representation
// ---------------------------------------------------------------------------

/// Index range of one declared variable in the flat scalar vector, plus the
/// recipe to rebuild its matrix value.
#[derive(Debug, Clone)]
struct FlatVar {
    offset: usize,
    len: usize,
    kind: VarKind,
}

/// One constraint as `A0 + Σ_i x_i A_i` with dense coefficient matrices
/// (normalised by `scale`).
struct FlatCons {
    label: String,
    kind: ConstraintKind,
    dim: usize,
    a0: DMatrix<f64>,
    /// Coefficient matrix per flat scalar; `None` where the constraint does
    /// not involve that scalar.
    coeff: Vec<Option<DMatrix<f64>>>,
    /// Indices with `coeff[i].is_some()`.
    support: Vec<usize>,
    scale: f64,
}

struct FlatProblem {
    vars: Vec<FlatVar>,
    names: Vec<String>,
    kinds: Vec<VarKind>,
    dim_x: usize,
    cons: Vec<FlatCons>,
}

/// Upper-triangle scalar ordering for a symmetric `k × k` variable.
fn sym_entry_count(k: usize) -> usize {
    k * (k + 1) / 2
}

fn flatten(prob: &AffineLmiProblem) -> Result<FlatProblem> {
    let mut vars = Vec::new();
    let mut offset = 0usize;
    for decl in &prob.vars {
        let len = match decl.kind {
            VarKind::SymMatrix(k) => sym_entry_count(k),
            VarKind::NonnegScalar => 1,
        };
        vars.push(FlatVar {
            offset,
            len,
            kind: decl.kind,
        });
        offset += len;
    }
    let dim_x = offset;

    let mut cons = Vec::new();
    for c in &prob.constraints {
        let dim = c.expr.dim;
        let mut a0 = c.expr.constant.clone();
        let mut coeff: Vec<Option<DMatrix<f64>>> = vec![None; dim_x];
        for term in &c.expr.terms {
            match term {
                Term::Congruence { var, left, coeff: cf } => {
                    let fv = &vars[var.0];
                    let k = match fv.kind {
                        VarKind::SymMatrix(k) => k,
                        VarKind::NonnegScalar => unreachable!("validated at require()"),
                    };
                    let mut idx = 0usize;
                    for j in 0..k {
                        let lj = left.column(j);
                        for i in 0..=j {
                            let li = left.column(i);
                            // Basis matrix of entry (i, j): e_i e_jᵀ (+ e_j e_iᵀ
                            // for off-diagonal), pushed through the congruence.
                            let mut b = &li * lj.transpose();
                            if i != j {
                                b += &lj * li.transpose();
                            }
                            b.scale_mut(*cf);
                            let slot = &mut coeff[fv.offset + idx];
                            match slot {
                                Some(existing) => *existing += b,
                                None => *slot = Some(b),
                            }
                            idx += 1;
                        }
                    }
                }
                Term::ScalarMul { var, mat } => {
                    let fv = &vars[var.0];
                    let slot = &mut coeff[fv.offset];
                    match slot {
                        Some(existing) => *existing += mat.clone(),
                        None => *slot = Some(mat.clone()),
                    }
                }
            }
        }
        // Normalisation scale: largest absolute entry over the constant and
        // all coefficient matrices, clamped to at least 1 so that empty or
        // tiny constraints keep an absolute threshold.
        let mut scale = a0.iter().fold(0.0_f64, |r, v| r.max(v.abs()));
        for m in coeff.iter().flatten() {
            scale = m.iter().fold(scale, |r, v| r.max(v.abs()));
        }
        let scale = scale.max(1.0);
        let inv = 1.0 / scale;
        a0.scale_mut(inv);
        let mut support = Vec::new();
        for (i, slot) in coeff.iter_mut().enumerate() {
            if let Some(m) = slot {
                m.scale_mut(inv);
                if m.iter().any(|v| *v != 0.0) {
                    support.push(i);
                } else {
                    *slot = None;
                }
            }
        }
        cons.push(FlatCons {
            label: c.label.clone(),
            kind: c.kind,
            dim,
            a0: SymMat::symmetrize(a0).into_inner(),
            coeff,
            support,
            scale,
        });
    }

    Ok(FlatProblem {
        names: prob.vars.iter().map(|v| v.name.clone()).collect(),
        kinds: prob.vars.iter().map(|v| v.kind).collect(),
        vars,
        dim_x,
        cons,
    })
}

impl FlatProblem {
    /// Rebuilds per-variable matrix values from the flat vector.
    fn unflatten(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(self.vars.len());
        for fv in &self.vars {
            match fv.kind {
                VarKind::SymMatrix(k) => {
                    let mut m = DMatrix::zeros(k, k);
                    let mut idx = 0usize;
                    for j in 0..k {
                        for i in 0..=j {
                            m[(i, j)] = x[fv.offset + idx];
                            m[(j, i)] = x[fv.offset + idx];
                            idx += 1;
                        }
                    }
                    out.push(m);
                }
                VarKind::NonnegScalar => {
                    out.push(DMatrix::from_element(1, 1, x[fv.offset]));
                }
            }
        }
        out
    }

    /// Normalised constraint value `A0 + Σ x_i A_i` (no slack).
    fn eval_normalized(&self, j: usize, x: &[f64]) -> DMatrix<f64> {
        let c = &self.cons[j];
        let mut f = c.a0.clone();
        for &i in &c.support {
            f += c.coeff[i].as_ref().unwrap().scale(x[i]);
        }
        f
    }

    /// Whether flat index `i` belongs to a nonnegative scalar variable.
    fn is_nonneg(&self, i: usize) -> bool {
        for fv in &self.vars {
            if i >= fv.offset && i < fv.offset + fv.len {
                return matches!(fv.kind, VarKind::NonnegScalar);
            }
        }
        false
    }
}

// ---------------------------------------------------------------------------
// Barrier solver
// ---------------------------------------------------------------------------

struct BarrierState {
    x: Vec<f64>,
    t: f64,
}

/// Log-barrier value of a strictly feasible point; `None` if infeasible.
fn barrier_value(fp: &FlatProblem, nonneg: &[bool], y: &BarrierState, mu: f64) -> Option<f64> {
    let mut val = y.t;
    for j in 0..fp.cons.len() {
        let mut f = fp.eval_normalized(j, &y.x);
        for d in 0..f.nrows() {
            f[(d, d)] -= y.t;
        }
        let chol = nalgebra::Cholesky::new(f)?;
        let mut logdet = 0.0;
        for d in 0..chol.l_dirty().nrows() {
            let l = chol.l_dirty()[(d, d)];
            if l <= 0.0 || !l.is_finite() {
                return None;
            }
            logdet += l.ln();
        }
        val += mu * 2.0 * logdet;
    }
    for (i, &xi) in y.x.iter().enumerate() {
        let hi = BOX_RADIUS - xi;
        let lo = if nonneg[i] { xi } else { BOX_RADIUS + xi };
        if hi <= 0.0 || lo <= 0.0 {
            return None;
        }
        val += mu * (hi.ln() + lo.ln());
    }
    let cap = SLACK_CAP - y.t;
    if cap <= 0.0 {
        return None;
    }
    val += mu * cap.ln();
    Some(val)
}

/// Inner product of two equally sized matrices.
fn mat_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

struct StageOutcome {
    newton_iters: usize,
}

/// Centres the barrier problem for fixed `mu` with damped Newton steps.
fn center_stage(
    fp: &FlatProblem,
    nonneg: &[bool],
    y: &mut BarrierState,
    mu: f64,
    max_newton: usize,
) -> Result<StageOutcome> {
    let dim_x = fp.dim_x;
    let dim = dim_x + 1; // unknowns: x and t
    let mut iters = 0usize;

    for _ in 0..max_newton {
        iters += 1;
        // Assemble gradient and Hessian of the barrier objective.
        let mut grad = vec![0.0; dim];
        grad[dim_x] = 1.0;
        let mut hess = DMatrix::<f64>::zeros(dim, dim);

        for j in 0..fp.cons.len() {
            let c = &fp.cons[j];
            let mut f = fp.eval_normalized(j, &y.x);
            for d in 0..c.dim {
                f[(d, d)] -= y.t;
            }
            let chol = nalgebra::Cholesky::new(f)
                .ok_or_else(|| Error::numerical("barrier iterate left the cone"))?;
            let finv = chol.inverse();
            // Unknown indices touching this constraint; the slack slot is
            // encoded as usize::MAX and has coefficient -I.
            let mut idxs: Vec<usize> = c.support.clone();
            idxs.push(usize::MAX);
            // W_a = F⁻¹ A_a F⁻¹ for each touched unknown.
            let mut w_mats: Vec<DMatrix<f64>> = Vec::with_capacity(idxs.len());
            for &a in &idxs {
                if a == usize::MAX {
                    w_mats.push(-(&finv * &finv));
                } else {
                    let aa = c.coeff[a].as_ref().unwrap();
                    w_mats.push(&finv * aa * &finv);
                }
            }
            for (pa, &a) in idxs.iter().enumerate() {
                let ga = if a == usize::MAX {
                    -finv.trace()
                } else {
                    mat_dot(&finv, c.coeff[a].as_ref().unwrap())
                };
                let slot = if a == usize::MAX { dim_x } else { a };
                grad[slot] += mu * ga;
                for (pb, &b) in idxs.iter().enumerate() {
                    if pb < pa {
                        continue;
                    }
                    let hab = if b == usize::MAX {
                        -w_mats[pa].trace()
                    } else {
                        mat_dot(&w_mats[pa], c.coeff[b].as_ref().unwrap())
                    };
                    let sb = if b == usize::MAX { dim_x } else { b };
                    hess[(slot, sb)] -= mu * hab;
                    if sb != slot {
                        hess[(sb, slot)] -= mu * hab;
                    }
                }
            }
        }
        // Box terms.
        for i in 0..dim_x {
            let hi = BOX_RADIUS - y.x[i];
            let lo = if nonneg[i] { y.x[i] } else { BOX_RADIUS + y.x[i] };
            grad[i] += mu * (1.0 / lo - 1.0 / hi);
            hess[(i, i)] -= mu * (1.0 / (hi * hi) + 1.0 / (lo * lo));
        }
        // Slack cap.
        let cap = SLACK_CAP - y.t;
        grad[dim_x] -= mu / cap;
        hess[(dim_x, dim_x)] -= mu / (cap * cap);

        // Newton direction: (-H) Δ = g with damping fallback.
        let neg_h = -hess;
        let g = DMatrix::from_column_slice(dim, 1, &grad);
        let mut damping = 0.0;
        let delta = loop {
            let mut m = neg_h.clone();
            if damping > 0.0 {
                for d in 0..dim {
                    m[(d, d)] += damping;
                }
            }
            if let Some(ch) = nalgebra::Cholesky::new(m) {
                break ch.solve(&g);
            }
            let trace_scale = neg_h.trace().abs().max(1.0) / dim as f64;
            damping = if damping == 0.0 {
                1e-12 * trace_scale
            } else {
                damping * 10.0
            };
            if damping > 1e8 * trace_scale {
                return Err(Error::numerical("Newton system could not be stabilised"));
            }
        };
        let decrement: f64 = (0..dim).map(|i| grad[i] * delta[(i, 0)]).sum();
        if decrement <= NEWTON_DECREMENT_TOL {
            return Ok(StageOutcome { newton_iters: iters });
        }

        // Backtracking line search keeping strict cone/box feasibility.
        let base = barrier_value(fp, nonneg, y, mu)
            .ok_or_else(|| Error::numerical("current iterate infeasible for barrier"))?;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-13 {
            let cand = BarrierState {
                x: (0..dim_x).map(|i| y.x[i] + step * delta[(i, 0)]).collect(),
                t: y.t + step * delta[(dim_x, 0)],
            };
            if let Some(v) = barrier_value(fp, nonneg, &cand, mu) {
                if v >= base + 0.1 * step * decrement {
                    *y = cand;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            // Line search stalled; the stage is as centred as arithmetic
            // allows.
            return Ok(StageOutcome { newton_iters: iters });
        }
        if y.t >= SLACK_STOP {
            // Comfortably feasible; no reason to centre further (this also
            // stops unbounded problems from drifting along flat directions).
            return Ok(StageOutcome { newton_iters: iters });
        }
    }
    Ok(StageOutcome { newton_iters: iters })
}

/// Least-norm correction of barrier duals toward exact adjoint feasibility.
///
/// The weak-duality bound absorbs any adjoint residual `σ_i = Σ_j ⟨Z_j, A_ji⟩`
/// through the box term `ρ · |σ_i|`, so residuals left by finite-precision
/// centring are amplified by the box radius and can mask genuine
/// infeasibility.  This projects the duals onto the subspace `σ_i = 0` (free
/// scalars; `σ_i ≤ 0` suffices for nonnegative scalars) and repairs the cone
/// constraint by clamping negative eigenvalues, alternating a few rounds.
/// The bound formula is valid for *any* positive semidefinite duals, so the
/// correction never costs soundness; callers keep whichever witness
/// certifies more.
fn polish_duals(fp: &FlatProblem, nonneg: &[bool], duals: &mut [DMatrix<f64>]) {
    let scale: f64 = duals.iter().map(|z| z.amax()).fold(1.0, f64::max);
    for _ in 0..8 {
        let mut sigma = vec![0.0; fp.dim_x];
        for (j, z) in duals.iter().enumerate() {
            for &i in &fp.cons[j].support {
                sigma[i] += mat_dot(z, fp.cons[j].coeff[i].as_ref().unwrap());
            }
        }
        let targets: Vec<usize> = (0..fp.dim_x)
            .filter(|&i| if nonneg[i] { sigma[i] > 0.0 } else { sigma[i] != 0.0 })
            .collect();
        let worst = targets.iter().map(|&i| sigma[i].abs()).fold(0.0, f64::max);
        if targets.is_empty() || worst <= 1e-14 * scale {
            return;
        }
        let f = targets.len();
        let mut gram = DMatrix::zeros(f, f);
        let mut rhs = DMatrix::zeros(f, 1);
        for (r, &i) in targets.iter().enumerate() {
            rhs[(r, 0)] = sigma[i];
            for (c, &k) in targets.iter().enumerate().skip(r) {
                let mut s = 0.0;
                for con in &fp.cons {
                    if let (Some(ai), Some(ak)) = (con.coeff[i].as_ref(), con.coeff[k].as_ref()) {
                        s += mat_dot(ai, ak);
                    }
                }
                gram[(r, c)] = s;
                gram[(c, r)] = s;
            }
        }
        // A tiny ridge keeps the solve well posed when correction
        // directions align.
        let ridge = 1e-12 * gram.trace().max(1.0) / f as f64;
        for d in 0..f {
            gram[(d, d)] += ridge;
        }
        let lambda = match nalgebra::Cholesky::new(gram) {
            Some(ch) => ch.solve(&rhs),
            None => return,
        };
        for (j, z) in duals.iter_mut().enumerate() {
            let mut touched = false;
            for (r, &i) in targets.iter().enumerate() {
                if let Some(a) = fp.cons[j].coeff[i].as_ref() {
                    *z -= a.scale(lambda[(r, 0)]);
                    touched = true;
                }
            }
            if !touched {
                continue;
            }
            let sym = SymMat::symmetrize(z.clone());
            if sym.lambda_min().map(|l| l < 0.0).unwrap_or(true) {
                let eig = nalgebra::SymmetricEigen::new(sym.into_inner());
                let clamped = nalgebra::DVector::from_iterator(
                    eig.eigenvalues.len(),
                    eig.eigenvalues.iter().map(|&l| l.max(0.0)),
                );
                let repaired =
                    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
                *z = SymMat::symmetrize(repaired).into_inner();
            }
        }
    }
}

/// Dual witness extracted from a (near-)centred iterate.
fn extract_witness(
    fp: &FlatProblem,
    nonneg: &[bool],
    y: &BarrierState,
    mu: f64,
) -> Option<InfeasibilityWitness> {
    let mut duals = Vec::with_capacity(fp.cons.len());
    for j in 0..fp.cons.len() {
        let c = &fp.cons[j];
        let mut f = fp.eval_normalized(j, &y.x);
        for d in 0..c.dim {
            f[(d, d)] -= y.t;
        }
        let chol = nalgebra::Cholesky::new(f)?;
        let z = chol.inverse().scale(mu);
        duals.push(SymMat::symmetrize(z).into_inner());
    }
    let cap_dual = mu / (SLACK_CAP - y.t);
    let raw = witness_from_duals(fp, nonneg, duals.clone(), cap_dual);
    polish_duals(fp, nonneg, &mut duals);
    let refined = witness_from_duals(fp, nonneg, duals, cap_dual);
    Some(if refined.bound < raw.bound { refined } else { raw })
}

/// Completes box multipliers by the exact stationarity split and evaluates
/// the weak-duality bound.  Valid for any PSD `duals` and `cap_dual ≥ 0`.
fn witness_from_duals(
    fp: &FlatProblem,
    nonneg: &[bool],
    duals: Vec<DMatrix<f64>>,
    cap_dual: f64,
) -> InfeasibilityWitness {
    let bound = witness_bound(fp, nonneg, &duals, cap_dual);
    InfeasibilityWitness {
        duals,
        cap_dual,
        bound,
        box_radius: BOX_RADIUS,
        slack_cap: SLACK_CAP,
    }
}

/// Weak-duality bound computation shared by the solver and by independent
/// witness re-validation.
pub(crate) fn witness_bound_for(
    prob: &AffineLmiProblem,
    duals: &[DMatrix<f64>],
    cap_dual: f64,
) -> Result<f64> {
    let fp = flatten(prob)?;
    if duals.len() != fp.cons.len() {
        return Err(Error::spec(format!(
            "witness has {} duals for {} constraints",
            duals.len(),
            fp.cons.len()
        )));
    }
    for (z, c) in duals.iter().zip(fp.cons.iter()) {
        if z.nrows() != c.dim || z.ncols() != c.dim {
            return Err(Error::spec("witness dual dimension mismatch"));
        }
    }
    let nonneg: Vec<bool> = (0..fp.dim_x).map(|i| fp.is_nonneg(i)).collect();
    Ok(witness_bound(&fp, &nonneg, duals, cap_dual))
}

/// Independently re-validates an infeasibility witness against a problem:
/// checks that every dual multiplier is symmetric positive semidefinite and
/// the cap multiplier nonnegative, then recomputes the weak-duality bound
/// from scratch.  Uses eigenvalue computations only — never the solver — so
/// stored witnesses stay auditable.  Returns the recomputed bound; a
/// negative value certifies that no point inside the solver's search box
/// satisfies all constraints.
pub fn revalidate_witness(
    prob: &AffineLmiProblem,
    witness: &InfeasibilityWitness,
    tol: &Tolerances,
) -> Result<f64> {
    tol.validate()?;
    if !witness.cap_dual.is_finite() || witness.cap_dual < 0.0 {
        return Err(Error::spec("witness cap multiplier must be nonnegative"));
    }
    for (j, z) in witness.duals.iter().enumerate() {
        let sym = SymMat::new(z.clone(), tol)
            .map_err(|e| Error::spec(format!("witness dual {j} is not symmetric: {e}")))?;
        let scale = sym.max_abs().max(1.0);
        if sym.lambda_min()? < -tol.eps_psd * scale {
            return Err(Error::spec(format!(
                "witness dual {j} is not positive semidefinite"
            )));
        }
    }
    witness_bound_for(prob, &witness.duals, witness.cap_dual)
}

fn witness_bound(
    fp: &FlatProblem,
    nonneg: &[bool],
    duals: &[DMatrix<f64>],
    cap_dual: f64,
) -> f64 {
    let mut numer = cap_dual * SLACK_CAP;
    let mut denom = cap_dual;
    for (j, z) in duals.iter().enumerate() {
        numer += mat_dot(z, &fp.cons[j].a0);
        denom += z.trace();
    }
    for i in 0..fp.dim_x {
        let mut sigma = 0.0;
        for (j, z) in duals.iter().enumerate() {
            if let Some(a) = fp.cons[j].coeff[i].as_ref() {
                sigma += mat_dot(z, a);
            }
        }
        // Box contribution: two-sided |σ|·ρ for free scalars, one-sided
        // max(σ, 0)·ρ for nonnegative scalars (negative σ is absorbed by the
        // multiplier of x_i ≥ 0).
        numer += if nonneg[i] {
            BOX_RADIUS * sigma.max(0.0)
        } else {
            BOX_RADIUS * sigma.abs()
        };
    }
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    numer / denom
}

/// Exact margins (raw eigenvalues) of all constraints at a flat point.
fn margins_at(fp: &FlatProblem, x: &[f64]) -> Result<Vec<ConstraintMargin>> {
    let mut out = Vec::with_capacity(fp.cons.len());
    for j in 0..fp.cons.len() {
        let c = &fp.cons[j];
        let f = fp.eval_normalized(j, x);
        let lam = SymMat::symmetrize(f.scale(c.scale)).lambda_min()?;
        out.push(ConstraintMargin {
            label: c.label.clone(),
            kind: c.kind,
            lambda_min: lam,
            scale: c.scale,
        });
    }
    Ok(out)
}

fn min_normalized(margins: &[ConstraintMargin]) -> f64 {
    margins
        .iter()
        .map(|m| m.normalized())
        .fold(f64::INFINITY, f64::min)
}

/// Decides feasibility of the problem within the variable box.
///
/// The returned margins are exact eigenvalue computations at the returned
/// assignment.  `Feasible` is only reported when every margin passes its
/// threshold; `Infeasible` only together with a dual witness whose certified
/// bound is below `-eps_psd`; everything else is `Inconclusive`.
pub fn solve_feasibility(
    prob: &AffineLmiProblem,
    tol: &Tolerances,
    budget: &SolveBudget,
) -> Result<LmiSolution> {
    tol.validate()?;
    if prob.constraints.is_empty() {
        return Err(Error::spec("problem has no constraints"));
    }
    if budget.max_outer == 0 || budget.max_newton == 0 {
        return Err(Error::spec("iteration budget must be positive"));
    }
    let fp = flatten(prob)?;
    let nonneg: Vec<bool> = (0..fp.dim_x).map(|i| fp.is_nonneg(i)).collect();

    // Strictly feasible start for the extended problem: x in the box
    // interior, slack below every initial constraint eigenvalue and below
    // the cap.
    let mut x0 = vec![0.0; fp.dim_x];
    for (i, flag) in nonneg.iter().enumerate() {
        if *flag {
            x0[i] = 1.0;
        }
    }
    let mut min_lambda = f64::INFINITY;
    for j in 0..fp.cons.len() {
        let f = SymMat::symmetrize(fp.eval_normalized(j, &x0));
        min_lambda = min_lambda.min(f.lambda_min()?);
    }
    let t0 = (min_lambda - 0.1 * min_lambda.abs().max(1.0)).min(SLACK_CAP - 0.5);
    let mut y = BarrierState { x: x0, t: t0 };

    let mut best_x = y.x.clone();
    let mut best_margins = margins_at(&fp, &best_x)?;
    let mut best_slack = min_normalized(&best_margins);
    let mut best_bound = f64::INFINITY;
    let mut best_witness: Option<InfeasibilityWitness> = None;

    let mut mu = MU_INIT;
    let mut outer = 0usize;
    let mut newton_total = 0usize;
    let mut stop_reason = "barrier weight reached its floor".to_string();

    while outer < budget.max_outer {
        outer += 1;
        let outcome = center_stage(&fp, &nonneg, &mut y, mu, budget.max_newton)?;
        newton_total += outcome.newton_iters;

        let margins = margins_at(&fp, &y.x)?;
        let slack = min_normalized(&margins);
        if slack > best_slack {
            best_slack = slack;
            best_margins = margins.clone();
            best_x = y.x.clone();
        }
        if let Some(w) = extract_witness(&fp, &nonneg, &y, mu) {
            if w.bound < best_bound {
                best_bound = w.bound;
                best_witness = Some(w);
            }
        }

        // Early exits.
        let all_pass = best_margins.iter().all(|m| m.passes(tol));
        if prob.objective == Objective::Feasibility && all_pass {
            stop_reason = "all constraint thresholds met".into();
            break;
        }
        if y.t >= SLACK_STOP {
            stop_reason = "slack reached its cap".into();
            break;
        }
        // In pure feasibility mode, a certified bound below the threshold
        // settles the question; margin maximisation keeps polishing so the
        // reported bound approaches the true optimum.
        if prob.objective == Objective::Feasibility && best_bound < -tol.eps_psd && !all_pass {
            stop_reason = "certified infeasible".into();
            break;
        }
        if mu <= MU_MIN {
            break;
        }
        mu = (mu * MU_SHRINK).max(MU_MIN);
    }
    if outer >= budget.max_outer {
        stop_reason = "outer iteration budget exhausted".into();
    }

    let values = fp.unflatten(&best_x);
    let mut assignment = BTreeMap::new();
    for (name, value) in fp.names.iter().zip(values.iter()) {
        assignment.insert(name.clone(), value.clone());
    }
    // Clamp nonnegative scalars that the barrier kept infinitesimally
    // positive.
    for (name, kind) in fp.names.iter().zip(fp.kinds.iter()) {
        if matches!(kind, VarKind::NonnegScalar) {
            let v = assignment.get_mut(name).unwrap();
            if v[(0, 0)] < 0.0 {
                v[(0, 0)] = 0.0;
            }
        }
    }

    let all_pass = best_margins.iter().all(|m| m.passes(tol));
    let status = if all_pass {
        LmiStatus::Feasible
    } else if best_bound < -tol.eps_psd {
        LmiStatus::Infeasible
    } else {
        LmiStatus::Inconclusive
    };

    Ok(LmiSolution {
        status,
        assignment,
        margins: best_margins,
        normalized_slack: best_slack,
        witness: best_witness,
        trace: SolveTrace {
            outer_iters: outer,
            newton_iters: newton_total,
            final_mu: mu,
            stop_reason,
        },
    })
}

/// Independently re-evaluates every constraint of `prob` at the assignment
/// stored in `sol`, with fresh eigenvalue computations.
///
/// Returns `true` exactly when all margins pass their thresholds.  This is
/// the trust boundary: callers holding a `Feasible` solution can recheck it
/// without trusting any solver internals.
pub fn verify_solution(
    prob: &AffineLmiProblem,
    sol: &LmiSolution,
    tol: &Tolerances,
) -> Result<bool> {
    tol.validate()?;
    let mut values = Vec::with_capacity(prob.vars.len());
    for decl in &prob.vars {
        let v = sol
            .assignment
            .get(&decl.name)
            .ok_or_else(|| Error::spec(format!("assignment missing variable {}", decl.name)))?;
        match decl.kind {
            VarKind::SymMatrix(k) => {
                if v.nrows() != k || v.ncols() != k {
                    return Err(Error::spec(format!(
                        "assignment for {} has wrong dimensions",
                        decl.name
                    )));
                }
                values.push(SymMat::new(v.clone(), tol)?.into_inner());
            }
            VarKind::NonnegScalar => {
                if v.nrows() != 1 || v.ncols() != 1 {
                    return Err(Error::spec(format!(
                        "assignment for {} must be a 1x1 matrix",
                        decl.name
                    )));
                }
                if v[(0, 0)] < 0.0 {
                    return Ok(false);
                }
                values.push(v.clone());
            }
        }
    }
    let fp = flatten(prob)?;
    for c in &fp.cons {
        // Re-evaluate from the original (unnormalised) expression pieces by
        // rescaling the flat data back.
        let mut f = c.a0.scale(c.scale);
        for &i in &c.support {
            // Flat scalar value from the assignment values.
            let xi = flat_value(&fp, &values, i);
            f += c.coeff[i].as_ref().unwrap().scale(c.scale * xi);
        }
        let margin = ConstraintMargin {
            label: c.label.clone(),
            kind: c.kind,
            lambda_min: SymMat::symmetrize(f).lambda_min()?,
            scale: c.scale,
        };
        if !margin.passes(tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Reads the flat scalar `i` out of per-variable matrix values.
fn flat_value(fp: &FlatProblem, values: &[DMatrix<f64>], i: usize) -> f64 {
    for (v, fv) in fp.vars.iter().enumerate() {
        if i >= fv.offset && i < fv.offset + fv.len {
            match fv.kind {
                VarKind::NonnegScalar => return values[v][(0, 0)],
                VarKind::SymMatrix(k) => {
                    let mut idx = i - fv.offset;
                    for j in 0..k {
                        if idx <= j {
                            return values[v][(idx, j)];
                        }
                        idx -= j + 1;
                    }
                }
            }
        }
    }
    unreachable!("flat index out of range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn solve(prob: &AffineLmiProblem) -> LmiSolution {
        solve_feasibility(prob, &tol(), &SolveBudget::default()).unwrap()
    }

    #[test]
    fn scalar_psd_variable_is_feasible() {
        let mut prob = AffineLmiProblem::new(Objective::MaximizeMargin);
        let p = prob.add_sym_var("P", 1).unwrap();
        let expr = AffineExpr::zero(1)
            .unwrap()
            .add_congruence(p, DMatrix::identity(1, 1), 1.0)
            .unwrap();
        prob.require_psd("p_psd", expr).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Feasible);
        let pval = sol.assignment["P"][(0, 0)];
        assert!(pval >= -tol().eps_psd, "P = {pval}");
        // The slack cap keeps the problem bounded: any value past the unit
        // cap is reported as comfortably feasible.
        assert!(sol.normalized_slack > 0.5, "slack {}", sol.normalized_slack);
        assert!(pval.is_finite() && pval.abs() <= BOX_RADIUS);
        assert!(verify_solution(&prob, &sol, &tol()).unwrap());
    }

    #[test]
    fn constant_negative_identity_is_infeasible() {
        // Feasibility mode stops at the first certifying bound; the bound is
        // valid (an upper bound on t* = -1) even if loose.
        let mut prob = AffineLmiProblem::new(Objective::Feasibility);
        let expr = AffineExpr::constant(-DMatrix::identity(2, 2)).unwrap();
        prob.require_psd("neg_id", expr).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Infeasible);
        let w = sol.witness.expect("infeasibility must carry a witness");
        assert!(w.bound < -tol().eps_psd);
        assert!(w.bound >= -1.0 - 1e-9, "bound {} must stay valid", w.bound);

        // Margin maximisation polishes the bound towards the optimum.
        let mut prob = AffineLmiProblem::new(Objective::MaximizeMargin);
        let expr = AffineExpr::constant(-DMatrix::identity(2, 2)).unwrap();
        prob.require_psd("neg_id", expr).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Infeasible);
        let w = sol.witness.unwrap();
        assert_relative_eq!(w.bound, -1.0, epsilon = 1e-6);
    }

    #[test]
    fn conflicting_scalar_constraints_are_infeasible_with_tight_bound() {
        // P >= 0 and -P - 0.5 >= 0 cannot hold; best uniform slack is
        // attained at P = -0.25 with value -0.25.
        let mut prob = AffineLmiProblem::new(Objective::MaximizeMargin);
        let p = prob.add_sym_var("P", 1).unwrap();
        let e1 = AffineExpr::zero(1)
            .unwrap()
            .add_congruence(p, DMatrix::identity(1, 1), 1.0)
            .unwrap();
        let e2 = AffineExpr::constant(DMatrix::from_element(1, 1, -0.5))
            .unwrap()
            .add_congruence(p, DMatrix::identity(1, 1), -1.0)
            .unwrap();
        prob.require_psd("p_psd", e1).unwrap();
        prob.require_psd("sum_cap", e2).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Infeasible);
        let w = sol.witness.unwrap();
        assert!(w.bound < -tol().eps_psd);
        assert_relative_eq!(w.bound, -0.25, epsilon = 1e-4);
        // And the achieved slack cannot beat the bound.
        assert!(sol.normalized_slack <= w.bound + 1e-9);
    }

    #[test]
    fn pd_constraint_enforces_strict_margin() {
        let mut prob = AffineLmiProblem::new(Objective::Feasibility);
        let q = prob.add_sym_var("Q", 2).unwrap();
        let expr = AffineExpr::zero(2)
            .unwrap()
            .add_congruence(q, DMatrix::identity(2, 2), 1.0)
            .unwrap();
        prob.require_pd("q_pd", expr).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Feasible);
        let q = &sol.assignment["Q"];
        let lam = SymMat::symmetrize(q.clone()).lambda_min().unwrap();
        assert!(lam >= tol().eps_strict);
        assert!(verify_solution(&prob, &sol, &tol()).unwrap());
    }

    #[test]
    fn nonneg_scalar_band_constraints() {
        // 0.5 <= alpha <= 1 via two 1x1 constraints.
        let mut prob = AffineLmiProblem::new(Objective::Feasibility);
        let a = prob.add_nonneg_scalar("alpha").unwrap();
        let upper = AffineExpr::constant(DMatrix::from_element(1, 1, 1.0))
            .unwrap()
            .add_scalar_mul(a, DMatrix::from_element(1, 1, -1.0))
            .unwrap();
        let lower = AffineExpr::constant(DMatrix::from_element(1, 1, -0.5))
            .unwrap()
            .add_scalar_mul(a, DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        prob.require_psd("upper", upper).unwrap();
        prob.require_psd("lower", lower).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Feasible);
        let alpha = sol.assignment["alpha"][(0, 0)];
        assert!(
            (0.5 - 1e-7..=1.0 + 1e-7).contains(&alpha),
            "alpha = {alpha}"
        );
    }

    #[test]
    fn nonneg_scalar_conflict_is_infeasible() {
        // alpha >= 0 but alpha <= -0.5 required; with margin maximisation
        // the certified bound reaches the optimum t* = -0.5 at alpha = 0.
        let mut prob = AffineLmiProblem::new(Objective::MaximizeMargin);
        let a = prob.add_nonneg_scalar("alpha").unwrap();
        let expr = AffineExpr::constant(DMatrix::from_element(1, 1, -0.5))
            .unwrap()
            .add_scalar_mul(a, DMatrix::from_element(1, 1, -1.0))
            .unwrap();
        prob.require_psd("impossible", expr).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Infeasible);
        assert_relative_eq!(sol.witness.unwrap().bound, -0.5, epsilon = 1e-4);
    }

    #[test]
    fn two_by_two_coupling() {
        // P (2x2) with P ⪰ 0 and [1 0.9; 0.9 1] - P ⪰ 0 and P11 >= 0.8:
        // feasible (e.g. P = diag(0.8, small)).
        let mut prob = AffineLmiProblem::new(Objective::Feasibility);
        let p = prob.add_sym_var("P", 2).unwrap();
        let e1 = AffineExpr::zero(2)
            .unwrap()
            .add_congruence(p, DMatrix::identity(2, 2), 1.0)
            .unwrap();
        let cap = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let e2 = AffineExpr::constant(cap)
            .unwrap()
            .add_congruence(p, DMatrix::identity(2, 2), -1.0)
            .unwrap();
        // Row selector picks P11: [1 0] P [1 0]ᵀ - 0.8 >= 0.
        let sel = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let e3 = AffineExpr::constant(DMatrix::from_element(1, 1, -0.8))
            .unwrap()
            .add_congruence(p, sel, 1.0)
            .unwrap();
        prob.require_psd("p_psd", e1).unwrap();
        prob.require_psd("cap", e2).unwrap();
        prob.require_psd("corner", e3).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Feasible);
        assert!(verify_solution(&prob, &sol, &tol()).unwrap());
    }

    #[test]
    fn determinism_bitwise() {
        let build = || {
            let mut prob = AffineLmiProblem::new(Objective::MaximizeMargin);
            let p = prob.add_sym_var("P", 2).unwrap();
            let cap = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
            let e1 = AffineExpr::zero(2)
                .unwrap()
                .add_congruence(p, DMatrix::identity(2, 2), 1.0)
                .unwrap();
            let e2 = AffineExpr::constant(cap)
                .unwrap()
                .add_congruence(p, DMatrix::identity(2, 2), -1.0)
                .unwrap();
            prob.require_psd("a", e1).unwrap();
            prob.require_psd("b", e2).unwrap();
            prob
        };
        let s1 = solve(&build());
        let s2 = solve(&build());
        assert_eq!(s1.status, s2.status);
        assert_eq!(s1.assignment["P"], s2.assignment["P"]);
        assert_eq!(s1.normalized_slack.to_bits(), s2.normalized_slack.to_bits());
        for (a, b) in s1.margins.iter().zip(s2.margins.iter()) {
            assert_eq!(a.lambda_min.to_bits(), b.lambda_min.to_bits());
        }
    }

    #[test]
    fn status_invariant_under_constraint_scaling() {
        // A feasible and an infeasible pure-PSD problem, scaled by 1e3.
        for scale in [1.0, 1e3] {
            let mut prob = AffineLmiProblem::new(Objective::Feasibility);
            let p = prob.add_sym_var("P", 1).unwrap();
            let e1 = AffineExpr::constant(DMatrix::from_element(1, 1, scale * 1.0))
                .unwrap()
                .add_congruence(p, DMatrix::identity(1, 1), -scale)
                .unwrap();
            let e2 = AffineExpr::constant(DMatrix::from_element(1, 1, -scale * 0.3))
                .unwrap()
                .add_congruence(p, DMatrix::identity(1, 1), scale)
                .unwrap();
            prob.require_psd("upper", e1).unwrap();
            prob.require_psd("lower", e2).unwrap();
            assert_eq!(solve(&prob).status, LmiStatus::Feasible, "scale {scale}");

            let mut bad = AffineLmiProblem::new(Objective::Feasibility);
            let expr = AffineExpr::constant(-DMatrix::identity(2, 2).scale(scale)).unwrap();
            bad.require_psd("neg", expr).unwrap();
            assert_eq!(solve(&bad).status, LmiStatus::Infeasible, "scale {scale}");
        }
    }

    #[test]
    fn verify_rejects_corrupted_assignment() {
        let mut prob = AffineLmiProblem::new(Objective::Feasibility);
        let p = prob.add_sym_var("P", 1).unwrap();
        let e = AffineExpr::constant(DMatrix::from_element(1, 1, -2.0))
            .unwrap()
            .add_congruence(p, DMatrix::identity(1, 1), 1.0)
            .unwrap();
        prob.require_psd("p_min", e).unwrap();
        let mut sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Feasible);
        assert!(verify_solution(&prob, &sol, &tol()).unwrap());
        sol.assignment
            .insert("P".to_string(), DMatrix::from_element(1, 1, 1.0));
        assert!(!verify_solution(&prob, &sol, &tol()).unwrap());
    }

    #[test]
    fn tolerance_band_yields_inconclusive() {
        // P must be positive definite yet bounded by eps_psd/2: the best
        // margin sits inside the band (-eps_psd, eps_strict) where neither
        // feasibility nor certified infeasibility can be declared.
        let mut prob = AffineLmiProblem::new(Objective::MaximizeMargin);
        let p = prob.add_sym_var("P", 1).unwrap();
        let e1 = AffineExpr::zero(1)
            .unwrap()
            .add_congruence(p, DMatrix::identity(1, 1), 1.0)
            .unwrap();
        let e2 = AffineExpr::constant(DMatrix::from_element(1, 1, 0.5 * tol().eps_psd))
            .unwrap()
            .add_congruence(p, DMatrix::identity(1, 1), -1.0)
            .unwrap();
        prob.require_pd("p_pd", e1).unwrap();
        prob.require_psd("p_small", e2).unwrap();
        let sol = solve(&prob);
        assert_eq!(sol.status, LmiStatus::Inconclusive);
    }

    #[test]
    fn tight_infeasibility_needs_budget() {
        // Slack optimum is -1e-7: certifying it below -eps_psd needs a
        // polished dual bound. A two-stage budget stays inconclusive, the
        // full budget certifies infeasibility.
        let build = || {
            let mut prob = AffineLmiProblem::new(Objective::MaximizeMargin);
            let p = prob.add_sym_var("P", 1).unwrap();
            let e1 = AffineExpr::zero(1)
                .unwrap()
                .add_congruence(p, DMatrix::identity(1, 1), 1.0)
                .unwrap();
            let e2 = AffineExpr::constant(DMatrix::from_element(1, 1, -2.0e-7))
                .unwrap()
                .add_congruence(p, DMatrix::identity(1, 1), -1.0)
                .unwrap();
            prob.require_psd("p_psd", e1).unwrap();
            prob.require_psd("p_upper", e2).unwrap();
            prob
        };
        let starved = solve_feasibility(
            &build(),
            &tol(),
            &SolveBudget {
                max_outer: 2,
                max_newton: 8,
            },
        )
        .unwrap();
        assert_eq!(starved.status, LmiStatus::Inconclusive);
        let sol = solve(&build());
        assert_eq!(sol.status, LmiStatus::Infeasible);
        assert_relative_eq!(sol.witness.unwrap().bound, -1.0e-7, epsilon = 2e-8);
    }

    #[test]
    fn rejects_malformed_problems() {
        let mut prob = AffineLmiProblem::new(Objective::Feasibility);
        assert!(prob.add_sym_var("", 1).is_err());
        let p = prob.add_sym_var("P", 2).unwrap();
        assert!(prob.add_sym_var("P", 3).is_err());
        // Wrong congruence width.
        let bad = AffineExpr::zero(2)
            .unwrap()
            .add_congruence(p, DMatrix::identity(2, 3), 1.0);
        assert!(bad.is_ok()); // width 3 factor on dim-2 expression: rows fit,
                              // but the variable is 2x2 so require() must fail
        let mut expr_ok = AffineExpr::zero(2).unwrap();
        expr_ok = expr_ok
            .add_congruence(p, DMatrix::identity(2, 3), 1.0)
            .unwrap();
        assert!(prob.require_psd("bad", expr_ok).is_err());
        // No constraints at all.
        let empty = AffineLmiProblem::new(Objective::Feasibility);
        assert!(solve_feasibility(&empty, &tol(), &SolveBudget::default()).is_err());
    }
}
