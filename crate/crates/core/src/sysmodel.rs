//! State-space systems, quadratic supply rates, recorded data and noise
//! models.
//!
//! A discrete-time linear system
//!
//! ```text
//! x(k+1) = A x(k) + B u(k)
//! y(k)   = C x(k) + D u(k)
//! ```
//!
//! is dissipative with respect to the quadratic supply rate
//! `s(u, y) = [u; y]ᵀ S [u; y]` when a storage matrix `P = Pᵀ ⪰ 0` exists
//! with
//!
//! ```text
//! L(P) = [I 0; A B]ᵀ diag(P, -P) [I 0; A B] + [0 I; C D]ᵀ S [0 I; C D] ⪰ 0.
//! ```
//!
//! Recorded data consists of an input sequence `U₋ (m × T)`, a state
//! sequence `X (n × (T+1))` and an output sequence `Y₋ (p × T)`.  With
//! `Z₋ = [X₋; U₋]` and `Z₊ = [X₊; Y₋]`, the systems consistent with the
//! data under a noise model `N` are
//!
//! ```text
//! Σ_N = { (A,B,C,D) :  Z₊ = [A B; C D] Z₋ + V  for some V ∈ N }.
//! ```
//!
//! Noise models supported: exact data (`N0`), a quadratic bound on the
//! transposed noise (`N1`, parameter `Φ`) and a quadratic bound on the noise
//! directly (`N2`, parameter `Θ`).  `N1` and `N2` are interchangeable via an
//! inverse-based transformation implemented in [`convert_noise`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lmi::{
    solve_feasibility, AffineExpr, AffineLmiProblem, LmiStatus, Objective, SolveBudget,
};
use crate::symmat::{Inertia, SymMat, Tolerances};

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

/// Discrete-time linear state-space model `(A, B, C, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sys {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl Sys {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::spec("A must be square"));
        }
        let m = b.ncols();
        let p = c.nrows();
        if b.nrows() != n {
            return Err(Error::spec("B must have as many rows as A"));
        }
        if c.ncols() != n {
            return Err(Error::spec("C must have as many columns as A"));
        }
        if d.nrows() != p || d.ncols() != m {
            return Err(Error::spec("D must be p x m"));
        }
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::spec("state, input and output dimensions must be >= 1"));
        }
        for mat in [&a, &b, &c, &d] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::spec("system matrices contain non-finite entries"));
            }
        }
        Ok(Sys { a, b, c, d })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Stacked coefficient matrix `[A B; C D]` of size `(n+p) × (n+m)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, m, p) = (self.n(), self.m(), self.p());
        let mut k = DMatrix::zeros(n + p, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&self.a);
        k.view_mut((0, n), (n, m)).copy_from(&self.b);
        k.view_mut((n, 0), (p, n)).copy_from(&self.c);
        k.view_mut((n, n), (p, m)).copy_from(&self.d);
        k
    }

    /// Builds a system from the stacked coefficient matrix.
    pub fn from_stacked(k: &DMatrix<f64>, n: usize, m: usize, p: usize) -> Result<Self> {
        if k.nrows() != n + p || k.ncols() != n + m {
            return Err(Error::spec("stacked matrix has wrong dimensions"));
        }
        Sys::new(
            k.view((0, 0), (n, n)).into_owned(),
            k.view((0, n), (n, m)).into_owned(),
            k.view((n, 0), (p, n)).into_owned(),
            k.view((n, n), (p, m)).into_owned(),
        )
    }

    /// The transposed system `(Aᵀ, Cᵀ, Bᵀ, Dᵀ)` with `p` inputs and `m`
    /// outputs.
    pub fn dual(&self) -> Sys {
        Sys {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    /// Spectral radius of `A`.
    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Supply rates
// ---------------------------------------------------------------------------

/// Quadratic supply rate `s(u, y) = [u; y]ᵀ S [u; y]` with `S` partitioned
/// as `[[F, G], [Gᵀ, H]]`, `F` being `m × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyRate {
    s: SymMat,
    m: usize,
    p: usize,
}

impl SupplyRate {
    /// Wraps a symmetric matrix of dimension `m + p`.
    pub fn new(s: SymMat, m: usize, p: usize) -> Result<Self> {
        if m == 0 || p == 0 {
            return Err(Error::spec("supply rate needs m >= 1 and p >= 1"));
        }
        if s.dim() != m + p {
            return Err(Error::spec(format!(
                "supply matrix dimension {} does not match m + p = {}",
                s.dim(),
                m + p
            )));
        }
        Ok(SupplyRate { s, m, p })
    }

    /// Like [`SupplyRate::new`] but additionally requires the standing
    /// inertia assumption (`p` negative, no zero, `m` positive eigenvalues),
    /// rejecting supply rates for which the certification theory is not
    /// available.
    pub fn new_checked(s: SymMat, m: usize, p: usize, tol: &Tolerances) -> Result<Self> {
        let rate = SupplyRate::new(s, m, p)?;
        if !assumption_a1(&rate, tol)? {
            return Err(Error::Assumption(format!(
                "supply rate inertia {} differs from required ({}, 0, {})",
                rate.s.inertia(tol)?,
                p,
                m
            )));
        }
        Ok(rate)
    }

    /// Passivity supply rate `s(u, y) = 2 uᵀ y` for square channels
    /// (`m = p`).
    pub fn positive_real(m: usize) -> Result<Self> {
        let dim = 2 * m;
        let mut s = DMatrix::zeros(dim, dim);
        for i in 0..m {
            s[(i, m + i)] = 1.0;
            s[(m + i, i)] = 1.0;
        }
        SupplyRate::new(SymMat::symmetrize(s), m, m)
    }

    /// Gain-bound supply rate `s(u, y) = γ²‖u‖² - ‖y‖²`.
    pub fn bounded_real(gamma: f64, m: usize, p: usize) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::spec("gamma must be positive and finite"));
        }
        let mut diag = vec![gamma * gamma; m];
        diag.extend(std::iter::repeat(-1.0).take(p));
        SupplyRate::new(SymMat::from_diagonal(&diag), m, p)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn matrix(&self) -> &SymMat {
        &self.s
    }

    /// Value of `s(u, y)` for concrete vectors.
    pub fn evaluate(&self, u: &nalgebra::DVector<f64>, y: &nalgebra::DVector<f64>) -> Result<f64> {
        if u.len() != self.m || y.len() != self.p {
            return Err(Error::spec("supply evaluation dimension mismatch"));
        }
        let mut z = nalgebra::DVector::zeros(self.m + self.p);
        z.rows_mut(0, self.m).copy_from(u);
        z.rows_mut(self.m, self.p).copy_from(y);
        Ok((z.transpose() * self.s.entries() * &z)[(0, 0)])
    }
}

/// Blocks of the inverse supply rate: `[[F̂, Ĝ], [Ĝᵀ, Ĥ]] = -S⁻¹` with `F̂`
/// of size `m × m`, together with the dual supply rate
/// `Ŝ = [[Ĥ, -Ĝᵀ], [-Ĝ, F̂]]` acting on the transposed system (which has
/// `p` inputs and `m` outputs).
#[derive(Debug, Clone)]
pub struct DualSupplyParts {
    pub fhat: DMatrix<f64>,
    pub ghat: DMatrix<f64>,
    pub hhat: DMatrix<f64>,
    pub dual_rate: SupplyRate,
}

/// Computes the dual supply parts.  Fails with [`Error::SingularSupply`]
/// when `S` has a numerically zero eigenvalue.
pub fn dual_supply(s: &SupplyRate, tol: &Tolerances) -> Result<DualSupplyParts> {
    let (m, p) = (s.m(), s.p());
    let inertia = s.matrix().inertia(tol)?;
    if inertia.zero > 0 {
        return Err(Error::SingularSupply(format!(
            "supply matrix has {} numerically zero eigenvalue(s)",
            inertia.zero
        )));
    }
    let neg_inv = SymMat::symmetrize(-s.matrix().try_inverse(tol)?.into_inner());
    let fhat = neg_inv.entries().view((0, 0), (m, m)).into_owned();
    let ghat = neg_inv.entries().view((0, m), (m, p)).into_owned();
    let hhat = neg_inv.entries().view((m, m), (p, p)).into_owned();
    // Dual rate on (y-like, u-like) channels: [[Ĥ, -Ĝᵀ], [-Ĝ, F̂]].
    let mut shat = DMatrix::zeros(p + m, p + m);
    shat.view_mut((0, 0), (p, p)).copy_from(&hhat);
    shat.view_mut((0, p), (p, m)).copy_from(&(-ghat.transpose()));
    shat.view_mut((p, 0), (m, p)).copy_from(&(-ghat.clone()));
    shat.view_mut((p, p), (m, m)).copy_from(&fhat);
    let dual_rate = SupplyRate::new(SymMat::symmetrize(shat), p, m)?;
    Ok(DualSupplyParts {
        fhat,
        ghat,
        hhat,
        dual_rate,
    })
}

/// Standing inertia assumption on the supply rate: exactly `p` negative and
/// `m` positive eigenvalues with none numerically zero.
pub fn assumption_a1(s: &SupplyRate, tol: &Tolerances) -> Result<bool> {
    Ok(s.matrix().inertia(tol)? == Inertia::new(s.p(), 0, s.m()))
}

// ---------------------------------------------------------------------------
// Data records
// ---------------------------------------------------------------------------

/// Recorded input/state/output trajectories: `U₋ (m × T)`, `X (n × (T+1))`,
/// `Y₋ (p × T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRecord {
    u_minus: DMatrix<f64>,
    x: DMatrix<f64>,
    y_minus: DMatrix<f64>,
}

impl DataRecord {
    pub fn new(u_minus: DMatrix<f64>, x: DMatrix<f64>, y_minus: DMatrix<f64>) -> Result<Self> {
        let t = u_minus.ncols();
        if t == 0 {
            return Err(Error::spec("data record must contain at least one sample"));
        }
        if x.ncols() != t + 1 {
            return Err(Error::spec(format!(
                "state sequence has {} columns, expected T + 1 = {}",
                x.ncols(),
                t + 1
            )));
        }
        if y_minus.ncols() != t {
            return Err(Error::spec(format!(
                "output sequence has {} columns, expected T = {t}",
                y_minus.ncols()
            )));
        }
        if u_minus.nrows() == 0 || x.nrows() == 0 || y_minus.nrows() == 0 {
            return Err(Error::spec("signal dimensions must be >= 1"));
        }
        for mat in [&u_minus, &x, &y_minus] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::spec("data record contains non-finite entries"));
            }
        }
        Ok(DataRecord { u_minus, x, y_minus })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.u_minus.nrows()
    }

    pub fn p(&self) -> usize {
        self.y_minus.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.u_minus.ncols()
    }

    pub fn u_minus(&self) -> &DMatrix<f64> {
        &self.u_minus
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y_minus(&self) -> &DMatrix<f64> {
        &self.y_minus
    }

    /// First `T` state columns.
    pub fn x_minus(&self) -> DMatrix<f64> {
        self.x.view((0, 0), (self.n(), self.t_len())).into_owned()
    }

    /// Last `T` state columns.
    pub fn x_plus(&self) -> DMatrix<f64> {
        self.x.view((0, 1), (self.n(), self.t_len())).into_owned()
    }

    /// `Z₋ = [X₋; U₋]` of size `(n + m) × T`.
    pub fn z_minus(&self) -> DMatrix<f64> {
        let (n, m, t) = (self.n(), self.m(), self.t_len());
        let mut z = DMatrix::zeros(n + m, t);
        z.view_mut((0, 0), (n, t)).copy_from(&self.x_minus());
        z.view_mut((n, 0), (m, t)).copy_from(&self.u_minus);
        z
    }

    /// `Z₊ = [X₊; Y₋]` of size `(n + p) × T`.
    pub fn z_plus(&self) -> DMatrix<f64> {
        let (n, p, t) = (self.n(), self.p(), self.t_len());
        let mut z = DMatrix::zeros(n + p, t);
        z.view_mut((0, 0), (n, t)).copy_from(&self.x_plus());
        z.view_mut((n, 0), (p, t)).copy_from(&self.y_minus);
        z
    }

    /// Residual `V = Z₊ - [A B; C D] Z₋` of a candidate system against the
    /// record.
    pub fn residual(&self, sys: &Sys) -> Result<DMatrix<f64>> {
        if sys.n() != self.n() || sys.m() != self.m() || sys.p() != self.p() {
            return Err(Error::spec("system dimensions do not match the data record"));
        }
        Ok(self.z_plus() - sys.stacked() * self.z_minus())
    }
}

// ---------------------------------------------------------------------------
// Noise models
// ---------------------------------------------------------------------------

/// Noise model attached to a data record.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Exact data: the only admissible residual is zero.
    N0,
    /// Transposed-form quadratic bound: `V ∈ N1` iff
    /// `[I; Vᵀ]ᵀ Φ [I; Vᵀ] ⪰ 0`, where `Φ` is `(n+p+T) × (n+p+T)` split at
    /// `n + p`.
    N1 { phi: SymMat, q: usize },
    /// Direct-form quadratic bound: `V ∈ N2` iff `[I; V]ᵀ Θ [I; V] ⪰ 0`,
    /// where `Θ` is `(T+n+p) × (T+n+p)` split at `T`.
    N2 { theta: SymMat, q: usize },
}

impl NoiseSpec {
    /// Builds an `N1` model, checking the split against the matrix size.
    pub fn n1(phi: SymMat, n_plus_p: usize) -> Result<Self> {
        if n_plus_p == 0 || n_plus_p >= phi.dim() {
            return Err(Error::spec(format!(
                "N1 split {n_plus_p} incompatible with parameter dimension {}",
                phi.dim()
            )));
        }
        Ok(NoiseSpec::N1 { phi, q: n_plus_p })
    }

    /// Builds an `N2` model, checking the split against the matrix size.
    pub fn n2(theta: SymMat, t: usize) -> Result<Self> {
        if t == 0 || t >= theta.dim() {
            return Err(Error::spec(format!(
                "N2 split {t} incompatible with parameter dimension {}",
                theta.dim()
            )));
        }
        Ok(NoiseSpec::N2 { theta, q: t })
    }

    /// Norm-style bound `V Vᵀ ⪯ bound` as an `N1` model:
    /// `Φ = diag(bound, -I_T)`.
    pub fn energy_bound(bound: &SymMat, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::spec("horizon must be >= 1"));
        }
        let q = bound.dim();
        let mut phi = DMatrix::zeros(q + t, q + t);
        phi.view_mut((0, 0), (q, q)).copy_from(bound.entries());
        for i in 0..t {
            phi[(q + i, q + i)] = -1.0;
        }
        NoiseSpec::n1(SymMat::symmetrize(phi), q)
    }

    /// Sample-covariance-style bound
    /// `(1/(T-1)) V (I - (1/T) 𝟙𝟙ᵀ) Vᵀ ⪯ bound` as an `N1` model.
    ///
    /// The centring projector `I - (1/T) 𝟙𝟙ᵀ` is singular (the all-ones
    /// vector is in its kernel), so the raw model is unbounded and violates
    /// the boundedness assumption checked by [`assumption_a2`].  A strictly
    /// positive `eps_reg` subtracts `eps_reg · I` from the trailing block to
    /// restore boundedness; with `eps_reg = 0` the constructor still
    /// succeeds, but [`assumption_a2`] will report `false` and the noisy
    /// informativity paths will refuse the model.
    pub fn sample_covariance_bound(bound: &SymMat, t: usize, eps_reg: f64) -> Result<Self> {
        if t < 2 {
            return Err(Error::spec("sample covariance bound needs T >= 2"));
        }
        if eps_reg < 0.0 || !eps_reg.is_finite() {
            return Err(Error::spec("regularisation must be nonnegative and finite"));
        }
        let q = bound.dim();
        let mut phi = DMatrix::zeros(q + t, q + t);
        phi.view_mut((0, 0), (q, q)).copy_from(bound.entries());
        let scale = 1.0 / (t as f64 - 1.0);
        for i in 0..t {
            for j in 0..t {
                let centring = if i == j { 1.0 } else { 0.0 } - 1.0 / t as f64;
                phi[(q + i, q + j)] = -scale * centring;
            }
            phi[(q + i, q + i)] -= eps_reg;
        }
        NoiseSpec::n1(SymMat::symmetrize(phi), q)
    }

    /// Parameter matrix of the model, if any.
    pub fn parameter(&self) -> Option<&SymMat> {
        match self {
            NoiseSpec::N0 => None,
            NoiseSpec::N1 { phi, .. } => Some(phi),
            NoiseSpec::N2 { theta, .. } => Some(theta),
        }
    }

    /// Leading split of the parameter matrix, if any.
    pub fn split(&self) -> Option<usize> {
        match self {
            NoiseSpec::N0 => None,
            NoiseSpec::N1 { q, .. } | NoiseSpec::N2 { q, .. } => Some(*q),
        }
    }

    /// Checks that the model is compatible with residuals of size
    /// `(n + p) × T`.
    pub fn check_dims(&self, n_plus_p: usize, t: usize) -> Result<()> {
        match self {
            NoiseSpec::N0 => Ok(()),
            NoiseSpec::N1 { phi, q } => {
                if *q != n_plus_p || phi.dim() != n_plus_p + t {
                    Err(Error::spec(format!(
                        "N1 parameter is {}-dimensional with split {q}, data needs {} with split {n_plus_p}",
                        phi.dim(),
                        n_plus_p + t
                    )))
                } else {
                    Ok(())
                }
            }
            NoiseSpec::N2 { theta, q } => {
                if *q != t || theta.dim() != n_plus_p + t {
                    Err(Error::spec(format!(
                        "N2 parameter is {}-dimensional with split {q}, data needs {} with split {t}",
                        theta.dim(),
                        n_plus_p + t
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Quadratic form whose positive semidefiniteness expresses membership of a
/// residual `V ((n+p) × T)` in the noise model.  For `N0` there is no form;
/// membership is an entrywise comparison against `atol_sym`.
pub fn noise_membership_form(v: &DMatrix<f64>, spec: &NoiseSpec) -> Result<SymMat> {
    match spec {
        NoiseSpec::N0 => Err(Error::NotApplicable(
            "exact data has no membership form; compare the residual to zero".into(),
        )),
        NoiseSpec::N1 { phi, q } => {
            spec.check_dims(v.nrows(), v.ncols())?;
            let t = v.ncols();
            // Stack [I_q; Vᵀ] and evaluate the form.
            let mut stack = DMatrix::zeros(q + t, *q);
            stack.view_mut((0, 0), (*q, *q)).copy_from(&DMatrix::identity(*q, *q));
            stack.view_mut((*q, 0), (t, *q)).copy_from(&v.transpose());
            Ok(SymMat::symmetrize(
                stack.transpose() * phi.entries() * stack,
            ))
        }
        NoiseSpec::N2 { theta, q } => {
            spec.check_dims(v.nrows(), v.ncols())?;
            let np = v.nrows();
            let mut stack = DMatrix::zeros(q + np, *q);
            stack.view_mut((0, 0), (*q, *q)).copy_from(&DMatrix::identity(*q, *q));
            stack.view_mut((*q, 0), (np, *q)).copy_from(v);
            Ok(SymMat::symmetrize(
                stack.transpose() * theta.entries() * stack,
            ))
        }
    }
}

/// Smallest eigenvalue of the membership form; for `N0` the negated largest
/// absolute residual entry (so that `margin ≥ 0` means exact membership).
pub fn noise_membership_margin(v: &DMatrix<f64>, spec: &NoiseSpec) -> Result<f64> {
    match spec {
        NoiseSpec::N0 => Ok(-v.iter().fold(0.0_f64, |r, x| r.max(x.abs()))),
        _ => noise_membership_form(v, spec)?.lambda_min(),
    }
}

/// Membership of a noise realisation in the model.
pub fn noise_membership(v: &DMatrix<f64>, spec: &NoiseSpec, tol: &Tolerances) -> Result<bool> {
    match spec {
        NoiseSpec::N0 => Ok(noise_membership_margin(v, spec)? >= -tol.atol_sym),
        _ => Ok(noise_membership_margin(v, spec)? >= -tol.eps_psd),
    }
}

/// Membership of a candidate system in the consistency set of the record:
/// the residual `Z₊ - [A B; C D] Z₋` must belong to the noise model.
pub fn sigma_membership(
    sys: &Sys,
    data: &DataRecord,
    spec: &NoiseSpec,
    tol: &Tolerances,
) -> Result<bool> {
    spec.check_dims(data.n() + data.p(), data.t_len())?;
    noise_membership(&data.residual(sys)?, spec, tol)
}

/// Margin variant of [`sigma_membership`] (positive inside, negative
/// outside).
pub fn sigma_membership_margin(sys: &Sys, data: &DataRecord, spec: &NoiseSpec) -> Result<f64> {
    noise_membership_margin(&data.residual(sys)?, spec)
}

/// Boundedness-and-interior assumption on a quadratic noise model: the
/// trailing block of the parameter must be negative definite and its Schur
/// complement positive definite.  Equivalent to the solution set being
/// bounded with nonempty interior.  For `N0` the check is not applicable.
pub fn assumption_a2(spec: &NoiseSpec, tol: &Tolerances) -> Result<bool> {
    let (param, q) = match spec {
        NoiseSpec::N0 => {
            return Err(Error::NotApplicable(
                "boundedness assumption concerns quadratic noise models only".into(),
            ))
        }
        NoiseSpec::N1 { phi, q } => (phi, *q),
        NoiseSpec::N2 { theta, q } => (theta, *q),
    };
    let trailing = param.trailing_block(q)?;
    if !trailing.is_nd(tol)? {
        return Ok(false);
    }
    let schur = param.schur_complement(q, tol)?;
    schur.is_pd(tol)
}

// ---------------------------------------------------------------------------
// Dualization of quadratic solution sets
// ---------------------------------------------------------------------------

/// Transforms the parameter of a quadratic solution set
/// `{R (r × q) : [I_q; R]ᵀ Ψ [I_q; R] ⪰ 0}` into the parameter `Ξ` of the
/// transposed set `{Rᵀ : [I_r; Rᵀ]ᵀ Ξ [I_r; Rᵀ] ⪰ 0}`:
///
/// ```text
/// Ξ = [0 -I_r; I_q 0] Ψ⁻¹ [0 -I_q; I_r 0],
/// ```
///
/// which is the orthogonal congruence `J (-Ψ⁻¹) Jᵀ` with
/// `J = [0 -I_r; I_q 0]`.  `Ψ` must be nonsingular.
pub fn dualize_quadratic_set(psi: &SymMat, q: usize, tol: &Tolerances) -> Result<SymMat> {
    if q == 0 || q >= psi.dim() {
        return Err(Error::spec(format!(
            "split {q} incompatible with parameter dimension {}",
            psi.dim()
        )));
    }
    let r = psi.dim() - q;
    let inertia = psi.inertia(tol)?;
    if inertia.zero > 0 {
        return Err(Error::SingularBlock(format!(
            "set parameter has {} numerically zero eigenvalue(s)",
            inertia.zero
        )));
    }
    let neg_inv = SymMat::symmetrize(-psi.try_inverse(tol)?.into_inner());
    let mut j = DMatrix::zeros(r + q, q + r);
    for i in 0..r {
        j[(i, q + i)] = -1.0;
    }
    for i in 0..q {
        j[(r + i, i)] = 1.0;
    }
    neg_inv.congruence(&j)
}

/// Converts between the transposed-form (`N1`) and direct-form (`N2`) noise
/// models.  Requires the boundedness assumption ([`assumption_a2`]); the
/// conversion is an involution up to round-off.
pub fn convert_noise(spec: &NoiseSpec, tol: &Tolerances) -> Result<NoiseSpec> {
    match spec {
        NoiseSpec::N0 => Err(Error::NotApplicable(
            "exact data has no quadratic parameter to convert".into(),
        )),
        NoiseSpec::N1 { phi, q } => {
            if !assumption_a2(spec, tol)? {
                return Err(Error::Assumption(
                    "noise model violates the boundedness assumption; conversion undefined".into(),
                ));
            }
            let t = phi.dim() - q;
            NoiseSpec::n2(dualize_quadratic_set(phi, *q, tol)?, t)
        }
        NoiseSpec::N2 { theta, q } => {
            if !assumption_a2(spec, tol)? {
                return Err(Error::Assumption(
                    "noise model violates the boundedness assumption; conversion undefined".into(),
                ));
            }
            let np = theta.dim() - q;
            NoiseSpec::n1(dualize_quadratic_set(theta, *q, tol)?, np)
        }
    }
}

/// Quadratic form over stacked coefficient matrices induced by a data record
/// and a quadratic noise model: a system with stacked matrix `K` is
/// consistent with the record iff
///
/// ```text
/// [I_{n+p}; Kᵀ]ᵀ N [I_{n+p}; Kᵀ] ⪰ 0,      N = Mᵀ Φ M,
/// M = [I_{n+p}  0; Z₊ᵀ  -Z₋ᵀ],
/// ```
///
/// which is exactly the residual membership `[I; Vᵀ]ᵀ Φ [I; Vᵀ] ⪰ 0` with
/// `V = Z₊ - K Z₋`.  The returned matrix has dimension `2n + m + p` with
/// leading split `n + p`.  A direct-form (`N2`) model is converted first,
/// which requires the boundedness assumption.
pub fn consistency_form(data: &DataRecord, spec: &NoiseSpec, tol: &Tolerances) -> Result<SymMat> {
    let (n, m, p, t) = (data.n(), data.m(), data.p(), data.t_len());
    spec.check_dims(n + p, t)?;
    let phi = match spec {
        NoiseSpec::N0 => {
            return Err(Error::NotApplicable(
                "exact data induces an affine, not quadratic, consistency set".into(),
            ))
        }
        NoiseSpec::N1 { phi, .. } => phi.clone(),
        NoiseSpec::N2 { .. } => match convert_noise(spec, tol)? {
            NoiseSpec::N1 { phi, .. } => phi,
            _ => unreachable!("direct-form models convert to transposed form"),
        },
    };
    let np = n + p;
    let nm = n + m;
    let mut mmap = DMatrix::zeros(np + t, np + nm);
    mmap.view_mut((0, 0), (np, np))
        .copy_from(&DMatrix::identity(np, np));
    mmap.view_mut((np, 0), (t, np))
        .copy_from(&data.z_plus().transpose());
    mmap.view_mut((np, np), (t, nm))
        .copy_from(&(-data.z_minus().transpose()));
    Ok(SymMat::symmetrize(
        mmap.transpose() * phi.entries() * mmap,
    ))
}

// ---------------------------------------------------------------------------
// Dissipation inequality
// ---------------------------------------------------------------------------

/// Dissipation LMI matrix
/// `L(P) = [I 0; A B]ᵀ diag(P, -P) [I 0; A B] + [0 I; C D]ᵀ S [0 I; C D]`
/// of size `(n + m) × (n + m)`.
pub fn dissipation_lmi_matrix(sys: &Sys, s: &SupplyRate, p: &SymMat) -> Result<SymMat> {
    let (n, m, pp) = (sys.n(), sys.m(), sys.p());
    if s.m() != m || s.p() != pp {
        return Err(Error::spec("supply rate dimensions do not match the system"));
    }
    if p.dim() != n {
        return Err(Error::spec("storage matrix must be n x n"));
    }
    // [I 0; A B] (2n × (n+m))
    let mut top = DMatrix::zeros(2 * n, n + m);
    top.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    top.view_mut((n, 0), (n, n)).copy_from(sys.a());
    top.view_mut((n, n), (n, m)).copy_from(sys.b());
    let mut pdiag = DMatrix::zeros(2 * n, 2 * n);
    pdiag.view_mut((0, 0), (n, n)).copy_from(p.entries());
    pdiag
        .view_mut((n, n), (n, n))
        .copy_from(&(-p.entries().clone()));
    // [0 I; C D] ((m+p) × (n+m))
    let mut bot = DMatrix::zeros(m + pp, n + m);
    bot.view_mut((0, n), (m, m)).copy_from(&DMatrix::identity(m, m));
    bot.view_mut((m, 0), (pp, n)).copy_from(sys.c());
    bot.view_mut((m, n), (pp, m)).copy_from(sys.d());
    let l = top.transpose() * pdiag * &top + bot.transpose() * s.matrix().entries() * &bot;
    Ok(SymMat::symmetrize(l))
}

/// Ground-truth oracle: decides whether a *known* model is dissipative with
/// respect to the supply rate by solving the model LMI
/// `P ⪰ 0, L(P) ⪰ 0` directly.
///
/// Returns `Some(P)` with a verified storage matrix, `None` when the LMI is
/// certifiably infeasible, and [`Error::Inconclusive`] when the solver
/// cannot decide within its budget.
pub fn is_dissipative_model(
    sys: &Sys,
    s: &SupplyRate,
    tol: &Tolerances,
) -> Result<Option<SymMat>> {
    let n = sys.n();
    let mut prob = AffineLmiProblem::new(Objective::Feasibility);
    let pvar = prob.add_sym_var("P", n)?;
    let p_psd = AffineExpr::zero(n)?.add_congruence(pvar, DMatrix::identity(n, n), 1.0)?;
    prob.require_psd("storage_psd", p_psd)?;
    prob.require_psd("model_lmi", model_lmi_expr(sys, s, pvar)?)?;
    let sol = solve_feasibility(&prob, tol, &SolveBudget::default())?;
    match sol.status {
        LmiStatus::Feasible => {
            let p = SymMat::new(sol.assignment["P"].clone(), tol)?;
            Ok(Some(p))
        }
        LmiStatus::Infeasible => Ok(None),
        LmiStatus::Inconclusive => Err(Error::Inconclusive(format!(
            "model dissipativity LMI undecided: {}",
            sol.trace.stop_reason
        ))),
    }
}

/// Affine expression of the model dissipation LMI in a storage unknown.
pub(crate) fn model_lmi_expr(
    sys: &Sys,
    s: &SupplyRate,
    pvar: crate::lmi::VarId,
) -> Result<AffineExpr> {
    let (n, m, pp) = (sys.n(), sys.m(), sys.p());
    if s.m() != m || s.p() != pp {
        return Err(Error::spec("supply rate dimensions do not match the system"));
    }
    let mut bot = DMatrix::zeros(m + pp, n + m);
    bot.view_mut((0, n), (m, m)).copy_from(&DMatrix::identity(m, m));
    bot.view_mut((m, 0), (pp, n)).copy_from(sys.c());
    bot.view_mut((m, n), (pp, m)).copy_from(sys.d());
    let constant = bot.transpose() * s.matrix().entries() * &bot;
    // [I; 0] and [A B]ᵀ as congruence factors for +P and -P.
    let mut e1 = DMatrix::zeros(n + m, n);
    e1.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    let mut ab = DMatrix::zeros(n + m, n);
    ab.view_mut((0, 0), (n, n)).copy_from(&sys.a().transpose());
    ab.view_mut((n, 0), (m, n)).copy_from(&sys.b().transpose());
    AffineExpr::constant(constant)?
        .add_congruence(pvar, e1, 1.0)?
        .add_congruence(pvar, ab, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn mat(r: usize, c: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, data)
    }

    fn scalar_sys(a: f64, b: f64, c: f64, d: f64) -> Sys {
        Sys::new(
            mat(1, 1, &[a]),
            mat(1, 1, &[b]),
            mat(1, 1, &[c]),
            mat(1, 1, &[d]),
        )
        .unwrap()
    }

    #[test]
    fn supply_inertia_assumption_examples() {
        let t = tol();
        // Passivity rate: inertia (1, 0, 1) = (p, 0, m).
        let pr = SupplyRate::positive_real(1).unwrap();
        assert!(assumption_a1(&pr, &t).unwrap());
        // Gain bound with two outputs: diag(4, -1, -1), inertia (2, 0, 1).
        let br = SupplyRate::bounded_real(2.0, 1, 2).unwrap();
        assert!(assumption_a1(&br, &t).unwrap());
        // Identity is positive definite: wrong inertia.
        let bad = SupplyRate::new(SymMat::identity(2), 1, 1).unwrap();
        assert!(!assumption_a1(&bad, &t).unwrap());
        assert!(SupplyRate::new_checked(SymMat::identity(2), 1, 1, &t).is_err());
    }

    #[test]
    fn dual_supply_of_passivity_rate_is_itself() {
        // S = [0 1; 1 0] has S⁻¹ = S, so -S⁻¹ = [0 -1; -1 0]:
        // F̂ = 0, Ĝ = -1, Ĥ = 0, and Ŝ = [[0, 1], [1, 0]] again.
        let s = SupplyRate::positive_real(1).unwrap();
        let parts = dual_supply(&s, &tol()).unwrap();
        assert_relative_eq!(parts.fhat[(0, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(parts.ghat[(0, 0)], -1.0, epsilon = 1e-14);
        assert_relative_eq!(parts.hhat[(0, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(
            (parts.dual_rate.matrix().entries() - s.matrix().entries()).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn dual_supply_of_gain_bound() {
        // S = diag(4, -1): -S⁻¹ = diag(-1/4, 1), so F̂ = -1/4, Ĥ = 1 and
        // Ŝ = diag(1, -1/4) — the gain bound at level 1/2 for the
        // transposed system.
        let s = SupplyRate::bounded_real(2.0, 1, 1).unwrap();
        let parts = dual_supply(&s, &tol()).unwrap();
        assert_relative_eq!(parts.fhat[(0, 0)], -0.25, epsilon = 1e-14);
        assert_relative_eq!(parts.ghat[(0, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(parts.hhat[(0, 0)], 1.0, epsilon = 1e-14);
        let expect = SymMat::from_diagonal(&[1.0, -0.25]);
        assert_relative_eq!(
            (parts.dual_rate.matrix().entries() - expect.entries()).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn dual_parts_reassemble_to_negative_inverse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t = tol();
        for _ in 0..50 {
            let (m, p) = (rng.gen_range(1..3), rng.gen_range(1..3));
            // Random supply with the required inertia: congruence of the
            // canonical diag(I_m, -I_p) ordered as (+ for u, - for y).
            let mut diag = vec![1.0; m];
            diag.extend(std::iter::repeat(-1.0).take(p));
            let core = SymMat::from_diagonal(&diag);
            let g = DMatrix::from_fn(m + p, m + p, |_, _| rng.gen_range(-1.0..1.0))
                + DMatrix::identity(m + p, m + p).scale(2.0);
            let s = match SupplyRate::new_checked(core.congruence(&g).unwrap(), m, p, &t) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let parts = dual_supply(&s, &t).unwrap();
            let inv = s.matrix().try_inverse(&t).unwrap();
            let mut reassembled = DMatrix::zeros(m + p, m + p);
            reassembled.view_mut((0, 0), (m, m)).copy_from(&parts.fhat);
            reassembled.view_mut((0, m), (m, p)).copy_from(&parts.ghat);
            reassembled
                .view_mut((m, 0), (p, m))
                .copy_from(&parts.ghat.transpose());
            reassembled.view_mut((m, m), (p, p)).copy_from(&parts.hhat);
            let err = (&reassembled + inv.entries()).norm() / inv.entries().norm();
            assert!(err < 1e-10, "blocks must reassemble -S⁻¹, err {err}");
            // Dual inertia is the swap (m, 0, p).
            assert_eq!(
                parts.dual_rate.matrix().inertia(&t).unwrap(),
                Inertia::new(m, 0, p)
            );
        }
    }

    #[test]
    fn singular_supply_is_rejected() {
        let s = SupplyRate::new(SymMat::from_diagonal(&[1.0, 0.0]), 1, 1).unwrap();
        match dual_supply(&s, &tol()) {
            Err(Error::SingularSupply(_)) => {}
            other => panic!("expected SingularSupply, got {other:?}"),
        }
    }

    #[test]
    fn data_record_slicing() {
        let u = mat(1, 3, &[1.0, -1.0, 1.0]);
        let x = mat(1, 4, &[0.0, 1.0, -0.5, 0.75]);
        let y = mat(1, 3, &[1.0, 0.0, 0.5]);
        let rec = DataRecord::new(u, x, y).unwrap();
        assert_eq!(rec.t_len(), 3);
        assert_eq!(rec.z_minus(), mat(2, 3, &[0.0, 1.0, -0.5, 1.0, -1.0, 1.0]));
        assert_eq!(rec.z_plus(), mat(2, 3, &[1.0, -0.5, 0.75, 1.0, 0.0, 0.5]));
        // The generating system has zero residual.
        let sys = scalar_sys(0.5, 1.0, 1.0, 1.0);
        assert!(rec.residual(&sys).unwrap().norm() < 1e-14);
    }

    #[test]
    fn data_record_dimension_checks() {
        let u = mat(1, 3, &[1.0, -1.0, 1.0]);
        let x_bad = mat(1, 3, &[0.0, 1.0, -0.5]);
        let y = mat(1, 3, &[1.0, 0.0, 0.5]);
        assert!(DataRecord::new(u, x_bad, y).is_err());
    }

    #[test]
    fn noise_membership_transposed_form_scalar_example() {
        // Φ = diag(1, -1) over a single sample: V ∈ N1 iff 1 - V² >= 0.
        let phi = SymMat::from_diagonal(&[1.0, -1.0]);
        let spec = NoiseSpec::n1(phi, 1).unwrap();
        let t = tol();
        assert!(noise_membership(&mat(1, 1, &[0.5]), &spec, &t).unwrap());
        assert!(noise_membership(&mat(1, 1, &[1.0]), &spec, &t).unwrap());
        assert!(!noise_membership(&mat(1, 1, &[2.0]), &spec, &t).unwrap());
        // Margin at V = 2 is 1 - 4 = -3.
        assert_relative_eq!(
            noise_membership_margin(&mat(1, 1, &[2.0]), &spec).unwrap(),
            -3.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn noise_membership_direct_form_matches_transposed_form() {
        // For any Φ satisfying the boundedness assumption the converted Θ
        // accepts exactly the same residuals.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let t = tol();
        for _ in 0..30 {
            let (np, tt) = (rng.gen_range(1..3), rng.gen_range(1..4));
            let spec = random_bounded_n1(&mut rng, np, tt);
            let conv = convert_noise(&spec, &t).unwrap();
            for _ in 0..20 {
                let scale = rng.gen_range(0.1..3.0);
                let v = DMatrix::from_fn(np, tt, |_, _| rng.gen_range(-1.0..1.0)).scale(scale);
                let m1 = noise_membership_margin(&v, &spec).unwrap();
                let m2 = noise_membership_margin(&v, &conv).unwrap();
                // Decisive cases must agree.
                if m1.abs() > 1e-7 && m2.abs() > 1e-7 {
                    assert_eq!(m1 > 0.0, m2 > 0.0, "membership verdicts diverge");
                }
            }
        }
    }

    /// Random N1 parameter satisfying the boundedness assumption by
    /// construction: trailing block −(GGᵀ + δI), leading block above its
    /// Schur floor.
    fn random_bounded_n1(
        rng: &mut rand_chacha::ChaCha8Rng,
        np: usize,
        t: usize,
    ) -> NoiseSpec {
        let g = DMatrix::from_fn(t, t, |_, _| rng.gen_range(-0.7..0.7));
        let phi22 = -(&g * g.transpose() + DMatrix::identity(t, t).scale(0.4));
        let phi12 = DMatrix::from_fn(np, t, |_, _| rng.gen_range(-0.5..0.5));
        let h = DMatrix::from_fn(np, np, |_, _| rng.gen_range(-0.7..0.7));
        let phi22_inv = phi22.clone().try_inverse().unwrap();
        let phi11 = &phi12 * phi22_inv * phi12.transpose()
            + &h * h.transpose()
            + DMatrix::identity(np, np).scale(0.3);
        let mut phi = DMatrix::zeros(np + t, np + t);
        phi.view_mut((0, 0), (np, np)).copy_from(&phi11);
        phi.view_mut((0, np), (np, t)).copy_from(&phi12);
        phi.view_mut((np, 0), (t, np)).copy_from(&phi12.transpose());
        phi.view_mut((np, np), (t, t)).copy_from(&phi22);
        NoiseSpec::n1(SymMat::symmetrize(phi), np).unwrap()
    }

    #[test]
    fn boundedness_assumption_examples() {
        let t = tol();
        // Energy bound: Φ = diag(Q, -I) with Q ≻ 0 passes.
        let spec = NoiseSpec::energy_bound(&SymMat::identity(2), 4).unwrap();
        assert!(assumption_a2(&spec, &t).unwrap());
        // Positive trailing block fails: the set is unbounded.
        let spec = NoiseSpec::n1(SymMat::from_diagonal(&[1.0, 1.0]), 1).unwrap();
        assert!(!assumption_a2(&spec, &t).unwrap());
        // Exact data: not applicable.
        match assumption_a2(&NoiseSpec::N0, &t) {
            Err(Error::NotApplicable(_)) => {}
            other => panic!("expected NotApplicable, got {other:?}"),
        }
    }

    #[test]
    fn sample_covariance_bound_needs_regularisation() {
        let t = tol();
        let bound = SymMat::identity(2);
        // Unregularised: the centring projector has the ones vector in its
        // kernel, so the trailing block is only semidefinite.
        let raw = NoiseSpec::sample_covariance_bound(&bound, 5, 0.0).unwrap();
        assert!(!assumption_a2(&raw, &t).unwrap());
        // A small ridge restores boundedness.
        let reg = NoiseSpec::sample_covariance_bound(&bound, 5, 1e-3).unwrap();
        assert!(assumption_a2(&reg, &t).unwrap());
    }

    #[test]
    fn dualize_scalar_indefinite_example() {
        // Ψ = diag(1, -1) with q = r = 1 maps to Ξ = diag(1, -1).
        let psi = SymMat::from_diagonal(&[1.0, -1.0]);
        let xi = dualize_quadratic_set(&psi, 1, &tol()).unwrap();
        assert_relative_eq!(
            (xi.entries() - psi.entries()).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn dualize_is_an_involution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let t = tol();
        for _ in 0..100 {
            let q = rng.gen_range(1..4);
            let r = rng.gen_range(1..4);
            let psi = SymMat::symmetrize(DMatrix::from_fn(q + r, q + r, |_, _| {
                rng.gen_range(-1.0..1.0)
            }));
            if psi.inertia(&t).unwrap().zero > 0 {
                continue;
            }
            let xi = dualize_quadratic_set(&psi, q, &t).unwrap();
            let back = dualize_quadratic_set(&xi, r, &t).unwrap();
            let err = (back.entries() - psi.entries()).norm() / psi.entries().norm().max(1.0);
            assert!(err < 1e-10, "double dualization must restore Ψ, err {err}");
        }
    }

    #[test]
    fn convert_noise_round_trip_scalar() {
        let t = tol();
        let spec = NoiseSpec::n1(SymMat::from_diagonal(&[1.0, -1.0]), 1).unwrap();
        let conv = convert_noise(&spec, &t).unwrap();
        match &conv {
            NoiseSpec::N2 { theta, q } => {
                assert_eq!(*q, 1);
                assert_relative_eq!(
                    (theta.entries() - SymMat::from_diagonal(&[1.0, -1.0]).entries()).norm(),
                    0.0,
                    epsilon = 1e-14
                );
            }
            other => panic!("expected N2, got {other:?}"),
        }
        let back = convert_noise(&conv, &t).unwrap();
        match &back {
            NoiseSpec::N1 { phi, q } => {
                assert_eq!(*q, 1);
                assert_relative_eq!(
                    (phi.entries() - spec.parameter().unwrap().entries()).norm(),
                    0.0,
                    epsilon = 1e-12
                );
            }
            other => panic!("expected N1, got {other:?}"),
        }
    }

    #[test]
    fn convert_noise_requires_boundedness() {
        let spec = NoiseSpec::n1(SymMat::from_diagonal(&[1.0, 1.0]), 1).unwrap();
        match convert_noise(&spec, &tol()) {
            Err(Error::Assumption(_)) => {}
            other => panic!("expected Assumption error, got {other:?}"),
        }
    }

    #[test]
    fn consistency_form_agrees_with_residual_membership() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let t = tol();
        for _ in 0..30 {
            let (n, m, p, horizon) = (2, 1, 1, rng.gen_range(3..7));
            let u = DMatrix::from_fn(m, horizon, |_, _| rng.gen_range(-1.0..1.0));
            let x = DMatrix::from_fn(n, horizon + 1, |_, _| rng.gen_range(-1.0..1.0));
            let y = DMatrix::from_fn(p, horizon, |_, _| rng.gen_range(-1.0..1.0));
            let rec = DataRecord::new(u, x, y).unwrap();
            let spec = random_bounded_n1(&mut rng, n + p, horizon);
            let form = consistency_form(&rec, &spec, &t).unwrap();
            assert_eq!(form.dim(), 2 * n + m + p);
            // Trailing block must be Z₋ Φ₂₂ Z₋ᵀ.
            let z_minus = rec.z_minus();
            let phi22 = spec
                .parameter()
                .unwrap()
                .trailing_block(n + p)
                .unwrap();
            let expect22 = &z_minus * phi22.entries() * z_minus.transpose();
            let got22 = form.trailing_block(n + p).unwrap();
            assert!((got22.entries() - expect22).norm() < 1e-12);
            // The form evaluated at any K equals the residual membership form.
            let k = DMatrix::from_fn(n + p, n + m, |_, _| rng.gen_range(-1.0..1.0));
            let sys = Sys::from_stacked(&k, n, m, p).unwrap();
            let mut stack = DMatrix::zeros(2 * n + m + p, n + p);
            stack
                .view_mut((0, 0), (n + p, n + p))
                .copy_from(&DMatrix::identity(n + p, n + p));
            stack
                .view_mut((n + p, 0), (n + m, n + p))
                .copy_from(&k.transpose());
            let via_form =
                SymMat::symmetrize(stack.transpose() * form.entries() * stack);
            let via_residual =
                noise_membership_form(&rec.residual(&sys).unwrap(), &spec).unwrap();
            let err = (via_form.entries() - via_residual.entries()).norm()
                / via_residual.entries().norm().max(1.0);
            assert!(err < 1e-12, "forms must coincide, err {err}");
        }
    }

    #[test]
    fn dissipation_lmi_zero_system_passivity() {
        // A = B = C = D = 0 (trivial system), P = I: L = diag(P, 0) for the
        // passivity rate because the output is identically zero.
        let sys = scalar_sys(0.0, 0.0, 0.0, 0.0);
        let s = SupplyRate::positive_real(1).unwrap();
        let l = dissipation_lmi_matrix(&sys, &s, &SymMat::identity(1)).unwrap();
        assert_relative_eq!(
            (l.entries() - SymMat::from_diagonal(&[1.0, 0.0]).entries()).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn dissipation_lmi_scalar_passive_block_values() {
        // a = 1/2, b = c = 1, d = 0 with the passivity rate and P = 1:
        // the two quadratic pieces give [[3/4, -1/2], [-1/2, -1]] and
        // [[0, 1], [1, 0]], summing to [[3/4, 1/2], [1/2, -1]].
        let sys = scalar_sys(0.5, 1.0, 1.0, 0.0);
        let s = SupplyRate::positive_real(1).unwrap();
        let l = dissipation_lmi_matrix(&sys, &s, &SymMat::identity(1)).unwrap();
        let expect = mat(2, 2, &[0.75, 0.5, 0.5, -1.0]);
        assert_relative_eq!((l.entries() - expect).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn dissipation_lmi_matches_pointwise_quadratic_form() {
        // [x; u]ᵀ L(P) [x; u] must equal V(x) + s(u, y) - V(x⁺) along one
        // step of the dynamics.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let (n, m, p) = (2, 1, 2);
            let sys = Sys::new(
                DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.6..0.6)),
                DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)),
                DMatrix::from_fn(p, n, |_, _| rng.gen_range(-1.0..1.0)),
                DMatrix::from_fn(p, m, |_, _| rng.gen_range(-1.0..1.0)),
            )
            .unwrap();
            let s = SupplyRate::bounded_real(1.5, m, p).unwrap();
            let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let pmat = SymMat::symmetrize(&g * g.transpose());
            let l = dissipation_lmi_matrix(&sys, &s, &pmat).unwrap();

            let x = nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let u = nalgebra::DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let xp = sys.a() * &x + sys.b() * &u;
            let y = sys.c() * &x + sys.d() * &u;
            let vx = (x.transpose() * pmat.entries() * &x)[(0, 0)];
            let vxp = (xp.transpose() * pmat.entries() * &xp)[(0, 0)];
            let supply = s.evaluate(&u, &y).unwrap();
            let mut xu = nalgebra::DVector::zeros(n + m);
            xu.rows_mut(0, n).copy_from(&x);
            xu.rows_mut(n, m).copy_from(&u);
            let form = (xu.transpose() * l.entries() * &xu)[(0, 0)];
            assert_relative_eq!(form, vx + supply - vxp, epsilon = 1e-10);
        }
    }

    #[test]
    fn model_oracle_scalar_gain_bound() {
        // H(z) = 1/(z - 1/2) has peak gain 2 (at z = 1), so the gain-bound
        // LMI is feasible at γ = 2.5 and infeasible at γ = 1.5.
        let sys = scalar_sys(0.5, 1.0, 1.0, 0.0);
        let t = tol();
        let loose = SupplyRate::bounded_real(2.5, 1, 1).unwrap();
        let p = is_dissipative_model(&sys, &loose, &t).unwrap();
        assert!(p.is_some());
        assert!(p.unwrap().is_psd(&t).unwrap());
        let tight = SupplyRate::bounded_real(1.5, 1, 1).unwrap();
        assert!(is_dissipative_model(&sys, &tight, &t).unwrap().is_none());
    }

    #[test]
    fn model_oracle_passivity_with_feedthrough() {
        // H(z) = 1 + 1/(z - 1/2) is passive; without the feedthrough the
        // relative degree makes the system non-passive.
        let t = tol();
        let passive = scalar_sys(0.5, 1.0, 1.0, 1.0);
        let s = SupplyRate::positive_real(1).unwrap();
        assert!(is_dissipative_model(&passive, &s, &t).unwrap().is_some());
        let strictly_proper = scalar_sys(0.5, 1.0, 1.0, 0.0);
        assert!(is_dissipative_model(&strictly_proper, &s, &t)
            .unwrap()
            .is_none());
    }
}
