//! Decision procedures: is a finite data record informative for
//! dissipativity with respect to a given supply rate?
//!
//! The pipeline answers with one of three outcomes:
//!
//! * **Informative** — every system consistent with the record is
//!   dissipative, witnessed by a common storage matrix (and, for noisy
//!   data, a nonnegative multiplier combining the consistency constraint
//!   with the dissipation inequality).
//! * **Not informative** — backed by evidence: either a constructive
//!   counterexample (a consistent system together with a state/input pair
//!   violating the dissipation inequality for *every* storage matrix), or a
//!   certified infeasibility bound on the decision LMI.
//! * **Inconclusive** — the numerics sit inside a tolerance band where
//!   neither answer can be certified.
//!
//! The decision logic is organised around three facts:
//!
//! 1. If the regressor matrix `Z₋ = [X₋; U₋]` does not have full row rank,
//!    the data is never informative: a rank-one update of any consistent
//!    reference system produces another consistent system with a supply-
//!    negative fixed point ([`counterexample_construct`]).
//! 2. For exact data with full row rank the consistent system is unique and
//!    informativity reduces to the `T × T` data LMI
//!    `X₋ᵀPX₋ - X₊ᵀPX₊ + [U₋; Y₋]ᵀ S [U₋; Y₋] ⪰ 0` with `P ⪰ 0`.
//! 3. For quadratic noise models, informativity is decided by a matrix
//!    S-procedure: find `Q ≻ 0` and `α ≥ 0` such that the structured
//!    matrix built from `Q` and the inverse supply blocks dominates `α`
//!    times the consistency form; the storage matrix is then `P = Q⁻¹`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lmi::{
    solve_feasibility, verify_solution, AffineExpr, AffineLmiProblem, InfeasibilityWitness,
    LmiStatus, Objective, SolveBudget,
};
use crate::symmat::{SymMat, Tolerances};
use crate::sysmodel::{
    assumption_a1, assumption_a2, consistency_form, dissipation_lmi_matrix, dual_supply,
    sigma_membership, DataRecord, NoiseSpec, SupplyRate, Sys,
};

/// Default seed for the deterministic sampling steps inside the pipeline.
pub const DEFAULT_PIPELINE_SEED: u64 = 0x5EED;

// ---------------------------------------------------------------------------
// Rank analysis
// ---------------------------------------------------------------------------

/// Numerical rank analysis of the regressor matrix `Z₋ = [X₋; U₋]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    /// Rows of `Z₋`, i.e. `n + m`; full row rank means `rank == required`.
    pub required: usize,
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Singular values above this threshold count towards the rank.
    pub threshold: f64,
    /// `false` when some singular value falls within a decade of the
    /// threshold, in which case the rank call should not be trusted.
    pub decisive: bool,
}

impl RankReport {
    pub fn full_row_rank(&self) -> bool {
        self.rank == self.required
    }
}

/// Computes the [`RankReport`] from the singular values of `Z₋`.
///
/// Works on `Z₋` directly rather than on the Gram matrix `Z₋ Z₋ᵀ`: squaring
/// would push numerically-zero singular values of a dense rank-deficient
/// regressor up to `√ε · σ_max`, right into the indecision band.  Records
/// shorter than `n + m` rows contribute exact structural zeros for the
/// missing directions.
pub fn regressor_rank(data: &DataRecord, tol: &Tolerances) -> Result<RankReport> {
    let z = data.z_minus();
    let required = data.n() + data.m();
    let mut sigmas: Vec<f64> = z.singular_values().iter().map(|s| s.max(0.0)).collect();
    sigmas.resize(required, 0.0); // structural zeros when T < n + m
    sigmas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_max = sigmas[0];
    let threshold = tol.rtol_rank * sigma_max.max(1.0);
    let rank = sigmas.iter().filter(|s| **s > threshold).count();
    let decisive = sigmas
        .iter()
        .all(|s| *s <= threshold / 10.0 || *s >= threshold * 10.0);
    Ok(RankReport {
        required,
        rank,
        sigma_min: sigmas[required - 1],
        sigma_max,
        threshold,
        decisive,
    })
}

// ---------------------------------------------------------------------------
// Counterexample construction
// ---------------------------------------------------------------------------

/// A consistent system together with a state/input pair whose one-step
/// dissipation balance is negative for **every** storage matrix.
///
/// The pair is a fixed point of the system (`A x + B u = x`), so the
/// storage difference vanishes along it and the balance reduces to the
/// supply value `s(u, y) < 0` — independent of `P`.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub system: Sys,
    pub state: DVector<f64>,
    pub input: DVector<f64>,
    pub output: DVector<f64>,
    /// `s(u, y)`; the construction normalises the pair so this is `-1`
    /// whenever the scaling stays within a safe range.
    pub supply_value: f64,
    /// Unit vector in the left kernel of `Z₋` the construction pivots on.
    pub kernel_vector: DVector<f64>,
}

/// Audit values produced by [`Counterexample::verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleAudit {
    pub membership_margin: f64,
    pub supply_value: f64,
    pub fixed_point_gap: f64,
    pub output_gap: f64,
    /// Worst `|[x; u]ᵀ L(P) [x; u] - s(u, y)|` over the sampled storage
    /// matrices.
    pub worst_identity_gap: f64,
}

impl Counterexample {
    /// `[x; u]ᵀ L(P) [x; u]` for the exhibited pair under the given storage
    /// candidate.
    pub fn dissipation_form_value(&self, supply: &SupplyRate, storage: &SymMat) -> Result<f64> {
        let l = dissipation_lmi_matrix(&self.system, supply, storage)?;
        let n = self.system.n();
        let m = self.system.m();
        let mut xu = DVector::zeros(n + m);
        xu.rows_mut(0, n).copy_from(&self.state);
        xu.rows_mut(n, m).copy_from(&self.input);
        Ok((xu.transpose() * l.entries() * &xu)[(0, 0)])
    }

    /// Re-validates the counterexample against the record from scratch:
    /// consistency-set membership, negative supply, the fixed-point and
    /// output identities, and the storage-independence of the dissipation
    /// balance over a batch of random positive semidefinite storage
    /// candidates.
    pub fn verify(
        &self,
        data: &DataRecord,
        spec: &NoiseSpec,
        supply: &SupplyRate,
        tol: &Tolerances,
    ) -> Result<CounterexampleAudit> {
        if !sigma_membership(&self.system, data, spec, tol)? {
            return Err(Error::spec(
                "counterexample system is not consistent with the record",
            ));
        }
        let membership_margin =
            crate::sysmodel::sigma_membership_margin(&self.system, data, spec)?;
        let supply_value = supply.evaluate(&self.input, &self.output)?;
        if supply_value > -tol.eps_strict {
            return Err(Error::spec(format!(
                "counterexample supply value {supply_value:.3e} is not negative"
            )));
        }
        let fixed_point_gap = (self.system.a() * &self.state + self.system.b() * &self.input
            - &self.state)
            .amax();
        let output_gap = (self.system.c() * &self.state + self.system.d() * &self.input
            - &self.output)
            .amax();
        let pair_scale = self.state.amax().max(self.input.amax()).max(1.0);
        if fixed_point_gap > 1e-8 * pair_scale || output_gap > 1e-8 * pair_scale {
            return Err(Error::numerical(format!(
                "counterexample identities violated: fixed-point gap {fixed_point_gap:.3e}, \
                 output gap {output_gap:.3e}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xA0D17);
        let n = self.system.n();
        let mut worst_identity_gap = 0.0_f64;
        for _ in 0..50 {
            let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let p = SymMat::symmetrize(&g * g.transpose());
            let gap = (self.dissipation_form_value(supply, &p)? - supply_value).abs();
            worst_identity_gap = worst_identity_gap.max(gap);
        }
        if worst_identity_gap > 1e-8 {
            return Err(Error::numerical(format!(
                "dissipation balance depends on the storage matrix \
                 (worst gap {worst_identity_gap:.3e})"
            )));
        }
        Ok(CounterexampleAudit {
            membership_margin,
            supply_value,
            fixed_point_gap,
            output_gap,
            worst_identity_gap,
        })
    }
}

/// Picks a system consistent with the record to serve as the base of the
/// counterexample construction: the exact fit for noiseless data, the
/// centre of the membership form (falling back to the least-squares fit)
/// for quadratic models.
pub fn consistent_reference(
    data: &DataRecord,
    spec: &NoiseSpec,
    tol: &Tolerances,
) -> Result<Sys> {
    let (n, m, p) = (data.n(), data.m(), data.p());
    let z_minus = data.z_minus();
    let z_plus = data.z_plus();
    let k_ls = &z_plus
        * z_minus
            .clone()
            .svd(true, true)
            .pseudo_inverse(tol.rtol_rank)
            .map_err(Error::numerical)?;
    let ls = Sys::from_stacked(&k_ls, n, m, p)?;
    match spec {
        NoiseSpec::N0 => {
            let residual = data.residual(&ls)?.amax();
            let scale = z_plus.amax().max(1.0);
            if residual > 1e3 * tol.atol_sym * scale {
                return Err(Error::DataInconsistent(format!(
                    "no linear system reproduces the record exactly \
                     (best residual max entry {residual:.3e})"
                )));
            }
            Ok(ls)
        }
        _ => {
            let form = consistency_form(data, spec, tol)?;
            let center = membership_center(&form, n + p, n + m)?;
            let center_sys = Sys::from_stacked(&center.transpose(), n, m, p)?;
            if sigma_membership(&center_sys, data, spec, tol)? {
                return Ok(center_sys);
            }
            if sigma_membership(&ls, data, spec, tol)? {
                return Ok(ls);
            }
            Err(Error::SamplingStarved {
                accepted: 0,
                attempted: 2,
                context: "neither the membership-form centre nor the least-squares fit lies \
                          in the consistency set"
                    .into(),
            })
        }
    }
}

/// Maximiser `Kᵀ = -N₂₂⁺ N₁₂ᵀ` of the membership form, restricted to the
/// directions in which the trailing block is negative.
fn membership_center(form: &SymMat, q: usize, r: usize) -> Result<DMatrix<f64>> {
    let n12 = form.offdiag_block(q)?;
    let n22 = form.trailing_block(q)?;
    let (eigs, vecs) = n22.eigen_pairs()?;
    let thr = 1e-10 * n22.max_abs().max(1.0);
    let mut pinv = DMatrix::zeros(r, r);
    for (i, lambda) in eigs.iter().enumerate() {
        if *lambda < -thr {
            let v = vecs.column(i);
            pinv += (v * v.transpose()).scale(1.0 / lambda);
        }
    }
    Ok(-(pinv * n12.transpose()))
}

/// Builds a counterexample from rank-deficient data.
///
/// Given a unit vector `(ξ; η)` in the left kernel of `Z₋` and a consistent
/// reference `(A₀, B₀, C₀, D₀)`, the construction finds a pair `(x, u)`
/// with `ξᵀx + ηᵀu = 1` and negative supply at the matching output, and
/// returns the rank-one modification
///
/// ```text
/// A = A₀ + ζξᵀ,  B = B₀ + ζηᵀ,  C = C₀ + θξᵀ,  D = D₀ + θηᵀ,
/// ζ = x - A₀x - B₀u,  θ = y - C₀x - D₀u,
/// ```
///
/// which leaves the data residual untouched (so consistency is inherited
/// from the reference) while making `(x, u)` a fixed point with
/// `s(u, y) < 0`.
pub fn counterexample_construct(
    data: &DataRecord,
    spec: &NoiseSpec,
    supply: &SupplyRate,
    reference: &Sys,
    seed: u64,
    tol: &Tolerances,
) -> Result<Counterexample> {
    let (n, m, p) = (data.n(), data.m(), data.p());
    if supply.m() != m || supply.p() != p {
        return Err(Error::spec("supply rate dimensions do not match the record"));
    }
    if reference.n() != n || reference.m() != m || reference.p() != p {
        return Err(Error::spec("reference system dimensions do not match the record"));
    }
    if !sigma_membership(reference, data, spec, tol)? {
        return Err(Error::spec(
            "reference system is not consistent with the record",
        ));
    }
    let rank = regressor_rank(data, tol)?;
    if rank.full_row_rank() {
        return Err(Error::NotApplicable(
            "regressor matrix has full row rank; the kernel construction does not apply".into(),
        ));
    }
    // Most reliable left-kernel direction: eigenvector of Z₋Z₋ᵀ at its
    // smallest eigenvalue.
    let z = data.z_minus();
    let gram = SymMat::symmetrize(&z * z.transpose());
    let (_, vecs) = gram.eigen_pairs()?;
    let kernel = vecs.column(0).into_owned();
    let xi = kernel.rows(0, n).into_owned();
    let eta = kernel.rows(n, m).into_owned();

    // Supply-negative direction: eigenvector at the most negative
    // eigenvalue of S (exists under the standing inertia assumption).
    let (s_eigs, s_vecs) = supply.matrix().eigen_pairs()?;
    let s_scale = supply.matrix().max_abs().max(1.0);
    if s_eigs[0] >= -tol.eps_strict * s_scale {
        return Err(Error::Assumption(
            "supply matrix has no decisively negative eigenvalue".into(),
        ));
    }
    let neg_dir = s_vecs.column(0).into_owned(); // unit, [u-part; y-part]

    let (x, u, y) = if xi.norm() > 1e-8 {
        // State-kernel branch: u is the supply-negative input, x completes
        // the normalisation ξᵀx + ηᵀu = 1.
        let u_hat = neg_dir.rows(0, m).into_owned();
        let y_hat = neg_dir.rows(m, p).into_owned();
        let coeff = (1.0 - eta.dot(&u_hat)) / xi.norm_squared();
        (xi.scale(coeff), u_hat, y_hat)
    } else {
        // Input-kernel branch: sample a supply-negative pair whose input
        // component is visible to η, then normalise ηᵀu = 1 (which scales
        // the supply by a positive factor).
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut found = None;
        let mut attempts = 0usize;
        while attempts < 1000 {
            attempts += 1;
            let g: DVector<f64> = DVector::from_fn(m + p, |_, _| StandardNormal.sample(&mut rng));
            let z_cand = &neg_dir + g.scale(0.3 / g.norm().max(1e-12));
            let val = (z_cand.transpose() * supply.matrix().entries() * &z_cand)[(0, 0)];
            let eta_component = eta.dot(&z_cand.rows(0, m).into_owned());
            if val < -1e-10 * s_scale && eta_component.abs() > 1e-8 {
                let alpha = 1.0 / eta_component;
                found = Some((
                    z_cand.rows(0, m).scale(alpha),
                    z_cand.rows(m, p).scale(alpha),
                ));
                break;
            }
        }
        let (u, y) = found.ok_or(Error::SamplingStarved {
            accepted: 0,
            attempted: 1000,
            context: "no supply-negative pair with nonzero kernel component found".into(),
        })?;
        (DVector::zeros(n), u, y)
    };

    // Rank-one modification making (x, u) a fixed point with output y.
    let zeta = &x - reference.a() * &x - reference.b() * &u;
    let theta = &y - reference.c() * &x - reference.d() * &u;
    let mut delta = DMatrix::zeros(n + p, n + m);
    let mut kernel_row = DVector::zeros(n + m);
    kernel_row.rows_mut(0, n).copy_from(&xi);
    kernel_row.rows_mut(n, m).copy_from(&eta);
    let mut zt = DVector::zeros(n + p);
    zt.rows_mut(0, n).copy_from(&zeta);
    zt.rows_mut(n, p).copy_from(&theta);
    delta += &zt * kernel_row.transpose();
    let stacked = reference.stacked() + delta;
    let system = Sys::from_stacked(&stacked, n, m, p)?;

    // Normalise the exhibited pair so the supply value is -1 (the identity
    // is homogeneous of degree two in (x, u, y)).
    let raw_supply = supply.evaluate(&u, &y)?;
    if raw_supply >= 0.0 {
        return Err(Error::numerical(
            "constructed pair lost its negative supply value",
        ));
    }
    let c = (1.0 / (-raw_supply)).sqrt().min(1e6);
    let (x, u, y) = (x.scale(c), u.scale(c), y.scale(c));
    let supply_value = supply.evaluate(&u, &y)?;
    if supply_value > -tol.eps_strict {
        return Err(Error::numerical(format!(
            "normalised supply value {supply_value:.3e} is not decisively negative"
        )));
    }
    Ok(Counterexample {
        system,
        state: x,
        input: u,
        output: y,
        supply_value,
        kernel_vector: kernel,
    })
}

// ---------------------------------------------------------------------------
// Outcomes
// ---------------------------------------------------------------------------

/// Witness data of an *informative* verdict.
#[derive(Debug, Clone)]
pub struct InformativeCertificate {
    /// Common storage matrix for every consistent system.
    pub storage: SymMat,
    /// S-procedure multiplier (quadratic noise models only).
    pub alpha: Option<f64>,
    /// Raw smallest eigenvalue of the decision LMI matrix at the
    /// certificate: the combined S-procedure matrix for noisy data, the
    /// `T × T` data LMI for exact data.
    pub decision_lambda_min: f64,
    /// Smallest eigenvalue of the storage matrix.
    pub storage_lambda_min: f64,
    /// The uniquely identified system (exact, full-rank data only).
    pub identified: Option<Sys>,
}

/// Evidence of a *not informative* verdict.
#[derive(Debug, Clone)]
pub enum NotInformativeEvidence {
    /// Constructive: a consistent system violating the dissipation
    /// inequality for every storage matrix (rank-deficient data).
    Counterexample(Counterexample),
    /// Exact full-rank data whose unique consistent system is not
    /// dissipative; `bound` certifies the infeasibility of its storage LMI.
    UniqueSystemNotDissipative {
        system: Sys,
        bound: f64,
        witness: InfeasibilityWitness,
    },
    /// Quadratic noise model whose S-procedure LMI is certifiably
    /// infeasible (conclusive because the model has a strict interior).
    InfeasibleLmi {
        bound: f64,
        witness: InfeasibilityWitness,
    },
}

/// Final verdict of the informativity analysis.
#[derive(Debug, Clone)]
pub enum InformativityOutcome {
    Informative(InformativeCertificate),
    NotInformative(NotInformativeEvidence),
    Inconclusive { reason: String },
}

impl InformativityOutcome {
    pub fn is_informative(&self) -> bool {
        matches!(self, InformativityOutcome::Informative(_))
    }

    pub fn is_not_informative(&self) -> bool {
        matches!(self, InformativityOutcome::NotInformative(_))
    }
}

// ---------------------------------------------------------------------------
// Exact data (unique identification + data LMI)
// ---------------------------------------------------------------------------

/// Identifies the unique consistent system from full-row-rank exact data.
pub fn identify_unique(data: &DataRecord, tol: &Tolerances) -> Result<(Sys, f64)> {
    let rank = regressor_rank(data, tol)?;
    if !rank.full_row_rank() {
        return Err(Error::NotApplicable(
            "identification needs a full-row-rank regressor matrix".into(),
        ));
    }
    let z_minus = data.z_minus();
    let k = &data.z_plus()
        * z_minus
            .clone()
            .svd(true, true)
            .pseudo_inverse(tol.rtol_rank)
            .map_err(Error::numerical)?;
    let sys = Sys::from_stacked(&k, data.n(), data.m(), data.p())?;
    let residual = data.residual(&sys)?.amax();
    Ok((sys, residual))
}

/// Decision procedure for exact data.
/// Supply-rate term `[U₋; Y₋]ᵀ S [U₋; Y₋]` of the exact-data decision LMI.
fn uy_supply_term(data: &DataRecord, supply: &SupplyRate) -> DMatrix<f64> {
    let t = data.t_len();
    let mut uy = DMatrix::zeros(data.m() + data.p(), t);
    uy.view_mut((0, 0), (data.m(), t)).copy_from(data.u_minus());
    uy.view_mut((data.m(), 0), (data.p(), t))
        .copy_from(data.y_minus());
    uy.transpose() * supply.matrix().entries() * &uy
}

/// The `T × T` exact-data decision LMI evaluated at a fixed storage matrix:
/// `X₋ᵀ P X₋ - X₊ᵀ P X₊ + [U₋; Y₋]ᵀ S [U₋; Y₋]`.  Positive semidefiniteness
/// of this matrix together with `P ⪰ 0` certifies dissipativity of the
/// (unique) system explaining full-row-rank exact data.
pub fn noiseless_data_lmi(
    data: &DataRecord,
    supply: &SupplyRate,
    storage: &SymMat,
) -> Result<SymMat> {
    if storage.dim() != data.n() {
        return Err(Error::spec("storage matrix must be n x n"));
    }
    if supply.m() != data.m() || supply.p() != data.p() {
        return Err(Error::spec("supply-rate dimensions do not match the record"));
    }
    let p = storage.entries();
    let lmi = data.x_minus().transpose() * p * data.x_minus()
        - data.x_plus().transpose() * p * data.x_plus()
        + uy_supply_term(data, supply);
    Ok(SymMat::symmetrize(lmi))
}

/// Exact-data feasibility problem over the storage matrix `P`: the `T × T`
/// data LMI (`data_lmi`) plus `P ⪰ 0` (`storage_psd`).
pub fn noiseless_problem(data: &DataRecord, supply: &SupplyRate) -> Result<AffineLmiProblem> {
    if supply.m() != data.m() || supply.p() != data.p() {
        return Err(Error::spec("supply-rate dimensions do not match the record"));
    }
    let n = data.n();
    let mut prob = AffineLmiProblem::new(Objective::Feasibility);
    let pvar = prob.add_sym_var("P", n)?;
    let p_psd = AffineExpr::zero(n)?.add_congruence(pvar, DMatrix::identity(n, n), 1.0)?;
    prob.require_psd("storage_psd", p_psd)?;
    let data_lmi = AffineExpr::constant(uy_supply_term(data, supply))?
        .add_congruence(pvar, data.x_minus().transpose(), 1.0)?
        .add_congruence(pvar, data.x_plus().transpose(), -1.0)?;
    prob.require_psd("data_lmi", data_lmi)?;
    Ok(prob)
}

pub fn informativity_noiseless(
    data: &DataRecord,
    supply: &SupplyRate,
    tol: &Tolerances,
    seed: u64,
    budget: &SolveBudget,
) -> Result<InformativityOutcome> {
    check_common(data, supply, tol)?;
    let rank = regressor_rank(data, tol)?;
    if !rank.decisive {
        return Ok(InformativityOutcome::Inconclusive {
            reason: format!(
                "regressor singular value {:.3e} sits within a decade of the rank \
                 threshold {:.3e}",
                rank.sigma_min, rank.threshold
            ),
        });
    }
    if !rank.full_row_rank() {
        let reference = consistent_reference(data, &NoiseSpec::N0, tol)?;
        let ce = counterexample_construct(data, &NoiseSpec::N0, supply, &reference, seed, tol)?;
        ce.verify(data, &NoiseSpec::N0, supply, tol)?;
        return Ok(InformativityOutcome::NotInformative(
            NotInformativeEvidence::Counterexample(ce),
        ));
    }

    let (identified, residual) = identify_unique(data, tol)?;
    let scale = data.z_plus().amax().max(1.0);
    if residual > 1e3 * tol.atol_sym * scale {
        return Err(Error::DataInconsistent(format!(
            "exact noise model but the record is not linear \
             (identification residual {residual:.3e})"
        )));
    }

    let prob = noiseless_problem(data, supply)?;
    let sol = solve_feasibility(&prob, tol, budget)?;

    match sol.status {
        LmiStatus::Feasible => {
            if !verify_solution(&prob, &sol, tol)? {
                return Ok(InformativityOutcome::Inconclusive {
                    reason: "solver reported feasible but independent re-evaluation failed".into(),
                });
            }
            let storage = SymMat::new(sol.assignment["P"].clone(), tol)?;
            // Cross-check: the certificate must make the identified system's
            // model LMI pass in raw units.
            let model_lmi = dissipation_lmi_matrix(&identified, supply, &storage)?;
            let model_margin = model_lmi.lambda_min()?;
            if model_margin < -tol.eps_psd * model_lmi.max_abs().max(1.0) {
                return Ok(InformativityOutcome::Inconclusive {
                    reason: format!(
                        "data LMI feasible but the identified system's model LMI has \
                         raw margin {model_margin:.3e}"
                    ),
                });
            }
            let decision_lambda_min = sol
                .margins
                .iter()
                .find(|m| m.label == "data_lmi")
                .map(|m| m.lambda_min)
                .unwrap_or(f64::NAN);
            let storage_lambda_min = storage.lambda_min()?;
            Ok(InformativityOutcome::Informative(InformativeCertificate {
                storage,
                alpha: None,
                decision_lambda_min,
                storage_lambda_min,
                identified: Some(identified),
            }))
        }
        LmiStatus::Infeasible => {
            let witness = sol.witness.ok_or_else(|| {
                Error::numerical("infeasible status without a dual witness")
            })?;
            Ok(InformativityOutcome::NotInformative(
                NotInformativeEvidence::UniqueSystemNotDissipative {
                    system: identified,
                    bound: witness.bound,
                    witness,
                },
            ))
        }
        LmiStatus::Inconclusive => Ok(InformativityOutcome::Inconclusive {
            reason: format!("data LMI undecided: {}", sol.trace.stop_reason),
        }),
    }
}

// ---------------------------------------------------------------------------
// Quadratic noise models (matrix S-procedure)
// ---------------------------------------------------------------------------

/// Interior-point (Slater) analysis of the consistency form.
#[derive(Debug, Clone)]
pub struct SlaterReport {
    /// Trailing block of the form is negative definite.
    pub trailing_definite: bool,
    /// Largest achievable smallest eigenvalue of the membership form
    /// (the Schur complement margin); `None` when the trailing block is
    /// singular.
    pub margin: Option<f64>,
    /// Strict interior exists: trailing block definite and margin
    /// decisively positive.
    pub satisfied: bool,
}

/// Checks whether the consistency set has a strict interior point, which is
/// what makes an infeasible S-procedure LMI conclusive.
pub fn slater_check(
    data: &DataRecord,
    spec: &NoiseSpec,
    tol: &Tolerances,
) -> Result<SlaterReport> {
    let form = consistency_form(data, spec, tol)?;
    let q = data.n() + data.p();
    let trailing = form.trailing_block(q)?;
    let trailing_definite = trailing.is_nd(tol)?;
    if !trailing_definite {
        return Ok(SlaterReport {
            trailing_definite,
            margin: None,
            satisfied: false,
        });
    }
    let schur = form.schur_complement(q, tol)?;
    let margin = schur.lambda_min()?;
    let scale = form.max_abs().max(1.0);
    Ok(SlaterReport {
        trailing_definite,
        margin: Some(margin),
        satisfied: margin > tol.eps_strict * scale,
    })
}

/// Builds the structured storage matrix
///
/// ```text
/// [ Q  0   0   0  ]
/// [ 0  Ĥ   0  -Ĝᵀ ]
/// [ 0  0  -Q   0  ]
/// [ 0 -Ĝ   0   F̂  ]
/// ```
///
/// with blocks sized `(n, p, n, m)`, where `[[F̂, Ĝ], [Ĝᵀ, Ĥ]] = -S⁻¹`.
/// Its defining property: the congruence by `[I_{n+p}; Kᵀ]` with
/// `K = [A B; C D]` equals the dissipation LMI matrix of the transposed
/// system `(Aᵀ, Cᵀ, Bᵀ, Dᵀ)` under the dual supply rate with storage `Q`.
pub fn storage_structure(
    parts: &crate::sysmodel::DualSupplyParts,
    q_storage_inverse: &SymMat,
    m: usize,
    p: usize,
) -> Result<SymMat> {
    let n = q_storage_inverse.dim();
    if parts.fhat.nrows() != m || parts.hhat.nrows() != p {
        return Err(Error::spec("inverse supply blocks do not match (m, p)"));
    }
    let dim = 2 * n + m + p;
    let mut big = DMatrix::zeros(dim, dim);
    big.view_mut((0, 0), (n, n))
        .copy_from(q_storage_inverse.entries());
    big.view_mut((n, n), (p, p)).copy_from(&parts.hhat);
    big.view_mut((n, n + p + n), (p, m))
        .copy_from(&(-parts.ghat.transpose()));
    big.view_mut((n + p, n + p), (n, n))
        .copy_from(&(-q_storage_inverse.entries().clone()));
    big.view_mut((n + p + n, n), (m, p))
        .copy_from(&(-parts.ghat.clone()));
    big.view_mut((n + p + n, n + p + n), (m, m))
        .copy_from(&parts.fhat);
    Ok(SymMat::symmetrize(big))
}

/// The full S-procedure matrix: [`storage_structure`] minus `α` times the
/// consistency form of the record.  Used both by the decision procedure and
/// by certificate re-validation.
pub fn s_lemma_combined(
    data: &DataRecord,
    spec: &NoiseSpec,
    supply: &SupplyRate,
    q_storage_inverse: &SymMat,
    alpha: f64,
    tol: &Tolerances,
) -> Result<SymMat> {
    let (n, m, p) = (data.n(), data.m(), data.p());
    if q_storage_inverse.dim() != n {
        return Err(Error::spec("inverse storage matrix must be n x n"));
    }
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::spec("multiplier must be nonnegative and finite"));
    }
    let parts = dual_supply(supply, tol)?;
    let form = consistency_form(data, spec, tol)?;
    let big = storage_structure(&parts, q_storage_inverse, m, p)?;
    Ok(SymMat::symmetrize(
        big.entries() - form.entries().scale(alpha),
    ))
}

/// Noisy-data feasibility problem over the inverse storage matrix `Q` and
/// the S-procedure multiplier `α ≥ 0`: the combined matrix inequality
/// (`s_procedure`) plus `Q ≻ 0` (`storage_inverse_pd`).  The combined
/// constraint is affine in `(Q, α)`: the structured storage matrix minus
/// `α` times the data consistency form.
pub fn noisy_problem(
    data: &DataRecord,
    spec: &NoiseSpec,
    supply: &SupplyRate,
    tol: &Tolerances,
) -> Result<AffineLmiProblem> {
    let (n, m, p) = (data.n(), data.m(), data.p());
    let parts = dual_supply(supply, tol)?;
    let form = consistency_form(data, spec, tol)?;
    let dim = 2 * n + m + p;

    // Constant blocks of the structured matrix.
    let mut constant = DMatrix::zeros(dim, dim);
    constant.view_mut((n, n), (p, p)).copy_from(&parts.hhat);
    constant
        .view_mut((n, n + p + n), (p, m))
        .copy_from(&(-parts.ghat.transpose()));
    constant
        .view_mut((n + p + n, n), (m, p))
        .copy_from(&(-parts.ghat.clone()));
    constant
        .view_mut((n + p + n, n + p + n), (m, m))
        .copy_from(&parts.fhat);

    // Selectors embedding Q at block (1,1) and -Q at block (3,3).
    let mut e1 = DMatrix::zeros(dim, n);
    e1.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    let mut e3 = DMatrix::zeros(dim, n);
    e3.view_mut((n + p, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));

    let mut prob = AffineLmiProblem::new(Objective::Feasibility);
    let qvar = prob.add_sym_var("Q", n)?;
    let avar = prob.add_nonneg_scalar("alpha")?;
    let q_pd = AffineExpr::zero(n)?.add_congruence(qvar, DMatrix::identity(n, n), 1.0)?;
    prob.require_pd("storage_inverse_pd", q_pd)?;
    let combined = AffineExpr::constant(constant)?
        .add_congruence(qvar, e1, 1.0)?
        .add_congruence(qvar, e3, -1.0)?
        .add_scalar_mul(avar, -form.entries().clone())?;
    prob.require_psd("s_procedure", combined)?;
    Ok(prob)
}

/// Decision procedure for quadratic noise models in transposed form.
pub fn informativity_noisy_n1(
    data: &DataRecord,
    spec: &NoiseSpec,
    supply: &SupplyRate,
    tol: &Tolerances,
    seed: u64,
    budget: &SolveBudget,
) -> Result<InformativityOutcome> {
    check_common(data, supply, tol)?;
    if !matches!(spec, NoiseSpec::N1 { .. }) {
        return Err(Error::spec("this decision path expects a transposed-form model"));
    }
    spec.check_dims(data.n() + data.p(), data.t_len())?;
    if !assumption_a2(spec, tol)? {
        return Err(Error::Assumption(
            "noise model violates the boundedness assumption (trailing parameter block \
             must be negative definite with positive-definite Schur complement)"
                .into(),
        ));
    }
    let rank = regressor_rank(data, tol)?;
    if !rank.decisive {
        return Ok(InformativityOutcome::Inconclusive {
            reason: format!(
                "regressor singular value {:.3e} sits within a decade of the rank \
                 threshold {:.3e}",
                rank.sigma_min, rank.threshold
            ),
        });
    }
    if !rank.full_row_rank() {
        let reference = consistent_reference(data, spec, tol)?;
        let ce = counterexample_construct(data, spec, supply, &reference, seed, tol)?;
        ce.verify(data, spec, supply, tol)?;
        return Ok(InformativityOutcome::NotInformative(
            NotInformativeEvidence::Counterexample(ce),
        ));
    }

    let prob = noisy_problem(data, spec, supply, tol)?;
    let sol = solve_feasibility(&prob, tol, budget)?;

    match sol.status {
        LmiStatus::Feasible => {
            if !verify_solution(&prob, &sol, tol)? {
                return Ok(InformativityOutcome::Inconclusive {
                    reason: "solver reported feasible but independent re-evaluation failed".into(),
                });
            }
            let q = SymMat::new(sol.assignment["Q"].clone(), tol)?;
            let alpha = sol.assignment["alpha"][(0, 0)];
            // Raw absolute re-checks, independent of the solver's internal
            // normalisation.
            let combined_raw = s_lemma_combined(data, spec, supply, &q, alpha, tol)?;
            let raw_margin = combined_raw.lambda_min()?;
            if raw_margin < -tol.eps_psd * combined_raw.max_abs().max(1.0) {
                return Ok(InformativityOutcome::Inconclusive {
                    reason: format!(
                        "solver margin passed but the rebuilt S-procedure matrix has \
                         raw margin {raw_margin:.3e}"
                    ),
                });
            }
            let q_lambda_min = q.lambda_min()?;
            if q_lambda_min < 0.5 * tol.eps_strict {
                return Ok(InformativityOutcome::Inconclusive {
                    reason: format!(
                        "inverse storage matrix is not decisively positive definite \
                         (λ_min = {q_lambda_min:.3e})"
                    ),
                });
            }
            let storage = q.try_inverse(tol)?;
            let storage_lambda_min = storage.lambda_min()?;
            Ok(InformativityOutcome::Informative(InformativeCertificate {
                storage,
                alpha: Some(alpha),
                decision_lambda_min: raw_margin,
                storage_lambda_min,
                identified: None,
            }))
        }
        LmiStatus::Infeasible => {
            let witness = sol.witness.ok_or_else(|| {
                Error::numerical("infeasible status without a dual witness")
            })?;
            let slater = slater_check(data, spec, tol)?;
            if slater.satisfied {
                Ok(InformativityOutcome::NotInformative(
                    NotInformativeEvidence::InfeasibleLmi {
                        bound: witness.bound,
                        witness,
                    },
                ))
            } else {
                Ok(InformativityOutcome::Inconclusive {
                    reason: "decision LMI infeasible, but the consistency set has no strict \
                             interior so infeasibility is not conclusive"
                        .into(),
                })
            }
        }
        LmiStatus::Inconclusive => Ok(InformativityOutcome::Inconclusive {
            reason: format!("S-procedure LMI undecided: {}", sol.trace.stop_reason),
        }),
    }
}

/// Decision procedure for quadratic noise models in direct form: the model
/// is converted to transposed form (an exact involution on the parameter)
/// and the transposed-form path decides.
pub fn informativity_noisy_n2(
    data: &DataRecord,
    spec: &NoiseSpec,
    supply: &SupplyRate,
    tol: &Tolerances,
    seed: u64,
    budget: &SolveBudget,
) -> Result<InformativityOutcome> {
    if !matches!(spec, NoiseSpec::N2 { .. }) {
        return Err(Error::spec("this decision path expects a direct-form model"));
    }
    let converted = crate::sysmodel::convert_noise(spec, tol)?;
    informativity_noisy_n1(data, &converted, supply, tol, seed, budget)
}

// ---------------------------------------------------------------------------
// Dispatcher
// ---------------------------------------------------------------------------

fn check_common(data: &DataRecord, supply: &SupplyRate, tol: &Tolerances) -> Result<()> {
    if supply.m() != data.m() || supply.p() != data.p() {
        return Err(Error::spec(
            "supply rate dimensions do not match the data record",
        ));
    }
    if !assumption_a1(supply, tol)? {
        return Err(Error::Assumption(format!(
            "supply matrix must have exactly {} negative and {} positive eigenvalues",
            data.p(),
            data.m()
        )));
    }
    Ok(())
}

/// Runs the decision procedure matching the record's noise model.
pub fn decide(
    data: &DataRecord,
    spec: &NoiseSpec,
    supply: &SupplyRate,
    tol: &Tolerances,
) -> Result<InformativityOutcome> {
    decide_with(
        data,
        spec,
        supply,
        tol,
        DEFAULT_PIPELINE_SEED,
        &SolveBudget::default(),
    )
}

/// [`decide`] with explicit sampling seed and solver budget.
pub fn decide_with(
    data: &DataRecord,
    spec: &NoiseSpec,
    supply: &SupplyRate,
    tol: &Tolerances,
    seed: u64,
    budget: &SolveBudget,
) -> Result<InformativityOutcome> {
    match spec {
        NoiseSpec::N0 => informativity_noiseless(data, supply, tol, seed, budget),
        NoiseSpec::N1 { .. } => informativity_noisy_n1(data, spec, supply, tol, seed, budget),
        NoiseSpec::N2 { .. } => informativity_noisy_n2(data, spec, supply, tol, seed, budget),
    }
}
