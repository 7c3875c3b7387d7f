//! Independent ground-truth checks used to validate the certification
//! pipeline.
//!
//! Everything in this module deliberately avoids the LMI solver: frequency
//! sweeps evaluate the transfer function directly, trajectory checks unroll
//! the dynamics step by step, and the consistency-set sampler works from the
//! raw quadratic membership form.  Agreement between these oracles and the
//! solver-based decisions is what the integration and acceptance suites
//! assert.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::symmat::{SymMat, Tolerances};
use crate::sysmodel::{
    consistency_form, convert_noise, noise_membership_margin, DataRecord, NoiseSpec, SupplyRate,
    Sys,
};

/// Default number of frequency-grid points for the sweeps.
pub const DEFAULT_GRID_POINTS: usize = 10_000;
/// Golden-section refinement iterations after the grid pass.
const REFINE_ITERS: usize = 90;
/// Spectral-radius margin below 1 required for a frequency sweep to be
/// meaningful.
const STABILITY_MARGIN: f64 = 1.0e-9;

/// Transfer function value `H(e^{iθ}) = C (e^{iθ} I - A)⁻¹ B + D`.
pub fn transfer_at(sys: &Sys, theta: f64) -> Result<DMatrix<Complex<f64>>> {
    let n = sys.n();
    let z = Complex::new(theta.cos(), theta.sin());
    let mut resolvent = DMatrix::from_diagonal_element(n, n, z);
    resolvent -= sys.a().map(|v| Complex::new(v, 0.0));
    let inv = resolvent.try_inverse().ok_or_else(|| {
        Error::numerical(format!("e^{{iθ}} I - A is singular at θ = {theta}"))
    })?;
    let b = sys.b().map(|v| Complex::new(v, 0.0));
    let c = sys.c().map(|v| Complex::new(v, 0.0));
    let d = sys.d().map(|v| Complex::new(v, 0.0));
    Ok(c * inv * b + d)
}

fn sigma_max(h: &DMatrix<Complex<f64>>) -> f64 {
    h.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |r, s| r.max(*s))
}

fn hermitian_part_lambda_min(h: &DMatrix<Complex<f64>>) -> Result<f64> {
    let herm = (h + h.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::try_new(herm, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numerical("Hermitian eigendecomposition did not converge"))?;
    Ok(eig.eigenvalues.iter().fold(f64::INFINITY, |r, v| r.min(*v)))
}

fn require_stable(sys: &Sys, what: &str) -> Result<()> {
    let rho = sys.spectral_radius();
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::NotApplicable(format!(
            "{what} needs a Schur-stable system; spectral radius is {rho:.6}"
        )));
    }
    Ok(())
}

/// Golden-section search for the extremum of `f` on `[lo, hi]`.
fn golden_refine(
    mut lo: f64,
    mut hi: f64,
    maximize: bool,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..REFINE_ITERS {
        let keep_left = if maximize { f1 > f2 } else { f1 < f2 };
        if keep_left {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok((mid, f(mid)?))
}

/// Peak gain found by a frequency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    /// Largest singular value of the frequency response.
    pub gamma: f64,
    /// Frequency (in radians, within `[0, π]`) at which the peak occurs.
    pub theta: f64,
    /// Number of grid points used before local refinement.
    pub grid_points: usize,
}

/// Peak gain `max_θ σ_max(H(e^{iθ}))` of a Schur-stable system, computed by
/// a dense grid over `[0, π]` followed by golden-section refinement around
/// the best grid point.
pub fn peak_gain(sys: &Sys, grid_points: usize) -> Result<GainReport> {
    require_stable(sys, "the peak-gain sweep")?;
    if grid_points < 2 {
        return Err(Error::spec("peak gain needs at least two grid points"));
    }
    let step = std::f64::consts::PI / (grid_points as f64 - 1.0);
    let mut best_theta = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..grid_points {
        let theta = i as f64 * step;
        let value = sigma_max(&transfer_at(sys, theta)?);
        if value > best {
            best = value;
            best_theta = theta;
        }
    }
    let lo = (best_theta - step).max(0.0);
    let hi = (best_theta + step).min(std::f64::consts::PI);
    let (theta, value) = golden_refine(lo, hi, true, |t| Ok(sigma_max(&transfer_at(sys, t)?)))?;
    let (gamma, theta) = if value >= best {
        (value, theta)
    } else {
        (best, best_theta)
    };
    Ok(GainReport {
        gamma,
        theta,
        grid_points,
    })
}

/// Frequency-domain passivity verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct PassivityReport {
    /// `min_θ λ_min((H(e^{iθ}) + H(e^{iθ})ᴴ) / 2)`.
    pub margin: f64,
    /// Frequency at which the minimum occurs.
    pub theta: f64,
    /// Whether the margin clears `-eps_psd`.
    pub is_positive_real: bool,
    pub grid_points: usize,
}

/// Positive-realness of a square Schur-stable system by sweeping the
/// smallest eigenvalue of the Hermitian part of the frequency response over
/// the unit circle.
pub fn positive_real_sweep(
    sys: &Sys,
    grid_points: usize,
    tol: &Tolerances,
) -> Result<PassivityReport> {
    if sys.m() != sys.p() {
        return Err(Error::NotApplicable(
            "positive realness is defined for square systems only".into(),
        ));
    }
    require_stable(sys, "the positive-real sweep")?;
    if grid_points < 2 {
        return Err(Error::spec("the sweep needs at least two grid points"));
    }
    let step = std::f64::consts::PI / (grid_points as f64 - 1.0);
    let mut worst_theta = 0.0;
    let mut worst = f64::INFINITY;
    for i in 0..grid_points {
        let theta = i as f64 * step;
        let value = hermitian_part_lambda_min(&transfer_at(sys, theta)?)?;
        if value < worst {
            worst = value;
            worst_theta = theta;
        }
    }
    let lo = (worst_theta - step).max(0.0);
    let hi = (worst_theta + step).min(std::f64::consts::PI);
    let (theta, value) = golden_refine(lo, hi, false, |t| {
        hermitian_part_lambda_min(&transfer_at(sys, t)?)
    })?;
    let (margin, theta) = if value <= worst {
        (value, theta)
    } else {
        (worst, worst_theta)
    };
    Ok(PassivityReport {
        margin,
        theta,
        is_positive_real: margin >= -tol.eps_psd,
        grid_points,
    })
}

/// Smallest one-step dissipation margin
/// `V(x_k) + s(u_k, y_k) - V(x_{k+1})` along a trajectory driven by the
/// given inputs from the given initial state.  Nonnegative margins (up to
/// numerical slack) are implied by the dissipation inequality.
pub fn trajectory_dissipation_margin(
    sys: &Sys,
    supply: &SupplyRate,
    storage: &SymMat,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
) -> Result<f64> {
    if supply.m() != sys.m() || supply.p() != sys.p() {
        return Err(Error::spec("supply rate dimensions do not match the system"));
    }
    if storage.dim() != sys.n() {
        return Err(Error::spec("storage matrix must be n x n"));
    }
    if x0.len() != sys.n() || inputs.nrows() != sys.m() || inputs.ncols() == 0 {
        return Err(Error::spec("trajectory inputs have wrong dimensions"));
    }
    let mut x = x0.clone();
    let mut worst = f64::INFINITY;
    for k in 0..inputs.ncols() {
        let u = inputs.column(k).into_owned();
        let y = sys.c() * &x + sys.d() * &u;
        let x_next = sys.a() * &x + sys.b() * &u;
        let v_now = (x.transpose() * storage.entries() * &x)[(0, 0)];
        let v_next = (x_next.transpose() * storage.entries() * &x_next)[(0, 0)];
        let margin = v_now + supply.evaluate(&u, &y)? - v_next;
        worst = worst.min(margin);
        x = x_next;
    }
    Ok(worst)
}

/// Outcome of a consistency-set sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingReport {
    pub requested: usize,
    pub accepted: usize,
    pub attempts: usize,
    /// Whether the analytic centre failed and the least-squares fit was used
    /// as the sampling centre instead.
    pub used_fallback_center: bool,
    /// Dimension of the affine directions along which membership is
    /// invariant (left-kernel of the regressor matrix).
    pub free_directions: usize,
    /// `accepted < requested` after exhausting the attempt budget.
    pub starved: bool,
}

/// Draws systems from the consistency set of a data record under a noise
/// model.
///
/// For exact data the set is the affine family `K_ls + Γ Wᵀ` with `W`
/// spanning the left-kernel of the regressor matrix.  For quadratic models
/// the sampler walks rays from the analytic centre of the membership form
/// and bisects each ray onto the boundary; `boundary_bias ∈ [0, 1]` is the
/// fraction of samples placed at the boundary intersection rather than
/// uniformly inside.  All returned systems are verified members.
pub fn sample_consistent_systems(
    data: &DataRecord,
    spec: &NoiseSpec,
    count: usize,
    seed: u64,
    boundary_bias: f64,
    tol: &Tolerances,
) -> Result<(Vec<Sys>, SamplingReport)> {
    if count == 0 {
        return Err(Error::spec("sample count must be >= 1"));
    }
    if !(0.0..=1.0).contains(&boundary_bias) {
        return Err(Error::spec("boundary bias must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        NoiseSpec::N0 => sample_exact(data, count, &mut rng, tol),
        NoiseSpec::N1 { .. } => sample_quadratic(data, spec, count, boundary_bias, &mut rng, tol),
        NoiseSpec::N2 { .. } => {
            let converted = convert_noise(spec, tol)?;
            sample_quadratic(data, &converted, count, boundary_bias, &mut rng, tol)
        }
    }
}

fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Orthonormal basis of `{v : vᵀ Z₋ = 0}` (columns), via SVD of `Z₋ᵀ`.
fn left_kernel_basis(z_minus: &DMatrix<f64>, tol: &Tolerances) -> DMatrix<f64> {
    let rows = z_minus.nrows();
    let svd = z_minus.transpose().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |r, s| r.max(*s));
    let threshold = tol.rtol_rank * sigma_max.max(1.0);
    let mut basis_rows = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= threshold {
            basis_rows.push(v_t.row(i).transpose());
        }
    }
    // Rows of v_t beyond the stored singular values (when T < n+m) are also
    // kernel directions.
    for i in svd.singular_values.len()..v_t.nrows() {
        basis_rows.push(v_t.row(i).transpose());
    }
    let mut basis = DMatrix::zeros(rows, basis_rows.len());
    for (j, col) in basis_rows.iter().enumerate() {
        basis.column_mut(j).copy_from(col);
    }
    basis
}

fn sample_exact(
    data: &DataRecord,
    count: usize,
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
) -> Result<(Vec<Sys>, SamplingReport)> {
    let (n, m, p) = (data.n(), data.m(), data.p());
    let z_minus = data.z_minus();
    let z_plus = data.z_plus();
    let k_ls = &z_plus
        * z_minus
            .clone()
            .svd(true, true)
            .pseudo_inverse(tol.rtol_rank)
            .map_err(Error::numerical)?;
    let residual = &z_plus - &k_ls * &z_minus;
    let scale = z_plus.amax().max(1.0);
    if residual.amax() > 1e3 * tol.atol_sym * scale {
        return Err(Error::DataInconsistent(format!(
            "no linear system reproduces the record exactly; best residual has max entry {:.3e}",
            residual.amax()
        )));
    }
    let kernel = left_kernel_basis(&z_minus, tol);
    let free = kernel.ncols();
    let mut systems = Vec::with_capacity(count);
    for i in 0..count {
        let k = if free == 0 || i == 0 {
            k_ls.clone()
        } else {
            let gamma = randn_matrix(rng, n + p, free).scale(f64::exp(rng.gen_range(-2.0..1.5)));
            &k_ls + gamma * kernel.transpose()
        };
        systems.push(Sys::from_stacked(&k, n, m, p)?);
    }
    Ok((
        systems,
        SamplingReport {
            requested: count,
            accepted: count,
            attempts: count,
            used_fallback_center: false,
            free_directions: free,
            starved: false,
        },
    ))
}

fn sample_quadratic(
    data: &DataRecord,
    spec: &NoiseSpec,
    count: usize,
    boundary_bias: f64,
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
) -> Result<(Vec<Sys>, SamplingReport)> {
    let (n, m, p) = (data.n(), data.m(), data.p());
    let (np, nm) = (n + p, n + m);
    let form = consistency_form(data, spec, tol)?;
    let n12 = form.offdiag_block(np)?;
    let n22 = form.trailing_block(np)?;
    let form_scale = form.max_abs().max(1.0);
    let accept_floor = -tol.eps_psd * form_scale;

    // Split coefficient-transpose space into boundedly constrained
    // directions (negative eigenvalues of the trailing block) and free
    // directions (kernel; the form is invariant along them).
    let (eigenvalues, eigenvectors) = n22.eigen_pairs()?;
    let thr = tol.rtol_eig * n22.max_abs().max(1.0);
    let mut bounded_cols = Vec::new();
    let mut free_cols = Vec::new();
    let mut bounded_vals = Vec::new();
    for (i, lambda) in eigenvalues.iter().enumerate() {
        let vec = eigenvectors.column(i).into_owned();
        if *lambda > thr {
            return Err(Error::Assumption(format!(
                "consistency set is unbounded: trailing form block has eigenvalue {lambda:.3e} > 0"
            )));
        }
        if *lambda < -thr {
            bounded_cols.push(vec);
            bounded_vals.push(*lambda);
        } else {
            free_cols.push(vec);
        }
    }
    let nb = bounded_cols.len();
    let nf = free_cols.len();
    let w_bounded = {
        let mut w = DMatrix::zeros(nm, nb);
        for (j, c) in bounded_cols.iter().enumerate() {
            w.column_mut(j).copy_from(c);
        }
        w
    };
    let w_free = {
        let mut w = DMatrix::zeros(nm, nf);
        for (j, c) in free_cols.iter().enumerate() {
            w.column_mut(j).copy_from(c);
        }
        w
    };

    // Analytic centre: maximiser of the form over the bounded subspace,
    // Kᵀ = -N₂₂⁺ N₁₂ᵀ restricted to that subspace.
    let margin_of_ktrans = |ktrans: &DMatrix<f64>| -> Result<f64> {
        let mut stack = DMatrix::zeros(np + nm, np);
        stack
            .view_mut((0, 0), (np, np))
            .copy_from(&DMatrix::identity(np, np));
        stack.view_mut((np, 0), (nm, np)).copy_from(ktrans);
        SymMat::symmetrize(stack.transpose() * form.entries() * stack).lambda_min()
    };
    let center = if nb > 0 {
        let mut inv_core = DMatrix::zeros(nb, nb);
        for (j, lambda) in bounded_vals.iter().enumerate() {
            inv_core[(j, j)] = 1.0 / lambda;
        }
        -(&w_bounded * inv_core * w_bounded.transpose()) * n12.transpose()
    } else {
        DMatrix::zeros(nm, np)
    };
    let mut used_fallback = false;
    let center = if margin_of_ktrans(&center)? >= accept_floor {
        center
    } else {
        // Fall back to the least-squares fit of the record.
        used_fallback = true;
        let z_minus = data.z_minus();
        let k_ls = &data.z_plus()
            * z_minus
                .svd(true, true)
                .pseudo_inverse(tol.rtol_rank)
                .map_err(Error::numerical)?;
        let k_ls_t = k_ls.transpose();
        if margin_of_ktrans(&k_ls_t)? < accept_floor {
            return Err(Error::SamplingStarved {
                accepted: 0,
                attempted: 2,
                context: "neither the analytic centre nor the least-squares fit is a member; \
                          the consistency set may be empty or degenerate"
                    .into(),
            });
        }
        k_ls_t
    };
    let center_margin = margin_of_ktrans(&center)?;

    let mut systems = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let budget = count.saturating_mul(50).max(200);
    while systems.len() < count && attempts < budget {
        attempts += 1;
        if nb == 0 {
            // Only free directions: every centre + kernel move is a member.
            let k_t = if nf == 0 {
                center.clone()
            } else {
                let gamma = randn_matrix(rng, nf, np);
                &center + &w_free * gamma
            };
            if margin_of_ktrans(&k_t)? >= accept_floor {
                systems.push(Sys::from_stacked(&k_t.transpose(), n, m, p)?);
            }
            continue;
        }
        // Random ray in the bounded subspace.
        let raw = randn_matrix(rng, nb, np);
        let dir = &w_bounded * raw;
        let norm = dir.norm();
        if norm < 1e-12 {
            continue;
        }
        let dir = dir.scale(1.0 / norm);
        // Expand until outside, then bisect the crossing.
        let mut t_in = 0.0_f64;
        let mut t_out = 1.0_f64;
        let mut found_exit = false;
        for _ in 0..60 {
            if margin_of_ktrans(&(&center + dir.scale(t_out)))? < 0.0 {
                found_exit = true;
                break;
            }
            t_in = t_out;
            t_out *= 2.0;
        }
        if !found_exit {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (t_in + t_out);
            if margin_of_ktrans(&(&center + dir.scale(mid)))? >= 0.0 {
                t_in = mid;
            } else {
                t_out = mid;
            }
        }
        // Radial placement: boundary or uniform interior.
        let t = if rng.gen_range(0.0..1.0) < boundary_bias {
            t_in
        } else {
            t_in * rng.gen_range(0.0..1.0_f64)
        };
        let mut k_t = &center + dir.scale(t);
        if nf > 0 {
            // Membership is exactly invariant along kernel directions; move
            // there too so the affine part of the set is covered.
            let gamma = randn_matrix(rng, nf, np).scale(0.5);
            k_t += &w_free * gamma;
        }
        if margin_of_ktrans(&k_t)? >= accept_floor {
            systems.push(Sys::from_stacked(&k_t.transpose(), n, m, p)?);
        }
    }
    let accepted = systems.len();
    let _ = center_margin;
    Ok((
        systems,
        SamplingReport {
            requested: count,
            accepted,
            attempts,
            used_fallback_center: used_fallback,
            free_directions: nf,
            starved: accepted < count,
        },
    ))
}

/// Worst membership margin over a batch of systems (useful when asserting
/// that sampled systems really lie in the consistency set).
pub fn worst_membership_margin(
    systems: &[Sys],
    data: &DataRecord,
    spec: &NoiseSpec,
) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for sys in systems {
        worst = worst.min(noise_membership_margin(&data.residual(sys)?, spec)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

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
    fn peak_gain_of_scalar_lag() {
        // H(z) = 1/(z - 1/2): |H(e^{iθ})|² = 1/(5/4 - cos θ), maximal at
        // θ = 0 with value 2.
        let sys = scalar_sys(0.5, 1.0, 1.0, 0.0);
        let rep = peak_gain(&sys, 2_000).unwrap();
        assert_relative_eq!(rep.gamma, 2.0, epsilon = 1e-9);
        assert!(rep.theta.abs() < 1e-4);
    }

    #[test]
    fn peak_gain_of_feedthrough() {
        let sys = scalar_sys(0.0, 0.0, 0.0, 3.0);
        let rep = peak_gain(&sys, 100).unwrap();
        assert_relative_eq!(rep.gamma, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn peak_gain_of_resonant_pair_matches_closed_form() {
        // Companion realisation of H(z) = 1/((z - p)(z - p̄)) with
        // p = r e^{iω}.  The matrix-free modulus 1/(|e^{iθ}-p||e^{iθ}-p̄|)
        // scanned on a fine grid is an independent reference.
        let (r, omega) = (0.9_f64, 1.1_f64);
        let sys = Sys::new(
            mat(2, 2, &[2.0 * r * omega.cos(), -r * r, 1.0, 0.0]),
            mat(2, 1, &[1.0, 0.0]),
            mat(1, 2, &[0.0, 1.0]),
            mat(1, 1, &[0.0]),
        )
        .unwrap();
        let rep = peak_gain(&sys, DEFAULT_GRID_POINTS).unwrap();
        let pole = Complex::new(r * omega.cos(), r * omega.sin());
        let modulus = |theta: f64| {
            let z = Complex::new(theta.cos(), theta.sin());
            1.0 / ((z - pole).norm() * (z - pole.conj()).norm())
        };
        let mut reference = 0.0_f64;
        for i in 0..200_000 {
            let theta = std::f64::consts::PI * i as f64 / 199_999.0;
            reference = reference.max(modulus(theta));
        }
        assert_relative_eq!(rep.gamma, reference, max_relative = 1e-6);
        assert_relative_eq!(rep.theta, omega, epsilon = 1e-2);
    }

    #[test]
    fn peak_gain_rejects_unstable_systems() {
        let sys = scalar_sys(1.5, 1.0, 1.0, 0.0);
        match peak_gain(&sys, 100) {
            Err(Error::NotApplicable(_)) => {}
            other => panic!("expected NotApplicable, got {other:?}"),
        }
    }

    #[test]
    fn positive_real_sweep_scalar_examples() {
        let t = tol();
        // H(z) = 1 + 1/(z - 1/2): Re H(e^{iθ}) = 1 + (cos θ - 1/2)/(5/4 - cos θ),
        // minimal at θ = π with value 1/3.
        let passive = scalar_sys(0.5, 1.0, 1.0, 1.0);
        let rep = positive_real_sweep(&passive, 2_000, &t).unwrap();
        assert!(rep.is_positive_real);
        assert_relative_eq!(rep.margin, 1.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(rep.theta, std::f64::consts::PI, epsilon = 1e-4);
        // Dropping the feedthrough flips the sign: minimum -2/3.
        let strictly_proper = scalar_sys(0.5, 1.0, 1.0, 0.0);
        let rep = positive_real_sweep(&strictly_proper, 2_000, &t).unwrap();
        assert!(!rep.is_positive_real);
        assert_relative_eq!(rep.margin, -2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn positive_real_sweep_needs_square_channels() {
        let sys = Sys::new(
            mat(1, 1, &[0.5]),
            mat(1, 1, &[1.0]),
            mat(2, 1, &[1.0, 0.5]),
            mat(2, 1, &[1.0, 0.0]),
        )
        .unwrap();
        match positive_real_sweep(&sys, 100, &tol()) {
            Err(Error::NotApplicable(_)) => {}
            other => panic!("expected NotApplicable, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_margin_respects_dissipation_inequality() {
        // Passive system with valid storage P = 1: every one-step margin is
        // the value of a positive semidefinite quadratic form.
        let sys = scalar_sys(0.5, 1.0, 1.0, 1.0);
        let supply = SupplyRate::positive_real(1).unwrap();
        let storage = SymMat::identity(1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x0 = DVector::from_fn(1, |_, _| rng.gen_range(-2.0..2.0));
            let inputs = DMatrix::from_fn(1, 30, |_, _| rng.gen_range(-2.0..2.0));
            let margin =
                trajectory_dissipation_margin(&sys, &supply, &storage, &x0, &inputs).unwrap();
            assert!(margin >= -1e-10, "margin {margin} must be nonnegative");
        }
    }

    #[test]
    fn trajectory_margin_detects_violations() {
        // Without feedthrough the first step from x = 0 under u = 1 stores
        // energy b² = 1 while the supply 2·u·y is zero: margin -1.
        let sys = scalar_sys(0.5, 1.0, 1.0, 0.0);
        let supply = SupplyRate::positive_real(1).unwrap();
        let storage = SymMat::identity(1);
        let x0 = DVector::zeros(1);
        let inputs = mat(1, 1, &[1.0]);
        let margin = trajectory_dissipation_margin(&sys, &supply, &storage, &x0, &inputs).unwrap();
        assert_relative_eq!(margin, -1.0, epsilon = 1e-14);
    }

    fn exact_record_from(sys: &Sys, u: DMatrix<f64>, x0: DVector<f64>) -> DataRecord {
        let t = u.ncols();
        let mut x = DMatrix::zeros(sys.n(), t + 1);
        let mut y = DMatrix::zeros(sys.p(), t);
        x.column_mut(0).copy_from(&x0);
        for k in 0..t {
            let xk = x.column(k).into_owned();
            let uk = u.column(k).into_owned();
            y.column_mut(k).copy_from(&(sys.c() * &xk + sys.d() * &uk));
            x.column_mut(k + 1)
                .copy_from(&(sys.a() * &xk + sys.b() * &uk));
        }
        DataRecord::new(u, x, y).unwrap()
    }

    #[test]
    fn exact_sampler_reproduces_unique_system() {
        // Full-rank data: the consistency set is a single point.
        let sys = scalar_sys(0.5, 1.0, 1.0, 1.0);
        let u = mat(1, 3, &[1.0, -1.0, 1.0]);
        let rec = exact_record_from(&sys, u, DVector::zeros(1));
        let (systems, rep) =
            sample_consistent_systems(&rec, &NoiseSpec::N0, 5, 11, 0.0, &tol()).unwrap();
        assert_eq!(rep.free_directions, 0);
        assert!(!rep.starved);
        for s in &systems {
            assert!((s.stacked() - sys.stacked()).amax() < 1e-10);
        }
    }

    #[test]
    fn exact_sampler_spans_affine_family_on_rank_deficient_data() {
        // Zero input: the input columns of K are unconstrained, so samples
        // must differ there while reproducing the record exactly.
        let sys = scalar_sys(0.5, 1.0, 1.0, 1.0);
        let u = mat(1, 4, &[0.0, 0.0, 0.0, 0.0]);
        let rec = exact_record_from(&sys, u, DVector::from_element(1, 1.0));
        let (systems, rep) =
            sample_consistent_systems(&rec, &NoiseSpec::N0, 6, 13, 0.0, &tol()).unwrap();
        assert_eq!(rep.free_directions, 1);
        let t = tol();
        for s in &systems {
            assert!(crate::sysmodel::sigma_membership(s, &rec, &NoiseSpec::N0, &t).unwrap());
        }
        let spread = systems
            .iter()
            .map(|s| s.b()[(0, 0)])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        assert!(spread.1 - spread.0 > 1e-6, "input columns must vary");
    }

    #[test]
    fn exact_sampler_flags_inconsistent_records() {
        // A record violating linearity: the regressor column (x, u) = (0, 1)
        // appears twice with different successors.
        let u = mat(1, 2, &[1.0, 1.0]);
        let x = mat(1, 3, &[0.0, 0.0, 1.0]);
        let y = mat(1, 2, &[0.0, 0.0]);
        let rec = DataRecord::new(u, x, y).unwrap();
        match sample_consistent_systems(&rec, &NoiseSpec::N0, 3, 5, 0.0, &tol()) {
            Err(Error::DataInconsistent(_)) => {}
            other => panic!("expected DataInconsistent, got {other:?}"),
        }
    }

    #[test]
    fn quadratic_sampler_yields_verified_members() {
        let sys = scalar_sys(0.5, 1.0, 1.0, 1.0);
        let u = mat(1, 6, &[1.0, -1.0, 0.5, 1.0, -0.5, 0.25]);
        let rec = exact_record_from(&sys, u, DVector::zeros(1));
        let spec = NoiseSpec::energy_bound(&SymMat::from_diagonal(&[0.5, 0.5]), 6).unwrap();
        let t = tol();
        let (systems, rep) = sample_consistent_systems(&rec, &spec, 40, 21, 0.5, &t).unwrap();
        assert_eq!(rep.accepted, 40);
        assert!(!rep.starved);
        let worst = worst_membership_margin(&systems, &rec, &spec).unwrap();
        assert!(worst >= -1e-8, "worst membership margin {worst}");
        // Boundary bias must produce at least one near-boundary sample and
        // genuine spread in the coefficients.
        let margins: Vec<f64> = systems
            .iter()
            .map(|s| crate::sysmodel::sigma_membership_margin(s, &rec, &spec).unwrap())
            .collect();
        let near_boundary = margins.iter().filter(|m| m.abs() < 1e-4).count();
        assert!(near_boundary >= 5, "expected boundary samples, got {near_boundary}");
        let a_spread = systems
            .iter()
            .map(|s| s.a()[(0, 0)])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        assert!(a_spread.1 - a_spread.0 > 1e-3);
    }

    #[test]
    fn quadratic_sampler_is_deterministic() {
        let sys = scalar_sys(0.3, 1.0, 0.7, 0.2);
        let u = mat(1, 5, &[1.0, 0.5, -1.0, 0.25, -0.5]);
        let rec = exact_record_from(&sys, u, DVector::zeros(1));
        let spec = NoiseSpec::energy_bound(&SymMat::from_diagonal(&[0.3, 0.3]), 5).unwrap();
        let t = tol();
        let (sys_a, _) = sample_consistent_systems(&rec, &spec, 10, 77, 0.3, &t).unwrap();
        let (sys_b, _) = sample_consistent_systems(&rec, &spec, 10, 77, 0.3, &t).unwrap();
        assert_eq!(sys_a.len(), sys_b.len());
        for (a, b) in sys_a.iter().zip(sys_b.iter()) {
            assert_eq!(a.stacked(), b.stacked());
        }
    }

    #[test]
    fn quadratic_sampler_covers_free_directions_of_rank_deficient_data() {
        // Zero input under a quadratic noise model: the input columns stay
        // free, membership must still hold exactly.
        let sys = scalar_sys(0.5, 1.0, 1.0, 1.0);
        let u = mat(1, 5, &[0.0; 5]);
        let rec = exact_record_from(&sys, u, DVector::from_element(1, 1.0));
        let spec = NoiseSpec::energy_bound(&SymMat::from_diagonal(&[0.4, 0.4]), 5).unwrap();
        let t = tol();
        let (systems, rep) = sample_consistent_systems(&rec, &spec, 15, 31, 0.2, &t).unwrap();
        assert_eq!(rep.free_directions, 1);
        let worst = worst_membership_margin(&systems, &rec, &spec).unwrap();
        assert!(worst >= -1e-8);
        let b_spread = systems
            .iter()
            .map(|s| s.b()[(0, 0)])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        assert!(b_spread.1 - b_spread.0 > 1e-3, "free directions must vary");
    }
}
