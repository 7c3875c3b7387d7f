//! Cross-checks of the inverse-based dualization machinery: the exact
//! inertia identity relating a quadratic solution set to its transposed
//! counterpart, and the equivalence between the primal and dual dissipation
//! inequalities.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dissipacert_core::informativity::storage_structure;
use dissipacert_core::sysmodel::{
    dissipation_lmi_matrix, dual_supply, dualize_quadratic_set, SupplyRate, Sys,
};
use dissipacert_core::{Inertia, SymMat, Tolerances};

fn random_sym(rng: &mut ChaCha8Rng, dim: usize) -> SymMat {
    SymMat::symmetrize(DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0)))
}

fn congruence_inertia(
    psi: &SymMat,
    r_mat: &DMatrix<f64>,
    tol: &Tolerances,
) -> Option<Inertia> {
    // [I; R]ᵀ Ψ [I; R] with R (r × q): stack is (q + r) × q.
    let q = r_mat.ncols();
    let r = r_mat.nrows();
    let mut stack = DMatrix::zeros(q + r, q);
    stack.view_mut((0, 0), (q, q)).copy_from(&DMatrix::identity(q, q));
    stack.view_mut((q, 0), (r, q)).copy_from(r_mat);
    let form = SymMat::symmetrize(stack.transpose() * psi.entries() * stack);
    let inertia = form.inertia(tol).ok()?;
    // Only decisive spectra make the integer identity testable.
    if inertia.zero > 0 {
        None
    } else {
        Some(inertia)
    }
}

/// For nonsingular `Ψ` ((q+r)-dimensional, split at `q`) with transposed
/// parameter `Ξ = dualize(Ψ)` and any `R (r × q)`:
///
/// `In([I; R]ᵀΨ[I; R]) + In(-Ψ⁻¹) = In([I; Rᵀ]ᵀΞ[I; Rᵀ]) + (q, 0, q)`.
#[test]
fn inertia_identity_over_random_sets() {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut decisive = 0usize;
    for _ in 0..500 {
        let q = rng.gen_range(1..5);
        let r = rng.gen_range(1..5);
        let psi = random_sym(&mut rng, q + r);
        if psi.inertia(&tol).map(|i| i.zero > 0).unwrap_or(true) {
            continue;
        }
        let xi = dualize_quadratic_set(&psi, q, &tol).unwrap();
        let neg_inv = SymMat::symmetrize(-psi.try_inverse(&tol).unwrap().into_inner());
        let r_mat = DMatrix::from_fn(r, q, |_, _| rng.gen_range(-2.0..2.0));

        let lhs_form = match congruence_inertia(&psi, &r_mat, &tol) {
            Some(i) => i,
            None => continue,
        };
        let rhs_form = match congruence_inertia(&xi, &r_mat.transpose(), &tol) {
            Some(i) => i,
            None => continue,
        };
        let lhs = lhs_form.add(&neg_inv.inertia(&tol).unwrap());
        let rhs = rhs_form.add(&Inertia::new(q, 0, q));
        assert_eq!(lhs, rhs, "inertia identity failed for q = {q}, r = {r}");
        decisive += 1;
    }
    assert!(decisive >= 400, "only {decisive} decisive draws out of 500");
}

fn random_supply(rng: &mut ChaCha8Rng, m: usize, p: usize, tol: &Tolerances) -> Option<SupplyRate> {
    let mut diag = vec![1.0; m];
    diag.extend(std::iter::repeat(-1.0).take(p));
    let core = SymMat::from_diagonal(&diag);
    let g = DMatrix::from_fn(m + p, m + p, |_, _| rng.gen_range(-1.0..1.0))
        + DMatrix::identity(m + p, m + p).scale(2.0);
    SupplyRate::new_checked(core.congruence(&g).ok()?, m, p, tol).ok()
}

fn random_sys(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> Sys {
    Sys::new(
        DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.7..0.7)),
        DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)),
        DMatrix::from_fn(p, n, |_, _| rng.gen_range(-1.0..1.0)),
        DMatrix::from_fn(p, m, |_, _| rng.gen_range(-1.0..1.0)),
    )
    .unwrap()
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMat {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    SymMat::symmetrize(&g * g.transpose() + DMatrix::identity(n, n).scale(0.3))
}

/// The congruence of the structured storage matrix by `[I; Kᵀ]` must equal
/// the dissipation LMI matrix of the transposed system under the dual
/// supply rate — as matrices, not just in definiteness.
#[test]
fn structured_matrix_congruence_equals_dual_dissipation_lmi() {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7_331);
    let mut checked = 0usize;
    for _ in 0..200 {
        let n = rng.gen_range(1..4);
        let m = rng.gen_range(1..3);
        let p = rng.gen_range(1..3);
        let supply = match random_supply(&mut rng, m, p, &tol) {
            Some(s) => s,
            None => continue,
        };
        let parts = match dual_supply(&supply, &tol) {
            Ok(pp) => pp,
            Err(_) => continue,
        };
        let sys = random_sys(&mut rng, n, m, p);
        let q = random_pd(&mut rng, n);
        let structure = storage_structure(&parts, &q, m, p).unwrap();

        // Congruence by [I_{n+p}; Kᵀ].
        let k = sys.stacked();
        let mut stack = DMatrix::zeros(2 * n + m + p, n + p);
        stack
            .view_mut((0, 0), (n + p, n + p))
            .copy_from(&DMatrix::identity(n + p, n + p));
        stack
            .view_mut((n + p, 0), (n + m, n + p))
            .copy_from(&k.transpose());
        let via_structure =
            SymMat::symmetrize(stack.transpose() * structure.entries() * stack);

        let dual_lmi = dissipation_lmi_matrix(&sys.dual(), &parts.dual_rate, &q).unwrap();
        let err = (via_structure.entries() - dual_lmi.entries()).norm()
            / dual_lmi.entries().norm().max(1.0);
        assert!(err < 1e-10, "congruence identity failed with error {err}");
        checked += 1;
    }
    assert!(checked >= 150, "only {checked} draws checked");
}

/// A system is dissipative with storage `P ≻ 0` iff its transpose is
/// dissipative under the dual supply rate with storage `P⁻¹` — verified in
/// both directions over random and engineered draws.
#[test]
fn primal_and_dual_dissipation_agree() {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut decisive = 0usize;
    let mut psd_cases = 0usize;
    for trial in 0..200 {
        let n = rng.gen_range(1..4);
        let m = rng.gen_range(1..3);
        let p = rng.gen_range(1..3);
        let (sys, supply, storage) = if trial % 4 == 0 {
            // Engineered dissipative draw: gain bound above the actual peak
            // gain, storage from the model oracle.
            let sys = {
                let raw = random_sys(&mut rng, n, m, p);
                let rho = raw.spectral_radius();
                let scale = if rho > 1e-9 { 0.7 / rho } else { 1.0 };
                Sys::new(
                    raw.a().scale(scale),
                    raw.b().clone(),
                    raw.c().clone(),
                    raw.d().clone(),
                )
                .unwrap()
            };
            let gamma = dissipacert_core::oracle::peak_gain(&sys, 400).unwrap().gamma * 1.3;
            let supply = SupplyRate::bounded_real(gamma, m, p).unwrap();
            match dissipacert_core::sysmodel::is_dissipative_model(&sys, &supply, &tol) {
                Ok(Some(pmat)) => {
                    // Shift slightly to keep P decisively positive definite.
                    let shifted = SymMat::symmetrize(
                        pmat.entries() + DMatrix::identity(n, n).scale(1e-3),
                    );
                    (sys, supply, shifted)
                }
                _ => continue,
            }
        } else {
            let supply = match random_supply(&mut rng, m, p, &tol) {
                Some(s) => s,
                None => continue,
            };
            (random_sys(&mut rng, n, m, p), supply, random_pd(&mut rng, n))
        };

        let primal = dissipation_lmi_matrix(&sys, &supply, &storage).unwrap();
        let parts = match dual_supply(&supply, &tol) {
            Ok(pp) => pp,
            Err(_) => continue,
        };
        let q = match storage.try_inverse(&tol) {
            Ok(q) => q,
            Err(_) => continue,
        };
        let dual = dissipation_lmi_matrix(&sys.dual(), &parts.dual_rate, &q).unwrap();

        let band_p = 1e-7 * primal.max_abs().max(1.0);
        let band_d = 1e-7 * dual.max_abs().max(1.0);
        let lp = primal.lambda_min().unwrap();
        let ld = dual.lambda_min().unwrap();
        if lp.abs() < band_p || ld.abs() < band_d {
            continue; // too close to the boundary to compare verdicts
        }
        assert_eq!(
            lp > 0.0,
            ld > 0.0,
            "primal/dual disagree: λ_min(primal) = {lp:.3e}, λ_min(dual) = {ld:.3e}"
        );
        decisive += 1;
        if lp > 0.0 {
            psd_cases += 1;
        }
    }
    assert!(decisive >= 120, "only {decisive} decisive draws");
    assert!(psd_cases >= 20, "only {psd_cases} dissipative draws exercised");
}
