//! Reproducible generation of experiment data: trajectory simulation,
//! random stable systems, noise realisations scaled into a quadratic noise
//! model, and a serialisable scenario description.
//!
//! Everything is driven by explicit seeds so that generated problems are
//! bit-for-bit reproducible across runs.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symmat::{SymMat, Tolerances};
use crate::sysmodel::{noise_membership_margin, DataRecord, NoiseSpec, SupplyRate, Sys};

/// Rolls the system forward from `x0` under the given inputs, producing an
/// exact data record (`X` has `T + 1` columns, `Y` has `T`).
pub fn simulate(sys: &Sys, inputs: &DMatrix<f64>, x0: &DVector<f64>) -> Result<DataRecord> {
    simulate_with_noise(sys, inputs, x0, None)
}

/// Like [`simulate`], but each step is perturbed by a column of `v`:
///
/// ```text
/// x(k+1) = A x(k) + B u(k) + w(k),    y(k) = C x(k) + D u(k) + z(k),
/// ```
///
/// with `v(:, k) = [w(k); z(k)]` of height `n + p`.  The recorded state
/// sequence is the perturbed one, so the residual of the true system
/// against the produced record equals `v` exactly.
pub fn simulate_with_noise(
    sys: &Sys,
    inputs: &DMatrix<f64>,
    x0: &DVector<f64>,
    v: Option<&DMatrix<f64>>,
) -> Result<DataRecord> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let t = inputs.ncols();
    if inputs.nrows() != m || t == 0 {
        return Err(Error::spec("inputs must be m x T with T >= 1"));
    }
    if x0.len() != n {
        return Err(Error::spec("initial state must have length n"));
    }
    if let Some(v) = v {
        if v.nrows() != n + p || v.ncols() != t {
            return Err(Error::spec("noise realisation must be (n + p) x T"));
        }
    }
    let mut x = DMatrix::zeros(n, t + 1);
    let mut y = DMatrix::zeros(p, t);
    x.column_mut(0).copy_from(x0);
    for k in 0..t {
        let xk = x.column(k).into_owned();
        let uk = inputs.column(k).into_owned();
        let mut xn = sys.a() * &xk + sys.b() * &uk;
        let mut yk = sys.c() * &xk + sys.d() * &uk;
        if let Some(v) = v {
            xn += v.view((0, k), (n, 1));
            yk += v.view((n, k), (p, 1));
        }
        x.column_mut(k + 1).copy_from(&xn);
        y.column_mut(k).copy_from(&yk);
    }
    DataRecord::new(inputs.clone(), x, y)
}

/// Draws a random system with all matrices Gaussian and `A` rescaled so its
/// spectral radius equals `spectral_radius` (nilpotent draws are kept
/// as-is).
pub fn random_stable_sys(
    n: usize,
    m: usize,
    p: usize,
    spectral_radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Sys> {
    if !(0.0..1.0).contains(&spectral_radius) {
        return Err(Error::spec("target spectral radius must lie in [0, 1)"));
    }
    let randn = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    };
    let a0 = randn(rng, n, n);
    let rho0 = a0
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    let a = if rho0 > 1e-12 {
        a0.scale(spectral_radius / rho0)
    } else {
        a0
    };
    Sys::new(a, randn(rng, n, m), randn(rng, p, n), randn(rng, p, m))
}

/// Scales a raw noise realisation `v0` so that its membership margin in the
/// model equals `(1 - margin_fraction)` times the margin of zero noise.
///
/// `margin_fraction = 0` returns zero noise; values approaching `1` push
/// the realisation to the boundary of the model.  Requires the zero
/// realisation to be strictly admissible (leading parameter block positive
/// definite), which holds for the norm-style bounds produced by
/// [`NoiseSpec::energy_bound`].
pub fn scale_noise_into_model(
    v0: &DMatrix<f64>,
    spec: &NoiseSpec,
    margin_fraction: f64,
    tol: &Tolerances,
) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&margin_fraction) {
        return Err(Error::spec("margin fraction must lie in [0, 1)"));
    }
    spec.check_dims(v0.nrows(), v0.ncols())?;
    let zero = DMatrix::zeros(v0.nrows(), v0.ncols());
    let zero_margin = noise_membership_margin(&zero, spec)?;
    if zero_margin <= tol.eps_strict {
        return Err(Error::Assumption(format!(
            "zero noise is not strictly admissible (margin {zero_margin:.3e}); \
             cannot scale into the model"
        )));
    }
    if margin_fraction == 0.0 || v0.amax() == 0.0 {
        return Ok(zero);
    }
    let target = (1.0 - margin_fraction) * zero_margin;
    let margin_at = |s: f64| noise_membership_margin(&v0.scale(s), spec);
    let mut s_hi = 1.0_f64;
    let mut found = false;
    for _ in 0..80 {
        if margin_at(s_hi)? < target {
            found = true;
            break;
        }
        s_hi *= 2.0;
    }
    if !found {
        return Err(Error::numerical(
            "noise scaling never crossed the target margin; the realisation \
             may lie in a degenerate direction of the model",
        ));
    }
    let mut s_lo = 0.0_f64;
    for _ in 0..80 {
        let mid = 0.5 * (s_lo + s_hi);
        if margin_at(mid)? >= target {
            s_lo = mid;
        } else {
            s_hi = mid;
        }
    }
    Ok(v0.scale(0.5 * (s_lo + s_hi)))
}

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

fn default_true() -> bool {
    true
}

/// Signal dimensions of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

/// Where the true system comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSource {
    /// Matrices given explicitly, row-major.
    Explicit {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
    },
    /// Random Gaussian system with `A` rescaled to the given spectral
    /// radius.
    RandomStable { spectral_radius: f64 },
}

/// How the input sequence and initial state are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSource {
    Zero,
    Gaussian { scale: f64 },
}

/// Noise applied to the generated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseConfig {
    /// Exact data; the record carries the `N0` model.
    None,
    /// Norm-bound model `V Vᵀ ⪯ bound_scale² · T · I` with a Gaussian
    /// realisation scaled so it consumes `margin_fraction` of the
    /// zero-noise margin.
    EnergyScaled {
        bound_scale: f64,
        margin_fraction: f64,
    },
}

/// Supply rate attached to the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupplyConfig {
    PositiveReal,
    BoundedReal { gamma: f64 },
}

/// Complete, serialisable description of a generated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub dims: Dims,
    pub horizon: usize,
    pub system: SystemSource,
    pub input: SignalSource,
    pub initial_state: SignalSource,
    pub noise: NoiseConfig,
    pub supply: SupplyConfig,
    /// Redraw signals (up to a fixed retry budget) until the regressor
    /// matrix `[X₋; U₋]` has full row rank with a comfortable margin.
    #[serde(default = "default_true")]
    pub require_full_rank: bool,
}

/// A realised scenario: the true system, the (possibly noisy) record, the
/// noise model the record is published with, the supply rate under test and
/// the actual noise realisation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub sys: Sys,
    pub record: DataRecord,
    pub noise: NoiseSpec,
    pub supply: SupplyRate,
    pub noise_realisation: Option<DMatrix<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::spec(format!("{what}: no rows")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::spec(format!("{what}: ragged or empty rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

/// Serialises a matrix as row-major nested vectors (the inverse of the
/// explicit system source encoding).
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl ScenarioConfig {
    /// Materialises the scenario deterministically from its seed.
    pub fn build(&self, tol: &Tolerances) -> Result<Scenario> {
        let Dims { n, m, p } = self.dims;
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::spec("scenario dimensions must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::spec("scenario horizon must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let sys = match &self.system {
            SystemSource::Explicit { a, b, c, d } => {
                let sys = Sys::new(
                    matrix_from_rows(a, "A")?,
                    matrix_from_rows(b, "B")?,
                    matrix_from_rows(c, "C")?,
                    matrix_from_rows(d, "D")?,
                )?;
                if sys.n() != n || sys.m() != m || sys.p() != p {
                    return Err(Error::spec(
                        "explicit system dimensions disagree with the dims section",
                    ));
                }
                sys
            }
            SystemSource::RandomStable { spectral_radius } => {
                random_stable_sys(n, m, p, *spectral_radius, &mut rng)?
            }
        };
        let supply = match &self.supply {
            SupplyConfig::PositiveReal => {
                if m != p {
                    return Err(Error::spec(
                        "the passivity supply rate needs square channels (m = p)",
                    ));
                }
                SupplyRate::positive_real(m)?
            }
            SupplyConfig::BoundedReal { gamma } => SupplyRate::bounded_real(*gamma, m, p)?,
        };

        let draw = |rng: &mut ChaCha8Rng, source: &SignalSource, r: usize, c: usize| match source {
            SignalSource::Zero => DMatrix::zeros(r, c),
            SignalSource::Gaussian { scale } => {
                DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng)).scale(*scale)
            }
        };

        let t = self.horizon;
        let mut last_err: Option<Error> = None;
        for _attempt in 0..10 {
            let inputs = draw(&mut rng, &self.input, m, t);
            let x0 = draw(&mut rng, &self.initial_state, n, 1).column(0).into_owned();
            let (noise_spec, realisation) = match &self.noise {
                NoiseConfig::None => (NoiseSpec::N0, None),
                NoiseConfig::EnergyScaled {
                    bound_scale,
                    margin_fraction,
                } => {
                    if !(bound_scale.is_finite() && *bound_scale > 0.0) {
                        return Err(Error::spec("noise bound scale must be positive"));
                    }
                    let bound = SymMat::from_diagonal(&vec![
                        bound_scale * bound_scale * t as f64;
                        n + p
                    ]);
                    let spec = NoiseSpec::energy_bound(&bound, t)?;
                    let v0 = DMatrix::from_fn(n + p, t, |_, _| StandardNormal.sample(&mut rng))
                        .scale(*bound_scale);
                    let v = scale_noise_into_model(&v0, &spec, *margin_fraction, tol)?;
                    (spec, Some(v))
                }
            };
            let record = simulate_with_noise(&sys, &inputs, &x0, realisation.as_ref())?;
            if self.require_full_rank {
                let z_minus = record.z_minus();
                let sv = z_minus.svd(false, false).singular_values;
                let smax = sv.iter().fold(0.0_f64, |r, s| r.max(*s));
                let smin = sv.iter().fold(f64::INFINITY, |r, s| r.min(*s));
                if sv.len() < n + m || smin <= 1e-6 * smax.max(1.0) {
                    last_err = Some(Error::numerical(format!(
                        "regressor matrix is not comfortably full-rank \
                         (σ_min = {smin:.3e}, σ_max = {smax:.3e})"
                    )));
                    continue;
                }
            }
            return Ok(Scenario {
                sys,
                record,
                noise: noise_spec,
                supply,
                noise_realisation: realisation,
            });
        }
        Err(last_err.unwrap_or_else(|| {
            Error::numerical("scenario generation exhausted its retry budget")
        }))
    }
}
