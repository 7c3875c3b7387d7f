//! Exactly-symmetric matrices with tolerance-aware definiteness tests.
//!
//! All definiteness decisions in this crate reduce to eigenvalue
//! computations on [`SymMat`] values.  The wrapper guarantees that the stored
//! matrix is symmetric to the last bit (it stores `(A + Aᵀ)/2` and rejects
//! inputs whose asymmetry exceeds an absolute tolerance), so downstream
//! eigenvalue routines can use the symmetric algorithms unconditionally and
//! different code paths cannot disagree about "the" matrix being tested.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerances used by every numerical predicate in the crate.
///
/// * `atol_sym` — absolute entrywise bound on acceptable asymmetry of inputs;
///   also the generic absolute tolerance for exact-equality style checks.
/// * `rtol_eig` — relative threshold below which an eigenvalue counts as
///   zero: `|λ| ≤ rtol_eig · max(1, ρ)` with `ρ` the spectral radius.
/// * `eps_psd` — slack for semidefiniteness: `λ_min ≥ -eps_psd` passes.
/// * `eps_strict` — margin demanded for strict definiteness:
///   `λ_min ≥ eps_strict` passes.
/// * `rtol_rank` — relative singular-value threshold for numerical rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub atol_sym: f64,
    pub rtol_eig: f64,
    pub eps_psd: f64,
    pub eps_strict: f64,
    pub rtol_rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            atol_sym: 1e-8,
            rtol_eig: 1e-9,
            eps_psd: 1e-8,
            eps_strict: 1e-6,
            rtol_rank: 1e-8,
        }
    }
}

impl Tolerances {
    /// Checks the internal consistency of the tolerance set: all values must
    /// be strictly positive and the strict margin must dominate the
    /// semidefinite slack.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("atol_sym", self.atol_sym),
            ("rtol_eig", self.rtol_eig),
            ("eps_psd", self.eps_psd),
            ("eps_strict", self.eps_strict),
            ("rtol_rank", self.rtol_rank),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::spec(format!(
                    "tolerance {name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        if self.eps_strict <= self.eps_psd {
            return Err(Error::spec(format!(
                "eps_strict ({}) must exceed eps_psd ({})",
                self.eps_strict, self.eps_psd
            )));
        }
        Ok(())
    }
}

/// Signature of a symmetric matrix: the number of negative, (numerically)
/// zero and positive eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub neg: usize,
    pub zero: usize,
    pub pos: usize,
}

impl Inertia {
    pub fn new(neg: usize, zero: usize, pos: usize) -> Self {
        Inertia { neg, zero, pos }
    }

    /// Total dimension accounted for.
    pub fn dim(&self) -> usize {
        self.neg + self.zero + self.pos
    }

    /// Componentwise sum; inertia is additive over block-diagonal splits.
    pub fn add(&self, other: &Inertia) -> Inertia {
        Inertia {
            neg: self.neg + other.neg,
            zero: self.zero + other.zero,
            pos: self.pos + other.pos,
        }
    }
}

impl std::fmt::Display for Inertia {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.neg, self.zero, self.pos)
    }
}

/// A dense symmetric matrix whose stored entries satisfy `a[i][j] == a[j][i]`
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    m: DMatrix<f64>,
}

impl SymMat {
    /// Wraps a square matrix, symmetrising it as `(A + Aᵀ)/2`.
    ///
    /// Inputs whose asymmetry `max_ij |a_ij - a_ji|` exceeds `tol.atol_sym`
    /// are rejected: such a matrix is almost certainly a programming error,
    /// and silently symmetrising it would hide the bug.
    pub fn new(m: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::spec(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::spec("symmetric matrix must have dimension >= 1"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::spec("symmetric matrix contains non-finite entries"));
        }
        let mut asym: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > tol.atol_sym {
            return Err(Error::spec(format!(
                "matrix asymmetry {asym:.3e} exceeds atol_sym {:.3e}",
                tol.atol_sym
            )));
        }
        Ok(Self::symmetrize(m))
    }

    /// Wraps `(A + Aᵀ)/2` without an asymmetry check.  Used internally where
    /// the matrix is symmetric by construction and only floating-point
    /// round-off can perturb it.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let mut s = m.clone();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                s[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
        SymMat { m: s }
    }

    /// Identity of dimension `n`.
    pub fn identity(n: usize) -> Self {
        SymMat {
            m: DMatrix::identity(n, n),
        }
    }

    /// Zero matrix of dimension `n`.
    pub fn zeros(n: usize) -> Self {
        SymMat {
            m: DMatrix::zeros(n, n),
        }
    }

    /// Diagonal matrix from the given entries.
    pub fn from_diagonal(entries: &[f64]) -> Self {
        SymMat {
            m: DMatrix::from_diagonal(&DVector::from_row_slice(entries)),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Read access to the underlying dense matrix.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Consumes the wrapper and returns the dense matrix.
    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }

    /// Eigenvalues in ascending order (symmetric algorithm).
    pub fn eigenvalues(&self) -> Result<DVector<f64>> {
        let eig = nalgebra::SymmetricEigen::try_new(self.m.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numerical("symmetric eigenvalue iteration did not converge"))?;
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite eigenvalue"));
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(DVector::from_vec(vals))
    }

    /// Full eigendecomposition; returns `(eigenvalues ascending, eigenvectors
    /// as columns in the same order)`.
    pub fn eigen_pairs(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let eig = nalgebra::SymmetricEigen::try_new(self.m.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numerical("symmetric eigenvalue iteration did not converge"))?;
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite eigenvalue"));
        }
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vecs = DMatrix::zeros(n, n);
        for (k, &i) in order.iter().enumerate() {
            vecs.set_column(k, &eig.eigenvectors.column(i));
        }
        Ok((vals, vecs))
    }

    /// Smallest eigenvalue.
    pub fn lambda_min(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    /// Largest eigenvalue.
    pub fn lambda_max(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        Ok(ev[ev.len() - 1])
    }

    /// Counts negative / zero / positive eigenvalues.
    ///
    /// An eigenvalue is classified as zero when
    /// `|λ| ≤ rtol_eig · max(1, ρ)` where `ρ` is the spectral radius, so the
    /// zero band scales with the magnitude of the matrix but never collapses
    /// below an absolute floor.
    pub fn inertia(&self, tol: &Tolerances) -> Result<Inertia> {
        let ev = self.eigenvalues()?;
        let radius = ev.iter().fold(0.0_f64, |r, v| r.max(v.abs()));
        let band = tol.rtol_eig * radius.max(1.0);
        let mut inertia = Inertia::new(0, 0, 0);
        for v in ev.iter() {
            if v.abs() <= band {
                inertia.zero += 1;
            } else if *v < 0.0 {
                inertia.neg += 1;
            } else {
                inertia.pos += 1;
            }
        }
        Ok(inertia)
    }

    /// Positive semidefiniteness up to slack: `λ_min ≥ -eps_psd`.
    pub fn is_psd(&self, tol: &Tolerances) -> Result<bool> {
        Ok(self.lambda_min()? >= -tol.eps_psd)
    }

    /// Positive definiteness with margin: `λ_min ≥ eps_strict`.
    pub fn is_pd(&self, tol: &Tolerances) -> Result<bool> {
        Ok(self.lambda_min()? >= tol.eps_strict)
    }

    /// Negative definiteness with margin: `λ_max ≤ -eps_strict`.
    pub fn is_nd(&self, tol: &Tolerances) -> Result<bool> {
        Ok(self.lambda_max()? <= -tol.eps_strict)
    }

    /// Leading principal block of size `k` (rows/cols `0..k`).
    pub fn leading_block(&self, k: usize) -> Result<SymMat> {
        self.check_split(k)?;
        Ok(SymMat {
            m: self.m.view((0, 0), (k, k)).into_owned(),
        })
    }

    /// Trailing principal block (rows/cols `k..dim`).
    pub fn trailing_block(&self, k: usize) -> Result<SymMat> {
        self.check_split(k)?;
        let r = self.dim() - k;
        Ok(SymMat {
            m: self.m.view((k, k), (r, r)).into_owned(),
        })
    }

    /// Off-diagonal block: rows `0..k`, columns `k..dim`.
    pub fn offdiag_block(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_split(k)?;
        Ok(self
            .m
            .view((0, k), (k, self.dim() - k))
            .into_owned())
    }

    fn check_split(&self, k: usize) -> Result<()> {
        if k == 0 || k >= self.dim() {
            return Err(Error::spec(format!(
                "block split {k} must satisfy 0 < k < {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Schur complement of the trailing block:
    /// `A11 - A12 · A22⁻¹ · A12ᵀ` for the partition at row/column `k`.
    ///
    /// Fails with [`Error::SingularBlock`] when `A22` has a numerically zero
    /// eigenvalue (the complement is then undefined).
    pub fn schur_complement(&self, k: usize, tol: &Tolerances) -> Result<SymMat> {
        let a22 = self.trailing_block(k)?;
        let inertia22 = a22.inertia(tol)?;
        if inertia22.zero > 0 {
            return Err(Error::SingularBlock(format!(
                "trailing block has {} numerically zero eigenvalue(s)",
                inertia22.zero
            )));
        }
        let a11 = self.leading_block(k)?;
        let a12 = self.offdiag_block(k)?;
        let a22_inv = a22
            .m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularBlock("trailing block inversion failed".into()))?;
        let schur = &a11.m - &a12 * a22_inv * a12.transpose();
        Ok(SymMat::symmetrize(schur))
    }

    /// Checks the additivity of inertia over a Schur-complement split:
    /// `In(A) = In(A22) + In(A11 - A12 A22⁻¹ A12ᵀ)`.
    ///
    /// Both sides are computed independently with [`SymMat::inertia`]; the
    /// check fails only if the eigenvalue counts genuinely disagree (which,
    /// for a nonsingular trailing block, indicates eigenvalues straddling the
    /// zero band).
    pub fn haynsworth_check(&self, k: usize, tol: &Tolerances) -> Result<bool> {
        let whole = self.inertia(tol)?;
        let trailing = self.trailing_block(k)?.inertia(tol)?;
        let schur = self.schur_complement(k, tol)?.inertia(tol)?;
        Ok(whole == trailing.add(&schur))
    }

    /// Congruence transform `T A Tᵀ` (result symmetrised to kill round-off).
    /// `T` must have `self.dim()` columns.
    pub fn congruence(&self, t: &DMatrix<f64>) -> Result<SymMat> {
        if t.ncols() != self.dim() {
            return Err(Error::spec(format!(
                "congruence factor has {} columns, expected {}",
                t.ncols(),
                self.dim()
            )));
        }
        Ok(SymMat::symmetrize(t * &self.m * t.transpose()))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0_f64, |r, v| r.max(v.abs()))
    }

    /// Inverse, computed via LU with a prior nonsingularity check through the
    /// inertia zero count.
    pub fn try_inverse(&self, tol: &Tolerances) -> Result<SymMat> {
        let inertia = self.inertia(tol)?;
        if inertia.zero > 0 {
            return Err(Error::SingularBlock(format!(
                "matrix has {} numerically zero eigenvalue(s), cannot invert",
                inertia.zero
            )));
        }
        let inv = self
            .m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::numerical("matrix inversion failed"))?;
        Ok(SymMat::symmetrize(inv))
    }
}
