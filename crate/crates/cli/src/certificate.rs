//! Certificate documents: the JSON artifact binding a verdict, its
//! supporting matrices and the exact problem files it was computed from.
//!
//! A document carries a SHA-256 digest of the three input files, so a
//! certificate replayed against different data is rejected before any
//! numerical check runs.  Alongside each stored matrix the document records
//! consistency probes (Frobenius norm and smallest eigenvalue); `verify`
//! recomputes them, so editing any single entry of a stored matrix is
//! detected either by the symmetry check (off-diagonal edits) or by the
//! probe comparison (diagonal edits).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dissipacert_core::informativity::{
    Counterexample, InformativeCertificate, NotInformativeEvidence,
};
use dissipacert_core::lmi::InfeasibilityWitness;
use dissipacert_core::sysmodel::Sys;
use dissipacert_core::{SymMat, Tolerances};

use crate::error::CliError;
use crate::format::{matrix_of, rows_of};

/// Format revision of the document schema.
pub const FORMAT_VERSION: u32 = 1;

/// Relative tolerance for probe comparison: recomputing a probe from the
/// stored (bit-exact) matrix entries is deterministic, so disagreement
/// beyond floating-point noise means the document was edited.
pub const PROBE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateDocument {
    pub format_version: u32,
    pub tool_version: String,
    /// Seed used for the decision pipeline's internal sampling.
    pub seed: u64,
    pub tolerances: ToleranceSection,
    /// SHA-256 over the raw bytes of the data, supply and noise files.
    pub problem_hash: String,
    pub verdict: VerdictSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToleranceSection {
    pub atol_sym: f64,
    pub rtol_eig: f64,
    pub eps_psd: f64,
    pub eps_strict: f64,
    pub rtol_rank: f64,
}

impl ToleranceSection {
    pub fn from_tolerances(tol: &Tolerances) -> Self {
        ToleranceSection {
            atol_sym: tol.atol_sym,
            rtol_eig: tol.rtol_eig,
            eps_psd: tol.eps_psd,
            eps_strict: tol.eps_strict,
            rtol_rank: tol.rtol_rank,
        }
    }

    pub fn to_tolerances(&self) -> Tolerances {
        Tolerances {
            atol_sym: self.atol_sym,
            rtol_eig: self.rtol_eig,
            eps_psd: self.eps_psd,
            eps_strict: self.eps_strict,
            rtol_rank: self.rtol_rank,
        }
    }
}

/// A stored matrix plus self-consistency probes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixSection {
    pub rows: Vec<Vec<f64>>,
    /// Frobenius norm of the matrix as stored.
    pub frobenius: f64,
    /// Smallest eigenvalue of the symmetrised matrix as stored.
    pub lambda_min: f64,
}

impl MatrixSection {
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self, CliError> {
        let lambda_min = SymMat::symmetrize(m.clone())
            .lambda_min()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        Ok(MatrixSection {
            rows: rows_of(m),
            frobenius: m.norm(),
            lambda_min,
        })
    }

    /// Rebuilds the matrix, recomputing both probes; any disagreement with
    /// the stored values fails the certificate.
    pub fn checked_matrix(&self, what: &str) -> Result<DMatrix<f64>, CliError> {
        let m = matrix_of(&self.rows, what)?;
        let scale = self.frobenius.abs().max(1.0);
        if (m.norm() - self.frobenius).abs() > PROBE_RTOL * scale {
            return Err(CliError::CertificateInvalid(format!(
                "{what}: Frobenius probe mismatch (stored {:.6e}, recomputed {:.6e})",
                self.frobenius,
                m.norm()
            )));
        }
        let lam = SymMat::symmetrize(m.clone())
            .lambda_min()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        if (lam - self.lambda_min).abs() > PROBE_RTOL * scale {
            return Err(CliError::CertificateInvalid(format!(
                "{what}: eigenvalue probe mismatch (stored {:.6e}, recomputed {:.6e})",
                self.lambda_min, lam
            )));
        }
        Ok(m)
    }

    /// Like [`checked_matrix`](Self::checked_matrix) but additionally
    /// enforces symmetry, returning the matrix wrapped as symmetric.
    pub fn checked_symmetric(&self, what: &str, tol: &Tolerances) -> Result<SymMat, CliError> {
        let m = self.checked_matrix(what)?;
        SymMat::new(m, tol)
            .map_err(|e| CliError::CertificateInvalid(format!("{what}: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

impl SystemSection {
    pub fn from_sys(sys: &Sys) -> Self {
        SystemSection {
            a: rows_of(sys.a()),
            b: rows_of(sys.b()),
            c: rows_of(sys.c()),
            d: rows_of(sys.d()),
        }
    }

    pub fn to_sys(&self) -> Result<Sys, CliError> {
        Sys::new(
            matrix_of(&self.a, "certificate system a")?,
            matrix_of(&self.b, "certificate system b")?,
            matrix_of(&self.c, "certificate system c")?,
            matrix_of(&self.d, "certificate system d")?,
        )
        .map_err(|e| CliError::CertificateInvalid(format!("stored system: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessSection {
    pub duals: Vec<Vec<Vec<f64>>>,
    pub cap_dual: f64,
    pub bound: f64,
    pub box_radius: f64,
    pub slack_cap: f64,
}

impl WitnessSection {
    pub fn from_witness(w: &InfeasibilityWitness) -> Self {
        WitnessSection {
            duals: w.duals.iter().map(|d| rows_of(d)).collect(),
            cap_dual: w.cap_dual,
            bound: w.bound,
            box_radius: w.box_radius,
            slack_cap: w.slack_cap,
        }
    }

    pub fn to_witness(&self) -> Result<InfeasibilityWitness, CliError> {
        let duals = self
            .duals
            .iter()
            .map(|d| matrix_of(d, "certificate witness dual"))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(InfeasibilityWitness {
            duals,
            cap_dual: self.cap_dual,
            bound: self.bound,
            box_radius: self.box_radius,
            slack_cap: self.slack_cap,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictSection {
    Informative {
        /// Common storage matrix `P` for every consistent system.
        storage: MatrixSection,
        /// Inverse storage matrix `Q = P⁻¹` (quadratic noise models only);
        /// the decision inequality is stated in terms of `Q`.
        #[serde(skip_serializing_if = "Option::is_none")]
        storage_inverse: Option<MatrixSection>,
        /// S-procedure multiplier (quadratic noise models only).
        #[serde(skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        /// Smallest raw eigenvalue of the decision matrix at the
        /// certificate.
        decision_lambda_min: f64,
        /// Uniquely identified system (exact full-rank data only).
        #[serde(skip_serializing_if = "Option::is_none")]
        identified: Option<SystemSection>,
    },
    NotInformative {
        evidence: EvidenceSection,
    },
    Inconclusive {
        reason: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvidenceSection {
    /// A consistent system plus a trajectory point violating the supply
    /// positivity for every storage matrix.
    Counterexample {
        system: SystemSection,
        state: Vec<f64>,
        input: Vec<f64>,
        output: Vec<f64>,
        supply_value: f64,
        kernel_vector: Vec<f64>,
    },
    /// Exact full-rank data whose unique explaining system is not
    /// dissipative; the witness certifies infeasibility of its storage LMI.
    UniqueSystemNotDissipative {
        system: SystemSection,
        bound: f64,
        witness: WitnessSection,
    },
    /// Quadratic noise model whose decision LMI is certifiably infeasible.
    InfeasibleLmi {
        bound: f64,
        witness: WitnessSection,
    },
}

/// SHA-256 digest of the three problem files.  Lengths are hashed alongside
/// the labelled contents so file-boundary ambiguity cannot produce
/// collisions between different file triples.
pub fn problem_hash(data: &[u8], supply: &[u8], noise: &[u8]) -> String {
    let mut h = Sha256::new();
    for (label, bytes) in [
        (b"data".as_slice(), data),
        (b"supply".as_slice(), supply),
        (b"noise".as_slice(), noise),
    ] {
        h.update(label);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn dvector_of(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Builds the verdict section from an informative outcome.
pub fn informative_section(cert: &InformativeCertificate) -> Result<VerdictSection, CliError> {
    let storage = MatrixSection::from_matrix(cert.storage.entries())?;
    let storage_inverse = match cert.alpha {
        Some(_) => {
            let q = cert
                .storage
                .try_inverse(&Tolerances::default())
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Some(MatrixSection::from_matrix(q.entries())?)
        }
        None => None,
    };
    Ok(VerdictSection::Informative {
        storage,
        storage_inverse,
        alpha: cert.alpha,
        decision_lambda_min: cert.decision_lambda_min,
        identified: cert.identified.as_ref().map(SystemSection::from_sys),
    })
}

/// Builds the verdict section from not-informative evidence.
pub fn not_informative_section(ev: &NotInformativeEvidence) -> VerdictSection {
    let evidence = match ev {
        NotInformativeEvidence::Counterexample(ce) => EvidenceSection::Counterexample {
            system: SystemSection::from_sys(&ce.system),
            state: vec_of(&ce.state),
            input: vec_of(&ce.input),
            output: vec_of(&ce.output),
            supply_value: ce.supply_value,
            kernel_vector: vec_of(&ce.kernel_vector),
        },
        NotInformativeEvidence::UniqueSystemNotDissipative {
            system,
            bound,
            witness,
        } => EvidenceSection::UniqueSystemNotDissipative {
            system: SystemSection::from_sys(system),
            bound: *bound,
            witness: WitnessSection::from_witness(witness),
        },
        NotInformativeEvidence::InfeasibleLmi { bound, witness } => {
            EvidenceSection::InfeasibleLmi {
                bound: *bound,
                witness: WitnessSection::from_witness(witness),
            }
        }
    };
    VerdictSection::NotInformative { evidence }
}

/// Reassembles a counterexample from its stored payload.
pub fn counterexample_from_section(
    system: &SystemSection,
    state: &[f64],
    input: &[f64],
    output: &[f64],
    supply_value: f64,
    kernel_vector: &[f64],
) -> Result<Counterexample, CliError> {
    Ok(Counterexample {
        system: system.to_sys()?,
        state: dvector_of(state),
        input: dvector_of(input),
        output: dvector_of(output),
        supply_value,
        kernel_vector: dvector_of(kernel_vector),
    })
}

pub fn read_certificate(path: &std::path::Path) -> Result<CertificateDocument, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::usage(&format!("reading {}", path.display()), e))?;
    let doc: CertificateDocument = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("certificate json: {e}")))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(CliError::Usage(format!(
            "certificate format version {} not supported (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    Ok(doc)
}
