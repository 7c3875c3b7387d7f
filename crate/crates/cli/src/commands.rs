//! The five commands behind the binary: `check`, `verify`, `generate`,
//! `convert-noise` and `report`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use dissipacert_core::datagen::ScenarioConfig;
use dissipacert_core::informativity::{
    decide_with, identify_unique, noiseless_data_lmi, noiseless_problem, noisy_problem,
    s_lemma_combined, slater_check, InformativityOutcome,
};
use dissipacert_core::lmi::{revalidate_witness, SolveBudget};
use dissipacert_core::sysmodel::{convert_noise, DataRecord, NoiseSpec, SupplyRate, Sys};
use dissipacert_core::Tolerances;

use crate::certificate::{
    counterexample_from_section, informative_section, not_informative_section, problem_hash,
    read_certificate, CertificateDocument, EvidenceSection, MatrixSection, ToleranceSection,
    VerdictSection, FORMAT_VERSION,
};
use crate::error::{exit, from_core, CliError};
use crate::format::{
    data_from_csv, noise_from_json, rows_of, supply_from_json, to_pretty_bytes, write_atomic,
    write_data_csv, write_noise_json, write_supply_json,
};

/// Relative tolerance when comparing a stored scalar or matrix against its
/// recomputed counterpart (deterministic arithmetic on identical bytes).
const RECOMPUTE_RTOL: f64 = 1e-6;

/// The three problem files every decision runs on, read once so the hash
/// and the parsed structures come from identical bytes.
pub struct ProblemFiles {
    pub record: DataRecord,
    pub supply: SupplyRate,
    pub noise: NoiseSpec,
    pub hash: String,
}

pub fn load_problem(
    data_path: &Path,
    supply_path: &Path,
    noise_path: &Path,
) -> Result<ProblemFiles, CliError> {
    let read = |p: &Path| -> Result<Vec<u8>, CliError> {
        fs::read(p).map_err(|e| CliError::usage(&format!("reading {}", p.display()), e))
    };
    let data_bytes = read(data_path)?;
    let supply_bytes = read(supply_path)?;
    let noise_bytes = read(noise_path)?;
    let record = data_from_csv(&data_bytes)?;
    let supply = supply_from_json(&supply_bytes)?;
    let noise = noise_from_json(&noise_bytes)?;
    if supply.m() != record.m() || supply.p() != record.p() {
        return Err(CliError::Usage(format!(
            "supply rate is for m={}, p={} but the record has m={}, p={}",
            supply.m(),
            supply.p(),
            record.m(),
            record.p()
        )));
    }
    if let Some(param) = noise.parameter() {
        let expected = record.n() + record.p() + record.t_len();
        if param.dim() != expected {
            return Err(CliError::Usage(format!(
                "noise parameter has dimension {} but the record needs {expected}",
                param.dim()
            )));
        }
    }
    Ok(ProblemFiles {
        record,
        supply,
        noise,
        hash: problem_hash(&data_bytes, &supply_bytes, &noise_bytes),
    })
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

/// Decides informativity for the problem files and writes the certificate.
/// Returns the exit code together with the document.
pub fn cmd_check(
    data_path: &Path,
    supply_path: &Path,
    noise_path: &Path,
    out_path: &Path,
    seed: u64,
    tol: &Tolerances,
) -> Result<(i32, CertificateDocument), CliError> {
    let problem = load_problem(data_path, supply_path, noise_path)?;
    let outcome = decide_with(
        &problem.record,
        &problem.noise,
        &problem.supply,
        tol,
        seed,
        &SolveBudget::default(),
    )
    .map_err(from_core)?;

    let (code, verdict) = match &outcome {
        InformativityOutcome::Informative(cert) => {
            (exit::INFORMATIVE, informative_section(cert)?)
        }
        InformativityOutcome::NotInformative(ev) => {
            (exit::NOT_INFORMATIVE, not_informative_section(ev))
        }
        InformativityOutcome::Inconclusive { reason } => (
            exit::NO_VERDICT,
            VerdictSection::Inconclusive {
                reason: reason.clone(),
            },
        ),
    };
    let doc = CertificateDocument {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        tolerances: ToleranceSection::from_tolerances(tol),
        problem_hash: problem.hash,
        verdict,
    };
    write_atomic(out_path, &to_pretty_bytes(&doc)?)?;
    Ok((code, doc))
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::CertificateInvalid(msg.into())
}

fn check_close(stored: f64, recomputed: f64, what: &str) -> Result<(), CliError> {
    let scale = stored.abs().max(1.0);
    if !recomputed.is_finite() || (stored - recomputed).abs() > RECOMPUTE_RTOL * scale {
        return Err(invalid(format!(
            "{what}: stored {stored:.6e} but recomputed {recomputed:.6e}"
        )));
    }
    Ok(())
}

fn check_sys_close(stored: &Sys, recomputed: &Sys, what: &str) -> Result<(), CliError> {
    let diff = (stored.stacked() - recomputed.stacked()).amax();
    let scale = recomputed.stacked().amax().max(1.0);
    if diff > RECOMPUTE_RTOL * scale {
        return Err(invalid(format!(
            "{what}: stored system differs from the recomputed one by {diff:.3e}"
        )));
    }
    Ok(())
}

/// Re-validates a certificate against the problem files using eigenvalue
/// computations only — the LMI solver is never invoked.  Fails with exit 65
/// when the files differ from the ones the certificate was computed for and
/// exit 66 when any stored quantity fails re-validation.
pub fn cmd_verify(
    cert_path: &Path,
    data_path: &Path,
    supply_path: &Path,
    noise_path: &Path,
) -> Result<i32, CliError> {
    let doc = read_certificate(cert_path)?;
    let problem = load_problem(data_path, supply_path, noise_path)?;
    if doc.problem_hash != problem.hash {
        return Err(CliError::HashMismatch(format!(
            "certificate was computed for files hashing to {}.. but the given files hash to {}..",
            &doc.problem_hash[..12.min(doc.problem_hash.len())],
            &problem.hash[..12]
        )));
    }
    let tol = doc.tolerances.to_tolerances();

    match &doc.verdict {
        VerdictSection::Informative {
            storage,
            storage_inverse,
            alpha,
            decision_lambda_min,
            identified,
        } => {
            let p = storage.checked_symmetric("storage matrix", &tol)?;
            let p_scale = p.max_abs().max(1.0);
            let p_lmin = p.lambda_min().map_err(from_core)?;
            if p_lmin < -tol.eps_psd * p_scale {
                return Err(invalid(format!(
                    "storage matrix is not positive semidefinite (λ_min = {p_lmin:.3e})"
                )));
            }
            match &problem.noise {
                NoiseSpec::N0 => {
                    let lmi = noiseless_data_lmi(&problem.record, &problem.supply, &p)
                        .map_err(from_core)?;
                    let lmin = lmi.lambda_min().map_err(from_core)?;
                    if lmin < -tol.eps_psd * lmi.max_abs().max(1.0) {
                        return Err(invalid(format!(
                            "exact-data decision LMI fails at the stored storage matrix \
                             (λ_min = {lmin:.3e})"
                        )));
                    }
                    check_close(*decision_lambda_min, lmin, "decision margin")?;
                    if let Some(section) = identified {
                        let stored = section.to_sys()?;
                        let (recomputed, _) =
                            identify_unique(&problem.record, &tol).map_err(from_core)?;
                        check_sys_close(&stored, &recomputed, "identified system")?;
                    }
                }
                NoiseSpec::N1 { .. } | NoiseSpec::N2 { .. } => {
                    let q_section = storage_inverse.as_ref().ok_or_else(|| {
                        invalid("quadratic noise model but no inverse storage matrix stored")
                    })?;
                    let alpha = alpha
                        .ok_or_else(|| invalid("quadratic noise model but no multiplier stored"))?;
                    if !alpha.is_finite() || alpha < 0.0 {
                        return Err(invalid(format!("multiplier α = {alpha:.3e} is negative")));
                    }
                    let q = q_section.checked_symmetric("inverse storage matrix", &tol)?;
                    let q_lmin = q.lambda_min().map_err(from_core)?;
                    if q_lmin < 0.25 * tol.eps_strict {
                        return Err(invalid(format!(
                            "inverse storage matrix is not positive definite \
                             (λ_min = {q_lmin:.3e})"
                        )));
                    }
                    // The stored pair must actually be an inverse pair.
                    let prod_gap = (p.entries() * q.entries()
                        - DMatrix::identity(p.dim(), p.dim()))
                    .amax();
                    if prod_gap > RECOMPUTE_RTOL * p_scale.max(q.max_abs()) {
                        return Err(invalid(format!(
                            "storage and inverse storage are not inverses (‖PQ - I‖ = \
                             {prod_gap:.3e})"
                        )));
                    }
                    let combined = s_lemma_combined(
                        &problem.record,
                        &problem.noise,
                        &problem.supply,
                        &q,
                        alpha,
                        &tol,
                    )
                    .map_err(from_core)?;
                    let lmin = combined.lambda_min().map_err(from_core)?;
                    if lmin < -tol.eps_psd * combined.max_abs().max(1.0) {
                        return Err(invalid(format!(
                            "combined decision inequality fails at the stored (Q, α) \
                             (λ_min = {lmin:.3e})"
                        )));
                    }
                    check_close(*decision_lambda_min, lmin, "decision margin")?;
                }
            }
        }
        VerdictSection::NotInformative { evidence } => match evidence {
            EvidenceSection::Counterexample {
                system,
                state,
                input,
                output,
                supply_value,
                kernel_vector,
            } => {
                let ce = counterexample_from_section(
                    system,
                    state,
                    input,
                    output,
                    *supply_value,
                    kernel_vector,
                )?;
                let audit = ce
                    .verify(&problem.record, &problem.noise, &problem.supply, &tol)
                    .map_err(|e| invalid(format!("counterexample re-validation failed: {e}")))?;
                check_close(*supply_value, audit.supply_value, "counterexample supply value")?;
            }
            EvidenceSection::UniqueSystemNotDissipative {
                system,
                bound,
                witness,
            } => {
                let stored = system.to_sys()?;
                let (recomputed, _) = identify_unique(&problem.record, &tol).map_err(from_core)?;
                check_sys_close(&stored, &recomputed, "identified system")?;
                let prob =
                    noiseless_problem(&problem.record, &problem.supply).map_err(from_core)?;
                let w = witness.to_witness()?;
                let recomputed_bound = revalidate_witness(&prob, &w, &tol)
                    .map_err(|e| invalid(format!("infeasibility witness rejected: {e}")))?;
                check_close(*bound, recomputed_bound, "infeasibility bound")?;
                if recomputed_bound >= 0.0 {
                    return Err(invalid(format!(
                        "witness bound {recomputed_bound:.3e} does not certify infeasibility"
                    )));
                }
            }
            EvidenceSection::InfeasibleLmi { bound, witness } => {
                let slater = slater_check(&problem.record, &problem.noise, &tol)
                    .map_err(from_core)?;
                if !slater.satisfied {
                    return Err(invalid(
                        "verdict relies on a strict interior of the consistency set, \
                         but the interiority check fails on these files",
                    ));
                }
                let prob = noisy_problem(
                    &problem.record,
                    &problem.noise,
                    &problem.supply,
                    &tol,
                )
                .map_err(from_core)?;
                let w = witness.to_witness()?;
                let recomputed_bound = revalidate_witness(&prob, &w, &tol)
                    .map_err(|e| invalid(format!("infeasibility witness rejected: {e}")))?;
                check_close(*bound, recomputed_bound, "infeasibility bound")?;
                if recomputed_bound >= 0.0 {
                    return Err(invalid(format!(
                        "witness bound {recomputed_bound:.3e} does not certify infeasibility"
                    )));
                }
            }
        },
        VerdictSection::Inconclusive { .. } => {
            // Nothing checkable beyond the problem hash and well-formedness.
        }
    }
    Ok(exit::INFORMATIVE)
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Ground-truth sidecar written next to the generated problem files.
#[derive(Serialize)]
struct TruthFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    spectral_radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_realisation: Option<Vec<Vec<f64>>>,
}

/// Builds the scenario described by a config file and writes
/// `data.csv`, `supply.json`, `noise.json` and `system.json` into `out_dir`.
/// Identical configs produce byte-identical files.
pub fn cmd_generate(
    config_path: &Path,
    out_dir: &Path,
    tol: &Tolerances,
) -> Result<Vec<PathBuf>, CliError> {
    let bytes = fs::read(config_path)
        .map_err(|e| CliError::usage(&format!("reading {}", config_path.display()), e))?;
    let config: ScenarioConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("scenario config: {e}")))?;
    let scenario = config.build(tol).map_err(from_core)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::usage(&format!("creating {}", out_dir.display()), e))?;
    let data_path = out_dir.join("data.csv");
    let supply_path = out_dir.join("supply.json");
    let noise_path = out_dir.join("noise.json");
    let truth_path = out_dir.join("system.json");

    write_data_csv(&data_path, &scenario.record)?;
    write_supply_json(&supply_path, &scenario.supply)?;
    write_noise_json(&noise_path, &scenario.noise)?;
    let truth = TruthFile {
        a: rows_of(scenario.sys.a()),
        b: rows_of(scenario.sys.b()),
        c: rows_of(scenario.sys.c()),
        d: rows_of(scenario.sys.d()),
        spectral_radius: scenario.sys.spectral_radius(),
        noise_realisation: scenario.noise_realisation.as_ref().map(rows_of),
    };
    write_atomic(&truth_path, &to_pretty_bytes(&truth)?)?;
    Ok(vec![data_path, supply_path, noise_path, truth_path])
}

// ---------------------------------------------------------------------------
// convert-noise
// ---------------------------------------------------------------------------

/// Converts a quadratic noise model to the equivalent model of the other
/// form and writes it to `out_path`.
pub fn cmd_convert_noise(
    noise_path: &Path,
    out_path: &Path,
    tol: &Tolerances,
) -> Result<NoiseSpec, CliError> {
    let bytes = fs::read(noise_path)
        .map_err(|e| CliError::usage(&format!("reading {}", noise_path.display()), e))?;
    let spec = noise_from_json(&bytes)?;
    let converted = convert_noise(&spec, tol).map_err(from_core)?;
    write_noise_json(out_path, &converted)?;
    Ok(converted)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn matrix_lines(out: &mut String, name: &str, section: &MatrixSection) {
    out.push_str(&format!(
        "  {name} ({dim}x{dim}): lambda_min = {lmin:.6e}, frobenius = {fro:.6e}\n",
        dim = section.rows.len(),
        lmin = section.lambda_min,
        fro = section.frobenius
    ));
    for row in &section.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:+.6e}")).collect();
        out.push_str(&format!("    [ {} ]\n", cells.join("  ")));
    }
}

/// Renders a certificate as human-readable text; the exit code mirrors the
/// stored verdict (0 / 1 / 2) so scripts can branch on it.
pub fn cmd_report(cert_path: &Path) -> Result<(i32, String), CliError> {
    let doc = read_certificate(cert_path)?;
    let mut out = String::new();
    out.push_str("dissipativity certificate\n");
    out.push_str(&format!("  tool version : {}\n", doc.tool_version));
    out.push_str(&format!("  problem hash : {}\n", doc.problem_hash));
    out.push_str(&format!("  seed         : {}\n", doc.seed));
    out.push_str(&format!(
        "  tolerances   : eps_psd = {:.1e}, eps_strict = {:.1e}, rtol_rank = {:.1e}\n",
        doc.tolerances.eps_psd, doc.tolerances.eps_strict, doc.tolerances.rtol_rank
    ));
    let code = match &doc.verdict {
        VerdictSection::Informative {
            storage,
            storage_inverse,
            alpha,
            decision_lambda_min,
            identified,
        } => {
            out.push_str("verdict: INFORMATIVE\n");
            out.push_str(&format!(
                "  a single storage matrix certifies dissipativity of every system \
                 consistent with the data (decision lambda_min = {decision_lambda_min:.6e})\n"
            ));
            matrix_lines(&mut out, "storage P", storage);
            if let Some(q) = storage_inverse {
                matrix_lines(&mut out, "inverse storage Q", q);
            }
            if let Some(alpha) = alpha {
                out.push_str(&format!("  multiplier alpha = {alpha:.6e}\n"));
            }
            if identified.is_some() {
                out.push_str("  the data determine the system uniquely (stored alongside)\n");
            }
            exit::INFORMATIVE
        }
        VerdictSection::NotInformative { evidence } => {
            out.push_str("verdict: NOT INFORMATIVE\n");
            match evidence {
                EvidenceSection::Counterexample {
                    supply_value,
                    state,
                    input,
                    ..
                } => {
                    out.push_str(&format!(
                        "  a consistent system admits a fixed point with negative supply \
                         s(u, y) = {supply_value:.6e}\n"
                    ));
                    out.push_str(&format!(
                        "  witness state dim {} / input dim {}\n",
                        state.len(),
                        input.len()
                    ));
                }
                EvidenceSection::UniqueSystemNotDissipative { bound, .. } => {
                    out.push_str(&format!(
                        "  the unique system explaining the data is not dissipative \
                         (storage LMI infeasibility bound {bound:.6e})\n"
                    ));
                }
                EvidenceSection::InfeasibleLmi { bound, .. } => {
                    out.push_str(&format!(
                        "  the combined decision inequality is infeasible \
                         (certified bound {bound:.6e})\n"
                    ));
                }
            }
            exit::NOT_INFORMATIVE
        }
        VerdictSection::Inconclusive { reason } => {
            out.push_str("verdict: INCONCLUSIVE\n");
            out.push_str(&format!("  {reason}\n"));
            exit::NO_VERDICT
        }
    };
    Ok((code, out))
}
