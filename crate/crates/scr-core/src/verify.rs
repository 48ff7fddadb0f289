//! Capacitance-discount verification: predict family eigenmodes at a given
//! γ, fit γ against reference frequencies, and tabulate mode splittings.

use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{
    build_matrices, eigenmodes, labeled_pair, mode_splitting, CircuitDesign, Mode, ModeLabel,
    GAMMA_MAX, GAMMA_MIN,
};
use crate::error::{Error, Result};
use crate::linalg::golden_section_min;

/// Absolute γ resolution of the discount fit.
pub const GAMMA_FIT_TOL: f64 = 1e-5;

/// Labeled mode pair of one resonator.
#[derive(Debug, Clone)]
pub struct FamilyModes {
    pub name: String,
    pub common: Mode,
    pub differential: Mode,
}

/// One measured or externally simulated frequency to verify against.
#[derive(Debug, Clone)]
pub struct ReferenceFrequency {
    pub name: String,
    pub label: ModeLabel,
    /// Hertz.
    pub frequency: f64,
}

/// Predicted-versus-reference comparison of a single mode.
#[derive(Debug, Clone, Serialize)]
pub struct ModeRow {
    pub name: String,
    pub label: ModeLabel,
    pub predicted_hz: f64,
    pub reference_hz: f64,
    /// (predicted − reference) / reference.
    pub relative_error: f64,
}

/// Exact and first-order mode splittings of one resonator.
#[derive(Debug, Clone, Serialize)]
pub struct SplittingRow {
    pub name: String,
    pub exact_hz: f64,
    pub approx_hz: f64,
}

/// Result of fitting the capacitance discount to reference frequencies.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub gamma_star: f64,
    /// Set when an interval endpoint beats the interior minimum, meaning the
    /// objective is not unimodal over the γ interval.
    pub multiple_minima: bool,
    pub modes: Vec<ModeRow>,
    pub splittings: Vec<SplittingRow>,
    pub max_abs_relative_error: f64,
    pub rms_relative_error: f64,
}

/// Feedline-folded, γ-discounted eigenmode pairs for every design, evaluated
/// independently in parallel.
pub fn predict_family(designs: &[CircuitDesign], gamma: f64) -> Result<Vec<FamilyModes>> {
    designs
        .par_iter()
        .map(|design| {
            let modes = eigenmodes(&build_matrices(design, true, gamma)?)?;
            let (common, differential) = labeled_pair(&modes);
            Ok(FamilyModes {
                name: design.name.clone(),
                common: common.clone(),
                differential: differential.clone(),
            })
        })
        .collect()
}

fn predicted_frequency(family: &[FamilyModes], name: &str, label: ModeLabel) -> Result<f64> {
    let entry = family
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::InvalidParameter(format!("reference names unknown design {name}")))?;
    match label {
        ModeLabel::Common => Ok(entry.common.frequency),
        ModeLabel::Differential => Ok(entry.differential.frequency),
        ModeLabel::ElectronLike => Err(Error::InvalidParameter(format!(
            "reference for {name} must be a circuit mode, got {label}"
        ))),
    }
}

/// Fits the single capacitance discount γ* minimizing the summed squared
/// relative frequency errors over all references, golden-section refined to
/// [`GAMMA_FIT_TOL`], and reports per-mode errors and splittings at γ*.
pub fn fit_gamma(
    designs: &[CircuitDesign],
    references: &[ReferenceFrequency],
) -> Result<VerificationReport> {
    if references.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 reference frequencies, got {}",
            references.len()
        )));
    }
    for r in references {
        if !(r.frequency > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reference frequency for {} must be positive, got {:e}",
                r.name, r.frequency
            )));
        }
    }
    // Resolve every reference once up front so bad names fail fast rather
    // than inside the scalar search.
    let probe = predict_family(designs, GAMMA_MAX)?;
    for r in references {
        predicted_frequency(&probe, &r.name, r.label)?;
    }

    let objective = |gamma: f64| -> f64 {
        let family = match predict_family(designs, gamma) {
            Ok(f) => f,
            Err(_) => return f64::INFINITY,
        };
        references
            .iter()
            .map(|r| {
                let predicted = predicted_frequency(&family, &r.name, r.label).unwrap();
                ((predicted - r.frequency) / r.frequency).powi(2)
            })
            .sum()
    };

    let (gamma_star, obj_star) =
        golden_section_min(&objective, GAMMA_MIN, GAMMA_MAX, GAMMA_FIT_TOL);
    let multiple_minima = [GAMMA_MIN, GAMMA_MAX]
        .iter()
        .any(|&end| (gamma_star - end).abs() > 2.0 * GAMMA_FIT_TOL && objective(end) < obj_star);

    let family = predict_family(designs, gamma_star)?;
    let modes: Vec<ModeRow> = references
        .iter()
        .map(|r| {
            let predicted = predicted_frequency(&family, &r.name, r.label)?;
            Ok(ModeRow {
                name: r.name.clone(),
                label: r.label,
                predicted_hz: predicted,
                reference_hz: r.frequency,
                relative_error: (predicted - r.frequency) / r.frequency,
            })
        })
        .collect::<Result<_>>()?;
    let max_abs = modes
        .iter()
        .map(|m| m.relative_error.abs())
        .fold(0.0_f64, f64::max);
    let rms = (modes
        .iter()
        .map(|m| m.relative_error * m.relative_error)
        .sum::<f64>()
        / modes.len() as f64)
        .sqrt();

    Ok(VerificationReport {
        gamma_star,
        multiple_minima,
        modes,
        splittings: splitting_report(designs, gamma_star)?,
        max_abs_relative_error: max_abs,
        rms_relative_error: rms,
    })
}

/// Exact eigenmode splittings next to the first-order estimate, per design.
pub fn splitting_report(designs: &[CircuitDesign], gamma: f64) -> Result<Vec<SplittingRow>> {
    designs
        .iter()
        .map(|design| {
            let split = mode_splitting(design, gamma)?;
            Ok(SplittingRow {
                name: design.name.clone(),
                exact_hz: split.exact,
                approx_hz: split.approx,
            })
        })
        .collect()
}
