//! Film kinetic inductance and the quarter-power geometric scaling laws for
//! resonator frequency and impedance.

use crate::constants::{BOLTZMANN, HBAR};
use crate::error::{Error, Result};

use std::f64::consts::PI;

/// Superconducting film characterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilmProperties {
    /// Normal-state sheet resistance, ohms per square.
    pub r_sq: f64,
    /// Critical temperature, kelvin.
    pub t_c: f64,
    /// Sheet inductance ħR□/(1.76πk_B T_c), henries per square.
    pub l_sq: f64,
}

impl FilmProperties {
    pub fn new(r_sq: f64, t_c: f64) -> Result<Self> {
        Ok(Self {
            r_sq,
            t_c,
            l_sq: sheet_inductance(r_sq, t_c)?,
        })
    }
}

/// Base geometry and figures for [`scaling_predict`].
#[derive(Debug, Clone, Copy)]
pub struct ScalingBase {
    /// Meander length, meters.
    pub length: f64,
    /// Wire width, meters.
    pub width: f64,
    /// Resonance frequency, hertz.
    pub f0: f64,
    /// Differential impedance, ohms.
    pub z: f64,
}

/// Scaled-geometry prediction.
#[derive(Debug, Clone, Copy)]
pub struct ScalingPrediction {
    /// Predicted frequency, hertz.
    pub f0: f64,
    /// Predicted impedance, ohms.
    pub z: f64,
    /// f0'/f0 = ((w'/w)(ℓ/ℓ')³)^(1/4).
    pub f0_ratio: f64,
    /// Z'/Z = ((ℓ'/ℓ)(w/w')³)^(1/4).
    pub z_ratio: f64,
    /// Cross-check form Z'/Z = (ℓ'/ℓ)(w/w')(ω₀'/ω₀).
    pub z_ratio_product_form: f64,
}

/// Power-law fit y = prefactor·x^exponent from log-log least squares.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS residual of ln y around the fit.
    pub rms_log_residual: f64,
}

/// Kinetic sheet inductance L□ = ħR□/(1.76π k_B T_c).
pub fn sheet_inductance(r_sq: f64, t_c: f64) -> Result<f64> {
    if !(r_sq > 0.0) || !(t_c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sheet resistance and critical temperature must be positive, got R = {r_sq:e}, Tc = {t_c:e}"
        )));
    }
    Ok(HBAR * r_sq / (1.76 * PI * BOLTZMANN * t_c))
}

/// Wire inductance L = L□·ℓ/w; geometric inductance is neglected.
pub fn wire_inductance(l_sq: f64, length: f64, width: f64) -> Result<f64> {
    if !(l_sq > 0.0) || !(length > 0.0) || !(width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sheet inductance and geometry must be positive, got L_sq = {l_sq:e}, length = {length:e}, width = {width:e}"
        )));
    }
    Ok(l_sq * length / width)
}

/// Applies f0 ∝ (w/ℓ³)^(1/4) and Z ∝ (ℓ/w³)^(1/4) to a new geometry.
pub fn scaling_predict(
    base: &ScalingBase,
    target_length: f64,
    target_width: f64,
) -> Result<ScalingPrediction> {
    for (field, value) in [
        ("base length", base.length),
        ("base width", base.width),
        ("base f0", base.f0),
        ("base impedance", base.z),
        ("target length", target_length),
        ("target width", target_width),
    ] {
        if !(value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{field} must be positive, got {value:e}"
            )));
        }
    }
    let lr = target_length / base.length;
    let wr = target_width / base.width;
    let f0_ratio = (wr / (lr * lr * lr)).powf(0.25);
    let z_ratio = (lr / (wr * wr * wr)).powf(0.25);
    Ok(ScalingPrediction {
        f0: base.f0 * f0_ratio,
        z: base.z * z_ratio,
        f0_ratio,
        z_ratio,
        z_ratio_product_form: lr / wr * f0_ratio,
    })
}

/// Unweighted least squares of ln y on ln x.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for &(x, y) in points {
        if !(x > 0.0) || !(y > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "power-law fit needs positive samples, got ({x:e}, {y:e})"
            )));
        }
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::InvalidParameter(
            "power-law fit needs at least two distinct x values".into(),
        ));
    }
    let exponent = (n * sxy - sx * sy) / denom;
    let intercept = (sy - exponent * sx) / n;
    let rms = (points
        .iter()
        .map(|&(x, y)| {
            let r = y.ln() - (intercept + exponent * x.ln());
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(PowerLawFit {
        exponent,
        prefactor: intercept.exp(),
        rms_log_residual: rms,
    })
}
