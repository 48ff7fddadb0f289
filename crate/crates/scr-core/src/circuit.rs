//! Lumped two-node model of a symmetrically coupled resonator (SCR): two LC
//! halves joined by a cross capacitance and a shared inductive tail, reduced
//! to 2×2 capacitance / inverse-inductance matrices and solved for the common
//! and differential eigenmodes.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_modes;

use std::f64::consts::PI;

/// Lower admissible bound of the capacitance discount γ.
pub const GAMMA_MIN: f64 = 4.0 / (PI * PI);
/// Upper admissible bound of the capacitance discount γ.
pub const GAMMA_MAX: f64 = 1.0;

/// Geometric and lumped parameters of one SCR design. All fields SI.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitDesign {
    pub name: String,
    /// Meander length per half, meters.
    pub length: f64,
    /// Meander wire width, meters.
    pub width: f64,
    /// Node-a capacitance to ground, farads.
    pub c_a: f64,
    /// Node-b capacitance to ground, farads.
    pub c_b: f64,
    /// Cross capacitance between the halves, farads.
    pub c_x: f64,
    /// Feedline coupling capacitance at node a, farads.
    pub c_ca: f64,
    /// Feedline coupling capacitance at node b, farads.
    pub c_cb: f64,
    /// Inductance per meander half, henries.
    pub inductance: f64,
    /// Shared tail inductance to ground, henries.
    pub tail_inductance: f64,
}

impl CircuitDesign {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("width", self.width),
            ("c_a", self.c_a),
            ("c_b", self.c_b),
            ("inductance", self.inductance),
        ];
        for (field, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{}: {field} must be positive, got {value:e}",
                    self.name
                )));
            }
        }
        let nonnegative = [
            ("c_x", self.c_x),
            ("c_ca", self.c_ca),
            ("c_cb", self.c_cb),
            ("tail_inductance", self.tail_inductance),
        ];
        for (field, value) in nonnegative {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{}: {field} must be nonnegative, got {value:e}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// The 2×2 circuit matrices, plus the meander inductance retained for
/// attaching the differential-mode impedance Z = L·ω.
#[derive(Debug, Clone)]
pub struct TwoNodeMatrices {
    /// Capacitance matrix, farads.
    pub cmat: Matrix2<f64>,
    /// Inverse-inductance matrix, 1/henries.
    pub linv: Matrix2<f64>,
    /// Inductance per meander half, henries.
    pub meander_inductance: f64,
}

/// Delta-network inductances from the star elimination. The a–b branch is
/// stored by its inverse so the no-tail limit (L_3 → ∞) stays representable.
#[derive(Debug, Clone, Copy)]
pub struct DeltaInductances {
    /// Node-a branch to ground, henries.
    pub l1: f64,
    /// Node-b branch to ground, henries.
    pub l2: f64,
    /// Inverse of the a–b coupling branch, 1/henries (0 when L_t = 0).
    pub l3_inv: f64,
}

impl DeltaInductances {
    /// Coupling-branch inductance, infinite when the tail vanishes.
    pub fn l3(&self) -> f64 {
        if self.l3_inv == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.l3_inv
        }
    }
}

/// Eigenmode label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeLabel {
    /// In-phase node pattern.
    Common,
    /// Out-of-phase node pattern.
    Differential,
    /// Dominated by electron motion.
    #[serde(rename = "electron")]
    ElectronLike,
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeLabel::Common => write!(f, "common"),
            ModeLabel::Differential => write!(f, "differential"),
            ModeLabel::ElectronLike => write!(f, "electron"),
        }
    }
}

/// One eigenmode. The eigenvector runs over (q_a, q_b, electron displacements
/// if present) in energy-weighted coordinates (see [`crate::linalg::solve_modes`]),
/// unit norm, first non-negligible entry positive. For symmetric circuits the
/// circuit part is exactly (1,±1)/√2.
#[derive(Debug, Clone)]
pub struct Mode {
    /// Eigenfrequency, hertz.
    pub frequency: f64,
    pub eigenvector: DVector<f64>,
    pub label: ModeLabel,
    /// Mode impedance L·ω, ohms; populated for differential modes.
    pub impedance: Option<f64>,
}

/// Exact and approximate common-differential splittings, hertz.
#[derive(Debug, Clone, Copy)]
pub struct ModeSplitting {
    /// f_c − f_d from the eigenmode solve.
    pub exact: f64,
    /// First-order estimate (1/2π√(LC))·(C_x/C − L_t/L).
    pub approx: f64,
}

/// Star-to-delta transform of the two meander inductances and the shared tail.
///
/// With P = L_aL_b + L_aL_t + L_bL_t: L_1 = P/L_b, L_2 = P/L_a, 1/L_3 = L_t/P.
pub fn ydelta_transform(l_a: f64, l_b: f64, l_t: f64) -> Result<DeltaInductances> {
    if !(l_a > 0.0) || !(l_b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "meander inductances must be positive, got L_a = {l_a:e}, L_b = {l_b:e}"
        )));
    }
    if !(l_t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tail inductance must be nonnegative, got {l_t:e}"
        )));
    }
    let p = l_a * l_b + l_a * l_t + l_b * l_t;
    Ok(DeltaInductances {
        l1: p / l_b,
        l2: p / l_a,
        l3_inv: l_t / p,
    })
}

/// Builds the γ-discounted circuit matrices; γ multiplies every entry,
/// including the folded feedline capacitances.
pub fn build_matrices(
    design: &CircuitDesign,
    include_feedline: bool,
    gamma: f64,
) -> Result<TwoNodeMatrices> {
    build_matrices_with(design, include_feedline, gamma, true)
}

/// As [`build_matrices`], with a switch excluding the folded feedline
/// capacitances from the γ discount (they are then added undiscounted).
pub fn build_matrices_with(
    design: &CircuitDesign,
    include_feedline: bool,
    gamma: f64,
    discount_feedline: bool,
) -> Result<TwoNodeMatrices> {
    design.validate()?;
    if !(GAMMA_MIN..=GAMMA_MAX).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in [(2/pi)^2, 1] = [{GAMMA_MIN:.6}, 1], got {gamma}"
        )));
    }
    let (feed_a, feed_b) = if include_feedline {
        (design.c_ca, design.c_cb)
    } else {
        (0.0, 0.0)
    };
    let (diag_a, diag_b) = if discount_feedline {
        (
            gamma * (design.c_a + feed_a + design.c_x),
            gamma * (design.c_b + feed_b + design.c_x),
        )
    } else {
        (
            gamma * (design.c_a + design.c_x) + feed_a,
            gamma * (design.c_b + design.c_x) + feed_b,
        )
    };
    let off = -gamma * design.c_x;
    let cmat = Matrix2::new(diag_a, off, off, diag_b);

    let delta = ydelta_transform(design.inductance, design.inductance, design.tail_inductance)?;
    let linv = Matrix2::new(
        1.0 / delta.l1 + delta.l3_inv,
        -delta.l3_inv,
        -delta.l3_inv,
        1.0 / delta.l2 + delta.l3_inv,
    );
    Ok(TwoNodeMatrices {
        cmat,
        linv,
        meander_inductance: design.inductance,
    })
}

/// Solves ω²q = L⁻¹C⁻¹q for the two circuit modes, sorted by frequency.
pub fn eigenmodes(mats: &TwoNodeMatrices) -> Result<Vec<Mode>> {
    let cinv = invert_cmat(&mats.cmat)?;
    let linv = DMatrix::from_row_slice(
        2,
        2,
        &[
            mats.linv[(0, 0)],
            mats.linv[(0, 1)],
            mats.linv[(1, 0)],
            mats.linv[(1, 1)],
        ],
    );
    let cinv_d = DMatrix::from_row_slice(
        2,
        2,
        &[cinv[(0, 0)], cinv[(0, 1)], cinv[(1, 0)], cinv[(1, 1)]],
    );
    let sol = solve_modes(&linv, &cinv_d)?;
    sol.omega_sq
        .iter()
        .zip(sol.vectors)
        .map(|(&w2, v)| {
            let omega = w2.sqrt();
            let label = classify_mode(&v)?;
            Ok(Mode {
                frequency: omega / (2.0 * PI),
                impedance: (label == ModeLabel::Differential)
                    .then_some(mats.meander_inductance * omega),
                eigenvector: v,
                label,
            })
        })
        .collect()
}

/// Explicit 2×2 inverse of the capacitance matrix, rejecting non-positive-definite input.
pub(crate) fn invert_cmat(cmat: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let det = cmat[(0, 0)] * cmat[(1, 1)] - cmat[(0, 1)] * cmat[(1, 0)];
    if !(cmat[(0, 0)] > 0.0) || !(det > 0.0) {
        return Err(Error::InvalidParameter(
            "capacitance matrix is not positive definite".into(),
        ));
    }
    Ok(Matrix2::new(
        cmat[(1, 1)] / det,
        -cmat[(0, 1)] / det,
        -cmat[(1, 0)] / det,
        cmat[(0, 0)] / det,
    ))
}

/// Labels an eigenvector by its circuit-subspace projections: common when the
/// (1,1) projection dominates the (1,−1) projection, electron-like when the
/// circuit entries hold less than half the total weight.
pub fn classify_mode(eigenvector: &DVector<f64>) -> Result<ModeLabel> {
    if eigenvector.len() < 2 {
        return Err(Error::InvalidParameter(
            "eigenvector needs at least the two circuit entries".into(),
        ));
    }
    let total = eigenvector.norm_squared();
    if total == 0.0 {
        return Err(Error::InvalidParameter("zero eigenvector".into()));
    }
    let (qa, qb) = (eigenvector[0], eigenvector[1]);
    if eigenvector.len() > 2 && (qa * qa + qb * qb) / total < 0.5 {
        return Ok(ModeLabel::ElectronLike);
    }
    if (qa + qb).abs() >= (qa - qb).abs() {
        Ok(ModeLabel::Common)
    } else {
        Ok(ModeLabel::Differential)
    }
}

/// Closed-form symmetric-circuit frequencies:
/// f_c = 1/(2π√((L+2L_t)C)), f_d = 1/(2π√(L(C+2C_x))).
pub fn symmetric_frequencies(l: f64, c: f64, l_t: f64, c_x: f64) -> Result<(f64, f64)> {
    if !(l > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "L and C must be positive, got L = {l:e}, C = {c:e}"
        )));
    }
    if !(l_t >= 0.0) || !(c_x >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "L_t and C_x must be nonnegative, got L_t = {l_t:e}, C_x = {c_x:e}"
        )));
    }
    let f_c = 1.0 / (2.0 * PI * ((l + 2.0 * l_t) * c).sqrt());
    let f_d = 1.0 / (2.0 * PI * (l * (c + 2.0 * c_x)).sqrt());
    Ok((f_c, f_d))
}

/// Finds the (common, differential) pair among two circuit modes. When both
/// carry the same label (near-degenerate vectors), the mode with the larger
/// in-phase projection is taken as common.
pub(crate) fn labeled_pair(modes: &[Mode]) -> (&Mode, &Mode) {
    debug_assert_eq!(modes.len(), 2);
    let (a, b) = (&modes[0], &modes[1]);
    if a.label != b.label {
        if a.label == ModeLabel::Common {
            (a, b)
        } else {
            (b, a)
        }
    } else {
        let in_phase = |m: &Mode| (m.eigenvector[0] + m.eigenvector[1]).abs();
        if in_phase(a) >= in_phase(b) {
            (a, b)
        } else {
            (b, a)
        }
    }
}

/// Common-differential splitting of a feedline-folded, γ-discounted design:
/// the exact eigenmode difference f_c − f_d next to the first-order estimate
/// (1/2π√(LC))·(C_x/C − L_t/L), C being the mean γ-discounted diagonal
/// capacitance including the folded feedline.
pub fn mode_splitting(design: &CircuitDesign, gamma: f64) -> Result<ModeSplitting> {
    let mats = build_matrices(design, true, gamma)?;
    let modes = eigenmodes(&mats)?;
    let (common, differential) = labeled_pair(&modes);
    let exact = common.frequency - differential.frequency;

    let c_mean = gamma * 0.5 * ((design.c_a + design.c_ca) + (design.c_b + design.c_cb));
    let c_x = gamma * design.c_x;
    let f_lc = 1.0 / (2.0 * PI * (design.inductance * c_mean).sqrt());
    let approx = f_lc * (c_x / c_mean - design.tail_inductance / design.inductance);
    Ok(ModeSplitting { exact, approx })
}

/// Differential-mode impedance two ways: dynamic Z = L·2πf_d and the
/// closed-form √(L/(C+2C_x)) on the γ-discounted symmetrized capacitances.
/// They coincide only for the ideal symmetric circuit.
pub fn differential_impedance(design: &CircuitDesign, gamma: f64, f_d: f64) -> Result<(f64, f64)> {
    design.validate()?;
    if !(f_d > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "differential frequency must be positive, got {f_d:e}"
        )));
    }
    let z_dyn = design.inductance * 2.0 * PI * f_d;
    let c_mean = gamma * 0.5 * ((design.c_a + design.c_ca) + (design.c_b + design.c_cb));
    let c_x = gamma * design.c_x;
    let z_closed = (design.inductance / (c_mean + 2.0 * c_x)).sqrt();
    Ok((z_dyn, z_closed))
}

/// Measured-scale reference design shared by test modules.
#[cfg(test)]
pub(crate) fn r1_design() -> CircuitDesign {
    CircuitDesign {
        name: "R1".into(),
        length: 1.08e-3,
        width: 1.6e-6,
        c_a: 21.6e-15,
        c_b: 21.8e-15,
        c_x: 1.70e-15,
        c_ca: 0.6e-15,
        c_cb: 0.3e-15,
        inductance: 117.1e-9,
        tail_inductance: 6.5e-9,
    }
}
