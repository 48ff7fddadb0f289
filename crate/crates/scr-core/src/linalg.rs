//! Shared dense linear-algebra helpers: the symmetric-definite mode solver
//! and a golden-section scalar minimizer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Negative eigenvalues above this fraction of the spectral radius are treated
/// as genuine instability rather than rounding noise.
pub const NEGATIVE_EIGENVALUE_REL_TOL: f64 = 1e-9;

/// One solved mode family: ω² eigenvalues (ascending) with matching
/// energy-weighted eigenvectors (unit norm, sign-fixed).
pub struct ModeSolution {
    pub omega_sq: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
}

/// Symmetric square root of a positive semidefinite matrix.
///
/// Eigenvalues below rounding tolerance are clamped to zero; a clearly
/// negative eigenvalue is an invalid-parameter error.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let mut clamped = eig.eigenvalues.clone();
    for v in clamped.iter_mut() {
        if *v < -NEGATIVE_EIGENVALUE_REL_TOL * max {
            return Err(Error::InvalidParameter(
                "matrix square root of an indefinite matrix".into(),
            ));
        }
        *v = v.max(0.0).sqrt();
    }
    let u = eig.eigenvectors;
    Ok(&u * DMatrix::from_diagonal(&clamped) * u.transpose())
}

/// Solves ω²q = Linv·Cinv·q through the congruence S = Linv^{1/2}·Cinv·Linv^{1/2},
/// which is symmetric, so the spectrum is real by construction.
///
/// The returned eigenvectors are the eigenvectors of S: the original
/// coordinates scaled by the square root of their inductance/mass metric.
/// Entries of circuit charges and electron displacements then carry the same
/// units (√energy per frequency) and are directly comparable; the squared
/// entries give each coordinate's share of the mode's kinetic energy.
///
/// A negative ω² beyond [`NEGATIVE_EIGENVALUE_REL_TOL`] (relative to the
/// spectral radius) yields an unstable-circuit error; callers modeling the
/// coupled electron system re-map it to unstable-coupling.
pub fn solve_modes(linv: &DMatrix<f64>, cinv: &DMatrix<f64>) -> Result<ModeSolution> {
    // Rescale coordinate i by √(linv_ii) first: inverse inductances and
    // inverse masses differ by tens of orders of magnitude, which breaks the
    // eigenvectors of the unbalanced square root. The congruence preserves
    // the spectrum and the weighted-coordinate meaning of the eigenvectors.
    let n = linv.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = linv[(i, i)];
            if d > 0.0 {
                d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut a = linv.clone();
    let mut b = cinv.clone();
    for r in 0..n {
        for c in 0..n {
            a[(r, c)] /= scale[r] * scale[c];
            b[(r, c)] *= scale[r] * scale[c];
        }
    }
    let w = symmetric_sqrt(&a)?;
    let s = &w * &b * &w;
    // Symmetrize away the last bits of rounding asymmetry.
    let s = (&s + s.transpose()) * 0.5;
    let eig = s.symmetric_eigen();
    let radius = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut omega_sq = Vec::with_capacity(order.len());
    let mut vectors = Vec::with_capacity(order.len());
    for &k in &order {
        let lambda = eig.eigenvalues[k];
        if lambda < -NEGATIVE_EIGENVALUE_REL_TOL * radius {
            return Err(Error::UnstableCircuit(format!(
                "negative eigenvalue {lambda:.3e} (spectral radius {radius:.3e})"
            )));
        }
        omega_sq.push(lambda.max(0.0));
        let mut v: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        fix_sign(&mut v);
        vectors.push(v);
    }
    Ok(ModeSolution { omega_sq, vectors })
}

/// Normalizes to unit length and makes the first non-negligible entry positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let norm = v.norm();
    if norm > 0.0 {
        *v /= norm;
    }
    let max = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    for x in v.iter() {
        if x.abs() > 1e-9 * max {
            if *x < 0.0 {
                *v = -&*v;
            }
            break;
        }
    }
}

/// Golden-section minimization of a unimodal function on [a, b].
///
/// Shrinks the bracket until its width is below `tol` (absolute) and returns
/// (argmin, min). Assumes, per the callers' contracts, that the minimum is
/// bracketed; on monotone objectives it converges to the lower/upper bound.
pub fn golden_section_min(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = symmetric_sqrt(&m).unwrap();
        let back = &r * &r;
        for (x, y) in back.iter().zip(m.iter()) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn symmetric_sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(symmetric_sqrt(&m).is_err());
    }

    #[test]
    fn solve_modes_reproduces_decoupled_oscillators() {
        // Two independent LC oscillators: eigenvalues are 1/(L_i C_i).
        let linv = DMatrix::from_row_slice(2, 2, &[1.0 / 2.0e-9, 0.0, 0.0, 1.0 / 8.0e-9]);
        let cinv = DMatrix::from_row_slice(2, 2, &[1.0 / 1.0e-15, 0.0, 0.0, 1.0 / 2.0e-15]);
        let sol = solve_modes(&linv, &cinv).unwrap();
        let mut expect = [1.0 / (2.0e-9 * 1.0e-15), 1.0 / (8.0e-9 * 2.0e-15)];
        expect.sort_by(f64::total_cmp);
        assert_relative_eq!(sol.omega_sq[0], expect[0], max_relative = 1e-12);
        assert_relative_eq!(sol.omega_sq[1], expect[1], max_relative = 1e-12);
    }

    #[test]
    fn solve_modes_flags_negative_stiffness() {
        let linv = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let cinv = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            solve_modes(&linv, &cinv),
            Err(Error::UnstableCircuit(_))
        ));
    }

    #[test]
    fn sign_convention_ignores_roundoff_leading_entries() {
        let mut v = DVector::from_vec(vec![1e-18, -0.6, 0.8]);
        fix_sign(&mut v);
        assert!(v[1] > 0.0);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section_min(|x| (x - 0.3).powi(2), -1.0, 1.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(fx < 1e-15);
    }
}
