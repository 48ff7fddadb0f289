//! Electrons in an electrostatic dot coupled to the resonator pair:
//! equilibrium configurations, pairwise Coulomb stiffness coefficients,
//! lever-arm couplings, coupled electron-circuit eigenmodes, dispersive
//! shifts, avoided crossings, and the analytic coupling rate.
//!
//! Coordinates are ordered (q_a, q_b, δx_1..δx_n, δy_1..δy_n); eigenvectors
//! come out of the shared energy-weighted solver, so circuit and electron
//! entries are directly comparable.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::circuit::{
    build_matrices, classify_mode, eigenmodes, labeled_pair, CircuitDesign, Mode, ModeLabel,
    TwoNodeMatrices,
};
use crate::constants::{COULOMB_PREFACTOR, ELECTRON_MASS, ELEMENTARY_CHARGE};
use crate::error::{Error, Result};
use crate::linalg::{golden_section_min, solve_modes};

use std::f64::consts::PI;

/// Equilibrium-gradient tolerance relative to the characteristic force
/// m_e·ω_ref²·d_ref.
pub const GRADIENT_REL_TOL: f64 = 1e-9;

/// Minimum squared overlap with the bare differential mode for unambiguous
/// tracking; hybrids at resonance sit at 0.5 and are rejected.
pub const DIFFERENTIAL_OVERLAP_MIN: f64 = 0.6;

/// Electrostatic trap curvature at the dot.
#[derive(Debug, Clone, Copy)]
pub enum DotPotential {
    /// In-plane harmonic confinement, −e·V_dc = ½·m_e·ω_dot²·x².
    Harmonic1d {
        /// Trap curvature, rad/s.
        omega_dot: f64,
    },
    /// Full quadratic confinement from the DC potential curvatures
    /// ∂²V_dc/∂x∂x etc., volts/meter².
    Quadratic2d { v_xx: f64, v_yy: f64, v_xy: f64 },
}

impl DotPotential {
    /// Number of motional coordinates per electron.
    pub fn dims(&self) -> usize {
        match self {
            DotPotential::Harmonic1d { .. } => 1,
            DotPotential::Quadratic2d { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DotPotential::Harmonic1d { omega_dot } => {
                if !(omega_dot > 0.0) || !omega_dot.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "trap curvature must be positive, got {omega_dot:e} rad/s"
                    )));
                }
            }
            DotPotential::Quadratic2d { v_xx, v_yy, v_xy } => {
                if !(v_xx.is_finite() && v_yy.is_finite() && v_xy.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "trap curvatures must be finite".into(),
                    ));
                }
                let h_xx = -ELEMENTARY_CHARGE * v_xx;
                let h_yy = -ELEMENTARY_CHARGE * v_yy;
                let h_xy = -ELEMENTARY_CHARGE * v_xy;
                if !(h_xx > 0.0 && h_xx * h_yy - h_xy * h_xy > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "trap is not confining: curvatures ({v_xx:e}, {v_yy:e}, {v_xy:e}) V/m^2"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-electron confinement stiffness, the Hessian of −e·V_dc, N/m.
    fn stiffness(&self) -> DMatrix<f64> {
        match *self {
            DotPotential::Harmonic1d { omega_dot } => {
                DMatrix::from_element(1, 1, ELECTRON_MASS * omega_dot * omega_dot)
            }
            DotPotential::Quadratic2d { v_xx, v_yy, v_xy } => {
                let e = ELEMENTARY_CHARGE;
                DMatrix::from_row_slice(2, 2, &[-e * v_xx, -e * v_xy, -e * v_xy, -e * v_yy])
            }
        }
    }

    /// Curvature frequency of the softest confinement direction, rad/s.
    fn omega_ref(&self) -> f64 {
        match *self {
            DotPotential::Harmonic1d { omega_dot } => omega_dot,
            DotPotential::Quadratic2d { .. } => {
                let h = self.stiffness();
                let mean = 0.5 * (h[(0, 0)] + h[(1, 1)]);
                let disc = (0.25 * (h[(0, 0)] - h[(1, 1)]).powi(2) + h[(0, 1)].powi(2)).sqrt();
                ((mean - disc) / ELECTRON_MASS).sqrt()
            }
        }
    }
}

/// Characteristic two-electron spacing in a harmonic trap of curvature
/// omega, (e²/(2πε₀·m_e·ω²))^{1/3}, meters.
pub fn pair_separation(omega: f64) -> f64 {
    (2.0 * COULOMB_PREFACTOR / (ELECTRON_MASS * omega * omega)).cbrt()
}

/// Static electron arrangement in the dot.
#[derive(Debug, Clone)]
pub struct ElectronConfiguration {
    pub n: usize,
    /// (x, y) per electron, meters; y = 0 throughout for dims = 1.
    pub positions: Vec<(f64, f64)>,
    /// Motional coordinates per electron, 1 or 2.
    pub dims: usize,
}

impl ElectronConfiguration {
    /// Largest residual restoring-force component at the stored positions,
    /// as a fraction of the characteristic force m_e·ω_ref²·d_ref.
    pub fn max_residual_force(&self, potential: &DotPotential) -> Result<f64> {
        potential.validate()?;
        let model = EnergyModel::new(potential, self.n);
        let r = self.flattened(potential.dims())?;
        let g = model.gradient(&r);
        Ok(g.amax() / model.force_scale)
    }

    fn flattened(&self, dims: usize) -> Result<DVector<f64>> {
        if self.positions.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "{} positions for n = {}",
                self.positions.len(),
                self.n
            )));
        }
        let mut r = DVector::zeros(dims * self.n);
        for (i, &(x, y)) in self.positions.iter().enumerate() {
            r[i] = x;
            if dims == 2 {
                r[self.n + i] = y;
            }
        }
        Ok(r)
    }
}

/// Coupling-field derivatives at one electron's position: ∂α_p/∂x and
/// ∂α_p/∂y for each plate p, inverse meters.
#[derive(Debug, Clone, Copy, Default)]
pub struct ElectronArms {
    pub dalpha_a_dx: f64,
    pub dalpha_a_dy: f64,
    pub dalpha_b_dx: f64,
    pub dalpha_b_dy: f64,
}

/// Lever-arm derivatives for every electron in the dot.
#[derive(Debug, Clone)]
pub struct LeverArms {
    pub per_electron: Vec<ElectronArms>,
}

impl LeverArms {
    /// Centered-dot idealization: a uniform field ℰ_x per volt, equal and
    /// opposite between the plates, with no y component.
    pub fn antisymmetric_x(e_x: f64, n: usize) -> Result<Self> {
        if !e_x.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "field per volt must be finite, got {e_x:e}"
            )));
        }
        Ok(Self {
            per_electron: vec![
                ElectronArms {
                    dalpha_a_dx: e_x,
                    dalpha_b_dx: -e_x,
                    ..Default::default()
                };
                n
            ],
        })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            per_electron: vec![ElectronArms::default(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.per_electron.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_electron.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.per_electron.iter().enumerate() {
            let finite = a.dalpha_a_dx.is_finite()
                && a.dalpha_a_dy.is_finite()
                && a.dalpha_b_dx.is_finite()
                && a.dalpha_b_dy.is_finite();
            if !finite {
                return Err(Error::InvalidParameter(format!(
                    "lever arms of electron {i} are not finite"
                )));
            }
        }
        Ok(())
    }
}

/// Pairwise Coulomb stiffness coefficients, newtons/meter. All three
/// matrices are symmetric with zero diagonal.
#[derive(Debug, Clone)]
pub struct CoulombCouplings {
    pub kplus: DMatrix<f64>,
    pub kminus: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

/// Charge-displacement couplings per electron: the capacitance-matrix inverse
/// applied to that electron's lever-arm derivatives, 1/(farad·meter).
#[derive(Debug, Clone)]
pub struct BetaCoefficients {
    pub x_a: Vec<f64>,
    pub x_b: Vec<f64>,
    pub y_a: Vec<f64>,
    pub y_b: Vec<f64>,
}

/// Assembled (2 + dims·n) generalized inverse-inductance and inverse-
/// capacitance matrices of the coupled electron-circuit system.
#[derive(Debug, Clone)]
pub struct CoupledSystemMatrices {
    /// Block diagonal: circuit 2×2 inverse inductances, then 1/m_e per
    /// electron coordinate.
    pub linv: DMatrix<f64>,
    /// Circuit inverse capacitances, electron stiffness block, and −e·β
    /// off-blocks; symmetric.
    pub cinv: DMatrix<f64>,
    pub n: usize,
    pub dims: usize,
    /// Carried through for differential-mode impedance labeling, henries.
    pub meander_inductance: f64,
}

/// Trap-curvature sweep grid, rad/s.
#[derive(Debug, Clone, Copy)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl SweepRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.stop > self.start) {
            return Err(Error::InvalidParameter(format!(
                "sweep needs 0 < start < stop, got [{:e}, {:e}]",
                self.start, self.stop
            )));
        }
        if self.points < 3 {
            return Err(Error::InvalidParameter(format!(
                "sweep needs at least 3 points, got {}",
                self.points
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points)
            .map(|k| self.start + k as f64 * step)
            .collect()
    }
}

/// Coupled modes at one trap curvature, ordered to continue the previous
/// point's branches.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// rad/s.
    pub omega_dot: f64,
    pub modes: Vec<Mode>,
}

struct EnergyModel {
    stiffness: DMatrix<f64>,
    dims: usize,
    n: usize,
    force_scale: f64,
    d_ref: f64,
}

impl EnergyModel {
    fn new(potential: &DotPotential, n: usize) -> Self {
        let omega_ref = potential.omega_ref();
        let d_ref = pair_separation(omega_ref);
        Self {
            stiffness: potential.stiffness(),
            dims: potential.dims(),
            n,
            force_scale: ELECTRON_MASS * omega_ref * omega_ref * d_ref,
            d_ref,
        }
    }

    fn coords(&self, r: &DVector<f64>, i: usize) -> (f64, f64) {
        (r[i], if self.dims == 2 { r[self.n + i] } else { 0.0 })
    }

    fn energy(&self, r: &DVector<f64>) -> f64 {
        let h = &self.stiffness;
        let mut e = 0.0;
        for i in 0..self.n {
            let (x, y) = self.coords(r, i);
            e += 0.5 * h[(0, 0)] * x * x;
            if self.dims == 2 {
                e += 0.5 * h[(1, 1)] * y * y + h[(0, 1)] * x * y;
            }
        }
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (xi, yi) = self.coords(r, i);
                let (xj, yj) = self.coords(r, j);
                let dist = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                e += COULOMB_PREFACTOR / dist;
            }
        }
        e
    }

    fn gradient(&self, r: &DVector<f64>) -> DVector<f64> {
        let h = &self.stiffness;
        let mut g = DVector::zeros(self.dims * self.n);
        for i in 0..self.n {
            let (x, y) = self.coords(r, i);
            g[i] += h[(0, 0)] * x;
            if self.dims == 2 {
                g[i] += h[(0, 1)] * y;
                g[self.n + i] += h[(0, 1)] * x + h[(1, 1)] * y;
            }
        }
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (xi, yi) = self.coords(r, i);
                let (xj, yj) = self.coords(r, j);
                let (dx, dy) = (xi - xj, yi - yj);
                let dist_cubed = (dx * dx + dy * dy).sqrt().powi(3);
                let (fx, fy) = (
                    COULOMB_PREFACTOR * dx / dist_cubed,
                    COULOMB_PREFACTOR * dy / dist_cubed,
                );
                g[i] -= fx;
                g[j] += fx;
                if self.dims == 2 {
                    g[self.n + i] -= fy;
                    g[self.n + j] += fy;
                }
            }
        }
        g
    }

    /// Barzilai-Borwein descent with Armijo backtracking; `None` when the
    /// gradient tolerance is not reached within the iteration budget.
    fn descend(&self, mut x: DVector<f64>) -> Option<(DVector<f64>, f64)> {
        let tol = GRADIENT_REL_TOL * self.force_scale;
        let mut e = self.energy(&x);
        let mut g = self.gradient(&x);
        let mut alpha = 0.1 * self.d_ref / g.amax().max(f64::MIN_POSITIVE);
        for _ in 0..20_000 {
            if g.amax() < tol {
                return Some((x, e));
            }
            let mut step = alpha;
            let mut accepted = None;
            for _ in 0..80 {
                let x_new = &x - &g * step;
                let e_new = self.energy(&x_new);
                if e_new <= e - 1e-4 * step * g.norm_squared() {
                    accepted = Some((x_new, e_new));
                    break;
                }
                step *= 0.5;
            }
            let (x_new, e_new) = accepted?;
            let g_new = self.gradient(&x_new);
            let s = &x_new - &x;
            let y = &g_new - &g;
            let sy = s.dot(&y);
            alpha = if sy > 0.0 {
                (s.norm_squared() / sy).min(1e6 * step)
            } else {
                2.0 * step
            };
            x = x_new;
            e = e_new;
            g = g_new;
        }
        None
    }

    fn seeds(&self, scale: f64) -> Vec<DVector<f64>> {
        let spacing = self.d_ref * scale;
        let mut seeds = Vec::new();
        let axis = if self.dims == 2 {
            let eig = self.stiffness.clone().symmetric_eigen();
            let soft = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
                0
            } else {
                1
            };
            (eig.eigenvectors[(0, soft)], eig.eigenvectors[(1, soft)])
        } else {
            (1.0, 0.0)
        };
        let mut line = DVector::zeros(self.dims * self.n);
        for i in 0..self.n {
            let t = (i as f64 - 0.5 * (self.n - 1) as f64) * spacing;
            line[i] = t * axis.0;
            if self.dims == 2 {
                line[self.n + i] = t * axis.1;
            }
        }
        seeds.push(line);
        if self.dims == 2 && self.n >= 2 {
            let radius = spacing * (0.5 + self.n as f64 / (2.0 * PI));
            let mut ring = DVector::zeros(2 * self.n);
            for i in 0..self.n {
                let angle = 2.0 * PI * i as f64 / self.n as f64;
                ring[i] = radius * angle.cos();
                ring[self.n + i] = radius * angle.sin();
            }
            seeds.push(ring);
        }
        seeds
    }
}

/// Minimum-energy electron arrangement: analytic for n = 1 and for a pair in
/// a 1D harmonic trap, otherwise numerical descent from deterministic line
/// and ring seeds at three length scales, keeping the lowest converged
/// energy.
pub fn equilibrium_positions(n: usize, potential: &DotPotential) -> Result<ElectronConfiguration> {
    potential.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one electron".into()));
    }
    let dims = potential.dims();
    if n == 1 {
        return Ok(ElectronConfiguration {
            n,
            positions: vec![(0.0, 0.0)],
            dims,
        });
    }
    if n == 2 {
        if let DotPotential::Harmonic1d { omega_dot } = *potential {
            let d = pair_separation(omega_dot);
            return Ok(ElectronConfiguration {
                n,
                positions: vec![(-0.5 * d, 0.0), (0.5 * d, 0.0)],
                dims,
            });
        }
    }

    let model = EnergyModel::new(potential, n);
    let mut best: Option<(DVector<f64>, f64)> = None;
    for scale in [1.0, 0.5, 2.0] {
        for seed in model.seeds(scale) {
            if let Some((x, e)) = model.descend(seed) {
                if best.as_ref().map_or(true, |(_, eb)| e < *eb) {
                    best = Some((x, e));
                }
            }
        }
    }
    let (r, _) = best.ok_or_else(|| {
        Error::Convergence(format!(
            "equilibrium search for n = {n} did not reach the gradient tolerance"
        ))
    })?;
    let mut positions: Vec<(f64, f64)> = (0..n)
        .map(|i| (r[i], if dims == 2 { r[n + i] } else { 0.0 }))
        .collect();
    positions.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(ElectronConfiguration { n, positions, dims })
}

/// Pairwise stiffness coefficients
/// k±_ij = ¼·K·(1 ± 3cos2θ_ij)/r_ij³ and l_ij = ¾·K·sin2θ_ij/r_ij³,
/// with K = e²/4πε₀ and θ_ij the pair axis angle to x.
pub fn coulomb_coefficients(config: &ElectronConfiguration) -> Result<CoulombCouplings> {
    let n = config.n;
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "pairwise coefficients need n >= 2, got {n}"
        )));
    }
    if config.positions.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} positions for n = {n}",
            config.positions.len()
        )));
    }
    let mut kplus = DMatrix::zeros(n, n);
    let mut kminus = DMatrix::zeros(n, n);
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let (xi, yi) = config.positions[i];
            let (xj, yj) = config.positions[j];
            let (dx, dy) = (xj - xi, yj - yi);
            let r_sq = dx * dx + dy * dy;
            if r_sq == 0.0 {
                return Err(Error::Singular(format!(
                    "electrons {i} and {j} are coincident"
                )));
            }
            let cos2t = (dx * dx - dy * dy) / r_sq;
            let sin2t = 2.0 * dx * dy / r_sq;
            let k_base = 0.25 * COULOMB_PREFACTOR / r_sq.sqrt().powi(3);
            kplus[(i, j)] = k_base * (1.0 + 3.0 * cos2t);
            kminus[(i, j)] = k_base * (1.0 - 3.0 * cos2t);
            l[(i, j)] = 3.0 * k_base * sin2t;
            kplus[(j, i)] = kplus[(i, j)];
            kminus[(j, i)] = kminus[(i, j)];
            l[(j, i)] = l[(i, j)];
        }
    }
    Ok(CoulombCouplings { kplus, kminus, l })
}

/// β coefficients per electron: the inverse capacitance matrix applied to
/// the plate lever-arm derivatives, e.g.
/// β_x^a = ((C_b+C_x)/D)·∂α_a/∂x + (C_x/D)·∂α_b/∂x with D = det C.
pub fn beta_coefficients(mats: &TwoNodeMatrices, arms: &LeverArms) -> Result<BetaCoefficients> {
    arms.validate()?;
    let cinv = crate::circuit::invert_cmat(&mats.cmat)?;
    let n = arms.len();
    let mut beta = BetaCoefficients {
        x_a: Vec::with_capacity(n),
        x_b: Vec::with_capacity(n),
        y_a: Vec::with_capacity(n),
        y_b: Vec::with_capacity(n),
    };
    for a in &arms.per_electron {
        beta.x_a
            .push(cinv[(0, 0)] * a.dalpha_a_dx + cinv[(0, 1)] * a.dalpha_b_dx);
        beta.x_b
            .push(cinv[(1, 0)] * a.dalpha_a_dx + cinv[(1, 1)] * a.dalpha_b_dx);
        beta.y_a
            .push(cinv[(0, 0)] * a.dalpha_a_dy + cinv[(0, 1)] * a.dalpha_b_dy);
        beta.y_b
            .push(cinv[(1, 0)] * a.dalpha_a_dy + cinv[(1, 1)] * a.dalpha_b_dy);
    }
    Ok(beta)
}

/// Electron stiffness block: confinement curvature on the diagonal plus
/// pairwise coefficients, following the convention that pair (i, j)
/// contributes +k to both diagonal entries and −k off-diagonal.
fn electron_block(
    potential: &DotPotential,
    config: &ElectronConfiguration,
) -> Result<DMatrix<f64>> {
    let n = config.n;
    let dims = potential.dims();
    let h = potential.stiffness();
    let mut a = DMatrix::zeros(dims * n, dims * n);
    for i in 0..n {
        a[(i, i)] = h[(0, 0)];
        if dims == 2 {
            a[(n + i, n + i)] = h[(1, 1)];
            a[(i, n + i)] = h[(0, 1)];
            a[(n + i, i)] = h[(0, 1)];
        }
    }
    if n >= 2 {
        let couplings = coulomb_coefficients(config)?;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                a[(i, i)] += couplings.kplus[(i, j)];
                a[(i, j)] -= couplings.kplus[(i, j)];
                if dims == 2 {
                    a[(n + i, n + i)] += couplings.kminus[(i, j)];
                    a[(n + i, n + j)] -= couplings.kminus[(i, j)];
                    a[(i, n + i)] += couplings.l[(i, j)];
                    a[(n + i, i)] += couplings.l[(i, j)];
                    a[(i, n + j)] -= couplings.l[(i, j)];
                    a[(n + j, i)] -= couplings.l[(i, j)];
                }
            }
        }
    }
    Ok(a)
}

/// Assembles the coupled generalized matrices: circuit blocks from the
/// γ-discounted, feedline-folded design, the electron stiffness block, and
/// −e·β charge-displacement couplings.
pub fn coupled_matrices(
    design: &CircuitDesign,
    gamma: f64,
    potential: &DotPotential,
    config: &ElectronConfiguration,
    arms: &LeverArms,
) -> Result<CoupledSystemMatrices> {
    potential.validate()?;
    let dims = potential.dims();
    if config.dims != dims {
        return Err(Error::InvalidParameter(format!(
            "configuration has {} coordinates per electron, potential needs {dims}",
            config.dims
        )));
    }
    if config.positions.len() != config.n {
        return Err(Error::InvalidParameter(format!(
            "{} positions for n = {}",
            config.positions.len(),
            config.n
        )));
    }
    if arms.len() != config.n {
        return Err(Error::InvalidParameter(format!(
            "{} lever-arm entries for n = {}",
            arms.len(),
            config.n
        )));
    }
    let mats = build_matrices(design, true, gamma)?;
    let cinv_circuit = crate::circuit::invert_cmat(&mats.cmat)?;
    let beta = beta_coefficients(&mats, arms)?;
    let n = config.n;
    let size = 2 + dims * n;

    let mut linv = DMatrix::zeros(size, size);
    for r in 0..2 {
        for c in 0..2 {
            linv[(r, c)] = mats.linv[(r, c)];
        }
    }
    for k in 2..size {
        linv[(k, k)] = 1.0 / ELECTRON_MASS;
    }

    let mut cinv = DMatrix::zeros(size, size);
    for r in 0..2 {
        for c in 0..2 {
            cinv[(r, c)] = cinv_circuit[(r, c)];
        }
    }
    let block = electron_block(potential, config)?;
    for r in 0..dims * n {
        for c in 0..dims * n {
            cinv[(2 + r, 2 + c)] = block[(r, c)];
        }
    }
    let e = ELEMENTARY_CHARGE;
    for i in 0..n {
        cinv[(0, 2 + i)] = -e * beta.x_a[i];
        cinv[(1, 2 + i)] = -e * beta.x_b[i];
        cinv[(2 + i, 0)] = cinv[(0, 2 + i)];
        cinv[(2 + i, 1)] = cinv[(1, 2 + i)];
        if dims == 2 {
            cinv[(0, 2 + n + i)] = -e * beta.y_a[i];
            cinv[(1, 2 + n + i)] = -e * beta.y_b[i];
            cinv[(2 + n + i, 0)] = cinv[(0, 2 + n + i)];
            cinv[(2 + n + i, 1)] = cinv[(1, 2 + n + i)];
        }
    }

    Ok(CoupledSystemMatrices {
        linv,
        cinv,
        n,
        dims,
        meander_inductance: mats.meander_inductance,
    })
}

/// Diagonalizes the coupled system; an indefinite generalized capacitance
/// signals over-strong coupling.
pub fn coupled_eigenmodes(mats: &CoupledSystemMatrices) -> Result<Vec<Mode>> {
    let sol = solve_modes(&mats.linv, &mats.cinv).map_err(|err| match err {
        Error::UnstableCircuit(msg) => Error::UnstableCoupling(msg),
        other => other,
    })?;
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

/// Normal-mode frequencies of the electrons alone (no circuit), hertz,
/// ascending.
pub fn electron_mode_frequencies(
    potential: &DotPotential,
    config: &ElectronConfiguration,
) -> Result<Vec<f64>> {
    potential.validate()?;
    if config.dims != potential.dims() {
        return Err(Error::InvalidParameter(format!(
            "configuration has {} coordinates per electron, potential needs {}",
            config.dims,
            potential.dims()
        )));
    }
    let block = electron_block(potential, config)?;
    let size = block.nrows();
    let linv = DMatrix::from_diagonal_element(size, size, 1.0 / ELECTRON_MASS);
    let sol = solve_modes(&linv, &block).map_err(|err| match err {
        Error::UnstableCircuit(msg) => Error::UnstableCoupling(msg),
        other => other,
    })?;
    Ok(sol
        .omega_sq
        .iter()
        .map(|w2| w2.sqrt() / (2.0 * PI))
        .collect())
}

fn extended_overlap_sq(mode: &Mode, circuit_vector: &DVector<f64>) -> f64 {
    let dot = mode.eigenvector[0] * circuit_vector[0] + mode.eigenvector[1] * circuit_vector[1];
    dot * dot
}

/// Differential-mode pull by n trapped electrons:
/// f_d(n electrons) − f_d(no electrons), tracked by eigenvector overlap with
/// the bare differential mode.
pub fn dispersive_shift(
    design: &CircuitDesign,
    gamma: f64,
    potential: &DotPotential,
    n: usize,
    arms: &LeverArms,
) -> Result<f64> {
    let bare = eigenmodes(&build_matrices(design, true, gamma)?)?;
    let (_, differential) = labeled_pair(&bare);
    let config = equilibrium_positions(n, potential)?;
    let coupled = coupled_eigenmodes(&coupled_matrices(design, gamma, potential, &config, arms)?)?;
    let (best, overlap_sq) = coupled
        .iter()
        .map(|m| (m, extended_overlap_sq(m, &differential.eigenvector)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("coupled system has at least two modes");
    if overlap_sq < DIFFERENTIAL_OVERLAP_MIN {
        return Err(Error::NearResonance(format!(
            "best differential overlap^2 = {overlap_sq:.3}, below {DIFFERENTIAL_OVERLAP_MIN}; \
             the electron is too close to resonance to track the circuit mode"
        )));
    }
    Ok(best.frequency - differential.frequency)
}

/// Gap between the two hybridizing branches at one trap curvature: the modes
/// with the largest combined differential-overlap and electron weight.
fn hybrid_gap(
    design: &CircuitDesign,
    gamma: f64,
    arms: &LeverArms,
    differential: &DVector<f64>,
    omega_dot: f64,
) -> Result<f64> {
    let potential = DotPotential::Harmonic1d { omega_dot };
    let config = equilibrium_positions(arms.len(), &potential)?;
    let modes = coupled_eigenmodes(&coupled_matrices(
        design, gamma, &potential, &config, arms,
    )?)?;
    let mut scored: Vec<(f64, f64)> = modes
        .iter()
        .map(|m| {
            let electron_weight: f64 = m.eigenvector.iter().skip(2).map(|v| v * v).sum();
            (
                extended_overlap_sq(m, differential) + electron_weight,
                m.frequency,
            )
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok((scored[0].1 - scored[1].1).abs())
}

/// Minimum splitting between the hybridizing electron and differential
/// branches over a trap-curvature sweep, golden-section refined around the
/// coarse minimum. Returns (gap in hertz, curvature at the minimum in rad/s).
pub fn avoided_crossing_gap(
    design: &CircuitDesign,
    gamma: f64,
    arms: &LeverArms,
    sweep: &SweepRange,
) -> Result<(f64, f64)> {
    sweep.validate()?;
    arms.validate()?;
    if arms.is_empty() {
        return Err(Error::InvalidParameter(
            "need lever arms for at least one electron".into(),
        ));
    }
    let bare = eigenmodes(&build_matrices(design, true, gamma)?)?;
    let (_, differential) = labeled_pair(&bare);
    let target = differential.eigenvector.clone();

    let grid = sweep.grid();
    let gaps: Vec<f64> = grid
        .par_iter()
        .map(|&omega| hybrid_gap(design, gamma, arms, &target, omega))
        .collect::<Result<Vec<f64>>>()?;
    let i_min = gaps
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    if i_min == 0 || i_min == grid.len() - 1 {
        return Err(Error::InvalidParameter(format!(
            "sweep does not bracket the gap minimum (coarse minimum at {:e} rad/s is an endpoint)",
            grid[i_min]
        )));
    }
    let (omega_min, gap) = golden_section_min(
        |omega| hybrid_gap(design, gamma, arms, &target, omega).unwrap_or(f64::INFINITY),
        grid[i_min - 1],
        grid[i_min + 1],
        1e-6 * grid[i_min],
    );
    Ok((gap, omega_min))
}

/// Analytic electron-photon coupling rate
/// g = ½·e·ℰ_x·ω₀·√(Z_res/(m_e·ω_e)), optionally √2-enhanced for the
/// two-plate drive of this geometry; returned as g/2π in hertz.
pub fn coupling_strength_analytic(
    e_x: f64,
    f0: f64,
    z_res: f64,
    f_e: f64,
    scr_factor: bool,
) -> Result<f64> {
    if !(e_x > 0.0 && f0 > 0.0 && z_res > 0.0 && f_e > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "all inputs must be positive, got field {e_x:e}, f0 {f0:e}, Z {z_res:e}, f_e {f_e:e}"
        )));
    }
    let omega0 = 2.0 * PI * f0;
    let omega_e = 2.0 * PI * f_e;
    let mut g = 0.5
        * ELEMENTARY_CHARGE
        * e_x
        * omega0
        * (z_res / (ELECTRON_MASS * omega_e)).sqrt();
    if scr_factor {
        g *= std::f64::consts::SQRT_2;
    }
    Ok(g / (2.0 * PI))
}

/// Coupled modes across a trap-curvature sweep with branch identity carried
/// by maximum eigenvector overlap between consecutive points, so branches
/// stay labeled through crossings where plain frequency ordering would swap
/// them.
pub fn sweep_coupled_modes(
    design: &CircuitDesign,
    gamma: f64,
    n: usize,
    arms: &LeverArms,
    sweep: &SweepRange,
) -> Result<Vec<SweepPoint>> {
    sweep.validate()?;
    if arms.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} lever-arm entries for n = {n}",
            arms.len()
        )));
    }
    let grid = sweep.grid();
    let mut points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&omega_dot| {
            let potential = DotPotential::Harmonic1d { omega_dot };
            let config = equilibrium_positions(n, &potential)?;
            let modes = coupled_eigenmodes(&coupled_matrices(
                design, gamma, &potential, &config, arms,
            )?)?;
            Ok(SweepPoint { omega_dot, modes })
        })
        .collect::<Result<Vec<SweepPoint>>>()?;

    for k in 1..points.len() {
        let prev: Vec<DVector<f64>> = points[k - 1]
            .modes
            .iter()
            .map(|m| m.eigenvector.clone())
            .collect();
        let mut remaining: Vec<Option<Mode>> =
            std::mem::take(&mut points[k].modes).into_iter().map(Some).collect();
        let mut ordered = Vec::with_capacity(remaining.len());
        for p in &prev {
            let best = remaining
                .iter()
                .enumerate()
                .filter_map(|(i, m)| {
                    m.as_ref()
                        .map(|m| (i, m.eigenvector.dot(p).powi(2)))
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap();
            ordered.push(remaining[best].take().unwrap());
        }
        points[k].modes = ordered;
    }
    Ok(points)
}
