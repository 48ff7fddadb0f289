//! Hanger-geometry transmission resonances: the complex S21 dip model, noisy
//! trace synthesis, complex least-squares fitting, circuit-model coupling-Q
//! prediction, and photon-number calibration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::circuit::ModeLabel;
use crate::constants::HBAR;
use crate::error::{Error, Result};

use std::f64::consts::PI;

/// Complex transmission samples on a strictly increasing frequency grid.
#[derive(Debug, Clone)]
pub struct S21Trace {
    /// Hertz.
    pub frequencies: Vec<f64>,
    /// Linear-amplitude complex transmission.
    pub values: Vec<Complex64>,
    /// Probe power at the feedline, watts.
    pub power_in: Option<f64>,
}

impl S21Trace {
    pub fn new(
        frequencies: Vec<f64>,
        values: Vec<Complex64>,
        power_in: Option<f64>,
    ) -> Result<Self> {
        if frequencies.len() < 32 {
            return Err(Error::InvalidParameter(format!(
                "trace needs at least 32 samples, got {}",
                frequencies.len()
            )));
        }
        if frequencies.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} frequencies vs {} values",
                frequencies.len(),
                values.len()
            )));
        }
        for pair in frequencies.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::InvalidParameter(format!(
                    "frequencies must be strictly increasing, got {:e} after {:e}",
                    pair[1], pair[0]
                )));
            }
        }
        if let Some(p) = power_in {
            if !(p > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "probe power must be positive, got {p:e}"
                )));
            }
        }
        Ok(Self {
            frequencies,
            values,
            power_in,
        })
    }

    pub fn span(&self) -> f64 {
        self.frequencies[self.frequencies.len() - 1] - self.frequencies[0]
    }
}

/// Per-parameter standard errors from the linearized covariance.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitUncertainties {
    pub f0: f64,
    pub qi: f64,
    pub qc: f64,
    pub phi: f64,
}

/// Resonance parameters: extraction result, or input to the model/synthesizer.
#[derive(Debug, Clone)]
pub struct ResonanceFit {
    /// Resonance frequency, hertz.
    pub f0: f64,
    /// Internal quality factor.
    pub qi: f64,
    /// Coupling quality factor.
    pub qc: f64,
    /// Impedance-mismatch rotation, radians, in (−π, π].
    pub phi: f64,
    /// RMS complex residual per sample against the fitted model.
    pub residual_rms: f64,
    pub uncertainties: FitUncertainties,
}

impl ResonanceFit {
    /// Bare parameter set (zero residual bookkeeping), validated.
    pub fn params(f0: f64, qi: f64, qc: f64, phi: f64) -> Result<Self> {
        if !(f0 > 0.0) || !(qi > 0.0) || !(qc > 0.0) || !phi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "resonance parameters must be positive (f0 = {f0:e}, Qi = {qi:e}, Qc = {qc:e}) with finite phi"
            )));
        }
        Ok(Self {
            f0,
            qi,
            qc,
            phi: wrap_phi(phi),
            residual_rms: 0.0,
            uncertainties: FitUncertainties::default(),
        })
    }

    /// Loaded quality factor 1/(1/Qi + 1/Qc).
    pub fn q_loaded(&self) -> f64 {
        1.0 / (1.0 / self.qi + 1.0 / self.qc)
    }
}

/// Fit configuration beyond the data itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Adds a cable-delay phase e^{i2πτ(f−f_ref)} nuisance parameter.
    pub cable_delay: bool,
}

/// Coupling-Q prediction; a vanishing effective coupling capacitance gives a
/// distinguished uncoupled result instead of an infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingQ {
    Finite(f64),
    Uncoupled,
}

impl CouplingQ {
    pub fn value(&self) -> Option<f64> {
        match self {
            CouplingQ::Finite(q) => Some(*q),
            CouplingQ::Uncoupled => None,
        }
    }
}

fn wrap_phi(phi: f64) -> f64 {
    let p = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if p == -PI {
        PI
    } else {
        p
    }
}

/// Hanger transmission S21 = (1 + (Qi/Qc)·e^{iφ}/(1 + 2iQi(f−f0)/f0))⁻¹.
pub fn s21_model(f: f64, params: &ResonanceFit) -> Complex64 {
    let delta = (f - params.f0) / params.f0;
    let u = Complex64::new(1.0, 2.0 * params.qi * delta);
    let b = Complex64::from_polar(params.qi / params.qc, params.phi) / u;
    (Complex64::new(1.0, 0.0) + b).inv()
}

/// Samples the model on an even grid centered on f0 with additive complex
/// Gaussian noise of the given RMS (per-quadrature σ = rms/√2), deterministic
/// per seed.
pub fn synth_trace(
    params: &ResonanceFit,
    span: f64,
    n_points: usize,
    noise_rms: f64,
    seed: u64,
) -> Result<S21Trace> {
    if !(span > 0.0) || span >= 2.0 * params.f0 {
        return Err(Error::InvalidParameter(format!(
            "span must be positive and below 2·f0, got {span:e}"
        )));
    }
    if n_points < 32 {
        return Err(Error::InvalidParameter(format!(
            "need at least 32 points, got {n_points}"
        )));
    }
    if !(noise_rms >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise RMS must be nonnegative, got {noise_rms:e}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = noise_rms / std::f64::consts::SQRT_2;
    let start = params.f0 - span / 2.0;
    let step = span / (n_points - 1) as f64;
    let mut frequencies = Vec::with_capacity(n_points);
    let mut values = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let f = start + k as f64 * step;
        let re_noise: f64 = rng.sample(StandardNormal);
        let im_noise: f64 = rng.sample(StandardNormal);
        frequencies.push(f);
        values.push(s21_model(f, params) + Complex64::new(sigma * re_noise, sigma * im_noise));
    }
    S21Trace::new(frequencies, values, None)
}

/// Divides out the off-resonant baseline: magnitude from the median |S21| of
/// the outer 10% of samples, phase from their complex mean. Returns the
/// normalized values and the divided-out baseline.
fn normalize_baseline(trace: &S21Trace) -> (Vec<Complex64>, Complex64) {
    let n = trace.values.len();
    let edge = (n / 20).max(1);
    let outer: Vec<Complex64> = trace.values[..edge]
        .iter()
        .chain(trace.values[n - edge..].iter())
        .copied()
        .collect();
    let mut mags: Vec<f64> = outer.iter().map(|v| v.norm()).collect();
    mags.sort_by(f64::total_cmp);
    let mid = mags.len() / 2;
    let mag = if mags.len() % 2 == 0 {
        0.5 * (mags[mid - 1] + mags[mid])
    } else {
        mags[mid]
    };
    let mean: Complex64 = outer.iter().sum::<Complex64>() / outer.len() as f64;
    let phase = if mean.norm() > 0.0 { mean.arg() } else { 0.0 };
    let baseline = if mag > 0.0 {
        Complex64::from_polar(mag, phase)
    } else {
        Complex64::new(1.0, 0.0)
    };
    (trace.values.iter().map(|v| v / baseline).collect(), baseline)
}

/// Kasa algebraic circle fit; returns the center.
fn circle_center(points: &[Complex64]) -> Option<Complex64> {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy, mut sxz, mut syz, mut sz) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (x, y) = (p.re, p.im);
        let z = x * x + y * y;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        sxz += x * z;
        syz += y * z;
        sz += z;
    }
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            2.0 * sxx,
            2.0 * sxy,
            sx,
            2.0 * sxy,
            2.0 * syy,
            sy,
            2.0 * sx,
            2.0 * sy,
            n,
        ],
    );
    let b = DVector::from_vec(vec![sxz, syz, sz]);
    let sol = a.lu().solve(&b)?;
    Some(Complex64::new(sol[0], sol[1]))
}

fn initial_estimate(frequencies: &[f64], values: &[Complex64]) -> (f64, f64, f64, f64) {
    let n = values.len();
    let (i_min, min_mag) = values
        .iter()
        .map(|v| v.norm())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let f0 = frequencies[i_min];
    let m0 = min_mag.clamp(1e-3, 0.999);

    let dip: Vec<f64> = values.iter().map(|v| 1.0 - v.norm_sqr()).collect();
    let half = dip[i_min] / 2.0;
    let span = frequencies[n - 1] - frequencies[0];
    let crossing = |from: usize, towards_right: bool| -> Option<f64> {
        let mut prev = from;
        loop {
            let next = if towards_right {
                if prev + 1 >= n {
                    return None;
                }
                prev + 1
            } else {
                if prev == 0 {
                    return None;
                }
                prev - 1
            };
            if dip[next] < half {
                let t = (half - dip[prev]) / (dip[next] - dip[prev]);
                return Some(frequencies[prev] + t * (frequencies[next] - frequencies[prev]));
            }
            prev = next;
        }
    };
    let left = crossing(i_min, false);
    let right = crossing(i_min, true);
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (f0 - l),
        (None, Some(r)) => 2.0 * (r - f0),
        (None, None) => span / 10.0,
    };
    let fwhm = fwhm.max(span / (n as f64));
    let ql = f0 / fwhm;
    let qi = ql / m0;
    let qc = ql / (1.0 - m0);

    let inverse: Vec<Complex64> = values
        .iter()
        .filter(|v| v.norm() > 1e-6)
        .map(|v| v.inv())
        .collect();
    let phi = circle_center(&inverse)
        .map(|c| (c - Complex64::new(1.0, 0.0)).arg())
        .unwrap_or(0.0);
    (f0, qi, qc, phi)
}

/// Internal parameter vector: (f0/f_ref, ln Qi, ln Qc, φ [, τ·span]).
struct LmProblem<'a> {
    frequencies: &'a [f64],
    data: &'a [Complex64],
    f_ref: f64,
    span: f64,
    cable_delay: bool,
}

impl LmProblem<'_> {
    fn n_params(&self) -> usize {
        if self.cable_delay {
            5
        } else {
            4
        }
    }

    fn model(&self, p: &DVector<f64>, f: f64) -> Complex64 {
        let f0 = p[0] * self.f_ref;
        let (qi, qc) = (p[1].exp(), p[2].exp());
        let delta = (f - f0) / f0;
        let u = Complex64::new(1.0, 2.0 * qi * delta);
        let b = Complex64::from_polar(qi / qc, p[3]) / u;
        let s = (Complex64::new(1.0, 0.0) + b).inv();
        if self.cable_delay {
            // Referenced to f_ref: the constant part of a cable phase is
            // already stripped by the baseline normalization.
            let tau = p[4] / self.span;
            s * Complex64::from_polar(1.0, 2.0 * PI * (f - self.f_ref) * tau)
        } else {
            s
        }
    }

    fn residuals(&self, p: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = self.frequencies.len();
        let mut r = DVector::zeros(2 * n);
        for (k, (&f, d)) in self.frequencies.iter().zip(self.data).enumerate() {
            let e = self.model(p, f) - d;
            r[2 * k] = e.re;
            r[2 * k + 1] = e.im;
        }
        let cost = r.norm_squared();
        (r, cost)
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let n = self.frequencies.len();
        let np = self.n_params();
        let f0 = p[0] * self.f_ref;
        let (qi, qc) = (p[1].exp(), p[2].exp());
        let mut jac = DMatrix::zeros(2 * n, np);
        for (k, &f) in self.frequencies.iter().enumerate() {
            let delta = (f - f0) / f0;
            let u = Complex64::new(1.0, 2.0 * qi * delta);
            let b = Complex64::from_polar(qi / qc, p[3]) / u;
            let s = (Complex64::new(1.0, 0.0) + b).inv();
            let s2 = -s * s;
            let delay = if self.cable_delay {
                Complex64::from_polar(1.0, 2.0 * PI * (f - self.f_ref) * p[4] / self.span)
            } else {
                Complex64::new(1.0, 0.0)
            };
            // dS/dx = -S²·dB/dx, then the delay factor multiplies through.
            let db_df0 = b * Complex64::new(0.0, 2.0 * qi) / u * (f / (f0 * f0));
            let cols = [
                s2 * db_df0 * self.f_ref,
                s2 * (b / u),
                s2 * (-b),
                s2 * (b * Complex64::new(0.0, 1.0)),
            ];
            for (j, c) in cols.iter().enumerate() {
                let c = c * delay;
                jac[(2 * k, j)] = c.re;
                jac[(2 * k + 1, j)] = c.im;
            }
            if self.cable_delay {
                let m = s * delay;
                let dm = m * Complex64::new(0.0, 2.0 * PI * (f - self.f_ref) / self.span);
                jac[(2 * k, 4)] = dm.re;
                jac[(2 * k + 1, 4)] = dm.im;
            }
        }
        jac
    }
}

/// Extracts (f0, Qi, Qc, φ) from a single-dip trace by Levenberg-Marquardt on
/// the stacked real/imaginary residuals of the hanger model, after dividing
/// out the off-resonant baseline. Initialization follows the dip geometry
/// unless `init` is supplied.
pub fn fit_resonance(trace: &S21Trace, init: Option<&ResonanceFit>) -> Result<ResonanceFit> {
    fit_resonance_with(trace, init, &FitOptions::default())
}

pub fn fit_resonance_with(
    trace: &S21Trace,
    init: Option<&ResonanceFit>,
    options: &FitOptions,
) -> Result<ResonanceFit> {
    let (values, _baseline) = normalize_baseline(trace);
    let min_mag = values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if min_mag > 0.99 {
        return Err(Error::NoResonance(format!(
            "shallowest sample is {min_mag:.4} of baseline (threshold 0.99)"
        )));
    }

    let (f0_0, qi_0, qc_0, phi_0) = match init {
        Some(given) => (given.f0, given.qi, given.qc, given.phi),
        None => initial_estimate(&trace.frequencies, &values),
    };
    if !(f0_0 > 0.0) || !(qi_0 > 0.0) || !(qc_0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fit initialization must be positive, got f0 = {f0_0:e}, Qi = {qi_0:e}, Qc = {qc_0:e}"
        )));
    }

    let problem = LmProblem {
        frequencies: &trace.frequencies,
        data: &values,
        f_ref: f0_0,
        span: trace.span(),
        cable_delay: options.cable_delay,
    };
    let mut p = DVector::zeros(problem.n_params());
    p[0] = 1.0;
    p[1] = qi_0.ln();
    p[2] = qc_0.ln();
    p[3] = phi_0;

    let (mut r, mut cost) = problem.residuals(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..200 {
        let jac = problem.jacobian(&p);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e14 {
            let mut m = a.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += lambda * a[(i, i)].max(1e-30);
            }
            let step = match m.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let p_try = &p + &step;
            let (r_try, cost_try) = problem.residuals(&p_try);
            if cost_try.is_finite() && cost_try <= cost {
                let step_rel = step
                    .iter()
                    .zip(p.iter())
                    .map(|(s, v)| s.abs() / (1.0 + v.abs()))
                    .fold(0.0_f64, f64::max);
                p = p_try;
                r = r_try;
                cost = cost_try;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if step_rel < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            break;
        }
    }

    let n = trace.frequencies.len();
    let fit = assemble_fit(&problem, &p, cost, n);
    if !converged {
        return Err(Error::FitConvergence {
            message: format!("no convergence within 200 iterations (cost {cost:.3e})"),
            best: Box::new(fit),
        });
    }
    let (f_lo, f_hi) = (trace.frequencies[0], trace.frequencies[n - 1]);
    if fit.f0 < f_lo || fit.f0 > f_hi {
        return Err(Error::FitConvergence {
            message: format!("fitted f0 = {:.6e} Hz left the trace span", fit.f0),
            best: Box::new(fit),
        });
    }
    Ok(fit)
}

fn assemble_fit(problem: &LmProblem, p: &DVector<f64>, cost: f64, n: usize) -> ResonanceFit {
    let jac = problem.jacobian(p);
    let a = jac.transpose() * &jac;
    let dof = (2 * n).saturating_sub(problem.n_params()).max(1) as f64;
    let sigma_sq = cost / dof;
    let cov = a.try_inverse();
    let std = |i: usize| -> f64 {
        cov.as_ref()
            .map(|c| (sigma_sq * c[(i, i)]).max(0.0).sqrt())
            .unwrap_or(f64::NAN)
    };
    let (qi, qc) = (p[1].exp(), p[2].exp());
    ResonanceFit {
        f0: p[0] * problem.f_ref,
        qi,
        qc,
        phi: wrap_phi(p[3]),
        residual_rms: (cost / n as f64).sqrt(),
        uncertainties: FitUncertainties {
            f0: std(0) * problem.f_ref,
            qi: qi * std(1),
            qc: qc * std(2),
            phi: std(3),
        },
    }
}

/// Coupling Q from the circuit model: C_c = (C_ca ± C_cb)/2 for the common or
/// differential mode, Qc = 1/(Z_res·Z0·C_c²·ω0²).
pub fn qc_from_circuit(
    z_res: f64,
    z0: f64,
    c_ca: f64,
    c_cb: f64,
    mode: ModeLabel,
    f0: f64,
) -> Result<CouplingQ> {
    if !(z_res > 0.0) || !(z0 > 0.0) || !(f0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "impedances and frequency must be positive, got Z_res = {z_res:e}, Z0 = {z0:e}, f0 = {f0:e}"
        )));
    }
    if !(c_ca >= 0.0) || !(c_cb >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "coupling capacitances must be nonnegative, got {c_ca:e}, {c_cb:e}"
        )));
    }
    let c_c = match mode {
        ModeLabel::Common => 0.5 * (c_ca + c_cb),
        ModeLabel::Differential => 0.5 * (c_ca - c_cb),
        ModeLabel::ElectronLike => {
            return Err(Error::InvalidParameter(
                "coupling Q is defined for circuit modes only".into(),
            ))
        }
    };
    if c_c == 0.0 {
        return Ok(CouplingQ::Uncoupled);
    }
    let omega0 = 2.0 * PI * f0;
    Ok(CouplingQ::Finite(
        1.0 / (z_res * z0 * c_c * c_c * omega0 * omega0),
    ))
}

/// Mean intra-cavity photon number n̄ = P_in·Qc/(ħω0²)·(Qi/(Qi+Qc))².
pub fn photon_number(p_in: f64, fit: &ResonanceFit) -> Result<f64> {
    if !(p_in > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "probe power must be positive, got {p_in:e}"
        )));
    }
    let omega0 = 2.0 * PI * fit.f0;
    let bracket = fit.qi / (fit.qi + fit.qc);
    Ok(p_in * fit.qc / (HBAR * omega0 * omega0) * bracket * bracket)
}
