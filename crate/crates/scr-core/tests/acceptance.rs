//! End-to-end acceptance checks, one test per criterion, each with its own
//! runtime budget. Every test prints a single PASS line (visible with
//! `--nocapture`) after asserting the criterion at its stated tolerance.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scr_core::circuit::{
    build_matrices, differential_impedance, eigenmodes, symmetric_frequencies, CircuitDesign,
    Mode, ModeLabel, GAMMA_MAX, GAMMA_MIN,
};
use scr_core::constants::COULOMB_PREFACTOR;
use scr_core::electron::{
    avoided_crossing_gap, coulomb_coefficients, coupling_strength_analytic, dispersive_shift,
    sweep_coupled_modes, DotPotential, ElectronConfiguration, LeverArms, SweepRange,
};
use scr_core::io::load_designs;
use scr_core::material::{fit_power_law, scaling_predict, sheet_inductance, ScalingBase};
use scr_core::resonance::{fit_resonance, qc_from_circuit, synth_trace, ResonanceFit};
use scr_core::verify::{fit_gamma, predict_family, splitting_report, ReferenceFrequency};

const GAMMA: f64 = 0.61;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn table_designs() -> Vec<CircuitDesign> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/tableI.json");
    load_designs(&path).expect("bundled design table loads")
}

fn design_named(designs: &[CircuitDesign], name: &str) -> CircuitDesign {
    designs
        .iter()
        .find(|d| d.name == name)
        .unwrap_or_else(|| panic!("design {name} present"))
        .clone()
}

fn symmetric_design(l: f64, c: f64, l_t: f64, c_x: f64) -> CircuitDesign {
    CircuitDesign {
        name: "sym".into(),
        length: 1.0e-3,
        width: 1.6e-6,
        c_a: c,
        c_b: c,
        c_x,
        c_ca: 0.0,
        c_cb: 0.0,
        inductance: l,
        tail_inductance: l_t,
    }
}

/// R1 with the plate and feedline capacitances symmetrized, so that exact
/// parity statements (gap identity, common-mode immunity) apply.
fn symmetrized_r1() -> CircuitDesign {
    CircuitDesign {
        name: "R1-sym".into(),
        length: 1.08e-3,
        width: 1.6e-6,
        c_a: 21.7e-15,
        c_b: 21.7e-15,
        c_x: 1.70e-15,
        c_ca: 0.45e-15,
        c_cb: 0.45e-15,
        inductance: 117.1e-9,
        tail_inductance: 6.5e-9,
    }
}

fn mode_pair(modes: &[Mode]) -> (&Mode, &Mode) {
    assert_eq!(modes.len(), 2);
    let in_phase = |m: &Mode| (m.eigenvector[0] + m.eigenvector[1]).abs();
    if modes[0].label == ModeLabel::Common
        || (modes[0].label == modes[1].label && in_phase(&modes[0]) >= in_phase(&modes[1]))
    {
        (&modes[0], &modes[1])
    } else {
        (&modes[1], &modes[0])
    }
}

fn pass(number: u32, what: &str, started: Instant, budget_s: f64) {
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs_f64(budget_s),
        "criterion {number} took {elapsed:.2?}, budget {budget_s} s"
    );
    println!("PASS {number:>2}: {what} ({elapsed:.2?})");
}

#[test]
fn c01_r1_differential_anchor() {
    let t0 = Instant::now();
    let designs = table_designs();
    let r1 = design_named(&designs, "R1");
    let modes = eigenmodes(&build_matrices(&r1, true, GAMMA).unwrap()).unwrap();
    let (_, differential) = mode_pair(&modes);
    let rel = (differential.frequency / 3.62e9 - 1.0).abs();
    assert!(
        rel < 0.05,
        "R1 differential {:.4e} Hz is {rel:.3} from 3.62 GHz",
        differential.frequency
    );
    pass(1, "R1 differential mode within 5% of 3.62 GHz", t0, 1.0);
}

#[test]
fn c02_closed_form_oracle_random_sweep() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let l = rng.random_range(50.0e-9..200.0e-9);
        let c = rng.random_range(10.0e-15..30.0e-15);
        let l_t = rng.random_range(0.0..20.0e-9);
        let c_x = rng.random_range(0.0..3.0e-15);
        let gamma = rng.random_range(GAMMA_MIN..GAMMA_MAX);
        let d = symmetric_design(l, c, l_t, c_x);
        let modes = eigenmodes(&build_matrices(&d, true, gamma).unwrap()).unwrap();
        let (common, differential) = mode_pair(&modes);
        let (f_c, f_d) = symmetric_frequencies(l, gamma * c, l_t, gamma * c_x).unwrap();
        assert!(
            (common.frequency / f_c - 1.0).abs() < 1e-10,
            "common {:.6e} vs closed form {f_c:.6e}",
            common.frequency
        );
        assert!(
            (differential.frequency / f_d - 1.0).abs() < 1e-10,
            "differential {:.6e} vs closed form {f_d:.6e}",
            differential.frequency
        );
    }
    pass(
        2,
        "symmetric eigenmodes match closed forms to 1e-10 over 100 random circuits",
        t0,
        1.0,
    );
}

#[test]
fn c03_differential_mode_ignores_tail() {
    let t0 = Instant::now();
    let mut reference = None;
    for i in 0..=20 {
        let l_t = i as f64 * 1.0e-9;
        let d = symmetric_design(117.1e-9, 21.7e-15, l_t, 1.7e-15);
        let modes = eigenmodes(&build_matrices(&d, true, GAMMA).unwrap()).unwrap();
        let (_, differential) = mode_pair(&modes);
        match reference {
            None => reference = Some(differential.frequency),
            Some(f0) => assert!(
                (differential.frequency / f0 - 1.0).abs() < 1e-10,
                "f_d moved to {:.6e} at L_t = {l_t:e}",
                differential.frequency
            ),
        }
    }
    pass(
        3,
        "differential frequency invariant to 1e-10 while the tail sweeps 0-20 nH",
        t0,
        1.0,
    );
}

#[test]
fn c04_differential_impedance_band() {
    let t0 = Instant::now();
    for d in &table_designs() {
        let modes = eigenmodes(&build_matrices(d, true, GAMMA).unwrap()).unwrap();
        let (_, differential) = mode_pair(&modes);
        let (z_dyn, _) = differential_impedance(d, GAMMA, differential.frequency).unwrap();
        assert!(
            (2.3e3..=3.0e3).contains(&z_dyn),
            "{}: Z_dyn = {z_dyn:.1} outside [2.3, 3.0] kOhm",
            d.name
        );
    }
    pass(
        4,
        "dynamic impedance of all nine designs lies in [2.3, 3.0] kOhm",
        t0,
        1.0,
    );
}

#[test]
fn c05_geometric_scaling_exponents() {
    let t0 = Instant::now();
    let mut freq_points = Vec::new();
    let mut z_points = Vec::new();
    for d in &table_designs() {
        let modes = eigenmodes(&build_matrices(d, true, GAMMA).unwrap()).unwrap();
        let (_, differential) = mode_pair(&modes);
        let (z_dyn, _) = differential_impedance(d, GAMMA, differential.frequency).unwrap();
        freq_points.push((d.length, differential.frequency));
        z_points.push((d.length, z_dyn));
    }
    let f_fit = fit_power_law(&freq_points).unwrap();
    let z_fit = fit_power_law(&z_points).unwrap();
    assert!(
        (f_fit.exponent + 0.75).abs() < 0.05,
        "frequency exponent {:.4}",
        f_fit.exponent
    );
    assert!(
        (z_fit.exponent - 0.25).abs() < 0.05,
        "impedance exponent {:.4}",
        z_fit.exponent
    );
    pass(
        5,
        "length scaling exponents are -0.75 +/- 0.05 (f_d) and +0.25 +/- 0.05 (Z)",
        t0,
        1.0,
    );
}

#[test]
fn c06_half_length_eighth_width_boost() {
    let t0 = Instant::now();
    let base = ScalingBase {
        length: 1.08e-3,
        width: 1.6e-6,
        f0: 3.62e9,
        z: 2.66e3,
    };
    let p = scaling_predict(&base, base.length / 2.0, base.width / 8.0).unwrap();
    assert!((p.f0_ratio - 1.0).abs() < 1e-12, "f0 ratio {:.15}", p.f0_ratio);
    assert!((p.z_ratio - 4.0).abs() < 1e-12, "Z ratio {:.15}", p.z_ratio);
    assert!(
        (p.z_ratio_product_form / p.z_ratio - 1.0).abs() < 1e-12,
        "product-form cross-check {:.15}",
        p.z_ratio_product_form
    );
    pass(
        6,
        "half length at an eighth width keeps f0 and quadruples Z exactly",
        t0,
        1.0,
    );
}

#[test]
fn c07_sheet_inductance_anchor() {
    let t0 = Instant::now();
    let l_sq = sheet_inductance(361.0, 2.80).unwrap();
    assert!(
        (l_sq - 178.0e-12).abs() < 1.0e-12,
        "L_sq = {:.3} pH/sq",
        l_sq * 1e12
    );
    pass(7, "361 Ohm/sq at 2.80 K gives 178 +/- 1 pH/sq", t0, 1.0);
}

#[test]
fn c08_dispersive_shift_doubles_exactly() {
    let t0 = Instant::now();
    let design = symmetrized_r1();
    let modes = eigenmodes(&build_matrices(&design, true, GAMMA).unwrap()).unwrap();
    let (_, differential) = mode_pair(&modes);
    let f_d = differential.frequency;
    let z = differential.impedance.unwrap();
    let e_x = 0.01e6;
    let f_dot = 7.0e9;
    let potential = DotPotential::Harmonic1d {
        omega_dot: TWO_PI * f_dot,
    };

    // Precondition: the probe detuning dwarfs the avoided-crossing gap.
    let g = coupling_strength_analytic(e_x, f_d, z, f_d, true).unwrap();
    assert!(
        (f_dot - f_d).abs() >= 10.0 * 2.0 * g,
        "detuning {:.3e} below 10x gap {:.3e}",
        (f_dot - f_d).abs(),
        2.0 * g
    );

    let one = dispersive_shift(
        &design,
        GAMMA,
        &potential,
        1,
        &LeverArms::antisymmetric_x(e_x, 1).unwrap(),
    )
    .unwrap();
    let two = dispersive_shift(
        &design,
        GAMMA,
        &potential,
        2,
        &LeverArms::antisymmetric_x(e_x, 2).unwrap(),
    )
    .unwrap();
    let rel = (two / (2.0 * one) - 1.0).abs();
    assert!(rel < 1e-6, "shift(2)/2shift(1) - 1 = {rel:.3e}");
    pass(
        8,
        "two-electron shift doubles the one-electron shift to 1e-6",
        t0,
        5.0,
    );
}

#[test]
fn c09_dispersive_shift_magnitude_band() {
    let t0 = Instant::now();
    let designs = table_designs();
    let r1 = design_named(&designs, "R1");
    let potential = DotPotential::Harmonic1d {
        omega_dot: TWO_PI * 7.0e9,
    };
    let arms = LeverArms::antisymmetric_x(0.25e6, 1).unwrap();
    let shift = dispersive_shift(&r1, GAMMA, &potential, 1, &arms).unwrap();
    assert!(
        (0.02e6..=0.5e6).contains(&shift.abs()),
        "one-electron shift {shift:.3e} Hz outside [0.02, 0.5] MHz"
    );
    pass(
        9,
        "one-electron shift at 0.25 per um lies in [0.02, 0.5] MHz",
        t0,
        5.0,
    );
}

#[test]
fn c10_avoided_crossing_gap_matches_analytic() {
    let t0 = Instant::now();
    let design = symmetrized_r1();
    let modes = eigenmodes(&build_matrices(&design, true, GAMMA).unwrap()).unwrap();
    let (_, differential) = mode_pair(&modes);
    let omega_d = TWO_PI * differential.frequency;
    let arms = LeverArms::antisymmetric_x(0.25e6, 1).unwrap();
    let sweep = SweepRange {
        start: 0.9 * omega_d,
        stop: 1.1 * omega_d,
        points: 41,
    };
    let (gap, omega_min) = avoided_crossing_gap(&design, GAMMA, &arms, &sweep).unwrap();
    let g = coupling_strength_analytic(
        0.25e6,
        differential.frequency,
        differential.impedance.unwrap(),
        differential.frequency,
        true,
    )
    .unwrap();
    let rel = (gap / (2.0 * g) - 1.0).abs();
    assert!(rel < 0.02, "gap {gap:.4e} vs 2g {:.4e} ({rel:.4})", 2.0 * g);
    assert!(
        (omega_min / omega_d - 1.0).abs() < 0.01,
        "gap minimum at {omega_min:.4e}, expected near {omega_d:.4e}"
    );
    assert!(
        (35.0e6..=50.0e6).contains(&g),
        "g = {:.2} MHz outside [35, 50] MHz",
        g / 1e6
    );
    pass(
        10,
        "avoided-crossing gap equals 2g within 2% with g in [35, 50] MHz",
        t0,
        10.0,
    );
}

#[test]
fn c11_common_mode_immunity_across_sweep() {
    let t0 = Instant::now();
    let design = symmetrized_r1();
    let modes = eigenmodes(&build_matrices(&design, true, GAMMA).unwrap()).unwrap();
    let (common, _) = mode_pair(&modes);
    let omega_c = TWO_PI * common.frequency;
    let arms = LeverArms::antisymmetric_x(0.25e6, 1).unwrap();
    let sweep = SweepRange {
        start: 0.6 * omega_c,
        stop: 1.6 * omega_c,
        points: 21,
    };
    let points = sweep_coupled_modes(&design, GAMMA, 1, &arms, &sweep).unwrap();
    assert_eq!(points.len(), 21);
    for point in &points {
        let in_phase = |m: &Mode| (m.eigenvector[0] + m.eigenvector[1]).abs();
        let tracked = point
            .modes
            .iter()
            .max_by(|a, b| in_phase(a).total_cmp(&in_phase(b)))
            .unwrap();
        let rel = (tracked.frequency / common.frequency - 1.0).abs();
        assert!(
            rel < 1e-10,
            "common moved by {rel:.3e} at omega_dot = {:.4e}",
            point.omega_dot
        );
    }
    pass(
        11,
        "common mode unmoved (1e-10) across the full dot-frequency sweep",
        t0,
        5.0,
    );
}

#[test]
fn c12_coupling_impedance_boost_ratio() {
    let t0 = Instant::now();
    let f0 = 3.62e9;
    let g_high = coupling_strength_analytic(0.25e6, f0, 2.5e3, f0, false).unwrap();
    let g_low = coupling_strength_analytic(0.25e6, f0, 50.0, f0, false).unwrap();
    let rel = (g_high / g_low / 50.0_f64.sqrt() - 1.0).abs();
    assert!(rel < 1e-10, "g ratio off sqrt(50) by {rel:.3e}");
    pass(
        12,
        "2.5 kOhm vs 50 Ohm boosts the coupling by exactly sqrt(50)",
        t0,
        1.0,
    );
}

#[test]
fn c13_s21_roundtrips() {
    let t0 = Instant::now();
    let p = ResonanceFit::params(5.025e9, 3.9e5, 1.0e5, 0.1).unwrap();
    let linewidth = p.f0 / p.q_loaded();

    let clean = synth_trace(&p, 3000.0 * linewidth, 30001, 0.0, 0).unwrap();
    let fit = fit_resonance(&clean, None).unwrap();
    for (got, want, label) in [
        (fit.f0, p.f0, "f0"),
        (fit.qi, p.qi, "Qi"),
        (fit.qc, p.qc, "Qc"),
        (fit.phi, p.phi, "phi"),
    ] {
        let rel = (got / want - 1.0).abs();
        assert!(rel < 1e-6, "noiseless {label}: {rel:.3e}");
    }

    for seed in 0..100u64 {
        let noisy = synth_trace(&p, 50.0 * linewidth, 40001, 0.01, seed).unwrap();
        let fit = fit_resonance(&noisy, None)
            .unwrap_or_else(|e| panic!("seed {seed} failed to fit: {e}"));
        for (got, want, label) in [
            (fit.f0, p.f0, "f0"),
            (fit.qi, p.qi, "Qi"),
            (fit.qc, p.qc, "Qc"),
            (fit.phi, p.phi, "phi"),
        ] {
            let rel = (got / want - 1.0).abs();
            assert!(rel < 0.02, "seed {seed} {label}: {rel:.3e}");
        }
    }
    pass(
        13,
        "S21 recovery: noiseless to 1e-6, 100 noisy seeds within 2%",
        t0,
        30.0,
    );
}

#[test]
fn c14_coupling_q_ordering() {
    let t0 = Instant::now();
    for d in &table_designs() {
        let modes = eigenmodes(&build_matrices(d, true, GAMMA).unwrap()).unwrap();
        let (common, differential) = mode_pair(&modes);
        let z_diff = differential.impedance.unwrap();
        let z_common = (d.inductance + 2.0 * d.tail_inductance) * TWO_PI * common.frequency;
        let qc_diff = qc_from_circuit(
            z_diff,
            50.0,
            d.c_ca,
            d.c_cb,
            ModeLabel::Differential,
            differential.frequency,
        )
        .unwrap()
        .value()
        .expect("asymmetric feedline couples the differential mode");
        let qc_common = qc_from_circuit(
            z_common,
            50.0,
            d.c_ca,
            d.c_cb,
            ModeLabel::Common,
            common.frequency,
        )
        .unwrap()
        .value()
        .expect("common mode always couples");
        assert!(
            qc_diff > qc_common,
            "{}: Qc_diff = {qc_diff:.3e} <= Qc_common = {qc_common:.3e}",
            d.name
        );
    }
    pass(
        14,
        "differential Qc exceeds common Qc for all nine designs",
        t0,
        1.0,
    );
}

#[test]
fn c15_gamma_recovery() {
    let t0 = Instant::now();
    let designs = table_designs();
    for target in [0.45, 0.61, 0.90] {
        let family = predict_family(&designs, target).unwrap();
        let mut references = Vec::new();
        for f in &family {
            references.push(ReferenceFrequency {
                name: f.name.clone(),
                label: ModeLabel::Common,
                frequency: f.common.frequency,
            });
            references.push(ReferenceFrequency {
                name: f.name.clone(),
                label: ModeLabel::Differential,
                frequency: f.differential.frequency,
            });
        }
        let report = fit_gamma(&designs, &references).unwrap();
        assert!(
            (report.gamma_star - target).abs() < 1e-4,
            "gamma* = {:.6} for target {target}",
            report.gamma_star
        );
    }
    pass(
        15,
        "discount fit recovers gamma in {0.45, 0.61, 0.90} to 1e-4",
        t0,
        5.0,
    );
}

#[test]
fn c16_splitting_sign_change_down_the_table() {
    let t0 = Instant::now();
    let designs = table_designs();
    let rows = splitting_report(&designs, GAMMA).unwrap();
    let by_name = |n: &str| rows.iter().find(|r| r.name == n).unwrap();
    assert!(
        by_name("R1").exact_hz > 0.0,
        "R1 splitting {:.3e}",
        by_name("R1").exact_hz
    );
    assert!(
        by_name("R9").exact_hz < 0.0,
        "R9 splitting {:.3e}",
        by_name("R9").exact_hz
    );
    for r in &rows {
        assert!(
            r.exact_hz.abs() < 200.0e6,
            "{}: splitting {:.3e} above 200 MHz",
            r.name,
            r.exact_hz
        );
    }
    pass(
        16,
        "splitting positive for R1, negative for R9, all below 200 MHz",
        t0,
        1.0,
    );
}

#[test]
fn c17_coulomb_coefficient_identity() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let x = rng.random_range(-2.0e-6..2.0e-6);
        let y = rng.random_range(-2.0e-6..2.0e-6);
        let dx = rng.random_range(0.1e-6..3.0e-6);
        let dy = rng.random_range(-3.0e-6..3.0e-6);
        let config = ElectronConfiguration {
            n: 2,
            positions: vec![(x, y), (x + dx, y + dy)],
            dims: 2,
        };
        let c = coulomb_coefficients(&config).unwrap();
        let r2 = dx * dx + dy * dy;
        let radial = 0.75 * COULOMB_PREFACTOR / (r2 * r2.sqrt());
        let lhs = (0.5 * (c.kplus[(0, 1)] - c.kminus[(0, 1)])).powi(2) + c.l[(0, 1)].powi(2);
        let rel = (lhs / (radial * radial) - 1.0).abs();
        assert!(rel < 1e-10, "identity off by {rel:.3e} at r = {:.3e}", r2.sqrt());
    }
    pass(
        17,
        "pairwise stiffness identity holds to 1e-10 over 1000 random pairs",
        t0,
        1.0,
    );
}
