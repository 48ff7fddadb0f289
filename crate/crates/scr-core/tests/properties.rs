//! Randomized invariants. Each property states something the implementation
//! must satisfy for every input in its domain, checked against an independent
//! formulation wherever one exists (characteristic polynomial, closed forms,
//! exact scaling laws).

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use scr_core::circuit::{
    build_matrices, eigenmodes, symmetric_frequencies, CircuitDesign, GAMMA_MAX, GAMMA_MIN,
};
use scr_core::constants::COULOMB_PREFACTOR;
use scr_core::electron::{
    coulomb_coefficients, equilibrium_positions, pair_separation, DotPotential,
    ElectronConfiguration,
};
use scr_core::io::{load_designs, save_designs};
use scr_core::material::{scaling_predict, ScalingBase};
use scr_core::resonance::{fit_resonance, photon_number, synth_trace, ResonanceFit, S21Trace};

const TWO_PI: f64 = 2.0 * PI;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (a.abs() + b.abs()) + f64::MIN_POSITIVE
}

prop_compose! {
    fn any_design()(
        l in 30.0e-9..300.0e-9f64,
        c_a in 5.0e-15..40.0e-15f64,
        c_b in 5.0e-15..40.0e-15f64,
        c_x in 0.0..5.0e-15f64,
        c_ca in 0.0..1.0e-15f64,
        c_cb in 0.0..1.0e-15f64,
        l_t in 0.0..25.0e-9f64,
    ) -> CircuitDesign {
        CircuitDesign {
            name: "prop".into(),
            length: 1.0e-3,
            width: 1.6e-6,
            c_a,
            c_b,
            c_x,
            c_ca,
            c_cb,
            inductance: l,
            tail_inductance: l_t,
        }
    }
}

prop_compose! {
    fn any_gamma()(g in GAMMA_MIN..GAMMA_MAX) -> f64 { g }
}

proptest! {
    /// The eigensolver must reproduce the roots of det(Linv − ω²C) = 0,
    /// computed here directly from the 2x2 characteristic polynomial.
    #[test]
    fn eigenfrequencies_match_characteristic_polynomial(
        design in any_design(),
        gamma in any_gamma(),
    ) {
        let mats = build_matrices(&design, true, gamma).unwrap();
        let (c, linv) = (mats.cmat, mats.linv);
        let a = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
        let b = linv[(0, 0)] * c[(1, 1)] + linv[(1, 1)] * c[(0, 0)]
            - linv[(0, 1)] * c[(1, 0)]
            - linv[(1, 0)] * c[(0, 1)];
        let det_linv = linv[(0, 0)] * linv[(1, 1)] - linv[(0, 1)] * linv[(1, 0)];
        let disc = (b * b - 4.0 * a * det_linv).max(0.0).sqrt();
        let q = 0.5 * (b + disc);
        let lam_hi = q / a;
        let lam_lo = det_linv / q;
        let f_lo = lam_lo.sqrt() / TWO_PI;
        let f_hi = lam_hi.sqrt() / TWO_PI;

        let modes = eigenmodes(&mats).unwrap();
        prop_assert_eq!(modes.len(), 2);
        prop_assert!(close(modes[0].frequency, f_lo, 1e-9),
            "low mode {:e} vs root {:e}", modes[0].frequency, f_lo);
        prop_assert!(close(modes[1].frequency, f_hi, 1e-9),
            "high mode {:e} vs root {:e}", modes[1].frequency, f_hi);
    }

    /// Scaling every capacitance by s scales every frequency by s^(-1/2).
    #[test]
    fn frequencies_scale_as_inverse_sqrt_of_capacitance(
        design in any_design(),
        gamma in any_gamma(),
        s in 0.25..4.0f64,
    ) {
        let mut scaled = design.clone();
        scaled.c_a *= s;
        scaled.c_b *= s;
        scaled.c_x *= s;
        scaled.c_ca *= s;
        scaled.c_cb *= s;
        let base = eigenmodes(&build_matrices(&design, true, gamma).unwrap()).unwrap();
        let moved = eigenmodes(&build_matrices(&scaled, true, gamma).unwrap()).unwrap();
        for (b, m) in base.iter().zip(&moved) {
            prop_assert!(close(m.frequency * s.sqrt(), b.frequency, 1e-9),
                "{:e} vs {:e} at s = {s}", m.frequency * s.sqrt(), b.frequency);
        }
    }

    /// Fully symmetric circuits must agree with the uncoupled-parity
    /// closed forms for both mode frequencies.
    #[test]
    fn symmetric_designs_match_closed_forms(
        l in 30.0e-9..300.0e-9f64,
        c in 5.0e-15..40.0e-15f64,
        c_x in 0.0..5.0e-15f64,
        l_t in 0.0..25.0e-9f64,
        gamma in any_gamma(),
    ) {
        let design = CircuitDesign {
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
        };
        let modes = eigenmodes(&build_matrices(&design, true, gamma).unwrap()).unwrap();
        let (f_c, f_d) = symmetric_frequencies(l, gamma * c, l_t, gamma * c_x).unwrap();
        let mut expected = [f_c, f_d];
        expected.sort_by(f64::total_cmp);
        prop_assert!(close(modes[0].frequency, expected[0], 1e-10));
        prop_assert!(close(modes[1].frequency, expected[1], 1e-10));
    }

    /// Mode frequencies come back positive and in ascending order.
    #[test]
    fn eigenmodes_sorted_ascending(design in any_design(), gamma in any_gamma()) {
        let modes = eigenmodes(&build_matrices(&design, true, gamma).unwrap()).unwrap();
        prop_assert!(modes[0].frequency > 0.0);
        prop_assert!(modes[1].frequency >= modes[0].frequency);
    }

    /// Design tables survive a save/load cycle.
    #[test]
    fn design_files_round_trip(designs in prop::collection::vec(any_design(), 1..4)) {
        let named: Vec<CircuitDesign> = designs
            .into_iter()
            .enumerate()
            .map(|(i, mut d)| {
                d.name = format!("D{i}");
                d
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("designs.json");
        save_designs(&path, &named).unwrap();
        let back = load_designs(&path).unwrap();
        prop_assert_eq!(back.len(), named.len());
        for (a, b) in named.iter().zip(&back) {
            prop_assert_eq!(&a.name, &b.name);
            for (x, y) in [
                (a.length, b.length),
                (a.width, b.width),
                (a.c_a, b.c_a),
                (a.c_b, b.c_b),
                (a.c_x, b.c_x),
                (a.c_ca, b.c_ca),
                (a.c_cb, b.c_cb),
                (a.inductance, b.inductance),
                (a.tail_inductance, b.tail_inductance),
            ] {
                prop_assert!(close(x, y, 1e-12), "{:e} vs {:e}", x, y);
            }
        }
    }

    /// The pairwise stiffness components satisfy
    /// ((k⁺−k⁻)/2)² + l² = (3K/4r³)² for every electron pair.
    #[test]
    fn coulomb_pair_identity(
        x in -2.0e-6..2.0e-6f64,
        y in -2.0e-6..2.0e-6f64,
        dx in 0.1e-6..3.0e-6f64,
        dy in -3.0e-6..3.0e-6f64,
    ) {
        let config = ElectronConfiguration {
            n: 2,
            positions: vec![(x, y), (x + dx, y + dy)],
            dims: 2,
        };
        let c = coulomb_coefficients(&config).unwrap();
        let r2 = dx * dx + dy * dy;
        let radial = 0.75 * COULOMB_PREFACTOR / (r2 * r2.sqrt());
        let lhs = (0.5 * (c.kplus[(0, 1)] - c.kminus[(0, 1)])).powi(2) + c.l[(0, 1)].powi(2);
        prop_assert!(close(lhs, radial * radial, 1e-10));
    }

    /// The two-electron equilibrium separation obeys the closed-form force
    /// balance d³ = 2K/(mω²), and the stored positions null the gradient.
    #[test]
    fn two_electron_equilibrium_matches_closed_form(f_dot in 2.0e9..20.0e9f64) {
        let omega = TWO_PI * f_dot;
        let potential = DotPotential::Harmonic1d { omega_dot: omega };
        let config = equilibrium_positions(2, &potential).unwrap();
        let d = (config.positions[1].0 - config.positions[0].0).abs();
        prop_assert!(close(d, pair_separation(omega), 1e-9),
            "separation {:e} vs closed form {:e}", d, pair_separation(omega));
        prop_assert!(config.max_residual_force(&potential).unwrap() < 1e-9);
    }

    /// The two impedance-ratio formulations must agree, and scaling the
    /// width by the cube of the length ratio leaves f0 unchanged.
    #[test]
    fn scaling_ratio_formulations_agree(
        length in 0.2e-3..2.0e-3f64,
        width in 0.2e-6..5.0e-6f64,
        ratio in 0.2..1.0f64,
    ) {
        let base = ScalingBase {
            length,
            width,
            f0: 3.62e9,
            z: 2.66e3,
        };
        let p = scaling_predict(&base, ratio * length, ratio.powi(3) * width).unwrap();
        prop_assert!(close(p.z_ratio, p.z_ratio_product_form, 1e-12));
        prop_assert!(close(p.f0_ratio, 1.0, 1e-12),
            "f0 ratio {:e} at cubic width scaling", p.f0_ratio);
    }

    /// A frequency-independent complex baseline (amplitude and phase offset)
    /// must not change the extracted resonance parameters.
    #[test]
    fn fit_is_invariant_under_complex_baseline(
        amp in 0.5..2.0f64,
        phase in -3.0..3.0f64,
        seed in 0u64..1000,
    ) {
        let p = ResonanceFit::params(5.025e9, 3.9e5, 1.0e5, 0.1).unwrap();
        let linewidth = p.f0 / p.q_loaded();
        let trace = synth_trace(&p, 200.0 * linewidth, 801, 1e-4, seed).unwrap();
        let reference = fit_resonance(&trace, None).unwrap();
        let scale = Complex64::from_polar(amp, phase);
        let moved = S21Trace::new(
            trace.frequencies.clone(),
            trace.values.iter().map(|v| v * scale).collect(),
            trace.power_in,
        )
        .unwrap();
        let fit = fit_resonance(&moved, None).unwrap();
        prop_assert!(close(fit.f0, reference.f0, 1e-9));
        prop_assert!(close(fit.qi, reference.qi, 1e-6));
        prop_assert!(close(fit.qc, reference.qc, 1e-6));
        prop_assert!((fit.phi - reference.phi).abs() < 1e-6);
    }

    /// Photon number is linear in probe power.
    #[test]
    fn photon_number_linear_in_power(
        p_in in 1.0e-18..1.0e-9f64,
        qi in 1.0e4..1.0e6f64,
        qc in 1.0e4..1.0e6f64,
    ) {
        let fit = ResonanceFit::params(5.0e9, qi, qc, 0.0).unwrap();
        let n1 = photon_number(p_in, &fit).unwrap();
        let n2 = photon_number(2.0 * p_in, &fit).unwrap();
        prop_assert!(close(n2, 2.0 * n1, 1e-12));
    }
}
