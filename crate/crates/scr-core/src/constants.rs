//! CODATA-2018 physical constants, SI units.

/// Elementary charge e, coulombs.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Electron mass m_e, kilograms.
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;

/// Vacuum permittivity ε₀, farads per meter.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Reduced Planck constant ħ, joule-seconds.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant k_B, joules per kelvin.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Coulomb prefactor K = e²/(4πε₀), joule-meters.
pub const COULOMB_PREFACTOR: f64 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE
    / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY);
