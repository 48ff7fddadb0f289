//! Models for pairs of symmetrically coupled high-impedance microwave
//! resonators: lumped-circuit eigenmodes and mode splittings, coupling to
//! electrons in an electrostatic dot, kinetic-inductance material scaling,
//! complex transmission-resonance fitting, and verification of simulated
//! capacitance matrices against reference frequencies through a single
//! discount parameter.
//!
//! All quantities are SI; file formats with scaled units live in [`io`].

pub mod circuit;
pub mod constants;
pub mod electron;
pub mod error;
pub mod io;
pub mod linalg;
pub mod material;
pub mod resonance;
pub mod verify;

pub use error::{Error, Result};
