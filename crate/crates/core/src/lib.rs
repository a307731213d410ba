//! Simulation toolkit for quantum information scrambling in spin chains.
//!
//! The crate evolves product states under four open-chain Hamiltonians
//! (transverse-field Ising, mixed-field Ising, PXP and a disordered XXZ
//! chain), tracks how a single-site perturbation spreads through the
//! Holevo information, the subentropy bound and the purity-based averaged
//! accessible information `chi_2`, and estimates `chi_2` from simulated
//! randomized Pauli measurements (classical shadows) or from sampled
//! Clifford measurement bases.

pub mod cliffordverify;
pub mod error;
pub mod evolve;
pub mod identities;
pub mod infotheory;
pub mod models;
pub mod qhilbert;
pub mod random;
pub mod scramble;
pub mod seed;
pub mod shadows;

pub use error::{Error, Result};
