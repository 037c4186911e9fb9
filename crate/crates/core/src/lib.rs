//! Desk-scale simulation of Krylov ground-state estimation (UVQPE and ODMD)
//! for the Heisenberg antiferromagnet on kagome star plaquettes.
//!
//! Energies, fields and times are in units of the bond energy ε, with
//! `H = ε Σ σ_i·σ_j − h Σ S^z_i`. Site `i` is bit `i` of a basis index and
//! bit value 0 is spin up.

pub mod error;
pub mod hamiltonian;
pub mod krylov;
pub mod lattice;
pub mod magnet;
pub mod mirror;
pub mod noise;
pub mod prep;
pub mod statevec;
pub mod trotter;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
