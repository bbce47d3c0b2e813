//! Hahn-echo decoherence of a spin-1 defect qubit (the negatively charged
//! boron vacancy in hexagonal boron nitride) coupled to a nuclear spin bath.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: spin-system value types and cluster Hamiltonian assembly.
//! * [`bath`]: hBN lattice generation, hyperfine dataset ingestion, isotope
//!   assignment and nuclear dipolar tensors.
//! * [`cce`]: cluster enumeration, Hahn-echo propagation of each cluster and
//!   the generalized cluster-correlation expansion (gCCE) product.
//! * [`oracle`]: brute-force full Hilbert space propagation for small baths.
//! * [`eseem`]: closed-form echo envelope modulation, decay fitting and
//!   modulation spectra.
//! * [`sweep`]: magnetic-field / transverse-ZFS / polarization sweeps,
//!   convergence studies and bath ablations.
//! * [`config`] and [`output`]: the JSON run configuration, presets and the
//!   files written by the command-line front end.

pub mod bath;
pub mod cce;
pub mod config;
pub mod constants;
pub mod eseem;
mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod output;
pub mod runner;
pub mod spin;
pub mod sweep;
pub mod tensor;

pub use error::{Error, Result};

pub use faer::c64;
