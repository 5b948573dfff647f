//! Three-state ensemble variational quantum eigensolver for the H4+ ion.
//!
//! The crate runs the whole chain on a deterministic state-vector emulator:
//! s-Gaussian integrals, ROHF and diabatic molecular orbitals, a Jordan-Wigner
//! qubit Hamiltonian, a Trotterized generalized UCCSD ansatz optimized on the
//! equal-weight ensemble energy, resolution of the optimized three-state
//! subspace into eigenstates, and Procrustes-optimal quasi-diabatic states.
//! A brute-force FCI solver is bundled as the reference for every stage.

pub mod ansatz;
pub mod diabat;
pub mod error;
pub mod evqe;
pub mod geometry;
pub mod integrals;
pub mod optim;
pub mod pipeline;
pub mod qubits;
pub mod resolve;
pub mod scf;
pub mod secondq;

pub use error::{Error, Result};

/// Number of spatial orbitals in the minimal-basis H4+ problem.
pub const N_SPATIAL: usize = 4;
/// Number of qubits (spin-orbitals), alpha block first.
pub const N_QUBITS: usize = 2 * N_SPATIAL;
