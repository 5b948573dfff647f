use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate geometry: atoms {0} and {1} coincide")]
    DegenerateGeometry(usize, usize),

    #[error("SCF did not converge after {iterations} iterations (dE = {delta_e:.3e}, dD = {delta_d:.3e})")]
    Convergence {
        iterations: usize,
        delta_e: f64,
        delta_d: f64,
    },

    #[error("overlap matrix is near-singular (smallest eigenvalue {0:.3e})")]
    Conditioning(f64),

    #[error("reference MOs are ill-matched to the current geometry (smallest singular value {0:.3e})")]
    IllMatchedReference(f64),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("register of {0} qubits is too large for a dense matrix")]
    Scale(usize),

    #[error("malformed circuit: {0}")]
    Structural(String),

    #[error("non-finite objective value")]
    NonFinite,

    #[error("rotation extraction failed: reconstruction error {0:.3e}")]
    Extraction(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
