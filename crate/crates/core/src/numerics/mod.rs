//! Self-contained numerical kernels: dense complex linear algebra, a
//! non-Hermitian eigensolver, the matrix exponential, an embedded
//! Runge-Kutta 5(4) integrator with event location, polynomial roots via
//! companion matrices, and a double-double-refined eigensolver for complex
//! tridiagonal matrices (the spectra here are exponentially ill-conditioned
//! near exceptional points, where plain f64 is not enough).

pub mod cmatrix;
pub mod dd;
pub mod eig;
pub mod expm;
pub mod ode;
pub mod quartic;
pub mod tridiag;

pub use cmatrix::{ComplexMatrix, Lu};
pub use eig::{eig_complex, ComplexSpectrum};
pub use expm::expm;
pub use ode::{integrate, Event, EventDirection, OdeOptions, OdeSolution};
pub use quartic::roots_quartic;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("QR iteration failed to converge at eigenvalue index {index}")]
    EigenNonConvergence { index: usize },
    #[error("matrix contains non-finite entries")]
    NonFiniteInput,
    #[error("matrix is numerically singular")]
    SingularMatrix,
    #[error("matrix exponential overflowed")]
    ExpmOverflow,
    #[error("all polynomial coefficients are zero")]
    AllZeroCoefficients,
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step limit exceeded at t = {t}")]
    TooManySteps { t: f64 },
    #[error("right-hand side failed at t = {t}: {message}")]
    RhsFailure { t: f64, message: String },
}
