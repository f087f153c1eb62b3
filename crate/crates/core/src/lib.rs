//! Simulation library for the non-Hermitian (decaying and PT-symmetric)
//! Bose-Hubbard dimer: closed-form two-level results, generalized mean-field
//! dynamics on the Bloch sphere in several equivalent formulations, fixed
//! point structure and classification, exact many-particle Fock-space
//! dynamics, and experiment drivers that emit the derived data sets.

pub mod domain;
pub mod experiments;
pub mod fixedpoints;
pub mod linear2;
pub mod manybody;
pub mod meanfield;
pub mod numerics;

pub use domain::{
    bloch_from_canonical, bloch_from_spinor, canonical_from_bloch, spinor_from_bloch,
    BlochVector, CanonicalPoint, DomainError, SpinorState, SystemParams, Trajectory, Variant,
};
pub use fixedpoints::{FixedPoint, FixedPointKind, Region, RegionLabel};
pub use manybody::{AngularExpectations, FockVector};
pub use meanfield::{Formulation, HamiltonianFunction, MeanFieldState};
