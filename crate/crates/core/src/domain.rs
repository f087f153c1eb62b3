//! Shared domain types for the two-mode dimer: physical parameters, the
//! renormalized Bloch vector on the radius-1/2 sphere, canonical `(q, p)`
//! coordinates, two-component spinors, and trajectory containers.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the sphere constraint `s_x^2 + s_y^2 + s_z^2 = 1/4` after
/// numerical integration.
pub const SPHERE_TOL_INTEGRATION: f64 = 1e-9;
/// Tolerance for the sphere constraint after pure coordinate conversions.
pub const SPHERE_TOL_CONVERSION: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("|p| = {0} exceeds 1")]
    MomentumOutOfRange(f64),
    #[error("spinor has zero norm")]
    ZeroNorm,
    #[error("state violates the sphere constraint: |s|^2 = {0}")]
    OffSphere(f64),
    #[error("trajectory inconsistency: {0}")]
    BadTrajectory(String),
}

/// Which non-Hermitian Hamiltonian the parameters refer to.
///
/// `Decaying` has the complex onsite energy `-2i gamma` on mode 1, so the
/// norm of the state decreases monotonically.  `PtShifted` is the same
/// operator shifted by `+i gamma N`; it is PT-symmetric for `epsilon = 0`.
/// The two generate identical renormalized (Bloch) dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Decaying,
    #[serde(rename = "pt")]
    PtShifted,
}

/// Physical parameters of the dimer.
///
/// `g` is the macroscopic interaction; the microscopic onsite interaction is
/// `c = g / n` when a particle number `n` is attached.  Mean-field-only runs
/// leave `n_particles` unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub epsilon: f64,
    pub v: f64,
    pub gamma: f64,
    pub g: f64,
    pub n_particles: Option<u32>,
    pub variant: Variant,
}

impl SystemParams {
    pub fn new(
        epsilon: f64,
        v: f64,
        gamma: f64,
        g: f64,
        n_particles: Option<u32>,
        variant: Variant,
    ) -> Result<Self, DomainError> {
        let p = Self { epsilon, v, gamma, g, n_particles, variant };
        p.validate()?;
        Ok(p)
    }

    /// Decaying-variant parameters without a particle number.
    pub fn decaying(epsilon: f64, v: f64, gamma: f64, g: f64) -> Result<Self, DomainError> {
        Self::new(epsilon, v, gamma, g, None, Variant::Decaying)
    }

    /// PT-shifted parameters without a particle number.
    pub fn pt(epsilon: f64, v: f64, gamma: f64, g: f64) -> Result<Self, DomainError> {
        Self::new(epsilon, v, gamma, g, None, Variant::PtShifted)
    }

    pub fn with_particles(mut self, n: u32) -> Result<Self, DomainError> {
        self.n_particles = Some(n);
        self.validate()?;
        Ok(self)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.v > 0.0) || !self.v.is_finite() {
            return Err(DomainError::InvalidParameter(format!(
                "coupling v must be positive and finite, got {}",
                self.v
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(DomainError::InvalidParameter(format!(
                "gamma must be nonnegative and finite, got {}",
                self.gamma
            )));
        }
        if !self.epsilon.is_finite() || !self.g.is_finite() {
            return Err(DomainError::InvalidParameter(
                "epsilon and g must be finite".into(),
            ));
        }
        if let Some(n) = self.n_particles {
            if n == 0 {
                return Err(DomainError::InvalidParameter(
                    "particle number must be positive".into(),
                ));
            }
            if !(self.g / n as f64).is_finite() {
                return Err(DomainError::InvalidParameter(
                    "microscopic interaction c = g/N must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Microscopic interaction `c = g / N`; `None` without a particle number.
    pub fn c(&self) -> Option<f64> {
        self.n_particles.map(|n| self.g / n as f64)
    }
}

/// Point on the Bloch sphere of radius 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl BlochVector {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Self {
        Self { sx, sy, sz }
    }

    /// North pole `(0, 0, 1/2)`: the whole population in mode 1 (the
    /// decaying level).
    pub fn north_pole() -> Self {
        Self::new(0.0, 0.0, 0.5)
    }

    /// South pole `(0, 0, -1/2)`: the whole population in the stable mode.
    pub fn south_pole() -> Self {
        Self::new(0.0, 0.0, -0.5)
    }

    /// Point with polar angle `theta` (from the north pole) and azimuth `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self::new(
            0.5 * theta.sin() * phi.cos(),
            0.5 * theta.sin() * phi.sin(),
            0.5 * theta.cos(),
        )
    }

    pub fn norm_sq(&self) -> f64 {
        self.sx * self.sx + self.sy * self.sy + self.sz * self.sz
    }

    /// Deviation from the sphere constraint, `|s|^2 - 1/4`.
    pub fn sphere_defect(&self) -> f64 {
        self.norm_sq() - 0.25
    }

    pub fn check_on_sphere(&self, tol: f64) -> Result<(), DomainError> {
        if self.sphere_defect().abs() <= tol {
            Ok(())
        } else {
            Err(DomainError::OffSphere(self.norm_sq()))
        }
    }

    /// Radial projection back onto the radius-1/2 sphere.
    pub fn projected(&self) -> Self {
        let r = self.norm_sq().sqrt();
        Self::new(0.5 * self.sx / r, 0.5 * self.sy / r, 0.5 * self.sz / r)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.sx * other.sx + self.sy * other.sy + self.sz * other.sz
    }

    /// Euclidean distance between two Bloch vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        ((self.sx - other.sx).powi(2)
            + (self.sy - other.sy).powi(2)
            + (self.sz - other.sz).powi(2))
        .sqrt()
    }

    /// Orthonormal basis of the tangent plane at this point.
    pub fn tangent_basis(&self) -> ([f64; 3], [f64; 3]) {
        let u = [2.0 * self.sx, 2.0 * self.sy, 2.0 * self.sz];
        // pick the axis least aligned with u to seed the cross products
        let seed = if u[0].abs() <= u[1].abs() && u[0].abs() <= u[2].abs() {
            [1.0, 0.0, 0.0]
        } else if u[1].abs() <= u[2].abs() {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let mut e1 = cross(&u, &seed);
        let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
        for x in &mut e1 {
            *x /= n1;
        }
        let e2 = cross(&u, &e1);
        (e1, e2)
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Canonical coordinates on the Bloch sphere: population imbalance
/// `p in [-1, 1]` and relative phase `q` with period pi.
///
/// `at_pole` marks points where `|p| = 1` and the phase is undefined; the
/// conversion then reports `q = 0` and downstream chart-based code must
/// switch to the Bloch representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalPoint {
    pub p: f64,
    pub q: f64,
    pub at_pole: bool,
}

impl CanonicalPoint {
    pub fn new(p: f64, q: f64) -> Result<Self, DomainError> {
        if p.abs() > 1.0 || !p.is_finite() || !q.is_finite() {
            return Err(DomainError::MomentumOutOfRange(p));
        }
        Ok(Self { p, q, at_pole: p.abs() == 1.0 })
    }
}

/// The dynamics depends on q only through 2q; fold into [0, pi).
pub fn wrap_q(q: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut w = q % pi;
    if w < 0.0 {
        w += pi;
    }
    w
}

/// `s_x = (1/2) sqrt(1-p^2) cos 2q`, `s_y = (1/2) sqrt(1-p^2) sin 2q`,
/// `s_z = p/2`.  Satisfies the sphere constraint identically.
pub fn bloch_from_canonical(pt: &CanonicalPoint) -> Result<BlochVector, DomainError> {
    if pt.p.abs() > 1.0 {
        return Err(DomainError::MomentumOutOfRange(pt.p));
    }
    let r = (1.0 - pt.p * pt.p).max(0.0).sqrt();
    Ok(BlochVector::new(
        0.5 * r * (2.0 * pt.q).cos(),
        0.5 * r * (2.0 * pt.q).sin(),
        0.5 * pt.p,
    ))
}

/// Inverse chart: `p = 2 s_z`, `q = atan2(s_y, s_x)/2` folded into `[0, pi)`.
/// At the poles the phase is undefined; `q = 0` is returned with `at_pole`
/// set.
pub fn canonical_from_bloch(s: &BlochVector) -> Result<CanonicalPoint, DomainError> {
    s.check_on_sphere(SPHERE_TOL_CONVERSION.max(1e-6))?;
    let p = (2.0 * s.sz).clamp(-1.0, 1.0);
    let planar = (s.sx * s.sx + s.sy * s.sy).sqrt();
    if planar < 1e-15 {
        return Ok(CanonicalPoint { p: if p > 0.0 { 1.0 } else { -1.0 }, q: 0.0, at_pole: true });
    }
    let q = wrap_q(0.5 * s.sy.atan2(s.sx));
    Ok(CanonicalPoint { p, q, at_pole: false })
}

/// Two-component spinor `(psi_1, psi_2)`, not necessarily normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinorState {
    pub psi1: C64,
    pub psi2: C64,
}

impl SpinorState {
    pub fn new(psi1: C64, psi2: C64) -> Self {
        Self { psi1, psi2 }
    }

    /// Total probability `n = |psi_1|^2 + |psi_2|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.psi1.norm_sqr() + self.psi2.norm_sqr()
    }

    /// Renormalized spinor `phi_j = psi_j / sqrt(n)`.
    pub fn normalized(&self) -> Result<Self, DomainError> {
        let n = self.norm_sq();
        if n <= 0.0 || !n.is_finite() {
            return Err(DomainError::ZeroNorm);
        }
        let r = n.sqrt();
        Ok(Self::new(self.psi1 / r, self.psi2 / r))
    }
}

/// Bloch vector of a spinor; invariant under `psi -> lambda psi`.
pub fn bloch_from_spinor(psi: &SpinorState) -> Result<BlochVector, DomainError> {
    let n = psi.norm_sq();
    if n <= 0.0 || !n.is_finite() {
        return Err(DomainError::ZeroNorm);
    }
    let cross = psi.psi1.conj() * psi.psi2;
    Ok(BlochVector::new(
        cross.re / n,
        cross.im / n,
        0.5 * (psi.psi1.norm_sqr() - psi.psi2.norm_sqr()) / n,
    ))
}

/// Spinor representative of a Bloch point, with `n = 1` and the phase fixed
/// so that `psi_2` is real nonnegative.
pub fn spinor_from_bloch(s: &BlochVector) -> SpinorState {
    let p1 = ((0.5 + s.sz).max(0.0)).sqrt();
    let p2 = ((0.5 - s.sz).max(0.0)).sqrt();
    if p2 < 1e-300 {
        return SpinorState::new(C64::new(p1, 0.0), C64::new(0.0, 0.0));
    }
    // s_x + i s_y = conj(psi_1) psi_2, so with psi_2 real positive
    // psi_1 = (s_x - i s_y)/psi_2
    if p1 < 1e-300 {
        return SpinorState::new(C64::new(0.0, 0.0), C64::new(p2, 0.0));
    }
    SpinorState::new(C64::new(s.sx / p2, -s.sy / p2), C64::new(p2, 0.0))
}

/// Time-ordered Bloch states with the associated survival probability.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochVector>,
    pub norms: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.times.len() != self.states.len() || self.times.len() != self.norms.len() {
            return Err(DomainError::BadTrajectory("length mismatch".into()));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(DomainError::BadTrajectory(format!(
                    "times not strictly increasing at t = {}",
                    w[0]
                )));
            }
        }
        for (s, &n) in self.states.iter().zip(&self.norms) {
            s.check_on_sphere(SPHERE_TOL_INTEGRATION)?;
            if !(n > 0.0) {
                return Err(DomainError::BadTrajectory(format!("nonpositive norm {n}")));
            }
        }
        Ok(())
    }
}
