//! Closed-form physics of the single-particle non-Hermitian two-level
//! system: eigenvalues, the propagator including its exceptional-point
//! limit, the renormalized Bloch flow, the norm-decay law, and the linear
//! fixed points.
//!
//! Conventions: the decaying Hamiltonian is `[[eps - 2i gamma, v], [v, -eps]]`
//! and the PT-shifted one `[[eps - i gamma, v], [v, -eps + i gamma]]`; they
//! differ by `-i gamma` times the identity, i.e. by the overall factor
//! `exp(-gamma t)` in the wave function.

use num_complex::Complex64 as C64;

use crate::domain::{BlochVector, SystemParams, Variant};
use crate::numerics::{roots_quartic, ComplexMatrix};

/// Eigenvalue data of the two-level system.
///
/// `omega = (lambda_+ - lambda_-)/2 = sqrt(zeta^2 + v^2)` with
/// `zeta = eps - i gamma`; `is_ep` flags the exceptional point where the
/// eigenvalues (and eigenvectors) coalesce.
#[derive(Debug, Clone, Copy)]
pub struct TwoLevelEigen {
    pub lambda_plus: C64,
    pub lambda_minus: C64,
    pub omega: C64,
    pub zeta: C64,
    pub is_ep: bool,
}

/// Eigenvalues for the chosen variant: `+-omega` for the PT-shifted system,
/// shifted by `-i gamma` for the decaying one.
pub fn eigenvalues(params: &SystemParams) -> TwoLevelEigen {
    let zeta = C64::new(params.epsilon, -params.gamma);
    let mut omega = (zeta * zeta + params.v * params.v).sqrt();
    // fix the branch: Re(omega) > 0, or Im(omega) >= 0 on the imaginary
    // axis; the propagator is even in omega so this is pure labeling
    if omega.re < 0.0 || (omega.re == 0.0 && omega.im < 0.0) {
        omega = -omega;
    }
    let shift = match params.variant {
        Variant::PtShifted => C64::new(0.0, 0.0),
        Variant::Decaying => C64::new(0.0, -params.gamma),
    };
    TwoLevelEigen {
        lambda_plus: omega + shift,
        lambda_minus: -omega + shift,
        omega,
        zeta,
        is_ep: omega.norm() <= 1e-12 * params.v,
    }
}

/// The 2x2 Hamiltonian matrix of the chosen variant.
pub fn hamiltonian_matrix(params: &SystemParams) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(2);
    let (eps, v, gamma) = (params.epsilon, params.v, params.gamma);
    match params.variant {
        Variant::Decaying => {
            h[(0, 0)] = C64::new(eps, -2.0 * gamma);
            h[(1, 1)] = C64::new(-eps, 0.0);
        }
        Variant::PtShifted => {
            h[(0, 0)] = C64::new(eps, -gamma);
            h[(1, 1)] = C64::new(-eps, gamma);
        }
    }
    h[(0, 1)] = C64::new(v, 0.0);
    h[(1, 0)] = C64::new(v, 0.0);
    h
}

/// `cos(z)` and `sin(z)/z * t` with `z = omega t`, switching to the series
/// near the exceptional point where `sin(omega t)/omega` would lose all
/// accuracy; the series reduces exactly to the EP limit at `omega = 0`.
fn cos_and_sinc(omega: C64, t: f64, v: f64) -> (C64, C64) {
    let z = omega * t;
    if omega.norm() <= 1e-3 * v {
        let z2 = z * z;
        // cos z = 1 - z^2/2 + z^4/24 - z^6/720
        let cos = C64::new(1.0, 0.0) - z2 * 0.5 + z2 * z2 / 24.0 - z2 * z2 * z2 / 720.0;
        // sin z / z = 1 - z^2/6 + z^4/120 - z^6/5040
        let sinc = C64::new(1.0, 0.0) - z2 / 6.0 + z2 * z2 / 120.0 - z2 * z2 * z2 / 5040.0;
        (cos, sinc * t)
    } else {
        (z.cos(), z.sin() / omega)
    }
}

/// Closed-form propagator `U(t) = exp(-i H t)` of the chosen variant,
/// continuous across the exceptional point.
pub fn propagator(params: &SystemParams, t: f64) -> ComplexMatrix {
    let eig = eigenvalues(&SystemParams { variant: Variant::PtShifted, ..*params });
    let (cos, sinc) = cos_and_sinc(eig.omega, t, params.v);
    let i = C64::new(0.0, 1.0);
    let mut u = ComplexMatrix::zeros(2);
    u[(0, 0)] = cos - i * eig.zeta * sinc;
    u[(0, 1)] = -i * params.v * sinc;
    u[(1, 0)] = -i * params.v * sinc;
    u[(1, 1)] = cos + i * eig.zeta * sinc;
    match params.variant {
        Variant::PtShifted => u,
        Variant::Decaying => u.scaled(C64::new(-params.gamma * t, 0.0).exp()),
    }
}

/// Renormalized Bloch flow of the linear system:
/// `sx' = -2 eps sy + 4 gamma sx sz`
/// `sy' =  2 eps sx - 2 v sz + 4 gamma sy sz`
/// `sz' =  2 v sy - gamma (1 - 4 sz^2)`.
/// Identical for both variants; conserves `|s|^2 = 1/4`.
pub fn bloch_rhs(s: &BlochVector, params: &SystemParams) -> [f64; 3] {
    let (eps, v, gamma) = (params.epsilon, params.v, params.gamma);
    [
        -2.0 * eps * s.sy + 4.0 * gamma * s.sx * s.sz,
        2.0 * eps * s.sx - 2.0 * v * s.sz + 4.0 * gamma * s.sy * s.sz,
        2.0 * v * s.sy - gamma * (1.0 - 4.0 * s.sz * s.sz),
    ]
}

/// Instantaneous norm rate `n'/n`: `-4 gamma (sz + 1/2)` for the decaying
/// variant, `-4 gamma sz` for the PT-shifted one.
pub fn norm_rate(s: &BlochVector, params: &SystemParams) -> f64 {
    match params.variant {
        Variant::Decaying => -4.0 * params.gamma * (s.sz + 0.5),
        Variant::PtShifted => -4.0 * params.gamma * s.sz,
    }
}

/// Fixed points of the linear Bloch flow: real roots of
/// `16 gamma^2 sz^4 + 4 (eps^2 + v^2 - gamma^2) sz^2 - eps^2 = 0`
/// with `sy = (gamma/2v)(1 - 4 sz^2)` and `sx` from normalization, its sign
/// resolved by the flow residual. Every parameter set yields exactly two.
pub fn fixed_points(params: &SystemParams) -> Vec<BlochVector> {
    let (eps, v, gamma) = (params.epsilon, params.v, params.gamma);
    let roots = roots_quartic(
        16.0 * gamma * gamma,
        0.0,
        4.0 * (eps * eps + v * v - gamma * gamma),
        0.0,
        -eps * eps,
    )
    .expect("coefficients cannot all vanish since v > 0");
    let mut out: Vec<BlochVector> = Vec::new();
    for r in roots {
        if r.im.abs() > 1e-8 * (1.0 + r.re.abs()) {
            continue;
        }
        let sz = r.re;
        if sz.abs() > 0.5 + 1e-9 {
            continue;
        }
        let sy = gamma / (2.0 * v) * (1.0 - 4.0 * sz * sz);
        let sx_sq = 0.25 - sy * sy - sz * sz;
        if sx_sq < -1e-12 {
            continue;
        }
        let sx = sx_sq.max(0.0).sqrt();
        for cand in [BlochVector::new(sx, sy, sz), BlochVector::new(-sx, sy, sz)] {
            let rhs = bloch_rhs(&cand, params);
            let res = (rhs[0] * rhs[0] + rhs[1] * rhs[1] + rhs[2] * rhs[2]).sqrt();
            if res <= 1e-9 && out.iter().all(|p| p.distance(&cand) > 1e-8) {
                out.push(cand);
            }
        }
    }
    out.sort_by(|a, b| (a.sz, a.sx).partial_cmp(&(b.sz, b.sx)).unwrap());
    out
}
