//! Generalized mean-field dynamics of the dimer in several equivalent
//! formulations, coupled to the decay of the total probability.
//!
//! The Bloch-sphere flow
//! `sx' = -2 eps sy - 4 g sy sz + 4 gamma sx sz`
//! `sy' =  2 eps sx + 4 g sx sz - 2 v sz + 4 gamma sy sz`
//! `sz' =  2 v sy - gamma (1 - 4 sz^2)`
//! is the reference integrator: it is free of chart and gauge
//! singularities. The canonical `(q, p)` form, the two nonlinear
//! Schroedinger forms, and the constrained `phi_1` form exist for
//! validation and for the canonical-structure demonstration, and must all
//! produce the same renormalized trajectories.
//!
//! Norm law: `n' = -2 gamma (2 sz + 1) n` for the decaying variant and
//! `n' = -4 gamma sz n` for the PT-shifted one. (The text next to the
//! unnormalized Schroedinger form quotes `n' = -2 gamma (1 - kappa) n`,
//! which is inconsistent with the law above at `psi = (0, 1)`; the direct
//! derivation gives `-2 gamma (1 + kappa) n`, which is what the population
//! picture requires and what this module implements.)

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::domain::{
    bloch_from_canonical, bloch_from_spinor, spinor_from_bloch, BlochVector, CanonicalPoint,
    DomainError, SpinorState, SystemParams, Trajectory, Variant,
};
use crate::linear2;
use crate::numerics::{integrate, NumericsError, OdeOptions};

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error("canonical chart is singular at |p| = {0}")]
    ChartSingular(f64),
    #[error("phi chart is gauge-singular at |phi1|^2 = {0}")]
    GaugeSingular(f64),
    #[error("state is not normalized: |phi|^2 = {0}")]
    NotNormalized(f64),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Mean-field state: renormalized Bloch vector plus survival probability.
#[derive(Debug, Clone, Copy)]
pub struct MeanFieldState {
    pub s: BlochVector,
    pub n: f64,
}

/// Value of the classical Hamiltonian function `H - i Gamma` at a Bloch
/// point: `H = 2 eps sz + 2 v sx + 2 g sz^2`, `Gamma = 2 gamma sz`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HamiltonianFunction {
    pub h: f64,
    pub gamma: f64,
}

impl HamiltonianFunction {
    pub fn complex(&self) -> C64 {
        C64::new(self.h, -self.gamma)
    }
}

/// State representation used for a mean-field integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Nonlinear Bloch equations (reference).
    Bloch,
    /// Canonical `(q, p)` flow: symplectic part of `H` plus metric gradient
    /// flow of `Gamma`.
    Canonical,
    /// Unnormalized nonlinear Schroedinger equation for `psi`.
    GpUnnormalized,
    /// Norm-conserving nonlinear Schroedinger equation for `phi`.
    GpNormalized,
    /// Constrained complex-canonical flow of `phi_1` with `phi_2` real.
    PhiCanonical,
}

/// Nonlinear Bloch flow; reduces to the linear flow at `g = 0` and is
/// tangent to the sphere.
pub fn bloch_rhs(s: &BlochVector, params: &SystemParams) -> [f64; 3] {
    let (eps, v, gamma, g) = (params.epsilon, params.v, params.gamma, params.g);
    [
        -2.0 * eps * s.sy - 4.0 * g * s.sy * s.sz + 4.0 * gamma * s.sx * s.sz,
        2.0 * eps * s.sx + 4.0 * g * s.sx * s.sz - 2.0 * v * s.sz + 4.0 * gamma * s.sy * s.sz,
        2.0 * v * s.sy - gamma * (1.0 - 4.0 * s.sz * s.sz),
    ]
}

/// Norm rate `n'/n` at a Bloch point (same law as the linear system).
pub fn norm_rate(s: &BlochVector, params: &SystemParams) -> f64 {
    linear2::norm_rate(s, params)
}

/// Canonical flow on the chart `|p| < 1`:
/// `q' = eps + g p - v p cos(2q)/sqrt(1-p^2)`
/// `p' = -2 gamma (1-p^2) + 2 v sqrt(1-p^2) sin(2q)`.
pub fn canonical_rhs(pt: &CanonicalPoint, params: &SystemParams) -> Result<(f64, f64), MeanFieldError> {
    let p = pt.p;
    if p.abs() >= 1.0 - 1e-12 {
        return Err(MeanFieldError::ChartSingular(p.abs()));
    }
    let (eps, v, gamma, g) = (params.epsilon, params.v, params.gamma, params.g);
    let r2 = 1.0 - p * p;
    let r = r2.sqrt();
    let (s2q, c2q) = (2.0 * pt.q).sin_cos();
    Ok((
        eps + g * p - v * p * c2q / r,
        -2.0 * gamma * r2 + 2.0 * v * r * s2q,
    ))
}

fn kappa(psi: &SpinorState) -> f64 {
    (psi.psi1.norm_sqr() - psi.psi2.norm_sqr()) / psi.norm_sq()
}

/// Unnormalized nonlinear Schroedinger flow
/// `i psi' = [[eps + g kappa - 2i gamma, v], [v, -eps - g kappa]] psi`
/// (decaying variant; the PT-shifted one adds `+ i gamma` on the diagonal),
/// `kappa = (|psi1|^2 - |psi2|^2)/n`.
pub fn gp_rhs_unnormalized(psi: &SpinorState, params: &SystemParams) -> Result<(C64, C64), MeanFieldError> {
    let n = psi.norm_sq();
    if n <= 0.0 || !n.is_finite() {
        return Err(MeanFieldError::Domain(DomainError::ZeroNorm));
    }
    let (eps, v, gamma, g) = (params.epsilon, params.v, params.gamma, params.g);
    let k = kappa(psi);
    let shift = match params.variant {
        Variant::Decaying => 0.0,
        Variant::PtShifted => gamma,
    };
    let h11 = C64::new(eps + g * k, -2.0 * gamma + shift);
    let h22 = C64::new(-eps - g * k, shift);
    let i = C64::i();
    Ok((
        -i * (h11 * psi.psi1 + v * psi.psi2),
        -i * (v * psi.psi1 + h22 * psi.psi2),
    ))
}

/// Norm-conserving flow for the renormalized spinor:
/// `i phi' = [[eps + g k - i gamma (1-k), v], [v, -eps - g k + i gamma (1+k)]] phi`
/// with `k = |phi1|^2 - |phi2|^2`.
pub fn gp_rhs_normalized(phi: &SpinorState, params: &SystemParams) -> Result<(C64, C64), MeanFieldError> {
    let n = phi.norm_sq();
    if (n - 1.0).abs() > 1e-9 {
        return Err(MeanFieldError::NotNormalized(n));
    }
    let (eps, v, gamma, g) = (params.epsilon, params.v, params.gamma, params.g);
    let k = phi.psi1.norm_sqr() - phi.psi2.norm_sqr();
    let h11 = C64::new(eps + g * k, -gamma * (1.0 - k));
    let h22 = C64::new(-eps - g * k, gamma * (1.0 + k));
    let i = C64::i();
    Ok((
        -i * (h11 * phi.psi1 + v * phi.psi2),
        -i * (v * phi.psi1 + h22 * phi.psi2),
    ))
}

/// Constrained complex-canonical flow of `phi_1` (the appendix chart):
/// `phi_2 = sqrt(1 - |phi_1|^2)` kept real, and
/// `i phi_1' = dH/dphi_1* - i (G^-1 grad Gamma)_1`
/// with the inverse sphere metric
/// `(G^-1)_11 = phi_1^2 (x-2) / (2(1-x))`,
/// `(G^-1)_12 = (2 - 2x + x^2) / (2(1-x))`, `x = |phi_1|^2`.
///
/// The Hamiltonian function in this chart is the `(q, p)` one transported
/// through `p = 2x - 1`:
/// `H = eps (2x-1) + v sqrt(1-x) (phi_1 + phi_1*) + g/2 (2x-1)^2`,
/// `Gamma = gamma (2x-1)`.
pub fn phi_canonical_rhs(phi1: C64, params: &SystemParams) -> Result<C64, MeanFieldError> {
    let x = phi1.norm_sqr();
    if x <= 1e-12 || x >= 1.0 - 1e-12 {
        return Err(MeanFieldError::GaugeSingular(x));
    }
    let (eps, v, gamma, g) = (params.epsilon, params.v, params.gamma, params.g);
    let s = (1.0 - x).sqrt();
    // Wirtinger derivative dH/dphi1* (phi2 = sqrt(1 - phi1 phi1*) depends on
    // phi1* too):
    //   d/dphi1* [eps (2x-1)]        = 2 eps phi1
    //   d/dphi1* [v s (phi1+phi1*)]  = v (s - phi1 (phi1+phi1*) / (2s))
    //   d/dphi1* [g/2 (2x-1)^2]      = 2 g (2x-1) phi1
    let dh_dconj = 2.0 * eps * phi1 + v * (C64::new(s, 0.0) - phi1 * (phi1 + phi1.conj()) / (2.0 * s))
        + 2.0 * g * (2.0 * x - 1.0) * phi1;
    // grad Gamma: dGamma/dphi1 = 2 gamma phi1*, dGamma/dphi1* = 2 gamma phi1
    let dg_dphi = 2.0 * gamma * phi1.conj();
    let dg_dconj = 2.0 * gamma * phi1;
    let g11 = phi1 * phi1 * ((x - 2.0) / (2.0 * (1.0 - x)));
    let g12 = C64::new((2.0 - 2.0 * x + x * x) / (2.0 * (1.0 - x)), 0.0);
    let grad_flow = g11 * dg_dphi + g12 * dg_dconj;
    // i phi1' = dH/dphi1* - i grad_flow
    Ok(-C64::i() * dh_dconj - grad_flow)
}

/// `phi_2` rate reconstructed from the constraint `phi_2^2 = 1 - |phi_1|^2`.
pub fn phi2_rate(phi1: C64, dphi1: C64) -> f64 {
    let phi2 = (1.0 - phi1.norm_sqr()).max(0.0).sqrt();
    -((dphi1 * phi1.conj()).re) / phi2
}

/// `H - i Gamma` at a Bloch point.
pub fn hamiltonian_value(s: &BlochVector, params: &SystemParams) -> HamiltonianFunction {
    HamiltonianFunction {
        h: 2.0 * params.epsilon * s.sz + 2.0 * params.v * s.sx + 2.0 * params.g * s.sz * s.sz,
        gamma: 2.0 * params.gamma * s.sz,
    }
}

/// Configuration for [`integrate_meanfield`].
#[derive(Debug, Clone)]
pub struct IntegrationOptions {
    pub ode: OdeOptions,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        // one notch tighter than the generic kernel defaults: keeps the
        // raw (pre-projection) sphere defect and cross-variant trajectory
        // deviations below 1e-9 out to t ~ 100
        Self { ode: OdeOptions { atol: 1e-11, rtol: 1e-10, ..OdeOptions::default() } }
    }
}

/// Result of a mean-field integration: the trajectory sampled on the
/// requested grid plus diagnostics.
#[derive(Debug, Clone)]
pub struct MeanFieldRun {
    pub trajectory: Trajectory,
    /// Largest sphere-projection correction applied after accepted steps
    /// (Bloch formulation only; the other charts enforce their own
    /// constraints).
    pub projection_drift: f64,
}

/// Integrate the mean-field dynamics from `s0` (with `n(0) = 1`) and sample
/// on `t_grid` (strictly increasing, starting at the initial time).
///
/// All formulations integrate `log n` alongside the state so long decays
/// do not underflow. The Bloch formulation re-projects onto the sphere
/// after every accepted step.
pub fn integrate_meanfield(
    s0: &BlochVector,
    params: &SystemParams,
    t_grid: &[f64],
    formulation: Formulation,
    opts: &IntegrationOptions,
) -> Result<MeanFieldRun, MeanFieldError> {
    assert!(t_grid.len() >= 2, "need at least initial and final time");
    s0.check_on_sphere(1e-9)?;
    let t0 = t_grid[0];
    let t1 = *t_grid.last().unwrap();
    let p = *params;

    // state packing per formulation; log n is always the last component
    let (y0, dim): (Vec<f64>, usize) = match formulation {
        Formulation::Bloch => (vec![s0.sx, s0.sy, s0.sz, 0.0], 4),
        Formulation::Canonical => {
            let c = crate::domain::canonical_from_bloch(s0)?;
            if c.at_pole {
                return Err(MeanFieldError::ChartSingular(1.0));
            }
            (vec![c.q, c.p, 0.0], 3)
        }
        Formulation::GpUnnormalized | Formulation::GpNormalized => {
            let psi = spinor_from_bloch(s0);
            (vec![psi.psi1.re, psi.psi1.im, psi.psi2.re, psi.psi2.im, 0.0], 5)
        }
        Formulation::PhiCanonical => {
            let psi = spinor_from_bloch(s0);
            let x = psi.psi1.norm_sqr();
            if x <= 1e-12 || x >= 1.0 - 1e-12 {
                return Err(MeanFieldError::GaugeSingular(x));
            }
            (vec![psi.psi1.re, psi.psi1.im, 0.0], 3)
        }
    };
    debug_assert_eq!(y0.len(), dim);

    let mut rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), String> {
        match formulation {
            Formulation::Bloch => {
                let s = BlochVector::new(y[0], y[1], y[2]);
                let r = bloch_rhs(&s, &p);
                dy[0] = r[0];
                dy[1] = r[1];
                dy[2] = r[2];
                dy[3] = norm_rate(&s, &p);
            }
            Formulation::Canonical => {
                let pt = CanonicalPoint { p: y[1], q: y[0], at_pole: false };
                let (qd, pd) = canonical_rhs(&pt, &p).map_err(|e| e.to_string())?;
                dy[0] = qd;
                dy[1] = pd;
                let s = bloch_from_canonical(&pt).map_err(|e| e.to_string())?;
                dy[2] = norm_rate(&s, &p);
            }
            Formulation::GpUnnormalized => {
                let psi = SpinorState::new(C64::new(y[0], y[1]), C64::new(y[2], y[3]));
                let (d1, d2) = gp_rhs_unnormalized(&psi, &p).map_err(|e| e.to_string())?;
                dy[0] = d1.re;
                dy[1] = d1.im;
                dy[2] = d2.re;
                dy[3] = d2.im;
                // track log n through the Bloch norm law for consistency
                let s = bloch_from_spinor(&psi).map_err(|e| e.to_string())?;
                dy[4] = norm_rate(&s, &p);
            }
            Formulation::GpNormalized => {
                let phi = SpinorState::new(C64::new(y[0], y[1]), C64::new(y[2], y[3]));
                let (d1, d2) = gp_rhs_normalized(&phi, &p).map_err(|e| e.to_string())?;
                dy[0] = d1.re;
                dy[1] = d1.im;
                dy[2] = d2.re;
                dy[3] = d2.im;
                let s = bloch_from_spinor(&phi).map_err(|e| e.to_string())?;
                dy[4] = norm_rate(&s, &p);
            }
            Formulation::PhiCanonical => {
                let phi1 = C64::new(y[0], y[1]);
                let d = phi_canonical_rhs(phi1, &p).map_err(|e| e.to_string())?;
                dy[0] = d.re;
                dy[1] = d.im;
                let phi2 = (1.0 - phi1.norm_sqr()).max(0.0).sqrt();
                let psi = SpinorState::new(phi1, C64::new(phi2, 0.0));
                let s = bloch_from_spinor(&psi).map_err(|e| e.to_string())?;
                dy[2] = norm_rate(&s, &p);
            }
        }
        Ok(())
    };

    // sphere projection after accepted steps (Bloch only)
    let projector = |y: &mut [f64]| -> f64 {
        let s = BlochVector::new(y[0], y[1], y[2]);
        let defect = s.sphere_defect().abs();
        let proj = s.projected();
        y[0] = proj.sx;
        y[1] = proj.sy;
        y[2] = proj.sz;
        defect
    };
    let use_projector = matches!(formulation, Formulation::Bloch);

    let sol = integrate(
        &mut rhs,
        &y0,
        (t0, t1),
        &opts.ode,
        None,
        if use_projector { Some(&projector) } else { None },
    )?;

    let mut traj = Trajectory::default();
    let mut buf = vec![0.0; dim];
    for &t in t_grid {
        if t == t0 {
            buf.copy_from_slice(&y0);
        } else {
            sol.dense.sample(t, &mut buf);
        }
        let (s, logn) = match formulation {
            // raw dense-output samples: the sphere defect of the trajectory
            // is a real measure of integration quality, not masked by a
            // final projection
            Formulation::Bloch => (BlochVector::new(buf[0], buf[1], buf[2]), buf[3]),
            Formulation::Canonical => {
                let pt = CanonicalPoint { p: buf[1].clamp(-1.0, 1.0), q: buf[0], at_pole: false };
                (bloch_from_canonical(&pt)?, buf[2])
            }
            Formulation::GpUnnormalized | Formulation::GpNormalized => {
                let psi = SpinorState::new(C64::new(buf[0], buf[1]), C64::new(buf[2], buf[3]));
                (bloch_from_spinor(&psi)?, buf[4])
            }
            Formulation::PhiCanonical => {
                let phi1 = C64::new(buf[0], buf[1]);
                let phi2 = (1.0 - phi1.norm_sqr()).max(0.0).sqrt();
                let psi = SpinorState::new(phi1, C64::new(phi2, 0.0));
                (bloch_from_spinor(&psi)?, buf[2])
            }
        };
        traj.times.push(t);
        traj.states.push(s);
        traj.norms.push(logn.exp());
    }
    Ok(MeanFieldRun { trajectory: traj, projection_drift: sol.max_projection_drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn dec(eps: f64, v: f64, gamma: f64, g: f64) -> SystemParams {
        SystemParams::decaying(eps, v, gamma, g).unwrap()
    }

    fn rand_sphere(rng: &mut impl Rng) -> BlochVector {
        loop {
            let s = BlochVector::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if s.norm_sq() > 0.01 {
                return s.projected();
            }
        }
    }

    #[test]
    fn reduces_to_linear_flow_without_interaction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let p = dec(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.2..2.0),
                rng.gen_range(0.0..2.0),
                0.0,
            );
            let s = rand_sphere(&mut rng);
            let a = bloch_rhs(&s, &p);
            let b = linear2::bloch_rhs(&s, &p);
            for i in 0..3 {
                assert_abs_diff_eq!(a[i], b[i], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn equatorial_point_flows_straight_down() {
        // s = (1/2, 0, 0): rhs = (0, 0, -gamma) for eps = 0, any g
        let p = dec(0.0, 1.0, 0.35, 2.7);
        let r = bloch_rhs(&BlochVector::new(0.5, 0.0, 0.0), &p);
        assert_abs_diff_eq!(r[0], 0.0);
        assert_abs_diff_eq!(r[1], 0.0);
        assert_abs_diff_eq!(r[2], -0.35, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_fixed_points_annihilate_the_flow() {
        for &(gamma, g) in &[(0.5, 2.0), (0.75, 3.0), (1.25, 3.0), (0.0, 3.0), (2.0, 0.5)] {
            let p = dec(0.0, 1.0, gamma, g);
            let v = p.v;
            let d = g * g + gamma * gamma;
            let mut pts = Vec::new();
            if gamma <= v {
                let x = 0.5 * (1.0 - gamma * gamma / (v * v)).sqrt();
                pts.push(BlochVector::new(x, gamma / (2.0 * v), 0.0));
                pts.push(BlochVector::new(-x, gamma / (2.0 * v), 0.0));
            }
            if d >= v * v {
                let z = 0.5 * (1.0 - v * v / d).sqrt();
                pts.push(BlochVector::new(g * v / (2.0 * d), gamma * v / (2.0 * d), z));
                pts.push(BlochVector::new(g * v / (2.0 * d), gamma * v / (2.0 * d), -z));
            }
            for s in pts {
                let r = bloch_rhs(&s, &p);
                let res = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
                assert!(res < 1e-13, "residual {res} at gamma={gamma}, g={g}");
            }
        }
    }

    #[test]
    fn canonical_rhs_reference_and_chart_guard() {
        let p = dec(0.0, 1.3, 0.0, 0.0);
        let pt = CanonicalPoint::new(0.0, std::f64::consts::FRAC_PI_4).unwrap();
        let (qd, pd) = canonical_rhs(&pt, &p).unwrap();
        assert_abs_diff_eq!(qd, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pd, 2.0 * 1.3, epsilon = 1e-14);

        let near_pole = CanonicalPoint { p: 0.999999999999, q: 0.0, at_pole: false };
        assert!(matches!(
            canonical_rhs(&near_pole, &dec(0.0, 1.0, 0.1, 0.0)),
            Err(MeanFieldError::ChartSingular(_))
        ));
    }

    #[test]
    fn canonical_rhs_matches_bloch_rhs_through_the_chart() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let params = dec(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.0..1.5),
                rng.gen_range(-3.0..3.0),
            );
            let p = rng.gen_range(-0.95..0.95);
            let q = rng.gen_range(0.0..std::f64::consts::PI);
            let pt = CanonicalPoint { p, q, at_pole: false };
            let (qd, pd) = canonical_rhs(&pt, &params).unwrap();
            // tangent map of the chart
            let r = (1.0 - p * p).sqrt();
            let (s2q, c2q) = (2.0 * q).sin_cos();
            let dsx = 0.5 * (-p / r * c2q * pd - r * s2q * 2.0 * qd);
            let dsy = 0.5 * (-p / r * s2q * pd + r * c2q * 2.0 * qd);
            let dsz = 0.5 * pd;
            let s = bloch_from_canonical(&pt).unwrap();
            let b = bloch_rhs(&s, &params);
            assert!((dsx - b[0]).abs() < 1e-10);
            assert!((dsy - b[1]).abs() < 1e-10);
            assert!((dsz - b[2]).abs() < 1e-10);
        }
    }

    #[test]
    fn gp_unnormalized_norm_law() {
        // norm rate from the flow must equal -2 gamma (1 + kappa) n
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..300 {
            let p = dec(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.0..1.5),
                rng.gen_range(-3.0..3.0),
            );
            let psi = SpinorState::new(
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
            if psi.norm_sq() < 0.1 {
                continue;
            }
            let (d1, d2) = gp_rhs_unnormalized(&psi, &p).unwrap();
            let ndot = 2.0 * (psi.psi1.conj() * d1 + psi.psi2.conj() * d2).re;
            let n = psi.norm_sq();
            let k = (psi.psi1.norm_sqr() - psi.psi2.norm_sqr()) / n;
            assert_abs_diff_eq!(ndot, -2.0 * p.gamma * (1.0 + k) * n, epsilon = 1e-12);
        }
        // psi = (0, 1): the stable level does not decay
        let p = dec(0.0, 1.0, 0.8, 1.0);
        let psi = SpinorState::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0));
        let (d1, d2) = gp_rhs_unnormalized(&psi, &p).unwrap();
        let ndot = 2.0 * (psi.psi1.conj() * d1 + psi.psi2.conj() * d2).re;
        assert_abs_diff_eq!(ndot, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gp_normalized_conserves_norm() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let p = dec(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.0..1.5),
                rng.gen_range(-3.0..3.0),
            );
            let raw = SpinorState::new(
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
            if raw.norm_sq() < 0.05 {
                continue;
            }
            let phi = raw.normalized().unwrap();
            let (d1, d2) = gp_rhs_normalized(&phi, &p).unwrap();
            let ndot = 2.0 * (phi.psi1.conj() * d1 + phi.psi2.conj() * d2).re;
            assert!(ndot.abs() < 1e-13, "norm leak {ndot}");
        }
    }

    #[test]
    fn gp_normalized_requires_unit_norm() {
        let p = dec(0.0, 1.0, 0.1, 0.0);
        let phi = SpinorState::new(C64::new(0.9, 0.0), C64::new(0.5, 0.0));
        assert!(matches!(
            gp_rhs_normalized(&phi, &p),
            Err(MeanFieldError::NotNormalized(_))
        ));
    }

    #[test]
    fn phi_canonical_matches_bloch_rhs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        for _ in 0..1000 {
            let params = dec(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.0..1.5),
                rng.gen_range(-3.0..3.0),
            );
            let p: f64 = rng.gen_range(-0.9..0.9);
            let q: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let phi1 = C64::from_polar(((p + 1.0) / 2.0).sqrt(), -2.0 * q);
            let d = phi_canonical_rhs(phi1, &params).unwrap();
            // finite-difference Bloch image
            let dt = 1e-8;
            let bloch_of = |z: C64| {
                let phi2 = (1.0 - z.norm_sqr()).max(0.0).sqrt();
                bloch_from_spinor(&SpinorState::new(z, C64::new(phi2, 0.0))).unwrap()
            };
            let s0 = bloch_of(phi1);
            let s1 = bloch_of(phi1 + d * dt);
            let fd = [(s1.sx - s0.sx) / dt, (s1.sy - s0.sy) / dt, (s1.sz - s0.sz) / dt];
            let b = bloch_rhs(&s0, &params);
            for i in 0..3 {
                assert!((fd[i] - b[i]).abs() < 2e-5, "component {i}: {} vs {}", fd[i], b[i]);
            }
        }
    }

    #[test]
    fn phi_canonical_guards_gauge_singularities() {
        let p = dec(0.0, 1.0, 0.1, 0.0);
        assert!(matches!(
            phi_canonical_rhs(C64::new(1e-8, 0.0), &p),
            Err(MeanFieldError::GaugeSingular(_))
        ));
        assert!(matches!(
            phi_canonical_rhs(C64::new(1.0 - 1e-14, 0.0), &p),
            Err(MeanFieldError::GaugeSingular(_))
        ));
    }

    #[test]
    fn phi_constraint_is_preserved() {
        // |phi1|^2 + phi2^2 stays 1 by construction of phi2_rate
        let p = dec(0.2, 1.0, 0.3, 1.0);
        let phi1 = C64::from_polar(0.6, 0.8);
        let d = phi_canonical_rhs(phi1, &p).unwrap();
        let phi2 = (1.0 - phi1.norm_sqr()).sqrt();
        let constraint_rate = 2.0 * (d * phi1.conj()).re + 2.0 * phi2 * phi2_rate(phi1, d);
        assert!(constraint_rate.abs() < 1e-14);
    }

    #[test]
    fn rabi_period_in_the_hermitian_phi_flow() {
        // g = 0, gamma = 0, eps = 0: |phi1|^2 oscillates with period pi/v
        let v = 1.0;
        let p = dec(0.0, v, 0.0, 0.0);
        let s0 = BlochVector::from_angles(1.0, 0.3);
        let period = std::f64::consts::PI / v;
        let grid: Vec<f64> = (0..=100).map(|i| period * i as f64 / 100.0).collect();
        let run = integrate_meanfield(&s0, &p, &grid, Formulation::PhiCanonical, &Default::default())
            .unwrap();
        let first = run.trajectory.states[0].sz;
        let last = run.trajectory.states.last().unwrap().sz;
        assert_abs_diff_eq!(first, last, epsilon = 1e-8);
    }

    #[test]
    fn hamiltonian_values() {
        let p = dec(0.0, 1.0, 0.0, 0.0);
        let h = hamiltonian_value(&BlochVector::new(0.5, 0.0, 0.0), &p);
        assert_abs_diff_eq!(h.h, 1.0);
        assert_abs_diff_eq!(h.gamma, 0.0);

        // equatorial fixed points carry the linear eigenvalues
        let p = dec(0.0, 1.0, 0.6, 1.7);
        let x = 0.5 * (1.0f64 - 0.36).sqrt();
        let h = hamiltonian_value(&BlochVector::new(x, 0.3, 0.0), &p);
        assert_abs_diff_eq!(h.h, (1.0f64 - 0.36).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(h.gamma, 0.0);

        // self-trapped pair: Gamma = +-2 gamma sz
        let p = dec(0.0, 1.0, 0.5, 2.0);
        let sz = 0.5 * (1.0 - 1.0 / 4.25f64).sqrt();
        let d = 4.25;
        let h = hamiltonian_value(&BlochVector::new(2.0 / (2.0 * d), 0.5 / (2.0 * d), sz), &p);
        assert_abs_diff_eq!(h.gamma, 2.0 * 0.5 * sz, epsilon = 1e-15);
        assert_abs_diff_eq!(h.gamma, 0.4372373160976031, epsilon = 1e-12);
    }

    #[test]
    fn norm_is_constant_without_decay() {
        let p = dec(0.3, 1.0, 0.0, 1.5);
        let grid: Vec<f64> = (0..=50).map(|i| 0.2 * i as f64).collect();
        let run = integrate_meanfield(
            &BlochVector::from_angles(2.0, 1.0),
            &p,
            &grid,
            Formulation::Bloch,
            &Default::default(),
        )
        .unwrap();
        for &n in &run.trajectory.norms {
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-9);
        }
        run.trajectory.validate().unwrap();
    }

    #[test]
    fn hermitian_flow_conserves_energy() {
        let p = dec(0.2, 1.0, 0.0, 2.0);
        let grid: Vec<f64> = (0..=100).map(|i| 0.2 * i as f64).collect();
        let s0 = BlochVector::from_angles(1.2, 0.7);
        let run =
            integrate_meanfield(&s0, &p, &grid, Formulation::Bloch, &Default::default()).unwrap();
        let e0 = hamiltonian_value(&s0, &p).h;
        for s in &run.trajectory.states {
            assert!((hamiltonian_value(s, &p).h - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn decaying_norm_decreases_monotonically() {
        let p = dec(0.0, 1.0, 0.4, 1.0);
        let grid: Vec<f64> = (0..=200).map(|i| 0.1 * i as f64).collect();
        let run = integrate_meanfield(
            &BlochVector::from_angles(0.4, 0.0),
            &p,
            &grid,
            Formulation::Bloch,
            &Default::default(),
        )
        .unwrap();
        for w in run.trajectory.norms.windows(2) {
            assert!(w[1] < w[0] + 1e-12, "norm not monotone: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn staircase_decay_matches_linear_closed_form() {
        // g = 0: the coupled (s, n) integration must match the 2x2 propagator
        let p = dec(0.0, 1.0, 0.1, 0.0);
        let grid: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
        let run = integrate_meanfield(
            &BlochVector::north_pole(),
            &p,
            &grid,
            Formulation::Bloch,
            &Default::default(),
        )
        .unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let u = linear2::propagator(&p, t);
            let n_exact = u[(0, 0)].norm_sqr() + u[(1, 0)].norm_sqr();
            assert!(
                (run.trajectory.norms[i] - n_exact).abs() < 1e-8,
                "t={t}: {} vs {}",
                run.trajectory.norms[i],
                n_exact
            );
        }
    }

    #[test]
    fn north_pole_start_relaxes_into_the_sink() {
        // g=2, gamma=0.5, v=1: sink at sz = -0.437237...
        let p = dec(0.0, 1.0, 0.5, 2.0);
        let grid: Vec<f64> = (0..=60).map(|i| i as f64).collect();
        let run = integrate_meanfield(
            &BlochVector::north_pole(),
            &p,
            &grid,
            Formulation::Bloch,
            &Default::default(),
        )
        .unwrap();
        let sz_end = run.trajectory.states.last().unwrap().sz;
        assert_abs_diff_eq!(sz_end, -0.4372373160976031, epsilon = 1e-6);
    }

    #[test]
    fn pt_and_decaying_renormalized_trajectories_coincide() {
        let grid: Vec<f64> = (0..=80).map(|i| 0.25 * i as f64).collect();
        let s0 = BlochVector::from_angles(0.9, 2.0);
        let base = SystemParams::decaying(0.1, 1.0, 0.35, 1.2).unwrap();
        let run_dec =
            integrate_meanfield(&s0, &base, &grid, Formulation::Bloch, &Default::default())
                .unwrap();
        let run_pt = integrate_meanfield(
            &s0,
            &base.with_variant(Variant::PtShifted),
            &grid,
            Formulation::Bloch,
            &Default::default(),
        )
        .unwrap();
        for (a, b) in run_dec.trajectory.states.iter().zip(&run_pt.trajectory.states) {
            assert!(a.distance(b) < 1e-9);
        }
        // and the norms differ by exp(2 gamma t)
        for ((a, b), &t) in run_dec
            .trajectory
            .norms
            .iter()
            .zip(&run_pt.trajectory.norms)
            .zip(&grid)
        {
            let ratio = b / a;
            assert!((ratio.ln() - 2.0 * 0.35 * t).abs() < 1e-7);
        }
    }
}
