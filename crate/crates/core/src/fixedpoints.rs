//! Fixed points of the nonlinear Bloch flow: solving the quartic, Jacobian
//! classification in the tangent plane, the Poincare index by winding
//! number, the three parameter regions of the unbiased system, and the
//! mean-field eigenenergies (Hamiltonian-function values at the fixed
//! points).

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{BlochVector, SystemParams};
use crate::meanfield::{bloch_rhs, hamiltonian_value, HamiltonianFunction};
use crate::numerics::{roots_quartic, NumericsError};

/// Flow-residual bound below which a point counts as stationary.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FixedPointError {
    #[error("point is not stationary: flow residual {0}")]
    NotStationary(f64),
    #[error("another fixed point lies within the winding circle")]
    CircleContaminated,
    #[error("winding number ill-defined (total variation anomaly); radius {0}")]
    AmbiguousWinding(f64),
    #[error("region taxonomy is defined only for epsilon = 0, got {0}")]
    BiasedSystem(f64),
    #[error("critical interaction requires |gamma| <= v")]
    NoCriticalInteraction,
    #[error("no fixed points survived filtering; the index theorem forbids this")]
    NoFixedPoints,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Fixed-point type per the Jacobian eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FixedPointKind {
    StableNode,
    UnstableNode,
    Saddle,
    StableFocus,
    UnstableFocus,
    Center,
}

impl FixedPointKind {
    /// Table value: -1 for saddles, +1 for everything else.
    pub fn index(self) -> i32 {
        match self {
            FixedPointKind::Saddle => -1,
            _ => 1,
        }
    }
}

/// Classified fixed point.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPoint {
    #[serde(rename = "s")]
    pub location: BlochVector,
    /// Eigenvalues of the flow linearization restricted to the tangent
    /// plane.
    pub eigenvalues: [C64; 2],
    pub kind: FixedPointKind,
    pub index: i32,
    pub energy: HamiltonianFunction,
}

/// Parameter region of the unbiased system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// `gamma^2 + g^2 <= v^2`: two equatorial fixed points.
    R1,
    /// `gamma^2 + g^2 > v^2` and `|gamma| < v`: four fixed points.
    R2,
    /// `|gamma| > v`: only the self-trapping pair.
    R3,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegionLabel {
    pub region: Region,
    /// On the critical circle `gamma^2 + g^2 = v^2`.
    pub on_critical_circle: bool,
    /// On the exceptional line `gamma = v`.
    pub on_ep_line: bool,
    /// On the Hermitian line `gamma = 0`.
    pub on_hermitian_line: bool,
}

fn flow_residual(s: &BlochVector, params: &SystemParams) -> f64 {
    let r = bloch_rhs(s, params);
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

/// Fixed-point locations: real roots of
/// `4(g^2+gamma^2) sz^4 + 4 g eps sz^3 + (eps^2+v^2-g^2-gamma^2) sz^2
///  - g eps sz - eps^2/4 = 0`,
/// then `v sy = 2 gamma (1/4 - sz^2)` and `sx` from normalization with the
/// sign resolved by the flow residual. Only real solutions survive.
pub fn solve(params: &SystemParams) -> Result<Vec<BlochVector>, FixedPointError> {
    let (eps, v, gamma, g) = (params.epsilon, params.v, params.gamma, params.g);
    let c4 = 4.0 * (g * g + gamma * gamma);
    let c3 = 4.0 * g * eps;
    let c2 = eps * eps + v * v - g * g - gamma * gamma;
    let c1 = -g * eps;
    let c0 = -eps * eps / 4.0;
    let roots = if c4 == 0.0 && c3 == 0.0 && c1 == 0.0 && c0 == 0.0 {
        // Hermitian unbiased case degenerates to v^2 sz^2 = 0
        vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
    } else {
        roots_quartic(c4, c3, c2, c1, c0)?
    };
    let mut out: Vec<BlochVector> = Vec::new();
    for r in roots {
        if r.im.abs() > 1e-8 * (1.0 + r.re.abs()) {
            continue;
        }
        let sz = r.re;
        if sz.abs() > 0.5 + 1e-9 {
            continue;
        }
        let sy = 2.0 * gamma * (0.25 - sz * sz) / v;
        let sx_sq = 0.25 - sy * sy - sz * sz;
        if sx_sq < -1e-12 {
            continue;
        }
        let sx = sx_sq.max(0.0).sqrt();
        for cand in [BlochVector::new(sx, sy, sz), BlochVector::new(-sx, sy, sz)] {
            if flow_residual(&cand, params) <= RESIDUAL_TOL
                && out.iter().all(|p| p.distance(&cand) > 1e-8)
            {
                out.push(cand);
            }
        }
    }
    if out.is_empty() {
        return Err(FixedPointError::NoFixedPoints);
    }
    out.sort_by(|a, b| (a.sz, a.sx, a.sy).partial_cmp(&(b.sz, b.sx, b.sy)).unwrap());
    Ok(out)
}

/// Full 3x3 Jacobian of the nonlinear Bloch flow.
pub fn jacobian(s: &BlochVector, params: &SystemParams) -> [[f64; 3]; 3] {
    let (eps, v, gamma, g) = (params.epsilon, params.v, params.gamma, params.g);
    [
        [
            4.0 * gamma * s.sz,
            -2.0 * eps - 4.0 * g * s.sz,
            -4.0 * g * s.sy + 4.0 * gamma * s.sx,
        ],
        [
            2.0 * eps + 4.0 * g * s.sz,
            4.0 * gamma * s.sz,
            4.0 * g * s.sx - 2.0 * v + 4.0 * gamma * s.sy,
        ],
        [0.0, 2.0 * v, 8.0 * gamma * s.sz],
    ]
}

/// Linearization restricted to the tangent plane at `s` (the tangent plane
/// is invariant under the Jacobian on the sphere, so the 2x2 block is
/// exact); chart-free, works at the poles.
pub fn tangent_jacobian(s: &BlochVector, params: &SystemParams) -> [[f64; 2]; 2] {
    let j = jacobian(s, params);
    let (e1, e2) = s.tangent_basis();
    let mut m = [[0.0; 2]; 2];
    for (a, ea) in [e1, e2].iter().enumerate() {
        for (b, eb) in [e1, e2].iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..3 {
                for k in 0..3 {
                    acc += ea[i] * j[i][k] * eb[k];
                }
            }
            m[a][b] = acc;
        }
    }
    m
}

fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [C64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [C64::new(tr / 2.0 + r, 0.0), C64::new(tr / 2.0 - r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        [C64::new(tr / 2.0, r), C64::new(tr / 2.0, -r)]
    }
}

/// Threshold separating centers from foci: on the Hermitian line the real
/// part vanishes analytically, and rounding noise must not flip centers.
const CENTER_RE_TOL: f64 = 1e-8;

fn classify_eigenvalues(ev: [C64; 2]) -> FixedPointKind {
    let scale = ev[0].norm().max(ev[1].norm());
    if ev[0].im != 0.0 {
        // complex conjugate pair
        let alpha = ev[0].re;
        if alpha.abs() <= CENTER_RE_TOL * scale {
            FixedPointKind::Center
        } else if alpha < 0.0 {
            FixedPointKind::StableFocus
        } else {
            FixedPointKind::UnstableFocus
        }
    } else {
        let (l1, l2) = (ev[0].re, ev[1].re);
        if l1 * l2 < 0.0 {
            FixedPointKind::Saddle
        } else if l1 + l2 < 0.0 {
            FixedPointKind::StableNode
        } else {
            FixedPointKind::UnstableNode
        }
    }
}

/// Classify a stationary point per the Jacobian eigenvalue table and attach
/// its energy.
pub fn classify(location: &BlochVector, params: &SystemParams) -> Result<FixedPoint, FixedPointError> {
    let res = flow_residual(location, params);
    if res > RESIDUAL_TOL {
        return Err(FixedPointError::NotStationary(res));
    }
    let ev = eigenvalues_2x2(tangent_jacobian(location, params));
    let kind = classify_eigenvalues(ev);
    Ok(FixedPoint {
        location: *location,
        eigenvalues: ev,
        kind,
        index: kind.index(),
        energy: hamiltonian_value(location, params),
    })
}

/// Poincare index: winding number of the projected flow around a geodesic
/// circle of angular radius `1e-3`, sampled at 720 points with unwrapping.
/// The radius is halved (up to 3 times) if the winding is ambiguous.
pub fn poincare_index(location: &BlochVector, params: &SystemParams) -> Result<i32, FixedPointError> {
    let others: Vec<BlochVector> = solve(params)?
        .into_iter()
        .filter(|p| p.distance(location) > 1e-7)
        .collect();
    let mut radius = 1e-3;
    for _ in 0..4 {
        // no other fixed point may sit within 10x the circle radius
        if others.iter().any(|p| p.distance(location) < 10.0 * radius * 0.5) {
            return Err(FixedPointError::CircleContaminated);
        }
        match winding_number(location, params, radius) {
            Ok(w) => return Ok(w),
            Err(FixedPointError::AmbiguousWinding(_)) => {
                radius *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(FixedPointError::AmbiguousWinding(radius))
}

fn winding_number(
    location: &BlochVector,
    params: &SystemParams,
    radius: f64,
) -> Result<i32, FixedPointError> {
    let (e1, e2) = location.tangent_basis();
    let u = [2.0 * location.sx, 2.0 * location.sy, 2.0 * location.sz];
    let samples = 720;
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for k in 0..=samples {
        let alpha = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
        let (sa, ca) = alpha.sin_cos();
        let (cr, sr) = (radius.cos(), radius.sin());
        let mut point = [0.0; 3];
        for i in 0..3 {
            point[i] = 0.5 * (cr * u[i] + sr * (ca * e1[i] + sa * e2[i]));
        }
        let s = BlochVector::new(point[0], point[1], point[2]);
        let f = bloch_rhs(&s, params);
        let v1: f64 = (0..3).map(|i| e1[i] * f[i]).sum();
        let v2: f64 = (0..3).map(|i| e2[i] * f[i]).sum();
        let ang = v2.atan2(v1);
        if let Some(p) = prev {
            let mut d = ang - p;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            // a jump close to pi cannot be unwrapped reliably
            if d.abs() > 0.9 * std::f64::consts::PI {
                return Err(FixedPointError::AmbiguousWinding(radius));
            }
            total += d;
        }
        prev = Some(ang);
    }
    let w = total / (2.0 * std::f64::consts::PI);
    let rounded = w.round();
    if (w - rounded).abs() > 0.05 {
        return Err(FixedPointError::AmbiguousWinding(radius));
    }
    Ok(rounded as i32)
}

/// Region of the unbiased (`epsilon = 0`) parameter plane, with boundary
/// flags set within 1e-12 of the critical manifolds.
pub fn region_of(params: &SystemParams) -> Result<RegionLabel, FixedPointError> {
    if params.epsilon != 0.0 {
        return Err(FixedPointError::BiasedSystem(params.epsilon));
    }
    let (v, gamma, g) = (params.v, params.gamma.abs(), params.g);
    let circle = gamma * gamma + g * g - v * v;
    let region = if gamma > v {
        Region::R3
    } else if circle <= 0.0 {
        Region::R1
    } else {
        Region::R2
    };
    Ok(RegionLabel {
        region,
        on_critical_circle: circle.abs() <= 1e-12 * v * v,
        on_ep_line: (gamma - v).abs() <= 1e-12 * v,
        on_hermitian_line: gamma <= 1e-12 * v,
    })
}

/// `g_crit = sqrt(v^2 - gamma^2)`: the interaction where the equatorial
/// center bifurcates into the saddle plus the self-trapping pair.
pub fn critical_interaction(params: &SystemParams) -> Result<f64, FixedPointError> {
    if params.gamma.abs() > params.v {
        return Err(FixedPointError::NoCriticalInteraction);
    }
    Ok((params.v * params.v - params.gamma * params.gamma).sqrt())
}

/// Mean-field eigenenergies: `H - i Gamma` evaluated at every fixed point.
pub fn meanfield_energies(params: &SystemParams) -> Result<Vec<C64>, FixedPointError> {
    Ok(solve(params)?
        .iter()
        .map(|s| hamiltonian_value(s, params).complex())
        .collect())
}

/// Full report: classified fixed points, indices, the region (when
/// defined), and the index sum. Serializes to the JSON record consumed by
/// the command-line tools.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub params: SystemParams,
    pub fixed_points: Vec<FixedPoint>,
    pub region: Option<RegionLabel>,
    pub index_sum: i32,
}

pub fn analyze(params: &SystemParams) -> Result<FixedPointReport, FixedPointError> {
    let locations = solve(params)?;
    let mut fixed_points = Vec::with_capacity(locations.len());
    for loc in &locations {
        let mut fp = classify(loc, params)?;
        // the winding number must agree with the table; store the measured one
        let w = poincare_index(loc, params)?;
        debug_assert_eq!(w, fp.index, "winding disagrees with classification");
        fp.index = w;
        fixed_points.push(fp);
    }
    let index_sum = fixed_points.iter().map(|f| f.index).sum();
    let region = region_of(params).ok();
    Ok(FixedPointReport { params: *params, fixed_points, region, index_sum })
}
