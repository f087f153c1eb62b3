//! Reproduction drivers: spectral sweeps with branch continuity, half-life
//! maps over initial conditions (mean-field and many-particle), the
//! self-trapping transition, side-by-side many-particle/mean-field
//! evolution, and saddle-manifold tracing. Emits CSV (12 significant
//! digits) and JSON for downstream plotting; no rendering here.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{self, Write};
use thiserror::Error;

use crate::domain::{BlochVector, SystemParams, Trajectory};
use crate::fixedpoints::{self, FixedPointKind};
use crate::manybody::{self, Stepper};
use crate::meanfield::{self, Formulation, IntegrationOptions, MeanFieldError};
use crate::numerics::{integrate, Event, EventDirection, NumericsError, OdeOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("sweep needs at least 2 points, got {0}")]
    DegenerateSweep(usize),
    #[error("half-life search requires gamma > 0")]
    NoDecay,
    #[error("no saddle point at these parameters")]
    NoSaddle,
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error(transparent)]
    FixedPoint(#[from] fixedpoints::FixedPointError),
    #[error(transparent)]
    ManyBody(#[from] manybody::ManyBodyError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Format with 12 significant digits, the file contract for all CSV output.
pub fn fmt_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Default time cap for half-life searches.
pub fn default_t_max(gamma: f64) -> f64 {
    (50.0 / gamma).min(1e4)
}

// ---------------------------------------------------------------------------
// spectral sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Gamma,
    G,
    Epsilon,
}

/// Sweep one parameter over a linear range at fixed remaining parameters.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub base: SystemParams,
    pub n_particles: u32,
    /// Attach mean-field energies (Hamiltonian-function values at the fixed
    /// points) to each row.
    pub include_meanfield: bool,
}

impl SweepSpec {
    fn value_at(&self, i: usize) -> f64 {
        self.start + (self.stop - self.start) * i as f64 / (self.count - 1) as f64
    }

    fn params_at(&self, i: usize) -> SystemParams {
        let mut p = self.base;
        match self.parameter {
            SweepParameter::Gamma => p.gamma = self.value_at(i),
            SweepParameter::G => p.g = self.value_at(i),
            SweepParameter::Epsilon => p.epsilon = self.value_at(i),
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumRow {
    pub value: f64,
    /// Eigenvalues ordered by continuity along the sweep.
    pub eigenvalues: Vec<C64>,
    /// Mean-field energies, when requested (2 or 4 per row).
    pub mf_energies: Vec<C64>,
    /// Set when two branches come closer than the collision threshold
    /// (an exceptional point is nearby; branch identity is not meaningful
    /// across such a row).
    pub ep_flag: bool,
    /// Eigensolve failed here; the row carries no data.
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct SpectrumSweep {
    pub parameter: SweepParameter,
    pub rows: Vec<SpectrumRow>,
}

/// Threshold under which two eigenvalues count as colliding (relative to
/// the spectral scale).
const COLLISION_REL_TOL: f64 = 1e-6;

/// Reorder `current` to follow `previous` by greedy global
/// nearest-neighbor matching.
fn match_branches(previous: &[C64], current: &[C64]) -> Vec<C64> {
    let n = previous.len();
    let mut used = vec![false; n];
    let mut out = vec![C64::new(0.0, 0.0); n];
    // repeatedly take the globally closest (prev slot, current value) pair
    let mut filled = vec![false; n];
    for _ in 0..n {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for i in 0..n {
            if filled[i] {
                continue;
            }
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let d = (previous[i] - current[j]).norm();
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, i, j) = best;
        out[i] = current[j];
        filled[i] = true;
        used[j] = true;
    }
    out
}

pub fn spectrum_sweep(spec: &SweepSpec) -> Result<SpectrumSweep, ExperimentError> {
    if spec.count < 2 {
        return Err(ExperimentError::DegenerateSweep(spec.count));
    }
    // eigenvalues in parallel, continuity matching sequentially
    let raw: Vec<Result<Vec<C64>, ()>> = (0..spec.count)
        .into_par_iter()
        .map(|i| manybody::spectrum(&spec.params_at(i), spec.n_particles).map_err(|_| ()))
        .collect();
    let mut rows: Vec<SpectrumRow> = Vec::with_capacity(spec.count);
    let mut prev: Option<Vec<C64>> = None;
    for (i, r) in raw.into_iter().enumerate() {
        let value = spec.value_at(i);
        let mf_energies = if spec.include_meanfield {
            fixedpoints::meanfield_energies(&spec.params_at(i)).unwrap_or_default()
        } else {
            Vec::new()
        };
        match r {
            Err(()) => rows.push(SpectrumRow {
                value,
                eigenvalues: Vec::new(),
                mf_energies,
                ep_flag: false,
                failed: true,
            }),
            Ok(mut ev) => {
                match &prev {
                    None => ev.sort_by(|a, b| {
                        (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap()
                    }),
                    Some(p) => ev = match_branches(p, &ev),
                }
                let scale = ev.iter().map(|z| z.norm()).fold(1.0, f64::max);
                let mut collide = false;
                for a in 0..ev.len() {
                    for b in (a + 1)..ev.len() {
                        if (ev[a] - ev[b]).norm() < COLLISION_REL_TOL * scale {
                            collide = true;
                        }
                    }
                }
                prev = Some(ev.clone());
                rows.push(SpectrumRow {
                    value,
                    eigenvalues: ev,
                    mf_energies,
                    ep_flag: collide,
                    failed: false,
                });
            }
        }
    }
    Ok(SpectrumSweep { parameter: spec.parameter, rows })
}

pub fn write_spectrum_csv(w: &mut dyn Write, sweep: &SpectrumSweep) -> io::Result<()> {
    let n_ev = sweep.rows.iter().map(|r| r.eigenvalues.len()).max().unwrap_or(0);
    let n_mf = sweep.rows.iter().map(|r| r.mf_energies.len()).max().unwrap_or(0);
    let pname = match sweep.parameter {
        SweepParameter::Gamma => "gamma",
        SweepParameter::G => "g",
        SweepParameter::Epsilon => "epsilon",
    };
    let mut header = vec![pname.to_string()];
    for k in 0..n_ev {
        header.push(format!("re_{k}"));
        header.push(format!("im_{k}"));
    }
    for k in 0..n_mf {
        header.push(format!("mf_re_{k}"));
        header.push(format!("mf_im_{k}"));
    }
    header.push("ep_flag".into());
    header.push("failed".into());
    writeln!(w, "{}", header.join(","))?;
    for row in &sweep.rows {
        let mut cells = vec![fmt_sig12(row.value)];
        for k in 0..n_ev {
            match row.eigenvalues.get(k) {
                Some(z) => {
                    cells.push(fmt_sig12(z.re));
                    cells.push(fmt_sig12(z.im));
                }
                None => {
                    cells.push(String::new());
                    cells.push(String::new());
                }
            }
        }
        for k in 0..n_mf {
            match row.mf_energies.get(k) {
                Some(z) => {
                    cells.push(fmt_sig12(z.re));
                    cells.push(fmt_sig12(z.im));
                }
                None => {
                    cells.push(String::new());
                    cells.push(String::new());
                }
            }
        }
        cells.push(row.ep_flag.to_string());
        cells.push(row.failed.to_string());
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// half-life maps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridCoords {
    /// Polar/azimuth angles; rows at midpoints so the poles are avoided.
    ThetaPhi,
    /// Canonical `(p, q)`; rows at midpoints so `|p| < 1`.
    PQ,
}

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub coords: GridCoords,
    pub n1: usize,
    pub n2: usize,
}

impl GridSpec {
    /// Grid points as `(coord1, coord2, initial Bloch vector)`, row-major.
    pub fn points(&self) -> Vec<(f64, f64, BlochVector)> {
        let mut out = Vec::with_capacity(self.n1 * self.n2);
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                match self.coords {
                    GridCoords::ThetaPhi => {
                        let theta = std::f64::consts::PI * (i as f64 + 0.5) / self.n1 as f64;
                        let phi = 2.0 * std::f64::consts::PI * j as f64 / self.n2 as f64;
                        out.push((theta, phi, BlochVector::from_angles(theta, phi)));
                    }
                    GridCoords::PQ => {
                        let p = -1.0 + 2.0 * (i as f64 + 0.5) / self.n1 as f64;
                        let q = std::f64::consts::PI * j as f64 / self.n2 as f64;
                        let pt = crate::domain::CanonicalPoint { p, q, at_pole: false };
                        out.push((p, q, crate::domain::bloch_from_canonical(&pt).unwrap()));
                    }
                }
            }
        }
        out
    }
}

/// Half-life sentinel written to files for capped entries.
pub const HALF_LIFE_SENTINEL: f64 = -1.0;

#[derive(Debug, Clone)]
pub struct HalfLifeMap {
    pub grid: GridSpec,
    pub params: SystemParams,
    pub n_particles: Option<u32>,
    pub t_max: f64,
    /// Half-life per grid point (row-major); sentinel where capped.
    pub values: Vec<f64>,
    pub capped: Vec<bool>,
}

/// Half-life of the mean-field survival probability: the first time
/// `n(t) = 1/2`, per initial condition on the grid.
pub fn halflife_meanfield(
    params: &SystemParams,
    grid: &GridSpec,
    t_max: Option<f64>,
) -> HalfLifeMap {
    let points = grid.points();
    let t_cap = t_max.unwrap_or_else(|| default_t_max(params.gamma));
    let results: Vec<(f64, bool)> = points
        .par_iter()
        .map(|(_, _, s0)| {
            if params.gamma == 0.0 {
                return (HALF_LIFE_SENTINEL, true);
            }
            match meanfield_halflife_single(s0, params, t_cap) {
                Some(t) => (t, false),
                None => (HALF_LIFE_SENTINEL, true),
            }
        })
        .collect();
    HalfLifeMap {
        grid: *grid,
        params: *params,
        n_particles: None,
        t_max: t_cap,
        values: results.iter().map(|r| r.0).collect(),
        capped: results.iter().map(|r| r.1).collect(),
    }
}

/// One mean-field half-life: integrate `(s, log n)` with a terminal event
/// at `log n = ln(1/2)`.
pub fn meanfield_halflife_single(s0: &BlochVector, params: &SystemParams, t_max: f64) -> Option<f64> {
    meanfield_halflife_single_opts(s0, params, t_max, &OdeOptions::default())
}

pub fn meanfield_halflife_single_opts(
    s0: &BlochVector,
    params: &SystemParams,
    t_max: f64,
    ode: &OdeOptions,
) -> Option<f64> {
    let p = *params;
    let mut rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), String> {
        let s = BlochVector::new(y[0], y[1], y[2]);
        let r = meanfield::bloch_rhs(&s, &p);
        dy[0] = r[0];
        dy[1] = r[1];
        dy[2] = r[2];
        dy[3] = meanfield::norm_rate(&s, &p);
        Ok(())
    };
    let target = 0.5f64.ln();
    let g = move |_t: f64, y: &[f64]| y[3] - target;
    let ev = Event { g: &g, direction: EventDirection::Falling, terminal: true };
    let projector = |y: &mut [f64]| -> f64 {
        let s = BlochVector::new(y[0], y[1], y[2]);
        let d = s.sphere_defect().abs();
        let pr = s.projected();
        y[0] = pr.sx;
        y[1] = pr.sy;
        y[2] = pr.sz;
        d
    };
    let sol = integrate(
        &mut rhs,
        &[s0.sx, s0.sy, s0.sz, 0.0],
        (0.0, t_max),
        ode,
        Some(&ev),
        Some(&projector),
    )
    .ok()?;
    sol.event.map(|(t, _)| t)
}

/// Half-life of the rescaled many-particle norm `<Psi|Psi>^(1/N) = 1/2`
/// from coherent initial states on the grid; located by uniform stepping
/// plus bisection inside the bracketing step.
pub fn halflife_manybody(
    params: &SystemParams,
    n: u32,
    grid: &GridSpec,
    t_max: Option<f64>,
) -> Result<HalfLifeMap, ExperimentError> {
    if params.gamma < 0.0 {
        return Err(ExperimentError::NoDecay);
    }
    let points = grid.points();
    let t_cap = t_max.unwrap_or_else(|| default_t_max(params.gamma));
    let dt = 0.05 / params.v;
    let results: Vec<Result<(f64, bool), ExperimentError>> = points
        .par_iter()
        .map(|(_, _, s0)| {
            if params.gamma == 0.0 {
                return Ok((HALF_LIFE_SENTINEL, true));
            }
            let theta = (2.0 * s0.sz).clamp(-1.0, 1.0).acos();
            let phi = s0.sy.atan2(s0.sx);
            let psi0 = manybody::coherent_state(theta, phi, n);
            let target = (n as f64) * 0.5f64.ln(); // log norm_sq at rescaled = 1/2... see below
            // rescaled_norm = exp(log_norm_sq / N) = 1/2  <=>  log_norm_sq = N ln(1/2)
            let mut st = Stepper::new(&psi0, params, dt)?;
            while st.t < t_cap {
                st.step();
                if st.log_norm_sq <= target {
                    // bracketed in (t - dt, t]: bisect on a partial step,
                    // rewinding from the current state (offset mid - dt <= 0)
                    let mut lo = 0.0f64;
                    let mut hi = dt;
                    let base_t = st.t - dt;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let l = st.log_norm_sq_at_offset(mid - dt)?;
                        if l <= target {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                        if hi - lo < 1e-10 {
                            break;
                        }
                    }
                    return Ok((base_t + 0.5 * (lo + hi), false));
                }
            }
            Ok((HALF_LIFE_SENTINEL, true))
        })
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut capped = Vec::with_capacity(results.len());
    for r in results {
        let (v, c) = r?;
        values.push(v);
        capped.push(c);
    }
    Ok(HalfLifeMap {
        grid: *grid,
        params: *params,
        n_particles: Some(n),
        t_max: t_cap,
        values,
        capped,
    })
}

pub fn write_halflife_csv(w: &mut dyn Write, map: &HalfLifeMap) -> io::Result<()> {
    let (c1, c2) = match map.grid.coords {
        GridCoords::ThetaPhi => ("theta", "phi"),
        GridCoords::PQ => ("p", "q"),
    };
    writeln!(w, "{c1},{c2},half_life,capped")?;
    for ((coord, value), capped) in map
        .grid
        .points()
        .iter()
        .map(|(a, b, _)| (*a, *b))
        .zip(&map.values)
        .zip(&map.capped)
    {
        let (a, b) = coord;
        writeln!(
            w,
            "{},{},{},{}",
            fmt_sig12(a),
            fmt_sig12(b),
            fmt_sig12(*value),
            capped
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// self-trapping

#[derive(Debug, Clone)]
pub struct SelfTrapMap {
    pub g_values: Vec<f64>,
    pub t_values: Vec<f64>,
    /// `sz[i][j]` = z-component at `t_values[j]` for `g_values[i]`.
    pub sz: Vec<Vec<f64>>,
}

/// `s_z(t; g)` rows for an initial state `s0`, over a linear `g` range.
pub fn selftrapping_map(
    base: &SystemParams,
    g_range: (f64, f64, usize),
    t_max: f64,
    n_t: usize,
    s0: &BlochVector,
) -> Result<SelfTrapMap, ExperimentError> {
    let (g0, g1, ng) = g_range;
    if ng < 2 {
        return Err(ExperimentError::DegenerateSweep(ng));
    }
    let g_values: Vec<f64> =
        (0..ng).map(|i| g0 + (g1 - g0) * i as f64 / (ng - 1) as f64).collect();
    let t_values: Vec<f64> =
        (0..n_t).map(|j| t_max * j as f64 / (n_t - 1) as f64).collect();
    let sz: Vec<Vec<f64>> = g_values
        .par_iter()
        .map(|&g| {
            let p = SystemParams { g, ..*base };
            let run = meanfield::integrate_meanfield(
                s0,
                &p,
                &t_values,
                Formulation::Bloch,
                &IntegrationOptions::default(),
            )?;
            Ok::<_, ExperimentError>(run.trajectory.states.iter().map(|s| s.sz).collect())
        })
        .collect::<Result<_, _>>()?;
    Ok(SelfTrapMap { g_values, t_values, sz })
}

pub fn write_selftrap_csv(w: &mut dyn Write, map: &SelfTrapMap) -> io::Result<()> {
    writeln!(w, "g,t,sz")?;
    for (i, &g) in map.g_values.iter().enumerate() {
        for (j, &t) in map.t_values.iter().enumerate() {
            writeln!(w, "{},{},{}", fmt_sig12(g), fmt_sig12(t), fmt_sig12(map.sz[i][j]))?;
        }
    }
    Ok(())
}

/// Largest `s_z` reached from `s0` within `t_max`.
pub fn max_sz_over_orbit(params: &SystemParams, s0: &BlochVector, t_max: f64) -> Result<f64, ExperimentError> {
    let n_samples = (t_max / 0.005).ceil() as usize;
    let grid: Vec<f64> = (0..=n_samples).map(|i| t_max * i as f64 / n_samples as f64).collect();
    let run = meanfield::integrate_meanfield(
        s0,
        params,
        &grid,
        Formulation::Bloch,
        &IntegrationOptions::default(),
    )?;
    Ok(run.trajectory.states.iter().map(|s| s.sz).fold(f64::NEG_INFINITY, f64::max))
}

/// Locate the separatrix interaction `g_sep` for a south-pole start: the
/// smallest `g` whose orbit no longer reaches `s_z = 0`. Bisection to 1e-4;
/// `None` when the bracket does not straddle a transition (e.g. above the
/// exceptional point, where no oscillatory regime exists at any `g`).
pub fn detect_g_sep(
    base: &SystemParams,
    g_lo: f64,
    g_hi: f64,
    t_max: f64,
) -> Result<Option<f64>, ExperimentError> {
    let trapped = |g: f64| -> Result<bool, ExperimentError> {
        let p = SystemParams { g, ..*base };
        Ok(max_sz_over_orbit(&p, &BlochVector::south_pole(), t_max)? < 0.0)
    };
    let (mut lo, mut hi) = (g_lo, g_hi);
    let t_lo = trapped(lo)?;
    let t_hi = trapped(hi)?;
    if t_lo == t_hi {
        return Ok(None);
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if trapped(mid)? == t_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

// ---------------------------------------------------------------------------
// many-particle vs. mean-field comparison

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub t: f64,
    pub mf_sz: f64,
    pub mp_sz: f64,
    pub mf_norm: f64,
    pub mp_rescaled_norm: f64,
}

/// Evolve matched initial conditions (coherent state vs. its Bloch point)
/// through both descriptions; `t_grid` must be uniform starting at 0.
pub fn compare_mp_mf(
    params: &SystemParams,
    n: u32,
    theta: f64,
    phi: f64,
    t_grid: &[f64],
) -> Result<Vec<CompareRow>, ExperimentError> {
    assert!(t_grid.len() >= 2 && t_grid[0] == 0.0, "uniform grid from 0 required");
    let dt = t_grid[1] - t_grid[0];
    assert!(
        t_grid.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() < 1e-9 * dt),
        "uniform grid required"
    );
    let s0 = BlochVector::from_angles(theta, phi);
    let mf = meanfield::integrate_meanfield(
        &s0,
        params,
        t_grid,
        Formulation::Bloch,
        &IntegrationOptions::default(),
    )?;
    let psi0 = manybody::coherent_state(theta, phi, n);
    let mut st = Stepper::new(&psi0, params, dt)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        if k > 0 {
            st.step();
        }
        let e = manybody::expectations(&st.state())?;
        rows.push(CompareRow {
            t,
            mf_sz: mf.trajectory.states[k].sz,
            mp_sz: e.lz / n as f64,
            mf_norm: mf.trajectory.norms[k],
            mp_rescaled_norm: st.rescaled_norm(),
        });
    }
    Ok(rows)
}

pub fn write_compare_csv(w: &mut dyn Write, rows: &[CompareRow]) -> io::Result<()> {
    writeln!(w, "t,mf_sz,mp_sz,mf_norm,mp_rescaled_norm")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_sig12(r.t),
            fmt_sig12(r.mf_sz),
            fmt_sig12(r.mp_sz),
            fmt_sig12(r.mf_norm),
            fmt_sig12(r.mp_rescaled_norm)
        )?;
    }
    Ok(())
}

/// Trajectory CSV used by the evolve commands.
pub fn write_trajectory_csv(w: &mut dyn Write, traj: &Trajectory) -> io::Result<()> {
    writeln!(w, "t,sx,sy,sz,norm")?;
    for i in 0..traj.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_sig12(traj.times[i]),
            fmt_sig12(traj.states[i].sx),
            fmt_sig12(traj.states[i].sy),
            fmt_sig12(traj.states[i].sz),
            fmt_sig12(traj.norms[i])
        )?;
    }
    Ok(())
}

/// Many-particle trajectory dump: `t, lx, ly, lz, norm, rescaled_norm`
/// (angular-momentum expectations normalized per particle).
pub fn evolve_manybody_csv(
    w: &mut dyn Write,
    params: &SystemParams,
    n: u32,
    theta: f64,
    phi: f64,
    t_grid: &[f64],
) -> Result<(), ExperimentError> {
    assert!(t_grid.len() >= 2 && t_grid[0] == 0.0);
    let dt = t_grid[1] - t_grid[0];
    let psi0 = manybody::coherent_state(theta, phi, n);
    let mut st = Stepper::new(&psi0, params, dt)?;
    writeln!(w, "t,lx,ly,lz,norm,rescaled_norm")?;
    for (k, &t) in t_grid.iter().enumerate() {
        if k > 0 {
            st.step();
        }
        let e = manybody::expectations(&st.state())?;
        let nn = n as f64;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_sig12(t),
            fmt_sig12(e.lx / nn),
            fmt_sig12(e.ly / nn),
            fmt_sig12(e.lz / nn),
            fmt_sig12(st.log_norm_sq.exp()),
            fmt_sig12(st.rescaled_norm())
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// saddle manifolds

#[derive(Debug, Clone)]
pub struct ManifoldCurves {
    pub saddle: BlochVector,
    /// Two branches along the unstable direction, integrated forward.
    pub unstable: [Vec<BlochVector>; 2],
    /// Two branches along the stable direction, integrated backward.
    pub stable: [Vec<BlochVector>; 2],
}

fn eigvec_2x2(m: [[f64; 2]; 2], lambda: f64) -> [f64; 2] {
    // (m - lambda) w = 0; pick the better-conditioned row
    let r1 = [m[0][0] - lambda, m[0][1]];
    let r2 = [m[1][0], m[1][1] - lambda];
    let w = if r1[0].hypot(r1[1]) >= r2[0].hypot(r2[1]) {
        [-r1[1], r1[0]]
    } else {
        [-r2[1], r2[0]]
    };
    let n = w[0].hypot(w[1]);
    [w[0] / n, w[1] / n]
}

fn trace_branch(
    params: &SystemParams,
    start: &BlochVector,
    t_end: f64,
) -> Result<Vec<BlochVector>, ExperimentError> {
    let p = *params;
    let mut rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), String> {
        let s = BlochVector::new(y[0], y[1], y[2]);
        let r = meanfield::bloch_rhs(&s, &p);
        dy.copy_from_slice(&r);
        Ok(())
    };
    let projector = |y: &mut [f64]| -> f64 {
        let s = BlochVector::new(y[0], y[1], y[2]);
        let d = s.sphere_defect().abs();
        let pr = s.projected();
        y[0] = pr.sx;
        y[1] = pr.sy;
        y[2] = pr.sz;
        d
    };
    let sol = integrate(
        &mut rhs,
        &[start.sx, start.sy, start.sz],
        (0.0, t_end),
        &OdeOptions::default(),
        None,
        Some(&projector),
    )?;
    let n_samples = (t_end.abs() / 0.01).ceil() as usize;
    let mut buf = [0.0; 3];
    let mut curve = Vec::with_capacity(n_samples + 1);
    for i in 0..=n_samples {
        let t = t_end * i as f64 / n_samples as f64;
        sol.dense.sample(t, &mut buf);
        curve.push(BlochVector::new(buf[0], buf[1], buf[2]).projected());
    }
    Ok(curve)
}

/// Stable and unstable manifolds of the saddle point, traced from offsets
/// of 1e-6 along the tangent eigenvectors. Hermitian parameters yield the
/// figure-eight separatrix; with decay the unstable branches spiral into
/// the sink.
pub fn trace_manifolds(params: &SystemParams) -> Result<ManifoldCurves, ExperimentError> {
    let locations = fixedpoints::solve(params)?;
    let saddle = locations
        .iter()
        .find(|loc| {
            fixedpoints::classify(loc, params)
                .map(|f| f.kind == FixedPointKind::Saddle)
                .unwrap_or(false)
        })
        .copied()
        .ok_or(ExperimentError::NoSaddle)?;
    let m = fixedpoints::tangent_jacobian(&saddle, params);
    let fp = fixedpoints::classify(&saddle, params)?;
    let (l1, l2) = (fp.eigenvalues[0].re, fp.eigenvalues[1].re);
    let (lu, ls) = if l1 > l2 { (l1, l2) } else { (l2, l1) };
    let (e1, e2) = saddle.tangent_basis();
    let embed = |w: [f64; 2]| -> [f64; 3] {
        [
            w[0] * e1[0] + w[1] * e2[0],
            w[0] * e1[1] + w[1] * e2[1],
            w[0] * e1[2] + w[1] * e2[2],
        ]
    };
    let wu = embed(eigvec_2x2(m, lu));
    let ws = embed(eigvec_2x2(m, ls));
    let offset = 1e-6;
    let span = 60.0 / params.v;
    let shifted = |d: [f64; 3], sign: f64| {
        BlochVector::new(
            saddle.sx + sign * offset * d[0],
            saddle.sy + sign * offset * d[1],
            saddle.sz + sign * offset * d[2],
        )
        .projected()
    };
    Ok(ManifoldCurves {
        saddle,
        unstable: [
            trace_branch(params, &shifted(wu, 1.0), span)?,
            trace_branch(params, &shifted(wu, -1.0), span)?,
        ],
        stable: [
            trace_branch(params, &shifted(ws, 1.0), -span)?,
            trace_branch(params, &shifted(ws, -1.0), -span)?,
        ],
    })
}

pub fn write_manifolds_csv(w: &mut dyn Write, curves: &ManifoldCurves) -> io::Result<()> {
    writeln!(w, "branch,point,sx,sy,sz")?;
    let mut dump = |name: &str, pts: &[BlochVector]| -> io::Result<()> {
        for (i, s) in pts.iter().enumerate() {
            writeln!(
                w,
                "{name},{i},{},{},{}",
                fmt_sig12(s.sx),
                fmt_sig12(s.sy),
                fmt_sig12(s.sz)
            )?;
        }
        Ok(())
    };
    dump("unstable+", &curves.unstable[0])?;
    dump("unstable-", &curves.unstable[1])?;
    dump("stable+", &curves.stable[0])?;
    dump("stable-", &curves.stable[1])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dec(eps: f64, v: f64, gamma: f64, g: f64) -> SystemParams {
        SystemParams::decaying(eps, v, gamma, g).unwrap()
    }

    fn pt(gamma: f64, g: f64) -> SystemParams {
        SystemParams::pt(0.0, 1.0, gamma, g).unwrap()
    }

    #[test]
    fn sweep_matches_closed_form_without_interaction() {
        let spec = SweepSpec {
            parameter: SweepParameter::Gamma,
            start: 0.0,
            stop: 1.2,
            count: 14, // grid avoids the exact exceptional point gamma = 1
            base: pt(0.0, 0.0),
            n_particles: 5,
            include_meanfield: false,
        };
        let sweep = spectrum_sweep(&spec).unwrap();
        assert_eq!(sweep.rows.len(), 14);
        for row in &sweep.rows {
            assert!(!row.failed);
            let p = SystemParams { gamma: row.value, ..pt(0.0, 0.0) };
            let cf = manybody::linear_spectrum_closed_form(&p, 5).unwrap();
            for ev in &row.eigenvalues {
                let best = cf.iter().map(|c| (c - ev).norm()).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-8, "gamma={} ev={ev}", row.value);
            }
        }
        // gamma = 0 column: PT variant has purely real spectrum
        for ev in &sweep.rows[0].eigenvalues {
            assert_abs_diff_eq!(ev.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sweep_branches_are_continuous() {
        let spec = SweepSpec {
            parameter: SweepParameter::Gamma,
            start: 0.0,
            stop: 1.2,
            count: 121,
            base: pt(0.0, 0.5),
            n_particles: 6,
            include_meanfield: false,
        };
        let sweep = spectrum_sweep(&spec).unwrap();
        let mut max_jump = 0.0f64;
        for w in sweep.rows.windows(2) {
            if w[0].ep_flag || w[1].ep_flag {
                continue;
            }
            for (a, b) in w[0].eigenvalues.iter().zip(&w[1].eigenvalues) {
                max_jump = max_jump.max((a - b).norm());
            }
        }
        // 121 points over 1.2: branch motion per step stays modest away
        // from the flagged collision rows
        assert!(max_jump < 0.5, "max branch jump {max_jump}");
    }

    #[test]
    fn spectrum_csv_shape() {
        let spec = SweepSpec {
            parameter: SweepParameter::Gamma,
            start: 0.0,
            stop: 1.0,
            count: 3,
            base: pt(0.0, 0.5),
            n_particles: 2,
            include_meanfield: true,
        };
        let sweep = spectrum_sweep(&spec).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &sweep).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("gamma,re_0,im_0,re_1,im_1,re_2,im_2"));
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn halflife_without_decay_is_all_capped() {
        let grid = GridSpec { coords: GridCoords::ThetaPhi, n1: 3, n2: 3 };
        let map = halflife_meanfield(&dec(0.0, 1.0, 0.0, 1.0), &grid, Some(10.0));
        assert!(map.capped.iter().all(|&c| c));
        assert!(map.values.iter().all(|&v| v == HALF_LIFE_SENTINEL));
    }

    #[test]
    fn linear_halflife_matches_propagator() {
        // g = 0: n(t) from the closed-form propagator crosses 1/2 at the
        // same time the event integrator reports
        let p = dec(0.0, 1.0, 0.1, 0.0);
        let s0 = BlochVector::north_pole();
        let t_half = meanfield_halflife_single(&s0, &p, 500.0).unwrap();
        let u = crate::linear2::propagator(&p, t_half);
        let n = u[(0, 0)].norm_sqr() + u[(1, 0)].norm_sqr();
        assert_abs_diff_eq!(n, 0.5, epsilon = 1e-7);
    }

    #[test]
    fn nonlinearity_stabilizes_the_south_pole_cell() {
        let grid = GridSpec { coords: GridCoords::ThetaPhi, n1: 4, n2: 1 };
        let linear = halflife_meanfield(&dec(0.0, 1.0, 0.1, 0.0), &grid, None);
        let trapped = halflife_meanfield(&dec(0.0, 1.0, 0.1, 2.0), &grid, None);
        // southernmost row is the last
        let idx = linear.values.len() - 1;
        assert!(!linear.capped[idx] && !trapped.capped[idx]);
        assert!(
            trapped.values[idx] > linear.values[idx],
            "{} vs {}",
            trapped.values[idx],
            linear.values[idx]
        );
    }

    #[test]
    fn manybody_single_particle_equals_linear_meanfield() {
        let p = dec(0.0, 1.0, 0.25, 0.0);
        let grid = GridSpec { coords: GridCoords::ThetaPhi, n1: 2, n2: 2 };
        let mp = halflife_manybody(&p, 1, &grid, Some(100.0)).unwrap();
        let mf = halflife_meanfield(&p, &grid, Some(100.0));
        for (a, b) in mp.values.iter().zip(&mf.values) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn event_times_stable_under_tolerance_refinement() {
        let p = dec(0.0, 1.0, 0.1, 1.0);
        let grid = GridSpec { coords: GridCoords::ThetaPhi, n1: 3, n2: 3 };
        let default_opts = OdeOptions::default();
        let tight = OdeOptions { atol: 1e-11, rtol: 1e-10, ..OdeOptions::default() };
        for (_, _, s0) in grid.points() {
            let a = meanfield_halflife_single_opts(&s0, &p, 500.0, &default_opts).unwrap();
            let b = meanfield_halflife_single_opts(&s0, &p, 500.0, &tight).unwrap();
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn g_sep_hermitian_is_two() {
        let g = detect_g_sep(&dec(0.0, 1.0, 0.0, 0.0), 1.5, 2.5, 60.0)
            .unwrap()
            .unwrap();
        assert!((g - 2.0).abs() < 1e-3, "g_sep = {g}");
    }

    #[test]
    fn g_sep_shrinks_with_decay_and_vanishes_above_ep() {
        let g = detect_g_sep(&dec(0.0, 1.0, 0.2, 0.0), 0.5, 2.5, 60.0)
            .unwrap()
            .unwrap();
        assert!(g < 2.0, "g_sep = {g}");
        // above the exceptional point no oscillatory regime exists
        let none = detect_g_sep(&dec(0.0, 1.0, 1.1, 0.0), 0.1, 4.0, 60.0).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn compare_linear_limit_is_exact() {
        let p = dec(0.0, 1.0, 0.3, 0.0);
        let grid: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
        let rows = compare_mp_mf(&p, 12, 1.1, 0.4, &grid).unwrap();
        for r in &rows {
            assert!((r.mf_sz - r.mp_sz).abs() < 1e-8, "t={}: {} vs {}", r.t, r.mf_sz, r.mp_sz);
            assert!(
                (r.mf_norm - r.mp_rescaled_norm).abs() < 1e-8,
                "t={}: norms {} vs {}",
                r.t,
                r.mf_norm,
                r.mp_rescaled_norm
            );
        }
    }

    #[test]
    fn compare_self_trapped_case_approaches_sink() {
        let p = dec(0.0, 1.0, 0.5, 2.0);
        let grid: Vec<f64> = (0..=200).map(|i| 0.1 * i as f64).collect();
        let rows = compare_mp_mf(&p, 20, 0.0, 0.0, &grid).unwrap();
        let last = rows.last().unwrap();
        assert_abs_diff_eq!(last.mf_sz, -0.4372373160976031, epsilon = 1e-4);
        assert!((last.mp_sz - last.mf_sz).abs() < 0.05, "mp {} mf {}", last.mp_sz, last.mf_sz);
    }

    #[test]
    fn manifolds_figure_eight_and_spiral() {
        // Hermitian: unstable branches return to the saddle
        let hermitian = dec(0.0, 1.0, 0.0, 3.0);
        let curves = trace_manifolds(&hermitian).unwrap();
        for branch in &curves.unstable {
            let far = branch.iter().any(|s| s.distance(&curves.saddle) > 0.3);
            let returns = branch
                .iter()
                .skip(branch.len() / 4)
                .any(|s| s.distance(&curves.saddle) < 1e-3);
            assert!(far && returns, "branch does not close the figure-eight");
        }

        // decaying: unstable manifold terminates at the sink
        let open = dec(0.0, 1.0, 0.75, 3.0);
        let report = fixedpoints::analyze(&open).unwrap();
        let sink = report
            .fixed_points
            .iter()
            .find(|f| f.kind == FixedPointKind::StableFocus)
            .unwrap()
            .location;
        let curves = trace_manifolds(&open).unwrap();
        for branch in &curves.unstable {
            let end = branch.last().unwrap();
            assert!(end.distance(&sink) <= 1e-3, "distance {}", end.distance(&sink));
        }
        // saddle is the equatorial point, independent of g
        assert!(curves.saddle.sz.abs() < 1e-9);
    }

    #[test]
    fn no_saddle_outside_region_two() {
        assert!(matches!(
            trace_manifolds(&dec(0.0, 1.0, 0.3, 0.2)),
            Err(ExperimentError::NoSaddle)
        ));
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(fmt_sig12(1.0), "1.00000000000e0");
        assert_eq!(fmt_sig12(-0.125), "-1.25000000000e-1");
    }
}
