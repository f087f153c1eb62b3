//! Run configuration: every knob a subcommand can take, mergeable from a
//! JSON file with command-line flags taking precedence. The effective
//! (merged, defaulted) configuration can be dumped back out and replayed.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dimer_core::experiments::{GridCoords, SweepParameter};
use dimer_core::meanfield::Formulation;
use dimer_core::{SystemParams, Variant};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub epsilon: Option<f64>,
    pub v: Option<f64>,
    pub gamma: Option<f64>,
    pub g: Option<f64>,
    /// Alternative to `g`: the interaction given as `c * N`.
    pub c_times_n: Option<f64>,
    pub n_particles: Option<u32>,
    pub variant: Option<Variant>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub atol: Option<f64>,
    pub rtol: Option<f64>,
    /// Sweep spec `param:start:stop:count`, e.g. `gamma:0:1.2:121`.
    pub sweep: Option<String>,
    pub include_meanfield: Option<bool>,
    pub formulation: Option<Formulation>,
    pub theta0: Option<f64>,
    pub phi0: Option<f64>,
    pub t_max: Option<f64>,
    pub n_steps: Option<usize>,
    pub grid_coords: Option<GridCoords>,
    pub grid_n1: Option<usize>,
    pub grid_n2: Option<usize>,
    pub g_min: Option<f64>,
    pub g_max: Option<f64>,
    pub g_count: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &PathBuf) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("bad config {}", path.display()))
    }

    /// Fill every `None` in `self` from `other` (flags override file).
    pub fn merged_over(mut self, other: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = other.$f; } )* };
        }
        take!(
            command, epsilon, v, gamma, g, c_times_n, n_particles, variant, out, threads, atol,
            rtol, sweep, include_meanfield, formulation, theta0, phi0, t_max, n_steps,
            grid_coords, grid_n1, grid_n2, g_min, g_max, g_count
        );
        self
    }

    /// Physical parameters with validation; `--g` and `--c-times-n` are
    /// mutually exclusive spellings of the same quantity.
    pub fn params(&self) -> Result<SystemParams> {
        if self.g.is_some() && self.c_times_n.is_some() {
            bail!("give either --g or --c-times-n, not both");
        }
        let g = self.g.or(self.c_times_n).unwrap_or(0.0);
        SystemParams::new(
            self.epsilon.unwrap_or(0.0),
            self.v.unwrap_or(1.0),
            self.gamma.unwrap_or(0.0),
            g,
            self.n_particles,
            self.variant.unwrap_or(Variant::Decaying),
        )
        .map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn require_particles(&self) -> Result<u32> {
        self.n_particles
            .ok_or_else(|| anyhow::anyhow!("this command needs --n-particles"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRange {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

/// Parse `param:start:stop:count`.
pub fn parse_sweep(text: &str) -> Result<SweepRange> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 4 {
        bail!("sweep must be param:start:stop:count, got {text:?}");
    }
    let parameter = match parts[0] {
        "gamma" => SweepParameter::Gamma,
        "g" => SweepParameter::G,
        "epsilon" => SweepParameter::Epsilon,
        other => bail!("unknown sweep parameter {other:?} (use gamma, g or epsilon)"),
    };
    let start: f64 = parts[1].parse().context("sweep start")?;
    let stop: f64 = parts[2].parse().context("sweep stop")?;
    let count: usize = parts[3].parse().context("sweep count")?;
    if count < 2 || !start.is_finite() || !stop.is_finite() {
        bail!("sweep needs a finite range and count >= 2");
    }
    Ok(SweepRange { parameter, start, stop, count })
}
