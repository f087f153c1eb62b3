//! `dimersim`: command-line front end for the non-Hermitian dimer
//! simulator. Subcommands dispatch the experiment drivers and write CSV and
//! JSON files; identical configurations produce byte-identical outputs.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 validation or usage error.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use config::{parse_sweep, RunConfig};
use dimer_core::experiments::{self, GridCoords, GridSpec, SweepSpec};
use dimer_core::meanfield::{self, Formulation, IntegrationOptions};
use dimer_core::numerics::OdeOptions;
use dimer_core::{fixedpoints, BlochVector, Variant};

#[derive(Parser)]
#[command(
    name = "dimersim",
    about = "Non-Hermitian Bose-Hubbard dimer simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; unset values fall back to --config,
/// then to defaults.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Onsite bias epsilon
    #[arg(long)]
    epsilon: Option<f64>,
    /// Coupling v (> 0)
    #[arg(long)]
    v: Option<f64>,
    /// Non-Hermiticity / decay rate gamma (>= 0)
    #[arg(long)]
    gamma: Option<f64>,
    /// Macroscopic interaction g
    #[arg(long)]
    g: Option<f64>,
    /// Interaction as c*N (alternative to --g)
    #[arg(long = "c-times-n")]
    c_times_n: Option<f64>,
    /// Particle number N
    #[arg(long = "n-particles")]
    n_particles: Option<u32>,
    /// Hamiltonian variant
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// JSON config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default .)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (also DIMERSIM_THREADS)
    #[arg(long)]
    threads: Option<usize>,
    /// ODE absolute tolerance override
    #[arg(long)]
    atol: Option<f64>,
    /// ODE relative tolerance override
    #[arg(long)]
    rtol: Option<f64>,
    /// Write the effective configuration to this path before running
    #[arg(long = "dump-config")]
    dump_config: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "decaying" => Ok(Variant::Decaying),
        "pt" => Ok(Variant::PtShifted),
        other => Err(format!("unknown variant {other:?} (use decaying or pt)")),
    }
}

fn parse_formulation(s: &str) -> Result<Formulation, String> {
    match s {
        "bloch" => Ok(Formulation::Bloch),
        "canonical" => Ok(Formulation::Canonical),
        "gp-unnormalized" => Ok(Formulation::GpUnnormalized),
        "gp-normalized" => Ok(Formulation::GpNormalized),
        "phi-canonical" => Ok(Formulation::PhiCanonical),
        other => Err(format!("unknown formulation {other:?}")),
    }
}

fn parse_grid_coords(s: &str) -> Result<GridCoords, String> {
    match s {
        "theta-phi" => Ok(GridCoords::ThetaPhi),
        "pq" => Ok(GridCoords::PQ),
        other => Err(format!("unknown grid coordinates {other:?} (use theta-phi or pq)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Many-particle eigenvalue sweep (optionally with mean-field energies)
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Sweep spec: param:start:stop:count (e.g. gamma:0:1.2:121)
        #[arg(long)]
        sweep: Option<String>,
        /// Attach mean-field energies to each row
        #[arg(long = "include-meanfield", action = ArgAction::SetTrue)]
        include_meanfield: bool,
    },
    /// Integrate the mean-field dynamics
    EvolveMf {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_formulation)]
        formulation: Option<Formulation>,
        /// Initial polar angle (from the decaying mode)
        #[arg(long)]
        theta0: Option<f64>,
        /// Initial azimuth
        #[arg(long)]
        phi0: Option<f64>,
        #[arg(long = "t-max")]
        t_max: Option<f64>,
        /// Number of output samples
        #[arg(long = "n-steps")]
        n_steps: Option<usize>,
    },
    /// Propagate the exact many-particle state from a coherent start
    EvolveMp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        phi0: Option<f64>,
        #[arg(long = "t-max")]
        t_max: Option<f64>,
        #[arg(long = "n-steps")]
        n_steps: Option<usize>,
    },
    /// Side-by-side many-particle and mean-field evolution
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        phi0: Option<f64>,
        #[arg(long = "t-max")]
        t_max: Option<f64>,
        #[arg(long = "n-steps")]
        n_steps: Option<usize>,
    },
    /// Solve, classify and index the mean-field fixed points
    FixedPoints {
        #[command(flatten)]
        common: Common,
    },
    /// Half-life map of the mean-field survival probability
    HalflifeMf {
        #[command(flatten)]
        common: Common,
        #[arg(long = "grid-coords", value_parser = parse_grid_coords)]
        grid_coords: Option<GridCoords>,
        #[arg(long = "grid-n1")]
        grid_n1: Option<usize>,
        #[arg(long = "grid-n2")]
        grid_n2: Option<usize>,
        #[arg(long = "t-max")]
        t_max: Option<f64>,
    },
    /// Half-life map of the rescaled many-particle norm
    HalflifeMp {
        #[command(flatten)]
        common: Common,
        #[arg(long = "grid-coords", value_parser = parse_grid_coords)]
        grid_coords: Option<GridCoords>,
        #[arg(long = "grid-n1")]
        grid_n1: Option<usize>,
        #[arg(long = "grid-n2")]
        grid_n2: Option<usize>,
        #[arg(long = "t-max")]
        t_max: Option<f64>,
    },
    /// Population imbalance vs. interaction strength (self-trapping map)
    Selftrap {
        #[command(flatten)]
        common: Common,
        #[arg(long = "g-min")]
        g_min: Option<f64>,
        #[arg(long = "g-max")]
        g_max: Option<f64>,
        #[arg(long = "g-count")]
        g_count: Option<usize>,
        #[arg(long = "t-max")]
        t_max: Option<f64>,
        #[arg(long = "n-steps")]
        n_steps: Option<usize>,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        phi0: Option<f64>,
    },
    /// Stable and unstable manifolds of the saddle point
    Manifolds {
        #[command(flatten)]
        common: Common,
    },
}

/// Errors split by exit code: 2 for validation, 1 for numerics.
enum RunError {
    Validation(anyhow::Error),
    Numerical(anyhow::Error),
}

fn validation<E: Into<anyhow::Error>>(e: E) -> RunError {
    RunError::Validation(e.into())
}

fn numerical<E: Into<anyhow::Error>>(e: E) -> RunError {
    RunError::Numerical(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(RunError::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn common_of(cmd: &Command) -> &Common {
    match cmd {
        Command::Spectrum { common, .. }
        | Command::EvolveMf { common, .. }
        | Command::EvolveMp { common, .. }
        | Command::Compare { common, .. }
        | Command::FixedPoints { common }
        | Command::HalflifeMf { common, .. }
        | Command::HalflifeMp { common, .. }
        | Command::Selftrap { common, .. }
        | Command::Manifolds { common } => common,
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Spectrum { .. } => "spectrum",
        Command::EvolveMf { .. } => "evolve-mf",
        Command::EvolveMp { .. } => "evolve-mp",
        Command::Compare { .. } => "compare",
        Command::FixedPoints { .. } => "fixed-points",
        Command::HalflifeMf { .. } => "halflife-mf",
        Command::HalflifeMp { .. } => "halflife-mp",
        Command::Selftrap { .. } => "selftrap",
        Command::Manifolds { .. } => "manifolds",
    }
}

/// Assemble the effective configuration: flags over file over defaults.
fn effective_config(cmd: &Command) -> Result<RunConfig> {
    let common = common_of(cmd);
    let mut cfg = RunConfig {
        command: Some(command_name(cmd).to_string()),
        epsilon: common.epsilon,
        v: common.v,
        gamma: common.gamma,
        g: common.g,
        c_times_n: common.c_times_n,
        n_particles: common.n_particles,
        variant: common.variant,
        out: common.out.clone(),
        threads: common.threads,
        atol: common.atol,
        rtol: common.rtol,
        ..Default::default()
    };
    match cmd {
        Command::Spectrum { sweep, include_meanfield, .. } => {
            cfg.sweep = sweep.clone();
            cfg.include_meanfield = include_meanfield.then_some(true);
        }
        Command::EvolveMf { formulation, theta0, phi0, t_max, n_steps, .. } => {
            cfg.formulation = *formulation;
            cfg.theta0 = *theta0;
            cfg.phi0 = *phi0;
            cfg.t_max = *t_max;
            cfg.n_steps = *n_steps;
        }
        Command::EvolveMp { theta0, phi0, t_max, n_steps, .. }
        | Command::Compare { theta0, phi0, t_max, n_steps, .. } => {
            cfg.theta0 = *theta0;
            cfg.phi0 = *phi0;
            cfg.t_max = *t_max;
            cfg.n_steps = *n_steps;
        }
        Command::FixedPoints { .. } | Command::Manifolds { .. } => {}
        Command::HalflifeMf { grid_coords, grid_n1, grid_n2, t_max, .. }
        | Command::HalflifeMp { grid_coords, grid_n1, grid_n2, t_max, .. } => {
            cfg.grid_coords = *grid_coords;
            cfg.grid_n1 = *grid_n1;
            cfg.grid_n2 = *grid_n2;
            cfg.t_max = *t_max;
        }
        Command::Selftrap { g_min, g_max, g_count, t_max, n_steps, theta0, phi0, .. } => {
            cfg.g_min = *g_min;
            cfg.g_max = *g_max;
            cfg.g_count = *g_count;
            cfg.t_max = *t_max;
            cfg.n_steps = *n_steps;
            cfg.theta0 = *theta0;
            cfg.phi0 = *phi0;
        }
    }
    if let Some(path) = &common.config {
        let file_cfg = RunConfig::load(path)?;
        if let (Some(file_cmd), Some(cli_cmd)) = (&file_cfg.command, &cfg.command) {
            if file_cmd != cli_cmd {
                anyhow::bail!("config is for command {file_cmd:?} but {cli_cmd:?} was invoked");
            }
        }
        cfg = cfg.merged_over(file_cfg);
    }
    Ok(cfg)
}

fn setup_threads(cfg: &RunConfig) {
    let n = cfg
        .threads
        .or_else(|| std::env::var("DIMERSIM_THREADS").ok().and_then(|s| s.parse().ok()));
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn ode_options(cfg: &RunConfig) -> OdeOptions {
    let mut o = OdeOptions::default();
    if let Some(a) = cfg.atol {
        o.atol = a;
    }
    if let Some(r) = cfg.rtol {
        o.rtol = r;
    }
    o
}

fn uniform_grid(t_max: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|i| t_max * i as f64 / n_steps as f64).collect()
}

fn create_out(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run(cli: Cli) -> Result<(), RunError> {
    let cfg = effective_config(&cli.command).map_err(validation)?;
    if let Some(path) = &common_of(&cli.command).dump_config {
        let text = serde_json::to_string_pretty(&cfg).expect("config serializes");
        std::fs::write(path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(validation)?;
    }
    setup_threads(&cfg);
    let params = cfg.params().map_err(validation)?;
    let out_dir = cfg.out_dir();

    match &cli.command {
        Command::Spectrum { .. } => {
            let n = cfg.require_particles().map_err(validation)?;
            let sweep_text = cfg
                .sweep
                .clone()
                .ok_or_else(|| anyhow::anyhow!("spectrum needs --sweep param:start:stop:count"))
                .map_err(validation)?;
            let range = parse_sweep(&sweep_text).map_err(validation)?;
            let spec = SweepSpec {
                parameter: range.parameter,
                start: range.start,
                stop: range.stop,
                count: range.count,
                base: params,
                n_particles: n,
                include_meanfield: cfg.include_meanfield.unwrap_or(false),
            };
            let sweep = experiments::spectrum_sweep(&spec).map_err(numerical)?;
            let mut w = create_out(&out_dir, "spectrum.csv").map_err(validation)?;
            experiments::write_spectrum_csv(&mut w, &sweep).map_err(numerical)?;
        }
        Command::EvolveMf { .. } => {
            let theta = cfg.theta0.unwrap_or(0.0);
            let phi = cfg.phi0.unwrap_or(0.0);
            let t_max = cfg.t_max.unwrap_or(10.0);
            let n_steps = cfg.n_steps.unwrap_or(1000);
            let grid = uniform_grid(t_max, n_steps);
            let s0 = BlochVector::from_angles(theta, phi);
            let formulation = cfg.formulation.unwrap_or(Formulation::Bloch);
            let run = meanfield::integrate_meanfield(
                &s0,
                &params,
                &grid,
                formulation,
                &IntegrationOptions { ode: ode_options(&cfg) },
            )
            .map_err(numerical)?;
            let mut w = create_out(&out_dir, "evolve_mf.csv").map_err(validation)?;
            experiments::write_trajectory_csv(&mut w, &run.trajectory).map_err(numerical)?;
        }
        Command::EvolveMp { .. } => {
            let n = cfg.require_particles().map_err(validation)?;
            let theta = cfg.theta0.unwrap_or(0.0);
            let phi = cfg.phi0.unwrap_or(0.0);
            let t_max = cfg.t_max.unwrap_or(10.0);
            let n_steps = cfg.n_steps.unwrap_or(1000);
            let grid = uniform_grid(t_max, n_steps);
            let mut w = create_out(&out_dir, "evolve_mp.csv").map_err(validation)?;
            experiments::evolve_manybody_csv(&mut w, &params, n, theta, phi, &grid)
                .map_err(numerical)?;
        }
        Command::Compare { .. } => {
            let n = cfg.require_particles().map_err(validation)?;
            let theta = cfg.theta0.unwrap_or(0.0);
            let phi = cfg.phi0.unwrap_or(0.0);
            let t_max = cfg.t_max.unwrap_or(20.0);
            let n_steps = cfg.n_steps.unwrap_or(2000);
            let grid = uniform_grid(t_max, n_steps);
            let rows =
                experiments::compare_mp_mf(&params, n, theta, phi, &grid).map_err(numerical)?;
            let mut w = create_out(&out_dir, "compare.csv").map_err(validation)?;
            experiments::write_compare_csv(&mut w, &rows).map_err(numerical)?;
        }
        Command::FixedPoints { .. } => {
            let report = fixedpoints::analyze(&params).map_err(numerical)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            let mut w = create_out(&out_dir, "fixed_points.json").map_err(validation)?;
            w.write_all(json.as_bytes()).map_err(|e| numerical(anyhow::anyhow!(e)))?;
            w.write_all(b"\n").map_err(|e| numerical(anyhow::anyhow!(e)))?;
            println!("{json}");
        }
        Command::HalflifeMf { .. } => {
            let grid = GridSpec {
                coords: cfg.grid_coords.unwrap_or(GridCoords::ThetaPhi),
                n1: cfg.grid_n1.unwrap_or(20),
                n2: cfg.grid_n2.unwrap_or(20),
            };
            let map = experiments::halflife_meanfield(&params, &grid, cfg.t_max);
            let mut w = create_out(&out_dir, "halflife_mf.csv").map_err(validation)?;
            experiments::write_halflife_csv(&mut w, &map).map_err(numerical)?;
        }
        Command::HalflifeMp { .. } => {
            let n = cfg.require_particles().map_err(validation)?;
            let grid = GridSpec {
                coords: cfg.grid_coords.unwrap_or(GridCoords::ThetaPhi),
                n1: cfg.grid_n1.unwrap_or(20),
                n2: cfg.grid_n2.unwrap_or(20),
            };
            let map =
                experiments::halflife_manybody(&params, n, &grid, cfg.t_max).map_err(numerical)?;
            let mut w = create_out(&out_dir, "halflife_mp.csv").map_err(validation)?;
            experiments::write_halflife_csv(&mut w, &map).map_err(numerical)?;
        }
        Command::Selftrap { .. } => {
            let g_min = cfg.g_min.unwrap_or(0.0);
            let g_max = cfg.g_max.unwrap_or(4.0);
            let g_count = cfg.g_count.unwrap_or(81);
            let t_max = cfg.t_max.unwrap_or(50.0);
            let n_steps = cfg.n_steps.unwrap_or(500);
            let theta = cfg.theta0.unwrap_or(std::f64::consts::PI); // south pole
            let phi = cfg.phi0.unwrap_or(0.0);
            let s0 = BlochVector::from_angles(theta, phi);
            let map = experiments::selftrapping_map(
                &params,
                (g_min, g_max, g_count),
                t_max,
                n_steps,
                &s0,
            )
            .map_err(numerical)?;
            let mut w = create_out(&out_dir, "selftrap.csv").map_err(validation)?;
            experiments::write_selftrap_csv(&mut w, &map).map_err(numerical)?;
            let g_sep = experiments::detect_g_sep(&params, g_min.max(0.05), g_max, 60.0 / params.v)
                .map_err(numerical)?;
            let mut w = create_out(&out_dir, "selftrap.json").map_err(validation)?;
            let summary = serde_json::json!({ "g_sep": g_sep });
            writeln!(w, "{}", serde_json::to_string_pretty(&summary).unwrap())
                .map_err(|e| numerical(anyhow::anyhow!(e)))?;
        }
        Command::Manifolds { .. } => {
            let curves = experiments::trace_manifolds(&params).map_err(numerical)?;
            let mut w = create_out(&out_dir, "manifolds.csv").map_err(validation)?;
            experiments::write_manifolds_csv(&mut w, &curves).map_err(numerical)?;
        }
    }
    Ok(())
}
