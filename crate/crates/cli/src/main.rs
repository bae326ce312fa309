use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{invalid, InvalidInput, Settings};
use output::Sink;

/// Experiments on exponentially weighted Bergman spaces of the unit disk.
///
/// Exit status: 0 on success, 1 when a check fails or a computation cannot
/// be completed, 2 on invalid input.
#[derive(Parser)]
#[command(name = "bergman-lab", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Settings file of `key = value` lines; flags override it.
    #[arg(long, global = true, allow_hyphen_values = true)]
    config: Option<PathBuf>,
    /// Weight, e.g. `weight A=1 alpha=1`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    weight: Option<String>,
    /// Self-map, e.g. `map poly 0,0.5` or `map template half_one_plus_z2`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    phi: Option<String>,
    /// Second self-map; `none` where it is optional.
    #[arg(long, global = true, allow_hyphen_values = true)]
    psi: Option<String>,
    /// Comma-separated increasing radii.
    #[arg(long, global = true, allow_hyphen_values = true)]
    radii: Option<String>,
    /// Kernel summation and moment table tolerance.
    #[arg(long, global = true, allow_hyphen_values = true)]
    tol: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    seed: Option<String>,
    /// Directory for the artifacts; stdout when absent.
    #[arg(long, global = true, allow_hyphen_values = true)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Checks the class-W conditions and reports the radius constants.
    VerifyWeights {
        /// Sample points per check.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
    },
    /// Kernel value, norms and kernel distances at a pair of points.
    KernelProbe {
        #[arg(long, allow_hyphen_values = true)]
        z: Option<String>,
        /// Defaults to `z`.
        #[arg(long, allow_hyphen_values = true)]
        w: Option<String>,
        /// Also report the L^p kernel ratio at `z`.
        #[arg(long, allow_hyphen_values = true)]
        p: Option<String>,
    },
    /// d_tau, rho_tau and the kernel-angle distance from one point to a grid.
    DistanceField {
        #[arg(long, allow_hyphen_values = true)]
        from: Option<String>,
        /// Points per axis on [-extent, extent]².
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        extent: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        resolution: Option<String>,
    },
    /// Circle suprema of the boundedness or compact-difference functional.
    Criterion {
        #[arg(long, allow_hyphen_values = true)]
        angular_samples: Option<String>,
    },
    /// Hilbert-Schmidt norm of C_phi - C_psi (or of C_phi with `--psi none`).
    Hsnorm {
        /// integral, basis or both.
        #[arg(long, allow_hyphen_values = true)]
        route: Option<String>,
    },
    /// Pairwise HS distances along phi_s = (1 - s) phi + s psi.
    PathExperiment {
        /// Step count `n` (mesh 1/n) or a comma-separated list of s values.
        #[arg(long, allow_hyphen_values = true)]
        s_grid: Option<String>,
    },
    /// The map (1+z²)/2 and its perturbation by eps (1-z²)^5.
    ExampleSec4 {
        #[arg(long, allow_hyphen_values = true)]
        eps: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        mc_samples: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        angular_samples: Option<String>,
    },
    /// Runs the acceptance suite.
    VerifyAll {
        /// Comma-separated subset of criteria 1 to 7.
        #[arg(long, allow_hyphen_values = true)]
        only: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::VerifyWeights { .. } => "verify-weights",
            Command::KernelProbe { .. } => "kernel-probe",
            Command::DistanceField { .. } => "distance-field",
            Command::Criterion { .. } => "criterion",
            Command::Hsnorm { .. } => "hsnorm",
            Command::PathExperiment { .. } => "path-experiment",
            Command::ExampleSec4 { .. } => "example-sec4",
            Command::VerifyAll { .. } => "verify-all",
        }
    }

    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        match self {
            Command::VerifyWeights { grid } => vec![("grid", grid)],
            Command::KernelProbe { z, w, p } => vec![("z", z), ("w", w), ("p", p)],
            Command::DistanceField {
                from,
                grid,
                extent,
                resolution,
            } => vec![("from", from), ("grid", grid), ("extent", extent), ("resolution", resolution)],
            Command::Criterion { angular_samples } => vec![("angular-samples", angular_samples)],
            Command::Hsnorm { route } => vec![("route", route)],
            Command::PathExperiment { s_grid } => vec![("s-grid", s_grid)],
            Command::ExampleSec4 {
                eps,
                mc_samples,
                angular_samples,
            } => vec![("eps", eps), ("mc-samples", mc_samples), ("angular-samples", angular_samples)],
            Command::VerifyAll { only } => vec![("only", only)],
        }
    }
}

fn settings(cli: &Cli) -> anyhow::Result<Settings> {
    let mut s = match &cli.common.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let name = cli.command.name();
    if let Some(c) = s.raw("command") {
        if c != name {
            return Err(invalid(format!("config is for `{c}`, not `{name}`")));
        }
    }
    let c = &cli.common;
    let common = [
        ("weight", &c.weight),
        ("phi", &c.phi),
        ("psi", &c.psi),
        ("radii", &c.radii),
        ("tol", &c.tol),
        ("seed", &c.seed),
        ("out", &c.out),
    ];
    for (k, v) in common.into_iter().chain(cli.command.flags()) {
        if let Some(v) = v {
            s.set(k, v)?;
        }
    }
    Ok(s)
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("BERGMAN_LAB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| invalid(format!("BERGMAN_LAB_THREADS={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    init_threads()?;
    let settings = settings(cli)?;
    let out = settings.raw("out").map(PathBuf::from);
    let mut sink = Sink::new(out)?;
    let mut ctx = commands::Ctx {
        settings: &settings,
        sink: &mut sink,
        command: cli.command.name(),
    };
    let ok = match cli.command {
        Command::VerifyWeights { .. } => commands::verify_weights(&mut ctx),
        Command::KernelProbe { .. } => commands::kernel_probe(&mut ctx),
        Command::DistanceField { .. } => commands::distance_field(&mut ctx),
        Command::Criterion { .. } => commands::criterion(&mut ctx),
        Command::Hsnorm { .. } => commands::hsnorm(&mut ctx),
        Command::PathExperiment { .. } => commands::path_experiment(&mut ctx),
        Command::ExampleSec4 { .. } => commands::example_sec4(&mut ctx),
        Command::VerifyAll { .. } => commands::verify_all(&mut ctx),
    }?;
    for p in sink.written() {
        eprintln!("wrote {}", p.display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("bergman-lab: a check failed");
            ExitCode::from(1)
        }
        Err(e) if e.downcast_ref::<InvalidInput>().is_some() => {
            eprintln!("bergman-lab: invalid input: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("bergman-lab: {e:#}");
            ExitCode::from(1)
        }
    }
}
