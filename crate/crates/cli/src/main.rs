use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cavent_core::dynamics::{assess_stability, build_diffusion, build_drift};
use cavent_core::gaussian::solve_lyapunov_dense;
use cavent_core::oracle::{compare_cm, simulate_ensemble_dense, EnsembleSettings};
use cavent_core::steadystate::{solve_steady_state, SolverOptions};
use cavent_core::{
    derive_rates, linspace, load_config, run_point, run_sweep, validate_config, write_csv,
    PhysicalConfig, PointResult, SweepAxis, SweepSpec, SystemVariant,
};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

#[derive(Parser)]
#[command(
    name = "cavent",
    version,
    about = "Steady states, stability and entanglement of a four-mode optomechanical system"
)]
struct Cli {
    /// JSON configuration; omitted keys take the standard constants.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Model variant: sys1 drops the second-harmonic mode's couplings.
    #[arg(long, global = true, value_enum, default_value_t = SystemArg::Sys2)]
    system: SystemArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Sys1,
    Sys2,
}

impl From<SystemArg> for SystemVariant {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Sys1 => SystemVariant::SysI,
            SystemArg::Sys2 => SystemVariant::SysII,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Detuning,
    Temperature,
    Mass,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Detuning => SweepAxis::Detuning,
            AxisArg::Temperature => SweepAxis::Temperature,
            AxisArg::Mass => SweepAxis::Mass,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleCase {
    /// The configured operating point.
    Point,
    /// The configured point with every coupling switched off.
    Decoupled,
    /// `A = −I`, `D = 2I` on eight variables.
    Unit,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-field steady state and its residual.
    Steady {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Drift-matrix eigenvalues and the stability verdict.
    Stability {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Full evaluation with the six bipartite verdicts.
    Entangle {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Evaluate a grid along one axis and write a CSV table.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// First grid value (detuning in units of the mechanical frequency).
        #[arg(long, allow_negative_numbers = true, default_value_t = -2.0)]
        from: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 2.0)]
        to: f64,
        #[arg(long, default_value_t = 401)]
        points: usize,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the Lyapunov covariance with a Monte-Carlo ensemble.
    OracleCheck {
        #[arg(long, default_value_t = 10_000)]
        n_traj: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = OracleCase::Point)]
        case: OracleCase,
        /// Time step; defaults to one whose discretization bias is well below
        /// the sampling error.
        #[arg(long)]
        dt: Option<f64>,
        /// Integration horizon; defaults to ten relaxation times.
        #[arg(long)]
        t_end: Option<f64>,
        /// Refuse runs needing more trajectory-steps than this.
        #[arg(long, default_value_t = 2e10)]
        budget: f64,
    },
    /// Check a configuration file and list every violated constraint.
    Validate { file: PathBuf },
}

fn load(cli: &Cli) -> Result<PhysicalConfig> {
    match &cli.config {
        Some(path) => Ok(load_config(path)?),
        None => Ok(PhysicalConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let system: SystemVariant = cli.system.into();
    match &cli.command {
        Command::Validate { file } => validate(file),
        Command::Steady { format } => {
            let cfg = load(cli)?;
            let rates = system.apply(&derive_rates(&cfg)?);
            let sol = solve_steady_state(&rates, &SolverOptions::default())?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&sol)?),
                Format::Text => {
                    let s = &sol.state;
                    println!("q1       {:.10e} {:+.3e}i", s.q1.re, s.q1.im);
                    println!("p1       {:.10e}", s.p1);
                    println!(
                        "alpha1   {:.10e} {:+.10e}i  |alpha1| = {:.6e}",
                        s.alpha1.re,
                        s.alpha1.im,
                        s.alpha1.norm()
                    );
                    println!(
                        "alpha2   {:.10e} {:+.10e}i  |alpha2| = {:.6e}",
                        s.alpha2.re,
                        s.alpha2.im,
                        s.alpha2.norm()
                    );
                    println!(
                        "beta     {:.10e} {:+.10e}i  |beta| = {:.6e}",
                        s.beta.re,
                        s.beta.im,
                        s.beta.norm()
                    );
                    println!(
                        "residual {:.3e} (relative, {} Newton iterations)",
                        sol.residual, sol.iterations
                    );
                    for w in &sol.warnings {
                        println!("warning: {w}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stability { format } => {
            let cfg = load(cli)?;
            let rates = system.apply(&derive_rates(&cfg)?);
            let sol = solve_steady_state(&rates, &SolverOptions::default())?;
            let report = assess_stability(&build_drift(&rates, &sol.state))?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Text => {
                    println!("{}", if report.stable { "stable" } else { "unstable" });
                    println!(
                        "spectral abscissa {:.6e} s^-1 (margin {:.3e})",
                        report.spectral_abscissa, report.tolerance
                    );
                    for z in &report.eigenvalues {
                        println!("  {:+.10e} {:+.10e}i", z.re, z.im);
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Entangle { format } => {
            let p = run_point(&load(cli)?, system)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&p)?),
                Format::Text => print_point(&p),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            axis,
            from,
            to,
            points,
            out,
        } => {
            let spec = SweepSpec {
                axis: (*axis).into(),
                grid: linspace(*from, *to, *points),
                base: load(cli)?,
                system,
            };
            let rows = run_sweep(&spec)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            match out {
                Some(path) => write_csv(&rows, path)?,
                None => print!("{}", cavent_core::format_csv(&rows)),
            }
            if failed > 0 {
                eprintln!(
                    "{failed} of {} points failed; their rows hold NA",
                    rows.len()
                );
                for row in rows
                    .iter()
                    .filter_map(|r| r.outcome.as_ref().err().map(|e| (r.axis_value, e)))
                    .take(5)
                {
                    eprintln!("  {:.6e}: {}", row.0, row.1);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck {
            n_traj,
            seed,
            case,
            dt,
            t_end,
            budget,
        } => oracle_check(cli, system, *case, *n_traj, *seed, *dt, *t_end, *budget),
    }
}

fn validate(file: &PathBuf) -> Result<ExitCode> {
    let text =
        std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let cfg = cavent_core::config::parse_config_unchecked(&text, &file.display().to_string())?;
    let report = validate_config(&cfg);
    if report.is_valid() {
        println!("{}: valid", file.display());
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &report.violations {
            println!("{}: {v}", file.display());
        }
        Ok(ExitCode::FAILURE)
    }
}

fn print_point(p: &PointResult) {
    let s = &p.steady_state;
    println!("system            {}", p.system.name());
    println!(
        "steady state      q1 = {:.6e}, |alpha1| = {:.6e}, |alpha2| = {:.6e}, |beta| = {:.6e}",
        s.q1.re,
        s.alpha1.norm(),
        s.alpha2.norm(),
        s.beta.norm()
    );
    println!("residual          {:.3e}", p.steady_state_residual);
    println!(
        "stability         {} (spectral abscissa {:.6e} s^-1)",
        if p.stability.stable {
            "stable"
        } else {
            "unstable"
        },
        p.stability.spectral_abscissa
    );
    match &p.pairs {
        None => println!(
            "entanglement      not evaluated: no steady state exists for an unstable drift"
        ),
        Some(pairs) => {
            println!(
                "lyapunov residual {:.3e}",
                p.lyapunov_residual.unwrap_or(f64::NAN)
            );
            println!();
            println!("pair     2*eta              log-negativity  verdict");
            for v in pairs {
                println!(
                    "{:<8} {:<18.12} {:<15.6e} {}",
                    v.pair.name(),
                    v.result.two_eta,
                    v.result.log_negativity,
                    if v.result.entangled {
                        "entangled"
                    } else {
                        "separable"
                    }
                );
            }
        }
    }
    for w in &p.warnings {
        println!("warning: {w}");
    }
}

#[allow(clippy::too_many_arguments)]
fn oracle_check(
    cli: &Cli,
    system: SystemVariant,
    case: OracleCase,
    n_traj: usize,
    seed: u64,
    dt: Option<f64>,
    t_end: Option<f64>,
    budget: f64,
) -> Result<ExitCode> {
    let (a, d): (DMatrix<f64>, DMatrix<f64>) = match case {
        OracleCase::Unit => (-DMatrix::identity(8, 8), DMatrix::identity(8, 8) * 2.0),
        OracleCase::Point | OracleCase::Decoupled => {
            let cfg = load(cli)?;
            let mut rates = system.apply(&derive_rates(&cfg)?);
            if matches!(case, OracleCase::Decoupled) {
                rates = rates.decoupled();
            }
            let sol = solve_steady_state(&rates, &SolverOptions::default())?;
            let a = build_drift(&rates, &sol.state).as_dense();
            let d = build_diffusion(&rates, cfg.temperature)?.as_dense();
            (a, d)
        }
    };
    let (dt_max, t_min) = EnsembleSettings::bounds(&a)?;
    let recommended = EnsembleSettings::recommended(&a, n_traj, seed)?;
    let settings = EnsembleSettings {
        dt: dt.unwrap_or(recommended.dt),
        t_end: t_end.unwrap_or(recommended.t_end),
        max_trajectory_steps: Some(budget),
        ..recommended
    };
    println!("step bound        {dt_max:.3e} s");
    println!("settling horizon  {t_min:.3e} s");
    println!(
        "required steps    {:.3e}",
        (settings.t_end / settings.dt).ceil() * n_traj as f64
    );
    let v = solve_lyapunov_dense(&a, &d)?;
    let est = simulate_ensemble_dense(&a, &d, &settings)?;
    let cmp = compare_cm(&v, &est);
    println!("trajectories      {n_traj} (seed {seed})");
    println!("dt, t_end         {:.3e} s, {:.3e} s", est.dt, est.t_end);
    println!("max z-score       {:.3}", cmp.max_z);
    println!(
        "max deviation     {:.3e} (relative to largest entry)",
        cmp.max_rel
    );
    println!(
        "verdict           {}",
        if cmp.pass { "agree" } else { "disagree" }
    );
    if !cmp.pass {
        bail!("Monte-Carlo covariance disagrees with the Lyapunov solution");
    }
    Ok(ExitCode::SUCCESS)
}
