//! Subcommands `solve`, `radial`, `props` and `verify`.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 solver failure,
//! 3 certificate failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{battery_defaults, load_config, Config, ConfigError};
use crate::domaingrid::{build_grid, DomainShape};
use crate::output::{self, OutputError};
use crate::psilang::{validate_psi, ValidateOptions};
use crate::radial::{shoot_with, RadialError};
use crate::solver::{self, continuation_solve, effective_schedule, initial_guess, SolveReport, SolverError};
use crate::verify::{self, format_certificates, property_battery_with, BatteryOptions, Certificate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CERTIFICATE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("cannot create output directory {path}: {source}")]
    OutputDir { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("psi rejected: {0}")]
    Psi(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Radial(#[from] RadialError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(e) => match e {
                SolverError::InvalidSpec(_)
                | SolverError::Grid(_)
                | SolverError::Expr(_)
                | SolverError::NotTwoConvex { .. }
                | SolverError::SubsolutionRejected(_) => EXIT_CONFIG,
                _ => EXIT_SOLVER,
            },
            CliError::Radial(e) => match e {
                RadialError::InvalidInput(_) | RadialError::Expr(_) => EXIT_CONFIG,
                _ => EXIT_SOLVER,
            },
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "etacurv", version, about = "Prescribed eta-curvature graphs: solver, radial oracle and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Configuration file (key = value lines)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.dir)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Property battery seed (overrides props.seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples per property and dimension (overrides props.samples)
    #[arg(long)]
    pub samples: Option<usize>,
    /// Also write SVG heatmaps of u and of the Gamma-margin
    #[arg(long)]
    pub emit_svg: bool,
    /// Replace the f gradient by a wrong chain rule (mutation testing)
    #[arg(long, hide = true)]
    pub mutate_fgrad: bool,
}

impl CommonArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut o = Vec::new();
        if let Some(d) = &self.out {
            o.push(("output.dir", d.display().to_string()));
        }
        if let Some(s) = self.seed {
            o.push(("props.seed", s.to_string()));
        }
        if let Some(s) = self.samples {
            o.push(("props.samples", s.to_string()));
        }
        if self.emit_svg {
            o.push(("output.svg", "true".into()));
        }
        o
    }

    fn load(&self) -> Result<Config, CliError> {
        let path = self.config.as_ref().ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
        Ok(load_config(path)?.with_overrides(&self.overrides())?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// ε-continuation solve; writes solution, report and optional SVGs
    Solve(CommonArgs),
    /// Radial shooting profile on a ball
    Radial(CommonArgs),
    /// Randomized property battery
    Props(CommonArgs),
    /// Re-run the certificates on a stored solution file
    Verify {
        /// Solution file written by `solve`
        solution: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::OutputDir { path: dir.into(), source })
}

fn certificate_exit(certs: &[Certificate]) -> i32 {
    if certs.iter().all(|c| c.pass) {
        EXIT_OK
    } else {
        EXIT_CERTIFICATE
    }
}

/// Rejects ψ that is negative (or fails to evaluate) at sampled points;
/// other findings are returned as warnings.
pub fn check_psi(cfg: &Config) -> Result<Vec<String>, CliError> {
    let spec = &cfg.spec;
    let mu0 = spec.shape.semiaxes().into_iter().fold(0.0, f64::max);
    let rep = validate_psi(
        &spec.psi,
        spec.psi_lower.as_ref(),
        &spec.shape,
        ValidateOptions { samples: cfg.validate_samples, seed: cfg.validate_seed, mu0 },
    );
    if let Some(e) = &rep.eval_error {
        return Err(CliError::Psi(e.clone()));
    }
    if rep.negative_psi {
        return Err(CliError::Psi(format!("negative value {:e} at a sampled point", rep.min_psi)));
    }
    let mut warnings = Vec::new();
    if rep.negative_psi_z {
        warnings.push(format!("psi decreases in z somewhere (min psi_z = {:e})", rep.min_psi_z));
    }
    if rep.below_lower {
        warnings.push(format!("psi drops below psi_lower (min gap = {:e})", rep.min_gap.unwrap_or(f64::NAN)));
    }
    Ok(warnings)
}

pub fn cmd_solve(cfg: &Config) -> Result<i32, CliError> {
    for w in check_psi(cfg)? {
        eprintln!("warning: {w}");
    }
    ensure_dir(&cfg.output.dir)?;
    let sol = continuation_solve(&cfg.spec)?;
    let eps = sol.final_eps();
    let rows = solver::solution_rows(&cfg.spec, &sol.grid, &sol.u, eps)?;
    for w in &sol.report.warnings {
        eprintln!("warning: {w}");
    }
    output::write_file(&cfg.output_path("solution.txt"), &output::solution_text(cfg, &sol, &rows))?;
    output::write_file(&cfg.output_path("report.txt"), &output::report_text(cfg, &sol.report))?;
    if cfg.output.svg {
        let u_svg = output::heatmap_svg("u", &sol.grid, &sol.u.values);
        output::write_file(&cfg.output_path("u.svg"), &u_svg)?;
        let m = output::margin_field(&sol.grid, &sol.u);
        output::write_file(&cfg.output_path("margin.svg"), &output::heatmap_svg("Gamma-margin", &sol.grid, &m))?;
    }
    println!("{}", sol.report.summary());
    let code = certificate_exit(&sol.report.certificates);
    if code != EXIT_OK {
        eprint!("{}", format_certificates(&sol.report.certificates));
    }
    Ok(code)
}

pub fn cmd_radial(cfg: &Config) -> Result<i32, CliError> {
    let DomainShape::Ball { n, r0 } = cfg.spec.shape else {
        return Err(CliError::Usage(format!("radial needs a ball domain, got {}", cfg.spec.shape.kind())));
    };
    ensure_dir(&cfg.output.dir)?;
    let prof = shoot_with(&cfg.spec.psi, r0, n, cfg.radial.tol, cfg.radial.steps)?;
    let mut text = String::from("# etacurv radial profile\n");
    for line in cfg.echo().lines() {
        text.push_str(&format!("# config {line}\n"));
    }
    text.push_str(&prof.dump());
    output::write_file(&cfg.output_path("radial.txt"), &text)?;
    println!(
        "center={} boundary_residual={:.3e} richardson={:.3e} min_margin={:.3e}",
        output::num(prof.center),
        prof.boundary_residual,
        prof.richardson_error,
        prof.min_margin
    );
    Ok(EXIT_OK)
}

pub fn cmd_props(opts: &BatteryOptions) -> i32 {
    let certs = property_battery_with(opts);
    print!("{}", format_certificates(&certs));
    certificate_exit(&certs)
}

/// Certificates of a stored solution, recomputed from the file and `cfg`.
pub fn verify_stored(cfg: &Config, path: &Path) -> Result<Vec<Certificate>, CliError> {
    let stored = output::read_solution(path)?;
    let spec = &cfg.spec;
    let grid = build_grid(&spec.shape, spec.h).map_err(SolverError::from)?;
    let expect = output::grid_line(&grid);
    if stored.grid_line != expect {
        return Err(CliError::GridMismatch(format!("file has '{}', configuration gives '{expect}'", stored.grid_line)));
    }
    let same_nodes = stored.x.len() == grid.len()
        && grid.nodes.iter().zip(&stored.x).all(|(nd, x)| nd.pos == *x);
    if !same_nodes {
        return Err(CliError::GridMismatch("node coordinates differ from the configured grid".into()));
    }
    let schedule = effective_schedule(spec, &grid)?;
    let guess = initial_guess(spec, &grid, schedule[0])?;
    let report = SolveReport {
        nodes: grid.len(),
        h: spec.h,
        stages: stored.stages.clone(),
        initial_radius: guess.radius,
        warnings: Vec::new(),
        certificates: Vec::new(),
    };
    Ok(verify::solution_certificates(spec, &grid, &stored.u, &guess.u, &report)?)
}

pub fn cmd_verify(cfg: &Config, path: &Path) -> Result<i32, CliError> {
    let certs = verify_stored(cfg, path)?;
    print!("{}", format_certificates(&certs));
    Ok(certificate_exit(&certs))
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve(a) => cmd_solve(&a.load()?),
        Command::Radial(a) => cmd_radial(&a.load()?),
        Command::Props(a) => {
            let mut opts = match &a.config {
                Some(_) => a.load()?.battery,
                None => battery_defaults(&a.overrides())?,
            };
            opts.mutate_fgrad = a.mutate_fgrad;
            Ok(cmd_props(&opts))
        }
        Command::Verify { solution, common } => cmd_verify(&common.load()?, &solution),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
