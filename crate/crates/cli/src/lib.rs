//! Experiment runner: reads a TOML config, runs one pipeline of the solver
//! suite and writes plain-text and CSV artifacts.

pub mod config;
pub mod expr;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use freetrans_core::barriers::Barriers;
use freetrans_core::io;
use freetrans_core::regularity::{holder_seminorm, probe, Subdomain};
use freetrans_core::scheme::mollify_indicator;
use freetrans_core::solver::solve_frozen_with;
use freetrans_core::{
    touching_scan, transmission_solve, MollifiedSwitch, ScalarField, ScanOptions, SolveReport,
    TouchMode,
};

use config::{Built, Config, ConfigError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Frozen-switch solve.
    Solve,
    /// Outer sign-set iteration.
    Transmission,
    /// Barrier fields and their constants.
    Barriers,
    /// Hölder seminorms, bound checks and oscillation decay.
    Probe,
    /// Touching-test scan of a fresh solution.
    Verify,
    /// Solve over the cartesian parameter sweep.
    Sweep,
}

impl Command {
    fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Transmission => "transmission",
            Command::Barriers => "barriers",
            Command::Probe => "probe",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "freetrans",
    version,
    about = "Double-phase free transmission solver and probes"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir` (default `out`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides `solver.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Leave the timestamp out of the manifest.
    #[arg(long)]
    pub no_timestamp: bool,
}

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// The run finished but did not succeed (no convergence, no fixed
    /// point, touching violations).
    pub const UNSUCCESSFUL: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;
}

/// Why a run stopped early.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Io(anyhow::Error),
    /// A solver-level error after validation passed.
    Run(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => exit::CONFIG,
            Failure::Io(_) => exit::IO,
            Failure::Run(_) => exit::UNSUCCESSFUL,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Io(_) => "io",
            Failure::Run(_) => "run",
        }
    }

    /// `key: value` lines, also written to `error.txt`.
    pub fn record(&self) -> String {
        let mut out = format!(
            "status: error\nkind: {}\nexit_code: {}\n",
            self.kind(),
            self.code()
        );
        match self {
            Failure::Config(e) => {
                for p in &e.problems {
                    let _ = writeln!(out, "problem: {p}");
                }
            }
            Failure::Io(e) | Failure::Run(e) => {
                let _ = writeln!(out, "message: {}", format!("{e:#}").replace('\n', " "));
            }
        }
        out
    }
}

fn io_err(e: anyhow::Error) -> Failure {
    Failure::Io(e)
}

fn run_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Run(e.into())
}

/// Outcome of a finished run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub success: bool,
    pub out_dir: PathBuf,
}

/// Run one command. On failure the error record has been written to
/// `error.txt` when the output directory was reachable.
pub fn run(cli: &Cli) -> std::result::Result<Outcome, Failure> {
    let text = fs::read_to_string(&cli.config)
        .with_context(|| format!("reading {}", cli.config.display()));
    let parsed = text.as_ref().ok().map(|t| Config::from_toml(t));
    let out_dir = cli
        .out
        .clone()
        .or_else(|| parsed.as_ref()?.as_ref().ok()?.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let result = match (text, parsed) {
        (Ok(text), Some(parsed)) => run_in(cli, &text, parsed, &out_dir),
        (Err(e), _) => Err(Failure::Io(e)),
        (Ok(_), None) => unreachable!(),
    };
    if let Err(f) = &result {
        if fs::create_dir_all(&out_dir).is_ok() {
            let _ = fs::write(out_dir.join("error.txt"), f.record());
        }
    }
    result
}

fn run_in(
    cli: &Cli,
    text: &str,
    parsed: std::result::Result<Config, ConfigError>,
    out_dir: &Path,
) -> std::result::Result<Outcome, Failure> {
    let cfg = parsed.map_err(Failure::Config)?;
    let seed = cli.seed.unwrap_or(cfg.solver.seed);
    let base = cli.config.parent().unwrap_or(Path::new("")).to_path_buf();
    let sweep = cli.command == Command::Sweep;
    if sweep && cfg.sweep.is_none() {
        return Err(Failure::Config(ConfigError {
            problems: vec!["sweep: the sweep command needs a [sweep] section".into()],
        }));
    }

    // Validate every point up front so no compute starts on a bad config.
    let mut built = Vec::new();
    let mut problems = Vec::new();
    for point in cfg.points(sweep) {
        match cfg.build(&base, point) {
            Ok(b) => built.push(b),
            Err(e) => problems.extend(e.problems.into_iter().map(|p| {
                if sweep {
                    format!("[epsilon={}, h={}] {p}", point.epsilon, point.h)
                } else {
                    p
                }
            })),
        }
    }
    if !problems.is_empty() {
        problems.dedup();
        return Err(Failure::Config(ConfigError { problems }));
    }

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(io_err)?;
    let _ = fs::remove_file(out_dir.join("error.txt"));
    let manifest = manifest_text(cli, text, seed);
    write(out_dir, "manifest.txt", &manifest)?;
    log::info!(
        "{} with {} point(s) into {}",
        cli.command.as_str(),
        built.len(),
        out_dir.display()
    );

    let success = match cli.command {
        Command::Solve => run_solve(&cfg, &built[0], out_dir)?,
        Command::Transmission => run_transmission(&cfg, &built[0], out_dir)?,
        Command::Barriers => run_barriers(&built[0], out_dir)?,
        Command::Probe => run_probe(&cfg, &built[0], seed, out_dir)?,
        Command::Verify => run_verify(&cfg, &built[0], seed, out_dir)?,
        Command::Sweep => run_sweep(&cfg, &built, cli.threads, out_dir)?,
    };
    Ok(Outcome {
        success,
        out_dir: out_dir.to_path_buf(),
    })
}

fn manifest_text(cli: &Cli, config_text: &str, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "command: {}", cli.command.as_str());
    let _ = writeln!(out, "config: {}", cli.config.display());
    let _ = writeln!(
        out,
        "config_sha256: {:x}",
        Sha256::digest(config_text.as_bytes())
    );
    let _ = writeln!(out, "seed: {seed}");
    let _ = writeln!(out, "freetrans_version: {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "core_version: {}", freetrans_core::VERSION);
    if !cli.no_timestamp {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let _ = writeln!(out, "timestamp_unix: {ts}");
    }
    out
}

fn write(dir: &Path, name: &str, contents: &str) -> std::result::Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(io_err)
}

/// The switch for a frozen solve: the configured sign field, else the
/// barrier midpoint.
fn frozen_switch(cfg: &Config, b: &Built, barriers: &Barriers) -> Result<MollifiedSwitch> {
    let v = match &b.switch_field {
        Some(v) => v.clone(),
        None => barriers.midpoint(),
    };
    let (law, eps) = (b.spec.law(), b.spec.epsilon());
    let radius = cfg.problem.switch_radius;
    Ok(if radius == 0.0 {
        MollifiedSwitch::sharp(&v, law, eps)?
    } else {
        mollify_indicator(&v, radius, law, eps)?
    })
}

struct Solved {
    barriers: Barriers,
    switch: MollifiedSwitch,
    report: SolveReport,
}

fn solve(cfg: &Config, b: &Built) -> std::result::Result<Solved, Failure> {
    let opts = cfg.solver_options();
    let barriers = Barriers::new(&b.spec, &opts.taus).map_err(run_err)?;
    let switch = frozen_switch(cfg, b, &barriers).map_err(Failure::Run)?;
    let report = solve_frozen_with(&b.spec, &switch, &barriers, &opts).map_err(run_err)?;
    if !report.converged {
        log::warn!(
            "solve stopped after {} sweeps at residual {:e}",
            report.iterations,
            report.final_residual_norm
        );
    }
    Ok(Solved {
        barriers,
        switch,
        report,
    })
}

fn write_solve(dir: &Path, s: &Solved) -> std::result::Result<(), Failure> {
    write(dir, "solution.csv", &io::field_to_csv(&s.report.solution))?;
    write(
        dir,
        "report.txt",
        &io::solve_report_text(&s.report, Some(&s.barriers.constants)),
    )?;
    write(
        dir,
        "residual_history.csv",
        &io::residual_history_csv(&s.report),
    )
}

fn run_solve(cfg: &Config, b: &Built, dir: &Path) -> std::result::Result<bool, Failure> {
    let s = solve(cfg, b)?;
    write_solve(dir, &s)?;
    Ok(s.report.converged)
}

fn run_transmission(cfg: &Config, b: &Built, dir: &Path) -> std::result::Result<bool, Failure> {
    let opts = cfg.transmission_options();
    let u0 = Barriers::new(&b.spec, &opts.solver.taus)
        .map_err(run_err)?
        .midpoint();
    let r = transmission_solve(&b.spec, &u0, &opts).map_err(run_err)?;
    write(dir, "solution.csv", &io::field_to_csv(&r.solution))?;
    write(dir, "transmission.csv", &io::transmission_manifest_csv(&r))?;
    let mut report = String::new();
    match r.stabilized_at {
        Some(k) => {
            let _ = writeln!(report, "stabilized_at: {k}");
        }
        None => report.push_str("stabilized_at: none\n"),
    }
    let _ = writeln!(report, "outer_steps: {}", r.history.len());
    let flags: Vec<String> = r.flags.iter().map(|f| format!("{f:?}")).collect();
    let _ = writeln!(report, "flags: {}", flags.join(","));
    report.push_str(&io::barrier_constants_text(&r.barriers.constants));
    write(dir, "report.txt", &report)?;
    Ok(r.stabilized_at.is_some() && r.flags.is_empty())
}

fn run_barriers(b: &Built, dir: &Path) -> std::result::Result<bool, Failure> {
    let barriers =
        Barriers::new(&b.spec, &freetrans_core::SolverOptions::default().taus).map_err(run_err)?;
    write(dir, "upper.csv", &io::field_to_csv(&barriers.upper))?;
    write(dir, "lower.csv", &io::field_to_csv(&barriers.lower))?;
    write(
        dir,
        "constants.txt",
        &io::barrier_constants_text(&barriers.constants),
    )?;
    Ok(true)
}

fn run_probe(cfg: &Config, b: &Built, seed: u64, dir: &Path) -> std::result::Result<bool, Failure> {
    let (u, converged) = match &b.probe_field {
        Some(f) => (f.clone(), true),
        None => {
            let s = solve(cfg, b)?;
            write_solve(dir, &s)?;
            (s.report.solution, s.report.converged)
        }
    };
    let r = probe(&u, &b.spec, &cfg.probe_options(seed)).map_err(run_err)?;
    write(dir, "seminorms.csv", &io::seminorm_csv(&r))?;
    write(dir, "oscillation.csv", &io::oscillation_csv(&r))?;
    write(dir, "bounds.csv", &io::bound_check_csv(&r))?;
    write(dir, "summary.txt", &io::regularity_summary_text(&r))?;
    Ok(converged)
}

fn run_verify(
    cfg: &Config,
    b: &Built,
    seed: u64,
    dir: &Path,
) -> std::result::Result<bool, Failure> {
    let s = solve(cfg, b)?;
    write_solve(dir, &s)?;
    let v = &cfg.verify;
    let opts = ScanOptions {
        trials: v.trials,
        seed,
        mode: TouchMode::Regularized(s.switch.clone()),
        coefficient_bound: v.coefficient_bound,
        search_radius: v.search_radius,
        mirror: false,
    };
    let u = &s.report.solution;
    let scan = touching_scan(u, &b.spec, u, &opts).map_err(run_err)?;
    write(dir, "certificates.csv", &io::certificates_csv(&scan))?;
    let summary = format!(
        "contacts: {}\ndiscarded: {}\nviolations: {}\nworst: {}\ntol: {}\n",
        scan.certificates.len(),
        scan.discarded,
        scan.violations(),
        scan.worst(),
        scan.tol
    );
    write(dir, "verify.txt", &summary)?;
    Ok(s.report.converged && scan.violations() == 0)
}

struct PointResult {
    converged: bool,
    iterations: usize,
    residual: f64,
    seminorms: Vec<f64>,
}

fn sweep_point(cfg: &Config, b: &Built, dir: &Path) -> std::result::Result<PointResult, Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(io_err)?;
    let s = solve(cfg, b)?;
    write_solve(dir, &s)?;
    let u: &ScalarField = &s.report.solution;
    let mut csv = String::from("beta0,seminorm\n");
    let mut seminorms = Vec::new();
    for &beta in &cfg.probe.betas {
        let v = holder_seminorm(u, beta, Subdomain::Interior).map_err(run_err)?;
        let _ = writeln!(csv, "{beta},{v}");
        seminorms.push(v);
    }
    write(dir, "seminorms.csv", &csv)?;
    Ok(PointResult {
        converged: s.report.converged,
        iterations: s.report.iterations,
        residual: s.report.final_residual_norm,
        seminorms,
    })
}

fn run_sweep(
    cfg: &Config,
    built: &[Built],
    threads: Option<usize>,
    dir: &Path,
) -> std::result::Result<bool, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Run(e.into()))?;
    let results: Vec<_> = pool.install(|| {
        built
            .par_iter()
            .enumerate()
            .map(|(i, b)| sweep_point(cfg, b, &dir.join(format!("point_{i:03}"))))
            .collect()
    });
    let results = results
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let mut index = String::from("point,epsilon,h,converged,iterations,final_residual_norm");
    for beta in &cfg.probe.betas {
        let _ = write!(index, ",seminorm_{beta}");
    }
    index.push('\n');
    for (i, (b, r)) in built.iter().zip(&results).enumerate() {
        let _ = write!(
            index,
            "point_{i:03},{},{},{},{},{}",
            b.point.epsilon, b.point.h, r.converged, r.iterations, r.residual
        );
        for s in &r.seminorms {
            let _ = write!(index, ",{s}");
        }
        index.push('\n');
    }
    write(dir, "index.csv", &index)?;

    // Relative spread (max - min) / min of each seminorm across points.
    let mut summary = format!("points: {}\n", results.len());
    let _ = writeln!(
        summary,
        "converged: {}",
        results.iter().filter(|r| r.converged).count()
    );
    for (j, beta) in cfg.probe.betas.iter().enumerate() {
        let vals: Vec<f64> = results.iter().map(|r| r.seminorms[j]).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(summary, "seminorm_variation_{beta}: {}", (hi - lo) / lo);
    }
    write(dir, "summary.txt", &summary)?;
    Ok(results.iter().all(|r| r.converged))
}
