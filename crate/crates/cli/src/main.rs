use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{debug, info};

use qap_core::experiments::{
    self, Envelope, ExperimentError, Report, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_NUMERICAL,
    EXIT_OK,
};
use qap_core::{ExperimentConfig, Method};

/// Numerical experiments for the quantum action eigenvalue problem of a
/// harmonic oscillator.
#[derive(Debug, Parser)]
#[command(name = "qap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the coefficient system and write the solution grid.
    Integrate(Common),
    /// Evaluate the eigenvalue and constraint residual for one run.
    Eigenvalue(Common),
    /// Compare the classical pipeline against the closed-form action.
    ClassicalCheck(Common),
    /// Scan the phase offset t0 along the classical degeneracy valley.
    ScanT0(Common),
    /// Sweep hbar at fixed initial data and fit the correction exponent.
    SweepHbar(Common),
    /// Search initial data for a stationary eigenvalue.
    Extremize(Common),
    /// Estimate the observed integrator order by step halving.
    Convergence(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (INI or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Integration step; overrides `[grid] h` and `[convergence] h`.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

/// Error carrying the process exit code.
struct Failure {
    code: i32,
    error: anyhow::Error,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure {
            code: e.exit_code(),
            error: e.into(),
        }
    }
}

fn invalid(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_INVALID,
        error,
    }
}

type Handler = fn(&Session) -> Result<i32, Failure>;

struct Session {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Session {
    fn load(args: &Common) -> Result<Self, Failure> {
        let mut cfg = ExperimentConfig::from_path(&args.config)
            .map_err(ExperimentError::from)
            .map_err(Failure::from)?;
        if let Some(seed) = args.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(h) = args.h {
            if !(h.is_finite() && h > 0.0) {
                return Err(invalid(anyhow::anyhow!("--h must be positive, got {h}")));
            }
            cfg = cfg.with_step(h);
        }
        if let Some(m) = args.method {
            cfg = cfg.with_method(m);
        }
        let out = args
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out)
            .with_context(|| format!("cannot create output directory {}", out.display()))
            .map_err(invalid)?;
        debug!("config: {cfg:?}");
        Ok(Self { cfg, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Report>(&self, name: &str, command: &str, result: &T) -> Result<(), Failure> {
        let text = Envelope::new(command, &self.cfg, self.cfg.spec, result).to_json_pretty();
        write_file(&self.path(name), text.as_bytes())
    }

    fn create(&self, name: &str) -> Result<BufWriter<fs::File>, Failure> {
        let path = self.path(name);
        fs::File::create(&path)
            .map(BufWriter::new)
            .with_context(|| format!("cannot create {}", path.display()))
            .map_err(invalid)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(invalid)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn io_failure(e: std::io::Error) -> Failure {
    invalid(anyhow::Error::new(e).context("writing output"))
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn integrate(ctx: &Session) -> Result<i32, Failure> {
    let run = experiments::run_integrate(&ctx.cfg)?;
    run.write_csv(ctx.create("grid.csv")?, &ctx.cfg)
        .map_err(io_failure)?;
    match &run.result {
        Ok(grid) => {
            let s = grid.last();
            println!("rows: {}", grid.len());
            println!(
                "final t={} S1={:.12e} S2={:.12e} sigma1={:.12e} sigma2={:.12e}",
                s.t, s.s1, s.s2, s.sigma1, s.sigma2
            );
            println!(
                "accumulators qS={:.12e} qSigma={:.12e} qCon={:.12e}",
                s.q_s, s.q_sigma, s.q_con
            );
            Ok(EXIT_OK)
        }
        Err(b) => {
            eprintln!("blow-up: last good t = {}", b.t_last);
            Ok(EXIT_NUMERICAL)
        }
    }
}

fn eigenvalue(ctx: &Session) -> Result<i32, Failure> {
    let run = experiments::run_eigenvalue(&ctx.cfg)?;
    ctx.write_json("eigenvalue.json", "eigenvalue", &run)?;
    let r = &run.report;
    println!("lambda = {:.15e}", r.lambda);
    println!(
        "boundary = {:.15e}  kinetic = {:.15e}  quantum = {:.15e}",
        r.boundary_term, r.kinetic_term, r.quantum_term
    );
    println!("constraint residual = {:.15e}", r.constraint_residual);
    Ok(EXIT_OK)
}

fn classical_check(ctx: &Session) -> Result<i32, Failure> {
    let r = experiments::classical_check(&ctx.cfg)?;
    ctx.write_json("classical_check.json", "classical-check", &r)?;
    println!("lambda_star      = {:.15e}", r.lambda_star);
    println!(
        "{} ode path       lambda = {:.15e}  delta = {:.3e}",
        pass_fail(r.delta_ode.abs() <= r.tolerance),
        r.lambda_ode,
        r.delta_ode
    );
    println!(
        "{} optimized      lambda = {:.15e}  delta = {:.3e}  converged = {}",
        pass_fail(r.delta_optimized.abs() <= r.tolerance && r.extremum.converged),
        r.lambda_optimized,
        r.delta_optimized,
        r.extremum.converged
    );
    println!("{}", pass_fail(r.passed));
    Ok(if r.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn scan_t0(ctx: &Session) -> Result<i32, Failure> {
    let table = experiments::scan_t0(&ctx.cfg)?;
    table
        .write_csv(ctx.create("scan_t0.csv")?)
        .map_err(io_failure)?;
    println!("rows: {}  failed: {}", table.rows.len(), table.failures());
    println!("lambda spread = {:.3e}", table.lambda_spread());
    Ok(EXIT_OK)
}

fn sweep_hbar(ctx: &Session) -> Result<i32, Failure> {
    let r = experiments::sweep_hbar(&ctx.cfg)?;
    r.table
        .write_csv(ctx.create("sweep_hbar.csv")?)
        .map_err(io_failure)?;
    ctx.write_json("sweep_hbar.json", "sweep-hbar", &r.summary)?;
    println!("lambda(0) = {:.15e}", r.summary.lambda0);
    match r.summary.exponent {
        Some(p) => println!("exponent = {p:.6} over {} points", r.summary.fit_points),
        None => println!("exponent = n/a (no nonzero deviation)"),
    }
    Ok(EXIT_OK)
}

fn extremize(ctx: &Session) -> Result<i32, Failure> {
    let r = experiments::run_extremize(&ctx.cfg)?;
    ctx.write_json("extremum.json", "extremize", &r)?;
    println!("lambda = {:.15e}", r.report.lambda);
    println!(
        "init = ({:.12e}, {:.12e}, {:.12e}, {:.12e})",
        r.init.s10, r.init.s20, r.init.sigma10, r.init.sigma20
    );
    println!(
        "gradient norm = {:.3e}  runs = {}  converged = {}",
        r.gradient_norm, r.runs, r.converged
    );
    if let Some(sig) = r.hessian_signature {
        println!(
            "hessian signature: +{} -{} 0:{}",
            sig.positive, sig.negative, sig.near_zero
        );
    }
    if let Err(e) = r.ensure_converged() {
        eprintln!("{e}");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

fn convergence(ctx: &Session) -> Result<i32, Failure> {
    let r = experiments::run_convergence(&ctx.cfg)?;
    ctx.write_json("convergence.json", "convergence", &r)?;
    for c in [&r.classical, &r.quantum] {
        let order = c
            .order
            .map_or_else(|| c.status.clone(), |p| format!("{p:.4}"));
        println!(
            "{} {:<9} order = {order}  (h = {}, t_probe = {})",
            pass_fail(c.passed),
            c.label,
            c.h,
            c.t_probe
        );
    }
    Ok(if r.blew_up() {
        EXIT_NUMERICAL
    } else if r.passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn run(cli: Cli) -> Result<i32, Failure> {
    let (args, handler): (&Common, Handler) = match &cli.command {
        Command::Integrate(a) => (a, integrate),
        Command::Eigenvalue(a) => (a, eigenvalue),
        Command::ClassicalCheck(a) => (a, classical_check),
        Command::ScanT0(a) => (a, scan_t0),
        Command::SweepHbar(a) => (a, sweep_hbar),
        Command::Extremize(a) => (a, extremize),
        Command::Convergence(a) => (a, convergence),
    };
    handler(&Session::load(args)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QAP_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
