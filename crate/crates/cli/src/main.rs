use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use burgers_stab::analysis::{
    compare_rate, compare_to_certificate, default_burn_in, fit_decay_rate, inequality_ensemble,
    DEFAULT_FLOOR, DEFAULT_TOLERANCE,
};
use burgers_stab::certificates::{plan_gains_bnn, plan_gains_obe};
use burgers_stab::{
    run, BnnFamily, BnnInputs, CertificateLedger, Channel, Claim, GridSpec, InequalityConstants,
    ObeTarget, PhysicalParams, Quantity, RunConfig, Trace,
};
use burgers_stab_cli::sweep::{run_sweep, write_summary, SweepSpec};
use burgers_stab_cli::{
    artifacts, exit_code_any, DEFAULT_OUT, EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, OUT_ENV,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "burgers-stab",
    version,
    about = "Feedback stabilization of Burgers-type systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan, simulate and analyse one configuration
    Run(RunArgs),
    /// Compute controller gains and print the certificate ledger
    Plan(PlanArgs),
    /// Run the cartesian product of a sweep file
    Sweep(SweepArgs),
    /// Check the functional inequalities on random sine polynomials
    VerifyInequalities(VerifyArgs),
    /// Fit an exponential decay rate to an existing trace CSV
    FitRate(FitArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output root directory
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    out: PathBuf,
    /// Name of the directory under the output root (defaults to the input file stem)
    #[arg(long)]
    name: Option<String>,
}

impl OutArgs {
    fn dir_for(&self, input: &Path) -> PathBuf {
        let name = self
            .name
            .clone()
            .or_else(|| input.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "run".into());
        self.out.join(name)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON)
    config: PathBuf,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct PlanArgs {
    /// obe-l2, obe-h1, bnn-l2-modal, bnn-h1-modal or bnn-l2-volume
    #[arg(long, value_parser = parse_claim)]
    claim: Claim,
    #[arg(long)]
    nu: f64,
    /// Pressure constant R (OBE) or linear growth rate (BNN)
    #[arg(long = "R", visible_alias = "r")]
    r: f64,
    /// Nonlocal damping coefficient (BNN)
    #[arg(long, default_value_t = 0.0)]
    k: f64,
    /// Prescribed decay rate (BNN)
    #[arg(long)]
    xi: Option<f64>,
    /// L2 bound on the forcing (BNN)
    #[arg(long, default_value_t = 0.0)]
    h0: f64,
    /// Sup-norm bound on the forcing (BNN)
    #[arg(long, default_value_t = 0.0)]
    h0_sup: f64,
    /// Use this gain instead of searching for one (BNN only); only N is sized
    #[arg(long)]
    mu: Option<f64>,
    #[command(flatten)]
    constants: ConstantArgs,
    /// Also write the report to this file
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the plan as JSON instead of the text report
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ConstantArgs {
    #[arg(long)]
    beta3: Option<f64>,
    #[arg(long)]
    beta4: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
}

impl ConstantArgs {
    fn resolve(&self) -> burgers_stab::Result<InequalityConstants> {
        let d = InequalityConstants::default();
        let k = InequalityConstants {
            beta3: self.beta3.unwrap_or(d.beta3),
            beta4: self.beta4.unwrap_or(d.beta4),
            c0: self.c0.unwrap_or(d.c0),
        };
        k.validate()?;
        Ok(k)
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep file (JSON with `base` and `axes`)
    sweep: PathBuf,
    /// Maximum number of concurrent runs (0 uses every core)
    #[arg(long, short = 'j', default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 20)]
    max_mode: usize,
    /// Interior grid points
    #[arg(long, default_value_t = 512)]
    points: usize,
    #[command(flatten)]
    constants: ConstantArgs,
    /// Write the full report as JSON to this file
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Trace CSV written by `run`
    trace: PathBuf,
    /// obe-l2, obe-h1, bnn-l2, bnn-h1 or a column name (fits its square)
    #[arg(long)]
    quantity: Option<String>,
    /// Claim whose quantity and certified rate to use
    #[arg(long, value_parser = parse_claim)]
    claim: Option<Claim>,
    /// Ledger JSON to compare against (needs --claim)
    #[arg(long, requires = "claim")]
    ledger: Option<PathBuf>,
    /// Rate to compare against when no ledger is given
    #[arg(long, conflicts_with = "ledger")]
    certified: Option<f64>,
    /// Start of the fit window (defaults to the ball entry time with a ledger, else 0)
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    floor: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long)]
    json: bool,
}

fn parse_claim(s: &str) -> Result<Claim, String> {
    Claim::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Claim::ALL.iter().map(|c| c.name()).collect();
        format!("unknown claim `{s}` (expected one of {})", names.join(", "))
    })
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let base = path
        .parent()
        .map(|p| {
            if p.as_os_str().is_empty() {
                Path::new(".")
            } else {
                p
            }
        })
        .and_then(|p| p.canonicalize().ok());
    RunConfig::from_json(&text, base.as_deref()).with_context(|| format!("in {}", path.display()))
}

fn cmd_run(args: &RunArgs) -> Result<u8> {
    let cfg = read_config(&args.config)?;
    let start = Instant::now();
    let out = run(&cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let dir = args.out.dir_for(&args.config);
    let manifest = artifacts::write_run(&dir, &cfg, &out, wall)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!("run directory  {}", dir.display());
    println!("status         {}", manifest.status);
    println!("rows           {}", manifest.rows);
    let c = out.certification.controller;
    if c.is_active() {
        println!(
            "controller     {:?} mu = {:.10e} N = {}",
            c.family, c.mu, c.count
        );
    }
    if let Some(a) = &out.analysis {
        match (&a.fit, &a.fit_error) {
            (Some(f), _) => println!(
                "fit            {} rate {:.6e} on [{:.4}, {:.4}] ({} samples)",
                a.claim, f.rate, f.window.0, f.window.1, f.samples
            ),
            (None, Some(e)) => println!("fit            {}: {e}", a.claim),
            _ => {}
        }
        match (&a.certificate_verdict, &a.certificate_error) {
            (Some(v), _) => println!(
                "verdict        {} (certified {:.6e}, tolerance {})",
                if v.pass { "PASS" } else { "FAIL" },
                v.certified_rate,
                v.tolerance
            ),
            (None, Some(e)) => println!("verdict        n/a: {e}"),
            _ => {}
        }
    }
    if let Some(d) = &manifest.divergence {
        eprintln!("error: {d}");
    }
    Ok(manifest.exit_code)
}

fn cmd_plan(args: &PlanArgs) -> Result<u8> {
    let k = args.constants.resolve()?;
    let plan = if args.claim.is_obe() {
        if args.mu.is_some() {
            bail!("--mu is only supported for bnn claims");
        }
        let target = if args.claim == Claim::ObeL2 {
            ObeTarget::L2
        } else {
            ObeTarget::H1
        };
        plan_gains_obe(&PhysicalParams::new(args.nu, args.r, args.k), &k, target)?
    } else {
        let xi = args
            .xi
            .ok_or_else(|| anyhow!("--xi is required for bnn claims"))?;
        let family = match args.claim {
            Claim::BnnL2Modal => BnnFamily::ModalL2,
            Claim::BnnH1Modal => BnnFamily::ModalH1,
            _ => BnnFamily::VolumeL2,
        };
        let inp = BnnInputs {
            xi,
            h0: args.h0,
            h0_sup: args.h0_sup,
        };
        plan_gains_bnn(
            &PhysicalParams::new(args.nu, args.r, args.k),
            &k,
            &inp,
            family,
            args.mu,
        )?
    };
    let text = if args.json {
        serde_json::to_string_pretty(&plan)? + "\n"
    } else {
        format!(
            "claim          {}\nmu             {:.16e}\nN              {}\ncertified rate {:.16e}\niterations     {}\n\n{}",
            plan.claim,
            plan.mu,
            plan.modes,
            plan.certified_rate,
            plan.iterations,
            plan.ledger.report()
        )
    };
    print!("{text}");
    if let Some(p) = &args.output {
        fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8> {
    let text = fs::read_to_string(&args.sweep)
        .with_context(|| format!("cannot read sweep file {}", args.sweep.display()))?;
    let spec = SweepSpec::from_json(&text)?;
    let dir = args
        .sweep
        .parent()
        .map(|p| {
            if p.as_os_str().is_empty() {
                Path::new(".")
            } else {
                p
            }
        })
        .unwrap_or(Path::new("."))
        .canonicalize()?;
    let (base, base_dir) = spec.base_config(&dir)?;
    let out_dir = args.out.dir_for(&args.sweep);
    let jobs = if args.jobs == 0 {
        rayon::current_num_threads()
    } else {
        args.jobs
    };
    let rows = run_sweep(&spec, &base, &base_dir, &out_dir, jobs)?;
    let summary = out_dir.join("summary.csv");
    write_summary(&summary, &spec, &rows)?;
    let failed = rows.iter().filter(|r| r.exit_code != EXIT_OK).count();
    println!("sweep directory {}", out_dir.display());
    println!(
        "runs {}  failed {}  summary {}",
        rows.len(),
        failed,
        summary.display()
    );
    Ok(EXIT_OK)
}

fn cmd_verify(args: &VerifyArgs) -> Result<u8> {
    let k = args.constants.resolve()?;
    let grid = GridSpec::new(args.points)?;
    let report = inequality_ensemble(args.seed, args.count, args.max_mode, &k, grid)?;
    print!("{}", report.text());
    if let Some(p) = &args.output {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    })
}

fn parse_quantity(s: &str) -> Result<Quantity> {
    Ok(match s {
        "obe-l2" => Quantity::ObeL2,
        "obe-h1" => Quantity::ObeH1,
        "bnn-l2" => Quantity::BnnL2,
        "bnn-h1" => Quantity::BnnH1,
        other => Quantity::Squared(
            Channel::parse(other).ok_or_else(|| anyhow!("unknown quantity `{other}`"))?,
        ),
    })
}

fn cmd_fit(args: &FitArgs) -> Result<u8> {
    let text = fs::read_to_string(&args.trace)
        .with_context(|| format!("cannot read trace {}", args.trace.display()))?;
    let trace = Trace::read_csv(&text)?;
    let quantity = match (&args.quantity, args.claim) {
        (Some(q), _) => parse_quantity(q)?,
        (None, Some(c)) => Quantity::for_claim(c),
        (None, None) if trace.has(Channel::W) => Quantity::ObeL2,
        (None, None) if trace.has(Channel::L2Z) => Quantity::BnnL2,
        (None, None) => bail!("trace has no error columns; pass --quantity"),
    };
    let ledger: Option<CertificateLedger> = match &args.ledger {
        Some(p) => Some(
            serde_json::from_str(
                &fs::read_to_string(p)
                    .with_context(|| format!("cannot read ledger {}", p.display()))?,
            )
            .with_context(|| format!("parsing ledger {}", p.display()))?,
        ),
        None => None,
    };
    let burn_in = match (args.burn_in, &ledger, args.claim) {
        (Some(b), _, _) => b,
        (None, Some(l), Some(c)) => default_burn_in(&trace, l, c),
        _ => 0.0,
    };
    let fit = fit_decay_rate(&trace, quantity, burn_in, args.floor)?;
    let verdict = match (&ledger, args.claim, args.certified) {
        (Some(l), Some(c), _) => Some(compare_to_certificate(&fit, l, c, args.tolerance)),
        (None, _, Some(rate)) => Some(Ok(compare_rate(fit.rate, rate, args.tolerance))),
        _ => None,
    };
    if args.json {
        let v = serde_json::json!({
            "burn_in": burn_in,
            "fit": fit,
            "verdict": verdict.as_ref().and_then(|v| v.as_ref().ok()),
            "verdict_error": verdict.as_ref().and_then(|v| v.as_ref().err().map(|e| e.to_string())),
        });
        println!("{}", serde_json::to_string_pretty(&v)?);
        return Ok(EXIT_OK);
    }
    println!("burn-in    {burn_in}");
    println!("samples    {}", fit.samples);
    println!("window     [{:.16e}, {:.16e}]", fit.window.0, fit.window.1);
    println!("rate       {:.16e}", fit.rate);
    println!("intercept  {:.16e}", fit.intercept);
    println!("residual   {:.6e}", fit.residual);
    println!("floor hit  {}", fit.floor_hit);
    match verdict {
        Some(Ok(v)) => println!(
            "verdict    {} (certified {:.6e}, margin {:+.6e}, tolerance {})",
            if v.pass { "PASS" } else { "FAIL" },
            v.certified_rate,
            v.margin,
            v.tolerance
        ),
        Some(Err(e)) => println!("verdict    FAIL: {e}"),
        None => {}
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::VerifyInequalities(a) => cmd_verify(a),
        Command::FitRate(a) => cmd_fit(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_any(&e))
        }
    }
}
