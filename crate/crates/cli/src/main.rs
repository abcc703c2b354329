//! `jdp-pack`: command-line front end for the private packing solvers.
//!
//! Data goes to stdout or to files. Failures print one JSON object on
//! stderr, `{"error": kind, "message": text}`, and exit with 1 for invalid
//! input or 2 for guard and runtime failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jdp_packing::hardness_bridge::{random_workload, QueryWorkload};
use jdp_packing::harness::{
    generate_instance, run_experiment, run_reduction, solve, write_rows_csv, ExperimentConfig,
    InstanceKind, SolveOptions, SolverKind,
};
use jdp_packing::model::{load_instance, save_instance};
use jdp_packing::privacy::{
    audit_mechanism, concentration_check_inner_product, concentration_check_overflow, parse_seed,
    ConcentrationConfig, PrivacySpec,
};
use jdp_packing::reference::brute_force_opt;
use jdp_packing::solver_dmw::{run_pri_dmw, DmwConfig};
use jdp_packing::Error;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "jdp-pack",
    version,
    about = "Jointly private packing LP solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one solver on one instance file and print the report as JSON.
    Solve(SolveArgs),
    /// Run a parameter sweep from a JSON config and write CSV.
    Sweep(SweepArgs),
    /// Empirical privacy audit and concentration checks.
    Audit(AuditArgs),
    /// Release counting queries through the packing reduction.
    Reduce(ReduceArgs),
    /// Exact integral optimum by exhaustive search.
    Oracle(OracleArgs),
    /// Write a synthetic instance or workload.
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct PrivacyArgs {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
}

impl PrivacyArgs {
    fn spec(&self) -> Result<Option<PrivacySpec>, Error> {
        match (self.eps, self.delta) {
            (Some(e), d) => Ok(Some(PrivacySpec::with_beta(
                e,
                d.unwrap_or(0.0),
                self.beta,
            )?)),
            (None, None) => Ok(None),
            (None, Some(_)) => Err(Error::InvalidParameter(
                "--delta given without --eps".into(),
            )),
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, default_value = "dmw")]
    solver: String,
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    privacy: PrivacyArgs,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Override the derived round count.
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, default_value = "0")]
    seed: String,
    /// Run even when the step-size guard fails.
    #[arg(long)]
    force: bool,
    /// Keep the measured wall time in the report (otherwise reported as 0).
    #[arg(long)]
    timing: bool,
    /// Write the per-round price trace of `dmw`/`noiseless` to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Include gradient columns in the trace.
    #[arg(long)]
    trace_gradients: bool,
    /// Also write the allocation as JSON.
    #[arg(long)]
    allocation: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; falls back to the config's `output`, then stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Per-step budget of the audited Laplace mechanism; `inf` means no noise.
    #[arg(long, default_value_t = 1.0)]
    eps_step: f64,
    #[arg(long, default_value_t = 1_000_000)]
    trials: usize,
    #[arg(long, default_value = "0")]
    seed: String,
    /// Also run the concentration checks with these settings.
    #[arg(long)]
    concentration: bool,
    #[arg(long, default_value_t = 1000)]
    rounds: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    p_max: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value_t = 2000)]
    concentration_trials: usize,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    b: usize,
    #[arg(long, default_value = "noiseless")]
    solver: String,
    #[command(flatten)]
    privacy: PrivacyArgs,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, default_value = "0")]
    seed: String,
    #[arg(long)]
    force: bool,
    /// Also compute the exact optimum of the built instance.
    #[arg(long)]
    brute: bool,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// uniform, correlated, hardness or workload
    #[arg(long, default_value = "uniform")]
    kind: String,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    ell: usize,
    #[arg(long, default_value_t = 2.0)]
    b: f64,
    #[arg(long, default_value = "0")]
    seed: String,
    #[arg(long)]
    output: PathBuf,
}

fn fail(err: &Error) -> ExitCode {
    eprintln!(
        "{}",
        json!({ "error": err.kind(), "message": err.to_string() })
    );
    if err.is_validation() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn cmd_solve(args: SolveArgs) -> Result<(), Error> {
    let solver: SolverKind = args.solver.parse()?;
    let seed = parse_seed(&args.seed)?;
    let instance = load_instance(&args.instance)?;
    let privacy = args.privacy.spec()?;

    let (allocation, mut report) = if let Some(trace_path) = &args.trace {
        let mut cfg = match solver {
            SolverKind::Dmw => {
                let spec = privacy.ok_or_else(|| {
                    Error::InvalidParameter("solver dmw needs --eps and --delta".into())
                })?;
                let mut cfg = DmwConfig::private(spec, args.alpha);
                cfg.rounds_override = args.rounds;
                cfg
            }
            SolverKind::Noiseless => DmwConfig::noiseless(
                args.alpha,
                args.rounds
                    .unwrap_or(jdp_packing::harness::DEFAULT_NOISELESS_ROUNDS),
            ),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "--trace is only available for dmw and noiseless, not {other}"
                )))
            }
        }
        .with_trace();
        cfg.force = args.force;
        let out = run_pri_dmw(&instance, &cfg, seed)?;
        let mut buf = Vec::new();
        if let Some(trace) = &out.trace {
            trace.write_csv(&mut buf, args.trace_gradients)?;
        }
        write_file(trace_path, &String::from_utf8(buf).expect("utf-8"))?;
        (out.allocation, out.report)
    } else {
        let out = solve(
            &instance,
            &SolveOptions {
                solver,
                privacy,
                alpha: args.alpha,
                rounds: args.rounds,
                seed,
                force: args.force,
            },
        )?;
        (out.allocation, out.report)
    };
    if !args.timing {
        report.wall_time_ms = 0.0;
    }
    if let Some(path) = &args.allocation {
        write_file(path, &(to_json(&allocation) + "\n"))?;
    }
    println!("{}", to_json(&report));
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let rows = run_experiment(&cfg)?;
    let mut buf = Vec::new();
    write_rows_csv(&rows, &mut buf)?;
    let text = String::from_utf8(buf).expect("utf-8");
    match args.output.or(cfg.output) {
        Some(path) => write_file(&path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<(), Error> {
    if !(args.eps_step > 0.0) {
        return Err(Error::InvalidParameter(
            "--eps-step must be positive".into(),
        ));
    }
    if args.trials == 0 {
        return Err(Error::InvalidParameter("--trials must be positive".into()));
    }
    let seed = parse_seed(&args.seed)?;
    let audit = audit_mechanism(args.eps_step, args.trials, seed);
    let mut out = json!({
        "eps_step": args.eps_step,
        "trials": args.trials,
        "seed": seed,
        "estimate": audit.estimate,
        "raw_estimate": audit.raw_estimate,
        "non_private": audit.non_private,
        "bins_used": audit.bins_used,
    });
    if args.concentration {
        let cfg = ConcentrationConfig {
            p_max: args.p_max,
            eps_step: args.eps_step,
            m: args.m,
            rounds: args.rounds,
            beta: args.beta,
            trials: args.concentration_trials,
            seed,
            threshold_scale: 1.0,
        };
        out["inner_product_bound"] = json!(cfg.inner_product_bound());
        out["inner_product_exceed_rate"] = json!(concentration_check_inner_product(&cfg));
        out["overflow_exceed_rate"] = json!(concentration_check_overflow(&cfg));
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

fn cmd_reduce(args: ReduceArgs) -> Result<(), Error> {
    let workload = QueryWorkload::load(&args.workload)?;
    let opts = SolveOptions {
        solver: args.solver.parse()?,
        privacy: args.privacy.spec()?,
        alpha: args.alpha,
        rounds: args.rounds,
        seed: parse_seed(&args.seed)?,
        force: args.force,
    };
    let mut report = run_reduction(&workload, args.b, &opts, args.brute)?;
    report.solver.wall_time_ms = 0.0;
    println!("{}", to_json(&report));
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<(), Error> {
    let instance = load_instance(&args.instance)?;
    let r = brute_force_opt(&instance)?;
    println!("OPT {}", r.opt_value);
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Error> {
    let seed = parse_seed(&args.seed)?;
    if args.kind == "workload" {
        if args.b.fract() != 0.0 || args.b < 2.0 {
            return Err(Error::InvalidParameter(
                "workload needs an even integer --b".into(),
            ));
        }
        return random_workload(args.b as usize / 2, args.m, seed).save(&args.output);
    }
    let kind: InstanceKind = args.kind.parse()?;
    let instance = generate_instance(kind, args.n, args.m, args.ell, args.b, seed)?;
    save_instance(&instance, &args.output)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Reduce(a) => cmd_reduce(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
