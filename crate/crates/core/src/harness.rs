//! Instance generators, single-run dispatch, parameter sweeps and the
//! query-release pipeline.
//!
//! Sweep CSV columns, in order:
//!
//! ```text
//! solver,kind,n,m,ell,b,eps,delta,alpha,seed,status,objective,reference,gap,
//! max_violation,feasible,rounds,clamp_events,best_response_calls,eta,p_max,
//! grad_max,eps_step,sigma,wall_time_ms,warnings,error
//! ```
//!
//! Optional values are left empty. `wall_time_ms` is empty unless
//! `record_timing` is set, so that reruns produce byte-identical files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardness_bridge::{
    build_reduction_instance, evaluate_release_accuracy, opt_lower_bound, random_workload,
    release_queries, QueryWorkload,
};
use crate::model::{evaluate_allocation, AgentData, Allocation, PackingInstance};
use crate::privacy::{PrivacySpec, GENERATOR_STREAM};
use crate::reference::brute_force_opt;
use crate::report::{Method, SolverReport};
use crate::solver_dmw::{run_pri_dmw, run_pri_dmw_exact_feasible, DmwConfig};
use crate::solver_domw::{run_pri_domw, sample_permutation, DomwConfig, OnlineDomw};

/// Round count for the noiseless baseline when none is given.
pub const DEFAULT_NOISELESS_ROUNDS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Dmw,
    DmwExact,
    Domw,
    DomwOnline,
    Noiseless,
    Brute,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::Dmw,
        SolverKind::DmwExact,
        SolverKind::Domw,
        SolverKind::DomwOnline,
        SolverKind::Noiseless,
        SolverKind::Brute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Dmw => "dmw",
            SolverKind::DmwExact => "dmw-exact",
            SolverKind::Domw => "domw",
            SolverKind::DomwOnline => "domw-online",
            SolverKind::Noiseless => "noiseless",
            SolverKind::Brute => "brute",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown solver {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Uniform,
    Correlated,
    Hardness,
}

impl InstanceKind {
    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::Uniform => "uniform",
            InstanceKind::Correlated => "correlated",
            InstanceKind::Hardness => "hardness",
        }
    }
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(InstanceKind::Uniform),
            "correlated" => Ok(InstanceKind::Correlated),
            "hardness" => Ok(InstanceKind::Hardness),
            _ => Err(Error::InvalidParameter(format!(
                "unknown instance kind {s:?}"
            ))),
        }
    }
}

/// Synthetic instance, deterministic in `seed`.
///
/// * `uniform`: every value and demand i.i.d. uniform on `[0, 1)`.
/// * `correlated`: agent `i` draws a size `s_i`; demands are `s_i · u` and
///   values `(s_i + u′)/2`, so larger bundles tend to be worth more.
/// * `hardness`: the query-release instance for a random binary dataset of
///   `b/2` records and `m` queries; `n` and `ℓ` are ignored.
///
/// The agents do not depend on `b`, so sweeping the supply keeps the same
/// agent population.
pub fn generate_instance(
    kind: InstanceKind,
    n: usize,
    m: usize,
    ell: usize,
    b: f64,
    seed: u64,
) -> Result<PackingInstance> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    if kind == InstanceKind::Hardness {
        if b.fract() != 0.0 || b < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "hardness instances need an even integer supply, got {b}"
            )));
        }
        let b = b as usize;
        let workload = random_workload(b / 2, m, seed);
        return Ok(build_reduction_instance(&workload, b)?.packing);
    }
    if n == 0 || ell == 0 {
        return Err(Error::InvalidParameter("n and ell must be >= 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(GENERATOR_STREAM);
    let agents = (0..n)
        .map(|_| match kind {
            InstanceKind::Uniform => {
                let values = (0..ell).map(|_| rng.gen::<f64>()).collect();
                let demands = (0..ell)
                    .map(|_| (0..m).map(|_| rng.gen::<f64>()).collect())
                    .collect();
                AgentData::new(values, demands)
            }
            InstanceKind::Correlated => {
                let size: f64 = rng.gen();
                let values = (0..ell).map(|_| 0.5 * (size + rng.gen::<f64>())).collect();
                let demands = (0..ell)
                    .map(|_| (0..m).map(|_| size * rng.gen::<f64>()).collect())
                    .collect();
                AgentData::new(values, demands)
            }
            InstanceKind::Hardness => unreachable!(),
        })
        .collect();
    let instance = PackingInstance::new(m, b, agents);
    instance.validate()?;
    Ok(instance)
}

/// Everything one solver run needs besides the instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub solver: SolverKind,
    pub privacy: Option<PrivacySpec>,
    pub alpha: f64,
    pub rounds: Option<usize>,
    pub seed: u64,
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub allocation: Allocation,
    pub report: SolverReport,
    /// Per-agent payments for the online solvers.
    pub payments: Option<Vec<Option<f64>>>,
}

fn need_privacy(opts: &SolveOptions) -> Result<PrivacySpec> {
    opts.privacy.ok_or_else(|| {
        Error::InvalidParameter(format!("solver {} needs epsilon and delta", opts.solver))
    })
}

fn dmw_config(opts: &SolveOptions) -> Result<DmwConfig> {
    let mut cfg = DmwConfig::private(need_privacy(opts)?, opts.alpha);
    cfg.rounds_override = opts.rounds;
    cfg.force = opts.force;
    Ok(cfg)
}

fn domw_config(opts: &SolveOptions) -> Result<DomwConfig> {
    let mut cfg = DomwConfig::private(need_privacy(opts)?, opts.alpha);
    cfg.force = opts.force;
    Ok(cfg)
}

pub fn solve(instance: &PackingInstance, opts: &SolveOptions) -> Result<SolveResult> {
    match opts.solver {
        SolverKind::Dmw => {
            let out = run_pri_dmw(instance, &dmw_config(opts)?, opts.seed)?;
            Ok(SolveResult {
                allocation: out.allocation,
                report: out.report,
                payments: None,
            })
        }
        SolverKind::DmwExact => {
            let out = run_pri_dmw_exact_feasible(instance, &dmw_config(opts)?, opts.seed)?;
            Ok(SolveResult {
                allocation: out.allocation,
                report: out.report,
                payments: None,
            })
        }
        SolverKind::Noiseless => {
            let mut cfg =
                DmwConfig::noiseless(opts.alpha, opts.rounds.unwrap_or(DEFAULT_NOISELESS_ROUNDS));
            cfg.force = opts.force;
            let out = run_pri_dmw(instance, &cfg, opts.seed)?;
            Ok(SolveResult {
                allocation: out.allocation,
                report: out.report,
                payments: None,
            })
        }
        SolverKind::Domw => {
            let out = run_pri_domw(instance, &domw_config(opts)?, opts.seed)?;
            Ok(SolveResult {
                allocation: out.allocation,
                report: out.report,
                payments: Some(out.payments),
            })
        }
        SolverKind::DomwOnline => solve_online(instance, opts),
        SolverKind::Brute => {
            let start = std::time::Instant::now();
            let oracle = brute_force_opt(instance)?;
            let metrics = evaluate_allocation(instance, &oracle.allocation)?;
            let mut report =
                SolverReport::new("brute", Method::Brute, &metrics, instance.supply, opts.seed);
            report
                .params
                .insert("enumerated".into(), oracle.enumerated as f64);
            report
                .params
                .insert("integral_space".into(), oracle.integral_space);
            report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(SolveResult {
                allocation: oracle.allocation,
                report,
                payments: None,
            })
        }
    }
}

/// Streams the agents through [`OnlineDomw`] in the sampled arrival order.
fn solve_online(instance: &PackingInstance, opts: &SolveOptions) -> Result<SolveResult> {
    let start = std::time::Instant::now();
    instance.validate_for_solver()?;
    if (instance.n as f64) < instance.supply {
        let mut out = run_pri_domw(instance, &domw_config(opts)?, opts.seed)?;
        out.report.solver = "domw-online".into();
        return Ok(SolveResult {
            allocation: out.allocation,
            report: out.report,
            payments: Some(out.payments),
        });
    }
    let cfg = domw_config(opts)?;
    let mut online = OnlineDomw::new(instance.n, instance.m, instance.supply, &cfg, opts.seed)?;
    let mut choices = vec![None; instance.n];
    let mut payments = vec![None; instance.n];
    for i in sample_permutation(instance.n, opts.seed) {
        let decision = online.next_decision(&instance.agents[i])?;
        if decision.chosen.is_some() {
            choices[i] = decision.chosen;
            payments[i] = Some(decision.payment);
        }
    }
    let params = online.params().clone();
    let summary = online.finish()?;
    let allocation = Allocation::from_choices(instance, &choices);
    let metrics = evaluate_allocation(instance, &allocation)?;
    let mut report = SolverReport::new(
        "domw-online",
        Method::Solver,
        &metrics,
        instance.supply,
        opts.seed,
    );
    report.rounds = summary.rounds;
    report.clamp_events = summary.clamp_events;
    report.best_response_calls = summary.best_response_calls;
    for (k, v) in [
        ("sigma", params.sigma),
        ("eta", params.eta),
        ("p_max", params.p_max),
        ("grad_max", params.grad_max),
        ("alpha", params.alpha),
    ] {
        report.params.insert(k.into(), v);
    }
    report.warnings.extend(params.warnings);
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(SolveResult {
        allocation,
        report,
        payments: Some(payments),
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    None,
    Noiseless,
    Brute,
}

fn default_ell() -> usize {
    2
}

fn default_kind() -> InstanceKind {
    InstanceKind::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub solver: SolverKind,
    #[serde(default = "default_kind")]
    pub kind: InstanceKind,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub b: Vec<f64>,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_ell")]
    pub ell: usize,
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default)]
    pub reference: ReferenceKind,
    #[serde(default)]
    pub reference_rounds: Option<usize>,
    #[serde(default)]
    pub force: bool,
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let grids = [
            ("n", self.n.len()),
            ("m", self.m.len()),
            ("b", self.b.len()),
            ("eps", self.eps.len()),
            ("delta", self.delta.len()),
            ("alpha", self.alpha.len()),
            ("seeds", self.seeds.len()),
        ];
        if let Some((name, _)) = grids.iter().find(|(_, len)| *len == 0) {
            return Err(Error::InvalidParameter(format!("grid {name} is empty")));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::InvalidParameter("seeds must be distinct".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Grid points in row order: `n, m, b, eps, delta, alpha`, then seeds.
    fn jobs(&self) -> Vec<Job> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &m in &self.m {
                for &b in &self.b {
                    for &eps in &self.eps {
                        for &delta in &self.delta {
                            for &alpha in &self.alpha {
                                for &seed in &self.seeds {
                                    out.push(Job {
                                        n,
                                        m,
                                        b,
                                        eps,
                                        delta,
                                        alpha,
                                        seed,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    n: usize,
    m: usize,
    b: f64,
    eps: f64,
    delta: f64,
    alpha: f64,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub solver: String,
    pub kind: String,
    pub n: usize,
    pub m: usize,
    pub ell: usize,
    pub b: f64,
    pub eps: f64,
    pub delta: f64,
    pub alpha: f64,
    pub seed: u64,
    pub status: String,
    pub objective: Option<f64>,
    pub reference: Option<f64>,
    pub gap: Option<f64>,
    pub max_violation: Option<f64>,
    pub feasible: Option<bool>,
    pub rounds: Option<usize>,
    pub clamp_events: Option<u64>,
    pub best_response_calls: Option<u64>,
    pub eta: Option<f64>,
    pub p_max: Option<f64>,
    pub grad_max: Option<f64>,
    pub eps_step: Option<f64>,
    pub sigma: Option<f64>,
    pub wall_time_ms: Option<f64>,
    pub warnings: String,
    pub error: String,
}

fn status_of(err: &Error) -> &'static str {
    match err {
        Error::ParamGuard(_) => "param_guard",
        e if e.is_validation() => "validation",
        _ => "error",
    }
}

fn run_job(cfg: &ExperimentConfig, job: Job) -> ExperimentRow {
    let mut row = ExperimentRow {
        solver: cfg.solver.to_string(),
        kind: cfg.kind.name().to_string(),
        n: job.n,
        m: job.m,
        ell: cfg.ell,
        b: job.b,
        eps: job.eps,
        delta: job.delta,
        alpha: job.alpha,
        seed: job.seed,
        status: "ok".into(),
        objective: None,
        reference: None,
        gap: None,
        max_violation: None,
        feasible: None,
        rounds: None,
        clamp_events: None,
        best_response_calls: None,
        eta: None,
        p_max: None,
        grad_max: None,
        eps_step: None,
        sigma: None,
        wall_time_ms: None,
        warnings: String::new(),
        error: String::new(),
    };
    let result = (|| -> Result<SolverReport> {
        let instance = generate_instance(cfg.kind, job.n, job.m, cfg.ell, job.b, job.seed)?;
        let privacy = PrivacySpec::new(job.eps, job.delta)?;
        let opts = SolveOptions {
            solver: cfg.solver,
            privacy: Some(privacy),
            alpha: job.alpha,
            rounds: cfg.rounds,
            seed: job.seed,
            force: cfg.force,
        };
        let mut report = solve(&instance, &opts)?.report;
        match cfg.reference {
            ReferenceKind::None => {}
            ReferenceKind::Noiseless => {
                let base = SolveOptions {
                    solver: SolverKind::Noiseless,
                    rounds: cfg.reference_rounds.or(cfg.rounds),
                    force: true,
                    ..opts
                };
                report.set_reference(solve(&instance, &base)?.report.objective);
            }
            ReferenceKind::Brute => {
                report.set_reference(brute_force_opt(&instance)?.opt_value);
            }
        }
        Ok(report)
    })();
    match result {
        Ok(r) => {
            row.objective = Some(r.objective);
            row.reference = r.opt_reference;
            row.gap = r.gap;
            row.max_violation = Some(r.max_violation);
            row.feasible = Some(r.feasible);
            row.rounds = Some(r.rounds);
            row.clamp_events = Some(r.clamp_events);
            row.best_response_calls = Some(r.best_response_calls);
            row.eta = r.param("eta");
            row.p_max = r.param("p_max");
            row.grad_max = r.param("grad_max");
            row.eps_step = r.param("eps_step");
            row.sigma = r.param("sigma");
            if cfg.record_timing {
                row.wall_time_ms = Some(r.wall_time_ms);
            }
            row.warnings = r.warnings.join(" | ");
        }
        Err(e) => {
            row.status = status_of(&e).into();
            row.error = e.to_string();
            if matches!(e, Error::ParamGuard(_)) {
                row.warnings.clone_from(&row.error);
            }
        }
    }
    row
}

/// Runs every grid point and seed. Runs execute in parallel; rows come back
/// in grid order regardless of scheduling. Failures are recorded per row.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    Ok(cfg
        .jobs()
        .into_par_iter()
        .map(|job| run_job(cfg, job))
        .collect())
}

pub fn write_rows_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Sweep rendered as CSV text.
pub fn run_experiment_csv(cfg: &ExperimentConfig) -> Result<String> {
    let rows = run_experiment(cfg)?;
    let mut buf = Vec::new();
    write_rows_csv(&rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

// ---------------------------------------------------------------------------
// Query release
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReleaseReport {
    pub released: Vec<f64>,
    pub exact: Vec<f64>,
    pub average_error: f64,
    pub opt_lower_bound: f64,
    pub brute_opt: Option<f64>,
    pub solver: SolverReport,
}

/// Builds the packing instance for `workload`, solves it and releases the
/// query answers. `brute_check` also computes the exact optimum.
pub fn run_reduction(
    workload: &QueryWorkload,
    b: usize,
    opts: &SolveOptions,
    brute_check: bool,
) -> Result<ReleaseReport> {
    let reduction = build_reduction_instance(workload, b)?;
    let lower = opt_lower_bound(workload, b)?;
    let solved = solve(&reduction.packing, opts)?;
    let released = release_queries(&reduction, &solved.allocation)?;
    let brute_opt = if brute_check {
        Some(brute_force_opt(&reduction.packing)?.opt_value)
    } else {
        None
    };
    Ok(ReleaseReport {
        average_error: evaluate_release_accuracy(workload, &released)?,
        exact: workload.counts()?,
        released,
        opt_lower_bound: lower,
        brute_opt,
        solver: solved.report,
    })
}
