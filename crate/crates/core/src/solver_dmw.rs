//! Noisy dual multiplicative weights (the batch solver).
//!
//! Parameters, for `n` agents, `m` resources, supply `b`, approximation `α`
//! and privacy `(ε, δ)`:
//!
//! | name        | value                          |
//! |-------------|--------------------------------|
//! | rounds `T`  | `max(1, round(ε² n² / m))`     |
//! | `η`         | `ln(m+1) / (α b T)`            |
//! | `p_max`     | `4n / b`                       |
//! | `ε′`        | `ε / sqrt(8 T m ln(2/δ))`      |
//! | `∇_max`     | `n + ln(T)/ε′`                 |
//!
//! Each round every agent best-responds to `p^(t)`, the subgradient
//! `b − consumption_j` gets Laplace(1/ε′) noise and is clamped to
//! `[−∇_max, ∇_max]`, and prices are multiplied by `1 − η ∇̄_j` and
//! renormalized to `‖p‖₁ = p_max`. The dummy coordinate has gradient 0.
//! Agents observe the average of their per-round best responses.
//!
//! In noiseless mode the noise scale is 0, `∇_max = n`, and the round count
//! must be given explicitly.

use std::io::Write;
use std::time::Instant;

use crate::dual_core::{best_response_unchecked, lagrangian, DualPriceVector};
use crate::error::{Error, Result};
use crate::model::{evaluate_allocation, Allocation, PackingInstance};
use crate::numeric::CompensatedSum;
use crate::privacy::{per_step_epsilon_dmw, NoiseStream, PrivacySpec};
use crate::reference::trivial_allocate;
use crate::report::{Method, SolverReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    Private(PrivacySpec),
    /// Zero noise; used as an oracle and as the non-private baseline.
    Noiseless,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmwConfig {
    pub alpha: f64,
    pub noise: NoiseMode,
    /// Replaces the formula's round count. `η` and `ε′` are recomputed from
    /// the overridden value so the total privacy budget is unchanged.
    pub rounds_override: Option<usize>,
    /// Run even when `η ∇_max ≥ 1`. Price positivity is still enforced.
    pub force: bool,
    pub record_trace: bool,
}

impl DmwConfig {
    pub fn private(spec: PrivacySpec, alpha: f64) -> Self {
        Self {
            alpha,
            noise: NoiseMode::Private(spec),
            rounds_override: None,
            force: false,
            record_trace: false,
        }
    }

    pub fn noiseless(alpha: f64, rounds: usize) -> Self {
        Self {
            alpha,
            noise: NoiseMode::Noiseless,
            rounds_override: Some(rounds),
            force: false,
            record_trace: false,
        }
    }

    pub fn with_rounds(mut self, rounds: usize) -> Self {
        self.rounds_override = Some(rounds);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmwParams {
    pub rounds: usize,
    /// Unrounded `ε² n² / m`, when a privacy spec is present.
    pub formula_rounds: Option<f64>,
    pub rounds_overridden: bool,
    pub eta: f64,
    pub p_max: f64,
    /// `ε′`; infinite in noiseless mode.
    pub eps_step: f64,
    pub noise_scale: f64,
    pub grad_max: f64,
    pub alpha: f64,
    pub supply: f64,
    /// Supply at which the step-size condition is guaranteed to hold:
    /// `20 ln(T) sqrt(m ln(m+1) ln(6/β) ln(2/δ)) / (α ε)`.
    pub supply_requirement: Option<f64>,
    pub warnings: Vec<String>,
}

impl DmwParams {
    pub fn eta_grad_max(&self) -> f64 {
        self.eta * self.grad_max
    }

    fn echo(&self, report: &mut SolverReport) {
        let p = &mut report.params;
        p.insert("rounds".into(), self.rounds as f64);
        if let Some(t) = self.formula_rounds {
            p.insert("formula_rounds".into(), t);
        }
        p.insert(
            "rounds_overridden".into(),
            f64::from(u8::from(self.rounds_overridden)),
        );
        p.insert("eta".into(), self.eta);
        p.insert("p_max".into(), self.p_max);
        p.insert("eps_step".into(), self.eps_step);
        p.insert("noise_scale".into(), self.noise_scale);
        p.insert("grad_max".into(), self.grad_max);
        p.insert("eta_grad_max".into(), self.eta_grad_max());
        p.insert("alpha".into(), self.alpha);
        p.insert("supply".into(), self.supply);
        if let Some(r) = self.supply_requirement {
            p.insert("supply_requirement".into(), r);
        }
        report.warnings.extend(self.warnings.iter().cloned());
    }
}

pub fn derive_params(instance: &PackingInstance, config: &DmwConfig) -> Result<DmwParams> {
    instance.validate_for_solver()?;
    let alpha = config.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    let n = instance.n as f64;
    let m = instance.m;
    let b = instance.supply;
    if b <= 0.0 {
        return Err(Error::ParamGuard(format!(
            "supply must be positive for the dual solver, got {b}"
        )));
    }
    let mut warnings = Vec::new();

    let formula_rounds = match config.noise {
        NoiseMode::Private(spec) => Some(spec.epsilon * spec.epsilon * n * n / m as f64),
        NoiseMode::Noiseless => None,
    };
    let rounds = match (config.rounds_override, formula_rounds) {
        (Some(0), _) => {
            return Err(Error::InvalidParameter(
                "round override must be >= 1".into(),
            ))
        }
        (Some(t), _) => t,
        (None, Some(t)) => (t.round() as usize).max(1),
        (None, None) => {
            return Err(Error::InvalidParameter(
                "noiseless mode needs an explicit round count".into(),
            ))
        }
    };
    if let (Some(t), Some(f)) = (config.rounds_override, formula_rounds) {
        warnings.push(format!(
            "round count overridden: running {t} rounds instead of {f:.1}"
        ));
    }

    let t = rounds as f64;
    let eta = ((m + 1) as f64).ln() / (alpha * b * t);
    let p_max = 4.0 * n / b;
    let (eps_step, noise_scale, grad_max, supply_requirement) = match config.noise {
        NoiseMode::Private(spec) => {
            let eps_step = per_step_epsilon_dmw(&spec, rounds, m)?;
            let grad_max = n + t.ln() / eps_step;
            let mf = m as f64;
            let requirement = 20.0
                * t.ln()
                * (mf * (mf + 1.0).ln() * (6.0 / spec.beta).ln() * (2.0 / spec.delta).ln()).sqrt()
                / (alpha * spec.epsilon);
            if b < requirement {
                warnings.push(format!(
                    "supply {b} is below {requirement:.3}, the level at which the step-size condition is guaranteed"
                ));
            }
            (eps_step, 1.0 / eps_step, grad_max, Some(requirement))
        }
        NoiseMode::Noiseless => (f64::INFINITY, 0.0, n, None),
    };

    let params = DmwParams {
        rounds,
        formula_rounds,
        rounds_overridden: config.rounds_override.is_some(),
        eta,
        p_max,
        eps_step,
        noise_scale,
        grad_max,
        alpha,
        supply: b,
        supply_requirement,
        warnings,
    };
    if params.eta_grad_max() >= 1.0 && !config.force {
        return Err(Error::ParamGuard(format!(
            "step-size condition eta * grad_max < 1 fails: {} * {} = {}; supply {b} is too small",
            params.eta,
            params.grad_max,
            params.eta_grad_max()
        )));
    }
    Ok(params)
}

/// Clamp to `[−grad_max, grad_max]`.
pub fn truncate_gradient(g: f64, grad_max: f64) -> f64 {
    g.clamp(-grad_max, grad_max)
}

/// One normalized multiplicative step: `p′_j = p_j (1 − η ḡ_j) / φ` with
/// `φ = Σ_j p_j (1 − η ḡ_j) / p_max`. Returns the new prices and `φ`.
///
/// `g_bar` has `m + 1` entries; the last (dummy) one should be 0. A
/// non-positive multiplier is reported as [`Error::Positivity`] with round 0.
pub fn mwu_step(p: &DualPriceVector, g_bar: &[f64], eta: f64) -> Result<(DualPriceVector, f64)> {
    let factors: Vec<f64> = g_bar.iter().map(|g| 1.0 - eta * g).collect();
    scale_and_normalize(p, &factors)
}

pub(crate) fn scale_and_normalize(
    p: &DualPriceVector,
    factors: &[f64],
) -> Result<(DualPriceVector, f64)> {
    if factors.len() != p.as_slice().len() {
        return Err(Error::Dimension {
            context: "price update factors",
            expected: p.as_slice().len(),
            got: factors.len(),
        });
    }
    if let Some((j, &f)) = factors.iter().enumerate().find(|(_, f)| !(**f > 0.0)) {
        return Err(Error::Positivity {
            round: 0,
            coordinate: j,
            multiplier: f,
        });
    }
    let weights: Vec<f64> = p
        .as_slice()
        .iter()
        .zip(factors)
        .map(|(pj, f)| pj * f)
        .collect();
    normalize(weights, p.p_max())
}

pub(crate) fn normalize(weights: Vec<f64>, p_max: f64) -> Result<(DualPriceVector, f64)> {
    let phi = crate::numeric::sum(weights.iter().copied()) / p_max;
    let prices: Vec<f64> = weights.into_iter().map(|w| w / phi).collect();
    Ok((DualPriceVector::new(prices, p_max)?, phi))
}

/// Per-round record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    /// Normalizer applied after this round's update.
    pub phi: f64,
    /// `p^(t)`, the prices the agents responded to.
    pub prices: Vec<f64>,
    pub grad_raw: Vec<f64>,
    pub grad_trunc: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DmwTrace {
    pub rounds: Vec<RoundTrace>,
}

impl DmwTrace {
    /// CSV with columns `round, phi, price_0..price_m` and, when
    /// `gradients` is set, `grad_raw_0..`, `grad_trunc_0..`.
    pub fn write_csv<W: Write>(&self, out: W, gradients: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let Some(first) = self.rounds.first() else {
            w.flush().map_err(csv::Error::from)?;
            return Ok(());
        };
        let mut header = vec!["round".to_string(), "phi".to_string()];
        header.extend((0..first.prices.len()).map(|j| format!("price_{j}")));
        if gradients {
            header.extend((0..first.grad_raw.len()).map(|j| format!("grad_raw_{j}")));
            header.extend((0..first.grad_trunc.len()).map(|j| format!("grad_trunc_{j}")));
        }
        w.write_record(&header)?;
        for r in &self.rounds {
            let mut row = vec![r.round.to_string(), r.phi.to_string()];
            row.extend(r.prices.iter().map(f64::to_string));
            if gradients {
                row.extend(r.grad_raw.iter().map(f64::to_string));
                row.extend(r.grad_trunc.iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DmwOutcome {
    pub allocation: Allocation,
    pub report: SolverReport,
    pub trace: Option<DmwTrace>,
    /// Time-averaged prices `p̂`, when the solver ran.
    pub average_prices: Option<Vec<f64>>,
}

pub fn run_pri_dmw(
    instance: &PackingInstance,
    config: &DmwConfig,
    seed: u64,
) -> Result<DmwOutcome> {
    let start = Instant::now();
    instance.validate_for_solver()?;
    let name = match config.noise {
        NoiseMode::Private(_) => "dmw",
        NoiseMode::Noiseless => "noiseless",
    };
    if (instance.n as f64) < instance.supply {
        return trivial_outcome(instance, name, seed, start);
    }
    let params = derive_params(instance, config)?;
    let mut noise = NoiseStream::new(params.noise_scale, seed);
    let run = iterate(instance, &params, &mut noise, config.record_trace)?;

    let metrics = evaluate_allocation(instance, &run.allocation)?;
    let mut report = SolverReport::new(name, Method::Solver, &metrics, instance.supply, seed);
    report.rounds = params.rounds;
    report.clamp_events = run.clamp_events;
    report.best_response_calls = run.best_response_calls;
    params.echo(&mut report);
    if let NoiseMode::Private(spec) = config.noise {
        report.params.insert("epsilon".into(), spec.epsilon);
        report.params.insert("delta".into(), spec.delta);
        report.params.insert("beta".into(), spec.beta);
    }
    report.params.insert("dual_min".into(), run.dual_min);
    report.params.insert("gap_proxy".into(), run.gap_proxy);
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(DmwOutcome {
        allocation: run.allocation,
        report,
        trace: run.trace,
        average_prices: Some(run.average_prices),
    })
}

fn trivial_outcome(
    instance: &PackingInstance,
    name: &str,
    seed: u64,
    start: Instant,
) -> Result<DmwOutcome> {
    let allocation = trivial_allocate(instance)?;
    let metrics = evaluate_allocation(instance, &allocation)?;
    let mut report = SolverReport::new(name, Method::Trivial, &metrics, instance.supply, seed);
    report.warnings.push(format!(
        "n = {} < b = {}: every agent receives its highest-value bundle",
        instance.n, instance.supply
    ));
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(DmwOutcome {
        allocation,
        report,
        trace: None,
        average_prices: None,
    })
}

/// Runs on a copy of the instance with supply `(1 − α) b` and judges the
/// output against the original supply `b`. The allocation is not repaired.
pub fn run_pri_dmw_exact_feasible(
    instance: &PackingInstance,
    config: &DmwConfig,
    seed: u64,
) -> Result<DmwOutcome> {
    run_pri_dmw_exact_feasible_with_margin(instance, config, seed, config.alpha)
}

/// As [`run_pri_dmw_exact_feasible`] with an explicit supply margin; margin 0
/// is a plain run.
pub fn run_pri_dmw_exact_feasible_with_margin(
    instance: &PackingInstance,
    config: &DmwConfig,
    seed: u64,
    margin: f64,
) -> Result<DmwOutcome> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidParameter(format!(
            "margin must be in [0, 1), got {margin}"
        )));
    }
    let reduced = instance.with_supply((1.0 - margin) * instance.supply);
    let mut out = run_pri_dmw(&reduced, config, seed)?;
    let metrics = evaluate_allocation(instance, &out.allocation)?;
    let r = &mut out.report;
    r.solver = format!("{}-exact", r.solver);
    r.max_violation = metrics.max_violation;
    r.feasible = metrics.feasible;
    r.judged_supply = instance.supply;
    r.params.insert("margin".into(), margin);
    if !metrics.feasible {
        r.warnings.push(format!(
            "output exceeds the original supply by {:.6}",
            metrics.max_violation
        ));
    }
    Ok(out)
}

struct RunState {
    allocation: Allocation,
    clamp_events: u64,
    best_response_calls: u64,
    dual_min: f64,
    gap_proxy: f64,
    average_prices: Vec<f64>,
    trace: Option<DmwTrace>,
}

fn iterate(
    instance: &PackingInstance,
    params: &DmwParams,
    noise: &mut NoiseStream,
    record_trace: bool,
) -> Result<RunState> {
    let m = instance.m;
    let b = instance.supply;
    let mut p = DualPriceVector::uniform(m, params.p_max);
    let mut counts: Vec<Vec<u64>> = instance
        .agents
        .iter()
        .map(|a| vec![0; a.bundles()])
        .collect();
    let mut price_sums = vec![CompensatedSum::new(); m + 1];
    let mut dual_sum = CompensatedSum::new();
    let mut dual_min = f64::INFINITY;
    let mut clamp_events = 0u64;
    let mut best_response_calls = 0u64;
    let mut trace = record_trace.then(DmwTrace::default);

    let mut used = vec![CompensatedSum::new(); m];
    let mut nu = vec![0.0; m];
    let mut g_bar = vec![0.0; m + 1];
    let mut grad_raw = vec![0.0; m];

    for round in 0..params.rounds {
        used.iter_mut().for_each(|u| *u = CompensatedSum::new());
        let mut surplus = CompensatedSum::new();
        for (agent, count) in instance.agents.iter().zip(counts.iter_mut()) {
            let response = best_response_unchecked(agent, p.real());
            best_response_calls += 1;
            if let Some(k) = response.chosen {
                count[k] += 1;
                surplus.add(response.utility);
                for (u, &a) in used.iter_mut().zip(&agent.demands[k]) {
                    u.add(a);
                }
            }
        }

        // D(p^(t)) = L(x^(t), p^(t))
        let dual = crate::numeric::sum(p.real().iter().map(|pj| b * pj)) + surplus.value();
        dual_sum.add(dual);
        dual_min = dual_min.min(dual);
        for (acc, &pj) in price_sums.iter_mut().zip(p.as_slice()) {
            acc.add(pj);
        }

        noise.fill(&mut nu);
        for j in 0..m {
            let raw = b - used[j].value() + nu[j];
            grad_raw[j] = raw;
            let clamped = truncate_gradient(raw, params.grad_max);
            if clamped != raw {
                clamp_events += 1;
            }
            g_bar[j] = clamped;
        }
        g_bar[m] = 0.0;
        debug_assert!(g_bar.iter().all(|g| g.abs() <= params.grad_max));

        let (next, phi) = mwu_step(&p, &g_bar, params.eta).map_err(|e| match e {
            Error::Positivity {
                coordinate,
                multiplier,
                ..
            } => Error::Positivity {
                round: round + 1,
                coordinate,
                multiplier,
            },
            other => other,
        })?;
        if let Some(tr) = trace.as_mut() {
            tr.rounds.push(RoundTrace {
                round: round + 1,
                phi,
                prices: p.as_slice().to_vec(),
                grad_raw: grad_raw.clone(),
                grad_trunc: g_bar[..m].to_vec(),
            });
        }
        p = next;
    }

    let t = params.rounds as f64;
    let allocation = Allocation {
        x: counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / t).collect())
            .collect(),
    };
    let average_prices: Vec<f64> = price_sums.iter().map(|s| s.value() / t).collect();
    let p_hat = DualPriceVector::unchecked(average_prices.clone(), params.p_max);
    let gap_proxy = dual_sum.value() / t - lagrangian(instance, &allocation, &p_hat)?;

    Ok(RunState {
        allocation,
        clamp_events,
        best_response_calls,
        dual_min,
        gap_proxy,
        average_prices,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AgentData;

    fn uniform_instance(n: usize, m: usize, b: f64) -> PackingInstance {
        let agents = (0..n)
            .map(|i| {
                let v = 0.3 + 0.5 * ((i * 7 % 11) as f64 / 11.0);
                let row: Vec<f64> = (0..m)
                    .map(|j| ((i + 3 * j) % 5) as f64 / 5.0 + 0.1)
                    .collect();
                AgentData::new(vec![v], vec![row])
            })
            .collect();
        PackingInstance::new(m, b, agents)
    }

    #[test]
    fn round_count_and_price_range() {
        let inst = uniform_instance(100, 4, 50.0);
        let spec = PrivacySpec::new(0.5, 1e-6).unwrap();
        let mut cfg = DmwConfig::private(spec, 0.5);
        cfg.force = true;
        let p = derive_params(&inst, &cfg).unwrap();
        assert_eq!(p.rounds, 625);
        assert_eq!(p.p_max, 8.0);
        assert!(!p.rounds_overridden);
    }

    #[test]
    fn override_recomputes_step_and_budget() {
        let inst = uniform_instance(100, 4, 50.0);
        let spec = PrivacySpec::new(0.5, 1e-6).unwrap();
        let mut cfg = DmwConfig::private(spec, 0.5).with_rounds(100);
        cfg.force = true;
        let p = derive_params(&inst, &cfg).unwrap();
        assert_eq!(p.rounds, 100);
        assert_eq!(p.eta, 5f64.ln() / (0.5 * 50.0 * 100.0));
        assert_eq!(p.eps_step, per_step_epsilon_dmw(&spec, 100, 4).unwrap());
        assert_eq!(p.grad_max, 100.0 + 100f64.ln() / p.eps_step);
        assert!(p.warnings.iter().any(|w| w.contains("overridden")));
    }

    #[test]
    fn tiny_supply_trips_the_step_size_guard() {
        let inst = uniform_instance(100, 4, 0.5);
        let spec = PrivacySpec::new(0.5, 1e-6).unwrap();
        let err = derive_params(&inst, &DmwConfig::private(spec, 0.5).with_rounds(10)).unwrap_err();
        assert!(matches!(err, Error::ParamGuard(_)));
        assert!(err.to_string().contains("eta * grad_max < 1"));
    }

    #[test]
    fn rejects_pure_dp_and_bad_alpha() {
        let inst = uniform_instance(10, 2, 5.0);
        let pure = PrivacySpec::new(1.0, 0.0).unwrap();
        assert!(derive_params(&inst, &DmwConfig::private(pure, 0.5)).is_err());
        let spec = PrivacySpec::new(1.0, 1e-3).unwrap();
        assert!(derive_params(&inst, &DmwConfig::private(spec, 1.0)).is_err());
        assert!(derive_params(&inst, &DmwConfig::private(spec, 0.0)).is_err());
    }

    #[test]
    fn truncation_clamps() {
        assert_eq!(truncate_gradient(12.0, 10.0), 10.0);
        assert_eq!(truncate_gradient(-12.0, 10.0), -10.0);
        assert_eq!(truncate_gradient(3.0, 10.0), 3.0);
    }

    #[test]
    fn zero_gradient_leaves_prices_unchanged() {
        let p = DualPriceVector::new(vec![1.0, 2.0, 3.0], 6.0).unwrap();
        let (q, phi) = mwu_step(&p, &[0.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(phi, 1.0);
        assert_eq!(q.as_slice(), p.as_slice());
    }

    #[test]
    fn one_resource_step_by_hand() {
        let p_max = 3.0;
        let (eta, g) = (0.05, 4.0);
        let p = DualPriceVector::uniform(1, p_max);
        let (q, _) = mwu_step(&p, &[g, 0.0], eta).unwrap();
        let expected = p_max * (1.0 - eta * g) / (2.0 - eta * g);
        assert!((q.as_slice()[0] - expected).abs() < 1e-14);
        assert!((q.l1_norm() - p_max).abs() <= 1e-9 * p_max);
    }

    #[test]
    fn positivity_violation_is_an_error() {
        let p = DualPriceVector::uniform(2, 1.0);
        let err = mwu_step(&p, &[20.0, 0.0, 0.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::Positivity { coordinate: 0, .. }));
    }

    #[test]
    fn single_round_is_best_response_to_uniform_prices() {
        // heavy enough consumption that the single update stays positive
        let agent = AgentData::new(vec![0.9, 0.5], vec![vec![0.3, 0.3], vec![0.1, 0.2]]);
        let inst = PackingInstance::new(2, 6.0, vec![agent; 6]);
        let mut cfg = DmwConfig::noiseless(0.9, 1);
        cfg.force = true;
        let out = run_pri_dmw(&inst, &cfg, 0).unwrap();
        let p = DualPriceVector::uniform(2, 4.0 * 6.0 / 6.0);
        let expected = crate::dual_core::best_response_allocation(&inst, &p).unwrap();
        assert_eq!(out.allocation, expected);
    }

    #[test]
    fn trivial_path_when_supply_exceeds_agents() {
        let inst = uniform_instance(3, 2, 5.0);
        let spec = PrivacySpec::new(1.0, 1e-3).unwrap();
        let out = run_pri_dmw(&inst, &DmwConfig::private(spec, 0.3), 1).unwrap();
        assert_eq!(out.report.method, Method::Trivial);
        assert!(out.report.feasible);
    }

    #[test]
    fn trace_csv_header() {
        let inst = uniform_instance(6, 2, 2.0);
        let out = run_pri_dmw(&inst, &DmwConfig::noiseless(0.3, 20).with_trace(), 0).unwrap();
        let trace = out.trace.unwrap();
        assert_eq!(trace.rounds.len(), 20);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "round,phi,price_0,price_1,price_2,grad_raw_0,grad_raw_1,grad_trunc_0,grad_trunc_1"
        );
        assert_eq!(text.lines().count(), 21);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, false).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("round,phi,price_0,price_1,price_2\n"));
    }

    #[test]
    fn wrapper_judges_against_original_supply() {
        let inst = uniform_instance(20, 2, 10.0);
        let cfg = DmwConfig::noiseless(0.5, 200);
        let out = run_pri_dmw_exact_feasible(&inst, &cfg, 0).unwrap();
        assert_eq!(out.report.solver_supply, 5.0);
        assert_eq!(out.report.judged_supply, 10.0);
        let plain = run_pri_dmw(&inst.with_supply(5.0), &cfg, 0).unwrap();
        assert_eq!(plain.allocation, out.allocation);
    }

    #[test]
    fn zero_margin_wrapper_is_a_plain_run() {
        let inst = uniform_instance(20, 2, 10.0);
        let cfg = DmwConfig::noiseless(0.5, 200);
        let a = run_pri_dmw_exact_feasible_with_margin(&inst, &cfg, 3, 0.0).unwrap();
        let b = run_pri_dmw(&inst, &cfg, 3).unwrap();
        assert_eq!(a.allocation, b.allocation);
        assert_eq!(a.report.feasible, b.report.feasible);
        assert_eq!(a.report.max_violation, b.report.max_violation);
    }
}
