//! Online dual multiplicative weights (the single-pass solver).
//!
//! Agents arrive in uniformly random order. Agent `λ(t)` receives its best
//! response to the posted prices `p^(t)` and pays `⟨p^(t), y_t⟩` for its
//! demand `y_t`. The noisy demand `z_t = y_t + Lap(σ)^m` then moves prices:
//!
//! ```text
//! p_j ∝ p_j (1 + η clamp(z_tj − b/n, ±∇_max))     j ∈ [m]
//! ```
//!
//! renormalized to `‖p‖₁ = p_max`, with
//! `σ = m/ε` (pure) or `sqrt(8 m ln(1/δ))/ε`, `η = 1/(√n σ)`,
//! `p_max = α n / σ` and `∇_max = 1 + σ ln n`.
//!
//! By default the dummy coordinate keeps its current weight (multiplier 1)
//! and changes only through normalization; [`DummyRule::Reset`] instead sets
//! its pre-normalization weight to the constant 1.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dual_core::{best_response, DualPriceVector};
use crate::error::{Error, Result};
use crate::model::{evaluate_allocation, AgentData, Allocation, PackingInstance};
use crate::privacy::{sigma_domw, NoiseStream, PrivacySpec, PERMUTATION_STREAM};
use crate::reference::trivial_allocate;
use crate::report::{Method, SolverReport};
use crate::solver_dmw::normalize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomwNoise {
    /// `δ = 0` gives the pure-DP scale `m/ε`.
    Private(PrivacySpec),
    /// Zero noise. `nominal_sigma` only feeds the step size, price range and
    /// width formulas.
    Oracle { nominal_sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DummyRule {
    #[default]
    Carry,
    Reset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomwConfig {
    pub alpha: f64,
    pub noise: DomwNoise,
    pub dummy: DummyRule,
    pub force: bool,
}

impl DomwConfig {
    pub fn private(spec: PrivacySpec, alpha: f64) -> Self {
        Self {
            alpha,
            noise: DomwNoise::Private(spec),
            dummy: DummyRule::Carry,
            force: false,
        }
    }

    pub fn oracle(nominal_sigma: f64, alpha: f64) -> Self {
        Self {
            alpha,
            noise: DomwNoise::Oracle { nominal_sigma },
            dummy: DummyRule::Carry,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomwParams {
    pub sigma: f64,
    /// Laplace scale actually drawn from; 0 in oracle mode.
    pub noise_scale: f64,
    pub eta: f64,
    pub p_max: f64,
    pub grad_max: f64,
    pub alpha: f64,
    pub n: usize,
    pub m: usize,
    pub supply: f64,
    /// `√n σ ln(n) / α`: the supply requirement with one `ln n` factor.
    pub supply_requirement: f64,
    pub warnings: Vec<String>,
}

impl DomwParams {
    pub fn eta_grad_max(&self) -> f64 {
        self.eta * self.grad_max
    }

    fn echo(&self, report: &mut SolverReport) {
        let p = &mut report.params;
        p.insert("sigma".into(), self.sigma);
        p.insert("noise_scale".into(), self.noise_scale);
        p.insert("eta".into(), self.eta);
        p.insert("p_max".into(), self.p_max);
        p.insert("grad_max".into(), self.grad_max);
        p.insert("eta_grad_max".into(), self.eta_grad_max());
        p.insert("alpha".into(), self.alpha);
        p.insert("supply".into(), self.supply);
        p.insert("supply_requirement".into(), self.supply_requirement);
        report.warnings.extend(self.warnings.iter().cloned());
    }
}

pub fn derive_params_domw(
    n: usize,
    m: usize,
    supply: f64,
    config: &DomwConfig,
) -> Result<DomwParams> {
    let alpha = config.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("n and m must be >= 1".into()));
    }
    if !(supply >= 0.0 && supply.is_finite()) {
        return Err(Error::InvalidParameter(format!("bad supply {supply}")));
    }
    let (sigma, noise_scale) = match config.noise {
        DomwNoise::Private(spec) => {
            let s = sigma_domw(&spec, m);
            (s, s)
        }
        DomwNoise::Oracle { nominal_sigma } => {
            if !(nominal_sigma > 0.0 && nominal_sigma.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "nominal sigma must be > 0, got {nominal_sigma}"
                )));
            }
            (nominal_sigma, 0.0)
        }
    };
    let nf = n as f64;
    let eta = 1.0 / (nf.sqrt() * sigma);
    let p_max = alpha * nf / sigma;
    let grad_max = 1.0 + sigma * nf.ln();
    let supply_requirement = nf.sqrt() * sigma * nf.ln() / alpha;
    let mut warnings = Vec::new();
    if supply < supply_requirement {
        warnings.push(format!(
            "supply {supply} is below sqrt(n) sigma ln(n) / alpha = {supply_requirement:.3}"
        ));
    }
    let params = DomwParams {
        sigma,
        noise_scale,
        eta,
        p_max,
        grad_max,
        alpha,
        n,
        m,
        supply,
        supply_requirement,
        warnings,
    };
    if params.eta_grad_max() >= 1.0 && !config.force {
        return Err(Error::ParamGuard(format!(
            "step-size condition eta * grad_max < 1 fails: {} * {} = {}",
            params.eta,
            params.grad_max,
            params.eta_grad_max()
        )));
    }
    Ok(params)
}

/// `⟨p_{1..m}, y⟩`.
pub fn compute_payment(p: &DualPriceVector, demand: &[f64]) -> Result<f64> {
    if demand.len() != p.m() {
        return Err(Error::Dimension {
            context: "payment demand vector",
            expected: p.m(),
            got: demand.len(),
        });
    }
    Ok(crate::numeric::sum(
        p.real().iter().zip(demand).map(|(a, b)| a * b),
    ))
}

/// What happened in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// 1-based round number.
    pub round: usize,
    /// Instance index of the agent in batch mode; arrival index online.
    pub agent: usize,
    pub chosen: Option<usize>,
    pub utility: f64,
    pub demand: Vec<f64>,
    pub noisy_demand: Vec<f64>,
    pub payment: f64,
    /// The posted prices `p^(t)` the agent responded to (`m + 1` entries).
    pub prices: Vec<f64>,
}

/// Incremental solver state for agents arriving one at a time.
#[derive(Debug, Clone)]
pub struct OnlineDomw {
    params: DomwParams,
    dummy: DummyRule,
    prices: DualPriceVector,
    noise: NoiseStream,
    round: usize,
    best_response_calls: u64,
    clamp_events: u64,
}

/// Totals after the last arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSummary {
    pub rounds: usize,
    pub best_response_calls: u64,
    pub clamp_events: u64,
    pub final_prices: Vec<f64>,
}

impl OnlineDomw {
    /// `n` is the declared number of arrivals.
    pub fn new(n: usize, m: usize, supply: f64, config: &DomwConfig, seed: u64) -> Result<Self> {
        let params = derive_params_domw(n, m, supply, config)?;
        Ok(Self {
            prices: DualPriceVector::uniform(m, params.p_max),
            noise: NoiseStream::new(params.noise_scale, seed),
            dummy: config.dummy,
            params,
            round: 0,
            best_response_calls: 0,
            clamp_events: 0,
        })
    }

    pub fn params(&self) -> &DomwParams {
        &self.params
    }

    pub fn prices(&self) -> &DualPriceVector {
        &self.prices
    }

    pub fn rounds_done(&self) -> usize {
        self.round
    }

    /// Allocates to the next arrival and updates prices. The returned
    /// decision is final.
    pub fn next_decision(&mut self, agent: &AgentData) -> Result<RoundOutcome> {
        self.next_decision_as(agent, self.round)
    }

    fn next_decision_as(&mut self, agent: &AgentData, label: usize) -> Result<RoundOutcome> {
        let p = &self.params;
        if self.round >= p.n {
            return Err(Error::Stream(format!(
                "received more than the declared {} agents",
                p.n
            )));
        }
        let m = p.m;
        let response = best_response(agent, &self.prices)?;
        self.best_response_calls += 1;
        let demand = match response.chosen {
            Some(k) => agent.demands[k].clone(),
            None => vec![0.0; m],
        };
        let payment = compute_payment(&self.prices, &demand)?;

        let mut noisy_demand = demand.clone();
        for z in noisy_demand.iter_mut() {
            *z += self.noise.draw();
        }
        let share = p.supply / p.n as f64;
        let mut weights = Vec::with_capacity(m + 1);
        for (j, (&pj, &z)) in self.prices.real().iter().zip(&noisy_demand).enumerate() {
            let raw = z - share;
            let step = raw.clamp(-p.grad_max, p.grad_max);
            if step != raw {
                self.clamp_events += 1;
            }
            let factor = 1.0 + p.eta * step;
            if !(factor > 0.0) {
                return Err(Error::Positivity {
                    round: self.round + 1,
                    coordinate: j,
                    multiplier: factor,
                });
            }
            weights.push(pj * factor);
        }
        weights.push(match self.dummy {
            DummyRule::Carry => self.prices.dummy(),
            DummyRule::Reset => 1.0,
        });

        let posted = self.prices.as_slice().to_vec();
        let (next, _) = normalize(weights, p.p_max)?;
        self.prices = next;
        self.round += 1;
        Ok(RoundOutcome {
            round: self.round,
            agent: label,
            chosen: response.chosen,
            utility: response.utility,
            demand,
            noisy_demand,
            payment,
            prices: posted,
        })
    }

    /// Ends the stream; fails if fewer agents than declared arrived.
    pub fn finish(self) -> Result<OnlineSummary> {
        if self.round != self.params.n {
            return Err(Error::Stream(format!(
                "stream ended after {} of {} declared agents",
                self.round, self.params.n
            )));
        }
        Ok(OnlineSummary {
            rounds: self.round,
            best_response_calls: self.best_response_calls,
            clamp_events: self.clamp_events,
            final_prices: self.prices.into_vec(),
        })
    }
}

/// Uniformly random arrival order drawn from the permutation substream.
pub fn sample_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(PERMUTATION_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone)]
pub struct DomwOutcome {
    pub allocation: Allocation,
    /// Payment per agent (by instance index); `None` when nothing was allocated.
    pub payments: Vec<Option<f64>>,
    pub permutation: Vec<usize>,
    pub rounds: Vec<RoundOutcome>,
    pub report: SolverReport,
}

pub fn run_pri_domw(
    instance: &PackingInstance,
    config: &DomwConfig,
    seed: u64,
) -> Result<DomwOutcome> {
    run_pri_domw_with_order(instance, config, seed, None)
}

/// Batch run with an optional fixed arrival order in place of the sampled one.
pub fn run_pri_domw_with_order(
    instance: &PackingInstance,
    config: &DomwConfig,
    seed: u64,
    order: Option<Vec<usize>>,
) -> Result<DomwOutcome> {
    let start = Instant::now();
    instance.validate_for_solver()?;
    let n = instance.n;
    let name = match config.noise {
        DomwNoise::Private(_) => "domw",
        DomwNoise::Oracle { .. } => "domw-oracle",
    };

    if (n as f64) < instance.supply {
        let allocation = trivial_allocate(instance)?;
        let metrics = evaluate_allocation(instance, &allocation)?;
        let mut report = SolverReport::new(name, Method::Trivial, &metrics, instance.supply, seed);
        report.warnings.push(format!(
            "n = {n} < b = {}: every agent receives its highest-value bundle",
            instance.supply
        ));
        report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok(DomwOutcome {
            allocation,
            payments: vec![None; n],
            permutation: (0..n).collect(),
            rounds: Vec::new(),
            report,
        });
    }

    let permutation = match order {
        Some(o) => {
            let mut check = o.clone();
            check.sort_unstable();
            if check != (0..n).collect::<Vec<_>>() {
                return Err(Error::InvalidParameter(
                    "arrival order is not a permutation of the agents".into(),
                ));
            }
            o
        }
        None => sample_permutation(n, seed),
    };

    let mut solver = OnlineDomw::new(n, instance.m, instance.supply, config, seed)?;
    let mut rounds = Vec::with_capacity(n);
    let mut choices = vec![None; n];
    let mut payments = vec![None; n];
    let mut total_payment = 0.0;
    for &i in &permutation {
        let outcome = solver.next_decision_as(&instance.agents[i], i)?;
        if outcome.chosen.is_some() {
            choices[i] = outcome.chosen;
            payments[i] = Some(outcome.payment);
            total_payment += outcome.payment;
        }
        rounds.push(outcome);
    }
    let params = solver.params().clone();
    let summary = solver.finish()?;

    let allocation = Allocation::from_choices(instance, &choices);
    let metrics = evaluate_allocation(instance, &allocation)?;
    let mut report = SolverReport::new(name, Method::Solver, &metrics, instance.supply, seed);
    report.rounds = summary.rounds;
    report.clamp_events = summary.clamp_events;
    report.best_response_calls = summary.best_response_calls;
    params.echo(&mut report);
    if let DomwNoise::Private(spec) = config.noise {
        report.params.insert("epsilon".into(), spec.epsilon);
        report.params.insert("delta".into(), spec.delta);
    }
    report.params.insert("total_payment".into(), total_payment);
    report.params.insert(
        "dummy_reset".into(),
        f64::from(u8::from(config.dummy == DummyRule::Reset)),
    );
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(DomwOutcome {
        allocation,
        payments,
        permutation,
        rounds,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_mode_parameters() {
        let spec = PrivacySpec::new(0.5, 0.0).unwrap();
        let p = derive_params_domw(100, 4, 50.0, &DomwConfig::private(spec, 0.4)).unwrap();
        assert_eq!(p.sigma, 8.0);
        assert_eq!(p.eta, 1.0 / 80.0);
        assert_eq!(p.p_max, 0.4 * 100.0 / 8.0);
        assert_eq!(p.grad_max, 1.0 + 8.0 * 100f64.ln());
    }

    #[test]
    fn approximate_mode_uses_log_delta_branch() {
        let spec = PrivacySpec::new(0.5, 1e-5).unwrap();
        let p = derive_params_domw(100, 4, 50.0, &DomwConfig::private(spec, 0.4)).unwrap();
        let expected = (8.0 * 4.0 * (1e5_f64).ln()).sqrt() / 0.5;
        assert!((p.sigma - expected).abs() < 1e-12);
        assert!((p.sigma - 38.4).abs() < 0.1);
    }

    #[test]
    fn guard_rejects_large_steps() {
        let cfg = DomwConfig::oracle(0.1, 0.5);
        assert!(matches!(
            derive_params_domw(4, 1, 1.0, &cfg),
            Err(Error::ParamGuard(_))
        ));
    }

    #[test]
    fn payment_is_dot_product() {
        let p = DualPriceVector::new(vec![0.5, 0.25, 0.25], 1.0).unwrap();
        assert_eq!(compute_payment(&p, &[0.0, 0.0]).unwrap(), 0.0);
        assert!((compute_payment(&p, &[1.0, 0.4]).unwrap() - 0.6).abs() < 1e-15);
        assert!(compute_payment(&p, &[1.0]).is_err());
    }

    #[test]
    fn stream_length_is_enforced() {
        let cfg = DomwConfig::oracle(4.0, 0.5);
        let agent = AgentData::new(vec![0.5], vec![vec![0.5]]);
        let mut s = OnlineDomw::new(2, 1, 1.0, &cfg, 0).unwrap();
        s.next_decision(&agent).unwrap();
        assert!(matches!(s.clone().finish(), Err(Error::Stream(_))));
        s.next_decision(&agent).unwrap();
        assert!(matches!(s.next_decision(&agent), Err(Error::Stream(_))));
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = sample_permutation(50, 11);
        assert_eq!(p, sample_permutation(50, 11));
        assert_ne!(p, sample_permutation(50, 12));
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn reset_rule_differs_from_carry() {
        let agents: Vec<_> = (0..6)
            .map(|i| AgentData::new(vec![0.5 + 0.05 * i as f64], vec![vec![0.5]]))
            .collect();
        let inst = PackingInstance::new(1, 2.0, agents);
        let carry = run_pri_domw(&inst, &DomwConfig::oracle(4.0, 0.5), 1).unwrap();
        let mut cfg = DomwConfig::oracle(4.0, 0.5);
        cfg.dummy = DummyRule::Reset;
        let reset = run_pri_domw(&inst, &cfg, 1).unwrap();
        assert_ne!(carry.rounds[1].prices, reset.rounds[1].prices);
        for r in &reset.rounds {
            let norm: f64 = r.prices.iter().sum();
            assert!((norm - reset.report.param("p_max").unwrap()).abs() < 1e-9 * norm);
        }
    }
}
