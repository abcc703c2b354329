//! Lagrangian machinery shared by both solvers.
//!
//! With prices `p` on the `m` supply constraints the partial Lagrangian is
//!
//! ```text
//! L(x, p) = b Σ_j p_j + Σ_i Σ_k x_ik (π_ik − Σ_j a_ijk p_j)
//! ```
//!
//! and the dual objective `D(p) = max_{x ∈ X} L(x, p)` is attained by letting
//! every agent best-respond independently. `b − consumption(x*(p))` is a
//! subgradient of `D` at `p`.

use crate::error::{Error, Result};
use crate::model::{consumption, AgentData, Allocation, PackingInstance};
use crate::numeric::CompensatedSum;

/// Prices for the `m` real constraints followed by one dummy coordinate
/// (constraint `⟨0, x⟩ ≤ 0`), kept on the simplex `‖p‖₁ = p_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPriceVector {
    prices: Vec<f64>,
    p_max: f64,
}

impl DualPriceVector {
    /// Tolerance on `|‖p‖₁ − p_max|`, relative to `p_max`.
    pub const NORM_TOL: f64 = 1e-9;

    /// `p = p_max / (m+1) · 1`.
    pub fn uniform(m: usize, p_max: f64) -> Self {
        let each = p_max / (m + 1) as f64;
        Self {
            prices: vec![each; m + 1],
            p_max,
        }
    }

    /// Checked constructor. `prices` must include the dummy coordinate.
    pub fn new(prices: Vec<f64>, p_max: f64) -> Result<Self> {
        let out = Self { prices, p_max };
        out.check()?;
        Ok(out)
    }

    /// Wraps raw prices without the simplex check. Used for prices that are
    /// not on a simplex at all, such as zero prices in tests and oracles.
    pub fn unchecked(prices: Vec<f64>, p_max: f64) -> Self {
        Self { prices, p_max }
    }

    pub fn check(&self) -> Result<()> {
        if self.prices.len() < 2 {
            return Err(Error::InvalidParameter(
                "price vector needs at least one real and one dummy coordinate".into(),
            ));
        }
        if let Some(bad) = self.prices.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "negative or non-finite price {bad}"
            )));
        }
        let norm = self.l1_norm();
        if (norm - self.p_max).abs() > Self::NORM_TOL * self.p_max {
            return Err(Error::InvalidParameter(format!(
                "price vector has l1 norm {norm}, expected {}",
                self.p_max
            )));
        }
        Ok(())
    }

    /// All `m + 1` coordinates.
    pub fn as_slice(&self) -> &[f64] {
        &self.prices
    }

    /// The first `m` coordinates.
    pub fn real(&self) -> &[f64] {
        &self.prices[..self.prices.len() - 1]
    }

    pub fn dummy(&self) -> f64 {
        self.prices[self.prices.len() - 1]
    }

    pub fn m(&self) -> usize {
        self.prices.len() - 1
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn l1_norm(&self) -> f64 {
        crate::numeric::sum(self.prices.iter().copied())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.prices
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    pub chosen: Option<usize>,
    /// Surplus of the chosen bundle, 0 when nothing is chosen.
    pub utility: f64,
}

/// `π_k − Σ_j a_jk p_j` for one bundle.
pub fn surplus(value: f64, demand: &[f64], real_prices: &[f64]) -> f64 {
    let mut cost = CompensatedSum::new();
    for (&a, &p) in demand.iter().zip(real_prices) {
        cost.add(a * p);
    }
    value - cost.value()
}

fn check_agent_dims(agent: &AgentData, m: usize) -> Result<()> {
    if agent.demands.len() != agent.values.len() {
        return Err(Error::Dimension {
            context: "agent demand rows",
            expected: agent.values.len(),
            got: agent.demands.len(),
        });
    }
    if let Some(row) = agent.demands.iter().find(|r| r.len() != m) {
        return Err(Error::Dimension {
            context: "best_response demand row vs prices",
            expected: m,
            got: row.len(),
        });
    }
    Ok(())
}

/// Surplus-maximizing bundle among those with surplus `>= 0`; the smallest
/// index wins ties. Returns the empty choice when every surplus is negative.
pub fn best_response(agent: &AgentData, p: &DualPriceVector) -> Result<BestResponse> {
    check_agent_dims(agent, p.m())?;
    Ok(best_response_unchecked(agent, p.real()))
}

pub(crate) fn best_response_unchecked(agent: &AgentData, real_prices: &[f64]) -> BestResponse {
    let mut best = BestResponse {
        chosen: None,
        utility: 0.0,
    };
    for (k, (&v, row)) in agent.values.iter().zip(&agent.demands).enumerate() {
        let s = surplus(v, row, real_prices);
        if s < 0.0 {
            continue;
        }
        match best.chosen {
            Some(_) if s <= best.utility => {}
            _ => {
                best = BestResponse {
                    chosen: Some(k),
                    utility: s,
                }
            }
        }
    }
    best
}

fn check_prices(instance: &PackingInstance, p: &DualPriceVector) -> Result<()> {
    if p.as_slice().len() != instance.m + 1 {
        return Err(Error::Dimension {
            context: "price vector (m + 1 entries)",
            expected: instance.m + 1,
            got: p.as_slice().len(),
        });
    }
    Ok(())
}

/// Best responses of every agent, in agent order.
pub fn best_responses(
    instance: &PackingInstance,
    p: &DualPriceVector,
) -> Result<Vec<BestResponse>> {
    check_prices(instance, p)?;
    instance
        .agents
        .iter()
        .map(|a| best_response(a, p))
        .collect()
}

/// The integral allocation `x*(p)`.
pub fn best_response_allocation(
    instance: &PackingInstance,
    p: &DualPriceVector,
) -> Result<Allocation> {
    let choices: Vec<_> = best_responses(instance, p)?
        .into_iter()
        .map(|r| r.chosen)
        .collect();
    Ok(Allocation::from_choices(instance, &choices))
}

pub fn lagrangian(
    instance: &PackingInstance,
    alloc: &Allocation,
    p: &DualPriceVector,
) -> Result<f64> {
    check_prices(instance, p)?;
    alloc.check_shape(instance)?;
    let mut acc = CompensatedSum::new();
    for &pj in p.real() {
        acc.add(instance.supply * pj);
    }
    for (agent, row) in instance.agents.iter().zip(&alloc.x) {
        for ((&v, demand), &x) in agent.values.iter().zip(&agent.demands).zip(row) {
            if x != 0.0 {
                acc.add(x * surplus(v, demand, p.real()));
            }
        }
    }
    Ok(acc.value())
}

/// Lagrangian evaluated as a sum of per-agent terms
/// `L_i = Σ_k π_ik x_ik − Σ_j p_j (Σ_k a_ijk x_ik − b/n)`.
pub fn lagrangian_decomposed(
    instance: &PackingInstance,
    alloc: &Allocation,
    p: &DualPriceVector,
) -> Result<f64> {
    check_prices(instance, p)?;
    alloc.check_shape(instance)?;
    let share = instance.supply / instance.agents.len() as f64;
    let mut total = CompensatedSum::new();
    for (agent, row) in instance.agents.iter().zip(&alloc.x) {
        total.add(agent_lagrangian(agent, row, p.real(), share));
    }
    Ok(total.value())
}

pub fn agent_lagrangian(
    agent: &AgentData,
    x: &[f64],
    real_prices: &[f64],
    supply_share: f64,
) -> f64 {
    let mut acc = CompensatedSum::new();
    for (&v, &xk) in agent.values.iter().zip(x) {
        acc.add(v * xk);
    }
    for (j, &pj) in real_prices.iter().enumerate() {
        let mut used = CompensatedSum::new();
        for (row, &xk) in agent.demands.iter().zip(x) {
            used.add(row[j] * xk);
        }
        acc.add(-pj * (used.value() - supply_share));
    }
    acc.value()
}

/// `∇_j D(p) = b − consumption_j(x*(p))` for the `m` real constraints. The
/// dummy component is 0 and is not included.
pub fn exact_subgradient(instance: &PackingInstance, p: &DualPriceVector) -> Result<Vec<f64>> {
    let alloc = best_response_allocation(instance, p)?;
    Ok(consumption(instance, &alloc)
        .into_iter()
        .map(|c| instance.supply - c)
        .collect())
}

pub fn dual_objective(instance: &PackingInstance, p: &DualPriceVector) -> Result<f64> {
    let alloc = best_response_allocation(instance, p)?;
    lagrangian(instance, &alloc, p)
}
