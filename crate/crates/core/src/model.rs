//! Packing instances, allocations and the JSON instance format.
//!
//! An instance has `n` agents and `m` resources with a common supply `b`.
//! Agent `i` holds a menu of `ℓ_i` bundles; bundle `k` has value
//! `values[k] ∈ [0,1]` and demand row `demands[k]` of `m` entries in `[0,1]`.
//! The LP is
//!
//! ```text
//! maximize   Σ_i Σ_k π_ik x_ik
//! subject to Σ_i Σ_k a_ijk x_ik ≤ b   for every resource j
//!            x_i ∈ X_i = { x ∈ [0,1]^ℓ_i : Σ_k x_ik ≤ 1 }
//! ```

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Consumption may exceed supply by this much before a constraint counts as
/// violated.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentData {
    pub values: Vec<f64>,
    /// One row of `m` demands per bundle.
    pub demands: Vec<Vec<f64>>,
}

impl AgentData {
    pub fn new(values: Vec<f64>, demands: Vec<Vec<f64>>) -> Self {
        Self { values, demands }
    }

    /// Number of bundles on the menu.
    pub fn bundles(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingInstance {
    pub n: usize,
    pub m: usize,
    pub supply: f64,
    /// Reserved per-resource supply. The solvers only accept it when every
    /// entry equals `supply`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply_vector: Option<Vec<f64>>,
    pub agents: Vec<AgentData>,
}

impl PackingInstance {
    /// Builds an instance with `n = agents.len()`. No validation is done.
    pub fn new(m: usize, supply: f64, agents: Vec<AgentData>) -> Self {
        Self {
            n: agents.len(),
            m,
            supply,
            supply_vector: None,
            agents,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let violations = validate_instance(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(violations))
        }
    }

    /// Validates and checks that the supply is uniform, as the solvers require.
    pub fn validate_for_solver(&self) -> Result<()> {
        self.validate()?;
        if let Some(v) = &self.supply_vector {
            if v.iter().any(|&s| s != self.supply) {
                return Err(Error::NonUniformSupply);
            }
        }
        Ok(())
    }

    /// Copy of the instance with a different uniform supply.
    pub fn with_supply(&self, supply: f64) -> Self {
        let mut out = self.clone();
        out.supply = supply;
        if let Some(v) = &mut out.supply_vector {
            v.iter_mut().for_each(|s| *s = supply);
        }
        out
    }

    /// Product of `ℓ_i + 1` over agents: the number of integral allocations.
    pub fn integral_space_size(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| (a.bundles() + 1) as f64)
            .product()
    }
}

/// One problem found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoAgents,
    NoResources,
    AgentCountMismatch {
        declared: usize,
        actual: usize,
    },
    InvalidSupply(f64),
    SupplyVectorLength {
        expected: usize,
        got: usize,
    },
    EmptyMenu {
        agent: usize,
    },
    ValueOutOfRange {
        agent: usize,
        bundle: usize,
        value: f64,
    },
    DemandRowCount {
        agent: usize,
        values: usize,
        rows: usize,
    },
    RowLengthMismatch {
        agent: usize,
        bundle: usize,
        expected: usize,
        got: usize,
    },
    DemandOutOfRange {
        agent: usize,
        bundle: usize,
        resource: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoAgents => write!(f, "instance has no agents (n = 0)"),
            Violation::NoResources => write!(f, "instance has no resources (m = 0)"),
            Violation::AgentCountMismatch { declared, actual } => {
                write!(f, "n = {declared} but {actual} agents are listed")
            }
            Violation::InvalidSupply(b) => write!(f, "supply {b} is not a finite number >= 0"),
            Violation::SupplyVectorLength { expected, got } => {
                write!(f, "supply vector has {got} entries, expected {expected}")
            }
            Violation::EmptyMenu { agent } => write!(f, "agent {agent} has no bundles"),
            Violation::ValueOutOfRange { agent, bundle, value } => write!(
                f,
                "value out of [0,1]: agent {agent} bundle {bundle} has value {value}"
            ),
            Violation::DemandRowCount { agent, values, rows } => write!(
                f,
                "agent {agent} has {values} values but {rows} demand rows"
            ),
            Violation::RowLengthMismatch {
                agent,
                bundle,
                expected,
                got,
            } => write!(
                f,
                "row length mismatch: agent {agent} bundle {bundle} has {got} demands, expected {expected}"
            ),
            Violation::DemandOutOfRange {
                agent,
                bundle,
                resource,
                value,
            } => write!(
                f,
                "demand out of [0,1]: agent {agent} bundle {bundle} resource {resource} is {value}"
            ),
        }
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Returns every range and shape violation. An empty list means the instance
/// is valid.
pub fn validate_instance(instance: &PackingInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    if instance.n == 0 {
        out.push(Violation::NoAgents);
    }
    if instance.m == 0 {
        out.push(Violation::NoResources);
    }
    if instance.n != instance.agents.len() {
        out.push(Violation::AgentCountMismatch {
            declared: instance.n,
            actual: instance.agents.len(),
        });
    }
    if !(instance.supply.is_finite() && instance.supply >= 0.0) {
        out.push(Violation::InvalidSupply(instance.supply));
    }
    if let Some(v) = &instance.supply_vector {
        if v.len() != instance.m {
            out.push(Violation::SupplyVectorLength {
                expected: instance.m,
                got: v.len(),
            });
        }
        for &s in v {
            if !(s.is_finite() && s >= 0.0) {
                out.push(Violation::InvalidSupply(s));
            }
        }
    }
    for (i, agent) in instance.agents.iter().enumerate() {
        if agent.values.is_empty() {
            out.push(Violation::EmptyMenu { agent: i });
        }
        for (k, &v) in agent.values.iter().enumerate() {
            if !in_unit(v) {
                out.push(Violation::ValueOutOfRange {
                    agent: i,
                    bundle: k,
                    value: v,
                });
            }
        }
        if agent.demands.len() != agent.values.len() {
            out.push(Violation::DemandRowCount {
                agent: i,
                values: agent.values.len(),
                rows: agent.demands.len(),
            });
        }
        for (k, row) in agent.demands.iter().enumerate() {
            if row.len() != instance.m {
                out.push(Violation::RowLengthMismatch {
                    agent: i,
                    bundle: k,
                    expected: instance.m,
                    got: row.len(),
                });
            }
            for (j, &a) in row.iter().enumerate() {
                if !in_unit(a) {
                    out.push(Violation::DemandOutOfRange {
                        agent: i,
                        bundle: k,
                        resource: j,
                        value: a,
                    });
                }
            }
        }
    }
    out
}

/// Fractional allocation `x[i][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub x: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn zeros(instance: &PackingInstance) -> Self {
        Self {
            x: instance
                .agents
                .iter()
                .map(|a| vec![0.0; a.bundles()])
                .collect(),
        }
    }

    /// Integral allocation from one optional bundle choice per agent.
    pub fn from_choices(instance: &PackingInstance, choices: &[Option<usize>]) -> Self {
        let mut alloc = Self::zeros(instance);
        for (row, choice) in alloc.x.iter_mut().zip(choices) {
            if let Some(k) = *choice {
                row[k] = 1.0;
            }
        }
        alloc
    }

    pub fn check_shape(&self, instance: &PackingInstance) -> Result<()> {
        if self.x.len() != instance.agents.len() {
            return Err(Error::Dimension {
                context: "allocation agents",
                expected: instance.agents.len(),
                got: self.x.len(),
            });
        }
        for (row, agent) in self.x.iter().zip(&instance.agents) {
            if row.len() != agent.bundles() {
                return Err(Error::Dimension {
                    context: "allocation bundles",
                    expected: agent.bundles(),
                    got: row.len(),
                });
            }
        }
        Ok(())
    }

    /// True if every `x_i` lies in `X_i` up to `tol`.
    pub fn is_in_box(&self, tol: f64) -> bool {
        self.x.iter().all(|row| {
            row.iter().all(|&v| v >= -tol && v <= 1.0 + tol) && row.iter().sum::<f64>() <= 1.0 + tol
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationMetrics {
    pub objective: f64,
    pub consumption: Vec<f64>,
    pub max_violation: f64,
    pub feasible: bool,
}

/// Consumption of every resource under `alloc`.
pub fn consumption(instance: &PackingInstance, alloc: &Allocation) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::new(); instance.m];
    for (agent, row) in instance.agents.iter().zip(&alloc.x) {
        for (demand, &x) in agent.demands.iter().zip(row) {
            if x == 0.0 {
                continue;
            }
            for (slot, &a) in acc.iter_mut().zip(demand) {
                slot.add(a * x);
            }
        }
    }
    acc.iter().map(|s| s.value()).collect()
}

pub fn evaluate_allocation(
    instance: &PackingInstance,
    alloc: &Allocation,
) -> Result<AllocationMetrics> {
    alloc.check_shape(instance)?;
    let mut objective = CompensatedSum::new();
    for (agent, row) in instance.agents.iter().zip(&alloc.x) {
        for (&v, &x) in agent.values.iter().zip(row) {
            objective.add(v * x);
        }
    }
    let consumption = consumption(instance, alloc);
    Ok(metrics_from(
        objective.value(),
        consumption,
        instance.supply,
    ))
}

pub(crate) fn metrics_from(
    objective: f64,
    consumption: Vec<f64>,
    supply: f64,
) -> AllocationMetrics {
    let max_violation = consumption
        .iter()
        .map(|&c| c - supply)
        .fold(0.0_f64, f64::max);
    AllocationMetrics {
        objective,
        feasible: max_violation <= FEASIBILITY_TOL,
        consumption,
        max_violation,
    }
}

pub fn from_json_str(text: &str, path: &Path) -> Result<PackingInstance> {
    let instance: PackingInstance = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    instance.validate()?;
    Ok(instance)
}

/// Reads and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<PackingInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json_str(&text, path)
}

pub fn save_instance(instance: &PackingInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(instance).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, demand: f64, supply: f64) -> PackingInstance {
        PackingInstance::new(
            1,
            supply,
            vec![AgentData::new(vec![value], vec![vec![demand]])],
        )
    }

    #[test]
    fn value_out_of_range_is_reported() {
        let inst = single(1.2, 0.5, 1.0);
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("value out of [0,1]"));
    }

    #[test]
    fn valid_single_agent_instance() {
        assert!(validate_instance(&single(0.7, 0.5, 1.0)).is_empty());
    }

    #[test]
    fn row_length_mismatch_is_reported() {
        let inst = PackingInstance::new(
            2,
            1.0,
            vec![AgentData::new(vec![0.5], vec![vec![0.1, 0.2, 0.3]])],
        );
        let v = validate_instance(&inst);
        assert!(v
            .iter()
            .any(|x| x.to_string().contains("row length mismatch")));
    }

    #[test]
    fn collects_every_violation() {
        let mut inst = single(-0.1, 2.0, -1.0);
        inst.agents.push(AgentData::new(vec![], vec![]));
        let v = validate_instance(&inst);
        assert!(v.contains(&Violation::InvalidSupply(-1.0)));
        assert!(v.contains(&Violation::EmptyMenu { agent: 1 }));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::ValueOutOfRange { .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::DemandOutOfRange { .. })));
    }

    #[test]
    fn zero_allocation_metrics() {
        let inst = single(0.7, 0.5, 1.0);
        let m = evaluate_allocation(&inst, &Allocation::zeros(&inst)).unwrap();
        assert_eq!(m.objective, 0.0);
        assert_eq!(m.consumption, vec![0.0]);
        assert!(m.feasible);
    }

    #[test]
    fn single_agent_full_allocation() {
        let inst = single(0.7, 0.5, 1.0);
        let alloc = Allocation { x: vec![vec![1.0]] };
        let m = evaluate_allocation(&inst, &alloc).unwrap();
        assert_eq!(m.objective, 0.7);
        assert_eq!(m.consumption, vec![0.5]);
        assert_eq!(m.max_violation, 0.0);
        assert!(m.feasible);

        let tight = single(0.7, 0.5, 0.4);
        let m = evaluate_allocation(&tight, &alloc).unwrap();
        assert!((m.max_violation - 0.1).abs() < 1e-15);
        assert!(!m.feasible);
    }

    #[test]
    fn violation_within_tolerance_is_feasible() {
        let inst = single(0.7, 0.5, 0.5 - 1e-10);
        let m = evaluate_allocation(&inst, &Allocation { x: vec![vec![1.0]] }).unwrap();
        assert!(m.feasible);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let inst = single(0.7, 0.5, 1.0);
        let bad = Allocation {
            x: vec![vec![1.0, 0.0]],
        };
        assert!(matches!(
            evaluate_allocation(&inst, &bad),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn parse_error_names_missing_field() {
        let text = r#"{ "n": 1, "m": 1, "agents": [ { "values": [0.5], "demands": [[0.5]] } ] }"#;
        let err = from_json_str(text, Path::new("x.json")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("supply"), "{err}");
    }

    #[test]
    fn zero_agents_fails_validation() {
        let text = r#"{ "n": 0, "m": 1, "supply": 1.0, "agents": [] }"#;
        let err = from_json_str(text, Path::new("x.json")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn non_uniform_supply_vector_rejected_by_solvers() {
        let mut inst = single(0.7, 0.5, 1.0);
        inst.supply_vector = Some(vec![2.0]);
        assert!(inst.validate().is_ok());
        assert!(matches!(
            inst.validate_for_solver(),
            Err(Error::NonUniformSupply)
        ));
        inst.supply_vector = Some(vec![1.0]);
        assert!(inst.validate_for_solver().is_ok());
    }
}
