//! Run reports shared by the solvers and the experiment harness.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::AllocationMetrics;

/// How an allocation was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Solver,
    /// Everyone gets their best bundle because `n ≤ b`.
    Trivial,
    Brute,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub solver: String,
    pub method: Method,
    pub objective: f64,
    pub opt_reference: Option<f64>,
    pub gap: Option<f64>,
    pub consumption: Vec<f64>,
    pub max_violation: f64,
    pub feasible: bool,
    /// Supply the solver ran with; differs from `judged_supply` in the
    /// exact-feasibility wrapper.
    pub solver_supply: f64,
    pub judged_supply: f64,
    pub rounds: usize,
    pub clamp_events: u64,
    pub best_response_calls: u64,
    pub wall_time_ms: f64,
    pub seed: u64,
    /// Every derived parameter, keyed by name.
    pub params: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl SolverReport {
    pub fn new(
        solver: &str,
        method: Method,
        metrics: &AllocationMetrics,
        supply: f64,
        seed: u64,
    ) -> Self {
        Self {
            solver: solver.to_string(),
            method,
            objective: metrics.objective,
            opt_reference: None,
            gap: None,
            consumption: metrics.consumption.clone(),
            max_violation: metrics.max_violation,
            feasible: metrics.feasible,
            solver_supply: supply,
            judged_supply: supply,
            rounds: 0,
            clamp_events: 0,
            best_response_calls: 0,
            wall_time_ms: 0.0,
            seed,
            params: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// Records a reference optimum and the resulting gap.
    pub fn set_reference(&mut self, opt: f64) {
        self.opt_reference = Some(opt);
        self.gap = Some(opt - self.objective);
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }
}
