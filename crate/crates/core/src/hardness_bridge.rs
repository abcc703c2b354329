//! Counting-query release through a packing solver.
//!
//! A dataset of `n′ = b/2` records and `m` counting queries becomes a packing
//! instance with `m` resources of supply `b`:
//!
//! * set A: one agent per record, a single bundle of value 1 whose demand on
//!   resource `j` is `q_j(d_i)`;
//! * set B: `2b` identical agents whose menu holds every size-`m/2` subset of
//!   the resources, each with value 1/4.
//!
//! A agents earn at least `1/m` per unit of resource and B agents exactly
//! `1/(2m)`, so a near-optimal solution serves all of A and fills the rest
//! with B. The answer to query `j` is `b` minus what B consumes of resource
//! `j`, which only post-processes the B agents' allocations.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{AgentData, Allocation, PackingInstance};

/// Largest `m` for which the `C(m, m/2)` B-bundles are enumerated.
pub const MAX_REDUCTION_RESOURCES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    /// The field itself, a number in `[0, 1]`.
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub field: String,
    pub op: QueryOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

impl QuerySpec {
    pub fn new(field: &str, op: QueryOp, value: Option<Value>) -> Self {
        Self {
            name: None,
            field: field.to_string(),
            op,
            value,
        }
    }

    pub fn evaluate(&self, record: &Map<String, Value>) -> Result<f64> {
        let field = record
            .get(&self.field)
            .ok_or_else(|| Error::Reduction(format!("record has no field {:?}", self.field)))?;
        let as_num = |v: &Value, what: &str| {
            v.as_f64().ok_or_else(|| {
                Error::Reduction(format!(
                    "{what} of query on {:?} is not a number",
                    self.field
                ))
            })
        };
        let target = || {
            self.value
                .as_ref()
                .ok_or_else(|| Error::Reduction(format!("query on {:?} needs a value", self.field)))
        };
        let hit = match self.op {
            QueryOp::Value => {
                let v = as_num(field, "field")?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Reduction(format!(
                        "field {:?} = {v} is outside [0, 1]",
                        self.field
                    )));
                }
                return Ok(v);
            }
            QueryOp::Eq | QueryOp::Ne => {
                let t = target()?;
                let equal = match (field.as_f64(), t.as_f64()) {
                    (Some(a), Some(b)) => a == b,
                    _ => field == t,
                };
                equal == (self.op == QueryOp::Eq)
            }
            op => {
                let a = as_num(field, "field")?;
                let b = as_num(target()?, "threshold")?;
                match op {
                    QueryOp::Lt => a < b,
                    QueryOp::Le => a <= b,
                    QueryOp::Gt => a > b,
                    QueryOp::Ge => a >= b,
                    _ => unreachable!(),
                }
            }
        };
        Ok(if hit { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryWorkload {
    pub records: Vec<Map<String, Value>>,
    pub queries: Vec<QuerySpec>,
}

impl QueryWorkload {
    pub fn m(&self) -> usize {
        self.queries.len()
    }

    /// `q_j(d_i)` for every record `i` (rows) and query `j` (columns).
    pub fn answers(&self) -> Result<Vec<Vec<f64>>> {
        self.records
            .iter()
            .map(|r| self.queries.iter().map(|q| q.evaluate(r)).collect())
            .collect()
    }

    /// Exact counts `q_j(D′) = Σ_i q_j(d_i)`.
    pub fn counts(&self) -> Result<Vec<f64>> {
        let answers = self.answers()?;
        Ok((0..self.m())
            .map(|j| crate::numeric::sum(answers.iter().map(|row| row[j])))
            .collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("workload serializes");
        fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// `records` binary records with fields `f0..f{m-1}` and the queries
/// `f_j == 1`.
pub fn random_workload(records: usize, m: usize, seed: u64) -> QueryWorkload {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let records = (0..records)
        .map(|_| {
            (0..m)
                .map(|j| (format!("f{j}"), Value::from(u8::from(rng.gen_bool(0.5)))))
                .collect()
        })
        .collect();
    let queries = (0..m)
        .map(|j| QuerySpec::new(&format!("f{j}"), QueryOp::Eq, Some(Value::from(1))))
        .collect();
    QueryWorkload { records, queries }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionInstance {
    pub packing: PackingInstance,
    pub a_agents: Range<usize>,
    pub b_agents: Range<usize>,
    pub supply: usize,
}

fn check_shape(workload: &QueryWorkload, b: usize) -> Result<()> {
    let m = workload.m();
    if m == 0 || !m.is_multiple_of(2) {
        return Err(Error::Reduction(format!(
            "number of queries must be even and positive, got {m}"
        )));
    }
    if m > MAX_REDUCTION_RESOURCES {
        return Err(Error::Reduction(format!(
            "{m} queries exceed the enumeration limit of {MAX_REDUCTION_RESOURCES}"
        )));
    }
    if b == 0 || !b.is_multiple_of(2) {
        return Err(Error::Reduction(format!(
            "supply must be even and positive, got {b}"
        )));
    }
    if workload.records.len() != b / 2 {
        return Err(Error::Reduction(format!(
            "dataset must have b/2 = {} records, got {}",
            b / 2,
            workload.records.len()
        )));
    }
    Ok(())
}

/// All `k`-subsets of `0..m` in lexicographic order.
fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..m {
            cur.push(j);
            rec(j + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

pub fn build_reduction_instance(workload: &QueryWorkload, b: usize) -> Result<ReductionInstance> {
    check_shape(workload, b)?;
    let m = workload.m();
    let n_a = b / 2;
    let n_b = 2 * b;

    let mut agents: Vec<AgentData> = workload
        .answers()?
        .into_iter()
        .map(|row| AgentData::new(vec![1.0], vec![row]))
        .collect();

    let menu = subsets(m, m / 2);
    let b_agent = AgentData::new(
        vec![0.25; menu.len()],
        menu.iter()
            .map(|s| {
                let mut row = vec![0.0; m];
                s.iter().for_each(|&j| row[j] = 1.0);
                row
            })
            .collect(),
    );
    agents.extend(std::iter::repeat_n(b_agent, n_b));

    let packing = PackingInstance::new(m, b as f64, agents);
    packing.validate()?;
    Ok(ReductionInstance {
        packing,
        a_agents: 0..n_a,
        b_agents: n_a..n_a + n_b,
        supply: b,
    })
}

/// `n′ + (1/2m) Σ_j (b − q_j(D′)) − 1/2`.
pub fn opt_lower_bound(workload: &QueryWorkload, b: usize) -> Result<f64> {
    check_shape(workload, b)?;
    let m = workload.m() as f64;
    let slack: f64 = workload.counts()?.iter().map(|q| b as f64 - q).sum();
    Ok((b / 2) as f64 + slack / (2.0 * m) - 0.5)
}

/// `q̃_j = b − Σ_{i ∈ B} Σ_k a_ijk x_ik`.
pub fn release_queries(reduction: &ReductionInstance, alloc: &Allocation) -> Result<Vec<f64>> {
    alloc.check_shape(&reduction.packing)?;
    let m = reduction.packing.m;
    let mut used = vec![crate::numeric::CompensatedSum::new(); m];
    for i in reduction.b_agents.clone() {
        let agent = &reduction.packing.agents[i];
        for (row, &x) in agent.demands.iter().zip(&alloc.x[i]) {
            for (u, &a) in used.iter_mut().zip(row) {
                u.add(a * x);
            }
        }
    }
    Ok(used
        .iter()
        .map(|u| reduction.supply as f64 - u.value())
        .collect())
}

/// `(1/m) Σ_j |released_j − q_j(D′)|`.
pub fn evaluate_release_accuracy(workload: &QueryWorkload, released: &[f64]) -> Result<f64> {
    let counts = workload.counts()?;
    if counts.len() != released.len() {
        return Err(Error::Dimension {
            context: "released answers",
            expected: counts.len(),
            got: released.len(),
        });
    }
    let total: f64 = counts
        .iter()
        .zip(released)
        .map(|(q, r)| (r - q).abs())
        .sum();
    Ok(total / counts.len() as f64)
}
