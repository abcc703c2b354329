//! Ground-truth oracles for small instances.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{evaluate_allocation, Allocation, PackingInstance, FEASIBILITY_TOL};
use crate::report::Method;
use crate::solver_dmw::{run_pri_dmw, DmwConfig, DmwOutcome};

/// Upper limit on the number of configurations the exhaustive search visits.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub opt_value: f64,
    pub allocation: Allocation,
    pub method: Method,
    /// Size of the search space after merging identical agents.
    pub enumerated: u64,
    /// Number of integral allocations, `Π_i (ℓ_i + 1)`.
    pub integral_space: f64,
}

/// Agents with bit-identical menus, and the compositions of their count over
/// the `ℓ + 1` choices (choice 0 is the empty allocation).
struct AgentClass {
    members: Vec<usize>,
    options: Vec<Option<usize>>,
    /// Per composition: counts per option, total value, total demand.
    compositions: Vec<(Vec<usize>, f64, Vec<f64>)>,
}

fn agent_key(instance: &PackingInstance, i: usize) -> Vec<u64> {
    let a = &instance.agents[i];
    let mut key: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
    key.push(u64::MAX);
    for row in &a.demands {
        key.extend(row.iter().map(|v| v.to_bits()));
    }
    key
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    // lexicographically decreasing in the first part, so "all empty" is first
    fn rec(left: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in (0..=left).rev() {
            prefix.push(c);
            rec(left - c, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::new(), &mut out);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact integral optimum by exhaustive enumeration.
///
/// Agents with identical menus are interchangeable, so the search runs over
/// how many members of each class take each option rather than over every
/// agent separately. Within a class, members in index order are assigned
/// the empty option first, then bundles in index order. Among optimal
/// allocations the first one in enumeration order is returned. Partial
/// allocations that already exceed the supply are pruned, which is exact
/// because demands are nonnegative.
pub fn brute_force_opt(instance: &PackingInstance) -> Result<OracleResult> {
    instance.validate()?;
    let m = instance.m;
    let b = instance.supply;

    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..instance.n {
        let key = agent_key(instance, i);
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }

    let size: f64 = groups
        .iter()
        .map(|g| {
            let options = instance.agents[g[0]].bundles() + 1;
            binomial(g.len() + options - 1, options - 1)
        })
        .product();
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let classes: Vec<AgentClass> = groups
        .into_iter()
        .map(|members| {
            let agent = &instance.agents[members[0]];
            let options: Vec<Option<usize>> = std::iter::once(None)
                .chain((0..agent.bundles()).map(Some))
                .collect();
            let comps = compositions(members.len(), options.len())
                .into_iter()
                .map(|counts| {
                    let mut value = 0.0;
                    let mut demand = vec![0.0; m];
                    for (opt, &c) in options.iter().zip(&counts) {
                        if let Some(k) = opt {
                            value += c as f64 * agent.values[*k];
                            for (d, a) in demand.iter_mut().zip(&agent.demands[*k]) {
                                *d += c as f64 * a;
                            }
                        }
                    }
                    (counts, value, demand)
                })
                .collect();
            AgentClass {
                members,
                options,
                compositions: comps,
            }
        })
        .collect();

    struct Search<'a> {
        classes: &'a [AgentClass],
        supply: f64,
        best_value: f64,
        best: Vec<usize>,
        current: Vec<usize>,
    }
    impl Search<'_> {
        fn dfs(&mut self, depth: usize, value: f64, used: &mut Vec<f64>) {
            if depth == self.classes.len() {
                if value > self.best_value {
                    self.best_value = value;
                    self.best.clone_from(&self.current);
                }
                return;
            }
            for (ci, (_, v, d)) in self.classes[depth].compositions.iter().enumerate() {
                let fits = used
                    .iter()
                    .zip(d)
                    .all(|(u, x)| u + x <= self.supply + FEASIBILITY_TOL);
                if !fits {
                    continue;
                }
                used.iter_mut().zip(d).for_each(|(u, x)| *u += x);
                self.current[depth] = ci;
                self.dfs(depth + 1, value + v, used);
                used.iter_mut().zip(d).for_each(|(u, x)| *u -= x);
            }
        }
    }

    let mut search = Search {
        classes: &classes,
        supply: b,
        best_value: f64::NEG_INFINITY,
        best: vec![0; classes.len()],
        current: vec![0; classes.len()],
    };
    search.dfs(0, 0.0, &mut vec![0.0; m]);

    let mut choices = vec![None; instance.n];
    for (class, &ci) in classes.iter().zip(&search.best) {
        let counts = &class.compositions[ci].0;
        let mut members = class.members.iter();
        for (opt, &c) in class.options.iter().zip(counts) {
            for &i in members.by_ref().take(c) {
                choices[i] = *opt;
            }
        }
    }
    let allocation = Allocation::from_choices(instance, &choices);
    let opt_value = evaluate_allocation(instance, &allocation)?.objective;
    Ok(OracleResult {
        opt_value,
        allocation,
        method: Method::Brute,
        enumerated: size as u64,
        integral_space: instance.integral_space_size(),
    })
}

/// Dual multiplicative weights with zero noise; the fractional baseline.
pub fn noiseless_dual_mwu(
    instance: &PackingInstance,
    alpha: f64,
    rounds: usize,
) -> Result<DmwOutcome> {
    run_pri_dmw(instance, &DmwConfig::noiseless(alpha, rounds), 0)
}

/// Every agent gets its highest-value bundle (smallest index on ties). Only
/// valid when `n ≤ b`, where this is optimal and feasible.
pub fn trivial_allocate(instance: &PackingInstance) -> Result<Allocation> {
    instance.validate()?;
    if instance.n as f64 > instance.supply {
        return Err(Error::InvalidParameter(format!(
            "trivial allocation needs n <= b, got n = {} and b = {}",
            instance.n, instance.supply
        )));
    }
    let choices: Vec<Option<usize>> = instance
        .agents
        .iter()
        .map(|a| {
            let mut best = 0;
            for (k, &v) in a.values.iter().enumerate() {
                if v > a.values[best] {
                    best = k;
                }
            }
            Some(best)
        })
        .collect();
    Ok(Allocation::from_choices(instance, &choices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AgentData;

    #[test]
    fn single_choice() {
        let inst = PackingInstance::new(1, 1.0, vec![AgentData::new(vec![0.7], vec![vec![0.5]])]);
        let r = brute_force_opt(&inst).unwrap();
        assert_eq!(r.opt_value, 0.7);
        assert_eq!(r.allocation.x, vec![vec![1.0]]);
    }

    #[test]
    fn only_one_of_two_fits() {
        let agent = AgentData::new(vec![1.0], vec![vec![1.0]]);
        let inst = PackingInstance::new(1, 1.0, vec![agent.clone(), agent]);
        let r = brute_force_opt(&inst).unwrap();
        assert_eq!(r.opt_value, 1.0);
        // first optimum in enumeration order: the first member stays empty
        assert_eq!(r.allocation.x, vec![vec![0.0], vec![1.0]]);
    }

    #[test]
    fn zero_supply_fits_nothing() {
        let inst = PackingInstance::new(
            2,
            0.0,
            vec![
                AgentData::new(vec![0.9], vec![vec![0.1, 0.2]]),
                AgentData::new(vec![0.4, 0.6], vec![vec![0.5, 0.0], vec![0.0, 0.3]]),
            ],
        );
        assert_eq!(brute_force_opt(&inst).unwrap().opt_value, 0.0);
    }

    #[test]
    fn guard_rejects_huge_spaces() {
        let agents = (0..30)
            .map(|i| AgentData::new(vec![i as f64 / 30.0, 0.5], vec![vec![0.5], vec![0.25]]))
            .collect();
        let inst = PackingInstance::new(1, 5.0, agents);
        assert!(matches!(
            brute_force_opt(&inst),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn identical_agents_collapse() {
        let agent = AgentData::new(vec![0.25, 0.25], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let inst = PackingInstance::new(2, 3.0, vec![agent; 40]);
        let r = brute_force_opt(&inst).unwrap();
        assert_eq!(r.opt_value, 6.0 * 0.25);
        assert_eq!(r.enumerated, 861); // C(42, 2)
    }

    #[test]
    fn compositions_cover_all_multisets() {
        let c = compositions(3, 3);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], vec![3, 0, 0]);
        assert!(c.iter().all(|v| v.iter().sum::<usize>() == 3));
    }

    #[test]
    fn trivial_picks_argmax_with_smallest_index() {
        let inst = PackingInstance::new(
            1,
            3.0,
            vec![
                AgentData::new(vec![0.2, 0.9], vec![vec![1.0], vec![1.0]]),
                AgentData::new(vec![0.5], vec![vec![1.0]]),
            ],
        );
        let a = trivial_allocate(&inst).unwrap();
        assert_eq!(a.x, vec![vec![0.0, 1.0], vec![1.0]]);
        assert!(evaluate_allocation(&inst, &a).unwrap().feasible);

        let tie = PackingInstance::new(
            1,
            3.0,
            vec![AgentData::new(vec![0.5, 0.5], vec![vec![1.0], vec![0.0]])],
        );
        assert_eq!(trivial_allocate(&tie).unwrap().x, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn trivial_rejects_scarce_supply() {
        let agent = AgentData::new(vec![0.5], vec![vec![1.0]]);
        let inst = PackingInstance::new(1, 1.0, vec![agent.clone(), agent]);
        assert!(trivial_allocate(&inst).is_err());
    }
}
