use jdp_packing::dual_core::{
    agent_lagrangian, best_response, best_response_allocation, dual_objective, exact_subgradient,
    lagrangian, lagrangian_decomposed, surplus, DualPriceVector,
};
use jdp_packing::hardness_bridge::{build_reduction_instance, opt_lower_bound, random_workload};
use jdp_packing::model::{
    consumption, evaluate_allocation, from_json_str, validate_instance, AgentData, Allocation,
    PackingInstance,
};
use jdp_packing::reference::{brute_force_opt, trivial_allocate};
use jdp_packing::solver_dmw::{run_pri_dmw, DmwConfig};
use jdp_packing::solver_domw::{run_pri_domw, DomwConfig};
use jdp_packing::PrivacySpec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn agent(m: usize) -> impl Strategy<Value = AgentData> {
    (1usize..=3).prop_flat_map(move |ell| {
        (
            prop::collection::vec(0.0..=1.0f64, ell),
            prop::collection::vec(prop::collection::vec(0.0..=1.0f64, m), ell),
        )
            .prop_map(|(values, demands)| AgentData::new(values, demands))
    })
}

fn instance_with(
    max_n: usize,
    supply: impl Strategy<Value = f64> + Clone + 'static,
) -> impl Strategy<Value = PackingInstance> {
    (1usize..=max_n, 1usize..=3).prop_flat_map(move |(n, m)| {
        (prop::collection::vec(agent(m), n), supply.clone())
            .prop_map(move |(agents, b)| PackingInstance::new(m, b, agents))
    })
}

fn instance() -> impl Strategy<Value = PackingInstance> {
    instance_with(6, 0.0..4.0f64)
}

/// Random point of `X_i` for every agent: nonnegative with mass at most 1.
fn random_allocation(inst: &PackingInstance, rng: &mut ChaCha20Rng) -> Allocation {
    Allocation {
        x: inst
            .agents
            .iter()
            .map(|a| {
                let raw: Vec<f64> = (0..=a.bundles()).map(|_| rng.gen::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                raw[..a.bundles()].iter().map(|r| r / total).collect()
            })
            .collect(),
    }
}

fn random_prices(m: usize, p_max: f64, rng: &mut ChaCha20Rng) -> DualPriceVector {
    let raw: Vec<f64> = (0..=m).map(|_| -rng.gen::<f64>().ln()).collect();
    let total: f64 = raw.iter().sum();
    DualPriceVector::new(raw.iter().map(|r| p_max * r / total).collect(), p_max).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluation_is_linear(inst in instance(), seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = random_allocation(&inst, &mut rng);
        let y = random_allocation(&inst, &mut rng);
        let mid = Allocation {
            x: x.x.iter().zip(&y.x).map(|(a, b)| a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect()).collect(),
        };
        let (mx, my, mm) = (
            evaluate_allocation(&inst, &x).unwrap(),
            evaluate_allocation(&inst, &y).unwrap(),
            evaluate_allocation(&inst, &mid).unwrap(),
        );
        prop_assert!(close(mm.objective, 0.5 * (mx.objective + my.objective), 1e-12));
        for j in 0..inst.m {
            prop_assert!(close(mm.consumption[j], 0.5 * (mx.consumption[j] + my.consumption[j]), 1e-12));
        }
    }

    #[test]
    fn objective_never_exceeds_n(inst in instance(), seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = random_allocation(&inst, &mut rng);
        prop_assert!(evaluate_allocation(&inst, &x).unwrap().objective <= inst.n as f64);
    }

    #[test]
    fn json_round_trip_is_lossless(inst in instance()) {
        let text = serde_json::to_string(&inst).unwrap();
        let back = from_json_str(&text, std::path::Path::new("mem.json")).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn best_response_matches_enumeration(a in agent(3), seed in any::<u64>(), p_max in 0.0..10.0f64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p = random_prices(3, p_max, &mut rng);
        let br = best_response(&a, &p).unwrap();
        // empty option first, then bundles in index order; a bundle beats
        // the current best only when strictly better, and ties with the
        // empty option go to the bundle
        let mut best: (Option<usize>, f64) = (None, 0.0);
        for k in 0..a.bundles() {
            let s = surplus(a.values[k], &a.demands[k], p.real());
            let better = match best.0 {
                None => s >= best.1,
                Some(_) => s > best.1,
            };
            if better {
                best = (Some(k), s);
            }
        }
        prop_assert_eq!(br.chosen, best.0);
        prop_assert_eq!(br.utility, best.1);
    }

    #[test]
    fn lagrangian_decomposes_by_agent(inst in instance(), seed in any::<u64>(), p_max in 0.0..10.0f64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = random_allocation(&inst, &mut rng);
        let p = random_prices(inst.m, p_max, &mut rng);
        let whole = lagrangian(&inst, &x, &p).unwrap();
        let split = lagrangian_decomposed(&inst, &x, &p).unwrap();
        prop_assert!(close(whole, split, 1e-10));
        let share = inst.supply / inst.n as f64;
        let by_hand: f64 = inst.agents.iter().zip(&x.x).map(|(a, xi)| agent_lagrangian(a, xi, p.real(), share)).sum();
        prop_assert!(close(whole, by_hand, 1e-10));
    }

    #[test]
    fn averaged_output_stays_in_the_box(inst in instance_with(8, 1.0..3.0f64)) {
        let out = run_pri_dmw(&inst, &DmwConfig::noiseless(0.5, 200).with_trace(), 0);
        if let Ok(out) = out {
            for xi in &out.allocation.x {
                prop_assert!(xi.iter().all(|&v| (0.0..=1.0).contains(&v)));
                prop_assert!(xi.iter().sum::<f64>() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn noisy_dmw_keeps_prices_on_the_simplex(inst in instance_with(8, 1.0..3.0f64), seed in any::<u64>()) {
        let spec = PrivacySpec::new(20.0, 1e-3).unwrap();
        let mut cfg = DmwConfig::private(spec, 0.5).with_rounds(300).with_trace();
        cfg.force = true;
        if let Ok(out) = run_pri_dmw(&inst, &cfg, seed) {
            let Some(trace) = out.trace else { return Ok(()) }; // trivial path
            let grad_max = out.report.param("grad_max").unwrap();
            let p_max = out.report.param("p_max").unwrap();
            for round in &trace.rounds {
                prop_assert!(round.prices.iter().all(|&p| p >= 0.0));
                let norm: f64 = round.prices.iter().sum();
                prop_assert!(((norm - p_max) / p_max).abs() <= 1e-9);
                prop_assert!(round.grad_trunc.iter().all(|g| g.abs() <= grad_max));
            }
        }
    }

    #[test]
    fn one_agent_moves_consumption_by_at_most_one(inst in instance(), replacement in agent(3), idx in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let m = inst.m;
        let replacement = AgentData::new(
            replacement.values.clone(),
            replacement.demands.iter().map(|row| row[..m].to_vec()).collect(),
        );
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p = random_prices(m, 4.0, &mut rng);
        let i = idx.index(inst.n);
        let mut neighbour = inst.clone();
        neighbour.agents[i] = replacement;
        let c = consumption(&inst, &best_response_allocation(&inst, &p).unwrap());
        let c2 = consumption(&neighbour, &best_response_allocation(&neighbour, &p).unwrap());
        for j in 0..m {
            prop_assert!((c[j] - c2[j]).abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn domw_rounds_are_best_responses(inst in instance_with(12, 1.0..4.0f64), seed in any::<u64>()) {
        let spec = PrivacySpec::new(1.0, 1e-3).unwrap();
        let mut cfg = DomwConfig::private(spec, 0.5);
        cfg.force = true;
        let Ok(out) = run_pri_domw(&inst, &cfg, seed) else { return Ok(()) };
        if out.rounds.is_empty() {
            return Ok(()); // trivial path
        }
        prop_assert_eq!(out.report.best_response_calls, inst.n as u64);
        let p_max = out.report.param("p_max").unwrap();
        for r in &out.rounds {
            let norm: f64 = r.prices.iter().sum();
            prop_assert!(((norm - p_max) / p_max).abs() <= 1e-9);
            let a = &inst.agents[r.agent];
            let real = &r.prices[..inst.m];
            let best = (0..a.bundles()).map(|k| surplus(a.values[k], &a.demands[k], real)).fold(0.0, f64::max);
            prop_assert_eq!(r.utility, best);
            if let Some(k) = r.chosen {
                prop_assert_eq!(surplus(a.values[k], &a.demands[k], real), best);
                prop_assert!(r.utility >= 0.0);
            }
        }
    }

    #[test]
    fn brute_force_dominates_integral_solver_outputs(inst in instance_with(5, 1.0..3.0f64), seed in any::<u64>()) {
        let opt = brute_force_opt(&inst).unwrap().opt_value;
        let spec = PrivacySpec::new(1.0, 1e-3).unwrap();
        let mut cfg = DomwConfig::private(spec, 0.5);
        cfg.force = true;
        if let Ok(out) = run_pri_domw(&inst, &cfg, seed) {
            if out.report.feasible {
                prop_assert!(out.report.objective <= opt + 1e-12);
            }
        }
        if let Ok(x) = trivial_allocate(&inst) {
            let metrics = evaluate_allocation(&inst, &x).unwrap();
            prop_assert!(metrics.feasible);
            prop_assert!(metrics.objective <= opt + 1e-12);
        }
    }
}

#[test]
fn subgradient_inequality_on_sampled_pairs() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    for inst_seed in 0..5 {
        let inst = jdp_packing::harness::generate_instance(
            jdp_packing::harness::InstanceKind::Uniform,
            8,
            3,
            2,
            3.0,
            inst_seed,
        )
        .unwrap();
        let p_max = 4.0 * 8.0 / 3.0;
        for _ in 0..1000 {
            let p = random_prices(3, p_max, &mut rng);
            let q = random_prices(3, p_max, &mut rng);
            let g = exact_subgradient(&inst, &p).unwrap();
            let inner: f64 = g
                .iter()
                .zip(q.real().iter().zip(p.real()))
                .map(|(g, (q, p))| g * (q - p))
                .sum();
            let lhs = dual_objective(&inst, &q).unwrap();
            let rhs = dual_objective(&inst, &p).unwrap() + inner;
            assert!(lhs >= rhs - 1e-9, "D(q)={lhs} < {rhs}");
        }
    }
}

#[test]
fn dual_objective_is_max_over_integral_allocations() {
    let inst = jdp_packing::harness::generate_instance(
        jdp_packing::harness::InstanceKind::Uniform,
        4,
        2,
        2,
        1.5,
        3,
    )
    .unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..20 {
        let p = random_prices(2, 4.0, &mut rng);
        let mut best = f64::NEG_INFINITY;
        // every agent: empty or one of its two bundles
        for code in 0..3usize.pow(4) {
            let choices: Vec<Option<usize>> = (0..4)
                .map(|i| match code / 3usize.pow(i) % 3 {
                    0 => None,
                    k => Some(k - 1),
                })
                .collect();
            let x = Allocation::from_choices(&inst, &choices);
            best = best.max(lagrangian(&inst, &x, &p).unwrap());
        }
        let d = dual_objective(&inst, &p).unwrap();
        assert!(close(d, best, 1e-12), "{d} vs {best}");
    }
}

#[test]
fn reduction_instances_respect_their_invariants() {
    for (b, seed) in [(2usize, 1u64), (4, 2), (4, 3), (6, 4), (6, 5)] {
        let workload = random_workload(b / 2, 2, seed);
        let red = build_reduction_instance(&workload, b).unwrap();
        assert!(validate_instance(&red.packing).is_empty());
        let m = 2.0;
        for i in red.a_agents.clone() {
            let a = &red.packing.agents[i];
            let units: f64 = a.demands[0].iter().sum();
            assert!(units == 0.0 || a.values[0] / units >= 1.0 / m);
        }
        for i in red.b_agents.clone() {
            let a = &red.packing.agents[i];
            for (v, row) in a.values.iter().zip(&a.demands) {
                let units: f64 = row.iter().sum();
                assert_eq!(v / units, 1.0 / (2.0 * m));
            }
        }
        let opt = brute_force_opt(&red.packing).unwrap().opt_value;
        assert!(opt >= opt_lower_bound(&workload, b).unwrap() - 1e-12);
    }
}
