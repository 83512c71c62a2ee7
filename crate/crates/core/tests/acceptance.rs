//! Acceptance suite. Each test checks one criterion and prints a single
//! `PASS`/`FAIL` line with the measured quantities; run with
//! `cargo test --test acceptance -- --nocapture --test-threads 1` to see them.

mod common;

use std::time::{Duration, Instant};

use common::{for_each_selector, random_grid, random_policy, rng, solve_policy, wnorm};
use howard_lsc::bench::{
    make_inventory, make_queueing, make_random_finite_mdp, make_threshold_model, InventoryParams, QueueingParams,
};
use howard_lsc::envelope::{is_grid_lsc, lsc_envelope};
use howard_lsc::lyapunov::{certify_growth, value_bound, w_norm};
use howard_lsc::model::Action;
use howard_lsc::montecarlo::{estimate_value, horizon_for};
use howard_lsc::operators::{apply_tf, bellman_t, evaluate_policy, EvalMethod};
use howard_lsc::solvers::{
    best_improvement_pi, check_descent_chain, extract_argmin_sets, rate_report, smoothed_policy_iteration,
    standard_policy_iteration, value_iteration, BestOptions, PiOptions, PiTrace, Termination,
};
use howard_lsc::{ModelSpec, Policy};
use rand::Rng;

const ALPHAS: [f64; 3] = [0.5, 0.9, 0.95];
const PER_FAMILY: usize = 12;

fn report(id: u32, name: &str, ok: bool, detail: String) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {status} {name}: {detail}");
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

struct Instance {
    model: ModelSpec,
    f0: Policy,
}

/// Seeded instances of the four benchmark families, `N <= 200`, cycling
/// through the three discount factors.
fn instances() -> Vec<Instance> {
    let mut r = rng(2024);
    let mut out = Vec::new();
    for i in 0..PER_FAMILY {
        let alpha = ALPHAS[i % 3];
        let n_cells = 2 * r.random_range(2..=99) + 1;
        let jump = r.random_range(0.5..3.0);
        let model = make_threshold_model(n_cells, jump, alpha).unwrap();
        let f0 = if i % 2 == 0 { Policy(vec![0; n_cells + 1]) } else { random_policy(&model, &mut r) };
        out.push(Instance { model, f0 });
    }
    for i in 0..PER_FAMILY {
        let alpha = ALPHAS[i % 3];
        let p0 = r.random_range(0.0..0.04);
        let mut demand: Vec<f64> = (0..5).map(|_| r.random_range(0.1..1.0)).collect();
        let rest: f64 = demand.iter().sum();
        for d in &mut demand {
            *d *= (1.0 - p0) / rest;
        }
        demand.insert(0, p0);
        let p = InventoryParams {
            capacity: r.random_range(5..=150),
            demand_probs: demand,
            order_cost: r.random_range(0.5..2.0),
            holding_cost: r.random_range(0.05..0.5),
            shortage_cost: r.random_range(1.0..6.0),
            max_order: 1,
            alpha,
        };
        let model = make_inventory(&p).unwrap();
        let f0 = random_policy(&model, &mut r);
        out.push(Instance { model, f0 });
    }
    for i in 0..PER_FAMILY {
        let alpha = ALPHAS[i % 3];
        let p = QueueingParams {
            buffer: r.random_range(5..=199),
            arrival_p: r.random_range(0.01..0.05),
            service_p: r.random_range(0.05..0.5),
            reject_cost: r.random_range(0.0..20.0),
            hold_cost: r.random_range(0.1..2.0),
            alpha,
        };
        let model = make_queueing(&p).unwrap();
        let f0 = random_policy(&model, &mut r);
        out.push(Instance { model, f0 });
    }
    for i in 0..PER_FAMILY {
        let alpha = ALPHAS[i % 3];
        let n = r.random_range(10..=200);
        let k = r.random_range(2..=6);
        let sparsity = r.random_range(1..=n.min(8));
        let model = make_random_finite_mdp(n, k, sparsity, alpha, r.random()).unwrap();
        let f0 = random_policy(&model, &mut r);
        out.push(Instance { model, f0 });
    }
    out
}

fn run_pi(inst: &Instance) -> PiTrace {
    smoothed_policy_iteration(&inst.model, &inst.f0, &PiOptions::default()).unwrap().0
}

#[test]
fn criterion_01_descent_chain() {
    let start = Instant::now();
    let all = instances();
    let mut violations = 0;
    let mut worst = 0.0f64;
    for inst in &all {
        assert!(inst.model.n_nodes() <= 200);
        let v = check_descent_chain(&run_pi(inst), 1e-10);
        violations += v.len();
        worst = v.iter().map(|c| c.magnitude).fold(worst, f64::max);
    }
    let elapsed = start.elapsed();
    report(
        1,
        "descent chain",
        violations == 0 && elapsed <= Duration::from_secs(30),
        format!("{} instances, {violations} violations (worst {worst:e}), {elapsed:.2?}", all.len()),
    );
}

struct RateCheck {
    ratio_fail: usize,
    final_fail: usize,
    max_excess: f64,
    ratios: usize,
}

fn check_rates(inst: &Instance, check: &mut RateCheck) -> (Vec<f64>, Vec<f64>) {
    let oracle_tol = 1e-11;
    let v_star = value_iteration(&inst.model, oracle_tol).unwrap().value;
    let trace = run_pi(inst);
    let rep = rate_report(&trace, &v_star, &inst.model, oracle_tol, &[]);
    for r in rep.ratios.iter().flatten() {
        check.ratios += 1;
        check.max_excess = check.max_excess.max(r - rep.gamma);
        if *r > rep.gamma + 1e-6 {
            check.ratio_fail += 1;
        }
    }
    let n = rep.errors.len() - 1;
    if rep.errors[n] > rep.l_const * rep.gamma.powi(n as i32) + 1e-6 {
        check.final_fail += 1;
    }
    (rep.errors, rep.sup_errors)
}

#[test]
fn criterion_02_linear_rate() {
    let start = Instant::now();
    let mut check = RateCheck {
        ratio_fail: 0,
        final_fail: 0,
        max_excess: f64::NEG_INFINITY,
        ratios: 0,
    };
    let all = instances();
    for inst in &all {
        check_rates(inst, &mut check);
    }
    let elapsed = start.elapsed();
    report(
        2,
        "linear rate",
        check.ratio_fail == 0 && check.final_fail == 0 && elapsed <= Duration::from_secs(60),
        format!(
            "{} instances, {} ratios, max(ratio - gamma) = {:.3e}, {} ratio and {} final-error failures, {elapsed:.2?}",
            all.len(),
            check.ratios,
            check.max_excess,
            check.ratio_fail,
            check.final_fail
        ),
    );
}

#[test]
fn criterion_03_fixed_point_termination() {
    let mut fixed = 0;
    let mut failures = 0;
    let mut worst_gap = 0.0f64;
    let mut worst_opt = 0.0f64;
    for inst in &instances() {
        let m = &inst.model;
        let (trace, f) = smoothed_policy_iteration(m, &inst.f0, &PiOptions::default()).unwrap();
        if trace.terminated_by != Termination::FixedPoint {
            continue;
        }
        fixed += 1;
        let v_star = value_iteration(m, 1e-10).unwrap().value;
        let gap = wnorm(trace.final_value(), &v_star, &m.weight);
        let (tv, _) = bellman_t(m, &v_star);
        let opt = wnorm(&apply_tf(m, &f, &v_star).unwrap(), &tv, &m.weight);
        worst_gap = worst_gap.max(gap);
        worst_opt = worst_opt.max(opt);
        if gap > 2e-9 || opt > 2e-9 {
            failures += 1;
        }
    }
    report(
        3,
        "fixed-point termination",
        failures == 0 && fixed > 0,
        format!("{fixed} fixed-point stops, worst |v - V*| = {worst_gap:.2e}, worst |T_f V* - T V*| = {worst_opt:.2e}"),
    );
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn traces_bit_identical(a: &PiTrace, b: &PiTrace) -> bool {
    a.terminated_by == b.terminated_by
        && a.terminated_at == b.terminated_at
        && a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(x, y)| {
            x.n == y.n
                && x.policy == y.policy
                && same_bits(&x.v, &y.v)
                && same_bits(&x.v_env, &y.v_env)
                && same_bits(&x.t_v_env, &y.t_v_env)
                && x.chain_ok == y.chain_ok
                && x.lsc_check == y.lsc_check
        })
}

#[test]
fn criterion_04_reduction_to_standard_pi() {
    let mut r = rng(4);
    let mut identical = 0;
    let mut steps = 0;
    for seed in 0..20 {
        let n = r.random_range(10..=120);
        let m = make_random_finite_mdp(n, r.random_range(2..=6), r.random_range(1..=n.min(6)), ALPHAS[seed % 3], seed as u64).unwrap();
        assert!(m.grid.is_trivial());
        let f0 = random_policy(&m, &mut r);
        let (a, _) = smoothed_policy_iteration(&m, &f0, &PiOptions::default()).unwrap();
        let (b, _) = standard_policy_iteration(&m, &f0, &PiOptions::default()).unwrap();
        steps += a.steps();
        if traces_bit_identical(&a, &b) {
            identical += 1;
        }
    }
    report(
        4,
        "reduction to standard PI",
        identical == 20,
        format!("{identical}/20 traces bit-identical, {steps} improvement steps in total"),
    );
}

#[test]
fn criterion_05_envelope_algebra() {
    let mut r = rng(5);
    let cases = 10_000;
    let mut failures = [0usize; 5];
    for _ in 0..cases {
        let n = r.random_range(1..=50);
        let g = random_grid(n, &mut r);
        let u: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let d: Vec<f64> = (0..n).map(|_| r.random_range(0.0..5.0)).collect();
        let v: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + b).collect();
        let e = lsc_envelope(&g, &u);

        if !e.iter().zip(&u).all(|(a, b)| a <= b) {
            failures[0] += 1;
        }
        let ev = lsc_envelope(&g, &v);
        if !e.iter().zip(ev.iter()).all(|(a, b)| a <= b) {
            failures[1] += 1;
        }
        if lsc_envelope(&g, &e) != e {
            failures[2] += 1;
        }
        let w = lsc_envelope(&g, &u.iter().zip(&d).map(|(a, b)| a - b * r.random::<f64>()).collect::<Vec<_>>());
        if !(is_grid_lsc(&g, &w, 0.0) && w.iter().zip(&u).all(|(a, b)| a <= b) && w.iter().zip(e.iter()).all(|(a, b)| a <= b)) {
            failures[3] += 1;
        }
        for candidate in [&u, &e.0, &w.0] {
            if is_grid_lsc(&g, candidate, 0.0) != (lsc_envelope(&g, candidate).0 == *candidate) {
                failures[4] += 1;
            }
        }
    }
    let total: usize = failures.iter().sum();
    report(
        5,
        "envelope algebra",
        total == 0,
        format!(
            "{cases} cases; failures dominated/monotone/idempotent/maximal/characterization = {:?}",
            failures
        ),
    );
}

/// Gives a model ties under `L w0` at the listed nodes by adding actions
/// whose one-step value equals `T w0` there.
fn with_ties(m: &ModelSpec, f0: &Policy, nodes: &[usize]) -> ModelSpec {
    let w0 = lsc_envelope(&m.grid, &solve_policy(m, f0));
    let (t, _) = bellman_t(m, &w0);
    let mut out = m.clone();
    for (k, &x) in nodes.iter().enumerate() {
        // Targets no heavier than x keep the growth certificate intact.
        let light: Vec<usize> = (0..m.n_nodes()).filter(|&y| m.weight[y] <= m.weight[x]).collect();
        let y = light[(x * 5 + 3 * k + 1) % light.len()];
        let id = m.actions[x].iter().map(|a| a.id).max().unwrap() + 1;
        out.actions[x].push(Action::new(id, t[x] - m.alpha * w0[y], vec![(y, 1.0)]));
    }
    out
}

#[test]
fn criterion_06_best_improvement() {
    let start = Instant::now();
    let thr = make_threshold_model(9, 1.0, 0.9).unwrap();
    let queue = make_queueing(&QueueingParams { buffer: 10, ..QueueingParams::default() }).unwrap();
    let inv = make_inventory(&InventoryParams { capacity: 8, ..InventoryParams::default() }).unwrap();
    let bases: Vec<(ModelSpec, Vec<usize>)> = vec![
        (make_random_finite_mdp(8, 2, 3, 0.9, 61).unwrap(), vec![0, 2, 3, 5, 7]),
        (make_random_finite_mdp(10, 3, 4, 0.5, 62).unwrap(), vec![1, 4, 6, 9]),
        (make_random_finite_mdp(12, 2, 2, 0.95, 63).unwrap(), vec![0, 3, 6, 8, 11]),
        (thr.clone(), vec![2, 9]),
        (queue.clone(), vec![0, 4, 7]),
        (inv.clone(), vec![1, 3, 5]),
    ];
    let mut models = 0;
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut sizes = Vec::new();
    for (base, nodes) in &bases {
        let f0 = base.first_policy();
        let m = with_ties(base, &f0, nodes);
        let w0 = lsc_envelope(&m.grid, &solve_policy(&m, &f0));
        let sets = extract_argmin_sets(&m, &w0, 1e-9);
        let count = sets.selector_count().unwrap();
        if !(2..=100).contains(&count) {
            failures += 1;
            continue;
        }
        sizes.push(count);
        models += 1;
        let (trace, _) = best_improvement_pi(&m, &f0, &BestOptions::default()).unwrap();
        let w1 = &trace.records[1].w;
        let f1 = &trace.records[1].policy;
        let mut best = vec![f64::INFINITY; m.n_nodes()];
        for_each_selector(&sets.sets, |f| {
            for (b, v) in best.iter_mut().zip(solve_policy(&m, f)) {
                *b = b.min(v);
            }
        });
        let err = wnorm(w1, &best, &m.weight).max(wnorm(&solve_policy(&m, f1), &best, &m.weight));
        worst = worst.max(err);
        if err > 1e-9 {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    report(
        6,
        "best improvement",
        failures == 0 && models >= 5 && elapsed <= Duration::from_secs(10),
        format!("{models} models, |F1| = {sizes:?}, worst deviation {worst:.2e}, {elapsed:.2?}"),
    );
}

fn default_benchmarks() -> Vec<(&'static str, ModelSpec)> {
    vec![
        ("threshold", make_threshold_model(21, 1.0, 0.9).unwrap()),
        ("inventory", make_inventory(&InventoryParams::default()).unwrap()),
        ("queueing", make_queueing(&QueueingParams::default()).unwrap()),
        ("random", make_random_finite_mdp(50, 5, 4, 0.9, 7).unwrap()),
    ]
}

#[test]
fn criterion_07_contraction() {
    let mut r = rng(7);
    let mut failures = 0;
    let mut max_ratio = 0.0f64;
    for (_, m) in default_benchmarks() {
        let gamma = certify_growth(&m).gamma;
        for _ in 0..1000 {
            let scale = 10f64.powf(r.random_range(-2.0..3.0));
            let u = common::random_function(&m, scale, &mut r);
            let v = common::random_function(&m, scale, &mut r);
            let f = random_policy(&m, &mut r);
            let d = wnorm(&u, &v, &m.weight);
            let (tu, _) = bellman_t(&m, &u);
            let (tv, _) = bellman_t(&m, &v);
            let dt = wnorm(&tu, &tv, &m.weight);
            let df = wnorm(&apply_tf(&m, &f, &u).unwrap(), &apply_tf(&m, &f, &v).unwrap(), &m.weight);
            if dt > gamma * d + 1e-10 || df > gamma * d + 1e-10 {
                failures += 1;
            }
            if d > 0.0 {
                max_ratio = max_ratio.max(dt.max(df) / d / gamma);
            }
        }
    }
    report(
        7,
        "contraction constants",
        failures == 0,
        format!("4 x 1000 triples, {failures} failures, max ||T u - T v|| / (gamma ||u - v||) = {max_ratio:.6}"),
    );
}

#[test]
fn criterion_08_value_bound() {
    let mut r = rng(8);
    let mut failures = 0;
    let mut max_use = 0.0f64;
    let benches = default_benchmarks();
    for k in 0..1000 {
        let (_, m) = &benches[k % benches.len()];
        let bound = value_bound(&certify_growth(m)).unwrap();
        let f = random_policy(m, &mut r);
        let v = evaluate_policy(m, &f, EvalMethod::Direct, 1e-12).unwrap();
        let norm = w_norm(&v, &m.weight);
        max_use = max_use.max(norm / bound);
        if norm > bound + 1e-9 {
            failures += 1;
        }
    }
    report(
        8,
        "value bound",
        failures == 0,
        format!("1000 policies, {failures} failures, max ||V_f|| / bound = {max_use:.4}"),
    );
}

#[test]
fn criterion_09_monte_carlo() {
    let start = Instant::now();
    let m = make_inventory(&InventoryParams::default()).unwrap();
    let f = value_iteration(&m, 1e-10).unwrap().policy;
    let exact = evaluate_policy(&m, &f, EvalMethod::Direct, 1e-12).unwrap();
    let x0 = 5;
    let horizon = horizon_for(&m, x0, 1e-3).unwrap();
    let mut hits = 0;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let e = estimate_value(&m, &f, x0, 10_000, horizon, seed * 1_000_003).unwrap();
        assert!(e.truncation_bound <= 1e-3);
        let err = (e.mean - exact[x0]).abs();
        worst = worst.max(err / (e.halfwidth95 + 1e-3));
        if err <= e.halfwidth95 + 1e-3 {
            hits += 1;
        }
    }
    let elapsed = start.elapsed();
    report(
        9,
        "Monte Carlo consistency",
        hits >= 18 && elapsed <= Duration::from_secs(60),
        format!("{hits}/20 seeds within halfwidth95 + 1e-3 (horizon {horizon}, worst error/allowance {worst:.3}), {elapsed:.2?}"),
    );
}

#[test]
fn criterion_10_bounded_cost_uniform_convergence() {
    let mut check = RateCheck {
        ratio_fail: 0,
        final_fail: 0,
        max_excess: f64::NEG_INFINITY,
        ratios: 0,
    };
    let mut mismatched = 0;
    let mut count = 0;
    for inst in instances().iter().filter(|i| i.model.weight.iter().all(|&w| w == 1.0)) {
        count += 1;
        let (errors, sup) = check_rates(inst, &mut check);
        if !same_bits(&errors, &sup) {
            mismatched += 1;
        }
    }
    report(
        10,
        "bounded-cost uniform convergence",
        count > 0 && mismatched == 0 && check.ratio_fail == 0 && check.final_fail == 0,
        format!(
            "{count} W = 1 instances, {mismatched} norm mismatches, {} ratios (max ratio - gamma {:.3e}), {} failures",
            check.ratios,
            check.max_excess,
            check.ratio_fail + check.final_fail
        ),
    );
}
