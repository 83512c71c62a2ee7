mod common;

use common::solve_policy;
use howard_lsc::bench::{make_inventory, make_queueing, InventoryParams, QueueingParams};
use howard_lsc::model::{Action, ModelSpec, StructuredGrid};
use howard_lsc::montecarlo::{estimate_value, horizon_for, simulate_trajectory, truncation_bound};
use howard_lsc::solvers::value_iteration;
use howard_lsc::Policy;

fn deterministic_chain() -> ModelSpec {
    ModelSpec::new(
        StructuredGrid::plain(2),
        0.5,
        vec![1.0, 1.0],
        vec![
            vec![Action::new(0, 0.0, vec![(1, 1.0)])],
            vec![Action::new(0, 1.0, vec![(1, 1.0)])],
        ],
    )
    .unwrap()
}

#[test]
fn deterministic_chain_has_no_spread() {
    let m = deterministic_chain();
    let f = Policy(vec![0, 0]);
    let e = estimate_value(&m, &f, 0, 50, 3, 11).unwrap();
    assert_eq!(e.mean, 0.75);
    assert_eq!(e.halfwidth95, 0.0);
    let t = simulate_trajectory(&m, &f, 0, 3, 11).unwrap();
    assert_eq!(t.actions, vec![0, 0, 0]);
}

#[test]
fn tail_is_within_truncation_bound() {
    let m = deterministic_chain();
    let f = Policy(vec![0, 0]);
    let exact = solve_policy(&m, &f)[0];
    for h in 1..30 {
        let t = simulate_trajectory(&m, &f, 0, h, 0).unwrap();
        let tail = exact - t.discounted_cost;
        assert!(tail >= 0.0);
        assert!(tail <= truncation_bound(&m, 0, h).unwrap() + 1e-15);
    }
}

#[test]
fn same_seed_same_output() {
    let m = make_queueing(&QueueingParams::default()).unwrap();
    let f = value_iteration(&m, 1e-8).unwrap().policy;
    let a = simulate_trajectory(&m, &f, 3, 100, 99).unwrap();
    let b = simulate_trajectory(&m, &f, 3, 100, 99).unwrap();
    assert_eq!(a, b);
    let c = simulate_trajectory(&m, &f, 3, 100, 100).unwrap();
    assert_ne!(a.states, c.states);
    let e1 = estimate_value(&m, &f, 3, 500, 100, 5).unwrap();
    let e2 = estimate_value(&m, &f, 3, 500, 100, 5).unwrap();
    assert_eq!(e1, e2);
}

#[test]
fn trajectories_follow_the_kernel() {
    let m = make_inventory(&InventoryParams::default()).unwrap();
    let f = value_iteration(&m, 1e-8).unwrap().policy;
    for seed in 0..20 {
        let t = simulate_trajectory(&m, &f, 5, 200, seed).unwrap();
        for k in 0..200 {
            let x = t.states[k];
            assert_eq!(t.actions[k], f[x]);
            let a = m.action(x, f[x]).unwrap();
            assert!(a.transitions.iter().any(|&(y, p)| y == t.states[k + 1] && p > 0.0));
        }
    }
}

#[test]
fn queue_estimate_brackets_exact_value() {
    let m = make_queueing(&QueueingParams::default()).unwrap();
    let f = value_iteration(&m, 1e-10).unwrap().policy;
    let exact = solve_policy(&m, &f);
    let x0 = 4;
    let h = horizon_for(&m, x0, 1e-3).unwrap();
    let mut hits = 0;
    for seed in 0..10 {
        let e = estimate_value(&m, &f, x0, 4000, h, seed * 1000).unwrap();
        if (e.mean - exact[x0]).abs() <= e.halfwidth95 + e.truncation_bound {
            hits += 1;
        }
    }
    assert!(hits >= 8, "{hits}/10");
}
