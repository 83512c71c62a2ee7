//! Monte Carlo estimates of policy values.
//!
//! Trajectory `i` of a batch started with `seed` draws from
//! `ChaCha8Rng::seed_from_u64(splitmix64(seed + i))` (wrapping add), so
//! results do not depend on the thread count or on the platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lyapunov::certify_growth;
use crate::model::{Action, ActionId, ModelSpec, NodeId, Policy};

/// The SplitMix64 finaliser, used to decorrelate neighbouring seeds.
pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    /// `x_0 .. x_H`.
    pub states: Vec<NodeId>,
    /// `a_0 .. a_{H-1}`.
    pub actions: Vec<ActionId>,
    pub discounted_cost: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub halfwidth95: f64,
    pub truncation_bound: f64,
    pub n_traj: usize,
    pub horizon: usize,
    pub seed: u64,
}

/// Inverse-CDF draw over a row sorted by target node. Rounding can leave
/// the cumulative sum just below 1; the last target then absorbs the rest.
fn sample_next(a: &Action, r: f64) -> NodeId {
    let mut acc = 0.0;
    for &(y, p) in &a.transitions {
        acc += p;
        if r < acc {
            return y;
        }
    }
    a.transitions.last().map(|&(y, _)| y).expect("rows are non-empty")
}

fn check_start(m: &ModelSpec, f: &Policy, x0: NodeId, horizon: usize) -> Result<Vec<usize>> {
    if x0 >= m.n_nodes() {
        return Err(Error::InvalidParameter(format!(
            "start node {x0} is out of range for {} nodes",
            m.n_nodes()
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    m.resolve(f)
}

fn run(m: &ModelSpec, idx: &[usize], x0: NodeId, horizon: usize, rng: &mut ChaCha8Rng, record: bool) -> Trajectory {
    let mut states = Vec::with_capacity(if record { horizon + 1 } else { 0 });
    let mut actions = Vec::with_capacity(if record { horizon } else { 0 });
    let mut x = x0;
    let mut discount = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        let a = &m.actions[x][idx[x]];
        if record {
            states.push(x);
            actions.push(a.id);
        }
        total += discount * a.cost;
        discount *= m.alpha;
        x = sample_next(a, rng.random::<f64>());
    }
    if record {
        states.push(x);
    }
    Trajectory {
        states,
        actions,
        discounted_cost: total,
        seed: 0,
    }
}

/// One trajectory of length `horizon`, driven by `splitmix64(seed)`.
pub fn simulate_trajectory(m: &ModelSpec, f: &Policy, x0: NodeId, horizon: usize, seed: u64) -> Result<Trajectory> {
    let idx = check_start(m, f, x0, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    let mut t = run(m, &idx, x0, horizon, &mut rng, true);
    t.seed = seed;
    Ok(t)
}

/// `M gamma^H W(x0) / (1 - gamma)`, the largest possible contribution of
/// the steps beyond the horizon.
pub fn truncation_bound(m: &ModelSpec, x0: NodeId, horizon: usize) -> Result<f64> {
    let c = certify_growth(m);
    if !c.pass {
        return Err(Error::CertificateFailed { gamma: c.gamma });
    }
    Ok(c.m * c.gamma.powf(horizon as f64) * m.weight[x0] / (1.0 - c.gamma))
}

/// Smallest horizon whose truncation bound is at most `target`.
pub fn horizon_for(m: &ModelSpec, x0: NodeId, target: f64) -> Result<usize> {
    if !(target > 0.0) {
        return Err(Error::InvalidParameter(format!("target must be positive, got {target}")));
    }
    let mut h = 1;
    while truncation_bound(m, x0, h)? > target {
        h += 1;
        if h > 100_000_000 {
            return Err(Error::InvalidParameter(format!("no horizon reaches {target}")));
        }
    }
    Ok(h)
}

/// Sample mean of `n_traj` truncated discounted costs with a 95% normal
/// halfwidth (`1.96 s / sqrt(n)`, `s` the sample standard deviation).
pub fn estimate_value(
    m: &ModelSpec,
    f: &Policy,
    x0: NodeId,
    n_traj: usize,
    horizon: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_traj < 2 {
        return Err(Error::InvalidParameter("n_traj must be at least 2".into()));
    }
    let idx = check_start(m, f, x0, horizon)?;
    let truncation_bound = truncation_bound(m, x0, horizon)?;
    let costs: Vec<f64> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed.wrapping_add(i)));
            run(m, &idx, x0, horizon, &mut rng, false).discounted_cost
        })
        .collect();
    let n = n_traj as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Estimate {
        mean,
        halfwidth95: 1.96 * var.sqrt() / n.sqrt(),
        truncation_bound,
        n_traj,
        horizon,
        seed,
    })
}
