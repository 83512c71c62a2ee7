//! Growth-condition certificates and weighted sup-norms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ActionId, ModelSpec, NodeId};

/// Tight constants for `|C(x,a)| <= M W(x)` and `QW(x,a) <= beta W(x)` on
/// the admissible pairs, with `gamma = alpha * beta`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthCertificate {
    #[serde(rename = "M")]
    pub m: f64,
    pub beta: f64,
    pub gamma: f64,
    pub pass: bool,
    #[serde(rename = "witness_M")]
    pub witness_m: (NodeId, ActionId),
    pub witness_beta: (NodeId, ActionId),
}

/// Computes the minimal `M` and the minimal `beta >= 1` by exhaustive
/// maximisation over the admissible pairs (node order, then action order;
/// the first maximiser wins).
pub fn certify_growth(m: &ModelSpec) -> GrowthCertificate {
    let mut best_m = (f64::NEG_INFINITY, (0, 0));
    let mut best_beta = (f64::NEG_INFINITY, (0, 0));
    for (x, list) in m.actions.iter().enumerate() {
        let w = m.weight[x];
        for a in list {
            let cost_ratio = a.cost.abs() / w;
            if cost_ratio > best_m.0 {
                best_m = (cost_ratio, (x, a.id));
            }
            let drift = a.expect(&m.weight) / w;
            if drift > best_beta.0 {
                best_beta = (drift, (x, a.id));
            }
        }
    }
    let beta = best_beta.0.max(1.0);
    let gamma = m.alpha * beta;
    GrowthCertificate {
        m: best_m.0.max(0.0),
        beta,
        gamma,
        pass: gamma < 1.0,
        witness_m: best_m.1,
        witness_beta: best_beta.1,
    }
}

/// `max_x |u(x)| / W(x)`.
pub fn w_norm(u: &[f64], weight: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), weight.len());
    u.iter()
        .zip(weight)
        .map(|(v, w)| v.abs() / w)
        .fold(0.0, f64::max)
}

/// `max_x |u(x) - v(x)| / W(x)`.
pub fn w_dist(u: &[f64], v: &[f64], weight: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter()
        .zip(v)
        .zip(weight)
        .map(|((a, b), w)| (a - b).abs() / w)
        .fold(0.0, f64::max)
}

/// `M / (1 - gamma)`: a bound on `||V_f||_W` for every policy `f`.
pub fn value_bound(c: &GrowthCertificate) -> Result<f64> {
    if !c.pass {
        return Err(Error::CertificateFailed { gamma: c.gamma });
    }
    Ok(c.m / (1.0 - c.gamma))
}

/// Boundary nodes where `W` is not continuous in the grid sense, i.e. where
/// `W` or `-W` fails to be grid-lsc. Both hold exactly when `W` at the
/// boundary node equals `W` at each of its neighbours.
pub fn weight_discontinuities(m: &ModelSpec) -> Vec<NodeId> {
    m.grid
        .nodes
        .iter()
        .enumerate()
        .filter(|(x, node)| {
            node.envelope_neighbors
                .iter()
                .any(|&y| m.weight[y] != m.weight[*x])
        })
        .map(|(x, _)| x)
        .collect()
}
