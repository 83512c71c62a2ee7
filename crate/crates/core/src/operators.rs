//! Dynamic-programming operators `L`, `T`, `T_f` and policy evaluation.
//!
//! Per-node work runs on the rayon pool once the grid has at least
//! [`PAR_THRESHOLD`] nodes. Results are collected in node order and every
//! node's arithmetic is sequential, so outputs do not depend on the thread
//! count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{certify_growth, w_dist};
use crate::model::{Action, GridFunction, ModelSpec, Policy};

pub const PAR_THRESHOLD: usize = 512;

/// Above this many nodes `Auto` evaluation switches to fixed-point iteration.
pub const DIRECT_MAX_NODES: usize = 2000;

pub const DEFAULT_EVAL_TOL: f64 = 1e-12;
pub const DEFAULT_EVAL_MAX_ITER: usize = 1_000_000;

pub(crate) fn map_nodes<T, F>(n: usize, op: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if n >= PAR_THRESHOLD {
        (0..n).into_par_iter().map(op).collect()
    } else {
        (0..n).map(op).collect()
    }
}

#[inline]
fn backup(alpha: f64, a: &Action, u: &[f64]) -> f64 {
    a.cost + alpha * a.expect(u)
}

/// `L u(x, a)` on every admissible pair, indexed like `ModelSpec::actions`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QFunction(pub Vec<Vec<f64>>);

impl QFunction {
    pub fn at(&self, x: usize, index: usize) -> f64 {
        self.0[x][index]
    }
}

pub fn apply_l(m: &ModelSpec, u: &[f64]) -> QFunction {
    QFunction(map_nodes(m.n_nodes(), |x| {
        m.actions[x].iter().map(|a| backup(m.alpha, a, u)).collect()
    }))
}

/// Minimum and first minimiser (lowest action id) of `L u(x, .)`.
#[inline]
fn argmin_at(m: &ModelSpec, x: usize, u: &[f64]) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for a in &m.actions[x] {
        let q = backup(m.alpha, a, u);
        if q < best.0 || best.1 == usize::MAX {
            best = (q, a.id);
        }
    }
    best
}

/// `T u` and a greedy selector (ties broken towards the lowest action id).
pub fn bellman_t(m: &ModelSpec, u: &[f64]) -> (GridFunction, Policy) {
    let pairs = map_nodes(m.n_nodes(), |x| argmin_at(m, x, u));
    let (values, ids) = pairs.into_iter().unzip();
    (GridFunction(values), Policy(ids))
}

/// `T_f u`. The policy must already be resolved to list positions.
pub(crate) fn apply_tf_resolved(m: &ModelSpec, idx: &[usize], u: &[f64]) -> GridFunction {
    GridFunction(map_nodes(m.n_nodes(), |x| {
        backup(m.alpha, &m.actions[x][idx[x]], u)
    }))
}

pub fn apply_tf(m: &ModelSpec, f: &Policy, u: &[f64]) -> Result<GridFunction> {
    let idx = m.resolve(f)?;
    Ok(apply_tf_resolved(m, &idx, u))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMethod {
    /// Dense LU solve of `(I - alpha Q_f) v = C_f`.
    Direct,
    /// Fixed-point iteration of `T_f` with an a-posteriori stopping rule.
    Iterative,
    /// `Direct` up to [`DIRECT_MAX_NODES`] nodes, `Iterative` above.
    #[default]
    Auto,
}

impl EvalMethod {
    pub fn resolve(self, n: usize) -> EvalMethod {
        match self {
            EvalMethod::Auto if n <= DIRECT_MAX_NODES => EvalMethod::Direct,
            EvalMethod::Auto => EvalMethod::Iterative,
            other => other,
        }
    }
}

/// Computes `V_f`.
///
/// `tol` is the W-norm error target of the iterative method and is ignored
/// by the direct one.
pub fn evaluate_policy(m: &ModelSpec, f: &Policy, method: EvalMethod, tol: f64) -> Result<GridFunction> {
    let idx = m.resolve(f)?;
    match method.resolve(m.n_nodes()) {
        EvalMethod::Direct => evaluate_direct(m, &idx),
        _ => {
            let gamma = certify_growth(m).gamma;
            evaluate_iterative(m, &idx, gamma, tol, DEFAULT_EVAL_MAX_ITER)
        }
    }
}

pub(crate) fn evaluate_direct(m: &ModelSpec, idx: &[usize]) -> Result<GridFunction> {
    let n = m.n_nodes();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut c = DVector::<f64>::zeros(n);
    for x in 0..n {
        let act = &m.actions[x][idx[x]];
        c[x] = act.cost;
        for &(y, p) in &act.transitions {
            a[(x, y)] -= m.alpha * p;
        }
    }
    let v = a.lu().solve(&c).ok_or(Error::SingularSystem)?;
    let v: Vec<f64> = v.iter().copied().collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(GridFunction(v))
}

pub(crate) fn evaluate_iterative(
    m: &ModelSpec,
    idx: &[usize],
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<GridFunction> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("evaluation tolerance must be positive, got {tol}")));
    }
    if !(gamma < 1.0) {
        return Err(Error::CertificateFailed { gamma });
    }
    let threshold = tol * (1.0 - gamma) / gamma;
    let mut v = vec![0.0; m.n_nodes()];
    for _ in 0..max_iter {
        let next = apply_tf_resolved(m, idx, &v).0;
        let step = w_dist(&next, &v, &m.weight);
        v = next;
        if step <= threshold {
            return Ok(GridFunction(v));
        }
    }
    Err(Error::NonConvergence { iterations: max_iter })
}
