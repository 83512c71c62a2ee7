//! Value iteration, smoothed policy iteration, best-improvement policy
//! iteration and their diagnostics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::envelope::{is_grid_lsc, lsc_envelope};
use crate::error::{Error, Result};
use crate::lyapunov::{certify_growth, w_dist};
use crate::model::{ActionId, GridFunction, ModelSpec, NodeId, Policy};
use crate::operators::{
    apply_l, bellman_t, evaluate_direct, evaluate_iterative, EvalMethod, DEFAULT_EVAL_TOL,
};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_PI_MAX_ITER: usize = 10_000;
pub const DEFAULT_VI_MAX_ITER: usize = 1_000_000;
pub const DEFAULT_EPSILON: f64 = 1e-9;
/// Slack of the descent-chain check recorded in traces.
pub const CHAIN_TOL: f64 = 1e-10;
/// Slack of the `lsc_check` diagnostic on `T v_n^e`.
pub const LSC_TOL: f64 = 1e-10;
/// Rate ratios with a smaller denominator are not reported.
pub const RATIO_FLOOR: f64 = 1e-13;

fn gamma_of(m: &ModelSpec) -> Result<f64> {
    let c = certify_growth(m);
    if c.pass {
        Ok(c.gamma)
    } else {
        Err(Error::CertificateFailed { gamma: c.gamma })
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tolerance must be positive and finite, got {tol}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViResult {
    pub value: GridFunction,
    /// Greedy with respect to `value`.
    pub policy: Policy,
    pub iterations: usize,
}

/// Value iteration from `u = 0`, stopped once
/// `gamma / (1 - gamma) * ||u_k - u_{k-1}||_W <= tol`, which bounds the
/// W-norm distance of the result to `V*` by `tol`.
pub fn value_iteration(m: &ModelSpec, tol: f64) -> Result<ViResult> {
    value_iteration_with(m, tol, DEFAULT_VI_MAX_ITER)
}

pub fn value_iteration_with(m: &ModelSpec, tol: f64, max_iter: usize) -> Result<ViResult> {
    check_tol(tol)?;
    let gamma = gamma_of(m)?;
    let mut u = vec![0.0; m.n_nodes()];
    for k in 1..=max_iter {
        let (next, _) = bellman_t(m, &u);
        let step = w_dist(&next, &u, &m.weight);
        u = next.0;
        if gamma * step <= tol * (1.0 - gamma) {
            let (_, policy) = bellman_t(m, &u);
            return Ok(ViResult {
                value: GridFunction(u),
                policy,
                iterations: k,
            });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Policy iteration reached its fixed-point test.
    FixedPoint,
    MaxIter,
    /// Value iteration met its error bound.
    Tolerance,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::FixedPoint => "fixed_point",
            Termination::MaxIter => "max_iter",
            Termination::Tolerance => "tolerance",
        }
    }
}

/// One pass of evaluation, smoothing and improvement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiRecord {
    pub n: usize,
    /// `V_{f_n}`.
    pub v: GridFunction,
    pub v_env: GridFunction,
    pub t_v_env: GridFunction,
    /// `f_n`, the policy evaluated in this record.
    pub policy: Policy,
    /// `||v_n - V*||_W`, when an oracle was supplied.
    pub gap_to_opt: Option<f64>,
    /// `||v_{n+1} - V*||_W / ||v_n - V*||_W`, when defined.
    pub rate_ratio: Option<f64>,
    pub chain_ok: bool,
    pub lsc_check: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiTrace {
    pub records: Vec<PiRecord>,
    pub terminated_by: Termination,
    /// The `n` whose smoothed value passed the fixed-point test, if any.
    pub terminated_at: Option<usize>,
}

impl PiTrace {
    pub fn last(&self) -> &PiRecord {
        self.records.last().expect("traces are never empty")
    }

    /// `V_f` of the returned policy.
    pub fn final_value(&self) -> &GridFunction {
        &self.last().v
    }

    pub fn final_policy(&self) -> &Policy {
        &self.last().policy
    }

    /// Number of improvement steps taken.
    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }

    /// Fills `gap_to_opt` and `rate_ratio` against an oracle value.
    pub fn attach_oracle(&mut self, v_star: &[f64], weight: &[f64]) {
        let gaps: Vec<f64> = self
            .records
            .iter()
            .map(|r| w_dist(&r.v, v_star, weight))
            .collect();
        for (i, r) in self.records.iter_mut().enumerate() {
            r.gap_to_opt = Some(gaps[i]);
            r.rate_ratio = match gaps.get(i + 1) {
                Some(next) if gaps[i] > RATIO_FLOOR => Some(next / gaps[i]),
                _ => None,
            };
        }
    }

    /// One row per record: `n,wnorm_gap,rate_ratio,chain_ok,lsc_check,terminated_by`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,wnorm_gap,rate_ratio,chain_ok,lsc_check,terminated_by\n");
        let num = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"));
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                num(r.gap_to_opt),
                num(r.rate_ratio),
                r.chain_ok,
                r.lsc_check,
                self.terminated_by.as_str()
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiOptions {
    /// Fixed-point test threshold on `||v_n^e - v_{n+1}||_W`.
    pub tol: f64,
    pub max_iter: usize,
    pub eval: EvalMethod,
    /// Error target of iterative evaluation.
    pub eval_tol: f64,
    /// Optional `V*` used to fill the gap and ratio columns.
    pub v_star: Option<GridFunction>,
}

impl Default for PiOptions {
    fn default() -> Self {
        PiOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_PI_MAX_ITER,
            eval: EvalMethod::Auto,
            eval_tol: DEFAULT_EVAL_TOL,
            v_star: None,
        }
    }
}

struct Evaluator<'a> {
    m: &'a ModelSpec,
    method: EvalMethod,
    gamma: f64,
    tol: f64,
}

impl Evaluator<'_> {
    fn eval(&self, f: &Policy) -> Result<GridFunction> {
        let idx = self.m.resolve(f)?;
        match self.method {
            EvalMethod::Direct => evaluate_direct(self.m, &idx),
            _ => evaluate_iterative(self.m, &idx, self.gamma, self.tol, crate::operators::DEFAULT_EVAL_MAX_ITER),
        }
    }
}

fn run_pi<S>(m: &ModelSpec, f0: &Policy, opts: &PiOptions, smooth: S) -> Result<PiTrace>
where
    S: Fn(&[f64]) -> GridFunction,
{
    check_tol(opts.tol)?;
    let gamma = gamma_of(m)?;
    let ev = Evaluator {
        m,
        method: opts.eval.resolve(m.n_nodes()),
        gamma,
        tol: opts.eval_tol,
    };

    let mut records = Vec::new();
    let mut f = f0.clone();
    let mut v = ev.eval(&f)?;
    let mut terminated_by = Termination::MaxIter;
    let mut terminated_at = None;
    let mut stop_after_this = false;

    for n in 0.. {
        let v_env = smooth(&v);
        let (t_v_env, next_f) = bellman_t(m, &v_env);
        let lsc_check = is_grid_lsc(&m.grid, &t_v_env, LSC_TOL);
        records.push(PiRecord {
            n,
            v,
            v_env,
            t_v_env,
            policy: f,
            gap_to_opt: None,
            rate_ratio: None,
            chain_ok: true,
            lsc_check,
        });
        if stop_after_this || n >= opts.max_iter {
            break;
        }
        let next_v = ev.eval(&next_f)?;
        let prev = records.last().expect("just pushed");
        if w_dist(&prev.v_env, &next_v, &m.weight) <= opts.tol {
            terminated_by = Termination::FixedPoint;
            terminated_at = Some(n);
            stop_after_this = true;
        }
        f = next_f;
        v = next_v;
    }

    let mut trace = PiTrace {
        records,
        terminated_by,
        terminated_at,
    };
    for violation in check_descent_chain(&trace, CHAIN_TOL) {
        trace.records[violation.n].chain_ok = false;
    }
    if let Some(v_star) = &opts.v_star {
        trace.attach_oracle(v_star, &m.weight);
    }
    Ok(trace)
}

/// Evaluate, replace the value by its lsc envelope, improve greedily.
///
/// Stops with [`Termination::FixedPoint`] after computing `v_{n+1}` with
/// `||v_n^e - v_{n+1}||_W <= tol`; the record for `n + 1` is still filled in
/// and its policy `f_{n+1}` is the one returned. A run capped by
/// `max_iter` holds `max_iter + 1` records.
pub fn smoothed_policy_iteration(m: &ModelSpec, f0: &Policy, opts: &PiOptions) -> Result<(PiTrace, Policy)> {
    let trace = run_pi(m, f0, opts, |v| lsc_envelope(&m.grid, v))?;
    let f = trace.final_policy().clone();
    Ok((trace, f))
}

/// The same loop with the smoothing step replaced by the identity.
pub fn standard_policy_iteration(m: &ModelSpec, f0: &Policy, opts: &PiOptions) -> Result<(PiTrace, Policy)> {
    let trace = run_pi(m, f0, opts, |v| GridFunction(v.to_vec()))?;
    let f = trace.final_policy().clone();
    Ok((trace, f))
}

/// Near-minimising actions per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgminSets {
    pub sets: Vec<Vec<ActionId>>,
    pub epsilon: f64,
}

impl ArgminSets {
    /// Number of selectors drawn from the sets, if it fits in a `u128`.
    pub fn selector_count(&self) -> Option<u128> {
        self.sets
            .iter()
            .try_fold(1u128, |acc, s| acc.checked_mul(s.len() as u128))
    }

    pub fn all_singletons(&self) -> bool {
        self.sets.iter().all(|s| s.len() == 1)
    }
}

/// `{a : L u(x, a) <= T u(x) + epsilon * max(1, |T u(x)|)}` at each node.
/// `epsilon = f64::INFINITY` keeps every action.
pub fn extract_argmin_sets(m: &ModelSpec, u: &[f64], epsilon: f64) -> ArgminSets {
    let q = apply_l(m, u);
    let sets = q
        .0
        .iter()
        .zip(&m.actions)
        .map(|(row, list)| {
            let t = row.iter().copied().fold(f64::INFINITY, f64::min);
            let cut = t + epsilon * t.abs().max(1.0);
            list.iter()
                .zip(row)
                .filter(|&(_, &l)| l <= cut || l == t)
                .map(|(a, _)| a.id)
                .collect()
        })
        .collect();
    ArgminSets { sets, epsilon }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestOptions {
    pub epsilon: f64,
    /// Stopping threshold on `||w_n - w_{n+1}||_W`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BestOptions {
    fn default() -> Self {
        BestOptions {
            epsilon: DEFAULT_EPSILON,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_PI_MAX_ITER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestRecord {
    pub n: usize,
    pub w: GridFunction,
    pub policy: Policy,
    /// The sets `A_n(x)` that produced this record; absent for `n = 0`.
    pub sets: Option<ArgminSets>,
    /// Value-iteration sweeps spent on the restricted model.
    pub vi_iterations: usize,
    /// `w` and `-w` are both grid-lsc, the discrete form of continuity.
    /// Reported only.
    pub continuity_check: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestTrace {
    pub records: Vec<BestRecord>,
    pub terminated_by: Termination,
    pub terminated_at: Option<usize>,
}

impl BestTrace {
    pub fn last(&self) -> &BestRecord {
        self.records.last().expect("traces are never empty")
    }

    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }
}

fn grid_continuous(m: &ModelSpec, w: &[f64]) -> bool {
    let neg: Vec<f64> = w.iter().map(|x| -x).collect();
    is_grid_lsc(&m.grid, w, LSC_TOL) && is_grid_lsc(&m.grid, &neg, LSC_TOL)
}

/// Best-improvement policy iteration.
///
/// `w_0` is the envelope of `V_{f_0}`. Each step restricts the model to the
/// argmin sets of `L w_n`, solves the restricted model by value iteration
/// (at `tol / 10`) and then replaces the iterate by the exact value of the
/// greedy policy found there, so `w_{n+1} = V_{f_{n+1}}`.
pub fn best_improvement_pi(m: &ModelSpec, f0: &Policy, opts: &BestOptions) -> Result<(BestTrace, Policy)> {
    check_tol(opts.tol)?;
    if !(opts.epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {}", opts.epsilon)));
    }
    gamma_of(m)?;
    let idx0 = m.resolve(f0)?;
    let w0 = lsc_envelope(&m.grid, &evaluate_direct(m, &idx0)?);
    let mut records = vec![BestRecord {
        n: 0,
        continuity_check: grid_continuous(m, &w0),
        w: w0,
        policy: f0.clone(),
        sets: None,
        vi_iterations: 0,
    }];
    let mut terminated_by = Termination::MaxIter;
    let mut terminated_at = None;

    for n in 0..opts.max_iter {
        let w = &records[n].w;
        let sets = extract_argmin_sets(m, w, opts.epsilon);
        let restricted = m.restrict_actions(&sets)?;
        let vi = value_iteration(&restricted, opts.tol / 10.0)?;
        let idx = m.resolve(&vi.policy)?;
        let w_next = evaluate_direct(m, &idx)?;
        let done = w_dist(w, &w_next, &m.weight) <= opts.tol;
        records.push(BestRecord {
            n: n + 1,
            continuity_check: grid_continuous(m, &w_next),
            w: w_next,
            policy: vi.policy,
            sets: Some(sets),
            vi_iterations: vi.iterations,
        });
        if done {
            terminated_by = Termination::FixedPoint;
            terminated_at = Some(n);
            break;
        }
    }
    let f = records.last().expect("non-empty").policy.clone();
    Ok((
        BestTrace {
            records,
            terminated_by,
            terminated_at,
        },
        f,
    ))
}

/// Index of the inequality in `v_n >= v_n^e >= T v_n^e >= v_{n+1} >= v_{n+1}^e`
/// plus the cross-iteration `v_n >= v_{n+1}`:
/// 1: `v_n >= v_n^e`, 2: `v_n^e >= T v_n^e`, 3: `T v_n^e >= v_{n+1}`,
/// 4: `v_n >= v_{n+1}`, 5: `v_{n+1} >= v_{n+1}^e`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainViolation {
    pub n: usize,
    pub node: NodeId,
    pub inequality: u8,
    /// By how much the right-hand side exceeds the left-hand side.
    pub magnitude: f64,
}

/// All componentwise failures of the descent chain beyond `tol`.
///
/// Inequality 1 is only checked at `n = 0`; later it coincides with
/// inequality 5 of the previous step and is reported there.
pub fn check_descent_chain(trace: &PiTrace, tol: f64) -> Vec<ChainViolation> {
    let mut out = Vec::new();
    let mut compare = |n: usize, inequality: u8, lhs: &[f64], rhs: &[f64]| {
        for (node, (a, b)) in lhs.iter().zip(rhs).enumerate() {
            let excess = b - a;
            if !(excess <= tol) {
                out.push(ChainViolation {
                    n,
                    node,
                    inequality,
                    magnitude: excess,
                });
            }
        }
    };
    for (i, r) in trace.records.iter().enumerate() {
        if i == 0 {
            compare(r.n, 1, &r.v, &r.v_env);
        }
        compare(r.n, 2, &r.v_env, &r.t_v_env);
        if let Some(next) = trace.records.get(i + 1) {
            compare(r.n, 3, &r.t_v_env, &next.v);
            compare(r.n, 4, &r.v, &next.v);
            compare(r.n, 5, &next.v, &next.v_env);
        }
    }
    out.sort_by_key(|v| (v.n, v.inequality, v.node));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SublevelErrors {
    pub lambda: f64,
    /// Nodes with `W(x) <= lambda`.
    pub size: usize,
    /// `max over the sublevel set of |v_n - V*|`, per record.
    pub errors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub gamma: f64,
    /// `||v_0 - V*||_W`.
    pub l_const: f64,
    pub errors: Vec<f64>,
    pub sup_errors: Vec<f64>,
    /// Ratio of consecutive errors; `None` where the denominator is at the
    /// oracle's noise level.
    pub ratios: Vec<Option<f64>>,
    pub max_ratio: Option<f64>,
    /// Every ratio is within `gamma + slack`.
    pub ratio_ok: bool,
    /// The last error is within `L gamma^n + slack`.
    pub final_ok: bool,
    pub sublevel: Vec<SublevelErrors>,
}

/// Checks the linear rate of a trace against an oracle `V*` that is within
/// `oracle_tol` of the true fixed point in W-norm.
///
/// A ratio is reported only when its denominator exceeds
/// `max(1e-13, (1 + gamma) * oracle_tol / 1e-6)`, which keeps the oracle's
/// own error from inflating it by more than `1e-6`. Reported ratios must be
/// at most `gamma + 1e-8 + (1 + gamma) * oracle_tol / denominator`.
pub fn rate_report(
    trace: &PiTrace,
    v_star: &[f64],
    m: &ModelSpec,
    oracle_tol: f64,
    lambdas: &[f64],
) -> RateReport {
    let gamma = certify_growth(m).gamma;
    let errors: Vec<f64> = trace
        .records
        .iter()
        .map(|r| w_dist(&r.v, v_star, &m.weight))
        .collect();
    let sup_errors: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.v.iter().zip(v_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let noise = (1.0 + gamma) * oracle_tol;
    let floor = RATIO_FLOOR.max(noise / 1e-6);
    let mut ratio_ok = true;
    let ratios: Vec<Option<f64>> = errors
        .windows(2)
        .map(|w| {
            if w[0] > floor {
                let r = w[1] / w[0];
                if r > gamma + 1e-8 + noise / w[0] {
                    ratio_ok = false;
                }
                Some(r)
            } else {
                None
            }
        })
        .collect();
    let max_ratio = ratios.iter().flatten().copied().reduce(f64::max);
    let l_const = errors[0];
    let n = errors.len() - 1;
    let final_ok = errors[n] <= l_const * gamma.powi(n as i32) + 1e-8 + 2.0 * oracle_tol;
    let sublevel = lambdas
        .iter()
        .map(|&lambda| {
            let members: Vec<usize> = (0..m.n_nodes()).filter(|&x| m.weight[x] <= lambda).collect();
            SublevelErrors {
                lambda,
                size: members.len(),
                errors: trace
                    .records
                    .iter()
                    .map(|r| {
                        members
                            .iter()
                            .map(|&x| (r.v[x] - v_star[x]).abs())
                            .fold(0.0, f64::max)
                    })
                    .collect(),
            }
        })
        .collect();
    RateReport {
        gamma,
        l_const,
        errors,
        sup_errors,
        ratios,
        max_ratio,
        ratio_ok,
        final_ok,
        sublevel,
    }
}
