//! Parametrized benchmark models.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Action, ModelSpec, Node, StructuredGrid};

/// Probability that the move-right action of the threshold model succeeds.
pub const MOVE_RIGHT_P: f64 = 0.9;

/// Per-cell decrease of the threshold model's base cost, as a multiple of
/// the jump.
pub const THRESHOLD_SLOPE: f64 = 0.8;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {p}")))
    }
}

/// A 1-D walk on `[0, 1]` whose running cost jumps up at `x = 0.5`.
///
/// Interior node `i < n_cells` sits at `i / n_cells`; node `n_cells` is a
/// boundary node at 0.5 whose neighbourhood is the two cells around it,
/// `lo = (n_cells - 1) / 2` and `hi = lo + 1`. Action 0 stays put. Action 1
/// moves one cell right with probability 0.9 and stays with probability 0.1;
/// at the last cell it stays.
///
/// The cost of cell `i` is `0.8 * jump * (n_cells - 1 - i)`, plus `jump`
/// from `hi` onwards. The boundary node is the point 0.5 approached from
/// the right: it has the cost and moves of `hi`.
///
/// Since the cost rises by `jump` but the per-cell base only falls by
/// `0.8 * jump`, staying put has a value that drops at the boundary node
/// when approached from the left, so its envelope is strictly smaller there.
/// For `n_cells >= 5` and `alpha >= 0.3` every policy value `v` satisfies
/// `T v^e <= v^e`.
pub fn make_threshold_model(n_cells: usize, jump: f64, alpha: f64) -> Result<ModelSpec> {
    if n_cells < 3 || n_cells % 2 == 0 {
        return Err(invalid(format!("n_cells must be odd and >= 3, got {n_cells}")));
    }
    if !(jump > 0.0 && jump.is_finite()) {
        return Err(invalid(format!("jump must be positive, got {jump}")));
    }
    check_alpha(alpha)?;

    let n = n_cells;
    let lo = (n - 1) / 2;
    let hi = lo + 1;
    let b = n;
    let slope = THRESHOLD_SLOPE * jump;
    let cost = |i: usize| slope * (n - 1 - i) as f64 + if i >= hi { jump } else { 0.0 };

    let mut nodes: Vec<Node> = (0..n).map(|i| Node::interior(i, vec![i as f64 / n as f64])).collect();
    nodes.push(Node::boundary(b, vec![0.5], vec![lo, hi]));

    let moves = |from: usize, cell: usize| -> Vec<Action> {
        let right = if cell + 1 < n {
            vec![(cell + 1, MOVE_RIGHT_P), (from, 1.0 - MOVE_RIGHT_P)]
        } else {
            vec![(from, 1.0)]
        };
        vec![
            Action::new(0, cost(cell), vec![(from, 1.0)]),
            Action::new(1, cost(cell), right),
        ]
    };
    let mut actions: Vec<Vec<Action>> = (0..n).map(|i| moves(i, i)).collect();
    actions.push(moves(b, hi));

    ModelSpec::new(StructuredGrid { nodes }, alpha, vec![1.0; n + 1], actions)
}

/// Inventory control with lost sales.
#[derive(Clone, Debug, PartialEq)]
pub struct InventoryParams {
    pub capacity: usize,
    /// `demand_probs[k]` is the probability of demand `k`.
    pub demand_probs: Vec<f64>,
    pub order_cost: f64,
    pub holding_cost: f64,
    /// Charged per unit of expected unmet demand.
    pub shortage_cost: f64,
    /// Largest order per period.
    pub max_order: usize,
    pub alpha: f64,
}

impl Default for InventoryParams {
    fn default() -> Self {
        InventoryParams {
            capacity: 20,
            demand_probs: vec![0.05, 0.4, 0.3, 0.15, 0.1],
            order_cost: 1.0,
            holding_cost: 0.1,
            shortage_cost: 3.0,
            max_order: 1,
            alpha: 0.9,
        }
    }
}

/// Stock levels `0..=capacity`. Ordering `a` units (at most `max_order`,
/// never past capacity) costs `order_cost * a + holding_cost * x` plus
/// `shortage_cost` per expected unit of lost demand, after which demand is
/// served from `x + a` and the excess is lost. `W(x) = 1 + x`.
///
/// From an empty store one order lifts `QW/W` to `1 + P(demand = 0)` (for
/// `max_order = 1`), which keeps the growth certificate passing whenever
/// `alpha * (1 + P(demand = 0)) < 1`.
pub fn make_inventory(p: &InventoryParams) -> Result<ModelSpec> {
    if p.capacity < 1 {
        return Err(invalid("capacity must be at least 1"));
    }
    if p.max_order < 1 {
        return Err(invalid("max_order must be at least 1"));
    }
    if p.demand_probs.is_empty()
        || p.demand_probs.iter().any(|&q| !(q >= 0.0 && q.is_finite()))
        || (p.demand_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(invalid("demand_probs must be a probability vector"));
    }
    check_nonneg("order_cost", p.order_cost)?;
    check_nonneg("holding_cost", p.holding_cost)?;
    check_nonneg("shortage_cost", p.shortage_cost)?;
    check_alpha(p.alpha)?;

    let total: f64 = p.demand_probs.iter().sum();
    let demand: Vec<f64> = p.demand_probs.iter().map(|q| q / total).collect();
    let cap = p.capacity;

    let actions = (0..=cap)
        .map(|x| {
            (0..=p.max_order.min(cap - x))
                .map(|a| {
                    let stock = x + a;
                    let mut row = vec![0.0; stock + 1];
                    let mut lost = 0.0;
                    for (d, &q) in demand.iter().enumerate() {
                        row[stock.saturating_sub(d)] += q;
                        lost += q * d.saturating_sub(stock) as f64;
                    }
                    let cost = p.order_cost * a as f64 + p.holding_cost * x as f64 + p.shortage_cost * lost;
                    let transitions = row.into_iter().enumerate().filter(|&(_, q)| q > 0.0).collect();
                    Action::new(a, cost, transitions)
                })
                .collect()
        })
        .collect();
    let weight = (0..=cap).map(|x| 1.0 + x as f64).collect();
    ModelSpec::new(StructuredGrid::plain(cap + 1), p.alpha, weight, actions)
}

/// Inventory model without shortage cost and with at most one unit ordered
/// per period.
pub fn make_inventory_model(
    capacity: usize,
    demand_probs: &[f64],
    order_cost: f64,
    holding_cost: f64,
    alpha: f64,
) -> Result<ModelSpec> {
    make_inventory(&InventoryParams {
        capacity,
        demand_probs: demand_probs.to_vec(),
        order_cost,
        holding_cost,
        shortage_cost: 0.0,
        max_order: 1,
        alpha,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueueingParams {
    pub buffer: usize,
    pub arrival_p: f64,
    pub service_p: f64,
    pub reject_cost: f64,
    pub hold_cost: f64,
    pub alpha: f64,
}

impl Default for QueueingParams {
    fn default() -> Self {
        QueueingParams {
            buffer: 20,
            arrival_p: 0.08,
            service_p: 0.2,
            reject_cost: 5.0,
            hold_cost: 1.0,
            alpha: 0.9,
        }
    }
}

/// Admission control for a single-server queue of length `0..=buffer`.
///
/// Per slot a job arrives with probability `arrival_p` and, if the queue is
/// non-empty, one job completes with probability `service_p`. Action 0
/// admits the arrival, action 1 rejects it; a full buffer can only reject.
/// The cost is `hold_cost * x + reject_cost * arrival_p * [reject]`, the
/// expected rejection charge. `W(x) = 1 + x`, so `beta = 1 + arrival_p`.
pub fn make_queueing(p: &QueueingParams) -> Result<ModelSpec> {
    if p.buffer < 1 {
        return Err(invalid("buffer must be at least 1"));
    }
    check_prob("arrival_p", p.arrival_p)?;
    check_prob("service_p", p.service_p)?;
    check_nonneg("reject_cost", p.reject_cost)?;
    check_nonneg("hold_cost", p.hold_cost)?;
    check_alpha(p.alpha)?;

    let (a, s) = (p.arrival_p, p.service_p);
    let actions = (0..=p.buffer)
        .map(|x| {
            let hold = p.hold_cost * x as f64;
            let reject_row = if x == 0 {
                vec![(0, 1.0)]
            } else {
                vec![(x - 1, s), (x, 1.0 - s)]
            };
            let reject = Action::new(1, hold + p.reject_cost * a, reject_row);
            if x == p.buffer {
                return vec![reject];
            }
            let admit_row = if x == 0 {
                vec![(0, 1.0 - a), (1, a)]
            } else {
                let up = a * (1.0 - s);
                let down = (1.0 - a) * s;
                vec![(x - 1, down), (x, 1.0 - up - down), (x + 1, up)]
            };
            vec![Action::new(0, hold, admit_row), reject]
        })
        .collect();
    let weight = (0..=p.buffer).map(|x| 1.0 + x as f64).collect();
    ModelSpec::new(StructuredGrid::plain(p.buffer + 1), p.alpha, weight, actions)
}

pub fn make_queueing_model(
    buffer: usize,
    arrival_p: f64,
    service_p: f64,
    reject_cost: f64,
    hold_cost: f64,
    alpha: f64,
) -> Result<ModelSpec> {
    make_queueing(&QueueingParams {
        buffer,
        arrival_p,
        service_p,
        reject_cost,
        hold_cost,
        alpha,
    })
}

/// Costs uniform on `[-1, 1]`; each row spreads random positive weights
/// over `sparsity` distinct random targets. `W = 1` and no envelope
/// structure.
pub fn make_random_finite_mdp(
    n_states: usize,
    n_actions: usize,
    sparsity: usize,
    alpha: f64,
    seed: u64,
) -> Result<ModelSpec> {
    if n_states < 1 || n_actions < 1 {
        return Err(invalid("n_states and n_actions must be at least 1"));
    }
    if sparsity < 1 || sparsity > n_states {
        return Err(invalid(format!("sparsity must lie in 1..={n_states}, got {sparsity}")));
    }
    check_alpha(alpha)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|id| {
                    let cost = rng.random_range(-1.0..=1.0);
                    let targets = sample(&mut rng, n_states, sparsity).into_vec();
                    let raw: Vec<f64> = targets.iter().map(|_| 1.0 - rng.random::<f64>()).collect();
                    let total: f64 = raw.iter().sum();
                    let row = targets.into_iter().zip(raw.iter().map(|w| w / total)).collect();
                    Action::new(id, cost, row)
                })
                .collect()
        })
        .collect();
    ModelSpec::new(StructuredGrid::plain(n_states), alpha, vec![1.0; n_states], actions)
}
