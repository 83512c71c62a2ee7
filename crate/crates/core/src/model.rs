//! Finite MDP instances on structured grids.
//!
//! A [`ModelSpec`] is the tuple of states, admissible action lists, costs,
//! sparse transition rows, discount factor and Lyapunov weight. States live
//! on a [`StructuredGrid`]: interior nodes carry no neighbourhood, boundary
//! nodes list the interior nodes that approach them. That neighbourhood data
//! is the only topology the envelope operator sees.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::ArgminSets;

pub type NodeId = usize;
pub type ActionId = usize;

/// Row sums must hit 1 within this absolute tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Interior,
    Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    /// Diagnostics only; never used by the solvers.
    pub coordinate: Vec<f64>,
    pub kind: NodeKind,
    pub envelope_neighbors: Vec<NodeId>,
}

impl Node {
    pub fn interior(id: NodeId, coordinate: Vec<f64>) -> Self {
        Node {
            id,
            coordinate,
            kind: NodeKind::Interior,
            envelope_neighbors: Vec::new(),
        }
    }

    pub fn boundary(id: NodeId, coordinate: Vec<f64>, neighbors: Vec<NodeId>) -> Self {
        Node {
            id,
            coordinate,
            kind: NodeKind::Boundary,
            envelope_neighbors: neighbors,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct StructuredGrid {
    pub nodes: Vec<Node>,
}

impl StructuredGrid {
    /// `n` interior nodes at integer coordinates and no boundary structure.
    pub fn plain(n: usize) -> Self {
        StructuredGrid {
            nodes: (0..n).map(|i| Node::interior(i, vec![i as f64])).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, x: NodeId) -> &[NodeId] {
        &self.nodes[x].envelope_neighbors
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Boundary)
    }

    /// True when no node has an envelope neighbourhood, i.e. the envelope is
    /// the identity.
    pub fn is_trivial(&self) -> bool {
        self.nodes.iter().all(|n| n.envelope_neighbors.is_empty())
    }
}

/// One admissible pair `(x, a)`: its cost and sparse transition row.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub id: ActionId,
    pub cost: f64,
    /// `(target node, probability)`, sorted by target in canonical form.
    pub transitions: Vec<(NodeId, f64)>,
}

impl Action {
    pub fn new(id: ActionId, cost: f64, mut transitions: Vec<(NodeId, f64)>) -> Self {
        transitions.sort_by_key(|&(y, _)| y);
        Action {
            id,
            cost,
            transitions,
        }
    }

    /// `sum_y u(y) Q(y | x, a)`, accumulated in row order.
    #[inline]
    pub fn expect(&self, u: &[f64]) -> f64 {
        self.transitions.iter().map(|&(y, p)| p * u[y]).sum()
    }
}

/// The MDP tuple plus discount factor and weight function.
///
/// Fields are public so malformed instances can be built and fed to
/// [`ModelSpec::validate`]; [`ModelSpec::new`] is the checked constructor.
/// Solvers assume a valid model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub grid: StructuredGrid,
    pub alpha: f64,
    pub weight: Vec<f64>,
    /// Admissible actions per node, sorted by action id.
    pub actions: Vec<Vec<Action>>,
}

impl ModelSpec {
    pub fn new(
        grid: StructuredGrid,
        alpha: f64,
        weight: Vec<f64>,
        actions: Vec<Vec<Action>>,
    ) -> Result<Self> {
        let mut m = ModelSpec {
            grid,
            alpha,
            weight,
            actions,
        };
        m.canonicalize();
        let violations = m.validate();
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    /// Sorts actions by id and transitions by target node.
    pub fn canonicalize(&mut self) {
        for list in &mut self.actions {
            list.sort_by_key(|a| a.id);
            for a in list.iter_mut() {
                a.transitions.sort_by_key(|&(y, _)| y);
            }
        }
        for node in &mut self.grid.nodes {
            node.envelope_neighbors.sort_unstable();
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn actions(&self, x: NodeId) -> &[Action] {
        &self.actions[x]
    }

    pub fn action(&self, x: NodeId, id: ActionId) -> Option<&Action> {
        self.actions[x].iter().find(|a| a.id == id)
    }

    /// Position of action `id` in node `x`'s list.
    pub fn action_index(&self, x: NodeId, id: ActionId) -> Option<usize> {
        self.actions[x].iter().position(|a| a.id == id)
    }

    /// Number of admissible pairs.
    pub fn pair_count(&self) -> usize {
        self.actions.iter().map(Vec::len).sum()
    }

    /// Number of stationary selectors, if it fits in a `u128`.
    pub fn policy_count(&self) -> Option<u128> {
        self.actions
            .iter()
            .try_fold(1u128, |acc, list| acc.checked_mul(list.len() as u128))
    }

    /// The selector picking the lowest action id everywhere.
    pub fn first_policy(&self) -> Policy {
        Policy(
            self.actions
                .iter()
                .map(|list| list.iter().map(|a| a.id).min().unwrap_or(0))
                .collect(),
        )
    }

    pub fn with_alpha(&self, alpha: f64) -> ModelSpec {
        ModelSpec {
            alpha,
            ..self.clone()
        }
    }

    /// Checks every structural invariant. Total: never panics, whatever the
    /// field contents.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.grid.len();

        if n == 0 {
            out.push(Violation::EmptyGrid);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            out.push(Violation::AlphaOutOfRange { alpha: self.alpha });
        }
        if self.weight.len() != n {
            out.push(Violation::LengthMismatch {
                field: "weight".into(),
                expected: n,
                found: self.weight.len(),
            });
        }
        if self.actions.len() != n {
            out.push(Violation::LengthMismatch {
                field: "actions".into(),
                expected: n,
                found: self.actions.len(),
            });
        }

        for (pos, node) in self.grid.nodes.iter().enumerate() {
            if node.id != pos {
                out.push(Violation::NodeIdMismatch {
                    position: pos,
                    id: node.id,
                });
            }
            if node.kind == NodeKind::Interior && !node.envelope_neighbors.is_empty() {
                out.push(Violation::InteriorHasNeighbors { node: pos });
            }
            let mut seen = Vec::with_capacity(node.envelope_neighbors.len());
            for &y in &node.envelope_neighbors {
                if seen.contains(&y) {
                    out.push(Violation::DuplicateNeighbor {
                        node: pos,
                        neighbor: y,
                    });
                    continue;
                }
                seen.push(y);
                if y == pos {
                    out.push(Violation::SelfNeighbor { node: pos });
                } else if y >= n {
                    out.push(Violation::NeighborOutOfRange {
                        node: pos,
                        neighbor: y,
                    });
                } else if !self.grid.nodes[y].envelope_neighbors.is_empty()
                    || self.grid.nodes[y].kind == NodeKind::Boundary
                {
                    out.push(Violation::TwoLayerViolation {
                        node: pos,
                        neighbor: y,
                    });
                }
            }
        }

        for (x, w) in self.weight.iter().enumerate() {
            // written so that NaN fails too
            if !(*w >= 1.0 && w.is_finite()) {
                out.push(Violation::WeightBelowOne { node: x, weight: *w });
            }
        }

        for (x, list) in self.actions.iter().enumerate() {
            if list.is_empty() {
                out.push(Violation::EmptyActionSet { node: x });
            }
            for (i, a) in list.iter().enumerate() {
                if list[..i].iter().any(|b| b.id == a.id) {
                    out.push(Violation::DuplicateAction {
                        node: x,
                        action: a.id,
                    });
                }
                if !a.cost.is_finite() {
                    out.push(Violation::NonFiniteCost {
                        node: x,
                        action: a.id,
                    });
                }
                let mut sum = 0.0;
                for (j, &(y, p)) in a.transitions.iter().enumerate() {
                    if y >= n {
                        out.push(Violation::TransitionOutOfRange {
                            node: x,
                            action: a.id,
                            target: y,
                        });
                    }
                    if a.transitions[..j].iter().any(|&(z, _)| z == y) {
                        out.push(Violation::DuplicateTransition {
                            node: x,
                            action: a.id,
                            target: y,
                        });
                    }
                    if !(p >= 0.0 && p.is_finite()) {
                        out.push(Violation::InvalidProbability {
                            node: x,
                            action: a.id,
                            target: y,
                            prob: p,
                        });
                    }
                    sum += p;
                }
                if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                    out.push(Violation::RowSum {
                        node: x,
                        action: a.id,
                        sum,
                    });
                }
            }
        }
        out
    }

    /// Replaces each `A(x)` by the given subset; everything else is kept.
    pub fn restrict_actions(&self, sets: &ArgminSets) -> Result<ModelSpec> {
        let n = self.n_nodes();
        if sets.sets.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: sets.sets.len(),
            });
        }
        let mut actions = Vec::with_capacity(n);
        for (x, keep) in sets.sets.iter().enumerate() {
            let list: Vec<Action> = self.actions[x]
                .iter()
                .filter(|a| keep.contains(&a.id))
                .cloned()
                .collect();
            if list.is_empty() {
                return Err(Error::EmptyRestriction { node: x });
            }
            if let Some(&bad) = keep.iter().find(|&&id| self.action(x, id).is_none()) {
                return Err(Error::InadmissiblePolicy {
                    node: x,
                    action: bad,
                });
            }
            actions.push(list);
        }
        Ok(ModelSpec {
            grid: self.grid.clone(),
            alpha: self.alpha,
            weight: self.weight.clone(),
            actions,
        })
    }

    /// Resolves a policy into per-node positions in the action lists.
    pub fn resolve(&self, f: &Policy) -> Result<Vec<usize>> {
        if f.len() != self.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: self.n_nodes(),
                found: f.len(),
            });
        }
        f.iter()
            .enumerate()
            .map(|(x, &id)| {
                self.action_index(x, id)
                    .ok_or(Error::InadmissiblePolicy { node: x, action: id })
            })
            .collect()
    }
}

/// A broken model invariant and where it broke.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "rule")]
pub enum Violation {
    EmptyGrid,
    AlphaOutOfRange { alpha: f64 },
    LengthMismatch { field: String, expected: usize, found: usize },
    NodeIdMismatch { position: usize, id: NodeId },
    InteriorHasNeighbors { node: NodeId },
    DuplicateNeighbor { node: NodeId, neighbor: NodeId },
    SelfNeighbor { node: NodeId },
    NeighborOutOfRange { node: NodeId, neighbor: NodeId },
    TwoLayerViolation { node: NodeId, neighbor: NodeId },
    WeightBelowOne { node: NodeId, weight: f64 },
    EmptyActionSet { node: NodeId },
    DuplicateAction { node: NodeId, action: ActionId },
    NonFiniteCost { node: NodeId, action: ActionId },
    TransitionOutOfRange { node: NodeId, action: ActionId, target: NodeId },
    DuplicateTransition { node: NodeId, action: ActionId, target: NodeId },
    InvalidProbability { node: NodeId, action: ActionId, target: NodeId, prob: f64 },
    RowSum { node: NodeId, action: ActionId, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyGrid => write!(f, "grid has no nodes"),
            AlphaOutOfRange { alpha } => write!(f, "alpha = {alpha} is not in (0, 1)"),
            LengthMismatch {
                field,
                expected,
                found,
            } => write!(f, "{field} has {found} entries, expected {expected}"),
            NodeIdMismatch { position, id } => {
                write!(f, "node at position {position} has id {id}")
            }
            InteriorHasNeighbors { node } => {
                write!(f, "interior node {node} has envelope neighbors")
            }
            DuplicateNeighbor { node, neighbor } => {
                write!(f, "node {node} lists neighbor {neighbor} twice")
            }
            SelfNeighbor { node } => write!(f, "node {node} lists itself as a neighbor"),
            NeighborOutOfRange { node, neighbor } => {
                write!(f, "node {node} has out-of-range neighbor {neighbor}")
            }
            TwoLayerViolation { node, neighbor } => write!(
                f,
                "neighbor {neighbor} of node {node} is not an interior node"
            ),
            WeightBelowOne { node, weight } => write!(f, "W({node}) = {weight} < 1"),
            EmptyActionSet { node } => write!(f, "A({node}) is empty"),
            DuplicateAction { node, action } => {
                write!(f, "action {action} listed twice at node {node}")
            }
            NonFiniteCost { node, action } => {
                write!(f, "C({node}, {action}) is not finite")
            }
            TransitionOutOfRange {
                node,
                action,
                target,
            } => write!(f, "Q(.|{node}, {action}) targets unknown node {target}"),
            DuplicateTransition {
                node,
                action,
                target,
            } => write!(f, "Q(.|{node}, {action}) lists node {target} twice"),
            InvalidProbability {
                node,
                action,
                target,
                prob,
            } => write!(f, "Q({target}|{node}, {action}) = {prob} is not a probability"),
            RowSum { node, action, sum } => {
                write!(f, "Q(.|{node}, {action}) sums to {sum}, not 1")
            }
        }
    }
}

/// A stationary selector: the action id chosen at each node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(pub Vec<ActionId>);

impl Policy {
    pub fn new(actions: Vec<ActionId>) -> Self {
        Policy(actions)
    }

    pub fn into_inner(self) -> Vec<ActionId> {
        self.0
    }
}

impl Deref for Policy {
    type Target = [ActionId];

    fn deref(&self) -> &[ActionId] {
        &self.0
    }
}

/// A real-valued function on the nodes of a grid.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridFunction(pub Vec<f64>);

impl GridFunction {
    pub fn zeros(n: usize) -> Self {
        GridFunction(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        GridFunction(vec![value; n])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        GridFunction(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `max_x |self(x) - other(x)|`.
    pub fn sup_dist(&self, other: &GridFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for GridFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for GridFunction {
    fn from(v: Vec<f64>) -> Self {
        GridFunction(v)
    }
}
