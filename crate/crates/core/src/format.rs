//! JSON model files.
//!
//! ```json
//! {"alpha": 0.9,
//!  "nodes": [{"id": 0, "coordinate": [0.0], "kind": "interior",
//!             "envelope_neighbors": [], "weight": 1.0,
//!             "actions": [{"id": 0, "cost": 1.0, "transitions": [[0, 1.0]]}]}]}
//! ```
//!
//! Transition rows may also be dense arrays of length N; zero entries are
//! dropped on load. Saving always writes the canonical sparse form with
//! nodes, actions and transitions sorted by id.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{Action, ActionId, ModelSpec, Node, NodeId, NodeKind, Policy, StructuredGrid};

/// Keys that look like user-asserted growth constants. They are ignored.
const ASSERTED_CONSTANT_KEYS: [&str; 4] = ["M", "beta", "gamma", "certificate"];

#[derive(Serialize, Deserialize)]
struct ModelFile {
    alpha: f64,
    nodes: Vec<NodeRecord>,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    #[serde(default)]
    coordinate: Vec<f64>,
    kind: NodeKind,
    #[serde(default)]
    envelope_neighbors: Vec<NodeId>,
    weight: f64,
    actions: Vec<ActionRecord>,
}

#[derive(Serialize, Deserialize)]
struct ActionRecord {
    id: ActionId,
    cost: f64,
    transitions: Row,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Row {
    Sparse(Vec<(NodeId, f64)>),
    Dense(Vec<f64>),
}

fn classify(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => Error::Schema(e.to_string()),
        Category::Io => Error::Io(e.into()),
        Category::Syntax | Category::Eof => Error::Parse(e.to_string()),
    }
}

/// Parses and validates a model, returning warnings alongside it.
pub fn load_model_with_warnings<R: Read>(source: R) -> Result<(ModelSpec, Vec<String>)> {
    let file: ModelFile = serde_json::from_reader(source).map_err(classify)?;
    let mut warnings = Vec::new();
    for key in file.extra.keys() {
        if ASSERTED_CONSTANT_KEYS.contains(&key.as_str()) {
            warnings.push(format!(
                "ignoring user-supplied '{key}': growth constants are always recomputed"
            ));
        } else {
            warnings.push(format!("ignoring unknown top-level key '{key}'"));
        }
    }

    let mut records = file.nodes;
    records.sort_by_key(|r| r.id);
    let n = records.len();

    let mut nodes = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    for r in records {
        let mut list = Vec::with_capacity(r.actions.len());
        for a in r.actions {
            let transitions = match a.transitions {
                Row::Sparse(row) => row,
                Row::Dense(row) => {
                    if row.len() != n {
                        return Err(Error::Schema(format!(
                            "dense transition row for ({}, {}) has {} entries, expected {n}",
                            r.id,
                            a.id,
                            row.len()
                        )));
                    }
                    row.into_iter()
                        .enumerate()
                        .filter(|&(_, p)| p != 0.0)
                        .collect()
                }
            };
            list.push(Action::new(a.id, a.cost, transitions));
        }
        nodes.push(Node {
            id: r.id,
            coordinate: r.coordinate,
            kind: r.kind,
            envelope_neighbors: r.envelope_neighbors,
        });
        weight.push(r.weight);
        actions.push(list);
    }

    let m = ModelSpec::new(StructuredGrid { nodes }, file.alpha, weight, actions)?;
    Ok((m, warnings))
}

/// Parses and validates a model; warnings go to the `log` facade.
pub fn load_model<R: Read>(source: R) -> Result<ModelSpec> {
    let (m, warnings) = load_model_with_warnings(source)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(m)
}

pub fn model_from_str(s: &str) -> Result<ModelSpec> {
    load_model(s.as_bytes())
}

fn to_file(m: &ModelSpec) -> ModelFile {
    let mut canon = m.clone();
    canon.canonicalize();
    let mut nodes: Vec<NodeRecord> = canon
        .grid
        .nodes
        .iter()
        .enumerate()
        .map(|(pos, node)| NodeRecord {
            id: node.id,
            coordinate: node.coordinate.clone(),
            kind: node.kind,
            envelope_neighbors: node.envelope_neighbors.clone(),
            weight: canon.weight.get(pos).copied().unwrap_or(f64::NAN),
            actions: canon
                .actions
                .get(pos)
                .map(|list| {
                    list.iter()
                        .map(|a| ActionRecord {
                            id: a.id,
                            cost: a.cost,
                            transitions: Row::Sparse(a.transitions.clone()),
                        })
                        .collect()
                })
                .unwrap_or_default(),
        })
        .collect();
    nodes.sort_by_key(|r| r.id);
    ModelFile {
        alpha: canon.alpha,
        nodes,
        extra: BTreeMap::new(),
    }
}

/// Writes the canonical JSON form.
pub fn save_model<W: Write>(m: &ModelSpec, mut sink: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut sink, &to_file(m)).map_err(classify)?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn model_to_string(m: &ModelSpec) -> String {
    let mut buf = Vec::new();
    save_model(m, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Policy files are a JSON array of action ids indexed by node id.
pub fn load_policy<R: Read>(source: R) -> Result<Policy> {
    serde_json::from_reader(source).map_err(classify)
}

pub fn policy_to_string(f: &Policy) -> String {
    serde_json::to_string(f).expect("policy serializes")
}
