//! Lower semicontinuous envelope on a structured grid.
//!
//! A boundary node stands for a point approached by the interior cells in
//! its neighbourhood, so `u^e(x) = min(u(x), min over neighbours u(y))`.
//! Interior nodes are left untouched. Because neighbours are always interior
//! the operator is idempotent.

use crate::model::{GridFunction, StructuredGrid};

pub fn lsc_envelope(grid: &StructuredGrid, u: &[f64]) -> GridFunction {
    debug_assert_eq!(grid.len(), u.len());
    GridFunction(
        grid.nodes
            .iter()
            .zip(u)
            .map(|(node, &ux)| {
                node.envelope_neighbors
                    .iter()
                    .fold(ux, |acc, &y| acc.min(u[y]))
            })
            .collect(),
    )
}

/// `u(x) <= min over neighbours u(y) + tol` at every node with a
/// neighbourhood.
pub fn is_grid_lsc(grid: &StructuredGrid, u: &[f64], tol: f64) -> bool {
    grid.nodes.iter().zip(u).all(|(node, &ux)| {
        node.envelope_neighbors
            .iter()
            .all(|&y| ux <= u[y] + tol)
    })
}
