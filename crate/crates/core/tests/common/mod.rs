//! Reference computations that share no code with the library solvers.
#![allow(dead_code)]

use howard_lsc::{ModelSpec, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Solves `(I - alpha Q_f) v = C_f` by Gaussian elimination with partial
/// pivoting on a dense copy of the system.
pub fn solve_policy(m: &ModelSpec, f: &[usize]) -> Vec<f64> {
    let n = m.n_nodes();
    let mut a = vec![vec![0.0; n + 1]; n];
    for x in 0..n {
        let act = m.actions[x].iter().find(|a| a.id == f[x]).expect("admissible");
        a[x][x] += 1.0;
        for &(y, p) in &act.transitions {
            a[x][y] -= m.alpha * p;
        }
        a[x][n] = act.cost;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                let (top, bottom) = a.split_at_mut(row);
                for (t, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *t -= factor * p;
                }
            }
        }
    }
    let mut v = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = a[row][n];
        for k in row + 1..n {
            s -= a[row][k] * v[k];
        }
        v[row] = s / a[row][row];
    }
    v
}

/// Calls `visit` on every selector drawn from per-node choice lists.
pub fn for_each_selector(choices: &[Vec<usize>], mut visit: impl FnMut(&[usize])) {
    let n = choices.len();
    let mut pos = vec![0usize; n];
    let mut f: Vec<usize> = choices.iter().map(|c| c[0]).collect();
    loop {
        visit(&f);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            pos[i] += 1;
            if pos[i] < choices[i].len() {
                f[i] = choices[i][pos[i]];
                break;
            }
            pos[i] = 0;
            f[i] = choices[i][0];
            i += 1;
        }
    }
}

/// `V*` as the componentwise minimum of `V_f` over every stationary policy.
pub fn brute_force_optimum(m: &ModelSpec) -> Vec<f64> {
    let choices: Vec<Vec<usize>> = m.actions.iter().map(|l| l.iter().map(|a| a.id).collect()).collect();
    let mut best = vec![f64::INFINITY; m.n_nodes()];
    for_each_selector(&choices, |f| {
        for (b, v) in best.iter_mut().zip(solve_policy(m, f)) {
            *b = b.min(v);
        }
    });
    best
}

/// Straightforward `T u`, written from the definition.
pub fn naive_bellman(m: &ModelSpec, u: &[f64]) -> Vec<f64> {
    (0..m.n_nodes())
        .map(|x| {
            m.actions[x]
                .iter()
                .map(|a| a.cost + m.alpha * a.transitions.iter().map(|&(y, p)| p * u[y]).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn wnorm(u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    u.iter().zip(v).zip(w).map(|((a, b), w)| (a - b).abs() / w).fold(0.0, f64::max)
}

pub fn random_policy(m: &ModelSpec, rng: &mut impl Rng) -> Policy {
    Policy(
        m.actions
            .iter()
            .map(|l| l[rng.random_range(0..l.len())].id)
            .collect(),
    )
}

/// Random function on the nodes scaled by the weight.
pub fn random_function(m: &ModelSpec, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    m.weight
        .iter()
        .map(|w| rng.random_range(-scale..=scale) * w)
        .collect()
}

/// A random two-layer grid with `n` nodes: about a third are boundary nodes,
/// each listing up to four random interior nodes.
pub fn random_grid(n: usize, rng: &mut impl Rng) -> howard_lsc::StructuredGrid {
    use howard_lsc::Node;
    let boundary: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    let interior: Vec<usize> = (0..n).filter(|&i| !boundary[i]).collect();
    let nodes = (0..n)
        .map(|i| {
            if boundary[i] && !interior.is_empty() {
                let k = rng.random_range(1..=interior.len().min(4));
                let picks = rand::seq::index::sample(rng, interior.len(), k);
                let mut nb: Vec<usize> = picks.iter().map(|j| interior[j]).collect();
                nb.sort_unstable();
                Node::boundary(i, vec![i as f64], nb)
            } else {
                Node::interior(i, vec![i as f64])
            }
        })
        .collect();
    howard_lsc::StructuredGrid { nodes }
}
