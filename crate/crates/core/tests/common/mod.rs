#![allow(dead_code)]

use consensus_forge::{AgentDynamics, SpanningTree, Topology};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rotation() -> AgentDynamics {
    AgentDynamics::new(nalgebra::dmatrix![0.0, 1.0; -1.0, 0.0], nalgebra::dmatrix![1.0; 1.0]).unwrap()
}

pub fn matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-2.0..2.0))
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Random parent map on `n` vertices with a random root and random weights.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> SpanningTree {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut parent = vec![None; n];
    let mut weight = vec![0.0; n];
    for k in 1..n {
        parent[order[k]] = Some(order[rng.gen_range(0..k)]);
        weight[order[k]] = rng.gen_range(0.5..2.0);
    }
    SpanningTree::from_parents(order[0], parent, weight).unwrap()
}

/// Topology containing `tree` plus extra random edges (never into the root
/// when `isolated_root`).
pub fn topology_with(rng: &mut ChaCha8Rng, tree: &SpanningTree, extra: f64, isolated_root: bool) -> Topology {
    let n = tree.agents();
    let mut w = DMatrix::zeros(n, n);
    for v in 0..n {
        if let Some(p) = tree.parent(v) {
            w[(v, p)] = tree.edge_weight(v);
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && w[(i, j)] == 0.0 && rng.gen_bool(extra) && !(isolated_root && i == tree.root()) {
                w[(i, j)] = rng.gen_range(0.5..2.0);
            }
        }
    }
    Topology::new(w).unwrap()
}

/// Random digraph with edge probability `p`.
pub fn random_topology(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Topology {
    let w = DMatrix::from_fn(n, n, |i, j| if i != j && rng.gen_bool(p) { 1.0 } else { 0.0 });
    Topology::new(w).unwrap()
}

pub fn dynamics(rng: &mut ChaCha8Rng, n: usize, m: usize) -> AgentDynamics {
    AgentDynamics::new(matrix(rng, n, n), matrix(rng, n, m)).unwrap()
}
