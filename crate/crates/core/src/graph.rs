//! Weighted digraph topologies and directed spanning trees.
//!
//! Vertex ids are zero-based. The *external* id of a vertex is its index in
//! the adjacency matrix; the *internal* id is its position after the tree's
//! renumbering, under which every parent has a larger id than its children
//! and the root sits at `N - 1`. Fundamental edge `e` is the tree edge that
//! enters the vertex with internal id `e`, so edges are indexed `0..N-1`.
//!
//! Matrix-level functions ([`incidence_matrix`], [`gamma_vector`],
//! [`info_flow_matrix`]) take and return internal ids.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which neighbour information a protocol uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolMode {
    /// Every agent combines all of its in-neighbours.
    FullNeighbor,
    /// Non-root agents use only their tree parent; the root applies no input.
    DstOnly,
    /// As `DstOnly`, plus root feedback from one in-neighbour of the root.
    DstWithRootFeedback,
}

/// Weighted directed communication graph. `w[(i, j)] > 0` means agent `i`
/// receives information from agent `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    w: DMatrix<f64>,
}

impl Topology {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::InvalidTopology(format!(
                "adjacency matrix is {}x{}, expected square",
                w.nrows(),
                w.ncols()
            )));
        }
        if w.nrows() < 2 {
            return Err(Error::InvalidTopology("at least two agents required".into()));
        }
        for i in 0..w.nrows() {
            for j in 0..w.ncols() {
                let v = w[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidTopology(format!(
                        "weight w[{},{}] = {v} must be finite and non-negative",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if w[(i, i)] != 0.0 {
                return Err(Error::InvalidTopology(format!("self-loop at vertex {}", i + 1)));
            }
        }
        Ok(Self { w })
    }

    pub fn from_row_major(agents: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != agents * agents {
            return Err(Error::InvalidTopology(format!(
                "expected {} weights for {agents} agents, got {}",
                agents * agents,
                weights.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(agents, agents, weights))
    }

    pub fn agents(&self) -> usize {
        self.w.nrows()
    }

    /// `w_ij`, the weight with which agent `i` hears agent `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Agents that `i` receives from, ascending.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.agents()).filter(|&j| self.w[(i, j)] > 0.0).collect()
    }

    /// Agents that receive from `j`, ascending.
    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        (0..self.agents()).filter(|&i| self.w[(i, j)] > 0.0).collect()
    }

    fn reachable_from(&self, root: usize) -> Vec<bool> {
        let mut seen = vec![false; self.agents()];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            for u in self.out_neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }
}

/// All vertices from which every other vertex is reachable.
pub fn find_roots(topo: &Topology) -> Vec<usize> {
    (0..topo.agents())
        .filter(|&r| topo.reachable_from(r).iter().all(|&s| s))
        .collect()
}

/// Directed spanning tree with its renumbering permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    root: usize,
    parent: Vec<Option<usize>>,
    weight: Vec<f64>,
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl SpanningTree {
    /// Builds a tree from an explicit parent map (external ids).
    ///
    /// `weight[i]` is `w_{i,k_i}`; the root's entry is ignored.
    pub fn from_parents(root: usize, parent: Vec<Option<usize>>, weight: Vec<f64>) -> Result<Self> {
        let n = parent.len();
        let bad = |msg: String| Err(Error::InvalidTopology(msg));
        if n < 2 || weight.len() != n || root >= n {
            return bad(format!("inconsistent tree sizes (N = {n}, root = {root})"));
        }
        for (v, p) in parent.iter().enumerate() {
            match (v == root, p) {
                (true, Some(_)) => return bad(format!("root {} has a parent", root + 1)),
                (false, None) => return bad(format!("vertex {} has no parent", v + 1)),
                (false, Some(p)) if *p >= n || *p == v => return bad(format!("vertex {} has invalid parent", v + 1)),
                (false, Some(_)) if !(weight[v].is_finite() && weight[v] > 0.0) => {
                    return bad(format!("tree edge into {} has non-positive weight", v + 1))
                }
                _ => {}
            }
        }
        let mut weight = weight;
        weight[root] = 0.0;
        let mut tree = Self {
            root,
            parent,
            weight,
            perm: Vec::new(),
            inv: Vec::new(),
        };
        let order = tree.bfs_order();
        if order.len() != n {
            return bad("parent map contains a cycle".into());
        }
        tree.assign_canonical_numbering(&order);
        Ok(tree)
    }

    pub fn agents(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    /// `w_{v,k_v}`; zero for the root.
    pub fn edge_weight(&self, v: usize) -> f64 {
        self.weight[v]
    }

    /// External id to internal id.
    pub fn internal(&self, v: usize) -> usize {
        self.perm[v]
    }

    /// Internal id to external id.
    pub fn external(&self, v: usize) -> usize {
        self.inv[v]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn internal_parent(&self, v: usize) -> Option<usize> {
        self.parent[self.inv[v]].map(|p| self.perm[p])
    }

    pub fn internal_weight(&self, v: usize) -> f64 {
        self.weight[self.inv[v]]
    }

    /// Children of `v`, ascending external id.
    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.agents()).filter(|&c| self.parent[c] == Some(v)).collect()
    }

    /// Fundamental edges `(parent, child)` in external ids, ordered by edge index.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.agents() - 1)
            .map(|e| {
                let child = self.inv[e];
                (self.parent[child].expect("non-root"), child)
            })
            .collect()
    }

    /// Tree path from the root down to `v`, excluding the root (external ids).
    pub fn path_from_root(&self, v: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            path.push(cur);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn depth(&self, v: usize) -> usize {
        self.path_from_root(v).len()
    }

    /// Breadth-first order from the root, children visited by ascending id.
    pub fn bfs_order(&self) -> Vec<usize> {
        let n = self.agents();
        let mut kids = vec![Vec::new(); n];
        for v in 0..n {
            if let Some(p) = self.parent[v] {
                kids[p].push(v);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([self.root]);
        let mut seen = vec![false; n];
        seen[self.root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &kids[v] {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        order
    }

    /// True when every parent has a larger internal id and the root is last.
    pub fn is_conforming(&self) -> bool {
        let n = self.agents();
        self.perm[self.root] == n - 1 && (0..n - 1).all(|v| self.internal_parent(v).is_some_and(|p| p > v))
    }

    fn assign_canonical_numbering(&mut self, bfs: &[usize]) {
        let n = self.agents();
        let identity_ok = self.root == n - 1 && (0..n).all(|v| v == self.root || self.parent[v].is_some_and(|p| p > v));
        self.inv = if identity_ok {
            (0..n).collect()
        } else {
            bfs.iter().rev().copied().collect()
        };
        self.perm = vec![0; n];
        for (internal, &ext) in self.inv.iter().enumerate() {
            self.perm[ext] = internal;
        }
    }

    /// Checks that every tree edge is an edge of `topo` with the same weight.
    pub fn check_against(&self, topo: &Topology) -> Result<()> {
        if topo.agents() != self.agents() {
            return Err(Error::DimensionMismatch(format!(
                "topology has {} agents, tree has {}",
                topo.agents(),
                self.agents()
            )));
        }
        for (p, c) in self.edges() {
            if topo.weight(c, p) != self.weight[c] {
                return Err(Error::DimensionMismatch(format!(
                    "tree edge ({}, {}) does not match the topology weight",
                    p + 1,
                    c + 1
                )));
            }
        }
        Ok(())
    }
}

/// Breadth-first DST of `topo`, ties broken by ascending vertex id.
///
/// Without an explicit root the smallest id returned by [`find_roots`] is used.
pub fn extract_dst(topo: &Topology, root: Option<usize>) -> Result<SpanningTree> {
    let n = topo.agents();
    let root = match root {
        Some(r) if r >= n => return Err(Error::InvalidTopology(format!("root {} out of range", r + 1))),
        Some(r) => r,
        None => *find_roots(topo).first().ok_or(Error::NoSpanningTree { root: None })?,
    };
    let mut parent = vec![None; n];
    let mut weight = vec![0.0; n];
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for u in topo.out_neighbors(v) {
            if !seen[u] {
                seen[u] = true;
                parent[u] = Some(v);
                weight[u] = topo.weight(u, v);
                queue.push_back(u);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::NoSpanningTree { root: Some(root) });
    }
    SpanningTree::from_parents(root, parent, weight)
}

/// Recomputes the internal numbering: identity when the external ids already
/// put parents after children with the root last, otherwise the reversed
/// breadth-first order from the root.
pub fn renumber(tree: &SpanningTree) -> SpanningTree {
    let mut out = tree.clone();
    let order = out.bfs_order();
    out.assign_canonical_numbering(&order);
    out
}

/// Node-by-edge incidence matrix of the tree (internal ids).
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    pub p0: DMatrix<i8>,
}

impl IncidenceMatrix {
    pub fn to_f64(&self) -> DMatrix<f64> {
        self.p0.map(f64::from)
    }

    /// `p_i`: row `i` of `P0`, as a column vector of length `N - 1`.
    pub fn p(&self, i: usize) -> DVector<f64> {
        DVector::from_iterator(self.p0.ncols(), self.p0.row(i).iter().map(|&v| f64::from(v)))
    }
}

pub fn incidence_matrix(tree: &SpanningTree) -> IncidenceMatrix {
    let n = tree.agents();
    let mut p0 = DMatrix::<i8>::zeros(n, n - 1);
    for e in 0..n - 1 {
        p0[(e, e)] = -1;
        let k = tree.internal_parent(e).expect("edge child has a parent");
        p0[(k, e)] = 1;
    }
    IncidenceMatrix { p0 }
}

fn ancestors(tree: &SpanningTree, v: usize) -> Vec<usize> {
    let mut chain = vec![v];
    let mut cur = v;
    while let Some(p) = tree.internal_parent(cur) {
        chain.push(p);
        cur = p;
    }
    chain
}

/// `gamma_ji` with `x_j - x_i = (gamma_ji ⊗ I_n) y` (internal ids).
pub fn gamma_vector(tree: &SpanningTree, j: usize, i: usize) -> Vec<i8> {
    let n = tree.agents();
    let up_i = ancestors(tree, i);
    let up_j = ancestors(tree, j);
    let lca = *up_i
        .iter()
        .find(|v| up_j.contains(v))
        .expect("root is a common ancestor");
    let mut g = vec![0i8; n - 1];
    for &v in up_i.iter().take_while(|&&v| v != lca) {
        g[v] += 1;
    }
    for &v in up_j.iter().take_while(|&&v| v != lca) {
        g[v] -= 1;
    }
    g
}

/// Information-flow matrix `Gamma_i` together with the agent's weight row.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoFlowMatrix {
    /// Internal id of the agent.
    pub agent: usize,
    /// `N x (N-1)`, rows indexed by internal neighbour id.
    pub gamma: DMatrix<i8>,
    /// `w_i` permuted into internal order.
    pub w_row: RowDVector<f64>,
}

impl InfoFlowMatrix {
    /// `w_i Gamma_i`.
    pub fn weighted(&self) -> RowDVector<f64> {
        &self.w_row * self.gamma.map(f64::from)
    }
}

/// Builds `Gamma_i` for agent `i` (internal id).
///
/// `DstWithRootFeedback` behaves as `DstOnly` here; the root's single
/// feedback row is added by [`root_feedback_flow`].
pub fn info_flow_matrix(topo: &Topology, tree: &SpanningTree, i: usize, mode: ProtocolMode) -> InfoFlowMatrix {
    let n = tree.agents();
    let ext_i = tree.external(i);
    let w_row = RowDVector::from_iterator(n, (0..n).map(|j| topo.weight(ext_i, tree.external(j))));
    let mut gamma = DMatrix::<i8>::zeros(n, n - 1);
    match mode {
        ProtocolMode::FullNeighbor => {
            for ext_j in topo.in_neighbors(ext_i) {
                let j = tree.internal(ext_j);
                let g = gamma_vector(tree, j, i);
                for (e, v) in g.into_iter().enumerate() {
                    gamma[(j, e)] = v;
                }
            }
        }
        ProtocolMode::DstOnly | ProtocolMode::DstWithRootFeedback => {
            if let Some(k) = tree.internal_parent(i) {
                gamma[(k, i)] = 1;
            }
        }
    }
    InfoFlowMatrix { agent: i, gamma, w_row }
}

/// `Gamma_N` of the root when it feeds back the difference to its in-neighbour
/// `neighbor` (external id): one row, `gamma_{n_l, N}`.
pub fn root_feedback_flow(topo: &Topology, tree: &SpanningTree, neighbor: usize) -> Result<InfoFlowMatrix> {
    let root = tree.root();
    if neighbor >= tree.agents() || topo.weight(root, neighbor) <= 0.0 {
        return Err(Error::InvalidRootPath(format!(
            "vertex {} is not an in-neighbour of root {}",
            neighbor + 1,
            root + 1
        )));
    }
    let mut flow = info_flow_matrix(topo, tree, tree.internal(root), ProtocolMode::DstOnly);
    let nl = tree.internal(neighbor);
    for (e, v) in gamma_vector(tree, nl, tree.internal(root)).into_iter().enumerate() {
        flow.gamma[(nl, e)] = v;
    }
    Ok(flow)
}
