//! Fundamental-edge coordinates and closed-loop assembly.
//!
//! Edge state `y_e = x_{k_e} - x_e` for every fundamental edge `e` (indexed by
//! the internal id of its child). The transformed system is
//! `A* = I ⊗ A`, `B_i = p_i ⊗ B`, `C_i = (w_i Gamma_i) ⊗ I_n`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{
    incidence_matrix, info_flow_matrix, root_feedback_flow, IncidenceMatrix, InfoFlowMatrix, ProtocolMode,
    SpanningTree, Topology,
};

/// Shared agent model `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDynamics {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl AgentDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, expected non-empty square",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B is {}x{}, expected {}xm with m >= 1",
                b.nrows(),
                b.ncols(),
                a.nrows()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("A and B must be finite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// Per-agent feedback gains, indexed by external agent id.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k: Vec<DMatrix<f64>>,
    pub mode: ProtocolMode,
    /// Tree path `n_1, ..., n_l` from the root to its feedback neighbour.
    pub root_path: Option<Vec<usize>>,
    /// `w_{N, n_l}`.
    pub root_neighbor_weight: Option<f64>,
}

impl GainSet {
    pub fn new(k: Vec<DMatrix<f64>>, mode: ProtocolMode) -> Self {
        Self {
            k,
            mode,
            root_path: None,
            root_neighbor_weight: None,
        }
    }

    pub fn zeros(agents: usize, dynamics: &AgentDynamics, mode: ProtocolMode) -> Self {
        Self::new(vec![DMatrix::zeros(dynamics.m(), dynamics.n()); agents], mode)
    }

    /// Root-feedback gains where the root listens to `neighbor` (external id).
    pub fn with_root_feedback(
        k: Vec<DMatrix<f64>>,
        topo: &Topology,
        tree: &SpanningTree,
        neighbor: usize,
    ) -> Result<Self> {
        let root = tree.root();
        if neighbor >= tree.agents() || topo.weight(root, neighbor) <= 0.0 {
            return Err(Error::InvalidRootPath(format!(
                "vertex {} is not an in-neighbour of root {}",
                neighbor + 1,
                root + 1
            )));
        }
        Ok(Self {
            k,
            mode: ProtocolMode::DstWithRootFeedback,
            root_path: Some(tree.path_from_root(neighbor)),
            root_neighbor_weight: Some(topo.weight(root, neighbor)),
        })
    }

    pub fn root_neighbor(&self) -> Option<usize> {
        self.root_path.as_ref().and_then(|p| p.last().copied())
    }

    pub fn validate(&self, dynamics: &AgentDynamics, agents: usize) -> Result<()> {
        if self.k.len() != agents {
            return Err(Error::DimensionMismatch(format!(
                "{} gain matrices for {agents} agents",
                self.k.len()
            )));
        }
        for (i, k) in self.k.iter().enumerate() {
            if k.shape() != (dynamics.m(), dynamics.n()) {
                return Err(Error::DimensionMismatch(format!(
                    "K_{} is {}x{}, expected {}x{}",
                    i + 1,
                    k.nrows(),
                    k.ncols(),
                    dynamics.m(),
                    dynamics.n()
                )));
            }
            if k.iter().any(|v| !v.is_finite()) {
                return Err(Error::DimensionMismatch(format!("K_{} is not finite", i + 1)));
            }
        }
        let has_path = self.root_path.is_some();
        match (self.mode, has_path) {
            (ProtocolMode::DstWithRootFeedback, false) => Err(Error::MissingRootPath),
            (ProtocolMode::DstWithRootFeedback, true) => Ok(()),
            (_, true) => Err(Error::ModeMismatch(
                "root path given for a protocol without root feedback".into(),
            )),
            _ => Ok(()),
        }
    }

    fn check_root_path(&self, tree: &SpanningTree) -> Result<(&[usize], f64)> {
        let path = self.root_path.as_deref().ok_or(Error::MissingRootPath)?;
        let weight = self.root_neighbor_weight.ok_or(Error::MissingRootPath)?;
        let Some(&last) = path.last() else {
            return Err(Error::InvalidRootPath("empty path".into()));
        };
        if last >= tree.agents() || tree.path_from_root(last) != path {
            return Err(Error::InvalidRootPath(format!(
                "{:?} is not a tree path from the root",
                path.iter().map(|v| v + 1).collect::<Vec<_>>()
            )));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidRootPath("root neighbour weight must be positive".into()));
        }
        Ok((path, weight))
    }
}

/// The decentralized output-feedback form `(C*, A*, B*)`, in internal order.
#[derive(Debug, Clone)]
pub struct TransformedSystem {
    pub mode: ProtocolMode,
    pub n: usize,
    pub m: usize,
    pub a_star: DMatrix<f64>,
    /// Agent input matrix `B`.
    pub input: DMatrix<f64>,
    /// `B_i = p_i ⊗ B`, one per internal agent id.
    pub b_blocks: Vec<DMatrix<f64>>,
    /// `C_i = (w_i Gamma_i) ⊗ I_n`, one per internal agent id.
    pub c_blocks: Vec<DMatrix<f64>>,
    pub incidence: IncidenceMatrix,
    pub flows: Vec<InfoFlowMatrix>,
    /// Internal id to external id.
    pub external: Vec<usize>,
    pub root_neighbor: Option<usize>,
}

impl TransformedSystem {
    pub fn agents(&self) -> usize {
        self.b_blocks.len()
    }

    pub fn b_star(&self) -> DMatrix<f64> {
        hstack(&self.b_blocks)
    }

    pub fn c_star(&self) -> DMatrix<f64> {
        vstack(&self.c_blocks)
    }

    /// Rows `w_i Gamma_i` in internal order.
    pub fn flow_rows(&self) -> Vec<nalgebra::RowDVector<f64>> {
        self.flows.iter().map(InfoFlowMatrix::weighted).collect()
    }

    fn gains_internal<'a>(&self, gains: &'a GainSet) -> Vec<&'a DMatrix<f64>> {
        self.external.iter().map(|&e| &gains.k[e]).collect()
    }
}

fn hstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.view_mut((0, off), b.shape()).copy_from(b);
        off += b.ncols();
    }
    out
}

fn vstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, 0), b.shape()).copy_from(b);
        off += b.nrows();
    }
    out
}

fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

fn assemble(
    dynamics: &AgentDynamics,
    tree: &SpanningTree,
    mode: ProtocolMode,
    flows: Vec<InfoFlowMatrix>,
    root_neighbor: Option<usize>,
) -> TransformedSystem {
    let (n, big_n) = (dynamics.n(), tree.agents());
    let incidence = incidence_matrix(tree);
    let eye_n = DMatrix::<f64>::identity(n, n);
    let b_blocks = (0..big_n).map(|i| incidence.p(i).kronecker(dynamics.b())).collect();
    let c_blocks = flows.iter().map(|f| f.weighted().kronecker(&eye_n)).collect();
    TransformedSystem {
        mode,
        n,
        m: dynamics.m(),
        a_star: DMatrix::<f64>::identity(big_n - 1, big_n - 1).kronecker(dynamics.a()),
        input: dynamics.b().clone(),
        b_blocks,
        c_blocks,
        incidence,
        flows,
        external: (0..big_n).map(|v| tree.external(v)).collect(),
        root_neighbor,
    }
}

/// Transformed system for the full-neighbour or tree-only protocol.
pub fn build_transformed_system(
    dynamics: &AgentDynamics,
    topo: &Topology,
    tree: &SpanningTree,
    mode: ProtocolMode,
) -> Result<TransformedSystem> {
    tree.check_against(topo)?;
    if mode == ProtocolMode::DstWithRootFeedback {
        return Err(Error::ModeMismatch(
            "root-feedback systems are built with build_root_feedback_system".into(),
        ));
    }
    let flows = (0..tree.agents())
        .map(|i| info_flow_matrix(topo, tree, i, mode))
        .collect();
    Ok(assemble(dynamics, tree, mode, flows, None))
}

/// Transformed system for the tree-only protocol plus root feedback from
/// `neighbor` (external id).
pub fn build_root_feedback_system(
    dynamics: &AgentDynamics,
    topo: &Topology,
    tree: &SpanningTree,
    neighbor: usize,
) -> Result<TransformedSystem> {
    tree.check_against(topo)?;
    let root_int = tree.internal(tree.root());
    let mut flows = Vec::with_capacity(tree.agents());
    for i in 0..tree.agents() {
        flows.push(if i == root_int {
            root_feedback_flow(topo, tree, neighbor)?
        } else {
            info_flow_matrix(topo, tree, i, ProtocolMode::DstOnly)
        });
    }
    Ok(assemble(
        dynamics,
        tree,
        ProtocolMode::DstWithRootFeedback,
        flows,
        Some(neighbor),
    ))
}

fn check_gains(ts: &TransformedSystem, gains: &GainSet) -> Result<()> {
    if gains.mode != ts.mode {
        return Err(Error::ModeMismatch(format!(
            "gains are {:?}, system was built for {:?}",
            gains.mode, ts.mode
        )));
    }
    if gains.k.len() != ts.agents() {
        return Err(Error::DimensionMismatch(format!(
            "{} gain matrices for {} agents",
            gains.k.len(),
            ts.agents()
        )));
    }
    if gains.k.iter().any(|k| k.shape() != (ts.m, ts.n)) {
        return Err(Error::DimensionMismatch(format!("every K_i must be {}x{}", ts.m, ts.n)));
    }
    if ts.mode == ProtocolMode::DstWithRootFeedback && gains.root_neighbor() != ts.root_neighbor {
        return Err(Error::ModeMismatch("root neighbour differs from the system's".into()));
    }
    Ok(())
}

/// `A* + Σ_i (p_i w_i Gamma_i) ⊗ (B K_i)`.
pub fn assemble_closed_loop(ts: &TransformedSystem, gains: &GainSet) -> Result<DMatrix<f64>> {
    check_gains(ts, gains)?;
    let mut m = ts.a_star.clone();
    for (i, k) in ts.gains_internal(gains).into_iter().enumerate() {
        let coupling = ts.incidence.p(i) * ts.flows[i].weighted();
        m += coupling.kronecker(&(&ts.input * k));
    }
    debug_assert!(
        (&m - assemble_closed_loop_product(ts, gains)?).amax() <= 1e-12 * (1.0 + m.amax()),
        "Kronecker-sum and product assemblies disagree"
    );
    Ok(m)
}

/// `A* + B* diag(K_i) C*`.
pub fn assemble_closed_loop_product(ts: &TransformedSystem, gains: &GainSet) -> Result<DMatrix<f64>> {
    check_gains(ts, gains)?;
    let kd = block_diag(&ts.gains_internal(gains));
    Ok(&ts.a_star + ts.b_star() * kd * ts.c_star())
}

/// Row-wise assembly of the tree protocols (with or without root feedback).
///
/// Block row `j`: diagonal `A - w_{j,k_j} B K_j`; `+w_{k_j,κ(k_j)} B K_{k_j}`
/// at column `k_j` when the parent is not the root; when it is and root
/// feedback is on, `-w_{N,n_l} B K_N` at every path column `n_1..n_l`.
pub fn assemble_dst_closed_loop(
    dynamics: &AgentDynamics,
    topo: &Topology,
    tree: &SpanningTree,
    gains: &GainSet,
) -> Result<DMatrix<f64>> {
    tree.check_against(topo)?;
    gains.validate(dynamics, tree.agents())?;
    let root_fb = match gains.mode {
        ProtocolMode::DstOnly => None,
        ProtocolMode::DstWithRootFeedback => Some(gains.check_root_path(tree)?),
        ProtocolMode::FullNeighbor => {
            return Err(Error::ModeMismatch(
                "row-wise assembly applies to tree protocols only".into(),
            ))
        }
    };
    let (n, big_n) = (dynamics.n(), tree.agents());
    let root = tree.root();
    let bk: Vec<DMatrix<f64>> = gains.k.iter().map(|k| dynamics.b() * k).collect();
    let mut m = DMatrix::zeros((big_n - 1) * n, (big_n - 1) * n);
    for j in 0..big_n - 1 {
        let ext_j = tree.external(j);
        let k_j = tree.parent(ext_j).expect("non-root");
        let row = j * n;

        let diag = dynamics.a() - &bk[ext_j] * tree.edge_weight(ext_j);
        let mut blk = m.view_mut((row, row), (n, n));
        blk += diag;

        if k_j != root {
            let col = tree.internal(k_j) * n;
            let mut blk = m.view_mut((row, col), (n, n));
            blk += &bk[k_j] * tree.edge_weight(k_j);
        } else if let Some((path, w)) = root_fb {
            for &v in path {
                let col = tree.internal(v) * n;
                let mut blk = m.view_mut((row, col), (n, n));
                blk -= &bk[root] * w;
            }
        }
    }
    Ok(m)
}

/// `y_e = x_{k_e} - x_e`, stacked by edge index.
pub fn agent_to_edge(tree: &SpanningTree, states: &[DVector<f64>]) -> DVector<f64> {
    let n = states.first().map_or(0, |x| x.len());
    let mut y = DVector::zeros((tree.agents() - 1) * n);
    for (e, (p, c)) in tree.edges().into_iter().enumerate() {
        y.rows_mut(e * n, n).copy_from(&(&states[p] - &states[c]));
    }
    y
}

/// Linear map `T` with `y = T x` for stacked agent states `x` (external order).
pub fn edge_map(tree: &SpanningTree, n: usize) -> DMatrix<f64> {
    let big_n = tree.agents();
    let mut t = DMatrix::zeros((big_n - 1) * n, big_n * n);
    let eye = DMatrix::<f64>::identity(n, n);
    for (e, (p, c)) in tree.edges().into_iter().enumerate() {
        t.view_mut((e * n, p * n), (n, n)).copy_from(&eye);
        t.view_mut((e * n, c * n), (n, n)).copy_from(&(-&eye));
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::extract_dst;
    use crate::graph::tests::{example1_topology, example2_topology};
    use crate::linalg::spectrum;
    use nalgebra::dmatrix;
    use num_complex::Complex64;

    pub fn rotation() -> AgentDynamics {
        AgentDynamics::new(dmatrix![0.0, 1.0; -1.0, 0.0], dmatrix![1.0; 1.0]).unwrap()
    }

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    fn example1_gains() -> GainSet {
        GainSet::new(
            vec![
                row(&[1.5, 0.5]),
                row(&[4.0, 0.0]),
                row(&[2.625, 0.375]),
                row(&[0.0, 0.0]),
            ],
            ProtocolMode::DstOnly,
        )
    }

    fn example2_gains(topo: &Topology, tree: &SpanningTree, k6: &[f64]) -> GainSet {
        GainSet::with_root_feedback(
            vec![
                row(&[4.0, 0.0]),
                row(&[2.625, 0.375]),
                row(&[2.5, 0.5]),
                row(&[2.5, 0.5]),
                row(&[1.5, 0.5]),
                row(k6),
            ],
            topo,
            tree,
            0,
        )
        .unwrap()
    }

    #[test]
    fn dynamics_validation() {
        assert!(AgentDynamics::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
        assert!(AgentDynamics::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1)).is_err());
        assert!(AgentDynamics::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 0)).is_err());
    }

    #[test]
    fn a_star_is_block_diagonal() {
        let topo = example1_topology();
        let tree = extract_dst(&topo, Some(3)).unwrap();
        let ts = build_transformed_system(&rotation(), &topo, &tree, ProtocolMode::FullNeighbor).unwrap();
        assert_eq!(ts.a_star.shape(), (6, 6));
        for i in 0..3 {
            for j in 0..3 {
                let blk = ts.a_star.view((2 * i, 2 * j), (2, 2));
                if i == j {
                    assert_eq!(blk, *rotation().a());
                } else {
                    assert!(blk.iter().all(|&v| v == 0.0));
                }
            }
        }
        let expect_c1 = row(&[2.0, -1.0, 0.0]).kronecker(&DMatrix::<f64>::identity(2, 2));
        assert_eq!(ts.c_blocks[0], expect_c1);
    }

    #[test]
    fn example2_dst_only_output_blocks() {
        let topo = example2_topology();
        let tree = extract_dst(&topo, Some(5)).unwrap();
        let ts = build_transformed_system(&rotation(), &topo, &tree, ProtocolMode::DstOnly).unwrap();
        assert!(ts.c_blocks[5].iter().all(|&v| v == 0.0));
        let expect = row(&[0.0, 0.0, 0.0, 0.0, 1.0]).kronecker(&DMatrix::<f64>::identity(2, 2));
        assert_eq!(ts.c_blocks[4], expect);
    }

    #[test]
    fn zero_gains_give_a_star() {
        let topo = example1_topology();
        let tree = extract_dst(&topo, Some(3)).unwrap();
        let ts = build_transformed_system(&rotation(), &topo, &tree, ProtocolMode::FullNeighbor).unwrap();
        let g = GainSet::zeros(4, &rotation(), ProtocolMode::FullNeighbor);
        assert_eq!(assemble_closed_loop(&ts, &g).unwrap(), ts.a_star);
    }

    #[test]
    fn example1_closed_loop_is_block_upper_triangular() {
        let topo = example1_topology();
        let tree = extract_dst(&topo, Some(3)).unwrap();
        let dynamics = rotation();
        let ts = build_transformed_system(&dynamics, &topo, &tree, ProtocolMode::DstOnly).unwrap();
        let gains = example1_gains();
        let m = assemble_closed_loop(&ts, &gains).unwrap();
        for j in 0..3 {
            let diag = dynamics.a() - dynamics.b() * &gains.k[j];
            assert_eq!(m.view((2 * j, 2 * j), (2, 2)), diag);
            for k in 0..j {
                assert!(m.view((2 * j, 2 * k), (2, 2)).iter().all(|&v| v == 0.0));
            }
        }
        let rowwise = assemble_dst_closed_loop(&dynamics, &topo, &tree, &gains).unwrap();
        assert!((&rowwise - &m).amax() <= 1e-12);
    }

    #[test]
    fn example2_displayed_matrix() {
        let topo = example2_topology();
        let tree = extract_dst(&topo, Some(5)).unwrap();
        let dynamics = rotation();
        let gains = example2_gains(&topo, &tree, &[1.0, 0.0]);
        assert_eq!(gains.root_path.as_deref(), Some(&[4usize, 0][..]));
        let m = assemble_dst_closed_loop(&dynamics, &topo, &tree, &gains).unwrap();
        let (a, b) = (dynamics.a(), dynamics.b());
        let bk: Vec<_> = gains.k.iter().map(|k| b * k).collect();
        let z = DMatrix::<f64>::zeros(2, 2);
        let expect = [
            [a - &bk[0], z.clone(), z.clone(), z.clone(), bk[4].clone()],
            [z.clone(), a - &bk[1], z.clone(), z.clone(), bk[4].clone()],
            [z.clone(), z.clone(), a - &bk[2], bk[3].clone(), z.clone()],
            [-&bk[5], z.clone(), z.clone(), a - &bk[3], -&bk[5]],
            [-&bk[5], z.clone(), z.clone(), z.clone(), a - &bk[4] - &bk[5]],
        ];
        for (r, blocks) in expect.iter().enumerate() {
            for (c, blk) in blocks.iter().enumerate() {
                assert_eq!(m.view((2 * r, 2 * c), (2, 2)), *blk, "block ({r},{c})");
            }
        }
        // the general (C*, A*, B*) route agrees
        let ts = build_root_feedback_system(&dynamics, &topo, &tree, 0).unwrap();
        let general = assemble_closed_loop(&ts, &gains).unwrap();
        assert!((&general - &m).amax() <= 1e-12);
    }

    #[test]
    fn zero_root_gain_matches_dst_only() {
        let topo = example2_topology();
        let tree = extract_dst(&topo, Some(5)).unwrap();
        let fb = example2_gains(&topo, &tree, &[0.0, 0.0]);
        let mut plain = fb.clone();
        plain.mode = ProtocolMode::DstOnly;
        plain.root_path = None;
        plain.root_neighbor_weight = None;
        let a = assemble_dst_closed_loop(&rotation(), &topo, &tree, &fb).unwrap();
        let b = assemble_dst_closed_loop(&rotation(), &topo, &tree, &plain).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_root_path_is_an_error() {
        let topo = example2_topology();
        let tree = extract_dst(&topo, Some(5)).unwrap();
        let mut g = example2_gains(&topo, &tree, &[1.0, 0.0]);
        g.root_path = None;
        assert!(matches!(
            assemble_dst_closed_loop(&rotation(), &topo, &tree, &g),
            Err(Error::MissingRootPath)
        ));
        let mut g = example2_gains(&topo, &tree, &[1.0, 0.0]);
        g.root_path = Some(vec![0]);
        assert!(matches!(
            assemble_dst_closed_loop(&rotation(), &topo, &tree, &g),
            Err(Error::InvalidRootPath(_))
        ));
    }

    #[test]
    fn mode_and_dimension_errors() {
        let topo = example1_topology();
        let tree = extract_dst(&topo, Some(3)).unwrap();
        let ts = build_transformed_system(&rotation(), &topo, &tree, ProtocolMode::DstOnly).unwrap();
        let g = GainSet::zeros(4, &rotation(), ProtocolMode::FullNeighbor);
        assert!(matches!(assemble_closed_loop(&ts, &g), Err(Error::ModeMismatch(_))));
        let g = GainSet::zeros(3, &rotation(), ProtocolMode::DstOnly);
        assert!(matches!(
            assemble_closed_loop(&ts, &g),
            Err(Error::DimensionMismatch(_))
        ));
        let other = extract_dst(&example2_topology(), Some(5)).unwrap();
        assert!(build_transformed_system(&rotation(), &topo, &other, ProtocolMode::DstOnly).is_err());
    }

    #[test]
    fn edge_states() {
        let tree = extract_dst(&example1_topology(), Some(3)).unwrap();
        let x: Vec<DVector<f64>> = [[7.5, 13.8], [14.0, 9.0], [0.0, 6.5], [8.0, 5.4]]
            .iter()
            .map(|v| DVector::from_row_slice(v))
            .collect();
        let y = agent_to_edge(&tree, &x);
        let expect = [-7.5, -7.3, -14.0, -2.5, 8.0, -1.1];
        for (a, b) in y.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let same = vec![DVector::from_row_slice(&[1.0, 2.0]); 4];
        assert!(agent_to_edge(&tree, &same).iter().all(|&v| v == 0.0));
        let stacked = crate::linalg::stack(&x);
        assert!((edge_map(&tree, 2) * stacked - y).amax() < 1e-12);

        let t2 = SpanningTree::from_parents(1, vec![Some(1), None], vec![1.0, 0.0]).unwrap();
        let d = DVector::from_row_slice(&[0.3, -2.0]);
        let x0 = DVector::from_row_slice(&[1.0, 1.0]);
        let y = agent_to_edge(&t2, &[x0.clone(), &x0 + &d]);
        assert!((y - d).amax() < 1e-15);
    }

    #[test]
    fn example1_spectrum_is_union_of_diagonal_blocks() {
        let topo = example1_topology();
        let tree = extract_dst(&topo, Some(3)).unwrap();
        let m = assemble_dst_closed_loop(&rotation(), &topo, &tree, &example1_gains()).unwrap();
        let mut expect = vec![
            Complex64::new(-1.0, 1.0),
            Complex64::new(-1.0, -1.0),
            Complex64::new(-2.0, 1.0),
            Complex64::new(-2.0, -1.0),
            Complex64::new(-1.5, 1.0),
            Complex64::new(-1.5, -1.0),
        ];
        crate::linalg::sort_spectrum(&mut expect);
        let got = spectrum(&m);
        assert!(crate::linalg::multiset_distance(&got, &expect).unwrap() < 1e-8);
    }
}
