//! Fixed-step RK4 integration in agent and edge coordinates.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::graph::{ProtocolMode, SpanningTree, Topology};
use crate::transform::{edge_map, AgentDynamics, GainSet};

/// States larger than this in magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub n: usize,
    pub m: usize,
    pub agents: usize,
    pub times: Vec<f64>,
    /// Stacked agent states `[x_1; ...; x_N]` per sample, external order.
    pub agent_traj: Vec<DVector<f64>>,
    /// Stacked fundamental edge states per sample, edge order.
    pub edge_traj: Vec<DVector<f64>>,
    /// Stacked inputs `[u_1; ...; u_N]` per sample.
    pub control_traj: Vec<DVector<f64>>,
    /// `ε(t) = max_{i,j} ‖x_i(t) - x_j(t)‖`.
    pub consensus_error: Vec<f64>,
}

impl SimulationResult {
    pub fn state(&self, sample: usize, agent: usize) -> DVectorView<'_, f64> {
        self.agent_traj[sample].rows(agent * self.n, self.n)
    }

    pub fn final_error(&self) -> f64 {
        *self.consensus_error.last().expect("non-empty trajectory")
    }

    /// `ε(T) <= tol (1 + ε(0))`.
    pub fn verdict(&self, tol: f64) -> bool {
        verdict(&self.consensus_error, tol)
    }
}

pub fn verdict(errors: &[f64], tol: f64) -> bool {
    match (errors.first(), errors.last()) {
        (Some(e0), Some(et)) => *et <= tol * (1.0 + e0),
        _ => false,
    }
}

/// Max pairwise Euclidean distance between the agents' states.
pub fn pairwise_spread(x: &DVector<f64>, agents: usize, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..agents {
        for j in i + 1..agents {
            let d = (x.rows(i * n, n) - x.rows(j * n, n)).norm();
            worst = worst.max(d);
        }
    }
    worst
}

pub fn consensus_error(result: &SimulationResult) -> &[f64] {
    &result.consensus_error
}

fn sample_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidSimulation(format!("dt = {dt} must be positive")));
    }
    if !(t_end.is_finite() && t_end >= dt) {
        return Err(Error::InvalidSimulation(format!(
            "T = {t_end} must be at least dt = {dt}"
        )));
    }
    Ok((t_end / dt + 1e-9).floor() as usize + 1)
}

/// Classical RK4 on `x' = M x`; returns `samples` states starting at `x0`.
pub fn rk4_linear(m: &DMatrix<f64>, x0: &DVector<f64>, dt: f64, samples: usize) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(samples);
    let mut x = x0.clone();
    out.push(x.clone());
    for step in 1..samples {
        let k1 = m * &x;
        let k2 = m * (&x + &k1 * (dt / 2.0));
        let k3 = m * (&x + &k2 * (dt / 2.0));
        let k4 = m * (&x + &k3 * dt);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::NonFiniteState { time: step as f64 * dt });
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// `G` with `u = G x` for the protocol encoded in `gains`.
pub fn control_matrix(
    dynamics: &AgentDynamics,
    topo: &Topology,
    tree: &SpanningTree,
    gains: &GainSet,
) -> Result<DMatrix<f64>> {
    let big_n = topo.agents();
    gains.validate(dynamics, big_n)?;
    tree.check_against(topo)?;
    let (n, m) = (dynamics.n(), dynamics.m());
    let mut g = DMatrix::zeros(big_n * m, big_n * n);
    let mut couple = |i: usize, j: usize, w: f64| {
        let k = &gains.k[i] * w;
        let mut to = g.view_mut((i * m, j * n), (m, n));
        to += &k;
        let mut own = g.view_mut((i * m, i * n), (m, n));
        own -= &k;
    };
    match gains.mode {
        ProtocolMode::FullNeighbor => {
            for i in 0..big_n {
                for j in topo.in_neighbors(i) {
                    couple(i, j, topo.weight(i, j));
                }
            }
        }
        ProtocolMode::DstOnly | ProtocolMode::DstWithRootFeedback => {
            for i in 0..big_n {
                if let Some(k) = tree.parent(i) {
                    couple(i, k, tree.edge_weight(i));
                }
            }
            if gains.mode == ProtocolMode::DstWithRootFeedback {
                let nl = gains.root_neighbor().ok_or(Error::MissingRootPath)?;
                let w = gains.root_neighbor_weight.ok_or(Error::MissingRootPath)?;
                couple(tree.root(), nl, w);
            }
        }
    }
    Ok(g)
}

/// `I ⊗ A + (I ⊗ B) G` on the stacked agent state.
pub fn agent_closed_loop(dynamics: &AgentDynamics, control: &DMatrix<f64>) -> DMatrix<f64> {
    let big_n = control.nrows() / dynamics.m();
    let eye = DMatrix::<f64>::identity(big_n, big_n);
    eye.kronecker(dynamics.a()) + eye.kronecker(dynamics.b()) * control
}

/// Simulates the agents under the protocol of `gains` from stacked `x0`.
pub fn integrate_agents(
    dynamics: &AgentDynamics,
    topo: &Topology,
    tree: &SpanningTree,
    gains: &GainSet,
    x0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<SimulationResult> {
    let (n, big_n) = (dynamics.n(), topo.agents());
    if x0.len() != big_n * n {
        return Err(Error::DimensionMismatch(format!(
            "x0 has {} entries, expected {}",
            x0.len(),
            big_n * n
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSimulation("x0 must be finite".into()));
    }
    let samples = sample_count(dt, t_end)?;
    let g = control_matrix(dynamics, topo, tree, gains)?;
    let closed = agent_closed_loop(dynamics, &g);
    let agent_traj = rk4_linear(&closed, x0, dt, samples)?;
    let t = edge_map(tree, n);
    Ok(SimulationResult {
        n,
        m: dynamics.m(),
        agents: big_n,
        times: (0..samples).map(|k| k as f64 * dt).collect(),
        edge_traj: agent_traj.iter().map(|x| &t * x).collect(),
        control_traj: agent_traj.iter().map(|x| &g * x).collect(),
        consensus_error: agent_traj.iter().map(|x| pairwise_spread(x, big_n, n)).collect(),
        agent_traj,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

/// RK4 on `y' = M y`.
pub fn integrate_edges(m: &DMatrix<f64>, y0: &DVector<f64>, dt: f64, t_end: f64) -> Result<EdgeTrajectory> {
    if m.nrows() != m.ncols() || m.nrows() != y0.len() {
        return Err(Error::DimensionMismatch(format!(
            "edge matrix {}x{} with y0 of length {}",
            m.nrows(),
            m.ncols(),
            y0.len()
        )));
    }
    let samples = sample_count(dt, t_end)?;
    Ok(EdgeTrajectory {
        times: (0..samples).map(|k| k as f64 * dt).collect(),
        states: rk4_linear(m, y0, dt, samples)?,
    })
}
