//! Per-agent gain synthesis for the tree protocols.
//!
//! With a root that hears nobody, the tree-only closed loop is block upper
//! triangular and each `A - w_{i,k_i} B K_i` can be placed independently.
//! When the root does hear a neighbour, the root feedback couples the rows of
//! the root's children and stability is argued with block Gershgorin circles:
//! each diagonal block must clear the sum of the off-diagonal block norms of
//! its row on the whole closed right half plane.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ProtocolMode, SpanningTree, Topology};
use crate::linalg::{
    controllability_matrix, inf_norm, inf_norm_c, is_controllable, is_hurwitz, min_row_sum_c, monic_poly_from_roots,
    spectral_abscissa, spectrum, to_complex,
};
use crate::transform::{assemble_dst_closed_loop, AgentDynamics, GainSet};

const CONJ_TOL: f64 = 1e-9;
const INPUT_MIX_SEED: u64 = 0x5eed_ba11;
const INPUT_MIX_TRIES: usize = 64;
const INPUT_MIX_CANDIDATES: usize = 8;

fn check_targets(n: usize, targets: &[Complex64]) -> Result<()> {
    if targets.len() != n {
        return Err(Error::BadTargets(format!(
            "{} targets for a state of size {n}",
            targets.len()
        )));
    }
    if let Some(z) = targets
        .iter()
        .find(|z| z.re >= 0.0 || z.re.is_nan() || !z.im.is_finite())
    {
        return Err(Error::BadTargets(format!("{z} is not strictly stable")));
    }
    let mut used = vec![false; n];
    for z in targets {
        let partner = (0..n).find(|&k| !used[k] && (targets[k] - z.conj()).norm() <= CONJ_TOL);
        match partner {
            Some(k) => used[k] = true,
            None => return Err(Error::BadTargets(format!("{z} has no conjugate partner"))),
        }
    }
    Ok(())
}

/// Single-input eigenvalue assignment via the characteristic polynomial:
/// `k = e_n^T [b, Ab, ..., A^{n-1}b]^{-1} φ(A)`.
fn ackermann(a: &DMatrix<f64>, b: &DMatrix<f64>, targets: &[Complex64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let coeffs = monic_poly_from_roots(targets);
    let mut phi = DMatrix::<f64>::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    for c in &coeffs {
        phi += &power * *c;
        power = a * power;
    }
    phi += power;
    let ctrb = controllability_matrix(a, b);
    let mut e_n = DMatrix::<f64>::zeros(n, 1);
    e_n[(n - 1, 0)] = 1.0;
    let z = ctrb.transpose().lu().solve(&e_n).ok_or(Error::Uncontrollable)?;
    Ok(z.transpose() * phi)
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// Returns `K` with `σ(A - B K)` equal to `targets`.
///
/// Multi-input pairs are reduced to a single input `B v` with a seeded random
/// `v`; among the first controllable candidates the best-conditioned one wins.
pub fn place_poles(a: &DMatrix<f64>, b: &DMatrix<f64>, targets: &[Complex64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() == 0 {
        return Err(Error::DimensionMismatch("place_poles needs A n x n and B n x m".into()));
    }
    check_targets(n, targets)?;
    if !is_controllable(a, b) {
        return Err(Error::Uncontrollable);
    }
    if b.ncols() == 1 {
        return ackermann(a, b, targets);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(INPUT_MIX_SEED);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut found = 0;
    for _ in 0..INPUT_MIX_TRIES {
        let v = DMatrix::from_fn(b.ncols(), 1, |_, _| rng.gen_range(-1.0..=1.0));
        let bv = b * &v;
        if !is_controllable(a, &bv) {
            continue;
        }
        let cond = condition_number(&controllability_matrix(a, &bv));
        if best.as_ref().is_none_or(|(c, _)| cond < *c) {
            best = Some((cond, v));
        }
        found += 1;
        if found == INPUT_MIX_CANDIDATES {
            break;
        }
    }
    let (_, v) = best.ok_or(Error::Uncontrollable)?;
    let k = ackermann(a, &(b * &v), targets)?;
    Ok(v * k)
}

/// Poles `-depth (1 + q/2) ± i|Im λ|` for the `q`-th real eigenvalue or
/// conjugate pair of `a`.
pub fn default_targets(a: &DMatrix<f64>, depth: f64) -> Vec<Complex64> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(n);
    let mut q = 0.0;
    for z in spectrum(a) {
        if z.im < -CONJ_TOL {
            continue;
        }
        let re = -depth * (1.0 + 0.5 * q);
        q += 1.0;
        if z.im > CONJ_TOL {
            out.push(Complex64::new(re, z.im));
            out.push(Complex64::new(re, -z.im));
        } else {
            out.push(Complex64::new(re, 0.0));
        }
    }
    if out.len() != n {
        // pairing broke down numerically; fall back to distinct real poles
        out = (0..n)
            .map(|q| Complex64::new(-depth * (1.0 + 0.5 * q as f64), 0.0))
            .collect();
    }
    out
}

/// Target poles for the triangular design, indexed by external agent id.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TargetPoles {
    #[default]
    Default,
    Uniform(Vec<Complex64>),
    PerAgent(Vec<Option<Vec<Complex64>>>),
}

impl TargetPoles {
    fn for_agent(&self, agent: usize, a: &DMatrix<f64>) -> Vec<Complex64> {
        match self {
            TargetPoles::Uniform(t) => t.clone(),
            TargetPoles::PerAgent(list) => match list.get(agent) {
                Some(Some(t)) => t.clone(),
                _ => default_targets(a, 1.0),
            },
            TargetPoles::Default => default_targets(a, 1.0),
        }
    }
}

/// Tree-only design for a root that hears nobody: `K_N = 0` and every other
/// `K_i` places `A - w_{i,k_i} B K_i` at its targets.
pub fn design_theorem2(
    dynamics: &AgentDynamics,
    topo: &Topology,
    tree: &SpanningTree,
    targets: &TargetPoles,
) -> Result<GainSet> {
    tree.check_against(topo)?;
    let root = tree.root();
    if !topo.in_neighbors(root).is_empty() {
        return Err(Error::RootHasNeighbors { root });
    }
    let mut gains = GainSet::zeros(tree.agents(), dynamics, ProtocolMode::DstOnly);
    for v in (0..tree.agents()).filter(|&v| v != root) {
        let input = dynamics.b() * tree.edge_weight(v);
        gains.k[v] = place_poles(dynamics.a(), &input, &targets.for_agent(v, dynamics.a()))?;
    }
    Ok(gains)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GershgorinMode {
    /// Minimum absolute row sum of `D - iωI` against the radius.
    #[default]
    Surrogate,
    /// `1 / ‖(D - iωI)^{-1}‖∞` against the radius.
    Resolvent,
}

/// Frequency sampling of the imaginary axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrequencyGrid {
    pub points: usize,
    /// Golden-section iterations around each local minimum of the grid.
    pub refine_iterations: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            points: 2001,
            refine_iterations: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RowReport {
    /// Block row index (internal edge index).
    pub block_row: usize,
    pub diagonal_abscissa: f64,
    pub diagonal_hurwitz: bool,
    pub radius: f64,
    pub surrogate_margin: f64,
    pub surrogate_omega: f64,
    pub surrogate_pass: bool,
    pub resolvent_margin: f64,
    pub resolvent_omega: f64,
    pub resolvent_pass: bool,
    pub omega_max: f64,
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GershgorinReport {
    pub mode: GershgorinMode,
    pub rows: Vec<RowReport>,
    pub surrogate_all: bool,
    pub resolvent_all: bool,
    pub eigenvalue_certificate: bool,
    pub spectral_abscissa: f64,
}

impl GershgorinReport {
    /// Outcome of the selected circle test.
    pub fn circles_pass(&self) -> bool {
        match self.mode {
            GershgorinMode::Surrogate => self.surrogate_all,
            GershgorinMode::Resolvent => self.resolvent_all,
        }
    }
}

fn shifted(d: &DMatrix<f64>, omega: f64) -> DMatrix<Complex64> {
    let mut z = to_complex(d);
    for i in 0..d.nrows() {
        z[(i, i)] -= Complex64::new(0.0, omega);
    }
    z
}

fn surrogate_value(d: &DMatrix<f64>, omega: f64) -> f64 {
    min_row_sum_c(&shifted(d, omega))
}

fn resolvent_value(d: &DMatrix<f64>, omega: f64) -> f64 {
    match shifted(d, omega).try_inverse() {
        Some(inv) => {
            let norm = inf_norm_c(&inv);
            if norm.is_finite() && norm > 0.0 {
                1.0 / norm
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}

/// Minimum of `f` over `[-omega_max, omega_max]`: uniform grid, then
/// golden-section refinement inside the bracket of every local grid minimum.
fn minimize_on_axis(f: impl Fn(f64) -> f64, omega_max: f64, grid: FrequencyGrid) -> (f64, f64) {
    let pts = grid.points.max(3);
    let step = 2.0 * omega_max / (pts - 1) as f64;
    let omegas: Vec<f64> = (0..pts).map(|k| -omega_max + step * k as f64).collect();
    let vals: Vec<f64> = omegas.iter().map(|&w| f(w)).collect();
    let (mut best_w, mut best_v) = (omegas[0], vals[0]);
    for k in 0..pts {
        let left = if k == 0 { f64::INFINITY } else { vals[k - 1] };
        let right = if k + 1 == pts { f64::INFINITY } else { vals[k + 1] };
        if vals[k] < best_v {
            best_v = vals[k];
            best_w = omegas[k];
        }
        if vals[k] > left || vals[k] > right {
            continue;
        }
        let (mut lo, mut hi) = (omegas[k.saturating_sub(1)], omegas[(k + 1).min(pts - 1)]);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..grid.refine_iterations {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        for (w, v) in [(x1, f1), (x2, f2)] {
            if v < best_v {
                best_v = v;
                best_w = w;
            }
        }
    }
    (best_v, best_w)
}

fn check_blocks(m: &DMatrix<f64>, block: usize) -> Result<usize> {
    if block == 0 || m.nrows() != m.ncols() || !m.nrows().is_multiple_of(block) {
        return Err(Error::NonSquareBlocks { block });
    }
    Ok(m.nrows() / block)
}

/// Circle test for a single block row.
pub fn gershgorin_row(m: &DMatrix<f64>, block: usize, row: usize, grid: FrequencyGrid) -> Result<RowReport> {
    let count = check_blocks(m, block)?;
    let d = m.view((row * block, row * block), (block, block)).clone_owned();
    let radius: f64 = (0..count)
        .filter(|&c| c != row)
        .map(|c| inf_norm(&m.view((row * block, c * block), (block, block)).clone_owned()))
        .sum();
    let diagonal_abscissa = spectral_abscissa(&d);
    let hurwitz = diagonal_abscissa < 0.0;
    let omega_max = inf_norm(&d) + radius + 1.0;
    let (s_min, s_w) = minimize_on_axis(|w| surrogate_value(&d, w), omega_max, grid);
    let (r_min, r_w) = minimize_on_axis(|w| resolvent_value(&d, w), omega_max, grid);
    Ok(RowReport {
        block_row: row,
        diagonal_abscissa,
        diagonal_hurwitz: hurwitz,
        radius,
        surrogate_margin: s_min,
        surrogate_omega: s_w,
        surrogate_pass: hurwitz && s_min > radius,
        resolvent_margin: r_min,
        resolvent_omega: r_w,
        resolvent_pass: hurwitz && r_min > radius,
        omega_max,
        grid_points: grid.points,
    })
}

/// Block Gershgorin report for `m` partitioned into `block x block` blocks,
/// plus the direct eigenvalue certificate.
pub fn gershgorin_check(
    m: &DMatrix<f64>,
    block: usize,
    mode: GershgorinMode,
    grid: FrequencyGrid,
) -> Result<GershgorinReport> {
    let count = check_blocks(m, block)?;
    let rows = (0..count)
        .map(|j| gershgorin_row(m, block, j, grid))
        .collect::<Result<Vec<_>>>()?;
    let abscissa = spectral_abscissa(m);
    Ok(GershgorinReport {
        mode,
        surrogate_all: rows.iter().all(|r| r.surrogate_pass),
        resolvent_all: rows.iter().all(|r| r.resolvent_pass),
        rows,
        eigenvalue_certificate: abscissa < 0.0,
        spectral_abscissa: abscissa,
    })
}

/// Tuning of the root-feedback design.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem3Params {
    /// In-neighbour of the root to feed back from (external id); default is
    /// the one closest to the root on the tree, ties by ascending id.
    pub root_neighbor: Option<usize>,
    /// Fixed `K_N`; designed from `root_depth` when absent.
    pub root_gain: Option<DMatrix<f64>>,
    pub root_depth: f64,
    pub initial_depth: f64,
    pub growth: f64,
    pub max_iterations: usize,
    pub mode: GershgorinMode,
    pub grid: FrequencyGrid,
}

impl Default for Theorem3Params {
    fn default() -> Self {
        Self {
            root_neighbor: None,
            root_gain: None,
            root_depth: 0.5,
            initial_depth: 1.0,
            growth: 1.5,
            max_iterations: 12,
            mode: GershgorinMode::Surrogate,
            grid: FrequencyGrid::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Theorem3Design {
    pub gains: GainSet,
    pub report: GershgorinReport,
    /// Deepening rounds used per agent (external id); 0 means the zero gain
    /// already passed. The root entry is always 0.
    pub iterations: Vec<usize>,
}

fn pick_root_neighbor(topo: &Topology, tree: &SpanningTree, requested: Option<usize>) -> Result<usize> {
    let root = tree.root();
    let candidates = topo.in_neighbors(root);
    if candidates.is_empty() {
        return Err(Error::RootHasNoNeighbors { root });
    }
    match requested {
        Some(v) if candidates.contains(&v) => Ok(v),
        Some(v) => Err(Error::InvalidRootPath(format!(
            "vertex {} is not an in-neighbour of root {}",
            v + 1,
            root + 1
        ))),
        None => Ok(*candidates
            .iter()
            .min_by_key(|&&v| (tree.depth(v), v))
            .expect("non-empty")),
    }
}

/// Staged root-feedback design: fix `K_N`, then walk the tree top-down and
/// give each agent the smallest pole depth (from `initial_depth`, multiplied
/// by `growth`) whose circle clears the radius induced by the gains above it.
/// The result is accepted only when the assembled closed loop is Hurwitz.
pub fn design_theorem3(
    dynamics: &AgentDynamics,
    topo: &Topology,
    tree: &SpanningTree,
    params: &Theorem3Params,
) -> Result<Theorem3Design> {
    tree.check_against(topo)?;
    let root = tree.root();
    let neighbor = pick_root_neighbor(topo, tree, params.root_neighbor)?;
    let (a, b) = (dynamics.a(), dynamics.b());
    let w_root = topo.weight(root, neighbor);

    let mut gains = GainSet::with_root_feedback(
        vec![DMatrix::zeros(dynamics.m(), dynamics.n()); tree.agents()],
        topo,
        tree,
        neighbor,
    )?;
    gains.k[root] = match &params.root_gain {
        Some(k) if k.shape() == (dynamics.m(), dynamics.n()) => k.clone(),
        Some(_) => return Err(Error::DimensionMismatch("root gain must be m x n".into())),
        None if is_hurwitz(a) => DMatrix::zeros(dynamics.m(), dynamics.n()),
        None => place_poles(a, &(b * w_root), &default_targets(a, params.root_depth))?,
    };
    let path = gains.root_path.clone().unwrap_or_default();

    let n = dynamics.n();
    let mut iterations = vec![0; tree.agents()];
    for v in tree.bfs_order().into_iter().skip(1) {
        let row = tree.internal(v);
        let mut base = a.clone();
        if tree.parent(v) == Some(root) && path.contains(&v) {
            base -= b * &gains.k[root] * w_root;
        }
        let input = b * tree.edge_weight(v);

        let row_passes = |gains: &GainSet| -> Result<bool> {
            let m = assemble_dst_closed_loop(dynamics, topo, tree, gains)?;
            let r = gershgorin_row(&m, n, row, params.grid)?;
            Ok(match params.mode {
                GershgorinMode::Surrogate => r.surrogate_pass,
                GershgorinMode::Resolvent => r.resolvent_pass,
            })
        };

        let mut passed = is_hurwitz(&base) && row_passes(&gains)?;
        let mut depth = params.initial_depth;
        let mut round = 0;
        while !passed && round < params.max_iterations {
            round += 1;
            gains.k[v] = place_poles(&base, &input, &default_targets(a, depth))?;
            passed = row_passes(&gains)?;
            depth *= params.growth;
        }
        iterations[v] = round;
        if !passed {
            let m = assemble_dst_closed_loop(dynamics, topo, tree, &gains)?;
            let report = gershgorin_check(&m, n, params.mode, params.grid)?;
            return Err(Error::SynthesisFailed {
                vertex: Some(v),
                report: Box::new(report),
            });
        }
    }

    let m = assemble_dst_closed_loop(dynamics, topo, tree, &gains)?;
    let report = gershgorin_check(&m, n, params.mode, params.grid)?;
    if !report.eigenvalue_certificate {
        return Err(Error::SynthesisFailed {
            vertex: None,
            report: Box::new(report),
        });
    }
    Ok(Theorem3Design {
        gains,
        report,
        iterations,
    })
}
