//! Decentralized fixed modes and the bipartition rank criterion.
//!
//! For every unstable mode `λ0` of `A` and every split `(α, β)` of the agents,
//! consensus requires
//!
//! ```text
//! rank [ I_{N-1} ⊗ (λ0 I - A)   P_α ⊗ B ]  >=  (N-1) n
//!      [ Φ_β ⊗ I_n              0       ]
//! ```
//!
//! where `P_α` collects the incidence columns `p_i, i ∈ α` and `Φ_β` stacks
//! the rows `w_i Γ_i, i ∈ β` of the full-neighbour protocol.

use nalgebra::{DMatrix, RowDVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{extract_dst, IncidenceMatrix, ProtocolMode, SpanningTree, Topology};
use crate::linalg::{numerical_rank_c, spectrum, to_complex};
use crate::transform::{build_transformed_system, AgentDynamics, TransformedSystem};

/// Environment variable capping the worker threads of the bipartition sweep.
pub const THREADS_ENV: &str = "CONSENSUS_FORGE_THREADS";

/// Largest agent count the exhaustive sweep accepts.
pub const MAX_SWEEP_AGENTS: usize = 24;

pub const DEFAULT_MODE_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-8;

/// Eigenvalues of `a` with real part `>= -tol`, deduplicated within `1e-8`.
pub fn unstable_modes(a: &DMatrix<f64>, tol: f64) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::new();
    for z in spectrum(a) {
        if z.re >= -tol && out.iter().all(|w| (w - z).norm() > DEDUP_TOL) {
            out.push(z);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankOutcome {
    pub rank: usize,
    pub required: usize,
}

impl RankOutcome {
    pub fn passes(&self) -> bool {
        self.rank >= self.required
    }
}

/// The rank test for one mode and one split; `alpha` holds internal agent ids,
/// `β` is its complement.
pub fn rank_test(
    dynamics: &AgentDynamics,
    incidence: &IncidenceMatrix,
    flow_rows: &[RowDVector<f64>],
    lambda: Complex64,
    alpha: &[usize],
) -> RankOutcome {
    let (n, m) = (dynamics.n(), dynamics.m());
    let big_n = incidence.p0.nrows();
    let edges = big_n - 1;
    let beta: Vec<usize> = (0..big_n).filter(|i| !alpha.contains(i)).collect();

    let state = edges * n;
    let rows = state + beta.len() * n;
    let cols = state + alpha.len() * m;
    let mut mat = DMatrix::<Complex64>::zeros(rows, cols);

    let shifted = DMatrix::<Complex64>::identity(n, n) * lambda - to_complex(dynamics.a());
    for e in 0..edges {
        mat.view_mut((e * n, e * n), (n, n)).copy_from(&shifted);
    }
    let b = to_complex(dynamics.b());
    for (slot, &i) in alpha.iter().enumerate() {
        let col = state + slot * m;
        for e in 0..edges {
            let p = f64::from(incidence.p0[(i, e)]);
            if p != 0.0 {
                mat.view_mut((e * n, col), (n, m))
                    .copy_from(&(&b * Complex64::new(p, 0.0)));
            }
        }
    }
    for (slot, &i) in beta.iter().enumerate() {
        let row = state + slot * n;
        for e in 0..edges {
            let g = flow_rows[i][e];
            for d in 0..n {
                mat[(row + d, e * n + d)] = Complex64::new(g, 0.0);
            }
        }
    }
    RankOutcome {
        rank: numerical_rank_c(&mat),
        required: state,
    }
}

/// A failing `(λ0, α)` pair. `alpha` holds external agent ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RankWitness {
    pub lambda: Complex64,
    pub alpha: Vec<usize>,
    pub rank: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionVerdict {
    pub consensus_achievable: bool,
    /// Unstable modes tested, one representative per conjugate pair.
    pub tested_modes: Vec<Complex64>,
    pub failures: Vec<RankWitness>,
    /// Splits per mode; `2^N` for an exhaustive sweep over at least one mode,
    /// otherwise the number of rank tests actually run.
    pub bipartitions_checked: usize,
    pub exhaustive: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CriterionOptions {
    /// Evaluate every split and collect every witness instead of stopping at
    /// the first failure.
    pub exhaustive: bool,
    pub mode_tol: f64,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        Self {
            exhaustive: true,
            mode_tol: DEFAULT_MODE_TOL,
        }
    }
}

fn conjugate_representatives(modes: Vec<Complex64>) -> Vec<Complex64> {
    modes
        .into_iter()
        .filter(|z| z.im >= -DEDUP_TOL)
        .map(|z| {
            if z.im.abs() <= DEDUP_TOL {
                Complex64::new(z.re, 0.0)
            } else {
                z
            }
        })
        .collect()
}

fn subset(mask: usize, agents: usize) -> Vec<usize> {
    (0..agents).filter(|i| mask >> i & 1 == 1).collect()
}

fn sweep_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// Runs the rank criterion over all unstable modes and all `2^N` splits.
pub fn criterion(
    dynamics: &AgentDynamics,
    topo: &Topology,
    tree: &SpanningTree,
    opts: CriterionOptions,
) -> Result<CriterionVerdict> {
    let agents = tree.agents();
    if agents > MAX_SWEEP_AGENTS {
        return Err(Error::InvalidTopology(format!(
            "bipartition sweep is limited to {MAX_SWEEP_AGENTS} agents, got {agents}"
        )));
    }
    let ts = build_transformed_system(dynamics, topo, tree, ProtocolMode::FullNeighbor)?;
    let flows = ts.flow_rows();
    let modes = conjugate_representatives(unstable_modes(dynamics.a(), opts.mode_tol));
    let count = 1usize << agents;

    let run = |lambda: Complex64, mask: usize| -> Option<RankWitness> {
        let alpha = subset(mask, agents);
        let out = rank_test(dynamics, &ts.incidence, &flows, lambda, &alpha);
        (!out.passes()).then(|| RankWitness {
            lambda,
            alpha: alpha.iter().map(|&i| tree.external(i)).collect(),
            rank: out.rank,
            required: out.required,
        })
    };

    let mut failures = Vec::new();
    let mut tests = 0usize;
    if opts.exhaustive {
        let sweep = || {
            modes
                .iter()
                .flat_map(|&lambda| {
                    (0..count)
                        .into_par_iter()
                        .filter_map(|mask| run(lambda, mask))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        };
        failures = match sweep_threads() {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map(|pool| pool.install(sweep))
                .unwrap_or_else(|_| sweep()),
            None => sweep(),
        };
        tests = if modes.is_empty() { 0 } else { count };
    } else {
        'outer: for &lambda in &modes {
            for mask in 0..count {
                tests += 1;
                if let Some(w) = run(lambda, mask) {
                    failures.push(w);
                    break 'outer;
                }
            }
        }
    }

    Ok(CriterionVerdict {
        consensus_achievable: failures.is_empty(),
        tested_modes: modes,
        failures,
        bipartitions_checked: tests,
        exhaustive: opts.exhaustive,
    })
}

/// Extracts a spanning tree first; `NoSpanningTree` when the topology has none.
pub fn criterion_for_topology(
    dynamics: &AgentDynamics,
    topo: &Topology,
    root: Option<usize>,
    opts: CriterionOptions,
) -> Result<CriterionVerdict> {
    let tree = extract_dst(topo, root)?;
    criterion(dynamics, topo, &tree, opts)
}

pub const DEFAULT_DFM_TOL: f64 = 1e-6;

/// Monte-Carlo estimate of the fixed modes of `(C*, A*, B*)` under block
/// diagonal feedback: the eigenvalues of `A*` that survive, within `tol`,
/// in the spectrum of `A* + Σ B_i K_i C_i` for `K = 0` and for every one of
/// `trials` random `K_i` with entries uniform in `[-1, 1]`.
pub fn dfm_sample_blocks(
    a: &DMatrix<f64>,
    b_blocks: &[DMatrix<f64>],
    c_blocks: &[DMatrix<f64>],
    trials: usize,
    seed: u64,
    tol: f64,
) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut survivors = spectrum(a);
    let mut closed_loops = vec![a.clone()];
    for _ in 0..trials {
        let mut m = a.clone();
        for (b, c) in b_blocks.iter().zip(c_blocks) {
            let k = DMatrix::from_fn(b.ncols(), c.nrows(), |_, _| rng.gen_range(-1.0..=1.0));
            m += b * k * c;
        }
        closed_loops.push(m);
    }
    for m in closed_loops {
        let ev = spectrum(&m);
        let mut used = vec![false; ev.len()];
        survivors.retain(|z| {
            let best = ev
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, w)| (k, (w - z).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match best {
                Some((k, d)) if d <= tol => {
                    used[k] = true;
                    true
                }
                _ => false,
            }
        });
    }
    survivors
}

pub fn dfm_sample(ts: &TransformedSystem, trials: usize, seed: u64, tol: f64) -> Vec<Complex64> {
    dfm_sample_blocks(&ts.a_star, &ts.b_blocks, &ts.c_blocks, trials, seed, tol)
}

/// True when the two verdicts agree: the criterion passes exactly when no
/// sampled fixed mode has a non-negative real part.
pub fn sampled_verdict_agrees(verdict: &CriterionVerdict, sampled: &[Complex64], tol: f64) -> bool {
    let unstable_dfm = sampled.iter().any(|z| z.re >= -tol);
    verdict.consensus_achievable != unstable_dfm
}
