//! Command pipelines shared by the CLI and the tests, and the report they
//! produce. Field order of [`Report`] is fixed so the JSON is reproducible.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::criterion::{criterion, dfm_sample, sampled_verdict_agrees, CriterionOptions, DEFAULT_DFM_TOL};
use crate::error::Error;
use crate::graph::{extract_dst, ProtocolMode, SpanningTree, Topology};
use crate::linalg::{spectral_abscissa, spectrum};
use crate::scenario::{DesignMethod, Scenario};
use crate::sim::{integrate_agents, SimulationResult, DEFAULT_DT};
use crate::synthesis::{
    design_theorem2, design_theorem3, gershgorin_check, FrequencyGrid, GershgorinMode, GershgorinReport,
};
use crate::transform::{
    assemble_closed_loop, assemble_dst_closed_loop, build_transformed_system, AgentDynamics, GainSet,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_SYNTHESIS: i32 = 4;

const DFM_TRIALS: usize = 16;
const EPSILON_SAMPLES: usize = 20;
const DEFAULT_T: f64 = 15.0;
const DEFAULT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Design,
    Check,
    Simulate,
    Demo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Design => "design",
            Command::Check => "check",
            Command::Simulate => "simulate",
            Command::Demo => "demo",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub tol: Option<f64>,
    pub exhaustive: bool,
}

type Pair = [f64; 2];

fn pair(z: Complex64) -> Pair {
    [z.re, z.im]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub scenario: String,
    pub seed: u64,
    pub status: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dst: Option<DstSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_loop: Option<ClosedLoopSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gershgorin: Option<GershgorinSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

/// Agent ids are 1-based here.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DstSummary {
    pub root: usize,
    /// `(parent, child)` per fundamental edge, in edge order.
    pub edges: Vec<[usize; 2]>,
    /// Renumbered id of each agent.
    pub internal_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Witness {
    pub lambda: Pair,
    pub alpha: Vec<usize>,
    pub rank: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CriterionSummary {
    pub consensus_achievable: bool,
    pub exhaustive: bool,
    pub tested_modes: Vec<Pair>,
    pub bipartitions_checked: usize,
    pub failures: Vec<Witness>,
    pub sampled_fixed_modes: Vec<Pair>,
    pub sampled_agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GainsSummary {
    /// `injected`, `theorem2` or `theorem3`.
    pub provenance: &'static str,
    pub mode: ProtocolMode,
    /// Row-major `K_i`, agent order.
    pub k: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_path: Option<Vec<usize>>,
    /// `u_N = 0` while the root has in-neighbours.
    pub root_tracking: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design_iterations: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ClosedLoopSummary {
    pub dimension: usize,
    pub spectrum: Vec<Pair>,
    pub spectral_abscissa: f64,
    pub hurwitz: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GershgorinRow {
    /// 1-based block row, i.e. renumbered edge index.
    pub block_row: usize,
    pub edge: [usize; 2],
    pub radius: f64,
    pub diagonal_abscissa: f64,
    pub surrogate_margin: f64,
    pub surrogate_pass: bool,
    pub resolvent_margin: f64,
    pub resolvent_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GershgorinSummary {
    pub mode: GershgorinMode,
    pub circles_pass: bool,
    pub surrogate_all: bool,
    pub resolvent_all: bool,
    pub eigenvalue_certificate: bool,
    pub spectral_abscissa: f64,
    pub rows: Vec<GershgorinRow>,
}

impl GershgorinSummary {
    fn new(r: &GershgorinReport, tree: &SpanningTree) -> Self {
        let edges = tree.edges();
        Self {
            mode: r.mode,
            circles_pass: r.circles_pass(),
            surrogate_all: r.surrogate_all,
            resolvent_all: r.resolvent_all,
            eigenvalue_certificate: r.eigenvalue_certificate,
            spectral_abscissa: r.spectral_abscissa,
            rows: r
                .rows
                .iter()
                .map(|row| {
                    let (p, c) = edges[row.block_row];
                    GershgorinRow {
                        block_row: row.block_row + 1,
                        edge: [p + 1, c + 1],
                        radius: row.radius,
                        diagonal_abscissa: row.diagonal_abscissa,
                        surrogate_margin: row.surrogate_margin,
                        surrogate_pass: row.surrogate_pass,
                        resolvent_margin: row.resolvent_margin,
                        resolvent_pass: row.resolvent_pass,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RootTrackingSummary {
    pub root: usize,
    /// `max_i ‖x_i(T) - x_root(T)‖`.
    pub max_deviation: f64,
    pub bound: f64,
    /// Worst distance of the root from `e^{At} x_root(0)`.
    pub drift_error: f64,
    pub tracking: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationSummary {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tol: f64,
    pub samples: usize,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    pub ratio: f64,
    pub verdict: bool,
    /// `[t, ε(t)]` at evenly spaced samples.
    pub epsilon: Vec<Pair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_tracking: Option<RootTrackingSummary>,
}

/// Result of running one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub simulation: Option<SimulationResult>,
    pub tree: Option<SpanningTree>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

impl Report {
    fn new(command: Command, scenario: &str, seed: u64) -> Self {
        Self {
            tool: "consensus-forge",
            version: env!("CARGO_PKG_VERSION"),
            command: command.name(),
            scenario: scenario.to_string(),
            seed,
            status: "ok",
            exit_code: EXIT_OK,
            error: None,
            dst: None,
            criterion: None,
            gains: None,
            closed_loop: None,
            gershgorin: None,
            simulation: None,
            notes: Vec::new(),
        }
    }

    /// Keeps the first failure.
    fn fail(&mut self, status: &'static str, code: i32) {
        if self.exit_code == EXIT_OK {
            self.status = status;
            self.exit_code = code;
        }
    }

    fn fail_with(&mut self, status: &'static str, code: i32, err: &Error) {
        self.fail(status, code);
        self.error.get_or_insert(ErrorInfo {
            kind: error_kind(err),
            message: err.to_string(),
            field: None,
            line: None,
            column: None,
        });
    }

    /// Report for a scenario that failed to parse.
    pub fn input_error(command: Command, source: &str, err: &crate::scenario::ScenarioError) -> Self {
        let mut r = Self::new(command, source, 0);
        r.fail("input-error", EXIT_INPUT);
        r.error = Some(ErrorInfo {
            kind: "InvalidScenario",
            message: err.message.clone(),
            field: (!err.path.is_empty() && err.path != ".").then(|| err.path.clone()),
            line: err.line,
            column: err.column,
        });
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {}: {} (exit {})",
            self.command, self.scenario, self.status, self.exit_code
        );
        if let Some(e) = &self.error {
            let _ = write!(s, "error [{}]: ", e.kind);
            if let (Some(l), Some(c)) = (e.line, e.column) {
                let _ = write!(s, "line {l}, column {c}: ");
            }
            if let Some(f) = &e.field {
                let _ = write!(s, "`{f}`: ");
            }
            let _ = writeln!(s, "{}", e.message);
        }
        if let Some(d) = &self.dst {
            let edges: Vec<String> = d.edges.iter().map(|[p, c]| format!("({p},{c})")).collect();
            let _ = writeln!(s, "spanning tree: root {}, edges {}", d.root, edges.join(" "));
        }
        if let Some(c) = &self.criterion {
            let _ = writeln!(
                s,
                "criterion: {} ({} splits per mode, modes {})",
                if c.consensus_achievable {
                    "consensus achievable"
                } else {
                    "consensus NOT achievable"
                },
                c.bipartitions_checked,
                fmt_list(&c.tested_modes)
            );
            for w in c.failures.iter().take(5) {
                let _ = writeln!(
                    s,
                    "  fails at λ = {}, α = {:?}: rank {} < {}",
                    fmt_complex(w.lambda),
                    w.alpha,
                    w.rank,
                    w.required
                );
            }
        }
        if let Some(g) = &self.gains {
            let _ = writeln!(s, "gains ({}, {:?}):", g.provenance, g.mode);
            for (i, k) in g.k.iter().enumerate() {
                let _ = writeln!(s, "  K{} = {:?}", i + 1, k);
            }
        }
        if let Some(c) = &self.closed_loop {
            let _ = writeln!(s, "closed-loop spectrum: {}", fmt_list(&c.spectrum));
            let _ = writeln!(
                s,
                "spectral abscissa: {:.12} (hurwitz: {})",
                c.spectral_abscissa, c.hurwitz
            );
        }
        if let Some(g) = &self.gershgorin {
            let _ = writeln!(
                s,
                "gershgorin ({:?}): surrogate {}, resolvent {}, certificate {}",
                g.mode, g.surrogate_all, g.resolvent_all, g.eigenvalue_certificate
            );
            for r in &g.rows {
                let _ = writeln!(
                    s,
                    "  row {} edge ({},{}): radius {:.4}, surrogate {:.4} {}, resolvent {:.4} {}",
                    r.block_row,
                    r.edge[0],
                    r.edge[1],
                    r.radius,
                    r.surrogate_margin,
                    pass(r.surrogate_pass),
                    r.resolvent_margin,
                    pass(r.resolvent_pass)
                );
            }
        }
        if let Some(m) = &self.simulation {
            let _ = writeln!(
                s,
                "simulation: dt {}, T {}, ε(0) = {:.6}, ε(T) = {:.3e}, ratio {:.3e}, verdict {}",
                m.dt, m.horizon, m.epsilon_initial, m.epsilon_final, m.ratio, m.verdict
            );
            if let Some(r) = &m.root_tracking {
                let _ = writeln!(
                    s,
                    "root tracking: max deviation from agent {} = {:.3e} (bound {:.3e}), drift error {:.3e}",
                    r.root, r.max_deviation, r.bound, r.drift_error
                );
            }
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn fmt_complex([re, im]: Pair) -> String {
    if im == 0.0 {
        format!("{re:.6}")
    } else {
        format!("{re:.6}{}{:.6}i", if im < 0.0 { "-" } else { "+" }, im.abs())
    }
}

fn fmt_list(list: &[Pair]) -> String {
    let items: Vec<String> = list.iter().map(|&z| fmt_complex(z)).collect();
    format!("{{{}}}", items.join(", "))
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::InvalidTopology(_) => "InvalidTopology",
        Error::NoSpanningTree { .. } => "NoSpanningTree",
        Error::DimensionMismatch(_) => "DimensionMismatch",
        Error::ModeMismatch(_) => "ModeMismatch",
        Error::MissingRootPath => "MissingRootPath",
        Error::InvalidRootPath(_) => "InvalidRootPath",
        Error::Uncontrollable => "Uncontrollable",
        Error::BadTargets(_) => "BadTargets",
        Error::RootHasNeighbors { .. } => "RootHasNeighbors",
        Error::RootHasNoNeighbors { .. } => "RootHasNoNeighbors",
        Error::NonSquareBlocks { .. } => "NonSquareBlocks",
        Error::SynthesisFailed { .. } => "SynthesisFailed",
        Error::NonFiniteState { .. } => "NonFiniteState",
        Error::InvalidSimulation(_) => "InvalidSimulation",
    }
}

struct Context<'a> {
    scenario: &'a Scenario,
    opts: &'a RunOptions,
    dynamics: AgentDynamics,
    topo: Topology,
    tree: SpanningTree,
}

impl Context<'_> {
    fn gershgorin_mode(&self) -> GershgorinMode {
        self.scenario.theorem3_params().mode
    }

    fn design_method(&self) -> DesignMethod {
        match &self.scenario.design {
            Some(d) => d.method,
            None if self.topo.in_neighbors(self.tree.root()).is_empty() => DesignMethod::Theorem2,
            None => DesignMethod::Theorem3,
        }
    }
}

/// Runs `command` on a validated scenario.
pub fn run(command: Command, scenario: &Scenario, opts: &RunOptions) -> Outcome {
    let mut report = Report::new(command, &scenario.name, opts.seed);
    let mut outcome_tree = None;
    let mut simulation = None;
    let ctx = (|| -> Result<Context<'_>, (Error, &'static str, i32)> {
        let input =
            |e: crate::scenario::ScenarioError| (Error::InvalidSimulation(e.to_string()), "input-error", EXIT_INPUT);
        let dynamics = scenario.dynamics().map_err(input)?;
        let topo = scenario.topology().map_err(input)?;
        let tree = extract_dst(&topo, scenario.root()).map_err(|e| (e, "no-spanning-tree", EXIT_FAILURE))?;
        Ok(Context {
            scenario,
            opts,
            dynamics,
            topo,
            tree,
        })
    })();
    let ctx = match ctx {
        Ok(c) => c,
        Err((e, status, code)) => {
            report.fail_with(status, code, &e);
            return Outcome {
                report,
                simulation,
                tree: outcome_tree,
            };
        }
    };
    report.dst = Some(dst_summary(&ctx.tree));

    if matches!(command, Command::Analyze | Command::Demo) {
        stage_criterion(&ctx, &mut report);
    }
    if command != Command::Analyze {
        if let Some(gains) = stage_gains(&ctx, command, &mut report) {
            stage_closed_loop(&ctx, &gains, command, &mut report);
            if matches!(command, Command::Simulate | Command::Demo) {
                simulation = stage_simulation(&ctx, &gains, &mut report);
            }
        }
    }
    outcome_tree = Some(ctx.tree);
    Outcome {
        report,
        simulation,
        tree: outcome_tree,
    }
}

fn dst_summary(tree: &SpanningTree) -> DstSummary {
    DstSummary {
        root: tree.root() + 1,
        edges: tree.edges().into_iter().map(|(p, c)| [p + 1, c + 1]).collect(),
        internal_ids: (0..tree.agents()).map(|v| tree.internal(v) + 1).collect(),
    }
}

fn stage_criterion(ctx: &Context<'_>, report: &mut Report) {
    let opts = CriterionOptions {
        exhaustive: ctx.opts.exhaustive,
        ..Default::default()
    };
    let verdict = match criterion(&ctx.dynamics, &ctx.topo, &ctx.tree, opts) {
        Ok(v) => v,
        Err(e) => return report.fail_with("input-error", EXIT_INPUT, &e),
    };
    let sampled = build_transformed_system(&ctx.dynamics, &ctx.topo, &ctx.tree, ProtocolMode::FullNeighbor)
        .map(|ts| dfm_sample(&ts, DFM_TRIALS, ctx.opts.seed, DEFAULT_DFM_TOL))
        .unwrap_or_default();
    let agrees = sampled_verdict_agrees(&verdict, &sampled, DEFAULT_DFM_TOL);
    if !agrees {
        report
            .notes
            .push("sampled fixed modes disagree with the rank criterion; the rank criterion is authoritative".into());
    }
    if !verdict.consensus_achievable {
        report.fail("criterion-failed", EXIT_FAILURE);
    }
    report.criterion = Some(CriterionSummary {
        consensus_achievable: verdict.consensus_achievable,
        exhaustive: verdict.exhaustive,
        tested_modes: verdict.tested_modes.iter().map(|&z| pair(z)).collect(),
        bipartitions_checked: verdict.bipartitions_checked,
        failures: verdict
            .failures
            .iter()
            .map(|w| Witness {
                lambda: pair(w.lambda),
                alpha: w.alpha.iter().map(|a| a + 1).collect(),
                rank: w.rank,
                required: w.required,
            })
            .collect(),
        sampled_fixed_modes: sampled.iter().map(|&z| pair(z)).collect(),
        sampled_agrees: agrees,
    });
}

fn is_root_tracking(ctx: &Context<'_>, gains: &GainSet) -> bool {
    let root = ctx.tree.root();
    if ctx.topo.in_neighbors(root).is_empty() {
        return false;
    }
    match gains.mode {
        ProtocolMode::DstOnly => true,
        ProtocolMode::DstWithRootFeedback => gains.k[root].iter().all(|&v| v == 0.0),
        ProtocolMode::FullNeighbor => false,
    }
}

fn stage_gains(ctx: &Context<'_>, command: Command, report: &mut Report) -> Option<GainSet> {
    let injected = if command == Command::Design {
        None
    } else {
        match ctx.scenario.gain_set(&ctx.topo, &ctx.tree) {
            Ok(g) => g,
            Err(e) => {
                report.fail_with("input-error", EXIT_INPUT, &e);
                return None;
            }
        }
    };
    let (gains, provenance, iterations) = match injected {
        Some(g) => (g, "injected", None),
        None if command == Command::Check => {
            report.fail_with(
                "input-error",
                EXIT_INPUT,
                &Error::InvalidSimulation("`check` needs injected gains in the scenario".into()),
            );
            return None;
        }
        None => {
            let designed = match ctx.design_method() {
                DesignMethod::Theorem2 => {
                    design_theorem2(&ctx.dynamics, &ctx.topo, &ctx.tree, &ctx.scenario.target_poles())
                        .map(|g| (g, "theorem2", None))
                }
                DesignMethod::Theorem3 => {
                    design_theorem3(&ctx.dynamics, &ctx.topo, &ctx.tree, &ctx.scenario.theorem3_params())
                        .map(|d| (d.gains, "theorem3", Some(d.iterations)))
                }
            };
            match designed {
                Ok(d) => d,
                Err(e) => {
                    if let Error::SynthesisFailed { report: g, .. } = &e {
                        report.gershgorin = Some(GershgorinSummary::new(g, &ctx.tree));
                    }
                    report.fail_with("synthesis-failed", EXIT_SYNTHESIS, &e);
                    return None;
                }
            }
        }
    };
    let root_tracking = is_root_tracking(ctx, &gains);
    if root_tracking {
        report.notes.push(format!(
            "root-tracking mode: u_{} = 0, the other agents track the root's unforced trajectory",
            ctx.tree.root() + 1
        ));
    }
    report.gains = Some(GainsSummary {
        provenance,
        mode: gains.mode,
        k: gains.k.iter().map(row_major).collect(),
        root_path: gains.root_path.as_ref().map(|p| p.iter().map(|v| v + 1).collect()),
        root_tracking,
        design_iterations: iterations,
    });
    Some(gains)
}

fn row_major(k: &DMatrix<f64>) -> Vec<f64> {
    k.transpose().iter().copied().collect()
}

fn closed_loop_matrix(ctx: &Context<'_>, gains: &GainSet) -> crate::Result<DMatrix<f64>> {
    match gains.mode {
        ProtocolMode::FullNeighbor => {
            let ts = build_transformed_system(&ctx.dynamics, &ctx.topo, &ctx.tree, gains.mode)?;
            assemble_closed_loop(&ts, gains)
        }
        _ => assemble_dst_closed_loop(&ctx.dynamics, &ctx.topo, &ctx.tree, gains),
    }
}

fn stage_closed_loop(ctx: &Context<'_>, gains: &GainSet, command: Command, report: &mut Report) {
    let m = match closed_loop_matrix(ctx, gains) {
        Ok(m) => m,
        Err(e) => return report.fail_with("input-error", EXIT_INPUT, &e),
    };
    let spec = spectrum(&m);
    let abscissa = spectral_abscissa(&m);
    report.closed_loop = Some(ClosedLoopSummary {
        dimension: m.nrows(),
        spectrum: spec.iter().map(|&z| pair(z)).collect(),
        spectral_abscissa: abscissa,
        hurwitz: abscissa < 0.0,
    });
    match gershgorin_check(&m, ctx.dynamics.n(), ctx.gershgorin_mode(), FrequencyGrid::default()) {
        Ok(g) => {
            if !g.circles_pass() {
                report.notes.push(format!(
                    "{:?} circle test does not pass on every row; the eigenvalue certificate decides",
                    g.mode
                ));
            }
            if g.surrogate_all != g.resolvent_all {
                report
                    .notes
                    .push("surrogate and resolvent circle tests disagree".into());
            }
            report.gershgorin = Some(GershgorinSummary::new(&g, &ctx.tree));
        }
        Err(e) => report.notes.push(format!("gershgorin check skipped: {e}")),
    }
    // `simulate` is judged by its trajectory
    if abscissa >= 0.0 && command != Command::Simulate {
        report.fail("certificate-failed", EXIT_FAILURE);
    }
}

fn stage_simulation(ctx: &Context<'_>, gains: &GainSet, report: &mut Report) -> Option<SimulationResult> {
    let spec = ctx.scenario.sim.as_ref();
    let dt = ctx.opts.dt.or(spec.map(|s| s.dt)).unwrap_or(DEFAULT_DT);
    let horizon = ctx.opts.horizon.or(spec.map(|s| s.horizon)).unwrap_or(DEFAULT_T);
    let tol = ctx.opts.tol.or(spec.map(|s| s.tol)).unwrap_or(DEFAULT_TOL);
    let Some(x0) = ctx.scenario.x0() else {
        report.fail_with(
            "input-error",
            EXIT_INPUT,
            &Error::InvalidSimulation("scenario has no `sim.x0`".into()),
        );
        return None;
    };
    let result = match integrate_agents(&ctx.dynamics, &ctx.topo, &ctx.tree, gains, &x0, dt, horizon) {
        Ok(r) => r,
        Err(e @ Error::NonFiniteState { .. }) => {
            report.fail_with("diverged", EXIT_FAILURE, &e);
            return None;
        }
        Err(e) => {
            report.fail_with("input-error", EXIT_INPUT, &e);
            return None;
        }
    };
    let eps = &result.consensus_error;
    let (e0, et) = (eps[0], result.final_error());
    let mut verdict = result.verdict(tol);
    let root_tracking = is_root_tracking(ctx, gains).then(|| {
        let r = root_tracking_summary(ctx, &result, &x0, tol);
        verdict &= r.tracking;
        r
    });
    let last = eps.len() - 1;
    let picks: Vec<usize> = (0..=EPSILON_SAMPLES)
        .map(|k| (k * last + EPSILON_SAMPLES / 2) / EPSILON_SAMPLES)
        .collect();
    report.simulation = Some(SimulationSummary {
        dt,
        horizon,
        tol,
        samples: eps.len(),
        epsilon_initial: e0,
        epsilon_final: et,
        ratio: if e0 > 0.0 { et / e0 } else { 0.0 },
        verdict,
        epsilon: picks.iter().map(|&k| [result.times[k], eps[k]]).collect(),
        root_tracking,
    });
    if !verdict {
        report.fail("consensus-not-reached", EXIT_FAILURE);
    }
    Some(result)
}

fn root_tracking_summary(ctx: &Context<'_>, r: &SimulationResult, x0: &DVector<f64>, tol: f64) -> RootTrackingSummary {
    let root = ctx.tree.root();
    let n = r.n;
    let last = r.times.len() - 1;
    let xr = r.state(last, root);
    let max_deviation = (0..r.agents)
        .map(|i| (r.state(last, i) - xr).norm())
        .fold(0.0, f64::max);
    let start = x0.rows(root * n, n);
    let drift_error = r
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| ((ctx.dynamics.a() * t).exp() * start - r.state(k, root)).norm())
        .fold(0.0, f64::max);
    let bound = tol * (1.0 + r.consensus_error[0]);
    RootTrackingSummary {
        root: root + 1,
        max_deviation,
        bound,
        drift_error,
        tracking: max_deviation <= bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(name: &str) -> Outcome {
        run(Command::Demo, &Scenario::builtin(name).unwrap(), &RunOptions::default())
    }

    #[test]
    fn example1_demo() {
        let out = demo("example1");
        let r = &out.report;
        assert_eq!(r.exit_code, EXIT_OK, "{}", r.to_text());
        assert_eq!(r.dst.as_ref().unwrap().edges, vec![[3, 1], [3, 2], [4, 3]]);
        assert_eq!(r.gains.as_ref().unwrap().provenance, "theorem2");
        let spec = &r.closed_loop.as_ref().unwrap().spectrum;
        assert_eq!(spec.len(), 6);
        assert!(r.simulation.as_ref().unwrap().verdict);
        assert!(r.criterion.as_ref().unwrap().consensus_achievable);
    }

    #[test]
    fn example2_demo_and_tracking() {
        let out = demo("example2");
        assert_eq!(out.exit_code(), EXIT_OK, "{}", out.report.to_text());
        assert!(!out.report.gains.as_ref().unwrap().root_tracking);

        let out = demo("example2-k6zero");
        let r = &out.report;
        assert_eq!(r.exit_code, EXIT_OK, "{}", r.to_text());
        assert!(r.gains.as_ref().unwrap().root_tracking);
        assert!(r.notes.iter().any(|n| n.contains("u_6 = 0")));
        let t = r.simulation.as_ref().unwrap().root_tracking.as_ref().unwrap();
        assert!(t.tracking);
        assert!(t.drift_error <= 1e-6, "{}", t.drift_error);
    }

    #[test]
    fn no_spanning_tree() {
        let mut s = Scenario::builtin("example1").unwrap();
        s.topology.weights = vec![0.0; 16];
        s.topology.weights[1] = 1.0;
        s.topology.weights[2 * 4 + 3] = 1.0;
        s.root = None;
        let out = run(Command::Analyze, &s, &RunOptions::default());
        assert_eq!(out.exit_code(), EXIT_FAILURE);
        assert_eq!(out.report.error.as_ref().unwrap().kind, "NoSpanningTree");
        assert!(out.report.to_json().contains("NoSpanningTree"));
    }

    #[test]
    fn check_needs_gains() {
        let s = Scenario::builtin("example1").unwrap();
        let out = run(Command::Check, &s, &RunOptions::default());
        assert_eq!(out.exit_code(), EXIT_INPUT);
    }

    #[test]
    fn synthesis_failure_exit_code() {
        let mut s = Scenario::builtin("example1").unwrap();
        s.dynamics.b = vec![1.0, 0.0];
        s.dynamics.a = vec![0.0, 0.0, 0.0, 0.0];
        let out = run(Command::Design, &s, &RunOptions::default());
        assert_eq!(out.exit_code(), EXIT_SYNTHESIS, "{}", out.report.to_text());
        assert_eq!(out.report.error.as_ref().unwrap().kind, "Uncontrollable");
    }

    #[test]
    fn json_is_reproducible() {
        let s = Scenario::builtin("example2").unwrap();
        let opts = RunOptions {
            seed: 7,
            ..Default::default()
        };
        let a = run(Command::Demo, &s, &opts).report.to_json();
        let b = run(Command::Demo, &s, &opts).report.to_json();
        assert_eq!(a, b);
        let tool = a.find("\"tool\"").unwrap();
        let sim = a.find("\"simulation\"").unwrap();
        assert!(tool < sim);
    }

    #[test]
    fn design_theorem3_for_example2() {
        let s = Scenario::builtin("example2").unwrap();
        let out = run(Command::Design, &s, &RunOptions::default());
        assert_eq!(out.exit_code(), EXIT_OK, "{}", out.report.to_text());
        let g = out.report.gains.as_ref().unwrap();
        assert_eq!(g.provenance, "theorem3");
        assert!(out.report.gershgorin.as_ref().unwrap().eigenvalue_certificate);
    }
}
