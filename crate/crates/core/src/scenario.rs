//! Scenario files: JSON with row-major matrices and 1-based agent ids.
//! See `docs/scenario-schema.md`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::graph::{ProtocolMode, SpanningTree, Topology};
use crate::synthesis::{GershgorinMode, TargetPoles, Theorem3Params};
use crate::transform::{AgentDynamics, GainSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub dynamics: DynamicsSpec,
    pub topology: TopologySpec,
    /// 1-based root; extracted from the topology when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub n: usize,
    pub m: usize,
    /// `n x n`, row-major.
    pub a: Vec<f64>,
    /// `n x m`, row-major.
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub agents: usize,
    /// `W[i][j] > 0` when agent i hears agent j; row-major.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GainsSpec {
    pub mode: ProtocolMode,
    /// One `m x n` row-major matrix per agent.
    pub k: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_neighbor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMethod {
    Theorem2,
    Theorem3,
}

/// Poles as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TargetPolesSpec {
    Uniform(Vec<[f64; 2]>),
    PerAgent(Vec<Option<Vec<[f64; 2]>>>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DesignParamsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_neighbor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_gain: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<GershgorinMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DesignSpec {
    pub method: DesignMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_poles: Option<TargetPolesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<DesignParamsSpec>,
}

/// A malformed scenario. `line`/`column` are set for syntax and type errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub path: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ScenarioError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        if !self.path.is_empty() && self.path != "." {
            write!(f, "`{}`: ", self.path)?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ScenarioError {}

type Check = std::result::Result<(), ScenarioError>;

fn finite(path: &str, values: &[f64]) -> Check {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(ScenarioError::field(format!("{path}[{i}]"), "must be finite")),
        None => Ok(()),
    }
}

fn length(path: &str, got: usize, want: usize, what: &str) -> Check {
    if got == want {
        Ok(())
    } else {
        Err(ScenarioError::field(
            path,
            format!("expected {want} entries ({what}), found {got}"),
        ))
    }
}

fn agent_id(path: &str, id: usize, agents: usize) -> Check {
    if (1..=agents).contains(&id) {
        Ok(())
    } else {
        Err(ScenarioError::field(
            path,
            format!("agent id {id} is outside 1..={agents}"),
        ))
    }
}

fn positive(path: &str, v: f64) -> Check {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::field(path, "must be positive and finite"))
    }
}

fn poles(path: &str, list: &[[f64; 2]], n: usize) -> Check {
    length(path, list.len(), n, "one pole per state")?;
    for (i, p) in list.iter().enumerate() {
        finite(&format!("{path}[{i}]"), p)?;
    }
    Ok(())
}

fn to_complex(list: &[[f64; 2]]) -> Vec<Complex64> {
    list.iter().map(|p| Complex64::new(p[0], p[1])).collect()
}

impl Scenario {
    /// Parses and validates.
    pub fn parse(text: &str) -> std::result::Result<Self, ScenarioError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let inner = e.inner();
            ScenarioError {
                path: e.path().to_string(),
                line: Some(inner.line()),
                column: Some(inner.column()),
                message: strip_position(&inner.to_string()),
            }
        })?;
        de.end().map_err(|e| ScenarioError {
            path: String::new(),
            line: Some(e.line()),
            column: Some(e.column()),
            message: strip_position(&e.to_string()),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }

    pub fn validate(&self) -> Check {
        let d = &self.dynamics;
        if d.n == 0 || d.m == 0 {
            return Err(ScenarioError::field("dynamics", "n and m must be at least 1"));
        }
        length("dynamics.a", d.a.len(), d.n * d.n, "n*n")?;
        length("dynamics.b", d.b.len(), d.n * d.m, "n*m")?;
        finite("dynamics.a", &d.a)?;
        finite("dynamics.b", &d.b)?;

        let t = &self.topology;
        if t.agents < 2 {
            return Err(ScenarioError::field("topology.agents", "need at least 2 agents"));
        }
        length(
            "topology.weights",
            t.weights.len(),
            t.agents * t.agents,
            "agents*agents",
        )?;
        self.topology()?;
        let agents = t.agents;
        if let Some(r) = self.root {
            agent_id("root", r, agents)?;
        }

        if let Some(g) = &self.gains {
            length("gains.k", g.k.len(), agents, "one matrix per agent")?;
            for (i, k) in g.k.iter().enumerate() {
                let path = format!("gains.k[{i}]");
                length(&path, k.len(), d.m * d.n, "m*n")?;
                finite(&path, k)?;
            }
            match (g.mode, g.root_neighbor) {
                (ProtocolMode::DstWithRootFeedback, None) => {
                    return Err(ScenarioError::field(
                        "gains.rootNeighbor",
                        "required for mode dst-with-root-feedback",
                    ))
                }
                (ProtocolMode::DstWithRootFeedback, Some(v)) => agent_id("gains.rootNeighbor", v, agents)?,
                (_, Some(_)) => {
                    return Err(ScenarioError::field(
                        "gains.rootNeighbor",
                        "only allowed with mode dst-with-root-feedback",
                    ))
                }
                (_, None) => {}
            }
        }

        if let Some(s) = &self.sim {
            positive("sim.dt", s.dt)?;
            if !(s.horizon.is_finite() && s.horizon >= s.dt) {
                return Err(ScenarioError::field("sim.T", "must be finite and at least dt"));
            }
            positive("sim.tol", s.tol)?;
            if let Some(x0) = &s.x0 {
                length("sim.x0", x0.len(), agents, "one state per agent")?;
                for (i, x) in x0.iter().enumerate() {
                    let path = format!("sim.x0[{i}]");
                    length(&path, x.len(), d.n, "n")?;
                    finite(&path, x)?;
                }
            }
        }

        if let Some(ds) = &self.design {
            match &ds.target_poles {
                Some(TargetPolesSpec::Uniform(p)) => poles("design.targetPoles.uniform", p, d.n)?,
                Some(TargetPolesSpec::PerAgent(list)) => {
                    length("design.targetPoles.perAgent", list.len(), agents, "one entry per agent")?;
                    for (i, p) in list.iter().enumerate() {
                        if let Some(p) = p {
                            poles(&format!("design.targetPoles.perAgent[{i}]"), p, d.n)?;
                        }
                    }
                }
                None => {}
            }
            if let Some(p) = &ds.params {
                if let Some(v) = p.root_neighbor {
                    agent_id("design.params.rootNeighbor", v, agents)?;
                }
                if let Some(k) = &p.root_gain {
                    length("design.params.rootGain", k.len(), d.m * d.n, "m*n")?;
                    finite("design.params.rootGain", k)?;
                }
                if let Some(v) = p.root_depth {
                    positive("design.params.rootDepth", v)?;
                }
                if let Some(v) = p.initial_depth {
                    positive("design.params.initialDepth", v)?;
                }
                if let Some(v) = p.growth {
                    if !(v.is_finite() && v > 1.0) {
                        return Err(ScenarioError::field("design.params.growth", "must exceed 1"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dynamics(&self) -> std::result::Result<AgentDynamics, ScenarioError> {
        let d = &self.dynamics;
        AgentDynamics::new(
            DMatrix::from_row_slice(d.n, d.n, &d.a),
            DMatrix::from_row_slice(d.n, d.m, &d.b),
        )
        .map_err(|e| ScenarioError::field("dynamics", e.to_string()))
    }

    pub fn topology(&self) -> std::result::Result<Topology, ScenarioError> {
        Topology::from_row_major(self.topology.agents, &self.topology.weights)
            .map_err(|e| ScenarioError::field("topology.weights", e.to_string()))
    }

    /// 0-based root, if given.
    pub fn root(&self) -> Option<usize> {
        self.root.map(|r| r - 1)
    }

    /// Stacked initial state, if given.
    pub fn x0(&self) -> Option<DVector<f64>> {
        let x0 = self.sim.as_ref()?.x0.as_ref()?;
        Some(DVector::from_iterator(
            x0.iter().map(Vec::len).sum(),
            x0.iter().flatten().copied(),
        ))
    }

    /// Injected gains as a `GainSet` over `tree`.
    pub fn gain_set(&self, topo: &Topology, tree: &SpanningTree) -> crate::Result<Option<GainSet>> {
        let Some(g) = &self.gains else {
            return Ok(None);
        };
        let (n, m) = (self.dynamics.n, self.dynamics.m);
        let k = g.k.iter().map(|k| DMatrix::from_row_slice(m, n, k)).collect();
        Ok(Some(match g.root_neighbor {
            Some(v) if g.mode == ProtocolMode::DstWithRootFeedback => {
                GainSet::with_root_feedback(k, topo, tree, v - 1)?
            }
            _ => GainSet::new(k, g.mode),
        }))
    }

    pub fn target_poles(&self) -> TargetPoles {
        match self.design.as_ref().and_then(|d| d.target_poles.as_ref()) {
            None => TargetPoles::Default,
            Some(TargetPolesSpec::Uniform(p)) => TargetPoles::Uniform(to_complex(p)),
            Some(TargetPolesSpec::PerAgent(list)) => {
                TargetPoles::PerAgent(list.iter().map(|p| p.as_deref().map(to_complex)).collect())
            }
        }
    }

    pub fn theorem3_params(&self) -> Theorem3Params {
        let mut out = Theorem3Params::default();
        let Some(p) = self.design.as_ref().and_then(|d| d.params.as_ref()) else {
            return out;
        };
        out.root_neighbor = p.root_neighbor.map(|v| v - 1);
        out.root_gain = p
            .root_gain
            .as_ref()
            .map(|k| DMatrix::from_row_slice(self.dynamics.m, self.dynamics.n, k));
        out.root_depth = p.root_depth.unwrap_or(out.root_depth);
        out.initial_depth = p.initial_depth.unwrap_or(out.initial_depth);
        out.growth = p.growth.unwrap_or(out.growth);
        out.max_iterations = p.max_iterations.unwrap_or(out.max_iterations);
        out.mode = p.mode.unwrap_or(out.mode);
        out
    }

    /// Built-in fixtures: `example1`, `example2`, `example2-k6zero`.
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "example1" => EXAMPLE1,
            "example2" => EXAMPLE2,
            "example2-k6zero" => EXAMPLE2_K6ZERO,
            _ => return None,
        };
        Some(Self::parse(text).expect("built-in scenario is valid"))
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["example1", "example2", "example2-k6zero"];

const EXAMPLE1: &str = include_str!("../../../scenarios/example1.json");
const EXAMPLE2: &str = include_str!("../../../scenarios/example2.json");
const EXAMPLE2_K6ZERO: &str = include_str!("../../../scenarios/example2-k6zero.json");

// serde_json appends " at line L column C"; we report those separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}
