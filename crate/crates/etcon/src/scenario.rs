//! Scenario files: the single human-readable document describing a complete
//! experiment (graph, dynamics, trigger, controller knobs, simulation
//! parameters).
//!
//! Format: TOML with a `schema` tag, matrices row-major. The graph may be
//! inline (`agents` + `edges`) or referenced as an edge-list file relative
//! to the scenario's directory. Initial states are either explicit (`x0`,
//! one row per agent) or seeded (`x0_seed` + `x0_scale`, uniform entries in
//! [−scale, scale]).
//!
//! Example:
//!
//! ```toml
//! schema = "etcon.scenario.v1"
//!
//! [graph]
//! edge_list = "graph.txt"        # or: agents = 6, edges = [[3,1], [1,2]]
//!
//! [dynamics]
//! a = [[0.192, -0.439], [0.431, 0.108]]
//! b = [[-1.45], [0.93]]
//!
//! [trigger]
//! beta = 3.0
//! lambda = 0.03
//! gamma = 12.0                   # required when delay > 0
//!
//! [controller]
//! alpha = 0.2                    # optional; default 0.1·(1 + pos. abscissa)
//! c_safety = 1.1                 # optional
//!
//! [simulation]
//! delay = 0.004
//! t_end = 40.0
//! step = 2.5e-4                  # optional; default min(1e-3, tau/4)
//! x0 = [[96.0, -48.0], [-72.0, 24.0], [48.0, 108.0],
//!       [-96.0, -36.0], [24.0, -84.0], [108.0, 60.0]]
//! ```

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::TriggerParams;
use crate::dynamics::LtiDynamics;
use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, parse_edge_list};
use crate::linalg::{RMatrix, RVector};

pub const SCENARIO_SCHEMA: &str = "etcon.scenario.v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema: String,
    pub graph: GraphSection,
    pub dynamics: DynamicsSection,
    pub trigger: TriggerSection,
    #[serde(default)]
    pub controller: ControllerSection,
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSection {
    /// Path to an edge-list file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_list: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    /// Inline 1-based (sender, receiver) pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsSection {
    /// Row-major n×n state matrix.
    pub a: Vec<Vec<f64>>,
    /// Row-major n×m input matrix.
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Heterogeneous thresholds, one `{beta, lambda}` entry per agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_agent: Option<Vec<PerAgentTrigger>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerAgentTrigger {
    pub beta: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ControllerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_safety: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSection {
    #[serde(default)]
    pub delay: f64,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Explicit initial states, one row of n entries per agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_scale: Option<f64>,
}

/// A parsed scenario with the graph resolved and all matrices built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: DirectedGraph,
    pub dynamics: LtiDynamics,
    pub trigger: TriggerParams,
    pub per_agent_trigger: Option<Vec<(f64, f64)>>,
    pub alpha: Option<f64>,
    pub c_safety: Option<f64>,
    pub delay: f64,
    pub t_end: f64,
    pub step: Option<f64>,
    pub x0: RVector,
    pub seed: Option<u64>,
    /// Hex SHA-256 over the resolved content; artifacts carry it so the
    /// verify stage can detect mixed-up inputs.
    pub hash: String,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<RMatrix> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Scenario(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Scenario(format!("{what}: ragged rows")));
    }
    Ok(RMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)
            .map_err(|e| Error::Scenario(format!("TOML parse error: {e}")))?;
        if file.schema != SCENARIO_SCHEMA {
            return Err(Error::Scenario(format!(
                "unsupported schema {:?}, expected {SCENARIO_SCHEMA:?}",
                file.schema
            )));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Resolve the graph (loading the edge-list file if referenced) and
    /// build the runnable scenario. `base_dir` anchors relative paths.
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario> {
        let graph = match (&self.graph.edge_list, self.graph.agents, &self.graph.edges) {
            (Some(path), None, None) => {
                let full: PathBuf = base_dir.join(path);
                let text = std::fs::read_to_string(&full).map_err(|e| {
                    Error::Scenario(format!("cannot read edge list {}: {e}", full.display()))
                })?;
                parse_edge_list(&text)?
            }
            (None, Some(agents), Some(edges)) => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                DirectedGraph::new(agents, &pairs)?
            }
            _ => {
                return Err(Error::Scenario(
                    "graph section needs either edge_list or (agents + edges)".into(),
                ));
            }
        };

        let dynamics = LtiDynamics::new(
            matrix_from_rows(&self.dynamics.a, "dynamics.a")?,
            matrix_from_rows(&self.dynamics.b, "dynamics.b")?,
        )?;

        let (trigger, per_agent) = match &self.trigger.per_agent {
            Some(list) => {
                let pairs: Vec<(f64, f64)> = list.iter().map(|p| (p.beta, p.lambda)).collect();
                (
                    TriggerParams::from_per_agent(&pairs, self.trigger.gamma)?,
                    Some(pairs),
                )
            }
            None => {
                let beta = self.trigger.beta.ok_or_else(|| {
                    Error::Scenario("trigger.beta required without per_agent".into())
                })?;
                let lambda = self.trigger.lambda.ok_or_else(|| {
                    Error::Scenario("trigger.lambda required without per_agent".into())
                })?;
                (TriggerParams::new(beta, lambda, self.trigger.gamma)?, None)
            }
        };

        let n = dynamics.n();
        let num_agents = graph.n_agents();
        let sim = &self.simulation;
        let (x0, seed) = match (&sim.x0, sim.x0_seed) {
            (Some(rows), None) => {
                if rows.len() != num_agents || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Scenario(format!(
                        "x0 must be {num_agents} rows of {n} entries"
                    )));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                (RVector::from_vec(flat), None)
            }
            (None, Some(seed)) => {
                let scale = sim.x0_scale.unwrap_or(100.0);
                if !(scale > 0.0) {
                    return Err(Error::Scenario(format!("x0_scale must be > 0, got {scale}")));
                }
                (draw_x0(seed, scale, num_agents * n), Some(seed))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Scenario("give either x0 or x0_seed, not both".into()));
            }
            (None, None) => {
                return Err(Error::Scenario("simulation needs x0 or x0_seed".into()));
            }
        };

        let mut scenario = Scenario {
            graph,
            dynamics,
            trigger,
            per_agent_trigger: per_agent,
            alpha: self.controller.alpha,
            c_safety: self.controller.c_safety,
            delay: sim.delay,
            t_end: sim.t_end,
            step: sim.step,
            x0,
            seed,
            hash: String::new(),
        };
        scenario.hash = scenario.content_hash();
        Ok(scenario)
    }
}

/// Seeded initial states: uniform entries in [−scale, scale].
pub fn draw_x0(seed: u64, scale: f64, len: usize) -> RVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RVector::from_iterator(len, (0..len).map(|_| rng.random_range(-scale..=scale)))
}

/// Command-line overrides applied on top of a resolved scenario. The
/// content hash is recomputed, so artifacts always reflect the effective
/// configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub c_safety: Option<f64>,
    pub delay: Option<f64>,
    pub t_end: Option<f64>,
    pub step: Option<f64>,
    /// Replace x0 with a seeded draw.
    pub seed: Option<u64>,
    pub x0_scale: Option<f64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.alpha.is_none()
            && self.c_safety.is_none()
            && self.delay.is_none()
            && self.t_end.is_none()
            && self.step.is_none()
            && self.seed.is_none()
    }
}

impl Scenario {
    pub fn apply_overrides(mut self, o: &Overrides) -> Result<Self> {
        if let Some(a) = o.alpha {
            if !(a > 0.0) {
                return Err(Error::Scenario(format!("alpha override must be > 0, got {a}")));
            }
            self.alpha = Some(a);
        }
        if let Some(c) = o.c_safety {
            if !(c >= 1.0) {
                return Err(Error::Scenario(format!(
                    "c_safety override must be ≥ 1, got {c}"
                )));
            }
            self.c_safety = Some(c);
        }
        if let Some(d) = o.delay {
            if !(d >= 0.0) {
                return Err(Error::Scenario(format!("delay override must be ≥ 0, got {d}")));
            }
            self.delay = d;
        }
        if let Some(t) = o.t_end {
            if !(t >= 0.0) {
                return Err(Error::Scenario(format!("t_end override must be ≥ 0, got {t}")));
            }
            self.t_end = t;
        }
        if let Some(s) = o.step {
            if !(s > 0.0) {
                return Err(Error::Scenario(format!("step override must be > 0, got {s}")));
            }
            self.step = Some(s);
        }
        if let Some(seed) = o.seed {
            let scale = o.x0_scale.unwrap_or(100.0);
            if !(scale > 0.0) {
                return Err(Error::Scenario(format!("x0_scale must be > 0, got {scale}")));
            }
            self.x0 = draw_x0(seed, scale, self.x0.len());
            self.seed = Some(seed);
        }
        self.hash = self.content_hash();
        Ok(self)
    }
}

impl Scenario {
    /// Canonical content hash over every resolved field; floats are hashed
    /// by their bit patterns, so the hash is exact and platform-stable.
    fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        let feed_f64 = |h: &mut Sha256, v: f64| h.update(v.to_bits().to_le_bytes());
        hasher.update(b"etcon.scenario.v1\0");
        hasher.update((self.graph.n_agents() as u64).to_le_bytes());
        for (i, j) in self.graph.edges() {
            hasher.update((i as u64).to_le_bytes());
            hasher.update((j as u64).to_le_bytes());
        }
        for &dim in &[
            self.dynamics.n() as u64,
            self.dynamics.m() as u64,
        ] {
            hasher.update(dim.to_le_bytes());
        }
        for v in self.dynamics.a().iter() {
            feed_f64(&mut hasher, *v);
        }
        for v in self.dynamics.b().iter() {
            feed_f64(&mut hasher, *v);
        }
        feed_f64(&mut hasher, self.trigger.beta);
        feed_f64(&mut hasher, self.trigger.lambda);
        feed_f64(&mut hasher, self.trigger.gamma.unwrap_or(f64::NAN));
        if let Some(per) = &self.per_agent_trigger {
            for &(b, l) in per {
                feed_f64(&mut hasher, b);
                feed_f64(&mut hasher, l);
            }
        }
        feed_f64(&mut hasher, self.alpha.unwrap_or(f64::NAN));
        feed_f64(&mut hasher, self.c_safety.unwrap_or(f64::NAN));
        feed_f64(&mut hasher, self.delay);
        feed_f64(&mut hasher, self.t_end);
        feed_f64(&mut hasher, self.step.unwrap_or(f64::NAN));
        for v in self.x0.iter() {
            feed_f64(&mut hasher, *v);
        }
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Load and resolve a scenario from disk.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
    let file = ScenarioFile::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    file.resolve(base)
}
