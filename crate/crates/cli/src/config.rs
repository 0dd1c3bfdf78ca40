//! Experiment configuration (JSON) and its resolution into core objects.

use std::path::{Path, PathBuf};

use dda_core::algorithms::{Algorithm, StepRule};
use dda_core::linalg::Matrix;
use dda_core::network::{BetaMode, GossipLaw, Graph, MixingModel};
use dda_core::problems::{
    generate_lasso_instance, generate_quadratic_instance, load_csv_partitioned, logistic_instance,
    synthetic_logistic_dataset, LassoParams, QuadraticParams,
};
use dda_core::proximal::Regularizer;
use dda_core::rng::stream;
use dda_core::{MixingModel64, ProblemInstance64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Stream used for random base topologies.
pub const GRAPH_STREAM: &str = "graph";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    pub problem: ProblemSpec,
    /// Replaces the `(L, μ)` estimated from the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSpec>,
    pub network: NetworkSpec,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub monitors: MonitorSpec,
    #[serde(default)]
    pub reference: ReferenceSpec,
    /// `β` evaluation; exact when the support is small enough, else 10⁵ samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaMode>,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_rounds() -> usize {
    1000
}

fn default_algorithms() -> Vec<AlgorithmSpec> {
    vec![AlgorithmSpec::default_for(Algorithm::Dda)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `ℓ₂`-regularized logistic loss with an `φ‖·‖₁` penalty.
    Logistic {
        data: LogisticData,
        mu: f64,
        #[serde(default)]
        phi: f64,
    },
    /// Least squares over an `ℓ₁` ball.
    Lasso {
        #[serde(default)]
        params: LassoParams,
    },
    Quadratic {
        #[serde(default)]
        params: QuadraticParams,
        #[serde(default)]
        regularizer: RegularizerSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum LogisticData {
    Synthetic { agents: usize, samples_per_agent: usize, dim: usize },
    /// Numeric CSV, label in the last column.
    Csv {
        path: PathBuf,
        agents: usize,
        samples_total: usize,
        #[serde(default = "yes")]
        shuffle: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizerSpec {
    #[default]
    Zero,
    L1 {
        weight: f64,
    },
    L1Ball {
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    pub smoothness: Option<f64>,
    pub modulus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSpec {
    /// Metropolis weights of a base graph, every round.
    Fixed { graph: GraphSpec },
    /// A mixing matrix read from a whitespace-separated file.
    Matrix { path: PathBuf },
    Gossip {
        graph: GraphSpec,
        #[serde(default)]
        law: GossipLaw,
    },
    /// Every edge active with probability `activation`.
    Bernoulli { graph: GraphSpec, activation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Cycle { nodes: usize },
    Grid { rows: usize, cols: usize },
    Complete { nodes: usize },
    ErdosRenyi { nodes: usize, sparsity: f64 },
    /// Edge list file, one `i j` pair per line.
    File {
        path: PathBuf,
        #[serde(default)]
        nodes: Option<usize>,
    },
}

/// A step size given directly or relative to `ā` or `1/L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Value(f64),
    Abar { abar_factor: f64 },
    InverseSmoothness { over_l: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Dda {
        #[serde(default = "half_abar")]
        step: StepSpec,
    },
    Cdda {
        #[serde(default)]
        rule: StepRule,
    },
    PgExtra {
        #[serde(default = "half_over_l")]
        step: StepSpec,
    },
    P2d2 {
        #[serde(default = "half_over_l")]
        step: StepSpec,
        #[serde(default = "half")]
        alpha: f64,
    },
    Dsm {
        #[serde(default)]
        rule: StepRule,
    },
}

fn half_abar() -> StepSpec {
    StepSpec::Abar { abar_factor: 0.5 }
}

fn half_over_l() -> StepSpec {
    StepSpec::InverseSmoothness { over_l: 0.5 }
}

fn half() -> f64 {
    0.5
}

impl AlgorithmSpec {
    pub fn default_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Dda => AlgorithmSpec::Dda { step: half_abar() },
            Algorithm::Cdda => AlgorithmSpec::Cdda { rule: StepRule::default() },
            Algorithm::PgExtra => AlgorithmSpec::PgExtra { step: half_over_l() },
            Algorithm::P2d2 => AlgorithmSpec::P2d2 { step: half_over_l(), alpha: half() },
            Algorithm::Dsm => AlgorithmSpec::Dsm { rule: StepRule::default() },
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            AlgorithmSpec::Dda { .. } => Algorithm::Dda,
            AlgorithmSpec::Cdda { .. } => Algorithm::Cdda,
            AlgorithmSpec::PgExtra { .. } => Algorithm::PgExtra,
            AlgorithmSpec::P2d2 { .. } => Algorithm::P2d2,
            AlgorithmSpec::Dsm { .. } => Algorithm::Dsm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSpec {
    pub conservation: bool,
    pub deviation: bool,
    /// Bound margins for dual averaging runs.
    pub bounds: bool,
    pub local_objectives: bool,
}

impl Default for MonitorSpec {
    fn default() -> Self {
        Self { conservation: true, deviation: true, bounds: true, local_objectives: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub cache: bool,
    /// Defaults to `<out>/cache`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            tol: dda_core::algorithms::REFERENCE_TOL,
            max_iter: dda_core::algorithms::REFERENCE_MAX_ITER,
            cache: true,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Steps as multiples of `ā`.
    pub abar_factors: Vec<f64>,
    /// Absolute steps, used instead of `abar_factors` when non-empty.
    pub steps: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { abar_factors: vec![0.1, 0.5, 0.9], steps: Vec::new() }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{e}")))
    }

    /// Reads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ProblemSpec::Logistic { data: LogisticData::Csv { path, .. }, .. } = &mut self.problem {
            fix(path);
        }
        match &mut self.network {
            NetworkSpec::Matrix { path } => fix(path),
            NetworkSpec::Fixed { graph } | NetworkSpec::Gossip { graph, .. } | NetworkSpec::Bernoulli { graph, .. } => {
                if let GraphSpec::File { path, .. } = graph {
                    fix(path);
                }
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("configs serialize").as_bytes())
    }

    /// Key of the reference solution: everything that determines the instance.
    pub fn problem_hash(&self) -> String {
        let key = serde_json::json!({
            "problem": self.problem,
            "constants": self.constants,
            "seed": self.seed,
            "tol": self.reference.tol,
            "max_iter": self.reference.max_iter,
        });
        sha256_hex(key.to_string().as_bytes())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.reference.cache_dir.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    /// Keeps the listed algorithms, taking their settings from the config
    /// when present and defaults otherwise.
    pub fn select_algorithms(&mut self, names: &str) -> Result<(), CliError> {
        let mut chosen = Vec::new();
        for name in names.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let algorithm = Algorithm::from_name(name).ok_or_else(|| {
                let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                CliError::Config(format!("--algos: unknown algorithm {name:?} (known: {})", known.join(", ")))
            })?;
            let spec = self
                .algorithms
                .iter()
                .find(|s| s.algorithm() == algorithm)
                .cloned()
                .unwrap_or_else(|| AlgorithmSpec::default_for(algorithm));
            chosen.push(spec);
        }
        if chosen.is_empty() {
            return Err(CliError::Config("--algos: empty list".into()));
        }
        self.algorithms = chosen;
        Ok(())
    }

    /// Field-level checks that do not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: String| Err(CliError::Config(format!("{field}: {why}")));
        if self.rounds == 0 {
            return bad("rounds", "must be positive".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms", "at least one algorithm is required".into());
        }
        for (k, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..k].iter().any(|b| b.algorithm() == a.algorithm()) {
                return bad("algorithms", format!("{} listed twice", a.algorithm().name()));
            }
            let step = match a {
                AlgorithmSpec::Dda { step } | AlgorithmSpec::PgExtra { step } | AlgorithmSpec::P2d2 { step, .. } => {
                    Some(step)
                }
                _ => None,
            };
            let value = step.map(|s| match *s {
                StepSpec::Value(v) | StepSpec::Abar { abar_factor: v } | StepSpec::InverseSmoothness { over_l: v } => v,
            });
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(&format!("algorithms[{k}].step"), format!("must be finite and > 0, got {v}"));
                }
            }
            if let AlgorithmSpec::P2d2 { alpha, .. } = a {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return bad(&format!("algorithms[{k}].alpha"), format!("must lie in (0, 1], got {alpha}"));
                }
            }
        }
        if !(self.reference.tol > 0.0) {
            return bad("reference.tol", format!("must be > 0, got {}", self.reference.tol));
        }
        if let NetworkSpec::Bernoulli { activation, .. } = self.network {
            if !(0.0..=1.0).contains(&activation) {
                return bad("network.activation", format!("must lie in [0, 1], got {activation}"));
            }
        }
        Ok(())
    }

    pub fn build_instance(&self) -> Result<ProblemInstance64, CliError> {
        let inst = match &self.problem {
            ProblemSpec::Logistic { data, mu, phi } => {
                let dataset = match data {
                    LogisticData::Synthetic { agents, samples_per_agent, dim } => {
                        synthetic_logistic_dataset(self.seed, *agents, *samples_per_agent, *dim)?
                    }
                    LogisticData::Csv { path, agents, samples_total, shuffle } => {
                        load_csv_partitioned(path, *agents, *samples_total, shuffle.then_some(self.seed))?
                    }
                };
                logistic_instance(&dataset, *mu, *phi)?
            }
            ProblemSpec::Lasso { params } => generate_lasso_instance(params, self.seed)?.0,
            ProblemSpec::Quadratic { params, regularizer } => {
                generate_quadratic_instance(params, regularizer.build()?, self.seed)?
            }
        };
        match self.constants {
            Some(c) => {
                let l = c.smoothness.unwrap_or(inst.smoothness());
                let mu = c.modulus.unwrap_or(inst.modulus());
                Ok(inst.with_constants(l, mu)?)
            }
            None => Ok(inst),
        }
    }

    pub fn build_network(&self) -> Result<MixingModel64, CliError> {
        let model = match &self.network {
            NetworkSpec::Fixed { graph } => MixingModel::time_invariant(self.build_graph(graph)?.metropolis_matrix())?,
            NetworkSpec::Matrix { path } => MixingModel::time_invariant(read_matrix(path)?)?,
            NetworkSpec::Gossip { graph, law } => MixingModel::gossip(self.build_graph(graph)?, *law)?,
            NetworkSpec::Bernoulli { graph, activation } => MixingModel::bernoulli(self.build_graph(graph)?, *activation)?,
        };
        Ok(model)
    }

    fn build_graph(&self, spec: &GraphSpec) -> Result<Graph, CliError> {
        Ok(match spec {
            GraphSpec::Cycle { nodes } => Graph::cycle(*nodes)?,
            GraphSpec::Grid { rows, cols } => Graph::grid(*rows, *cols)?,
            GraphSpec::Complete { nodes } => Graph::complete(*nodes)?,
            GraphSpec::ErdosRenyi { nodes, sparsity } => {
                Graph::erdos_renyi(*nodes, *sparsity, &mut stream(self.seed, GRAPH_STREAM))?
            }
            GraphSpec::File { path, nodes } => Graph::read_edge_list(path, *nodes)?,
        })
    }
}

impl RegularizerSpec {
    pub fn build(self) -> Result<Regularizer<f64>, CliError> {
        Ok(match self {
            RegularizerSpec::Zero => Regularizer::Zero,
            RegularizerSpec::L1 { weight } => Regularizer::l1(weight)?,
            RegularizerSpec::L1Ball { radius } => Regularizer::l1_ball(radius)?,
        })
    }
}

/// Whitespace-separated rows; `#` starts a comment.
pub fn read_matrix(path: &Path) -> Result<Matrix<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read matrix {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), k + 1)))?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("{}: expected a non-empty square matrix", path.display())));
    }
    Ok(Matrix::from_rows(&rows).expect("rows checked square"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves `--algos`, `--seed`, `--T` and `--out` on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub algos: Option<String>,
    pub rounds: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(t) = self.rounds {
            cfg.rounds = t;
        }
        if let Some(a) = &self.algos {
            cfg.select_algorithms(a)?;
        }
        cfg.validate()
    }
}

/// The `β` evaluation mode actually used for a model.
pub fn beta_mode_for(cfg: &ExperimentConfig, model: &MixingModel64) -> BetaMode {
    cfg.beta.unwrap_or(if model.outcomes().is_some() {
        BetaMode::Exact
    } else {
        BetaMode::MonteCarlo { samples: 100_000 }
    })
}
