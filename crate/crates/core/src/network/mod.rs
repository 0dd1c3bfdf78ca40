//! Stochastic communication models: per-round doubly stochastic mixing
//! matrices and their contraction factor `β = √ρ(E[PᵀP] − 𝟏𝟏ᵀ/n)`.

mod graph;

pub use graph::Graph;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::Real;

/// `I − ½(e_i − e_j)(e_i − e_j)ᵀ`: nodes `i` and `j` average their states.
pub fn gossip_matrix<T: Real>(i: usize, j: usize, nodes: usize) -> Result<Matrix<T>> {
    if i == j {
        return Err(Error::param("edge", format!("gossip endpoints must differ, got ({i}, {i})")));
    }
    if i >= nodes || j >= nodes {
        return Err(Error::param("edge", format!("({i}, {j}) out of range for {nodes} nodes")));
    }
    let half = T::lit(0.5);
    let mut p = Matrix::identity(nodes);
    p.set(i, i, half);
    p.set(j, j, half);
    p.set(i, j, half);
    p.set(j, i, half);
    Ok(p)
}

/// How a gossip round picks its link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GossipLaw {
    /// A uniformly random node wakes up and picks one of its `|N_i| + 1`
    /// slots uniformly; the self slot is an idle round. Edge `(i, j)` fires
    /// with probability `1/(n(|N_i|+1)) + 1/(n(|N_j|+1))`.
    #[default]
    NeighborWeighted,
    /// Every edge fires with probability `1/|E|`.
    UniformEdge,
}

/// A distribution over doubly stochastic matrices, sampled independently
/// every round.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingModel<T> {
    TimeInvariant(Matrix<T>),
    Gossip { graph: Graph, law: GossipLaw, edge_probabilities: Vec<f64>, idle_probability: f64 },
    Bernoulli { graph: Graph, activation: f64 },
}

impl<T: Real> MixingModel<T> {
    pub fn time_invariant(p: Matrix<T>) -> Result<Self> {
        validate_doubly_stochastic(&p)?.into_result()?;
        Ok(MixingModel::TimeInvariant(p))
    }

    pub fn gossip(graph: Graph, law: GossipLaw) -> Result<Self> {
        if graph.edges().is_empty() {
            return Err(Error::param("graph", "gossip needs at least one edge"));
        }
        let n = graph.nodes() as f64;
        let edge_probabilities: Vec<f64> = match law {
            GossipLaw::NeighborWeighted => graph
                .edges()
                .iter()
                .map(|&(i, j)| 1.0 / (n * (graph.degree(i) + 1) as f64) + 1.0 / (n * (graph.degree(j) + 1) as f64))
                .collect(),
            GossipLaw::UniformEdge => vec![1.0 / graph.edges().len() as f64; graph.edges().len()],
        };
        let idle_probability = (1.0 - edge_probabilities.iter().sum::<f64>()).max(0.0);
        Ok(MixingModel::Gossip { graph, law, edge_probabilities, idle_probability })
    }

    pub fn bernoulli(graph: Graph, activation: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&activation) {
            return Err(Error::param("activation", "must lie in [0, 1]"));
        }
        Ok(MixingModel::Bernoulli { graph, activation })
    }

    pub fn nodes(&self) -> usize {
        match self {
            MixingModel::TimeInvariant(p) => p.rows(),
            MixingModel::Gossip { graph, .. } | MixingModel::Bernoulli { graph, .. } => graph.nodes(),
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        match self {
            MixingModel::TimeInvariant(_) => true,
            MixingModel::Bernoulli { activation, .. } => *activation == 0.0 || *activation == 1.0,
            MixingModel::Gossip { .. } => false,
        }
    }

    /// Draws one round's mixing matrix.
    pub fn sample(&self, rng: &mut impl Rng) -> Matrix<T> {
        match self {
            MixingModel::TimeInvariant(p) => p.clone(),
            MixingModel::Gossip { graph, law, .. } => {
                let n = graph.nodes();
                let edge = match law {
                    GossipLaw::NeighborWeighted => {
                        let u = rng.gen_range(0..n);
                        let nb = graph.neighbors(u);
                        let slot = rng.gen_range(0..=nb.len());
                        nb.get(slot).map(|&v| (u, v))
                    }
                    GossipLaw::UniformEdge => Some(graph.edges()[rng.gen_range(0..graph.edges().len())]),
                };
                match edge {
                    Some((u, v)) => gossip_matrix(u, v, n).expect("graph edges are valid"),
                    None => Matrix::identity(n),
                }
            }
            MixingModel::Bernoulli { graph, activation } => {
                let kept: Vec<(usize, usize)> =
                    graph.edges().iter().copied().filter(|_| rng.gen_bool(*activation)).collect();
                graph::metropolis_of_edges(graph.nodes(), kept.into_iter())
            }
        }
    }

    /// The finite support of the model as `(probability, matrix)` pairs, or
    /// `None` when it is too large to enumerate.
    pub fn outcomes(&self) -> Option<Vec<(f64, Matrix<T>)>> {
        const MAX_BERNOULLI_EDGES: usize = 12;
        match self {
            MixingModel::TimeInvariant(p) => Some(vec![(1.0, p.clone())]),
            MixingModel::Gossip { graph, edge_probabilities, idle_probability, .. } => {
                let n = graph.nodes();
                let mut out: Vec<(f64, Matrix<T>)> = graph
                    .edges()
                    .iter()
                    .zip(edge_probabilities)
                    .map(|(&(i, j), &p)| (p, gossip_matrix(i, j, n).expect("graph edges are valid")))
                    .collect();
                if *idle_probability > 0.0 {
                    out.push((*idle_probability, Matrix::identity(n)));
                }
                Some(out)
            }
            MixingModel::Bernoulli { graph, activation } => {
                let edges = graph.edges();
                if edges.len() > MAX_BERNOULLI_EDGES {
                    return None;
                }
                let out = (0u32..1 << edges.len())
                    .map(|mask| {
                        let kept = (0..edges.len()).filter(|k| mask >> k & 1 == 1);
                        let on = mask.count_ones() as i32;
                        let prob = activation.powi(on) * (1.0 - activation).powi(edges.len() as i32 - on);
                        (prob, graph::metropolis_of_edges(graph.nodes(), kept.map(|k| edges[k])))
                    })
                    .filter(|(p, _)| *p > 0.0)
                    .collect();
                Some(out)
            }
        }
    }
}

/// How `β` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BetaMode {
    Exact,
    MonteCarlo { samples: usize },
}

/// `√ρ(E[PᵀP] − 𝟏𝟏ᵀ/n)` by exact enumeration or a sample mean.
pub fn beta_of_model<T: Real>(model: &MixingModel<T>, mode: BetaMode, rng: &mut impl Rng) -> Result<T> {
    let n = model.nodes();
    let mut second_moment = Matrix::<T>::zeros(n, n);
    match mode {
        BetaMode::Exact => {
            let outcomes = model.outcomes().ok_or_else(|| {
                Error::Inapplicable("support too large for exact enumeration; use Monte-Carlo".into())
            })?;
            for (prob, p) in outcomes {
                second_moment = second_moment.add(&p.gram().scale(T::lit(prob)));
            }
        }
        BetaMode::MonteCarlo { samples } => {
            if samples < 100 {
                return Err(Error::param("samples", format!("Monte-Carlo needs at least 100 samples, got {samples}")));
            }
            for _ in 0..samples {
                let p = model.sample(rng);
                validate_doubly_stochastic(&p)?.into_result()?;
                second_moment = second_moment.add(&p.gram());
            }
            second_moment = second_moment.scale(T::one() / T::count(samples));
        }
    }
    let centered = second_moment.sub(&Matrix::averaging(n));
    let radius = symmetric_eigenvalues(&centered).into_iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    // a non-contracting direction comes back as 1 up to rounding
    if (T::one() - radius).abs() <= T::lit(1e-12) * T::count(n) {
        return Ok(T::one());
    }
    Ok(radius.sqrt())
}

/// Row/column sum and entry-range violations of a candidate mixing matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticityReport {
    pub max_row_violation: f64,
    pub max_col_violation: f64,
    /// Distance of the worst entry outside `[0, 1]`.
    pub max_entry_violation: f64,
    pub tolerance: f64,
}

impl StochasticityReport {
    pub fn max_violation(&self) -> f64 {
        self.max_row_violation.max(self.max_col_violation).max(self.max_entry_violation)
    }

    pub fn is_ok(&self) -> bool {
        self.max_violation() <= self.tolerance
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::NotDoublyStochastic { max_violation: self.max_violation() })
        }
    }
}

/// Checks `P𝟏 = 𝟏`, `𝟏ᵀP = 𝟏ᵀ` and `0 ≤ p_ij ≤ 1` to `1e−12` (or a few ulps
/// per row for single precision). Symmetry is not assumed.
pub fn validate_doubly_stochastic<T: Real>(p: &Matrix<T>) -> Result<StochasticityReport> {
    if !p.is_square() {
        return Err(Error::DimensionMismatch { expected: p.rows(), found: p.cols() });
    }
    let n = p.rows();
    let mut report = StochasticityReport {
        max_row_violation: 0.0,
        max_col_violation: 0.0,
        max_entry_violation: 0.0,
        tolerance: 1e-12_f64.max(n as f64 * T::epsilon().to_f64_lossy()),
    };
    let mut cols = vec![T::zero(); n];
    for i in 0..n {
        let mut row = T::zero();
        for (j, &v) in p.row(i).iter().enumerate() {
            row += v;
            cols[j] += v;
            let out = (-v).max(v - T::one()).max(T::zero()).to_f64_lossy();
            report.max_entry_violation = report.max_entry_violation.max(if v.is_finite() { out } else { f64::INFINITY });
        }
        report.max_row_violation = report.max_row_violation.max((row - T::one()).abs().to_f64_lossy());
    }
    for c in cols {
        report.max_col_violation = report.max_col_violation.max((c - T::one()).abs().to_f64_lossy());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, NETWORK};

    #[test]
    fn gossip_matrix_examples() {
        let p: Matrix<f64> = gossip_matrix(0, 1, 3).unwrap();
        assert_eq!(p.to_rows(), vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0]]);
        let q: Matrix<f64> = gossip_matrix(0, 1, 2).unwrap();
        assert_eq!(q.to_rows(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(gossip_matrix::<f64>(1, 1, 3).is_err());
    }

    #[test]
    fn gossip_matrices_are_idempotent_projectors() {
        let g = Graph::complete(5).unwrap();
        for &(i, j) in g.edges() {
            let p: Matrix<f64> = gossip_matrix(i, j, 5).unwrap();
            assert!(validate_doubly_stochastic(&p).unwrap().is_ok());
            assert_eq!(p.matmul(&p).max_abs_diff(&p), 0.0);
        }
    }

    #[test]
    fn validator_flags_column_sums() {
        let bad = Matrix::from_rows(&[vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let r = validate_doubly_stochastic(&bad).unwrap();
        assert!(!r.is_ok());
        assert!((r.max_col_violation - 0.1).abs() < 1e-15);
        assert_eq!(r.max_row_violation, 0.0);
        assert!(validate_doubly_stochastic(&Matrix::<f64>::identity(4)).unwrap().is_ok());
        let neg = Matrix::from_rows(&[vec![1.5, -0.5], vec![-0.5, 1.5]]).unwrap();
        assert!(!validate_doubly_stochastic(&neg).unwrap().is_ok());
    }

    #[test]
    fn bernoulli_degenerate_activations() {
        let g = Graph::cycle(5).unwrap();
        let mut rng = stream(1, NETWORK);
        let full = MixingModel::<f64>::bernoulli(g.clone(), 1.0).unwrap();
        let none = MixingModel::<f64>::bernoulli(g.clone(), 0.0).unwrap();
        for _ in 0..10 {
            assert_eq!(full.sample(&mut rng), g.metropolis_matrix());
            assert_eq!(none.sample(&mut rng), Matrix::identity(5));
        }
    }

    #[test]
    fn neighbor_weighted_law_has_idle_mass() {
        let m = MixingModel::<f64>::gossip(Graph::cycle(10).unwrap(), GossipLaw::NeighborWeighted).unwrap();
        match &m {
            MixingModel::Gossip { edge_probabilities, idle_probability, .. } => {
                assert!(edge_probabilities.iter().all(|&p| (p - 1.0 / 15.0).abs() < 1e-15));
                assert!((idle_probability - 1.0 / 3.0).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        let total: f64 = m.outcomes().unwrap().iter().map(|(p, _)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_special_cases() {
        let mut rng = stream(0, NETWORK);
        let two = MixingModel::<f64>::gossip(Graph::cycle(2).unwrap(), GossipLaw::UniformEdge).unwrap();
        assert!(beta_of_model(&two, BetaMode::Exact, &mut rng).unwrap() <= 1e-12);
        let avg = MixingModel::<f64>::time_invariant(Matrix::averaging(4)).unwrap();
        assert!(beta_of_model(&avg, BetaMode::Exact, &mut rng).unwrap() <= 1e-12);
        let disconnected = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let m = MixingModel::<f64>::gossip(disconnected, GossipLaw::NeighborWeighted).unwrap();
        assert_eq!(beta_of_model(&m, BetaMode::Exact, &mut rng).unwrap(), 1.0);
        assert!(beta_of_model(&m, BetaMode::MonteCarlo { samples: 10 }, &mut rng).is_err());
    }

    #[test]
    fn connected_gossip_contracts() {
        let mut rng = stream(0, NETWORK);
        let graphs =
            [Graph::cycle(12).unwrap(), Graph::cycle(3).unwrap(), Graph::grid(3, 4).unwrap(), Graph::complete(6).unwrap()];
        for g in graphs {
            for law in [GossipLaw::NeighborWeighted, GossipLaw::UniformEdge] {
                let m = MixingModel::<f64>::gossip(g.clone(), law).unwrap();
                let beta = beta_of_model(&m, BetaMode::Exact, &mut rng).unwrap();
                assert!(beta <= 1.0 - 1e-6, "beta = {beta}");
            }
        }
    }

    #[test]
    fn bernoulli_exact_matches_monte_carlo() {
        let mut rng = stream(4, NETWORK);
        let m = MixingModel::<f64>::bernoulli(Graph::cycle(5).unwrap(), 0.5).unwrap();
        let exact = beta_of_model(&m, BetaMode::Exact, &mut rng).unwrap();
        let mc = beta_of_model(&m, BetaMode::MonteCarlo { samples: 20_000 }, &mut rng).unwrap();
        assert!((exact - mc).abs() < 3.0 / (20_000f64).sqrt() + 1e-10, "{exact} vs {mc}");
        let big = MixingModel::<f64>::bernoulli(Graph::complete(8).unwrap(), 0.5).unwrap();
        assert!(beta_of_model(&big, BetaMode::Exact, &mut rng).is_err());
    }

    #[test]
    fn uniform_gossip_frequencies() {
        let g = Graph::complete(5).unwrap();
        let m = MixingModel::<f64>::gossip(g.clone(), GossipLaw::NeighborWeighted).unwrap();
        let mut rng = stream(11, NETWORK);
        let samples = 100_000;
        let mut counts = vec![0usize; g.edges().len()];
        for _ in 0..samples {
            let p = m.sample(&mut rng);
            if let Some(k) = g.edges().iter().position(|&(i, j)| p.get(i, j) == 0.5) {
                counts[k] += 1;
            }
        }
        // every edge has probability 2/(5·5) on the complete graph
        let prob = 2.0 / 25.0;
        let se = (samples as f64 * prob * (1.0 - prob)).sqrt();
        for c in counts {
            assert!((c as f64 - samples as f64 * prob).abs() <= 3.0 * se + 1.0, "count {c}");
        }
    }
}
