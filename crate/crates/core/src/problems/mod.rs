//! Local objective families, problem instances and their smoothness /
//! strong-convexity constants.

mod csv_data;
mod generate;

pub use csv_data::load_csv_partitioned;
pub use generate::{
    generate_lasso_instance, generate_quadratic_instance, synthetic_logistic_dataset, LassoParams,
    QuadraticParams,
};


use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm_sq, power_iteration_gram, symmetric_eigenvalues, Matrix};
use crate::proximal::{DistanceGenerator, Regularizer};
use crate::Real;

/// Power-iteration settings for smoothness estimation.
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;

/// One agent's private smooth objective `f_i`.
#[derive(Debug, Clone)]
pub enum LocalObjective<T> {
    /// `(1/m_i) Σ_j ln(1 + exp(−y_j M_jᵀx)) + (μ/2)‖x‖²`
    Logistic { features: Matrix<T>, labels: Vec<T>, mu: T },
    /// `½‖b − Cx‖²`
    LeastSquares { design: Matrix<T>, target: Vec<T> },
}

impl<T: Real> LocalObjective<T> {
    pub fn dim(&self) -> usize {
        match self {
            LocalObjective::Logistic { features, .. } => features.cols(),
            LocalObjective::LeastSquares { design, .. } => design.cols(),
        }
    }

    pub fn value_grad(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        match self {
            LocalObjective::Logistic { features, labels, mu } => logistic_value_grad(x, features, labels, *mu),
            LocalObjective::LeastSquares { design, target } => lasso_value_grad(x, design, target),
        }
    }

    pub fn value(&self, x: &[T]) -> Result<T> {
        match self {
            LocalObjective::Logistic { features, labels, mu } => {
                check_dim(features.cols(), x.len())?;
                let inv_m = T::one() / T::count(features.rows().max(1));
                let loss: T = (0..features.rows())
                    .map(|j| softplus(-labels[j] * dot(features.row(j), x)))
                    .sum();
                Ok(loss * inv_m + T::lit(0.5) * *mu * norm_sq(x))
            }
            LocalObjective::LeastSquares { design, target } => {
                check_dim(design.cols(), x.len())?;
                let r = design.matvec(x);
                Ok(T::lit(0.5) * r.iter().zip(target).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>())
            }
        }
    }

    pub fn gradient(&self, x: &[T]) -> Result<Vec<T>> {
        self.value_grad(x).map(|(_, g)| g)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `ln(1 + eᵘ)` without overflow.
#[inline]
fn softplus<T: Real>(u: T) -> T {
    if u > T::zero() {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `1 / (1 + e⁻ᵘ)` without overflow.
#[inline]
fn sigmoid<T: Real>(u: T) -> T {
    if u >= T::zero() {
        T::one() / (T::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (T::one() + e)
    }
}

/// Regularized logistic loss and its gradient.
pub fn logistic_value_grad<T: Real>(x: &[T], features: &Matrix<T>, labels: &[T], mu: T) -> Result<(T, Vec<T>)> {
    check_dim(features.cols(), x.len())?;
    check_dim(features.rows(), labels.len())?;
    let inv_m = T::one() / T::count(features.rows().max(1));
    let mut value = T::zero();
    let mut grad = vec![T::zero(); x.len()];
    for j in 0..features.rows() {
        let row = features.row(j);
        let margin = labels[j] * dot(row, x);
        value += softplus(-margin);
        // d/dx ln(1 + e^{−y Mᵀx}) = −y M σ(−y Mᵀx)
        axpy(&mut grad, -labels[j] * sigmoid(-margin) * inv_m, row);
    }
    value = value * inv_m + T::lit(0.5) * mu * norm_sq(x);
    axpy(&mut grad, mu, x);
    Ok((value, grad))
}

/// `½‖b − Cx‖²` and `Cᵀ(Cx − b)`.
pub fn lasso_value_grad<T: Real>(x: &[T], design: &Matrix<T>, target: &[T]) -> Result<(T, Vec<T>)> {
    check_dim(design.cols(), x.len())?;
    check_dim(design.rows(), target.len())?;
    let residual: Vec<T> = design.matvec(x).iter().zip(target).map(|(&a, &b)| a - b).collect();
    let value = T::lit(0.5) * norm_sq(&residual);
    Ok((value, design.tr_matvec(&residual)))
}

/// One agent's private samples.
#[derive(Debug, Clone)]
pub struct Shard<T> {
    pub features: Matrix<T>,
    pub labels: Vec<T>,
}

/// Per-agent data for the logistic family; labels are in `{−1, +1}`.
#[derive(Debug, Clone)]
pub struct AgentDataset<T> {
    shards: Vec<Shard<T>>,
    /// Whether feature columns were standardized at ingestion.
    pub standardized: bool,
}

impl<T: Real> AgentDataset<T> {
    pub fn new(shards: Vec<Shard<T>>, standardized: bool) -> Result<Self> {
        let dim = shards.first().map_or(0, |s| s.features.cols());
        for (i, s) in shards.iter().enumerate() {
            check_dim(dim, s.features.cols())?;
            check_dim(s.features.rows(), s.labels.len())?;
            if let Some(bad) = s.labels.iter().find(|&&y| y != T::one() && y != -T::one()) {
                return Err(Error::param("labels", format!("agent {i} has label {bad}, expected -1 or +1")));
            }
        }
        Ok(Self { shards, standardized })
    }

    pub fn agents(&self) -> usize {
        self.shards.len()
    }

    pub fn dim(&self) -> usize {
        self.shards.first().map_or(0, |s| s.features.cols())
    }

    pub fn shards(&self) -> &[Shard<T>] {
        &self.shards
    }

    pub fn sample_counts(&self) -> Vec<usize> {
        self.shards.iter().map(|s| s.features.rows()).collect()
    }
}

/// `F = (1/n) Σ f_i + h` together with the constants of its local pieces.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T> {
    locals: Vec<LocalObjective<T>>,
    dim: usize,
    smoothness: T,
    modulus: T,
    regularizer: Regularizer<T>,
    distance: DistanceGenerator<T>,
}

impl<T: Real> ProblemInstance<T> {
    /// Builds an instance and estimates `(L, μ)` from the data.
    pub fn new(locals: Vec<LocalObjective<T>>, regularizer: Regularizer<T>, distance: DistanceGenerator<T>) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::param("locals", "at least one agent is required"));
        }
        let dim = locals[0].dim();
        for l in &locals {
            check_dim(dim, l.dim())?;
        }
        check_dim(dim, distance.dim())?;
        if !regularizer.contains(distance.center()) {
            return Err(Error::param("distance", "the center x0 must lie in dom(h)"));
        }
        let mut inst = Self { locals, dim, smoothness: T::zero(), modulus: T::zero(), regularizer, distance };
        let (l, mu) = estimate_constants(&inst)?;
        inst.smoothness = l;
        inst.modulus = mu;
        Ok(inst)
    }

    /// Overrides the constants handed to the algorithms, e.g. running with
    /// `μ = 0` on a strongly convex problem, or with a conservative `L`.
    pub fn with_constants(mut self, smoothness: T, modulus: T) -> Result<Self> {
        if !(smoothness > T::zero()) || !(modulus >= T::zero()) || modulus > smoothness {
            return Err(Error::param("constants", format!("need L > 0 and 0 <= mu <= L, got L={smoothness}, mu={modulus}")));
        }
        self.smoothness = smoothness;
        self.modulus = modulus;
        Ok(self)
    }

    pub fn with_regularizer(mut self, regularizer: Regularizer<T>) -> Result<Self> {
        if !regularizer.contains(self.distance.center()) {
            return Err(Error::param("distance", "the center x0 must lie in dom(h)"));
        }
        self.regularizer = regularizer;
        Ok(self)
    }

    pub fn agents(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L` of Assumption-1 type: every `∇f_i` is `L`-Lipschitz.
    pub fn smoothness(&self) -> T {
        self.smoothness
    }

    /// `μ`: every `f_i` is `μ`-strongly convex.
    pub fn modulus(&self) -> T {
        self.modulus
    }

    pub fn regularizer(&self) -> &Regularizer<T> {
        &self.regularizer
    }

    pub fn distance(&self) -> &DistanceGenerator<T> {
        &self.distance
    }

    pub fn locals(&self) -> &[LocalObjective<T>] {
        &self.locals
    }

    pub fn local(&self, i: usize) -> &LocalObjective<T> {
        &self.locals[i]
    }

    /// `f(x) = (1/n) Σ f_i(x)`.
    pub fn smooth_value(&self, x: &[T]) -> Result<T> {
        let mut acc = T::zero();
        for l in &self.locals {
            acc += l.value(x)?;
        }
        Ok(acc / T::count(self.locals.len()))
    }

    /// `∇f(x)`.
    pub fn smooth_gradient(&self, x: &[T]) -> Result<Vec<T>> {
        let mut acc = vec![T::zero(); self.dim];
        for (i, l) in self.locals.iter().enumerate() {
            let g = l.gradient(x)?;
            if !all_finite(&g) {
                return Err(Error::NonFiniteGradient { agent: i, round: 0 });
            }
            axpy(&mut acc, T::one(), &g);
        }
        let inv = T::one() / T::count(self.locals.len());
        acc.iter_mut().for_each(|v| *v *= inv);
        Ok(acc)
    }

    /// `F(x) = f(x) + h(x)`.
    pub fn objective(&self, x: &[T]) -> Result<T> {
        Ok(self.smooth_value(x)? + self.regularizer.evaluate(x))
    }
}

/// Smoothness and strong-convexity constants of the local objectives.
///
/// Logistic: `L = max_i λ_max(M_iᵀM_i)/(4 m_i) + μ_i` by power iteration and
/// `μ = min_i μ_i`. Least squares: `L = max_i λ_max(C_iᵀC_i)` and
/// `μ = min_i λ_min(C_iᵀC_i)`, with numerically singular Gram matrices giving 0.
pub fn estimate_constants<T: Real>(instance: &ProblemInstance<T>) -> Result<(T, T)> {
    let mut smooth = T::zero();
    let mut modulus = T::infinity();
    for local in instance.locals() {
        let (l, mu) = local_constants(local)?;
        smooth = smooth.max(l);
        modulus = modulus.min(mu);
    }
    Ok((smooth, modulus))
}

fn local_constants<T: Real>(local: &LocalObjective<T>) -> Result<(T, T)> {
    match local {
        LocalObjective::Logistic { features, mu, .. } => {
            let p = power_iteration_gram(features, T::lit(POWER_TOL), POWER_MAX_ITER);
            if !p.converged {
                return Err(Error::NotConverged {
                    what: "power iteration",
                    iterations: p.iterations,
                    residual: p.residual.to_f64_lossy(),
                });
            }
            let m = T::count(features.rows().max(1));
            Ok((p.value / (T::lit(4.0) * m) + *mu, *mu))
        }
        LocalObjective::LeastSquares { design, .. } => {
            let ev = symmetric_eigenvalues(&design.gram());
            let top = ev.last().copied().unwrap_or(T::zero());
            let mut low = ev.first().copied().unwrap_or(T::zero());
            let floor = T::count(design.cols().max(design.rows())) * T::epsilon() * top;
            if low <= floor {
                low = T::zero();
            }
            Ok((top, low))
        }
    }
}

/// Logistic instance over a dataset, `φ‖·‖₁` regularizer and `d = ½‖x‖²`.
pub fn logistic_instance<T: Real>(dataset: &AgentDataset<T>, mu: T, phi: T) -> Result<ProblemInstance<T>> {
    if !(mu >= T::zero()) {
        return Err(Error::param("mu", "must be >= 0"));
    }
    let locals = dataset
        .shards()
        .iter()
        .map(|s| LocalObjective::Logistic { features: s.features.clone(), labels: s.labels.clone(), mu })
        .collect();
    let h = if phi > T::zero() { Regularizer::l1(phi)? } else { Regularizer::Zero };
    ProblemInstance::new(locals, h, DistanceGenerator::origin(dataset.dim()))
}
