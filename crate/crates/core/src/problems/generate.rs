use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AgentDataset, LocalObjective, ProblemInstance, Shard};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm1, scaled, symmetric_eigenvalues, Matrix};
use crate::proximal::{DistanceGenerator, Regularizer};
use crate::rng::{stream, StreamRng, DATA, NOISE};
use crate::Real;

fn gaussian(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_matrix<T: Real>(rng: &mut StreamRng, rows: usize, cols: usize) -> Matrix<T> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| T::lit(gaussian(rng))).collect())
}

/// Synthetic sparse recovery instance constrained to an `ℓ₁` ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoParams {
    pub agents: usize,
    pub rows_per_agent: usize,
    pub dim: usize,
    pub nonzero_prob: f64,
    pub noise_std: f64,
    pub ball_factor: f64,
    /// Target `L` after normalization.
    pub smoothness: f64,
    /// Target `μ` after normalization.
    pub modulus: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            agents: 10,
            rows_per_agent: 60,
            dim: 50,
            nonzero_prob: 0.25,
            noise_std: 0.01,
            ball_factor: 1.1,
            smoothness: 1.0,
            modulus: 0.5,
        }
    }
}

/// Generates `(instance, x♯)`.
///
/// Each `C_i` is Gaussian, rescaled globally so that `max_i λ_max(C_iᵀC_i) = L`,
/// then blended as `(1−ρ)C_iᵀC_i + ρL·I` (by scaling `C_i` with `√(1−ρ)` and
/// stacking `√(ρL)·I` rows with zero targets) with `ρ` chosen so the smallest
/// eigenvalue over all agents equals `μ`.
pub fn generate_lasso_instance<T: Real>(params: &LassoParams, seed: u64) -> Result<(ProblemInstance<T>, Vec<T>)> {
    let p = params;
    if p.agents == 0 || p.rows_per_agent == 0 || p.dim == 0 {
        return Err(Error::param("lasso", "agents, rows_per_agent and dim must be positive"));
    }
    if !(0.0..=1.0).contains(&p.nonzero_prob) {
        return Err(Error::param("nonzero_prob", "must lie in [0, 1]"));
    }
    if !(p.noise_std >= 0.0) || !(p.ball_factor > 0.0) {
        return Err(Error::param("lasso", "noise_std must be >= 0 and ball_factor > 0"));
    }
    if !(p.smoothness > 0.0) || !(p.modulus >= 0.0) || p.modulus > p.smoothness {
        return Err(Error::param("lasso", "need smoothness > 0 and 0 <= modulus <= smoothness"));
    }
    let mut data = stream(seed, DATA);
    let mut noise = stream(seed, NOISE);

    let signal: Vec<T> = (0..p.dim)
        .map(|_| {
            let nz = data.gen_bool(p.nonzero_prob);
            let v = gaussian(&mut data);
            if nz {
                T::lit(v)
            } else {
                T::zero()
            }
        })
        .collect();
    let radius = T::lit(p.ball_factor) * norm1(&signal);
    let h = Regularizer::l1_ball(radius)
        .map_err(|_| Error::param("radius", format!("ball radius {radius} must be > 0 (is x♯ zero?)")))?;

    let designs: Vec<Matrix<T>> = (0..p.agents).map(|_| gaussian_matrix(&mut data, p.rows_per_agent, p.dim)).collect();
    let spectra: Vec<Vec<T>> = designs.iter().map(|c| symmetric_eigenvalues(&c.gram())).collect();
    let top = spectra.iter().map(|ev| *ev.last().unwrap()).fold(T::zero(), T::max);
    let target_l = T::lit(p.smoothness);
    let target_mu = T::lit(p.modulus);
    let norm_scale = (target_l / top).sqrt();
    let designs: Vec<Matrix<T>> = designs.iter().map(|c| c.scale(norm_scale)).collect();
    let lowest = spectra
        .iter()
        .map(|ev| ev[0].max(T::zero()) * norm_scale * norm_scale)
        .fold(T::infinity(), T::min);
    let rho = if lowest < target_mu { (target_mu - lowest) / (target_l - lowest) } else { T::zero() };

    let mut locals = Vec::with_capacity(p.agents);
    for c in designs {
        let mut b = c.matvec(&signal);
        for bi in &mut b {
            *bi += T::lit(p.noise_std * gaussian(&mut noise));
        }
        let keep = (T::one() - rho).sqrt();
        let (design, target) = if rho > T::zero() {
            let ridge = Matrix::identity(p.dim).scale((rho * target_l).sqrt());
            let mut t = scaled(&b, keep);
            t.extend(std::iter::repeat_n(T::zero(), p.dim));
            (c.scale(keep).vstack(&ridge), t)
        } else {
            (c, b)
        };
        locals.push(LocalObjective::LeastSquares { design, target });
    }
    let inst = ProblemInstance::new(locals, h, DistanceGenerator::origin(p.dim))?;
    Ok((inst, signal))
}

/// Synthetic quadratics `f_i(x) = ½(x − c_i)ᵀ Q_i (x − c_i)` with the spectrum
/// of every `Q_i` spanning exactly `[μ, L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadraticParams {
    pub agents: usize,
    pub dim: usize,
    pub smoothness: f64,
    pub modulus: f64,
    /// Standard deviation of the per-agent centers `c_i`.
    pub center_scale: f64,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        Self { agents: 5, dim: 30, smoothness: 1.0, modulus: 0.1, center_scale: 1.0 }
    }
}

pub fn generate_quadratic_instance<T: Real>(
    params: &QuadraticParams,
    regularizer: Regularizer<T>,
    seed: u64,
) -> Result<ProblemInstance<T>> {
    let p = params;
    if p.agents == 0 || p.dim == 0 {
        return Err(Error::param("quadratic", "agents and dim must be positive"));
    }
    if !(p.smoothness > 0.0) || !(p.modulus >= 0.0) || p.modulus > p.smoothness {
        return Err(Error::param("quadratic", "need smoothness > 0 and 0 <= modulus <= smoothness"));
    }
    let mut data = stream(seed, DATA);
    let mut locals = Vec::with_capacity(p.agents);
    for _ in 0..p.agents {
        let basis = random_orthogonal::<T>(&mut data, p.dim);
        let eig: Vec<f64> = (0..p.dim)
            .map(|k| match k {
                0 => p.modulus,
                k if k + 1 == p.dim => p.smoothness,
                _ => data.gen_range(p.modulus..=p.smoothness),
            })
            .collect();
        let eig = if p.dim == 1 { vec![p.smoothness] } else { eig };
        // C = diag(√λ) Uᵀ so that CᵀC = U diag(λ) Uᵀ
        let mut design = basis.transpose();
        for (k, lam) in eig.iter().enumerate() {
            let s = T::lit(lam.sqrt());
            design.row_mut(k).iter_mut().for_each(|v| *v *= s);
        }
        let center: Vec<T> = (0..p.dim).map(|_| T::lit(p.center_scale * gaussian(&mut data))).collect();
        let target = design.matvec(&center);
        locals.push(LocalObjective::LeastSquares { design, target });
    }
    ProblemInstance::new(locals, regularizer, DistanceGenerator::origin(p.dim))
}

/// Orthonormal columns by modified Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal<T: Real>(rng: &mut StreamRng, m: usize) -> Matrix<T> {
    let g: Matrix<T> = gaussian_matrix(rng, m, m);
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut v: Vec<T> = (0..m).map(|i| g.get(i, j)).collect();
        for q in &cols {
            let proj = dot(q, &v);
            axpy(&mut v, -proj, q);
        }
        let nv = norm(&v);
        cols.push(scaled(&v, T::one() / nv));
    }
    let mut u = Matrix::zeros(m, m);
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            u.set(i, j, v);
        }
    }
    u
}

/// Synthetic logistic data: Gaussian features scaled by `1/√dim`, labels from a
/// hidden linear model with 10% label noise, evenly split over agents.
pub fn synthetic_logistic_dataset<T: Real>(
    seed: u64,
    agents: usize,
    samples_per_agent: usize,
    dim: usize,
) -> Result<AgentDataset<T>> {
    if agents == 0 || samples_per_agent == 0 || dim == 0 {
        return Err(Error::param("logistic", "agents, samples_per_agent and dim must be positive"));
    }
    let mut data = stream(seed, DATA);
    let mut noise = stream(seed, NOISE);
    let hidden: Vec<f64> = (0..dim).map(|_| gaussian(&mut data)).collect();
    let inv_sqrt = 1.0 / (dim as f64).sqrt();
    let mut shards = Vec::with_capacity(agents);
    for _ in 0..agents {
        let rows: Vec<f64> = (0..samples_per_agent * dim).map(|_| gaussian(&mut data) * inv_sqrt).collect();
        let labels: Vec<T> = rows
            .chunks(dim)
            .map(|r| {
                let clean = dot(r, &hidden) >= 0.0;
                let flip = noise.gen_bool(0.1);
                if clean != flip {
                    T::one()
                } else {
                    -T::one()
                }
            })
            .collect();
        let features = Matrix::from_vec(samples_per_agent, dim, rows.into_iter().map(T::lit).collect());
        shards.push(Shard { features, labels });
    }
    AgentDataset::new(shards, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::estimate_constants;

    #[test]
    fn lasso_generation_is_deterministic() {
        let p = LassoParams { agents: 3, ..Default::default() };
        let (a, xa) = generate_lasso_instance::<f64>(&p, 42).unwrap();
        let (b, xb) = generate_lasso_instance::<f64>(&p, 42).unwrap();
        assert_eq!(xa, xb);
        let probe: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin()).collect();
        assert_eq!(a.objective(&probe).unwrap().to_bits(), b.objective(&probe).unwrap().to_bits());
        let (_, xc) = generate_lasso_instance::<f64>(&p, 43).unwrap();
        assert_ne!(xa, xc);
    }

    #[test]
    fn lasso_generation_hits_target_constants() {
        let p = LassoParams { agents: 4, ..Default::default() };
        let (inst, signal) = generate_lasso_instance::<f64>(&p, 7).unwrap();
        let (l, mu) = estimate_constants(&inst).unwrap();
        assert!((l - 1.0).abs() <= 1e-6, "L = {l}");
        assert!((mu - 0.5).abs() <= 1e-6, "mu = {mu}");
        match inst.regularizer() {
            Regularizer::L1Ball { radius } => assert!((radius - 1.1 * norm1(&signal)).abs() < 1e-12),
            other => panic!("unexpected regularizer {other:?}"),
        }
    }

    #[test]
    fn zero_signal_has_degenerate_radius() {
        let p = LassoParams { agents: 2, nonzero_prob: 0.0, ..Default::default() };
        assert!(generate_lasso_instance::<f64>(&p, 1).is_err());
    }

    #[test]
    fn quadratic_spectrum_is_exact() {
        let p = QuadraticParams { agents: 3, dim: 8, smoothness: 2.0, modulus: 0.25, center_scale: 1.0 };
        let inst = generate_quadratic_instance::<f64>(&p, Regularizer::Zero, 9).unwrap();
        assert!((inst.smoothness() - 2.0).abs() < 1e-12);
        assert!((inst.modulus() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn logistic_dataset_shapes() {
        let d = synthetic_logistic_dataset::<f64>(3, 4, 25, 6).unwrap();
        assert_eq!(d.sample_counts(), vec![25; 4]);
        assert_eq!(d.dim(), 6);
    }
}
