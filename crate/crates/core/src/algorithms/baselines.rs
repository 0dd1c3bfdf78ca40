use serde::{Deserialize, Serialize};

use super::{meta_for, Algorithm, Recorder, RunOptions, RunTrace};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, sub, Matrix};
use crate::network::{validate_doubly_stochastic, MixingModel};
use crate::problems::ProblemInstance;
use crate::proximal::Regularizer;
use crate::rng::{stream, NETWORK};
use crate::Real;

/// Decaying step sizes for the subgradient-type baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `a_t = scale/√(t+1)`.
    InverseSqrt { scale: f64 },
    Constant { step: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::InverseSqrt { scale: 1.0 }
    }
}

impl StepRule {
    pub fn step<T: Real>(&self, t: usize) -> T {
        match *self {
            StepRule::InverseSqrt { scale } => T::lit(scale / ((t + 1) as f64).sqrt()),
            StepRule::Constant { step } => T::lit(step),
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            StepRule::InverseSqrt { scale } => scale,
            StepRule::Constant { step } => step,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::param("step_rule", format!("step scale must be finite and > 0, got {v}")))
        }
    }
}

fn gradients<T: Real>(instance: &ProblemInstance<T>, xs: &[Vec<T>], round: usize) -> Result<Vec<Vec<T>>> {
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let g = instance.local(i).gradient(x)?;
            if all_finite(&g) {
                Ok(g)
            } else {
                Err(Error::NonFiniteGradient { agent: i, round })
            }
        })
        .collect()
}

fn sample_checked<T: Real>(model: &MixingModel<T>, rng: &mut crate::rng::StreamRng) -> Result<Matrix<T>> {
    let p = model.sample(rng);
    validate_doubly_stochastic(&p)?.into_result()?;
    Ok(p)
}

fn check_nodes<T: Real>(instance: &ProblemInstance<T>, model: &MixingModel<T>) -> Result<()> {
    if model.nodes() == instance.agents() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: instance.agents(), found: model.nodes() })
    }
}

fn check_step<T: Real>(step: T) -> Result<()> {
    if step > T::zero() && step.is_finite() {
        Ok(())
    } else {
        Err(Error::param("a", format!("step must be finite and > 0, got {step}")))
    }
}

/// `(I + P)/2` applied to a stack.
fn half_lazy_mix<T: Real>(p: &Matrix<T>, v: &[Vec<T>]) -> Vec<Vec<T>> {
    let mixed = p.mix(v);
    mixed.iter().zip(v).map(|(m, x)| m.iter().zip(x).map(|(&a, &b)| (a + b) * T::lit(0.5)).collect()).collect()
}

fn prox_stack<T: Real>(h: &Regularizer<T>, z: &[Vec<T>], step: T) -> Vec<Vec<T>> {
    z.iter().map(|zi| h.prox(zi, step)).collect()
}

/// Shared driver for the two primal-dual recursions, which differ only in the
/// `z` update from round 2 on.
#[allow(clippy::too_many_arguments)]
fn run_two_step<T: Real>(
    algorithm: Algorithm,
    instance: &ProblemInstance<T>,
    model: &MixingModel<T>,
    step: T,
    rounds: usize,
    seed: u64,
    options: &RunOptions<'_, T>,
    update: impl Fn(&Matrix<T>, &[Vec<T>], &[Vec<T>], &[Vec<T>], &[Vec<T>], &[Vec<T>]) -> Vec<Vec<T>>,
) -> Result<RunTrace<T>> {
    check_nodes(instance, model)?;
    check_step(step)?;
    let n = instance.agents();
    let h = instance.regularizer();
    let mut rng = stream(seed, NETWORK);
    let mut rec = Recorder::new(instance, options, rounds);
    let x0 = instance.distance().center().to_vec();
    let mut x_prev = vec![x0; n];
    let mut g_prev = gradients(instance, &x_prev, 0)?;
    rec.push(rec.base_record(0, &x_prev)?, &x_prev);
    if rounds == 0 {
        return Ok(rec.finish(meta_for(algorithm, instance, seed, 0, step.to_f64_lossy()), x_prev));
    }

    // z¹ = P̃x⁰ − a∇⁰
    let p = sample_checked(model, &mut rng)?;
    let mut z = half_lazy_mix(&p, &x_prev);
    for (zi, gi) in z.iter_mut().zip(&g_prev) {
        axpy(zi, -step, gi);
    }
    let mut x = prox_stack(h, &z, step);
    let mut g = gradients(instance, &x, 1)?;
    rec.push(rec.base_record(1, &x)?, &x);

    for t in 2..=rounds {
        let p = sample_checked(model, &mut rng)?;
        z = update(&p, &z, &x, &x_prev, &g, &g_prev);
        let x_next = prox_stack(h, &z, step);
        let g_next = gradients(instance, &x_next, t)?;
        x_prev = std::mem::replace(&mut x, x_next);
        g_prev = std::mem::replace(&mut g, g_next);
        rec.push(rec.base_record(t, &x)?, &x);
    }
    Ok(rec.finish(meta_for(algorithm, instance, seed, rounds, step.to_f64_lossy()), x))
}

/// `z^t = z^{t−1} − x^{t−1} + P̃(2x^{t−1} − x^{t−2}) − a(∇^{t−1} − ∇^{t−2})`,
/// `x^t = prox_{a h}(z^t)`, with `P̃ = (I + P)/2`.
pub fn run_pg_extra<T: Real>(
    instance: &ProblemInstance<T>,
    model: &MixingModel<T>,
    step: T,
    rounds: usize,
    seed: u64,
    options: &RunOptions<'_, T>,
) -> Result<RunTrace<T>> {
    run_two_step(Algorithm::PgExtra, instance, model, step, rounds, seed, options, |p, z, x, x_prev, g, g_prev| {
        let extrapolated: Vec<Vec<T>> =
            x.iter().zip(x_prev).map(|(a, b)| a.iter().zip(b).map(|(&u, &v)| u + u - v).collect()).collect();
        let mixed = half_lazy_mix(p, &extrapolated);
        (0..z.len())
            .map(|i| {
                let mut out = sub(&z[i], &x[i]);
                axpy(&mut out, T::one(), &mixed[i]);
                axpy(&mut out, -step, &sub(&g[i], &g_prev[i]));
                out
            })
            .collect()
    })
}

/// `z^t = (I − αB)z^{t−1} + (I − B)(x^{t−1} − x^{t−2}) − a(∇^{t−1} − ∇^{t−2})`,
/// `x^t = prox_{a h}(z^t)`, with `B = (I − P)/2`.
pub fn run_p2d2<T: Real>(
    instance: &ProblemInstance<T>,
    model: &MixingModel<T>,
    step: T,
    alpha: T,
    rounds: usize,
    seed: u64,
    options: &RunOptions<'_, T>,
) -> Result<RunTrace<T>> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::param("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    run_two_step(Algorithm::P2d2, instance, model, step, rounds, seed, options, |p, z, x, x_prev, g, g_prev| {
        let half = T::lit(0.5);
        // Bv = (v − Pv)/2
        let apply_b = |v: &[Vec<T>]| -> Vec<Vec<T>> {
            let pv = p.mix(v);
            v.iter().zip(&pv).map(|(a, b)| a.iter().zip(b).map(|(&u, &w)| (u - w) * half).collect()).collect()
        };
        let dx: Vec<Vec<T>> = x.iter().zip(x_prev).map(|(a, b)| sub(a, b)).collect();
        let bz = apply_b(z);
        let bdx = apply_b(&dx);
        (0..z.len())
            .map(|i| {
                let mut out = z[i].clone();
                axpy(&mut out, -alpha, &bz[i]);
                axpy(&mut out, T::one(), &dx[i]);
                axpy(&mut out, -T::one(), &bdx[i]);
                axpy(&mut out, -step, &sub(&g[i], &g_prev[i]));
                out
            })
            .collect()
    })
}

/// Distributed subgradient method: `x^t = P x^{t−1} − a_{t−1} r^{t−1}` with
/// `r_i ∈ ∂(f_i + h)(x_i)`.
pub fn run_dsm<T: Real>(
    instance: &ProblemInstance<T>,
    model: &MixingModel<T>,
    rule: StepRule,
    rounds: usize,
    seed: u64,
    options: &RunOptions<'_, T>,
) -> Result<RunTrace<T>> {
    if instance.regularizer().is_constraint() {
        return Err(Error::Inapplicable("DSM inapplicable to constrained problems".into()));
    }
    check_nodes(instance, model)?;
    rule.validate()?;
    let n = instance.agents();
    let h = instance.regularizer();
    let mut rng = stream(seed, NETWORK);
    let mut rec = Recorder::new(instance, options, rounds);
    let mut x = vec![instance.distance().center().to_vec(); n];
    rec.push(rec.base_record(0, &x)?, &x);
    for t in 1..=rounds {
        let p = sample_checked(model, &mut rng)?;
        let mut r = gradients(instance, &x, t - 1)?;
        for (ri, xi) in r.iter_mut().zip(&x) {
            axpy(ri, T::one(), &h.subgradient(xi)?);
        }
        let step: T = rule.step(t - 1);
        let mut next = p.mix(&x);
        for (xi, ri) in next.iter_mut().zip(&r) {
            axpy(xi, -step, ri);
        }
        x = next;
        rec.push(rec.base_record(t, &x)?, &x);
    }
    Ok(rec.finish(meta_for(Algorithm::Dsm, instance, seed, rounds, f64::NAN), x))
}

/// Conventional distributed dual averaging: `z^t = P z^{t−1} + r^{t−1}`,
/// `x_i^t = argmin a_{t−1}⟨z_i^t, x⟩ + d(x)` (`= x₀ − a_{t−1} z_i^t`).
///
/// With the `ℓ₁`-ball indicator only `∇f_i` is accumulated and the argmin
/// becomes the projection of `x₀ − a_{t−1} z_i^t`.
pub fn run_cdda<T: Real>(
    instance: &ProblemInstance<T>,
    model: &MixingModel<T>,
    rule: StepRule,
    rounds: usize,
    seed: u64,
    options: &RunOptions<'_, T>,
) -> Result<RunTrace<T>> {
    check_nodes(instance, model)?;
    rule.validate()?;
    let n = instance.agents();
    let h = instance.regularizer();
    let x0 = instance.distance().center().to_vec();
    let mut rng = stream(seed, NETWORK);
    let mut rec = Recorder::new(instance, options, rounds);
    let mut x = vec![x0.clone(); n];
    let mut z = vec![vec![T::zero(); instance.dim()]; n];
    rec.push(rec.base_record(0, &x)?, &x);
    for t in 1..=rounds {
        let p = sample_checked(model, &mut rng)?;
        let mut r = gradients(instance, &x, t - 1)?;
        if !h.is_constraint() {
            for (ri, xi) in r.iter_mut().zip(&x) {
                axpy(ri, T::one(), &h.subgradient(xi)?);
            }
        }
        z = p.mix(&z);
        for (zi, ri) in z.iter_mut().zip(&r) {
            axpy(zi, T::one(), ri);
        }
        let step: T = rule.step(t - 1);
        x = z
            .iter()
            .map(|zi| {
                let mut v = x0.clone();
                axpy(&mut v, -step, zi);
                if h.is_constraint() {
                    h.prox(&v, step)
                } else {
                    v
                }
            })
            .collect();
        rec.push(rec.base_record(t, &x)?, &x);
    }
    let mut meta = meta_for(Algorithm::Cdda, instance, seed, rounds, f64::NAN);
    if h.is_constraint() {
        meta.notes.push("constraint handled by projection; only smooth gradients accumulated".into());
    }
    Ok(rec.finish(meta, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::solve_reference;
    use crate::linalg::{dist, scaled};
    use crate::network::{GossipLaw, Graph};
    use crate::problems::{generate_quadratic_instance, QuadraticParams};

    fn quad(agents: usize, h: Regularizer<f64>) -> ProblemInstance<f64> {
        let p = QuadraticParams { agents, dim: 4, smoothness: 1.0, modulus: 0.2, center_scale: 1.0 };
        generate_quadratic_instance(&p, h, 5).unwrap()
    }

    fn identity_model() -> MixingModel<f64> {
        MixingModel::time_invariant(Matrix::identity(1)).unwrap()
    }

    fn gradient_descent(inst: &ProblemInstance<f64>, step: f64, rounds: usize) -> Vec<f64> {
        let mut x = vec![0.0; inst.dim()];
        for _ in 0..rounds {
            let g = inst.smooth_gradient(&x).unwrap();
            axpy(&mut x, -step, &g);
        }
        x
    }

    #[test]
    fn single_agent_two_step_methods_are_gradient_descent() {
        let inst = quad(1, Regularizer::Zero);
        let opts = RunOptions::default();
        let gd = gradient_descent(&inst, 0.5, 40);
        let extra = run_pg_extra(&inst, &identity_model(), 0.5, 40, 0, &opts).unwrap();
        let p2d2 = run_p2d2(&inst, &identity_model(), 0.5, 0.5, 40, 0, &opts).unwrap();
        assert!(dist(&extra.final_x[0], &gd) < 1e-12);
        assert!(dist(&p2d2.final_x[0], &gd) < 1e-12);
    }

    #[test]
    fn single_agent_dsm_is_decaying_gradient_descent() {
        let inst = quad(1, Regularizer::Zero);
        let rule = StepRule::default();
        let tr = run_dsm(&inst, &identity_model(), rule, 25, 0, &RunOptions::default()).unwrap();
        let mut x = vec![0.0; 4];
        for t in 0..25 {
            let g = inst.smooth_gradient(&x).unwrap();
            axpy(&mut x, -rule.step::<f64>(t), &g);
        }
        assert!(dist(&tr.final_x[0], &x) < 1e-12);
    }

    #[test]
    fn single_agent_cdda_matches_weighted_dual_averaging() {
        let inst = quad(1, Regularizer::Zero);
        let rule = StepRule::default();
        let tr = run_cdda(&inst, &identity_model(), rule, 30, 0, &RunOptions { keep_iterates: true, ..Default::default() }).unwrap();
        let mut x = vec![0.0; 4];
        let mut sum = vec![0.0; 4];
        for t in 1..=30 {
            axpy(&mut sum, 1.0, &inst.smooth_gradient(&x).unwrap());
            x = scaled(&sum, -rule.step::<f64>(t - 1));
            if t == 1 {
                // first round: x = x₀ − a₀ r⁰
                assert_eq!(tr.iterates[1][0], x);
            }
        }
        assert!(dist(&tr.final_x[0], &x) < 1e-12);
    }

    #[test]
    fn dsm_rejects_constraints() {
        let inst = quad(1, Regularizer::l1_ball(1.0).unwrap());
        let err = run_dsm(&inst, &identity_model(), StepRule::default(), 5, 0, &RunOptions::default()).unwrap_err();
        assert!(err.to_string().contains("DSM inapplicable"));
    }

    #[test]
    fn two_step_methods_converge_on_fixed_graphs() {
        let inst = quad(6, Regularizer::l1(0.05).unwrap());
        let reference = solve_reference(&inst, 1e-14, 1_000_000).unwrap();
        let model = MixingModel::time_invariant(Graph::cycle(6).unwrap().metropolis_matrix()).unwrap();
        let opts = RunOptions { reference: Some(&reference), ..Default::default() };
        for tr in [
            run_pg_extra(&inst, &model, 0.5, 2000, 0, &opts).unwrap(),
            run_p2d2(&inst, &model, 0.5, 0.5, 2000, 0, &opts).unwrap(),
        ] {
            let rse = tr.last().sq_error / tr.records[0].sq_error;
            assert!(rse < 1e-12, "{:?}: {rse}", tr.meta.algorithm);
        }
    }

    #[test]
    fn baselines_share_the_network_stream() {
        let inst = quad(4, Regularizer::Zero);
        let model = MixingModel::gossip(Graph::cycle(4).unwrap(), GossipLaw::NeighborWeighted).unwrap();
        let opts = RunOptions::default();
        let a = run_dsm(&inst, &model, StepRule::default(), 50, 3, &opts).unwrap();
        let b = run_dsm(&inst, &model, StepRule::default(), 50, 3, &opts).unwrap();
        assert_eq!(a.final_x, b.final_x);
        assert_eq!(a.records.len(), 51);
    }
}
