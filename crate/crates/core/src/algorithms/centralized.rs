use serde::{Deserialize, Serialize};

use super::StepSchedule;
use crate::analysis::sigma_squared;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dist, norm, sub};
use crate::problems::ProblemInstance;
use crate::proximal::solve_primal_weighted;
use crate::Real;

pub const REFERENCE_TOL: f64 = 1e-14;
pub const REFERENCE_MAX_ITER: usize = 1_000_000;

/// High-accuracy minimizer of `F` plus the quantities the analysis needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference<T> {
    pub solution: Vec<T>,
    /// `F(x*)`.
    pub objective: T,
    /// `d(x*)`.
    pub distance: T,
    /// `Σ_i ‖∇f_i(x₀) − ∇f(x₀)‖²`.
    pub sigma_sq: T,
    pub iterations: usize,
    /// Last successive-iterate distance.
    pub residual: T,
    pub tol: T,
}

/// Proximal gradient with step `1/L`, stopped once
/// `‖x^{k+1} − x^k‖ ≤ tol·max(1, ‖x^k‖)`.
pub fn solve_reference<T: Real>(instance: &ProblemInstance<T>, tol: T, max_iter: usize) -> Result<Reference<T>> {
    if !(tol > T::zero()) {
        return Err(Error::param("tol", "must be > 0"));
    }
    let step = T::one() / instance.smoothness();
    let h = instance.regularizer();
    let mut x = instance.distance().center().to_vec();
    let mut residual = T::infinity();
    for k in 1..=max_iter {
        let g = instance.smooth_gradient(&x)?;
        let mut v = x.clone();
        axpy(&mut v, -step, &g);
        let next = h.prox(&v, step);
        residual = dist(&next, &x);
        let scale = norm(&x).max(T::one());
        x = next;
        if residual <= tol * scale {
            return Ok(Reference {
                objective: instance.objective(&x)?,
                distance: instance.distance().evaluate(&x),
                sigma_sq: sigma_squared(instance, instance.distance().center())?,
                solution: x,
                iterations: k,
                residual,
                tol,
            });
        }
        if !all_finite(&x) {
            break;
        }
    }
    Err(Error::NotConverged { what: "reference proximal gradient", iterations: max_iter, residual: residual.to_f64_lossy() })
}

/// Iterates of centralized dual averaging and their weighted averages.
#[derive(Debug, Clone)]
pub struct CentralizedTrace<T> {
    /// `x^{(t)}`, `t = 0..=T`.
    pub iterates: Vec<Vec<T>>,
    /// `x̃^{(t)} = A_t⁻¹ Σ_{τ=1..t} a_τ x^{(τ)}` (`x^{(0)}` at `t = 0`).
    pub averages: Vec<Vec<T>>,
    /// `ln A_t`.
    pub log_cum_weight: Vec<f64>,
}

/// Dual averaging on `f = (1/n) Σ f_i`:
/// `x^{(t)} = argmin ⟨Σ_{τ<t} a_{τ+1}(∇f(x^{(τ)}) − μx^{(τ)}), x⟩ + A_t(μ/2‖x‖² + h(x)) + d(x)`.
pub fn centralized_da<T: Real>(instance: &ProblemInstance<T>, step: T, rounds: usize) -> Result<CentralizedTrace<T>> {
    let mu = instance.modulus();
    let mut schedule = StepSchedule::new(step, mu)?;
    let x0 = instance.distance().center().to_vec();
    let mut z = vec![T::zero(); instance.dim()];
    let mut x = x0.clone();
    let mut avg = x0.clone();
    let mut out = CentralizedTrace {
        iterates: vec![x0.clone()],
        averages: vec![x0],
        log_cum_weight: vec![f64::NEG_INFINITY],
    };
    for t in 1..=rounds {
        let mut g = instance.smooth_gradient(&x).map_err(|e| match e {
            Error::NonFiniteGradient { agent, .. } => Error::NonFiniteGradient { agent, round: t - 1 },
            other => other,
        })?;
        axpy(&mut g, -mu, &x);
        if let Some(f) = schedule.advance() {
            z.iter_mut().for_each(|v| *v *= f);
        }
        let mut next_z = z.clone();
        axpy(&mut next_z, schedule.scaled_weight(), &g);
        z = next_z;
        x = solve_primal_weighted(&z, schedule.scaled_cum_weight(), mu, schedule.unit_inv(), instance.regularizer(), instance.distance());
        let delta = sub(&x, &avg);
        axpy(&mut avg, schedule.average_ratio(), &delta);
        out.iterates.push(x.clone());
        out.averages.push(avg.clone());
        out.log_cum_weight.push(schedule.log_cum_weight());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate_quadratic_instance, LocalObjective, QuadraticParams};
    use crate::proximal::{DistanceGenerator, Regularizer};
    use nalgebra::{DMatrix, DVector};

    fn quad(h: Regularizer<f64>) -> ProblemInstance<f64> {
        let p = QuadraticParams { agents: 3, dim: 5, smoothness: 1.0, modulus: 0.1, center_scale: 1.0 };
        generate_quadratic_instance(&p, h, 17).unwrap()
    }

    #[test]
    fn reference_matches_linear_solve() {
        let inst = quad(Regularizer::Zero);
        let r = solve_reference(&inst, 1e-14, REFERENCE_MAX_ITER).unwrap();
        // normal equations Σ CᵢᵀCᵢ x = Σ Cᵢᵀbᵢ
        let mut lhs = DMatrix::<f64>::zeros(5, 5);
        let mut rhs = DVector::<f64>::zeros(5);
        for l in inst.locals() {
            if let LocalObjective::LeastSquares { design, target } = l {
                let c = DMatrix::from_row_slice(design.rows(), design.cols(), design.data());
                lhs += c.transpose() * &c;
                rhs += c.transpose() * DVector::from_column_slice(target);
            }
        }
        let exact = lhs.lu().solve(&rhs).unwrap();
        for k in 0..5 {
            assert!((r.solution[k] - exact[k]).abs() < 1e-10, "{} vs {}", r.solution[k], exact[k]);
        }
    }

    #[test]
    fn reference_is_a_prox_fixed_point() {
        let inst = quad(Regularizer::l1(0.3).unwrap());
        let r = solve_reference(&inst, 1e-14, REFERENCE_MAX_ITER).unwrap();
        let l = inst.smoothness();
        let g = inst.smooth_gradient(&r.solution).unwrap();
        let mut v = r.solution.clone();
        axpy(&mut v, -1.0 / l, &g);
        let fixed = inst.regularizer().prox(&v, 1.0 / l);
        assert!(dist(&fixed, &r.solution) <= 1e-12);
    }

    #[test]
    fn reference_reports_non_convergence() {
        let inst = quad(Regularizer::Zero);
        match solve_reference(&inst, 1e-14, 3) {
            Err(Error::NotConverged { iterations: 3, residual, .. }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn looser_tolerance_stops_earlier() {
        let inst = quad(Regularizer::Zero);
        let tight = solve_reference(&inst, 1e-14, REFERENCE_MAX_ITER).unwrap();
        let loose = solve_reference(&inst, 1e-6, REFERENCE_MAX_ITER).unwrap();
        assert!(loose.iterations < tight.iterations);
        assert!(loose.residual > tight.residual);
    }

    #[test]
    fn centralized_starts_at_center_and_satisfies_rate() {
        let inst = quad(Regularizer::l1(0.05).unwrap());
        let r = solve_reference(&inst, 1e-14, REFERENCE_MAX_ITER).unwrap();
        let a = 1.0 / inst.smoothness();
        let tr = centralized_da(&inst, a, 200).unwrap();
        assert_eq!(tr.iterates[0], vec![0.0; 5]);
        for t in 1..=200 {
            let gap = inst.objective(&tr.averages[t]).unwrap() - r.objective;
            let bound = r.distance * (-tr.log_cum_weight[t]).exp();
            assert!(gap <= bound + 1e-10, "t={t}: {gap} > {bound}");
        }
    }

    #[test]
    fn centralized_uses_distance_center() {
        let base = quad(Regularizer::Zero);
        let shifted = ProblemInstance::new(base.locals().to_vec(), Regularizer::Zero, DistanceGenerator::new(vec![1.0; 5])).unwrap();
        let tr = centralized_da(&shifted, 0.5, 1).unwrap();
        assert_eq!(tr.iterates[0], vec![1.0; 5]);
    }
}
