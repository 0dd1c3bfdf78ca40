//! Shared regularizers, the quadratic distance-generating function and the
//! closed-form solvers for the weighted primal subproblem
//!
//! `argmin_x ⟨z, x⟩ + A (μ/2 ‖x‖² + h(x)) + d(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm1};
use crate::Real;

/// Non-smooth term `h` shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer<T> {
    Zero,
    /// `weight · ‖x‖₁`
    L1 { weight: T },
    /// Indicator of `{x : ‖x‖₁ ≤ radius}`.
    L1Ball { radius: T },
}

impl<T: Real> Regularizer<T> {
    pub fn l1(weight: T) -> Result<Self> {
        if !(weight >= T::zero()) || !weight.is_finite() {
            return Err(Error::param("weight", format!("must be finite and >= 0, got {weight}")));
        }
        Ok(Regularizer::L1 { weight })
    }

    pub fn l1_ball(radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::param("radius", format!("must be finite and > 0, got {radius}")));
        }
        Ok(Regularizer::L1Ball { radius })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Regularizer::Zero)
    }

    pub fn is_constraint(&self) -> bool {
        matches!(self, Regularizer::L1Ball { .. })
    }

    /// `h(x)`; `+∞` outside the ball for the indicator.
    pub fn evaluate(&self, x: &[T]) -> T {
        match *self {
            Regularizer::Zero => T::zero(),
            Regularizer::L1 { weight } => weight * norm1(x),
            Regularizer::L1Ball { .. } => {
                if self.contains(x) {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
        }
    }

    /// Membership in `dom(h)`, with a round-off allowance proportional to the
    /// dimension for points produced by the projection.
    pub fn contains(&self, x: &[T]) -> bool {
        match *self {
            Regularizer::L1Ball { radius } => {
                let slack = T::lit(4.0) * T::count(x.len().max(1)) * T::epsilon() * radius.max(T::one());
                norm1(x) <= radius + slack
            }
            _ => x.iter().all(|v| v.is_finite()),
        }
    }

    /// `argmin_x step·h(x) + ½‖x − v‖²`.
    pub fn prox(&self, v: &[T], step: T) -> Vec<T> {
        match *self {
            Regularizer::Zero => v.to_vec(),
            Regularizer::L1 { weight } => soft_threshold(v, step * weight),
            Regularizer::L1Ball { radius } => project_l1_ball(v, radius),
        }
    }

    /// An element of `∂h(x)`; the indicator has no usable subgradient on its
    /// boundary, so it is rejected.
    pub fn subgradient(&self, x: &[T]) -> Result<Vec<T>> {
        match *self {
            Regularizer::Zero => Ok(vec![T::zero(); x.len()]),
            Regularizer::L1 { weight } => Ok(subgradient_l1(x, weight)),
            Regularizer::L1Ball { .. } => {
                Err(Error::Inapplicable("the l1-ball indicator has no finite subgradient oracle".into()))
            }
        }
    }
}

/// `d(x) = ½‖x − x₀‖²`: strongly convex with modulus 1, minimized at `x₀` with
/// `d(x₀) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceGenerator<T> {
    center: Vec<T>,
}

impl<T: Real> DistanceGenerator<T> {
    pub fn new(center: Vec<T>) -> Self {
        Self { center }
    }

    pub fn origin(dim: usize) -> Self {
        Self { center: vec![T::zero(); dim] }
    }

    pub fn center(&self) -> &[T] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn evaluate(&self, x: &[T]) -> T {
        T::lit(0.5) * dist_sq(x, &self.center)
    }
}

/// Componentwise `sign(v)·max(|v| − λ, 0)`.
pub fn soft_threshold<T: Real>(v: &[T], lambda: T) -> Vec<T> {
    debug_assert!(lambda >= T::zero());
    v.iter()
        .map(|&x| {
            let shrunk = x.abs() - lambda;
            if shrunk > T::zero() {
                x.signum() * shrunk
            } else {
                T::zero()
            }
        })
        .collect()
}

/// `φ·sign(x)` with `sign(0) = 0`.
pub fn subgradient_l1<T: Real>(x: &[T], weight: T) -> Vec<T> {
    x.iter()
        .map(|&v| {
            if v > T::zero() {
                weight
            } else if v < T::zero() {
                -weight
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Euclidean projection onto `{x : ‖x‖₁ ≤ radius}` via a sorted pivot search.
pub fn project_l1_ball<T: Real>(v: &[T], radius: T) -> Vec<T> {
    debug_assert!(radius > T::zero());
    if norm1(v) <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<T> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = T::zero();
    let mut tau = T::zero();
    for (j, &u) in mags.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / T::count(j + 1);
        if u > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    soft_threshold(v, tau.max(T::zero()))
}

/// Same projection computed with Condat's linear-time pivot scheme.
pub fn project_l1_ball_condat<T: Real>(v: &[T], radius: T) -> Vec<T> {
    debug_assert!(radius > T::zero());
    if norm1(v) <= radius || v.is_empty() {
        return v.to_vec();
    }
    let y: Vec<T> = v.iter().map(|x| x.abs()).collect();
    let mut active: Vec<T> = vec![y[0]];
    let mut parked: Vec<T> = Vec::new();
    let mut rho = y[0] - radius;
    for &yn in &y[1..] {
        if yn > rho {
            rho += (yn - rho) / T::count(active.len() + 1);
            if rho > yn - radius {
                active.push(yn);
            } else {
                parked.append(&mut active);
                active.push(yn);
                rho = yn - radius;
            }
        }
    }
    for &yp in &parked {
        if yp > rho {
            active.push(yp);
            rho += (yp - rho) / T::count(active.len());
        }
    }
    loop {
        let before = active.len();
        let mut i = 0;
        while i < active.len() {
            let yi = active[i];
            if yi <= rho {
                active.swap_remove(i);
                rho += (rho - yi) / T::count(active.len());
            } else {
                i += 1;
            }
        }
        if active.len() == before {
            break;
        }
    }
    soft_threshold(v, rho.max(T::zero()))
}

/// Minimizer of `⟨z, x⟩ + A(μ/2‖x‖² + h(x)) + d(x)`.
pub fn solve_primal<T: Real>(
    z: &[T],
    cum_weight: T,
    mu: T,
    h: &Regularizer<T>,
    d: &DistanceGenerator<T>,
) -> Vec<T> {
    solve_primal_weighted(z, cum_weight, mu, T::one(), h, d)
}

/// Minimizer of `⟨z, x⟩ + A(μ/2‖x‖² + h(x)) + w·d(x)`.
///
/// The extra weight `w` lets callers keep `z` and `A` in a rescaled unit: the
/// problem with `(s·z, s·A, s·w)` has the same minimizer for any `s > 0`.
pub fn solve_primal_weighted<T: Real>(
    z: &[T],
    cum_weight: T,
    mu: T,
    d_weight: T,
    h: &Regularizer<T>,
    d: &DistanceGenerator<T>,
) -> Vec<T> {
    let denom = d_weight + mu * cum_weight;
    debug_assert!(denom > T::zero(), "primal subproblem is not strongly convex");
    let center: Vec<T> = z
        .iter()
        .zip(d.center())
        .map(|(&zk, &ck)| (d_weight * ck - zk) / denom)
        .collect();
    match *h {
        Regularizer::Zero => center,
        Regularizer::L1 { weight } => soft_threshold(&center, cum_weight * weight / denom),
        Regularizer::L1Ball { radius } => project_l1_ball(&center, radius),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist, dot, sub};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Per-coordinate minimizer of `λ|x| + ½(x − v)²` by grid refinement.
    fn grid_soft_threshold(v: f64, lambda: f64) -> f64 {
        let obj = |x: f64| lambda * x.abs() + 0.5 * (x - v) * (x - v);
        let (mut lo, mut hi) = (-v.abs() - 1.0, v.abs() + 1.0);
        for _ in 0..60 {
            let step = (hi - lo) / 200.0;
            let best = (0..=200)
                .map(|k| lo + step * k as f64)
                .min_by(|a, b| obj(*a).partial_cmp(&obj(*b)).unwrap())
                .unwrap();
            lo = best - step;
            hi = best + step;
        }
        // the kink at 0 is the only non-smooth point; grids may straddle it
        let mid = 0.5 * (lo + hi);
        if obj(0.0) <= obj(mid) {
            0.0
        } else {
            mid
        }
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[3.0], 1.0), vec![2.0]);
        assert_eq!(soft_threshold(&[-0.5], 1.0), vec![0.0]);
        let out = soft_threshold(&[2.0, -3.0, 0.1], 0.5);
        let oracle: Vec<f64> = [2.0, -3.0, 0.1].iter().map(|&v| grid_soft_threshold(v, 0.5)).collect();
        for (o, g) in out.iter().zip(&oracle) {
            assert!((o - g).abs() <= 1e-6, "{out:?} vs {oracle:?}");
        }
    }

    #[test]
    fn l1_ball_examples() {
        let inside = vec![0.2, -0.3];
        assert_eq!(project_l1_ball(&inside, 1.0), inside);
        assert_eq!(project_l1_ball(&[2.0, 1.0], 1.0), vec![1.0, 0.0]);
        assert_eq!(project_l1_ball(&[-3.0, 0.0], 1.0), vec![-1.0, 0.0]);
    }

    #[test]
    fn l1_ball_projection_beats_boundary_grid() {
        // dense sweep of the boundary of the 2-D ball of radius 1
        let v = [2.0_f64, 1.0];
        let p = project_l1_ball(&v, 1.0);
        assert!((norm1(&p) - 1.0).abs() < 1e-12);
        let best = (0..40_000)
            .map(|k| {
                let t = k as f64 / 10_000.0;
                let (s, r) = (t.floor(), t.fract());
                let q = match s as i32 {
                    0 => [1.0 - r, r],
                    1 => [-r, 1.0 - r],
                    2 => [-(1.0 - r), -r],
                    _ => [r, -(1.0 - r)],
                };
                dist(&q, &v)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(dist(&p, &v) <= best + 1e-12);
    }

    #[test]
    fn condat_matches_sort_based() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let m = rng.gen_range(1..40);
            let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let r = rng.gen_range(0.01..10.0);
            let a = project_l1_ball(&v, r);
            let b = project_l1_ball_condat(&v, r);
            assert!(dist(&a, &b) <= 1e-12 * (1.0 + r), "{v:?} r={r}");
        }
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(subgradient_l1(&[2.0, -1.0], 1.0), vec![1.0, -1.0]);
        assert_eq!(subgradient_l1(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-2.0..2.0) }).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let g = subgradient_l1(&x, 0.7);
            assert!(0.7 * norm1(&y) >= 0.7 * norm1(&x) + dot(&g, &sub(&y, &x)) - 1e-12);
        }
    }

    #[test]
    fn solve_primal_examples() {
        let d = DistanceGenerator::<f64>::origin(2);
        let x = solve_primal(&[1.0, -2.0], 2.0, 0.5, &Regularizer::Zero, &d);
        assert!((x[0] + 0.5).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        // finite-difference stationarity of ⟨z,x⟩ + A μ/2 ‖x‖² + ½‖x‖²
        let obj = |x: &[f64]| 1.0 * x[0] - 2.0 * x[1] + 2.0 * 0.25 * dot(x, x) + 0.5 * dot(x, x);
        for k in 0..2 {
            let mut p = x.clone();
            let mut q = x.clone();
            p[k] += 1e-6;
            q[k] -= 1e-6;
            assert!(((obj(&p) - obj(&q)) / 2e-6).abs() < 1e-8);
        }
        let center = DistanceGenerator::new(vec![0.3, -0.1]);
        assert_eq!(solve_primal(&[0.0, 0.0], 0.0, 0.5, &Regularizer::l1(2.0).unwrap(), &center), vec![0.3, -0.1]);
    }

    #[test]
    fn invalid_regularizers_rejected() {
        assert!(Regularizer::<f64>::l1(-1.0).is_err());
        assert!(Regularizer::<f64>::l1_ball(0.0).is_err());
        assert!(Regularizer::<f64>::l1_ball(f64::NAN).is_err());
        assert!(Regularizer::l1_ball(1.0).unwrap().subgradient(&[0.0]).is_err());
    }

    #[test]
    fn evaluate_extended_real() {
        let h = Regularizer::l1_ball(1.0).unwrap();
        assert_eq!(h.evaluate(&[0.5, 0.5]), 0.0);
        assert_eq!(h.evaluate(&[0.5, 0.6]), f64::INFINITY);
        assert_eq!(Regularizer::l1(2.0).unwrap().evaluate(&[1.0, -1.0]), 4.0);
    }

    #[test]
    fn generic_over_f32() {
        let out = soft_threshold(&[3.0f32, -0.25], 1.0);
        assert_eq!(out, vec![2.0f32, 0.0]);
        let p = project_l1_ball(&[2.0f32, 1.0], 1.0);
        assert_eq!(p, vec![1.0f32, 0.0]);
    }

    fn vec_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, m)
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_nonexpansive(u in vec_strategy(6), v in vec_strategy(6), r in 0.05f64..8.0) {
            let pu = project_l1_ball(&u, r);
            let pv = project_l1_ball(&v, r);
            prop_assert!(dist(&project_l1_ball(&pu, r), &pu) <= 1e-12 * (1.0 + r));
            prop_assert!(dist(&pu, &pv) <= dist(&u, &v) + 1e-12);
            prop_assert!(norm1(&pu) <= r * (1.0 + 1e-12));
        }

        #[test]
        fn solve_primal_contracts_in_z(
            z1 in vec_strategy(5), z2 in vec_strategy(5),
            a in 0.0f64..20.0, mu in 0.0f64..2.0, which in 0usize..3,
        ) {
            let h = match which {
                0 => Regularizer::Zero,
                1 => Regularizer::l1(0.3).unwrap(),
                _ => Regularizer::l1_ball(1.5).unwrap(),
            };
            let d = DistanceGenerator::new(vec![0.1, 0.0, -0.2, 0.0, 0.05]);
            let x1 = solve_primal(&z1, a, mu, &h, &d);
            let x2 = solve_primal(&z2, a, mu, &h, &d);
            prop_assert!(dist(&x1, &x2) <= dist(&z1, &z2) / (1.0 + mu * a) + 1e-12);
        }

        #[test]
        fn solve_primal_at_origin_returns_center(mu in 0.0f64..3.0) {
            let d = DistanceGenerator::new(vec![0.2, -0.1, 0.3]);
            for h in [Regularizer::Zero, Regularizer::l1(1.0).unwrap(), Regularizer::l1_ball(1.0).unwrap()] {
                prop_assert_eq!(solve_primal(&[0.0; 3], 0.0, mu, &h, &d), d.center().to_vec());
            }
        }

        #[test]
        fn rescaled_primal_is_invariant(z in vec_strategy(4), a in 0.1f64..10.0, s in 1e-6f64..1e6) {
            let h = Regularizer::l1(0.2).unwrap();
            let d = DistanceGenerator::new(vec![0.5, 0.0, -0.5, 1.0]);
            let x = solve_primal(&z, a, 0.3, &h, &d);
            let zs: Vec<f64> = z.iter().map(|v| v / s).collect();
            let y = solve_primal_weighted(&zs, a / s, 0.3, 1.0 / s, &h, &d);
            prop_assert!(dist(&x, &y) <= 1e-9 * (1.0 + crate::linalg::norm(&x)));
        }
    }
}
