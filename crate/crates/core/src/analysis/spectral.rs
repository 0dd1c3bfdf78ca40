use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs shared by every closed-form quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub step: f64,
    pub smoothness: f64,
    pub modulus: f64,
    pub beta: f64,
}

impl StepParams {
    pub fn new(step: f64, smoothness: f64, modulus: f64, beta: f64) -> Result<Self> {
        let p = Self { step, smoothness, modulus, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step >= 0.0) || !self.step.is_finite() {
            return Err(Error::param("a", format!("must be finite and >= 0, got {}", self.step)));
        }
        if !(self.modulus >= 0.0) || !(self.smoothness >= self.modulus) || !self.smoothness.is_finite() {
            return Err(Error::param("constants", format!("need L >= mu >= 0, got L={}, mu={}", self.smoothness, self.modulus)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::param("beta", format!("must lie in [0, 1], got {}", self.beta)));
        }
        if self.step * self.modulus >= 1.0 {
            return Err(Error::param("a", format!("need a·mu < 1, got a·mu = {}", self.step * self.modulus)));
        }
        Ok(())
    }

    fn contraction(&self) -> f64 {
        1.0 - self.step * self.modulus
    }

    fn with_step(&self, step: f64) -> Self {
        Self { step, ..*self }
    }
}

/// The 2×2 consensus-error dynamics
/// `[[β, β], [a(L+μ)/(1−aμ)·(β + 1/(1−aμ)), (β + aβ(L+μ))/(1−aμ)]]`.
pub fn matrix_m(p: &StepParams) -> Result<[[f64; 2]; 2]> {
    p.validate()?;
    let StepParams { step: a, smoothness: l, modulus: mu, beta: b } = *p;
    let c = p.contraction();
    Ok([[b, b], [a * (l + mu) / c * (b + 1.0 / c), (b + a * b * (l + mu)) / c]])
}

/// Closed-form `ξ₁, ξ₂` and eigenvalues `λ₁ = (ξ₁+ξ₂)/2 ≥ λ₂ = (ξ₁−ξ₂)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigen {
    pub xi1: f64,
    pub xi2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

pub fn eigen_closed_form(p: &StepParams) -> Result<Eigen> {
    p.validate()?;
    let StepParams { step: a, smoothness: l, modulus: mu, beta: b } = *p;
    let c = p.contraction();
    let xi1 = b * (2.0 + a * l) / c;
    let xi2 = (a * a * b * b * l * l + 4.0 * a * b * (b + 1.0) * (l + mu)).sqrt() / c;
    Ok(Eigen { xi1, xi2, lambda1: 0.5 * (xi1 + xi2), lambda2: 0.5 * (xi1 - xi2) })
}

/// Eigenvalues of a real 2×2 matrix with real spectrum, larger first, from
/// the trace and determinant.
pub fn eigenvalues_2x2(m: &[[f64; 2]; 2]) -> Option<(f64, f64)> {
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    let half_gap = 0.5 * (m[0][0] - m[1][1]);
    let disc = half_gap * half_gap + m[0][1] * m[1][0];
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let hi = half_trace + root;
    let lo = if hi != 0.0 { (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / hi } else { half_trace - root };
    Some((hi, lo))
}

/// `p(λ) = λ² − β(2+aL)/(1−aμ)·λ + β²/(1−aμ) − aβ(L+μ)/(1−aμ)²`.
pub fn characteristic_polynomial(p: &StepParams, lambda: f64) -> f64 {
    let StepParams { step: a, smoothness: l, modulus: mu, beta: b } = *p;
    let c = p.contraction();
    lambda * lambda - b * (2.0 + a * l) / c * lambda + b * b / c - a * b * (l + mu) / (c * c)
}

/// `ν = ρ(M)√(1−aμ)`, `η = (1−aμ)(1−ν)²`, `θ = (1−aμ)(1−ν²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectral {
    pub nu: f64,
    /// `max(1 − ν, 0)`.
    pub one_minus_nu: f64,
    pub eta: f64,
    pub theta: f64,
}

pub fn nu_eta_theta(p: &StepParams) -> Result<Spectral> {
    let e = eigen_closed_form(p)?;
    let c = p.contraction();
    let nu = e.lambda1 * c.sqrt();
    let one_minus_nu = (1.0 - nu).max(0.0);
    Ok(Spectral { nu, one_minus_nu, eta: c * one_minus_nu * one_minus_nu, theta: c * (1.0 - nu * nu) })
}

/// The step-size conditions for a given `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    /// `1/a > β(2L+3μ)/(1−β)² + μ`.
    pub cond16: bool,
    /// `1/a − 2L + μ − (4L−2μ)/η`, or `−∞` when `η ≤ 0`.
    pub gamma: f64,
    pub cond19: bool,
    /// `1/a > 2L·max{β/(1−β)², 1 + 6/(1−ν)²}`.
    pub cond27: bool,
}

fn cond16_threshold(p: &StepParams) -> f64 {
    let StepParams { smoothness: l, modulus: mu, beta: b, .. } = *p;
    if b >= 1.0 {
        f64::INFINITY
    } else {
        b * (2.0 * l + 3.0 * mu) / ((1.0 - b) * (1.0 - b)) + mu
    }
}

pub fn check_conditions(p: &StepParams) -> Result<Conditions> {
    let s = nu_eta_theta(p)?;
    let StepParams { step: a, smoothness: l, modulus: mu, beta: b } = *p;
    let inv_a = 1.0 / a;
    let cond16 = inv_a > cond16_threshold(p);
    let gamma = if cond16 && s.eta > 0.0 { inv_a - 2.0 * l + mu - (4.0 * l - 2.0 * mu) / s.eta } else { f64::NEG_INFINITY };
    let ratio = if b >= 1.0 { f64::INFINITY } else { b / ((1.0 - b) * (1.0 - b)) };
    let spread = if s.one_minus_nu > 0.0 { 1.0 + 6.0 / (s.one_minus_nu * s.one_minus_nu) } else { f64::INFINITY };
    let cond27 = inv_a > 2.0 * l * ratio.max(spread);
    Ok(Conditions { cond16, gamma, cond19: gamma > 0.0, cond27 })
}

/// How `ā` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbarMethod {
    /// Minimum of the three closed-form terms.
    ClosedForm,
    /// Largest step passing both conditions, found by bisection, times 0.99.
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Abar {
    pub value: f64,
    pub method: AbarMethod,
    /// The three closed-form terms (`NaN` when not applicable).
    #[serde(with = "super::json_float::array3")]
    pub terms: [f64; 3],
}

const BISECTION_SAFETY: f64 = 0.99;

/// Conservative bound `ā` such that every `a ∈ (0, ā)` passes both step-size
/// conditions.
///
/// For `μ > 0` this is `min{1/(2μ), 1/(β(2L+3μ)/(1−β)² + μ), b²/((2L−μ)(4+b²))}`
/// with `b = 1 − β(√2 + L/(2√2μ)) − √(β²L²/(8μ²) + β(β+1)(1+L/μ))`. When
/// `μ = 0` or `b ≤ 0` the feasible interval is located by bisection instead.
pub fn estimate_abar(smoothness: f64, modulus: f64, beta: f64) -> Result<Abar> {
    let probe = StepParams::new(0.0, smoothness, modulus, beta)?;
    if beta >= 1.0 {
        return Err(Error::ConditionsViolated("beta = 1: the network does not contract, no step is feasible".into()));
    }
    if !(smoothness > 0.0) {
        return Err(Error::param("L", "must be > 0"));
    }
    let (l, mu, b) = (smoothness, modulus, beta);
    let t2 = 1.0 / cond16_threshold(&probe);
    if mu > 0.0 {
        let t1 = 1.0 / (2.0 * mu);
        let sqrt2 = std::f64::consts::SQRT_2;
        let base = 1.0 - b * (sqrt2 + l / (2.0 * sqrt2 * mu))
            - (b * b * l * l / (8.0 * mu * mu) + b * (b + 1.0) * (1.0 + l / mu)).sqrt();
        if base > 0.0 {
            let t3 = base * base / ((2.0 * l - mu) * (4.0 + base * base));
            return Ok(Abar { value: t1.min(t2).min(t3), method: AbarMethod::ClosedForm, terms: [t1, t2, t3] });
        }
        let found = bisect_feasible(&probe)?;
        return Ok(Abar { value: t1.min(found), method: AbarMethod::Bisection, terms: [t1, t2, f64::NAN] });
    }
    Ok(Abar { value: bisect_feasible(&probe)?, method: AbarMethod::Bisection, terms: [f64::NAN, t2, f64::NAN] })
}

fn feasible(p: &StepParams, a: f64) -> bool {
    check_conditions(&p.with_step(a)).map(|c| c.cond16 && c.cond19).unwrap_or(false)
}

/// Both conditions are monotone in `a`, so the feasible set is an interval
/// `(0, a_max)`; returns `0.99·a_max`.
fn bisect_feasible(p: &StepParams) -> Result<f64> {
    let StepParams { smoothness: l, modulus: mu, .. } = *p;
    // cond19 needs 1/a > 6L − 3μ because η ≤ 1
    let mut hi = (1.0 / cond16_threshold(p)).min(1.0 / (6.0 * l - 3.0 * mu));
    if mu > 0.0 {
        hi = hi.min(1.0 / mu);
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(p, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > 0.0 {
        Ok(BISECTION_SAFETY * lo)
    } else {
        Err(Error::ConditionsViolated("no feasible step size found".into()))
    }
}

/// Bound constants `C = d(x*) + a(2L−μ)σ²/(nθ(L+μ)²)` and
/// `D = 4nC/(ηγ) + 2aσ²/(θ(L+μ)²)`.
pub fn constants_cd(p: &StepParams, agents: usize, sigma_sq: f64, d_xstar: f64) -> Result<(f64, f64)> {
    let cond = check_conditions(p)?;
    if !(cond.cond16 && cond.cond19) {
        return Err(Error::ConditionsViolated(format!("cond16 = {}, gamma = {}", cond.cond16, cond.gamma)));
    }
    if agents == 0 || !(sigma_sq >= 0.0) || !(d_xstar >= 0.0) {
        return Err(Error::param("constants", "need n > 0, sigma^2 >= 0 and d(x*) >= 0"));
    }
    let s = nu_eta_theta(p)?;
    let StepParams { step: a, smoothness: l, modulus: mu, .. } = *p;
    let n = agents as f64;
    let lm2 = (l + mu) * (l + mu);
    let c = d_xstar + a * (2.0 * l - mu) * sigma_sq / (n * s.theta * lm2);
    let d = 4.0 * n * c / (s.eta * cond.gamma) + 2.0 * a * sigma_sq / (s.theta * lm2);
    Ok((c, d))
}
