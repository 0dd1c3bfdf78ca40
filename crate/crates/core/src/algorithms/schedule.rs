use crate::error::{Error, Result};
use crate::Real;

/// Geometric dual-averaging weights `a_t = a/(1−aμ)^t`, `A_t = Σ_{τ≤t} a_τ`.
///
/// Weights are stored relative to a power-of-two unit `S` (`a_t = S·â_t`,
/// `A_t = S·Â_t`) that is bumped whenever `â_t` grows past a threshold, so
/// arbitrarily long strongly convex runs never overflow. Callers holding
/// quantities in the same unit rescale them by the factor [`advance`]
/// returns. With `S = 1` (the common case) every value is the plain weight.
///
/// [`advance`]: StepSchedule::advance
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule<T> {
    base: T,
    modulus: T,
    growth: T,
    round: usize,
    weight: T,
    cum_weight: T,
    unit_inv: T,
    log_unit: f64,
}

impl<T: Real> StepSchedule<T> {
    pub fn new(base: T, modulus: T) -> Result<Self> {
        if !(base > T::zero()) || !base.is_finite() {
            return Err(Error::param("a", format!("step must be finite and > 0, got {base}")));
        }
        if !(modulus >= T::zero()) {
            return Err(Error::param("mu", format!("modulus must be >= 0, got {modulus}")));
        }
        if base * modulus >= T::one() {
            return Err(Error::param("a", format!("need a·mu < 1, got a={base}, mu={modulus}")));
        }
        Ok(Self {
            base,
            modulus,
            growth: T::one() / (T::one() - base * modulus),
            round: 0,
            weight: base,
            cum_weight: T::zero(),
            unit_inv: T::one(),
            log_unit: 0.0,
        })
    }

    fn rescale_exponent() -> i32 {
        (T::max_value().log2().floor().to_f64_lossy() / 4.0).floor() as i32
    }

    /// Moves to the next round (`a_t = a_{t−1}/(1−aμ)`, `A_t += a_t`).
    /// Returns `Some(f)` when the unit changed; values kept in schedule units
    /// must then be multiplied by `f`.
    pub fn advance(&mut self) -> Option<T> {
        self.round += 1;
        self.weight *= self.growth;
        self.cum_weight += self.weight;
        let k = Self::rescale_exponent();
        if self.weight > T::lit(2.0).powi(k) {
            let f = T::lit(2.0).powi(-k);
            self.weight *= f;
            self.cum_weight *= f;
            self.unit_inv *= f;
            self.log_unit += f64::from(k) * std::f64::consts::LN_2;
            Some(f)
        } else {
            None
        }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn base(&self) -> T {
        self.base
    }

    pub fn modulus(&self) -> T {
        self.modulus
    }

    /// `â_t = a_t/S`.
    pub fn scaled_weight(&self) -> T {
        self.weight
    }

    /// `Â_t = A_t/S`.
    pub fn scaled_cum_weight(&self) -> T {
        self.cum_weight
    }

    /// `1/S`: the weight of `d` in the rescaled primal subproblem.
    pub fn unit_inv(&self) -> T {
        self.unit_inv
    }

    /// `ln S`.
    pub fn log_unit(&self) -> f64 {
        self.log_unit
    }

    /// `a_t/A_t`, the running-average weight; 1 at the first round.
    pub fn average_ratio(&self) -> T {
        self.weight / self.cum_weight
    }

    /// `ln A_t` (`−∞` before the first round).
    pub fn log_cum_weight(&self) -> f64 {
        self.cum_weight.to_f64_lossy().ln() + self.log_unit
    }

    /// `a_t`, possibly `+∞` in the target precision.
    pub fn weight(&self) -> T {
        if self.log_unit == 0.0 {
            self.weight
        } else {
            T::lit((self.weight.to_f64_lossy().ln() + self.log_unit).exp())
        }
    }

    /// `A_t`, possibly `+∞` in the target precision.
    pub fn cum_weight(&self) -> T {
        if self.log_unit == 0.0 {
            self.cum_weight
        } else {
            T::lit(self.log_cum_weight().exp())
        }
    }

    /// Relative residuals of `(1+μA_t)/a_t = 1/a` and
    /// `(1+μA_{t−1})/a_t = (1−aμ)/a`.
    pub fn identity_residuals(&self) -> (T, T) {
        let inv_a = T::one() / self.base;
        let current = (self.unit_inv + self.modulus * self.cum_weight) / self.weight;
        let previous = (self.unit_inv + self.modulus * (self.cum_weight - self.weight)) / self.weight;
        let shifted = (T::one() - self.base * self.modulus) * inv_a;
        ((current - inv_a).abs() / inv_a, (previous - shifted).abs() / shifted)
    }
}
