//! Closed-form convergence machinery (dynamics matrix, spectral scalars,
//! step-size conditions and bounds) and metrics over run traces.
//!
//! All quantities are evaluated in double precision.

pub mod json_float;
mod spectral;

pub use spectral::{
    characteristic_polynomial, check_conditions, constants_cd, eigen_closed_form, eigenvalues_2x2, estimate_abar,
    matrix_m, nu_eta_theta, Abar, AbarMethod, Conditions, Eigen, Spectral, StepParams,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::algorithms::RunTrace;
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, mean_of};
use crate::problems::ProblemInstance;
use crate::Real;

/// `σ² = Σ_i ‖∇f_i(x₀) − (1/n) Σ_j ∇f_j(x₀)‖²`.
pub fn sigma_squared<T: Real>(instance: &ProblemInstance<T>, x0: &[T]) -> Result<T> {
    let grads = instance.locals().iter().map(|l| l.gradient(x0)).collect::<Result<Vec<_>>>()?;
    let mean = mean_of(&grads);
    Ok(grads.iter().map(|g| dist_sq(g, &mean)).sum())
}

/// `RSE(t) = Σ_i ‖x_i^t − x*‖² / Σ_i ‖x_i^0 − x*‖²` from a trace's records.
pub fn rse<T>(trace: &RunTrace<T>) -> Result<Vec<f64>> {
    let denom = trace.records.first().map(|r| r.sq_error).unwrap_or(f64::NAN);
    if denom.is_nan() {
        return Err(Error::param("trace", "no reference was attached to the run"));
    }
    if denom == 0.0 {
        return Err(Error::param("trace", "all agents start at the reference solution"));
    }
    Ok(trace.records.iter().map(|r| r.sq_error / denom).collect())
}

/// `RSE` from explicit agent stacks.
pub fn rse_of_stacks<T: Real>(stacks: &[Vec<Vec<T>>], solution: &[T]) -> Result<Vec<f64>> {
    let err = |s: &Vec<Vec<T>>| s.iter().map(|x| dist_sq(x, solution)).sum::<T>().to_f64_lossy();
    let denom = stacks.first().map(err).unwrap_or(0.0);
    if denom == 0.0 {
        return Err(Error::param("trace", "all agents start at the reference solution"));
    }
    Ok(stacks.iter().map(|s| err(s) / denom).collect())
}

/// Everything the convergence theory says about one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub step: f64,
    pub smoothness: f64,
    pub modulus: f64,
    pub beta: f64,
    pub agents: usize,
    pub m: [[f64; 2]; 2],
    #[serde(with = "json_float")]
    pub xi1: f64,
    #[serde(with = "json_float")]
    pub xi2: f64,
    #[serde(with = "json_float")]
    pub lambda1: f64,
    #[serde(with = "json_float")]
    pub lambda2: f64,
    #[serde(with = "json_float")]
    pub nu: f64,
    #[serde(with = "json_float")]
    pub eta: f64,
    #[serde(with = "json_float")]
    pub theta: f64,
    #[serde(with = "json_float")]
    pub gamma: f64,
    pub cond16: bool,
    pub cond19: bool,
    pub cond27: bool,
    pub abar: Option<Abar>,
    pub sigma_sq: Option<f64>,
    pub d_xstar: Option<f64>,
    /// `‖x*‖²`, needed by the `h ≡ 0` sublinear bound.
    pub xstar_sq_norm: Option<f64>,
    pub reference_tol: Option<f64>,
    pub c: Option<f64>,
    pub d: Option<f64>,
}

/// Problem-dependent inputs taken from a reference solve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceQuantities {
    pub sigma_sq: f64,
    pub d_xstar: f64,
    pub xstar_sq_norm: f64,
    pub tol: f64,
}

impl ReferenceQuantities {
    pub fn from_reference<T: Real>(r: &crate::algorithms::Reference<T>) -> Self {
        Self {
            sigma_sq: r.sigma_sq.to_f64_lossy(),
            d_xstar: r.distance.to_f64_lossy(),
            xstar_sq_norm: crate::linalg::norm_sq(&r.solution).to_f64_lossy(),
            tol: r.tol.to_f64_lossy(),
        }
    }
}

impl AnalysisReport {
    pub fn build(params: StepParams, agents: usize, reference: Option<ReferenceQuantities>) -> Result<Self> {
        let m = matrix_m(&params)?;
        let e = eigen_closed_form(&params)?;
        let s = nu_eta_theta(&params)?;
        let cond = check_conditions(&params)?;
        let abar = estimate_abar(params.smoothness, params.modulus, params.beta).ok();
        let (c, d) = match reference {
            Some(r) if cond.cond16 && cond.cond19 => {
                let (c, d) = constants_cd(&params, agents, r.sigma_sq, r.d_xstar)?;
                (Some(c), Some(d))
            }
            _ => (None, None),
        };
        Ok(Self {
            step: params.step,
            smoothness: params.smoothness,
            modulus: params.modulus,
            beta: params.beta,
            agents,
            m,
            xi1: e.xi1,
            xi2: e.xi2,
            lambda1: e.lambda1,
            lambda2: e.lambda2,
            nu: s.nu,
            eta: s.eta,
            theta: s.theta,
            gamma: cond.gamma,
            cond16: cond.cond16,
            cond19: cond.cond19,
            cond27: cond.cond27,
            abar,
            sigma_sq: reference.map(|r| r.sigma_sq),
            d_xstar: reference.map(|r| r.d_xstar),
            xstar_sq_norm: reference.map(|r| r.xstar_sq_norm),
            reference_tol: reference.map(|r| r.tol),
            c,
            d,
        })
    }

    pub fn params(&self) -> StepParams {
        StepParams { step: self.step, smoothness: self.smoothness, modulus: self.modulus, beta: self.beta }
    }

    /// Suggested steps `{0.1ā, 0.5ā, 0.9ā}`.
    pub fn step_grid(&self) -> Vec<f64> {
        self.abar.map(|a| [0.1, 0.5, 0.9].iter().map(|f| f * a.value).collect()).unwrap_or_default()
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.12e}"))
        }
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k}: {v}");
        };
        line("a", format!("{:.12e}", self.step));
        line("L", format!("{:.12e}", self.smoothness));
        line("mu", format!("{:.12e}", self.modulus));
        line("beta", format!("{:.12e}", self.beta));
        line("n", self.agents.to_string());
        line("M", format!("[[{:.12e}, {:.12e}], [{:.12e}, {:.12e}]]", self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]));
        line("xi1", format!("{:.12e}", self.xi1));
        line("xi2", format!("{:.12e}", self.xi2));
        line("lambda1", format!("{:.12e}", self.lambda1));
        line("lambda2", format!("{:.12e}", self.lambda2));
        line("nu", format!("{:.12e}", self.nu));
        line("eta", format!("{:.12e}", self.eta));
        line("theta", format!("{:.12e}", self.theta));
        line("gamma", format!("{:.12e}", self.gamma));
        line("cond16", self.cond16.to_string());
        line("cond19", self.cond19.to_string());
        line("cond27", self.cond27.to_string());
        match &self.abar {
            Some(a) => {
                line("abar", format!("{:.12e}", a.value));
                line("abar_method", format!("{:?}", a.method).to_lowercase());
                let grid: Vec<String> = self.step_grid().iter().map(|v| format!("{v:.6e}")).collect();
                line("step_grid", grid.join(", "));
            }
            None => line("abar", "undefined".into()),
        }
        line("sigma_sq", opt(self.sigma_sq));
        line("d_xstar", opt(self.d_xstar));
        line("reference_tol", opt(self.reference_tol));
        line("C", opt(self.c));
        line("D", opt(self.d));
        out
    }
}

/// Which guarantee to evaluate along a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// `C/A_t − (F(ỹ) − F*)` and `D/A_t − max_i ‖x̃_i − ỹ‖²`.
    Theorem2,
    /// `(2/a)(2C/μ + D)(1−aμ)^t − max_i ‖x̃_i − x*‖²`.
    Corollary1,
    /// The `1/(at)` forms for `μ = 0`, plus
    /// `(1/t)(n‖x*‖²/(2a) + 6σ²/(L(1−ν²))) − max_i (F(x̃_i) − F*)` when
    /// `h ≡ 0`, `d = ½‖x‖²` and the matching step condition holds.
    Corollary2,
}

/// Per-round margins (bound minus measured value); negative entries are
/// violations. Round 0 carries `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSeries {
    pub mode: BoundMode,
    pub components: Vec<(String, Vec<f64>)>,
}

impl MarginSeries {
    /// Per-round minimum over components.
    pub fn combined(&self) -> Vec<f64> {
        let len = self.components.first().map_or(0, |c| c.1.len());
        (0..len)
            .map(|t| self.components.iter().map(|c| c.1[t]).fold(f64::INFINITY, |a, v| if v.is_nan() { f64::NAN } else { a.min(v) }))
            .collect()
    }

    pub fn worst(&self) -> f64 {
        self.combined().into_iter().fold(f64::INFINITY, |a, v| if v.is_nan() { f64::NAN } else { a.min(v) })
    }

    /// Rounds in `[from, ∞)` whose combined margin is below `−tol` (or NaN).
    pub fn violations(&self, from: usize, tol: f64) -> usize {
        self.combined().iter().skip(from).filter(|&&m| !(m >= -tol)).count()
    }
}

/// Evaluates a guarantee round by round along a dual averaging trace.
pub fn bound_check<T>(trace: &RunTrace<T>, report: &AnalysisReport, mode: BoundMode) -> Result<MarginSeries> {
    let missing = |what: &str| Error::param("report", format!("{what} unavailable; attach a reference solution"));
    let records = &trace.records;
    let inv_a = |r: &crate::algorithms::RoundRecord| (-r.log_cum_weight).exp();
    let series = |f: &dyn Fn(&crate::algorithms::RoundRecord) -> f64| -> Vec<f64> {
        records.iter().map(|r| if r.t == 0 { f64::INFINITY } else { f(r) }).collect()
    };
    match mode {
        BoundMode::Theorem2 => {
            let (c, d) = (report.c.ok_or_else(|| missing("C"))?, report.d.ok_or_else(|| missing("D"))?);
            Ok(MarginSeries {
                mode,
                components: vec![
                    ("objective".into(), series(&|r| c * inv_a(r) - r.obj_gap_ybar)),
                    ("consensus".into(), series(&|r| d * inv_a(r) - r.average_spread)),
                ],
            })
        }
        BoundMode::Corollary1 => {
            if !(report.modulus > 0.0) {
                return Err(Error::Inapplicable("the linear rate needs mu > 0".into()));
            }
            let (c, d) = (report.c.ok_or_else(|| missing("C"))?, report.d.ok_or_else(|| missing("D"))?);
            let (a, mu) = (report.step, report.modulus);
            let scale = 2.0 / a * (2.0 * c / mu + d);
            let log_rate = (1.0 - a * mu).ln();
            Ok(MarginSeries {
                mode,
                components: vec![(
                    "distance".into(),
                    series(&|r| scale * (log_rate * r.t as f64).exp() - r.average_error),
                )],
            })
        }
        BoundMode::Corollary2 => {
            if report.modulus != 0.0 {
                return Err(Error::Inapplicable("the sublinear bounds are stated for mu = 0".into()));
            }
            let (c, d) = (report.c.ok_or_else(|| missing("C"))?, report.d.ok_or_else(|| missing("D"))?);
            let a = report.step;
            let mut components = vec![
                ("objective".into(), series(&|r| c / (a * r.t as f64) - r.obj_gap_ybar)),
                ("consensus".into(), series(&|r| d / (a * r.t as f64) - r.average_spread)),
            ];
            if trace.meta.regularizer_is_zero && trace.meta.distance_at_origin && report.cond27 {
                let xs = report.xstar_sq_norm.ok_or_else(|| missing("||x*||^2"))?;
                let sigma = report.sigma_sq.ok_or_else(|| missing("sigma^2"))?;
                let constant = report.agents as f64 * xs / (2.0 * a)
                    + 6.0 * sigma / (report.smoothness * (1.0 - report.nu * report.nu));
                components.push(("local_objective".into(), series(&|r| constant / r.t as f64 - r.average_obj_gap)));
            }
            Ok(MarginSeries { mode, components })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::problems::LocalObjective;
    use crate::proximal::{DistanceGenerator, Regularizer};

    fn two_agents(g1: [f64; 2], g2: [f64; 2]) -> ProblemInstance<f64> {
        // f_i(x) = ½‖x − c_i‖², so ∇f_i(0) = −c_i
        let local = |g: [f64; 2]| LocalObjective::LeastSquares { design: Matrix::identity(2), target: vec![-g[0], -g[1]] };
        ProblemInstance::new(vec![local(g1), local(g2)], Regularizer::Zero, DistanceGenerator::origin(2)).unwrap()
    }

    #[test]
    fn sigma_squared_examples() {
        let inst = two_agents([1.0, 0.0], [-1.0, 0.0]);
        assert!((sigma_squared(&inst, &[0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let same = two_agents([0.3, -0.7], [0.3, -0.7]);
        assert_eq!(sigma_squared(&same, &[0.0, 0.0]).unwrap(), 0.0);
        let shifted = two_agents([1.5, 2.0], [-0.5, 2.0]);
        assert!((sigma_squared(&shifted, &[0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rse_by_hand() {
        let x_star = vec![1.0, 0.0];
        let t0 = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let t1 = vec![vec![1.0, 1.0], vec![0.5, 0.0]];
        let t2 = vec![x_star.clone(), x_star.clone()];
        let r = rse_of_stacks(&[t0.clone(), t1, t2], &x_star).unwrap();
        assert_eq!(r, vec![1.0, (1.0 + 0.25) / 2.0, 0.0]);
        assert!(rse_of_stacks(&[vec![x_star.clone()]], &x_star).is_err());
    }

    #[test]
    fn report_text_and_json() {
        let params = StepParams::new(0.01, 1.0, 0.5, 0.3).unwrap();
        let q = ReferenceQuantities { sigma_sq: 1.0, d_xstar: 0.5, xstar_sq_norm: 1.0, tol: 1e-14 };
        let r = AnalysisReport::build(params, 5, Some(q)).unwrap();
        assert!(r.cond16 && r.cond19 && r.c.is_some() && r.d.is_some());
        let text = r.to_text();
        for key in ["a:", "beta:", "nu:", "gamma:", "cond19:", "abar:", "step_grid:", "C:", "D:"] {
            assert!(text.lines().any(|l| l.starts_with(key)), "missing {key}");
        }
        let json = serde_json::to_string(&r).unwrap();
        let back: AnalysisReport = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
        assert_eq!(back.gamma, r.gamma);
        let eig = eigenvalues_2x2(&r.m).unwrap();
        assert!((eig.0 - r.lambda1).abs() < 1e-12 && (eig.1 - r.lambda2).abs() < 1e-12);
    }
}
