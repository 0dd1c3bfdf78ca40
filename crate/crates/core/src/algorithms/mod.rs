//! Decentralized dual averaging, its centralized counterpart, the baseline
//! methods and the reference solver, all simulated in synchronous rounds.

mod baselines;
mod centralized;
mod dda;
mod schedule;

pub use baselines::{run_cdda, run_dsm, run_p2d2, run_pg_extra, StepRule};
pub use centralized::{centralized_da, solve_reference, CentralizedTrace, Reference, REFERENCE_MAX_ITER, REFERENCE_TOL};
pub use dda::{dda_round, run_dda, y_sequence_step, NetworkState};
pub use schedule::StepSchedule;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{deviation_sq, dist_sq, mean_of};
use crate::problems::ProblemInstance;
use crate::Real;

/// Identifies which method produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dda,
    Cdda,
    PgExtra,
    P2d2,
    Dsm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Dda, Algorithm::Cdda, Algorithm::PgExtra, Algorithm::P2d2, Algorithm::Dsm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dda => "dda",
            Algorithm::Cdda => "cdda",
            Algorithm::PgExtra => "pg_extra",
            Algorithm::P2d2 => "p2d2",
            Algorithm::Dsm => "dsm",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

/// Optional per-round diagnostics; each costs extra objective or gradient
/// evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Monitors {
    /// Conservation residuals of the tracked averages.
    pub conservation: bool,
    /// Deviation of every agent from the auxiliary sequence `y`.
    pub deviation: bool,
    /// Objective gaps of `x̄` and `ỹ` (needs a reference).
    pub objective: bool,
    /// Running weighted averages `x̃_i`, `ỹ` and their distances.
    pub averages: bool,
    /// `max_i F(x̃_i) − F*` (one full objective per agent per round).
    pub local_objectives: bool,
}

impl Default for Monitors {
    fn default() -> Self {
        Self { conservation: true, deviation: true, objective: true, averages: true, local_objectives: false }
    }
}

impl Monitors {
    /// Only what the relative square error needs.
    pub fn minimal() -> Self {
        Self { conservation: false, deviation: false, objective: false, averages: false, local_objectives: false }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a, T> {
    pub reference: Option<&'a Reference<T>>,
    pub monitors: Monitors,
    /// Keep every round's agent stack in the trace.
    pub keep_iterates: bool,
}

/// Metrics of one round; `NaN` marks quantities the method or the options do
/// not provide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    /// `Σ_i ‖x_i − x*‖²`.
    #[serde(with = "crate::analysis::json_float")]
    pub sq_error: f64,
    /// `F(ỹ) − F*`.
    #[serde(with = "crate::analysis::json_float")]
    pub obj_gap_ybar: f64,
    /// `F(x̄) − F*`.
    #[serde(with = "crate::analysis::json_float")]
    pub obj_gap_mean_x: f64,
    /// `(Σ_i ‖x_i − x̄‖²)^½`.
    #[serde(with = "crate::analysis::json_float")]
    pub consensus_residual_x: f64,
    #[serde(with = "crate::analysis::json_float")]
    pub consensus_residual_s: f64,
    #[serde(with = "crate::analysis::json_float")]
    pub consensus_residual_z: f64,
    /// `‖s̄ − (ḡ − μx̄)‖/(1 + ‖ḡ‖)`.
    #[serde(with = "crate::analysis::json_float")]
    pub conservation_s: f64,
    /// `‖z̄ − Σ a_{τ+1} s̄^τ‖/(1 + ‖z̄‖)`.
    #[serde(with = "crate::analysis::json_float")]
    pub conservation_z: f64,
    /// `min_i ‖z_i − z̄‖/(1+μA_t) − ‖x_i − y‖`.
    #[serde(with = "crate::analysis::json_float")]
    pub deviation_slack: f64,
    /// `ln A_t`.
    #[serde(with = "crate::analysis::json_float")]
    pub log_cum_weight: f64,
    /// `max_i ‖x̃_i − ỹ‖²`.
    #[serde(with = "crate::analysis::json_float")]
    pub average_spread: f64,
    /// `max_i ‖x̃_i − x*‖²`.
    #[serde(with = "crate::analysis::json_float")]
    pub average_error: f64,
    /// `max_i F(x̃_i) − F*`.
    #[serde(with = "crate::analysis::json_float")]
    pub average_obj_gap: f64,
}

impl RoundRecord {
    pub fn empty(t: usize) -> Self {
        Self {
            t,
            sq_error: f64::NAN,
            obj_gap_ybar: f64::NAN,
            obj_gap_mean_x: f64::NAN,
            consensus_residual_x: f64::NAN,
            consensus_residual_s: f64::NAN,
            consensus_residual_z: f64::NAN,
            conservation_s: f64::NAN,
            conservation_z: f64::NAN,
            deviation_slack: f64::NAN,
            log_cum_weight: f64::NAN,
            average_spread: f64::NAN,
            average_error: f64::NAN,
            average_obj_gap: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub rounds: usize,
    pub agents: usize,
    pub dim: usize,
    /// Base step `a` (NaN for decaying step rules).
    pub step: f64,
    pub modulus: f64,
    pub smoothness: f64,
    pub regularizer_is_zero: bool,
    pub distance_at_origin: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunTrace<T> {
    pub meta: RunMeta,
    /// One record per round, `t = 0..=T`.
    pub records: Vec<RoundRecord>,
    /// Agent stacks per round when requested.
    pub iterates: Vec<Vec<Vec<T>>>,
    pub final_x: Vec<Vec<T>>,
    /// `y^{(T)}` and `ỹ^{(T)}` for dual averaging runs.
    pub final_y: Option<Vec<T>>,
    pub final_y_average: Option<Vec<T>>,
    pub final_x_averages: Vec<Vec<T>>,
}

impl<T> RunTrace<T> {
    pub fn last(&self) -> &RoundRecord {
        self.records.last().expect("a trace holds at least the initial record")
    }
}

/// Shared bookkeeping of the per-round metrics every method reports.
pub(crate) struct Recorder<'a, T> {
    instance: &'a ProblemInstance<T>,
    options: &'a RunOptions<'a, T>,
    records: Vec<RoundRecord>,
    iterates: Vec<Vec<Vec<T>>>,
}

impl<'a, T: Real> Recorder<'a, T> {
    pub(crate) fn new(instance: &'a ProblemInstance<T>, options: &'a RunOptions<'a, T>, rounds: usize) -> Self {
        Self { instance, options, records: Vec::with_capacity(rounds + 1), iterates: Vec::new() }
    }

    pub(crate) fn monitors(&self) -> Monitors {
        self.options.monitors
    }

    pub(crate) fn reference(&self) -> Option<&'a Reference<T>> {
        self.options.reference
    }

    /// Record with the stack-only metrics filled in.
    pub(crate) fn base_record(&self, t: usize, xs: &[Vec<T>]) -> Result<RoundRecord> {
        let mut rec = RoundRecord::empty(t);
        rec.consensus_residual_x = deviation_sq(xs).sqrt().to_f64_lossy();
        if let Some(r) = self.options.reference {
            rec.sq_error = xs.iter().map(|x| dist_sq(x, &r.solution)).sum::<T>().to_f64_lossy();
            if self.options.monitors.objective {
                rec.obj_gap_mean_x = self.gap(&mean_of(xs))?;
            }
        }
        Ok(rec)
    }

    /// `F(x) − F*` (NaN without a reference).
    pub(crate) fn gap(&self, x: &[T]) -> Result<f64> {
        match self.options.reference {
            Some(r) => Ok((self.instance.objective(x)? - r.objective).to_f64_lossy()),
            None => Ok(f64::NAN),
        }
    }

    pub(crate) fn push(&mut self, rec: RoundRecord, xs: &[Vec<T>]) {
        self.records.push(rec);
        if self.options.keep_iterates {
            self.iterates.push(xs.to_vec());
        }
    }

    pub(crate) fn finish(self, meta: RunMeta, final_x: Vec<Vec<T>>) -> RunTrace<T> {
        RunTrace {
            meta,
            records: self.records,
            iterates: self.iterates,
            final_x,
            final_y: None,
            final_y_average: None,
            final_x_averages: Vec::new(),
        }
    }
}

pub(crate) fn meta_for<T: Real>(
    algorithm: Algorithm,
    instance: &ProblemInstance<T>,
    seed: u64,
    rounds: usize,
    step: f64,
) -> RunMeta {
    RunMeta {
        algorithm,
        seed,
        rounds,
        agents: instance.agents(),
        dim: instance.dim(),
        step,
        modulus: instance.modulus().to_f64_lossy(),
        smoothness: instance.smoothness().to_f64_lossy(),
        regularizer_is_zero: instance.regularizer().is_zero(),
        distance_at_origin: instance.distance().center().iter().all(|v| *v == T::zero()),
        notes: Vec::new(),
    }
}
