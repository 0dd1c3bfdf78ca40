use super::{meta_for, Algorithm, Recorder, RunOptions, RunTrace, StepSchedule};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, deviation_sq, dist, dist_sq, mean_of, norm, sub, Matrix};
use crate::network::{validate_doubly_stochastic, MixingModel};
use crate::problems::ProblemInstance;
use crate::proximal::solve_primal_weighted;
use crate::rng::{stream, NETWORK};
use crate::Real;

/// Per-agent `(x_i, z_i, s_i)` of the decentralized method.
///
/// Duals are kept in the unit of the accompanying [`StepSchedule`]
/// (`z_i = S·ẑ_i`); `local_grads` caches `∇f_i(x_i) − μx_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<T> {
    pub round: usize,
    pub x: Vec<Vec<T>>,
    pub z: Vec<Vec<T>>,
    pub s: Vec<Vec<T>>,
    pub local_grads: Vec<Vec<T>>,
}

fn shifted_gradient<T: Real>(instance: &ProblemInstance<T>, agent: usize, x: &[T], round: usize) -> Result<Vec<T>> {
    let mut g = instance.local(agent).gradient(x)?;
    if !all_finite(&g) {
        return Err(Error::NonFiniteGradient { agent, round });
    }
    axpy(&mut g, -instance.modulus(), x);
    Ok(g)
}

impl<T: Real> NetworkState<T> {
    /// `x_i = x₀`, `z_i = 0`, `s_i = ∇f_i(x₀) − μx₀`.
    pub fn init(instance: &ProblemInstance<T>) -> Result<Self> {
        let n = instance.agents();
        let x0 = instance.distance().center().to_vec();
        let grads = (0..n).map(|i| shifted_gradient(instance, i, &x0, 0)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            round: 0,
            x: vec![x0; n],
            z: vec![vec![T::zero(); instance.dim()]; n],
            s: grads.clone(),
            local_grads: grads,
        })
    }

    fn rescale_duals(&mut self, factor: T) {
        for zi in &mut self.z {
            zi.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// One synchronous round of the decentralized method with the schedule
/// already advanced to `t`:
///
/// `z_i ← Σ_j p_ij (z_j + a_t s_j)`, `x_i ← argmin` of the primal subproblem,
/// `s_i ← Σ_j p_ij s_j + g_i(x_i^t) − g_i(x_i^{t−1})` with `g_i = ∇f_i − μ·id`.
pub fn dda_round<T: Real>(
    state: &NetworkState<T>,
    p: &Matrix<T>,
    schedule: &StepSchedule<T>,
    instance: &ProblemInstance<T>,
) -> Result<NetworkState<T>> {
    let n = state.x.len();
    if p.rows() != n || !p.is_square() {
        return Err(Error::DimensionMismatch { expected: n, found: p.rows() });
    }
    let round = state.round + 1;
    let weight = schedule.scaled_weight();
    let outgoing: Vec<Vec<T>> = state
        .z
        .iter()
        .zip(&state.s)
        .map(|(zj, sj)| {
            let mut v = zj.clone();
            axpy(&mut v, weight, sj);
            v
        })
        .collect();
    let z = p.mix(&outgoing);
    let x: Vec<Vec<T>> = z.iter().map(|zi| primal_step(zi, schedule, instance)).collect();
    let local_grads =
        (0..n).map(|i| shifted_gradient(instance, i, &x[i], round)).collect::<Result<Vec<_>>>()?;
    let mut s = p.mix(&state.s);
    for i in 0..n {
        let delta = sub(&local_grads[i], &state.local_grads[i]);
        axpy(&mut s[i], T::one(), &delta);
    }
    Ok(NetworkState { round, x, z, s, local_grads })
}

fn primal_step<T: Real>(z: &[T], schedule: &StepSchedule<T>, instance: &ProblemInstance<T>) -> Vec<T> {
    solve_primal_weighted(
        z,
        schedule.scaled_cum_weight(),
        instance.modulus(),
        schedule.unit_inv(),
        instance.regularizer(),
        instance.distance(),
    )
}

/// `y^{(t)}`: the primal step applied to the exact dual average `z̄` (given
/// in schedule units). Analysis only; never fed back to agents.
pub fn y_sequence_step<T: Real>(z_mean: &[T], schedule: &StepSchedule<T>, instance: &ProblemInstance<T>) -> Vec<T> {
    primal_step(z_mean, schedule, instance)
}

/// `T` rounds of sampling a mixing matrix and applying [`dda_round`].
pub fn run_dda<T: Real>(
    instance: &ProblemInstance<T>,
    model: &MixingModel<T>,
    step: T,
    rounds: usize,
    seed: u64,
    options: &RunOptions<'_, T>,
) -> Result<RunTrace<T>> {
    if model.nodes() != instance.agents() {
        return Err(Error::DimensionMismatch { expected: instance.agents(), found: model.nodes() });
    }
    let mu = instance.modulus();
    let mut schedule = StepSchedule::new(step, mu)?;
    let mut rng = stream(seed, NETWORK);
    let mut state = NetworkState::init(instance)?;
    let mut rec = Recorder::new(instance, options, rounds);
    let monitors = rec.monitors();
    let x0 = instance.distance().center().to_vec();
    let n = instance.agents();

    // Σ_τ a_{τ+1} s̄^τ in schedule units
    let mut dual_history = vec![T::zero(); instance.dim()];
    let mut y = x0.clone();
    let mut y_avg = x0.clone();
    let mut x_avgs = vec![x0.clone(); n];

    let mut first = rec.base_record(0, &state.x)?;
    fill_dual_metrics(&mut first, &state, &schedule, &dual_history, &y, instance, &rec)?;
    fill_average_metrics(&mut first, &y_avg, &x_avgs, &rec)?;
    rec.push(first, &state.x);

    for _ in 0..rounds {
        let p = model.sample(&mut rng);
        validate_doubly_stochastic(&p)?.into_result()?;
        let s_mean_prev = mean_of(&state.s);
        if let Some(f) = schedule.advance() {
            state.rescale_duals(f);
            dual_history.iter_mut().for_each(|v| *v *= f);
        }
        state = dda_round(&state, &p, &schedule, instance)?;
        axpy(&mut dual_history, schedule.scaled_weight(), &s_mean_prev);

        let t = state.round;
        let mut record = rec.base_record(t, &state.x)?;
        if monitors.deviation || monitors.averages {
            y = y_sequence_step(&mean_of(&state.z), &schedule, instance);
        }
        if monitors.averages {
            let ratio = schedule.average_ratio();
            let step = sub(&y, &y_avg);
            axpy(&mut y_avg, ratio, &step);
            for (avg, x) in x_avgs.iter_mut().zip(&state.x) {
                let step = sub(x, avg);
                axpy(avg, ratio, &step);
            }
        }
        fill_dual_metrics(&mut record, &state, &schedule, &dual_history, &y, instance, &rec)?;
        fill_average_metrics(&mut record, &y_avg, &x_avgs, &rec)?;
        rec.push(record, &state.x);
    }

    let mut meta = meta_for(Algorithm::Dda, instance, seed, rounds, step.to_f64_lossy());
    if schedule.log_unit() > 0.0 {
        meta.notes.push(format!("dual weights rescaled by e^{:.3}", schedule.log_unit()));
    }
    let mut trace = rec.finish(meta, state.x);
    if monitors.deviation || monitors.averages {
        trace.final_y = Some(y);
    }
    if monitors.averages {
        trace.final_y_average = Some(y_avg);
        trace.final_x_averages = x_avgs;
    }
    Ok(trace)
}

fn fill_dual_metrics<T: Real>(
    record: &mut super::RoundRecord,
    state: &NetworkState<T>,
    schedule: &StepSchedule<T>,
    dual_history: &[T],
    y: &[T],
    instance: &ProblemInstance<T>,
    rec: &Recorder<'_, T>,
) -> Result<()> {
    let monitors = rec.monitors();
    let unit_inv = schedule.unit_inv();
    let unit = schedule.log_unit().exp();
    record.log_cum_weight = schedule.log_cum_weight();
    record.consensus_residual_s = deviation_sq(&state.s).sqrt().to_f64_lossy();
    record.consensus_residual_z = deviation_sq(&state.z).sqrt().to_f64_lossy() * unit;
    let z_mean = mean_of(&state.z);
    if monitors.conservation {
        let s_mean = mean_of(&state.s);
        let x_mean = mean_of(&state.x);
        let g_mean = mean_of(&state.local_grads);
        let mut grad_mean = g_mean.clone();
        axpy(&mut grad_mean, instance.modulus(), &x_mean);
        record.conservation_s = (dist(&s_mean, &g_mean) / (T::one() + norm(&grad_mean))).to_f64_lossy();
        record.conservation_z = (dist(&z_mean, dual_history) / (unit_inv + norm(&z_mean))).to_f64_lossy();
    }
    if monitors.deviation {
        let contraction = unit_inv + instance.modulus() * schedule.scaled_cum_weight();
        record.deviation_slack = state
            .z
            .iter()
            .zip(&state.x)
            .map(|(zi, xi)| (dist(zi, &z_mean) / contraction - dist(xi, y)).to_f64_lossy())
            .fold(f64::INFINITY, f64::min);
    }
    Ok(())
}

fn fill_average_metrics<T: Real>(
    record: &mut super::RoundRecord,
    y_avg: &[T],
    x_avgs: &[Vec<T>],
    rec: &Recorder<'_, T>,
) -> Result<()> {
    let monitors = rec.monitors();
    if !monitors.averages {
        return Ok(());
    }
    record.average_spread = x_avgs.iter().map(|x| dist_sq(x, y_avg).to_f64_lossy()).fold(0.0, f64::max);
    if let Some(r) = rec.reference() {
        record.average_error = x_avgs.iter().map(|x| dist_sq(x, &r.solution).to_f64_lossy()).fold(0.0, f64::max);
        if monitors.objective {
            record.obj_gap_ybar = rec.gap(y_avg)?;
        }
        if monitors.local_objectives {
            let mut worst = f64::NEG_INFINITY;
            for x in x_avgs {
                worst = worst.max(rec.gap(x)?);
            }
            record.average_obj_gap = worst;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{solve_reference, Monitors};
    use crate::linalg::dist;
    use crate::network::{GossipLaw, Graph};
    use crate::problems::{generate_quadratic_instance, LocalObjective, QuadraticParams};
    use crate::proximal::{DistanceGenerator, Regularizer};

    fn quad(agents: usize, h: Regularizer<f64>) -> ProblemInstance<f64> {
        let p = QuadraticParams { agents, dim: 6, smoothness: 1.0, modulus: 0.2, center_scale: 1.0 };
        generate_quadratic_instance(&p, h, 3).unwrap()
    }

    #[test]
    fn zero_rounds_hold_only_initialization() {
        let inst = quad(3, Regularizer::Zero);
        let model = MixingModel::gossip(Graph::cycle(3).unwrap(), GossipLaw::NeighborWeighted).unwrap();
        let trace = run_dda(&inst, &model, 0.01, 0, 1, &RunOptions::default()).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.final_x, vec![vec![0.0; 6]; 3]);
        assert_eq!(trace.records[0].log_cum_weight, f64::NEG_INFINITY);
    }

    #[test]
    fn identical_agents_under_full_averaging_stay_identical() {
        let base = quad(1, Regularizer::l1(0.05).unwrap());
        let local = base.local(0).clone();
        let inst = ProblemInstance::new(vec![local; 4], Regularizer::l1(0.05).unwrap(), DistanceGenerator::origin(6)).unwrap();
        let model = MixingModel::time_invariant(Matrix::<f64>::averaging(4)).unwrap();
        let mut schedule = StepSchedule::new(0.3, inst.modulus()).unwrap();
        let mut state = NetworkState::init(&inst).unwrap();
        let p = Matrix::averaging(4);
        for _ in 0..50 {
            schedule.advance();
            state = dda_round(&state, &p, &schedule, &inst).unwrap();
            for i in 1..4 {
                assert_eq!(state.x[i], state.x[0]);
            }
        }
        let _ = model;
    }

    #[test]
    fn seeds_select_different_networks() {
        let inst = quad(5, Regularizer::Zero);
        let model = MixingModel::gossip(Graph::cycle(5).unwrap(), GossipLaw::NeighborWeighted).unwrap();
        let opts = RunOptions { reference: None, monitors: Monitors::minimal(), keep_iterates: false };
        let a = run_dda(&inst, &model, 0.1, 50, 1, &opts).unwrap();
        let b = run_dda(&inst, &model, 0.1, 50, 2, &opts).unwrap();
        assert_ne!(a.final_x, b.final_x);
    }

    #[test]
    fn runs_are_deterministic_and_monitors_hold() {
        let inst = quad(5, Regularizer::l1(0.02).unwrap());
        let reference = solve_reference(&inst, 1e-13, 1_000_000).unwrap();
        let model = MixingModel::gossip(Graph::cycle(5).unwrap(), GossipLaw::NeighborWeighted).unwrap();
        let opts = RunOptions { reference: Some(&reference), monitors: Monitors::default(), keep_iterates: true };
        let a = run_dda(&inst, &model, 0.05, 300, 9, &opts).unwrap();
        let b = run_dda(&inst, &model, 0.05, 300, 9, &opts).unwrap();
        assert_eq!(format!("{:?}", a.records), format!("{:?}", b.records));
        assert_eq!(a.iterates.len(), 301);
        for r in &a.records {
            assert!(r.conservation_s <= 1e-9 && r.conservation_z <= 1e-9, "{r:?}");
            assert!(r.deviation_slack >= -1e-12, "{r:?}");
        }
        let last = a.iterates.last().unwrap();
        assert_eq!(last, &a.final_x);
    }

    #[test]
    fn consensus_state_gives_y_equal_to_every_agent() {
        let inst = quad(3, Regularizer::l1_ball(2.0).unwrap());
        let mut schedule = StepSchedule::new(0.5, inst.modulus()).unwrap();
        schedule.advance();
        let z = vec![0.3, -0.2, 1.0, 0.0, 0.5, -4.0];
        let y = y_sequence_step(&z, &schedule, &inst);
        let x = primal_step(&z, &schedule, &inst);
        assert_eq!(dist(&x, &y), 0.0);
    }

    #[test]
    fn y_at_start_is_center() {
        let inst = quad(2, Regularizer::Zero);
        let schedule = StepSchedule::new(0.5, inst.modulus()).unwrap();
        assert_eq!(y_sequence_step(&[0.0; 6], &schedule, &inst), vec![0.0; 6]);
        // unconstrained closed form y = −z̄/(1 + μA_t)
        let mut s2 = schedule;
        s2.advance();
        let z = [1.0, -2.0, 0.5, 0.0, 3.0, -1.0];
        let y = y_sequence_step(&z, &s2, &inst);
        let denom = 1.0 + inst.modulus() * s2.cum_weight();
        for k in 0..6 {
            assert!((y[k] + z[k] / denom).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let design = Matrix::from_rows(&[vec![1e200]]).unwrap();
        let bad = LocalObjective::LeastSquares { design, target: vec![1e200] };
        let inst = ProblemInstance::new(vec![bad], Regularizer::Zero, DistanceGenerator::origin(1)).unwrap();
        let model = MixingModel::time_invariant(Matrix::identity(1)).unwrap();
        let err = run_dda(&inst, &model, 0.1, 2, 0, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { agent: 0, round: 0 }), "{err}");
    }
}
