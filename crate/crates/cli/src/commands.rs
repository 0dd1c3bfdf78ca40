//! The `check`, `run`, `reference` and `sweep` subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dda_core::algorithms::{
    run_cdda, run_dda, run_dsm, run_p2d2, run_pg_extra, solve_reference, Algorithm, Monitors, RunOptions,
};
use dda_core::analysis::{
    bound_check, estimate_abar, rse, AnalysisReport, BoundMode, MarginSeries, ReferenceQuantities, StepParams,
};
use dda_core::network::{beta_of_model, BetaMode};
use dda_core::rng::stream;
use dda_core::{MixingModel64, ProblemInstance64, Reference64, RunTrace64};
use serde::{Deserialize, Serialize};

use crate::config::{beta_mode_for, AlgorithmSpec, ExperimentConfig, StepSpec};
use crate::error::CliError;
use crate::output::{write_svg, write_trace_csv, TraceColumns};

/// Per-round tolerances used to count monitor violations.
const CONSERVATION_TOL: f64 = 1e-9;
const DEVIATION_TOL: f64 = 1e-12;
const BOUND_TOL: f64 = 1e-9;

/// Cached reference solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceArtifact {
    pub problem_hash: String,
    pub reference: Reference64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Computed,
    Disabled,
}

/// Everything a command needs after resolving a config.
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub instance: ProblemInstance64,
    pub model: MixingModel64,
    pub beta: f64,
    pub beta_mode: BetaMode,
    pub reference: Reference64,
    pub cache: CacheStatus,
}

impl Setup {
    pub fn prepare(cfg: ExperimentConfig) -> Result<Self, CliError> {
        let instance = cfg.build_instance()?;
        let model = cfg.build_network()?;
        if model.nodes() != instance.agents() {
            return Err(CliError::Config(format!(
                "network has {} nodes but the problem has {} agents",
                model.nodes(),
                instance.agents()
            )));
        }
        let beta_mode = beta_mode_for(&cfg, &model);
        let beta = beta_of_model(&model, beta_mode, &mut stream(cfg.seed, "beta"))?.min(1.0);
        let (reference, cache) = load_or_solve_reference(&cfg, &instance)?;
        Ok(Self { cfg, instance, model, beta, beta_mode, reference, cache })
    }

    pub fn abar(&self) -> Option<f64> {
        estimate_abar(self.instance.smoothness(), self.instance.modulus(), self.beta).ok().map(|a| a.value)
    }

    pub fn resolve_step(&self, step: StepSpec) -> Result<f64, CliError> {
        match step {
            StepSpec::Value(v) => Ok(v),
            StepSpec::InverseSmoothness { over_l } => Ok(over_l / self.instance.smoothness()),
            StepSpec::Abar { abar_factor } => self.abar().map(|a| abar_factor * a).ok_or_else(|| {
                CliError::Precondition(format!(
                    "step given relative to abar, but abar is undefined (beta = {:.6})",
                    self.beta
                ))
            }),
        }
    }

    pub fn report(&self, step: f64) -> Result<AnalysisReport, CliError> {
        let params = StepParams::new(step, self.instance.smoothness(), self.instance.modulus(), self.beta)?;
        Ok(AnalysisReport::build(params, self.instance.agents(), Some(ReferenceQuantities::from_reference(&self.reference)))?)
    }

    /// The step the `check` report is evaluated at.
    fn check_step(&self) -> Result<f64, CliError> {
        let dda = self.cfg.algorithms.iter().find_map(|a| match a {
            AlgorithmSpec::Dda { step } => Some(*step),
            _ => None,
        });
        match (dda, self.abar()) {
            (Some(s), _) => self.resolve_step(s).or(Ok(0.0)),
            (None, Some(a)) => Ok(0.5 * a),
            (None, None) => Ok(0.0),
        }
    }

    fn monitors(&self) -> Monitors {
        let m = self.cfg.monitors;
        Monitors {
            conservation: m.conservation,
            deviation: m.deviation,
            objective: true,
            averages: m.bounds,
            local_objectives: m.local_objectives,
        }
    }

    /// Rejects combinations the methods cannot run.
    fn check_preconditions(&self, spec: &AlgorithmSpec) -> Result<f64, CliError> {
        let mu = self.instance.modulus();
        match spec {
            AlgorithmSpec::Dda { step } => {
                let a = self.resolve_step(*step)?;
                if a * mu >= 1.0 {
                    return Err(CliError::Precondition(format!("dda: a*mu = {} must be < 1", a * mu)));
                }
                Ok(a)
            }
            AlgorithmSpec::PgExtra { step } | AlgorithmSpec::P2d2 { step, .. } => self.resolve_step(*step),
            AlgorithmSpec::Dsm { .. } if self.instance.regularizer().is_constraint() => {
                Err(CliError::Precondition("DSM inapplicable to constrained problems".into()))
            }
            AlgorithmSpec::Cdda { .. } | AlgorithmSpec::Dsm { .. } => Ok(f64::NAN),
        }
    }

    fn run_one(&self, spec: &AlgorithmSpec, step: f64, rounds: usize) -> Result<RunTrace64, dda_core::Error> {
        let options = RunOptions { reference: Some(&self.reference), monitors: self.monitors(), keep_iterates: false };
        let (inst, model, seed) = (&self.instance, &self.model, self.cfg.seed);
        match spec {
            AlgorithmSpec::Dda { .. } => run_dda(inst, model, step, rounds, seed, &options),
            AlgorithmSpec::Cdda { rule } => run_cdda(inst, model, *rule, rounds, seed, &options),
            AlgorithmSpec::PgExtra { .. } => run_pg_extra(inst, model, step, rounds, seed, &options),
            AlgorithmSpec::P2d2 { alpha, .. } => run_p2d2(inst, model, step, *alpha, rounds, seed, &options),
            AlgorithmSpec::Dsm { rule } => run_dsm(inst, model, *rule, rounds, seed, &options),
        }
    }
}

fn load_or_solve_reference(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance64,
) -> Result<(Reference64, CacheStatus), CliError> {
    let solve = || solve_reference(instance, cfg.reference.tol, cfg.reference.max_iter);
    if !cfg.reference.cache {
        return Ok((solve()?, CacheStatus::Disabled));
    }
    let key = cfg.problem_hash();
    let path = cfg.cache_dir().join(format!("reference-{key}.json"));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(artifact) = serde_json::from_str::<ReferenceArtifact>(&text) {
            if artifact.problem_hash == key && artifact.reference.solution.len() == instance.dim() {
                return Ok((artifact.reference, CacheStatus::Hit));
            }
        }
    }
    let reference = solve()?;
    let artifact = ReferenceArtifact { problem_hash: key, reference };
    write_json(&path, &artifact)?;
    Ok((artifact.reference, CacheStatus::Computed))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `check`: prints and stores the analysis report.
pub fn check(cfg: ExperimentConfig) -> Result<AnalysisReport, CliError> {
    let setup = Setup::prepare(cfg)?;
    let step = setup.check_step()?;
    let report = setup.report(step)?;
    let mut text = format!(
        "nodes: {}\ndim: {}\nbeta_mode: {}\n",
        setup.model.nodes(),
        setup.instance.dim(),
        serde_json::to_string(&setup.beta_mode)?
    );
    text.push_str(&report.to_text());
    print!("{text}");
    fs::create_dir_all(&setup.cfg.out)?;
    fs::write(setup.cfg.out.join("report.txt"), &text)?;
    write_json(&setup.cfg.out.join("report.json"), &report)?;
    if setup.beta >= 1.0 {
        return Err(CliError::Precondition("beta = 1: the network does not contract (disconnected in expectation)".into()));
    }
    if report.abar.is_none() {
        return Err(CliError::Precondition("no feasible step size: abar is undefined".into()));
    }
    Ok(report)
}

/// Output of `reference`.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceOutput {
    pub path: PathBuf,
    pub cache: CacheStatus,
    pub artifact: ReferenceArtifact,
}

/// `reference`: solves (or loads) `x*` and writes it to `<out>/reference.json`.
pub fn reference(cfg: ExperimentConfig) -> Result<ReferenceOutput, CliError> {
    let instance = cfg.build_instance()?;
    let (reference, cache) = load_or_solve_reference(&cfg, &instance)?;
    let artifact = ReferenceArtifact { problem_hash: cfg.problem_hash(), reference };
    let path = cfg.out.join("reference.json");
    write_json(&path, &artifact)?;
    let r = &artifact.reference;
    println!("problem_hash: {}", artifact.problem_hash);
    println!("cache: {}", serde_json::to_string(&cache)?.trim_matches('"'));
    println!("objective: {:.16e}", r.objective);
    println!("distance: {:.16e}", r.distance);
    println!("sigma_sq: {:.16e}", r.sigma_sq);
    println!("iterations: {}", r.iterations);
    println!("residual: {:.3e}", r.residual);
    println!("written: {}", path.display());
    Ok(ReferenceOutput { path, cache, artifact })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Violations {
    pub conservation: usize,
    pub deviation: usize,
    pub theorem2: usize,
    pub corollary1: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub exit_code: i32,
    #[serde(with = "dda_core::analysis::json_float")]
    pub step: f64,
    #[serde(with = "dda_core::analysis::json_float")]
    pub final_rse: f64,
    pub wall_time_s: f64,
    pub violations: Violations,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub problem_hash: String,
    pub seed: u64,
    pub rounds: usize,
    pub beta: f64,
    pub beta_mode: BetaMode,
    pub reference_cache: CacheStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<AnalysisReport>,
    pub algorithms: Vec<AlgorithmSummary>,
}

impl RunSummary {
    /// Zero when every method finished, else the code of the first failure.
    pub fn exit_code(&self) -> i32 {
        self.algorithms.iter().map(|a| a.exit_code).find(|&c| c != 0).unwrap_or(0)
    }
}

fn margins(trace: &RunTrace64, report: Option<&AnalysisReport>, mode: BoundMode) -> Option<MarginSeries> {
    let report = report?;
    if mode == BoundMode::Corollary1 && !(report.modulus > 0.0) {
        return None;
    }
    bound_check(trace, report, mode).ok()
}

fn columns(trace: &RunTrace64, report: Option<&AnalysisReport>) -> Result<(TraceColumns, Violations), CliError> {
    let rse = rse(trace)?;
    let thm = margins(trace, report, BoundMode::Theorem2).map(|m| m.combined());
    let cor = margins(trace, report, BoundMode::Corollary1).map(|m| m.combined());
    let count = |series: &Option<Vec<f64>>| series.as_ref().map_or(0, |s| s.iter().filter(|&&v| v < -BOUND_TOL).count());
    let records = &trace.records;
    let violations = Violations {
        conservation: records
            .iter()
            .filter(|r| r.conservation_s > CONSERVATION_TOL || r.conservation_z > CONSERVATION_TOL)
            .count(),
        deviation: records.iter().filter(|r| r.deviation_slack < -DEVIATION_TOL).count(),
        theorem2: count(&thm),
        corollary1: count(&cor),
    };
    let nan = vec![f64::NAN; records.len()];
    Ok((TraceColumns { rse, thm2: thm.unwrap_or_else(|| nan.clone()), cor1: cor.unwrap_or(nan) }, violations))
}

/// `run`: every configured method on the same network draws.
pub fn run(cfg: ExperimentConfig, svg: bool) -> Result<RunSummary, CliError> {
    let setup = Setup::prepare(cfg)?;
    let steps = setup
        .cfg
        .algorithms
        .iter()
        .map(|spec| setup.check_preconditions(spec))
        .collect::<Result<Vec<f64>, CliError>>()?;
    let rounds = setup.cfg.rounds;
    let out = setup.cfg.out.clone();
    fs::create_dir_all(&out)?;

    let results: Vec<(Result<RunTrace64, dda_core::Error>, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = setup
            .cfg
            .algorithms
            .iter()
            .zip(&steps)
            .map(|(spec, &step)| {
                let setup = &setup;
                scope.spawn(move || {
                    let start = Instant::now();
                    let trace = setup.run_one(spec, step, rounds);
                    (trace, start.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
    });

    let mut report = None;
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    for ((spec, &step), (trace, wall)) in setup.cfg.algorithms.iter().zip(&steps).zip(results) {
        let name = spec.algorithm().name();
        let mut summary = AlgorithmSummary {
            algorithm: name.to_string(),
            status: "ok".into(),
            error: None,
            exit_code: 0,
            step,
            final_rse: f64::NAN,
            wall_time_s: wall,
            violations: Violations::default(),
            csv: None,
        };
        match trace {
            Ok(trace) => {
                let dda_report = if spec.algorithm() == Algorithm::Dda && setup.cfg.monitors.bounds {
                    let r = setup.report(step)?;
                    report = Some(r.clone());
                    Some(r)
                } else {
                    None
                };
                let (cols, violations) = columns(&trace, dda_report.as_ref())?;
                let path = out.join(format!("{name}.csv"));
                write_trace_csv(&path, &trace, &cols)?;
                summary.final_rse = *cols.rse.last().expect("trace has records");
                summary.violations = violations;
                summary.csv = Some(path);
                curves.push((name.to_string(), cols.rse));
            }
            Err(e) => {
                let e = CliError::Core(e);
                eprintln!("{name}: {e}");
                summary.status = "failed".into();
                summary.exit_code = e.exit_code();
                summary.error = Some(e.to_string());
            }
        }
        summaries.push(summary);
    }
    if svg && !curves.is_empty() {
        write_svg(&out.join("rse.svg"), &curves)?;
    }
    let summary = RunSummary {
        config_hash: setup.cfg.hash(),
        problem_hash: setup.cfg.problem_hash(),
        seed: setup.cfg.seed,
        rounds,
        beta: setup.beta,
        beta_mode: setup.beta_mode,
        reference_cache: setup.cache,
        report,
        algorithms: summaries,
    };
    write_json(&out.join("summary.json"), &summary)?;
    for a in &summary.algorithms {
        println!("{}: {} final_rse={:e} wall={:.3}s", a.algorithm, a.status, a.final_rse, a.wall_time_s);
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub step: f64,
    #[serde(with = "dda_core::analysis::json_float")]
    pub abar_factor: f64,
    pub cond16: bool,
    pub cond19: bool,
    pub cond27: bool,
    #[serde(with = "dda_core::analysis::json_float")]
    pub final_rse: f64,
    #[serde(with = "dda_core::analysis::json_float")]
    pub worst_margin_thm2: f64,
    #[serde(with = "dda_core::analysis::json_float")]
    pub worst_margin_cor1: f64,
}

/// `sweep`: dual averaging over a grid of steps.
pub fn sweep(cfg: ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    let setup = Setup::prepare(cfg)?;
    let abar = setup.abar();
    let grid: Vec<(f64, f64)> = if !setup.cfg.sweep.steps.is_empty() {
        setup.cfg.sweep.steps.iter().map(|&a| (a, abar.map_or(f64::NAN, |b| a / b))).collect()
    } else {
        let b = abar.ok_or_else(|| CliError::Precondition(format!("abar is undefined (beta = {:.6})", setup.beta)))?;
        setup.cfg.sweep.abar_factors.iter().map(|&f| (f * b, f)).collect()
    };
    let mu = setup.instance.modulus();
    if let Some(&(a, _)) = grid.iter().find(|(a, _)| !(*a > 0.0) || a * mu >= 1.0) {
        return Err(CliError::Precondition(format!("sweep step {a} must satisfy 0 < a and a*mu < 1")));
    }
    let dir = setup.cfg.out.join("sweep");
    fs::create_dir_all(&dir)?;
    let mut rows = Vec::new();
    for (k, &(step, factor)) in grid.iter().enumerate() {
        let report = setup.report(step)?;
        let trace = setup.run_one(&AlgorithmSpec::Dda { step: StepSpec::Value(step) }, step, setup.cfg.rounds)?;
        let with_bounds = setup.cfg.monitors.bounds.then_some(&report);
        let (cols, _) = columns(&trace, with_bounds)?;
        write_trace_csv(&dir.join(format!("dda_{k}.csv")), &trace, &cols)?;
        let worst = |s: &[f64]| s.iter().skip(1).copied().fold(f64::INFINITY, f64::min);
        rows.push(SweepRow {
            step,
            abar_factor: factor,
            cond16: report.cond16,
            cond19: report.cond19,
            cond27: report.cond27,
            final_rse: *cols.rse.last().expect("trace has records"),
            worst_margin_thm2: worst(&cols.thm2),
            worst_margin_cor1: worst(&cols.cor1),
        });
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(setup.cfg.out.join("sweep.csv"))?;
    w.write_record(["k", "step", "abar_factor", "cond16", "cond19", "cond27", "final_rse", "worst_margin_thm2", "worst_margin_cor1"])?;
    for (k, r) in rows.iter().enumerate() {
        w.write_record([
            k.to_string(),
            r.step.to_string(),
            r.abar_factor.to_string(),
            r.cond16.to_string(),
            r.cond19.to_string(),
            r.cond27.to_string(),
            r.final_rse.to_string(),
            r.worst_margin_thm2.to_string(),
            r.worst_margin_cor1.to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&setup.cfg.out.join("sweep.json"), &rows)?;
    for r in &rows {
        println!(
            "a={:.6e} ({}abar) cond16={} cond19={} final_rse={:e}",
            r.step, r.abar_factor, r.cond16, r.cond19, r.final_rse
        );
    }
    Ok(rows)
}
