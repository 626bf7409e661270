//! End-to-end pipelines behind the `simulate`, `analyze` and `grid`
//! commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jobmarket_core::agents::{
    draw_manager_policies, lab_worker_policies, simulate_study, simulate_worker_session, ManagerPolicy, StudyOutput,
    WorkerSessionOutput,
};
use jobmarket_core::analysis::{
    aggregate_stats, apply_exclusions, build_panel, difference_maps, fit_fixed_effects, fit_ordered_kernel,
    hypothesis_tests, predict_grid, AggregateStats, DifferenceMaps, EvaluationGrid, ExclusionReport, FitResult,
    KernelModel, ModelSpec, PanelCell, SeKind, TestReport,
};
use jobmarket_core::model::{GridBounds, JobId, SessionId, SubjectId};
use jobmarket_core::pool::{build_worker_pool, RawWorkerResult, WorkerPool};
use jobmarket_core::rng::{stream, Purpose};
use jobmarket_core::session::{SessionEvent, StoredOutcome};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::config::{PoolSource, RunConfig};
use crate::formats::{self, LatentRow, OutcomeRow, PayoffRow, PoolRow};

pub const WORKER_SESSION_ID: &str = "workers";

/// The evaluated pool plus the stored outcomes manager sessions pay from.
pub struct PoolData {
    pub pool: WorkerPool,
    pub outcomes: Vec<StoredOutcome>,
    /// The worker session that produced the pool, when it was simulated.
    pub worker_run: Option<WorkerSessionOutput>,
}

pub fn load_pool(cfg: &RunConfig) -> Result<PoolData> {
    match &cfg.pool {
        PoolSource::Build { options } => {
            let policies: Vec<_> = lab_worker_policies()
                .into_iter()
                .map(|(id, mut p)| {
                    p.attempt_rule = cfg.agents.worker_attempt_rule;
                    (id, p)
                })
                .collect();
            let run = simulate_worker_session(SessionId::from(WORKER_SESSION_ID), &policies, cfg.session_config())?;
            let raw: Vec<RawWorkerResult> = run
                .results
                .iter()
                .map(|r| RawWorkerResult::new(r.subject_id.as_str(), r.sent, r.score))
                .collect();
            let pool = build_worker_pool(&raw, options)?;
            Ok(PoolData {
                pool,
                outcomes: run.stored_outcomes(),
                worker_run: Some(run),
            })
        }
        PoolSource::File { pool, outcomes } => {
            let pool = formats::pool_from_rows(formats::load_csv::<PoolRow>(pool)?)?;
            let outcomes = formats::load_csv::<OutcomeRow>(outcomes)?
                .into_iter()
                .map(StoredOutcome::from)
                .collect();
            Ok(PoolData {
                pool,
                outcomes,
                worker_run: None,
            })
        }
    }
}

/// Manager ids `M01`, `M02`, ... with policies drawn from the agent config.
/// `constant_reporters` of them, chosen at random, report one value.
pub fn manager_policies(cfg: &RunConfig, n: usize) -> Result<Vec<(SubjectId, ManagerPolicy)>> {
    let a = &cfg.agents;
    if a.constant_reporters > n {
        bail!("{} constant reporters requested for {n} managers", a.constant_reporters);
    }
    let mut rng = stream(cfg.seed, Purpose::Agent, "manager-policies");
    let mut policies = draw_manager_policies(n, &a.manager, a.intercept_mean, a.intercept_sd, &mut rng);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(cfg.seed, Purpose::Agent, "constant-reporters"));
    for &i in &idx[..a.constant_reporters] {
        policies[i] = ManagerPolicy::constant(a.constant_value, policies[i].own);
    }
    let width = n.to_string().len().max(2);
    Ok(policies
        .into_iter()
        .enumerate()
        .map(|(i, p)| (SubjectId(format!("M{:0width$}", i + 1)), p))
        .collect())
}

pub struct Simulation {
    pub pool: PoolData,
    pub study: StudyOutput,
    pub panel: Vec<PanelCell>,
}

impl Simulation {
    /// Every session log, the worker session first.
    pub fn logs(&self) -> Vec<&[SessionEvent]> {
        let mut logs: Vec<&[SessionEvent]> = Vec::new();
        if let Some(run) = &self.pool.worker_run {
            logs.push(&run.log);
        }
        logs.extend(self.study.logs.iter().map(Vec::as_slice));
        logs
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    let pool = load_pool(cfg)?;
    let policies = manager_policies(cfg, cfg.study.managers)?;
    let study = simulate_study(
        &pool.pool,
        &pool.outcomes,
        &policies,
        &cfg.session_config(),
        cfg.study.session_size,
    )?;
    let panel = build_panel(&study.reports, &pool.pool, &study.managers)?;
    Ok(Simulation { pool, study, panel })
}

/// Payoff rows of every subject in the given logs' sessions.
pub fn payoff_rows(logs: &[&[SessionEvent]]) -> Result<Vec<PayoffRow>> {
    let mut rows = Vec::new();
    for log in logs {
        let session = jobmarket_core::session::replay(log).context("replaying log")?;
        for (subject, p) in session.payoffs() {
            rows.push(PayoffRow::new(session.session_id(), &subject, &p));
        }
    }
    formats::sort_payoffs(&mut rows);
    Ok(rows)
}

pub fn log_path(dir: &Path, session_id: &SessionId) -> PathBuf {
    dir.join("logs").join(format!("{session_id}.jsonl"))
}

/// Writes `pool.csv`, `outcomes.csv`, `reports.csv`, `latents.csv`,
/// `payoffs.csv` and one JSON-lines log per session under `logs/`.
pub fn write_simulation(sim: &Simulation, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir.join("logs")).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    formats::save_csv(&out("pool.csv"), &formats::pool_rows(&sim.pool.pool))?;
    let outcomes: Vec<OutcomeRow> = sim.pool.outcomes.iter().map(OutcomeRow::from).collect();
    formats::save_csv(&out("outcomes.csv"), &outcomes)?;
    formats::save_panel(&out("reports.csv"), &sim.panel)?;
    let latents: Vec<LatentRow> = sim
        .study
        .latents
        .iter()
        .map(|l| LatentRow {
            manager_id: l.manager_id.clone(),
            job: l.job,
            worker_id: l.worker_id.clone(),
            latent: l.latent,
            value: l.value,
        })
        .collect();
    formats::save_csv(&out("latents.csv"), &latents)?;
    let logs = sim.logs();
    formats::save_csv(&out("payoffs.csv"), &payoff_rows(&logs)?)?;
    for log in logs {
        let id = &log.first().context("empty log")?.session_id;
        let p = log_path(dir, id);
        formats::save_events(&p, log)?;
        written.push(p);
    }
    Ok(written)
}

pub struct Analysis {
    pub exclusions: ExclusionReport,
    pub fits: Vec<FitResult>,
    /// Specs that could not be fitted, with the reason.
    pub failures: Vec<(JobId, u8, String)>,
    pub tests: TestReport,
    pub stats: AggregateStats,
}

/// Exclusions, specs 1-4 per job on the kept managers, hypothesis tests and
/// aggregate statistics.
pub fn analyze(panel: &[PanelCell], se_kind: SeKind) -> Result<Analysis> {
    let exclusions = apply_exclusions(panel);
    let kept = &exclusions.kept;
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for job in JobId::ALL {
        for spec in 1..=4 {
            match fit_fixed_effects(kept, &ModelSpec::standard(spec)?, Some(job), se_kind) {
                Ok(f) => fits.push(f),
                Err(e) => failures.push((job, spec, e.to_string())),
            }
        }
    }
    let tests = hypothesis_tests(kept, &fits);
    let stats = aggregate_stats(kept);
    Ok(Analysis {
        exclusions,
        fits,
        failures,
        tests,
        stats,
    })
}

#[derive(Serialize)]
struct FailureRow<'a> {
    job: JobId,
    spec: u8,
    error: &'a str,
}

pub fn write_analysis(a: &Analysis, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut out = |name: String| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    formats::save_csv(&out("exclusions.csv".into()), &formats::exclusion_rows(&a.exclusions))?;
    formats::save_csv(&out("fits.csv".into()), &formats::fit_rows(&a.fits))?;
    formats::save_csv(&out("fit_summary.csv".into()), &formats::fit_summary_rows(&a.fits))?;
    if !a.failures.is_empty() {
        let rows: Vec<FailureRow> = a
            .failures
            .iter()
            .map(|(job, spec, e)| FailureRow {
                job: *job,
                spec: *spec,
                error: e,
            })
            .collect();
        formats::save_csv(&out("fit_failures.csv".into()), &rows)?;
    }
    formats::save_csv(&out("tests.csv".into()), &formats::test_rows(&a.tests))?;
    formats::save_csv(&out("worker_summary.csv".into()), &formats::worker_summary_rows(&a.stats))?;
    formats::save_csv(&out("value_histograms.csv".into()), &formats::histogram_rows(&a.stats))?;
    formats::save_csv(&out("sent_histogram.csv".into()), &formats::sent_count_rows(&a.stats))?;
    for (job, rows) in &a.stats.rank_matrix {
        formats::rank_matrix(rows).save(&out(format!("rank_matrix_{job}.csv")))?;
    }
    for (job, rows) in &a.stats.value_rank_matrix {
        formats::rank_matrix(rows).save(&out(format!("value_rank_matrix_{job}.csv")))?;
    }
    Ok(written)
}

pub struct GridFit {
    pub model: KernelModel,
    pub grid: EvaluationGrid,
    pub diffs: DifferenceMaps,
}

/// Kernel fit, grid predictions and difference maps for each job, on the
/// managers kept by the exclusion rule.
pub fn grid(panel: &[PanelCell], jobs: &[JobId]) -> Result<BTreeMap<JobId, GridFit>> {
    let kept = apply_exclusions(panel).kept;
    let mut out = BTreeMap::new();
    for &job in jobs {
        let model = fit_ordered_kernel(&kept, job).with_context(|| format!("kernel fit for job {job}"))?;
        let grid = predict_grid(&model, GridBounds::default());
        let diffs = difference_maps(&grid);
        out.insert(job, GridFit { model, grid, diffs });
    }
    Ok(out)
}

#[derive(Serialize)]
struct KernelRow<'a> {
    job: JobId,
    kernel: &'a str,
    lambda_sent: f64,
    lambda_score: f64,
    cv_sse: Option<f64>,
    n: usize,
    cv_grid_steps: usize,
}

pub fn write_grid(fits: &BTreeMap<JobId, GridFit>, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut kernels = Vec::new();
    for (job, f) in fits {
        kernels.push(KernelRow {
            job: *job,
            kernel: f.model.kernel,
            lambda_sent: f.model.lambda_sent,
            lambda_score: f.model.lambda_score,
            cv_sse: f.model.cv_score,
            n: f.model.n,
            cv_grid_steps: jobmarket_core::analysis::CV_STEPS,
        });
        let p = dir.join(format!("grid_{job}.csv"));
        formats::grid_matrix(&f.grid).save(&p)?;
        written.push(p);
        for (name, m) in formats::difference_matrices(f.grid.bounds, &f.diffs) {
            let p = dir.join(format!("{name}_{job}.csv"));
            m.save(&p)?;
            written.push(p);
        }
    }
    let p = dir.join("kernel.csv");
    formats::save_csv(&p, &kernels)?;
    written.push(p);
    Ok(written)
}
