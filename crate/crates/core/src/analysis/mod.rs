//! Report-panel statistics: exclusions, fixed-effects regressions, the
//! ordered-kernel grid surface, aggregate summaries and hypothesis tests.
//!
//! Everything here is a pure function of its input panel. Iteration goes
//! through sorted maps so floating-point sums have a fixed order.

mod fe;
mod hypothesis;
mod kernel;
pub mod linalg;
pub mod special;
mod stats;

pub use fe::{fit_fixed_effects, DropReason, Estimate, FitResult, ModelSpec, SeKind, Term};
pub use hypothesis::{
    h1_paired, hypothesis_tests, one_sided_upper, paired_t, wald_equal, welch_t, TestReport, TestResult,
};
pub use kernel::{
    difference_maps, fit_cv, fit_ordered_kernel, fit_with_bandwidths, loo_error, normalized_weight, ordered_weight,
    predict_grid, CellStat, DifferenceMaps, EvaluationGrid, KernelModel, CV_STEPS,
};
pub use stats::{aggregate_stats, quantile, AggregateStats, Histogram, RankRow, WorkerSummary};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{JobId, ManagerProfile, SubjectId, ValuationReport, WorkerId};
use crate::pool::WorkerPool;

/// One manager's report on one worker in one job, with the covariates the
/// regressions use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelCell {
    pub manager_id: SubjectId,
    pub job: JobId,
    pub worker_id: WorkerId,
    pub sent: u8,
    pub score: u8,
    pub rank: u32,
    pub value: f64,
    pub stem: bool,
    pub male: bool,
    pub age: u8,
    pub risk: u8,
    pub own_sent: u8,
    pub own_score: u8,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no observations")]
    Empty,
    #[error("worker {0} is not in the pool")]
    UnknownWorker(WorkerId),
    #[error("no profile for manager {0}")]
    UnknownManager(SubjectId),
    #[error("manager {0} has no questionnaire")]
    MissingQuestionnaire(SubjectId),
    #[error("need at least 2 managers, got {0}")]
    TooFewManagers(usize),
    #[error("no identifiable regressors: {0}")]
    NoRegressors(String),
    #[error("no residual degrees of freedom")]
    NoDegreesOfFreedom,
    #[error("unknown spec {0}")]
    UnknownSpec(u8),
    #[error("bandwidth {0} outside [0, 1]")]
    Bandwidth(f64),
}

/// Joins reports with worker signals and manager covariates.
pub fn build_panel(
    reports: &[ValuationReport],
    pool: &WorkerPool,
    managers: &[ManagerProfile],
) -> Result<Vec<PanelCell>, AnalysisError> {
    let by_id: BTreeMap<&SubjectId, &ManagerProfile> = managers.iter().map(|m| (&m.manager_id, m)).collect();
    reports
        .iter()
        .map(|r| {
            let w = pool
                .get(&r.worker_id)
                .ok_or_else(|| AnalysisError::UnknownWorker(r.worker_id.clone()))?;
            let m = by_id
                .get(&r.manager_id)
                .ok_or_else(|| AnalysisError::UnknownManager(r.manager_id.clone()))?;
            let q = m
                .questionnaire
                .as_ref()
                .ok_or_else(|| AnalysisError::MissingQuestionnaire(r.manager_id.clone()))?;
            Ok(PanelCell {
                manager_id: r.manager_id.clone(),
                job: r.job_id,
                worker_id: r.worker_id.clone(),
                sent: w.sent,
                score: w.score,
                rank: r.rank,
                value: f64::from(r.value),
                stem: q.stem,
                male: q.male,
                age: q.age,
                risk: q.risk,
                own_sent: m.own_sent,
                own_score: m.own_score,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum ExclusionReason {
    /// The same value for every worker in both jobs.
    ConstantValue { value: f64 },
    /// Missing or duplicated (job, worker) cells.
    Incomplete { cells: usize, expected: usize },
}

impl ExclusionReason {
    pub fn code(&self) -> &'static str {
        match self {
            ExclusionReason::ConstantValue { .. } => "constant_value",
            ExclusionReason::Incomplete { .. } => "incomplete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerDecision {
    pub manager_id: SubjectId,
    pub excluded: Option<ExclusionReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub kept: Vec<PanelCell>,
    /// One entry per manager, sorted by id.
    pub decisions: Vec<ManagerDecision>,
}

impl ExclusionReport {
    pub fn kept_managers(&self) -> usize {
        self.decisions.iter().filter(|d| d.excluded.is_none()).count()
    }

    pub fn excluded_managers(&self) -> usize {
        self.decisions.len() - self.kept_managers()
    }
}

/// Drops managers whose values never vary, and managers without exactly
/// one cell per (job, worker) over the workers seen in the panel.
pub fn apply_exclusions(panel: &[PanelCell]) -> ExclusionReport {
    let workers: BTreeSet<&WorkerId> = panel.iter().map(|c| &c.worker_id).collect();
    let expected = 2 * workers.len();
    let mut groups: BTreeMap<&SubjectId, Vec<&PanelCell>> = BTreeMap::new();
    for c in panel {
        groups.entry(&c.manager_id).or_default().push(c);
    }
    let mut excluded: BTreeSet<&SubjectId> = BTreeSet::new();
    let mut decisions = Vec::with_capacity(groups.len());
    for (id, cells) in &groups {
        let distinct: BTreeSet<(JobId, &WorkerId)> = cells.iter().map(|c| (c.job, &c.worker_id)).collect();
        let reason = if cells.len() != expected || distinct.len() != expected {
            Some(ExclusionReason::Incomplete {
                cells: cells.len(),
                expected,
            })
        } else if cells.iter().all(|c| c.value == cells[0].value) {
            Some(ExclusionReason::ConstantValue { value: cells[0].value })
        } else {
            None
        };
        if reason.is_some() {
            excluded.insert(id);
        }
        decisions.push(ManagerDecision {
            manager_id: (*id).clone(),
            excluded: reason,
        });
    }
    ExclusionReport {
        kept: panel
            .iter()
            .filter(|c| !excluded.contains(&c.manager_id))
            .cloned()
            .collect(),
        decisions,
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` in the denominator.
pub(crate) fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use alloc::format;

    pub fn cell(manager: &str, job: JobId, x: u8, y: u8, value: f64) -> PanelCell {
        PanelCell {
            manager_id: SubjectId::from(manager),
            job,
            worker_id: WorkerId(format!("w{x}-{y}")),
            sent: x,
            score: y,
            rank: 1,
            value,
            stem: false,
            male: false,
            age: 20,
            risk: 5,
            own_sent: 5,
            own_score: 5,
        }
    }
}
