use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{JobId, SubjectId, ValuationReport, WorkerId, MAX_VALUE};
use crate::pool::WorkerPool;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    ValueOutOfRange {
        manager: SubjectId,
        job: JobId,
        worker: WorkerId,
        value: u32,
    },
    RankOutOfRange {
        manager: SubjectId,
        job: JobId,
        worker: WorkerId,
        rank: u32,
    },
    RankNotPermutation {
        manager: SubjectId,
        job: JobId,
    },
    UnknownWorker {
        manager: SubjectId,
        job: JobId,
        worker: WorkerId,
    },
    DuplicateCell {
        manager: SubjectId,
        job: JobId,
        worker: WorkerId,
    },
    MissingCell {
        manager: SubjectId,
        job: JobId,
        worker: WorkerId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ValueOutOfRange { manager, job, worker, value } => {
                write!(f, "value out of [0,100]: {manager}/{job}/{worker} = {value}")
            }
            Violation::RankOutOfRange { manager, job, worker, rank } => {
                write!(f, "rank out of range: {manager}/{job}/{worker} = {rank}")
            }
            Violation::RankNotPermutation { manager, job } => {
                write!(f, "rank not a permutation: {manager}/{job}")
            }
            Violation::UnknownWorker { manager, job, worker } => {
                write!(f, "unknown worker: {manager}/{job}/{worker}")
            }
            Violation::DuplicateCell { manager, job, worker } => {
                write!(f, "duplicate cell: {manager}/{job}/{worker}")
            }
            Violation::MissingCell { manager, job, worker } => {
                write!(f, "missing cell: {manager}/{job}/{worker}")
            }
        }
    }
}

/// Checks a report panel against the pool. Every manager that appears in
/// `reports` is expected to have one report per (job, pool worker), with
/// ranks forming a permutation of `1..=pool.len()` within each job.
pub fn validate_reports(reports: &[ValuationReport], pool: &WorkerPool) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let n = pool.len() as u32;
    let mut cells: BTreeMap<(&SubjectId, JobId), BTreeMap<&WorkerId, u32>> = BTreeMap::new();
    let managers: BTreeSet<&SubjectId> = reports.iter().map(|r| &r.manager_id).collect();

    for r in reports {
        let (manager, job, worker) = (r.manager_id.clone(), r.job_id, r.worker_id.clone());
        if r.value > MAX_VALUE {
            violations.push(Violation::ValueOutOfRange { manager: manager.clone(), job, worker: worker.clone(), value: r.value });
        }
        if r.rank == 0 || r.rank > n {
            violations.push(Violation::RankOutOfRange { manager: manager.clone(), job, worker: worker.clone(), rank: r.rank });
        }
        if pool.get(&r.worker_id).is_none() {
            violations.push(Violation::UnknownWorker { manager: manager.clone(), job, worker: worker.clone() });
            continue;
        }
        let slot = cells.entry((&r.manager_id, job)).or_default();
        if slot.insert(&r.worker_id, r.rank).is_some() {
            violations.push(Violation::DuplicateCell { manager, job, worker });
        }
    }

    for manager in managers {
        for job in JobId::ALL {
            let slot = cells.get(&(manager, job));
            for w in pool.ids() {
                if slot.is_none_or(|s| !s.contains_key(w)) {
                    violations.push(Violation::MissingCell { manager: manager.clone(), job, worker: w.clone() });
                }
            }
            if let Some(slot) = slot {
                // Out-of-range ranks and missing cells are reported above;
                // what remains is a repeated rank.
                let ranks: BTreeSet<u32> = slot.values().copied().collect();
                if ranks.len() != slot.len() {
                    violations.push(Violation::RankNotPermutation { manager: manager.clone(), job });
                }
            }
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
