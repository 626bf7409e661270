//! Construction of the worker pool that managers evaluate.
//!
//! Raw worker-session results are collapsed on exact `(sent, score)`
//! equality, optionally pruned by an explicit exclusion list, and then
//! topped up to the target size with synthetic signal pairs.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{check_signal, GridBounds, ModelError, Provenance, WorkerId, WorkerProfile};

/// Parts 1 and 2 results of the original 20-subject worker session, in
/// subject order (subject `W01` first).
pub const LAB_WORKER_RESULTS: [(u8, u8); 20] = [
    (0, 4),
    (0, 4),
    (0, 5),
    (0, 5),
    (0, 6),
    (0, 7),
    (0, 10),
    (2, 6),
    (2, 10),
    (3, 4),
    (3, 5),
    (4, 4),
    (4, 7),
    (5, 4),
    (5, 10),
    (5, 10),
    (7, 7),
    (9, 4),
    (10, 6),
    (10, 8),
];

/// Signal pairs dropped from the lab results on top of exact duplicates.
pub const LAB_EXCLUDED_PAIRS: [(u8, u8); 2] = [(0, 5), (0, 6)];

/// Synthetic pairs that completed the evaluated pool of 20.
pub const LAB_SYNTHETIC_PAIRS: [(u8, u8); 5] = [(8, 10), (5, 6), (8, 6), (6, 9), (3, 8)];

/// One row of worker-session output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawWorkerResult {
    pub subject_id: WorkerId,
    pub sent: u8,
    pub score: u8,
}

impl RawWorkerResult {
    pub fn new(subject_id: impl Into<WorkerId>, sent: u8, score: u8) -> Self {
        Self {
            subject_id: subject_id.into(),
            sent,
            score,
        }
    }
}

/// The lab worker session as raw results with ids `W01`..`W20`.
pub fn lab_worker_results() -> Vec<RawWorkerResult> {
    LAB_WORKER_RESULTS
        .iter()
        .enumerate()
        .map(|(i, &(s, y))| RawWorkerResult::new(WorkerId(format!("W{:02}", i + 1)), s, y))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolOptions {
    pub target: usize,
    /// Region synthetic fills are drawn from.
    pub bounds: GridBounds,
    /// Pairs removed from the human results before filling.
    #[serde(default)]
    pub exclude: Vec<(u8, u8)>,
    /// Explicit synthetic pairs; when `None` fills are chosen greedily.
    #[serde(default)]
    pub synthetic: Option<Vec<(u8, u8)>>,
}

impl Default for PoolOptions {
    fn default() -> Self {
        Self {
            target: 20,
            bounds: GridBounds::default(),
            exclude: Vec::new(),
            synthetic: None,
        }
    }
}

impl PoolOptions {
    /// Options that rebuild the evaluated pool from [`lab_worker_results`].
    pub fn lab_reference() -> Self {
        Self {
            exclude: LAB_EXCLUDED_PAIRS.to_vec(),
            synthetic: Some(LAB_SYNTHETIC_PAIRS.to_vec()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerPool {
    pub workers: Vec<WorkerProfile>,
}

impl WorkerPool {
    /// Wraps profiles after checking id uniqueness.
    pub fn new(workers: Vec<WorkerProfile>) -> Result<Self, PoolError> {
        let mut seen = BTreeSet::new();
        for w in &workers {
            check_signal("sent", w.sent)?;
            check_signal("score", w.score)?;
            if !seen.insert(w.worker_id.clone()) {
                return Err(PoolError::DuplicateWorkerId(w.worker_id.clone()));
            }
        }
        Ok(Self { workers })
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    pub fn get(&self, id: &WorkerId) -> Option<&WorkerProfile> {
        self.workers.iter().find(|w| &w.worker_id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &WorkerId> {
        self.workers.iter().map(|w| &w.worker_id)
    }

    pub fn humans(&self) -> impl Iterator<Item = &WorkerProfile> {
        self.workers.iter().filter(|w| w.is_human())
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.workers.iter().filter(|w| w.provenance == provenance).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PoolError {
    #[error("no raw worker results")]
    Empty,
    #[error("target {target} is below the {distinct} distinct human pairs")]
    TargetTooSmall { target: usize, distinct: usize },
    #[error("{needed} synthetic pairs needed but {given} supplied")]
    SyntheticCount { needed: usize, given: usize },
    #[error("synthetic pair ({0}, {1}) duplicates a pool member")]
    SyntheticDuplicate(u8, u8),
    #[error("synthetic pair ({0}, {1}) lies outside the grid bounds")]
    SyntheticOutOfBounds(u8, u8),
    #[error("grid bounds have no free pair left for a synthetic worker")]
    GridExhausted,
    #[error("worker id {0} appears twice")]
    DuplicateWorkerId(WorkerId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn chebyshev(a: (u8, u8), b: (u8, u8)) -> u8 {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

/// Greedy max-min Chebyshev fill: each pick is the free pair in `bounds`
/// farthest from everything already in `taken`; ties go to the
/// lexicographically smallest `(sent, score)`.
pub fn greedy_fill(taken: &[(u8, u8)], bounds: GridBounds, count: usize) -> Result<Vec<(u8, u8)>, PoolError> {
    let mut occupied: Vec<(u8, u8)> = taken.to_vec();
    let mut picks = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<((u8, u8), u8)> = None;
        for cand in bounds.points() {
            if occupied.contains(&cand) {
                continue;
            }
            let d = occupied.iter().map(|&p| chebyshev(p, cand)).min().unwrap_or(u8::MAX);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((cand, d));
            }
        }
        let (pick, _) = best.ok_or(PoolError::GridExhausted)?;
        occupied.push(pick);
        picks.push(pick);
    }
    Ok(picks)
}

/// Builds the evaluated pool from raw worker-session results.
///
/// Human profiles keep the id of the first subject with each distinct pair,
/// in input order; synthetic profiles follow with ids `S01`, `S02`, ...
pub fn build_worker_pool(raw: &[RawWorkerResult], opts: &PoolOptions) -> Result<WorkerPool, PoolError> {
    if raw.is_empty() {
        return Err(PoolError::Empty);
    }
    let mut seen = BTreeSet::new();
    let mut humans = Vec::new();
    for r in raw {
        let profile = WorkerProfile::new(r.subject_id.clone(), r.sent, r.score, Provenance::Human)?;
        if opts.exclude.contains(&(r.sent, r.score)) {
            continue;
        }
        if seen.insert((r.sent, r.score)) {
            humans.push(profile);
        }
    }
    if opts.target < humans.len() {
        return Err(PoolError::TargetTooSmall {
            target: opts.target,
            distinct: humans.len(),
        });
    }
    let needed = opts.target - humans.len();
    let taken: Vec<(u8, u8)> = humans.iter().map(WorkerProfile::signal).collect();
    let fills = match &opts.synthetic {
        Some(explicit) => {
            if explicit.len() != needed {
                return Err(PoolError::SyntheticCount {
                    needed,
                    given: explicit.len(),
                });
            }
            let mut all = taken.clone();
            for &(s, y) in explicit {
                if !opts.bounds.contains(s, y) {
                    return Err(PoolError::SyntheticOutOfBounds(s, y));
                }
                if all.contains(&(s, y)) {
                    return Err(PoolError::SyntheticDuplicate(s, y));
                }
                all.push((s, y));
            }
            explicit.clone()
        }
        None => greedy_fill(&taken, opts.bounds, needed)?,
    };
    let mut workers = humans;
    for (i, (s, y)) in fills.into_iter().enumerate() {
        workers.push(WorkerProfile::new(
            WorkerId(format!("S{:02}", i + 1)),
            s,
            y,
            Provenance::Synthetic,
        )?);
    }
    WorkerPool::new(workers)
}
