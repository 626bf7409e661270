use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::PanelCell;
use crate::model::{JobId, SubjectId, WorkerId, MAX_VALUE};

/// Type-7 sample quantile of sorted data (linear interpolation between
/// order statistics).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Counts in bins of width 10 over `[0, 100]`; the last bin includes 100.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u32>,
}

impl Histogram {
    pub const WIDTH: f64 = 10.0;

    pub fn of_values(values: &[f64]) -> Histogram {
        let bins = (f64::from(MAX_VALUE) / Self::WIDTH) as usize;
        let mut counts = vec![0; bins];
        for v in values {
            let b = ((v / Self::WIDTH) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { counts }
    }

    pub fn lower_edge(bin: usize) -> f64 {
        bin as f64 * Self::WIDTH
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSummary {
    pub job: JobId,
    pub worker_id: WorkerId,
    pub sent: u8,
    pub score: u8,
    pub n: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

/// `counts[r - 1]` managers placed the worker at rank `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRow {
    pub worker_id: WorkerId,
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub workers: Vec<WorkerSummary>,
    /// Distribution of the ranks managers assigned in the table.
    pub rank_matrix: BTreeMap<JobId, Vec<RankRow>>,
    /// Same, with ranks recomputed from values; tied values share the
    /// smallest rank.
    pub value_rank_matrix: BTreeMap<JobId, Vec<RankRow>>,
    /// Managers' own Part 1 sends, `counts[s]` for `s` in `0..=10`.
    pub sent_histogram: Vec<u32>,
}

fn rank_rows(cells: &[(&PanelCell, u32)], n_ranks: usize) -> Vec<RankRow> {
    let mut rows: BTreeMap<&WorkerId, Vec<u32>> = BTreeMap::new();
    for (c, rank) in cells {
        let row = rows.entry(&c.worker_id).or_insert_with(|| vec![0; n_ranks]);
        if let Some(slot) = (*rank as usize).checked_sub(1).and_then(|i| row.get_mut(i)) {
            *slot += 1;
        }
    }
    rows.into_iter()
        .map(|(w, counts)| RankRow {
            worker_id: w.clone(),
            counts,
        })
        .collect()
}

pub fn aggregate_stats(panel: &[PanelCell]) -> AggregateStats {
    let mut by_worker: BTreeMap<(JobId, &WorkerId), Vec<&PanelCell>> = BTreeMap::new();
    let mut by_manager_job: BTreeMap<(JobId, &SubjectId), Vec<&PanelCell>> = BTreeMap::new();
    let mut own_sent: BTreeMap<&SubjectId, u8> = BTreeMap::new();
    for c in panel {
        by_worker.entry((c.job, &c.worker_id)).or_default().push(c);
        by_manager_job.entry((c.job, &c.manager_id)).or_default().push(c);
        own_sent.insert(&c.manager_id, c.own_sent);
    }

    let workers = by_worker
        .iter()
        .map(|((job, w), cells)| {
            let mut vals: Vec<f64> = cells.iter().map(|c| c.value).collect();
            vals.sort_by(f64::total_cmp);
            let (q1, median, q3) = (quantile(&vals, 0.25), quantile(&vals, 0.5), quantile(&vals, 0.75));
            WorkerSummary {
                job: *job,
                worker_id: (*w).clone(),
                sent: cells[0].sent,
                score: cells[0].score,
                n: vals.len(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                q1,
                median,
                q3,
                iqr: q3 - q1,
                min: vals[0],
                max: vals[vals.len() - 1],
                histogram: Histogram::of_values(&vals),
            }
        })
        .collect();

    let mut rank_matrix = BTreeMap::new();
    let mut value_rank_matrix = BTreeMap::new();
    for job in JobId::ALL {
        let sets: Vec<&Vec<&PanelCell>> = by_manager_job
            .iter()
            .filter(|((j, _), _)| *j == job)
            .map(|(_, v)| v)
            .collect();
        if sets.is_empty() {
            continue;
        }
        let n_ranks = sets.iter().map(|s| s.len()).max().unwrap_or(0);
        let table: Vec<(&PanelCell, u32)> = sets.iter().flat_map(|s| s.iter().map(|c| (*c, c.rank))).collect();
        let derived: Vec<(&PanelCell, u32)> = sets
            .iter()
            .flat_map(|s| {
                s.iter().map(move |c| {
                    let above = s.iter().filter(|o| o.value > c.value).count() as u32;
                    (*c, above + 1)
                })
            })
            .collect();
        rank_matrix.insert(job, rank_rows(&table, n_ranks));
        value_rank_matrix.insert(job, rank_rows(&derived, n_ranks));
    }

    let mut sent_histogram = vec![0u32; 11];
    for s in own_sent.values() {
        sent_histogram[usize::from(*s).min(10)] += 1;
    }

    AggregateStats {
        workers,
        rank_matrix,
        value_rank_matrix,
        sent_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::cell;
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn histogram_edges() {
        let h = Histogram::of_values(&[0.0, 9.9, 10.0, 99.0, 100.0]);
        assert_eq!(h.counts.len(), 10);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[9], 2);
    }

    #[test]
    fn single_manager_means_are_values_and_ranks_tie() {
        let mut p = alloc::vec![
            cell("m", JobId::C, 0, 4, 30.0),
            cell("m", JobId::C, 5, 5, 70.0),
            cell("m", JobId::C, 9, 9, 70.0),
        ];
        for (i, c) in p.iter_mut().enumerate() {
            c.rank = 3 - i as u32;
        }
        let s = aggregate_stats(&p);
        assert_eq!(s.workers.len(), 3);
        for w in &s.workers {
            let c = p.iter().find(|c| c.worker_id == w.worker_id).unwrap();
            assert_eq!(w.mean, c.value);
            assert_eq!(w.iqr, 0.0);
        }
        let vr = &s.value_rank_matrix[&JobId::C];
        let low = vr.iter().find(|r| r.worker_id.as_str() == "w0-4").unwrap();
        assert_eq!(low.counts, alloc::vec![0, 0, 1]);
        let tied: u32 = vr.iter().map(|r| r.counts[0]).sum();
        assert_eq!(tied, 2);
        for row in &s.rank_matrix[&JobId::C] {
            assert_eq!(row.counts.iter().sum::<u32>(), 1);
        }
        assert_eq!(s.sent_histogram[5], 1);
    }
}
