use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, PanelCell};
use crate::model::{GridBounds, JobId};

/// Bandwidth candidates per dimension are `i / CV_STEPS` for `i` in
/// `0..=CV_STEPS`.
pub const CV_STEPS: usize = 20;

/// Unnormalized ordered-categorical weight `lambda^d`, with `0^0 = 1`.
pub fn ordered_weight(d: u32, lambda: f64) -> f64 {
    if d == 0 {
        1.0
    } else {
        libm::pow(lambda, f64::from(d))
    }
}

/// `lambda^|x - s|` normalized to sum to one over the support `lo..=hi`.
/// The normalizer depends only on `x`, so it cancels in the local-constant
/// estimator.
pub fn normalized_weight(x: u8, s: u8, lambda: f64, lo: u8, hi: u8) -> f64 {
    let total: f64 = (lo..=hi).map(|t| ordered_weight(u32::from(x.abs_diff(t)), lambda)).sum();
    ordered_weight(u32::from(x.abs_diff(s)), lambda) / total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub sent: u8,
    pub score: u8,
    pub n: usize,
    pub sum: f64,
}

/// Local-constant regression of value on (sent, score) with a product of
/// ordered-categorical kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub job: Option<JobId>,
    pub kernel: &'static str,
    pub lambda_sent: f64,
    pub lambda_score: f64,
    /// Leave-one-out sum of squared errors at the chosen bandwidths; `None`
    /// when bandwidths were fixed by the caller.
    pub cv_score: Option<f64>,
    pub n: usize,
    pub cells: Vec<CellStat>,
}

fn aggregate(obs: &[(u8, u8, f64)]) -> BTreeMap<(u8, u8), Vec<f64>> {
    let mut cells: BTreeMap<(u8, u8), Vec<f64>> = BTreeMap::new();
    for &(x, y, v) in obs {
        cells.entry((x, y)).or_default().push(v);
    }
    cells
}

fn check_lambda(l: f64) -> Result<(), AnalysisError> {
    if (0.0..=1.0).contains(&l) {
        Ok(())
    } else {
        Err(AnalysisError::Bandwidth(l))
    }
}

impl KernelModel {
    /// Weighted mean at `(x, y)`; `None` if every weight is zero.
    pub fn predict(&self, x: u8, y: u8) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for c in &self.cells {
            let w = ordered_weight(u32::from(x.abs_diff(c.sent)), self.lambda_sent)
                * ordered_weight(u32::from(y.abs_diff(c.score)), self.lambda_score);
            num += w * c.sum;
            den += w * c.n as f64;
        }
        (den > 0.0).then(|| num / den)
    }
}

/// Leave-one-out sum of squared errors; infinite if some observation has
/// no other observation with positive weight.
pub fn loo_error(obs: &[(u8, u8, f64)], lambda_sent: f64, lambda_score: f64) -> f64 {
    let cells = aggregate(obs);
    let stats: Vec<((u8, u8), f64, f64)> = cells
        .iter()
        .map(|(k, vs)| (*k, vs.iter().sum(), vs.len() as f64))
        .collect();
    let mut total = 0.0;
    for ((x, y), vs) in &cells {
        let (mut a, mut b) = (0.0, 0.0);
        for ((sx, sy), sum, n) in &stats {
            let w = ordered_weight(u32::from(x.abs_diff(*sx)), lambda_sent)
                * ordered_weight(u32::from(y.abs_diff(*sy)), lambda_score);
            a += w * sum;
            b += w * n;
        }
        // own weight is 1, so dropping observation v leaves (a - v) / (b - 1)
        if b - 1.0 <= 1e-12 {
            return f64::INFINITY;
        }
        for v in vs {
            let e = v - (a - v) / (b - 1.0);
            total += e * e;
        }
    }
    total
}

pub fn fit_with_bandwidths(
    obs: &[(u8, u8, f64)],
    lambda_sent: f64,
    lambda_score: f64,
) -> Result<KernelModel, AnalysisError> {
    if obs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    check_lambda(lambda_sent)?;
    check_lambda(lambda_score)?;
    Ok(KernelModel {
        job: None,
        kernel: "geometric_ordered",
        lambda_sent,
        lambda_score,
        cv_score: None,
        n: obs.len(),
        cells: aggregate(obs)
            .into_iter()
            .map(|((sent, score), vs)| CellStat {
                sent,
                score,
                n: vs.len(),
                sum: vs.iter().sum(),
            })
            .collect(),
    })
}

/// Chooses both bandwidths by leave-one-out cross-validation over the
/// `CV_STEPS` grid. The first minimum in (sent, score) lexicographic order
/// wins ties.
pub fn fit_ordered_kernel(panel: &[PanelCell], job: JobId) -> Result<KernelModel, AnalysisError> {
    let obs: Vec<(u8, u8, f64)> = panel
        .iter()
        .filter(|c| c.job == job)
        .map(|c| (c.sent, c.score, c.value))
        .collect();
    let mut model = fit_cv(&obs)?;
    model.job = Some(job);
    Ok(model)
}

pub fn fit_cv(obs: &[(u8, u8, f64)]) -> Result<KernelModel, AnalysisError> {
    if obs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let step = |i: usize| i as f64 / CV_STEPS as f64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=CV_STEPS {
        for j in 0..=CV_STEPS {
            let e = loo_error(obs, step(i), step(j));
            if e < best.0 {
                best = (e, step(i), step(j));
            }
        }
    }
    let mut model = fit_with_bandwidths(obs, best.1, best.2)?;
    model.cv_score = best.0.is_finite().then_some(best.0);
    Ok(model)
}

/// Predictions over a rectangle, indexed `[sent - lo][score - lo]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    pub bounds: GridBounds,
    pub values: Vec<Vec<Option<f64>>>,
}

impl EvaluationGrid {
    pub fn at(&self, x: u8, y: u8) -> Option<f64> {
        if !self.bounds.contains(x, y) {
            return None;
        }
        self.values[usize::from(x - self.bounds.sent.0)][usize::from(y - self.bounds.score.0)]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.values.len(), self.values.first().map_or(0, Vec::len))
    }
}

pub fn predict_grid(model: &KernelModel, bounds: GridBounds) -> EvaluationGrid {
    let values = (bounds.sent.0..=bounds.sent.1)
        .map(|x| (bounds.score.0..=bounds.score.1).map(|y| model.predict(x, y)).collect())
        .collect();
    EvaluationGrid { bounds, values }
}

/// Finite differences of a grid. Row index is the sent offset, column the
/// score offset, both from the grid's lower corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceMaps {
    /// `V(x+1, y) - V(x, y)`.
    pub sent_diff: Vec<Vec<Option<f64>>>,
    /// `V(x, y+1) - V(x, y)`.
    pub score_diff: Vec<Vec<Option<f64>>>,
    /// `V(x, y+1) - V(x+1, y)`.
    pub double_diff: Vec<Vec<Option<f64>>>,
}

pub fn difference_maps(grid: &EvaluationGrid) -> DifferenceMaps {
    let (nx, ny) = grid.shape();
    let v = &grid.values;
    let sub = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    DifferenceMaps {
        sent_diff: (0..nx.saturating_sub(1))
            .map(|i| (0..ny).map(|j| sub(v[i + 1][j], v[i][j])).collect())
            .collect(),
        score_diff: (0..nx)
            .map(|i| (0..ny.saturating_sub(1)).map(|j| sub(v[i][j + 1], v[i][j])).collect())
            .collect(),
        double_diff: (0..nx.saturating_sub(1))
            .map(|i| (0..ny.saturating_sub(1)).map(|j| sub(v[i][j + 1], v[i + 1][j])).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn degenerate_bandwidths() {
        let obs = vec![(0, 4, 10.0), (0, 4, 20.0), (3, 6, 50.0), (10, 10, 90.0)];
        let m = fit_with_bandwidths(&obs, 0.0, 0.0).unwrap();
        assert_eq!(m.predict(0, 4), Some(15.0));
        assert_eq!(m.predict(3, 6), Some(50.0));
        assert_eq!(m.predict(5, 5), None);
        let m = fit_with_bandwidths(&obs, 1.0, 1.0).unwrap();
        assert_eq!(m.predict(7, 9), Some(42.5));
        assert!(fit_with_bandwidths(&obs, 1.5, 0.0).is_err());
        assert!(fit_with_bandwidths(&[], 0.5, 0.5).is_err());
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        for lambda in [0.0, 0.3, 1.0] {
            let s: f64 = (0..=10).map(|t| normalized_weight(4, t, lambda, 0, 10)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_surface_differences() {
        let bounds = GridBounds::default();
        let values = (0..=10u8)
            .map(|x| (4..=10u8).map(|y| Some(2.0 * f64::from(x) + 6.0 * f64::from(y))).collect())
            .collect();
        let d = difference_maps(&EvaluationGrid { bounds, values });
        assert_eq!((d.sent_diff.len(), d.sent_diff[0].len()), (10, 7));
        assert_eq!((d.score_diff.len(), d.score_diff[0].len()), (11, 6));
        assert_eq!((d.double_diff.len(), d.double_diff[0].len()), (10, 6));
        assert!(d.sent_diff.iter().flatten().all(|v| (v.unwrap() - 2.0).abs() < 1e-12));
        assert!(d.score_diff.iter().flatten().all(|v| (v.unwrap() - 6.0).abs() < 1e-12));
        assert!(d.double_diff.iter().flatten().all(|v| (v.unwrap() - 4.0).abs() < 1e-12));
    }

    #[test]
    fn loo_needs_a_neighbour() {
        let obs = vec![(0, 4, 1.0), (1, 4, 2.0)];
        assert_eq!(loo_error(&obs, 0.0, 0.0), f64::INFINITY);
        // with lambda 1 each observation is predicted by the other
        assert!((loo_error(&obs, 1.0, 1.0) - 2.0).abs() < 1e-12);
    }
}
