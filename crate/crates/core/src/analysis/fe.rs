use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::linalg::least_squares;
use super::special::t_two_sided;
use super::{AnalysisError, PanelCell};
use crate::model::{JobId, SubjectId};

/// A regressor built from a panel cell. `x` is the worker's sent amount,
/// `y` the worker's score; the rest are manager covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Sent,
    Score,
    SentXScore,
    SentXStem,
    ScoreXStem,
    SentXMale,
    ScoreXMale,
    /// Interaction with the manager having sent 6 or more tokens.
    SentXHighSent,
    ScoreXHighSent,
    /// Interaction with the manager having solved 8 or more problems.
    SentXHighScore,
    ScoreXHighScore,
    /// Interaction with the manager having sent more than they solved.
    SentXSentGtScore,
    ScoreXSentGtScore,
    // manager-level, absorbed by the fixed effects
    Stem,
    Male,
    OwnSent,
    OwnScore,
    Age,
    Risk,
}

impl Term {
    pub const ALL: [Term; 19] = [
        Term::Sent,
        Term::Score,
        Term::SentXScore,
        Term::SentXStem,
        Term::ScoreXStem,
        Term::SentXMale,
        Term::ScoreXMale,
        Term::SentXHighSent,
        Term::ScoreXHighSent,
        Term::SentXHighScore,
        Term::ScoreXHighScore,
        Term::SentXSentGtScore,
        Term::ScoreXSentGtScore,
        Term::Stem,
        Term::Male,
        Term::OwnSent,
        Term::OwnScore,
        Term::Age,
        Term::Risk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Sent => "sent",
            Term::Score => "score",
            Term::SentXScore => "sent_x_score",
            Term::SentXStem => "sent_x_stem",
            Term::ScoreXStem => "score_x_stem",
            Term::SentXMale => "sent_x_male",
            Term::ScoreXMale => "score_x_male",
            Term::SentXHighSent => "sent_x_high_sent",
            Term::ScoreXHighSent => "score_x_high_sent",
            Term::SentXHighScore => "sent_x_high_score",
            Term::ScoreXHighScore => "score_x_high_score",
            Term::SentXSentGtScore => "sent_x_sent_gt_score",
            Term::ScoreXSentGtScore => "score_x_sent_gt_score",
            Term::Stem => "stem",
            Term::Male => "male",
            Term::OwnSent => "own_sent",
            Term::OwnScore => "own_score",
            Term::Age => "age",
            Term::Risk => "risk",
        }
    }

    pub fn parse(s: &str) -> Option<Term> {
        Term::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn value(self, c: &PanelCell) -> f64 {
        let x = f64::from(c.sent);
        let y = f64::from(c.score);
        let d = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            Term::Sent => x,
            Term::Score => y,
            Term::SentXScore => x * y,
            Term::SentXStem => x * d(c.stem),
            Term::ScoreXStem => y * d(c.stem),
            Term::SentXMale => x * d(c.male),
            Term::ScoreXMale => y * d(c.male),
            Term::SentXHighSent => x * d(c.own_sent >= 6),
            Term::ScoreXHighSent => y * d(c.own_sent >= 6),
            Term::SentXHighScore => x * d(c.own_score >= 8),
            Term::ScoreXHighScore => y * d(c.own_score >= 8),
            Term::SentXSentGtScore => x * d(c.own_sent > c.own_score),
            Term::ScoreXSentGtScore => y * d(c.own_sent > c.own_score),
            Term::Stem => d(c.stem),
            Term::Male => d(c.male),
            Term::OwnSent => f64::from(c.own_sent),
            Term::OwnScore => f64::from(c.own_score),
            Term::Age => f64::from(c.age),
            Term::Risk => f64::from(c.risk),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// 1 to 4 for the standard columns, `None` for custom term lists.
    pub id: Option<u8>,
    pub terms: Vec<Term>,
}

impl ModelSpec {
    /// The four standard specifications.
    pub fn standard(id: u8) -> Result<ModelSpec, AnalysisError> {
        use Term::*;
        let base = [Sent, Score, SentXScore];
        let controls = [SentXStem, ScoreXStem, SentXMale, ScoreXMale];
        let terms: Vec<Term> = match id {
            1 => base.to_vec(),
            2 => [&base[..], &controls[..]].concat(),
            3 => [
                &base[..],
                &controls[..],
                &[SentXHighSent, ScoreXHighSent, SentXHighScore, ScoreXHighScore][..],
            ]
            .concat(),
            4 => [&base[..], &controls[..], &[SentXSentGtScore, ScoreXSentGtScore][..]].concat(),
            other => return Err(AnalysisError::UnknownSpec(other)),
        };
        Ok(ModelSpec { id: Some(id), terms })
    }

    pub fn custom(terms: Vec<Term>) -> ModelSpec {
        ModelSpec { id: None, terms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    Classical,
    /// Clustered by manager with the `G/(G-1) (n-1)/(n-k)` correction and
    /// `G - 1` degrees of freedom.
    ClusterManager,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Constant within every manager, so swept out with the fixed effects.
    Absorbed,
    /// A linear combination of earlier regressors, or identically zero.
    Collinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub term: Term,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub job: Option<JobId>,
    pub spec: Option<u8>,
    pub se_kind: SeKind,
    pub estimates: Vec<Estimate>,
    pub dropped: Vec<(Term, DropReason)>,
    /// Covariance of the kept estimates, in `estimates` order.
    pub cov: Vec<Vec<f64>>,
    pub n: usize,
    pub groups: usize,
    /// Residual degrees of freedom `n - groups - k`.
    pub df_resid: usize,
    /// Degrees of freedom used for p-values.
    pub df_test: usize,
    pub r2_within: f64,
    pub ssr: f64,
}

impl FitResult {
    pub fn get(&self, term: Term) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.term == term)
    }

    fn index(&self, term: Term) -> Option<usize> {
        self.estimates.iter().position(|e| e.term == term)
    }

    pub fn cov_of(&self, a: Term, b: Term) -> Option<f64> {
        Some(self.cov[self.index(a)?][self.index(b)?])
    }
}

/// Within (fixed-effects) estimator: every variable is demeaned per
/// manager, then fit by least squares without an intercept. `job = None`
/// pools both jobs.
pub fn fit_fixed_effects(
    panel: &[PanelCell],
    spec: &ModelSpec,
    job: Option<JobId>,
    se_kind: SeKind,
) -> Result<FitResult, AnalysisError> {
    let cells: Vec<&PanelCell> = panel.iter().filter(|c| job.is_none_or(|j| c.job == j)).collect();
    if cells.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut group_of: BTreeMap<&SubjectId, usize> = BTreeMap::new();
    for c in &cells {
        let next = group_of.len();
        group_of.entry(&c.manager_id).or_insert(next);
    }
    let groups = group_of.len();
    if groups < 2 {
        return Err(AnalysisError::TooFewManagers(groups));
    }
    let gid: Vec<usize> = cells.iter().map(|c| group_of[&c.manager_id]).collect();
    let n = cells.len();

    let demean = |v: &mut Vec<f64>| {
        let mut sum = vec![0.0; groups];
        let mut count = vec![0usize; groups];
        for (x, &g) in v.iter().zip(&gid) {
            sum[g] += x;
            count[g] += 1;
        }
        for (x, &g) in v.iter_mut().zip(&gid) {
            *x -= sum[g] / count[g] as f64;
        }
    };
    let norm = |v: &[f64]| libm::sqrt(v.iter().map(|x| x * x).sum());

    let mut y: Vec<f64> = cells.iter().map(|c| c.value).collect();
    demean(&mut y);

    let mut dropped = Vec::new();
    let mut candidates: Vec<Term> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for &term in &spec.terms {
        let raw: Vec<f64> = cells.iter().map(|c| term.value(c)).collect();
        let raw_norm = norm(&raw);
        let mut col = raw;
        demean(&mut col);
        if raw_norm == 0.0 {
            dropped.push((term, DropReason::Collinear));
        } else if norm(&col) <= 1e-10 * raw_norm {
            dropped.push((term, DropReason::Absorbed));
        } else {
            candidates.push(term);
            cols.push(col);
        }
    }
    let ls = least_squares(&cols, &y, 1e-10);
    for &c in &ls.collinear {
        dropped.push((candidates[c], DropReason::Collinear));
    }
    let terms: Vec<Term> = ls.kept.iter().map(|&c| candidates[c]).collect();
    let k = terms.len();
    if k == 0 {
        return Err(AnalysisError::NoRegressors(format!("all of {:?} dropped", spec.terms)));
    }
    if n <= groups + k {
        return Err(AnalysisError::NoDegreesOfFreedom);
    }
    let df_resid = n - groups - k;
    let ssr: f64 = ls.residuals.iter().map(|e| e * e).sum();
    let tss: f64 = y.iter().map(|v| v * v).sum();

    let (cov, df_test) = match se_kind {
        SeKind::Classical => {
            let s2 = ssr / df_resid as f64;
            let cov = ls
                .xtx_inv
                .iter()
                .map(|row| row.iter().map(|v| v * s2).collect())
                .collect();
            (cov, df_resid)
        }
        SeKind::ClusterManager => {
            let mut scores = vec![vec![0.0; k]; groups];
            for (i, &g) in gid.iter().enumerate() {
                for (j, &c) in ls.kept.iter().enumerate() {
                    scores[g][j] += cols[c][i] * ls.residuals[i];
                }
            }
            let mut meat = vec![vec![0.0; k]; k];
            for s in &scores {
                for a in 0..k {
                    for b in 0..k {
                        meat[a][b] += s[a] * s[b];
                    }
                }
            }
            let g = groups as f64;
            let scale = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
            let inv = &ls.xtx_inv;
            let mut cov = vec![vec![0.0; k]; k];
            for a in 0..k {
                for b in 0..k {
                    let mut s = 0.0;
                    for p in 0..k {
                        for q in 0..k {
                            s += inv[a][p] * meat[p][q] * inv[q][b];
                        }
                    }
                    cov[a][b] = s * scale;
                }
            }
            (cov, groups - 1)
        }
    };

    let estimates = terms
        .iter()
        .enumerate()
        .map(|(j, &term)| {
            let se = libm::sqrt(cov[j][j]);
            let t = ls.coef[j] / se;
            Estimate {
                term,
                estimate: ls.coef[j],
                se,
                t,
                p: t_two_sided(t, df_test as f64),
            }
        })
        .collect();

    Ok(FitResult {
        job,
        spec: spec.id,
        se_kind,
        estimates,
        dropped,
        cov,
        n,
        groups,
        df_resid,
        df_test,
        r2_within: if tss > 0.0 { 1.0 - ssr / tss } else { 0.0 },
        ssr,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::cell;
    use super::*;
    use alloc::format;

    fn panel(f: impl Fn(usize, u8, u8) -> f64) -> Vec<PanelCell> {
        let mut out = Vec::new();
        for m in 0..4 {
            for x in [0u8, 3, 7, 10] {
                for y in [4u8, 6, 9] {
                    let mut c = cell(&format!("m{m}"), JobId::C, x, y, f(m, x, y));
                    c.stem = m % 2 == 0;
                    c.own_sent = 3 * m as u8;
                    out.push(c);
                }
            }
        }
        out
    }

    #[test]
    fn noise_free_panel_is_recovered() {
        let p = panel(|m, x, y| {
            10.0 * m as f64 + 1.740 * f64::from(x) + 4.644 * f64::from(y) + 0.101 * f64::from(x) * f64::from(y)
        });
        let fit = fit_fixed_effects(&p, &ModelSpec::standard(1).unwrap(), Some(JobId::C), SeKind::Classical).unwrap();
        let b: Vec<f64> = fit.estimates.iter().map(|e| e.estimate).collect();
        for (got, want) in b.iter().zip([1.740, 4.644, 0.101]) {
            assert!((got - want).abs() < 1e-10, "{b:?}");
        }
        assert!(fit.r2_within > 1.0 - 1e-12);
        assert_eq!(fit.df_resid, 48 - 4 - 3);
    }

    #[test]
    fn manager_level_terms_are_absorbed() {
        let p = panel(|m, x, _| m as f64 + f64::from(x) + if x > 5 { 1.0 } else { 0.0 });
        let spec = ModelSpec::custom(alloc::vec![Term::Sent, Term::Stem, Term::OwnSent, Term::SentXMale]);
        let fit = fit_fixed_effects(&p, &spec, None, SeKind::Classical).unwrap();
        assert_eq!(fit.estimates.len(), 1);
        assert!(fit.dropped.contains(&(Term::Stem, DropReason::Absorbed)));
        assert!(fit.dropped.contains(&(Term::OwnSent, DropReason::Absorbed)));
        // nobody is male, so the column is all zeros
        assert!(fit.dropped.contains(&(Term::SentXMale, DropReason::Collinear)));
    }

    #[test]
    fn duplicate_regressor_is_collinear() {
        let p = panel(|_, x, y| f64::from(x) + f64::from(y) + f64::from(x % 3));
        let spec = ModelSpec::custom(alloc::vec![Term::Sent, Term::Score, Term::Sent]);
        let fit = fit_fixed_effects(&p, &spec, None, SeKind::Classical).unwrap();
        assert_eq!(fit.estimates.len(), 2);
        assert_eq!(fit.dropped, alloc::vec![(Term::Sent, DropReason::Collinear)]);
    }

    #[test]
    fn cluster_covariance_is_symmetric() {
        let p = panel(|m, x, y| f64::from(x) * (1.0 + m as f64 * 0.1) + f64::from(y) + f64::from((x + y) % 4));
        let fit =
            fit_fixed_effects(&p, &ModelSpec::standard(1).unwrap(), None, SeKind::ClusterManager).unwrap();
        assert_eq!(fit.df_test, 3);
        for a in 0..3 {
            assert!(fit.cov[a][a] >= 0.0);
            for b in 0..3 {
                assert!((fit.cov[a][b] - fit.cov[b][a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_single_manager_and_unknown_spec() {
        let p: Vec<PanelCell> = panel(|_, x, _| f64::from(x)).into_iter().filter(|c| c.manager_id.as_str() == "m0").collect();
        assert_eq!(
            fit_fixed_effects(&p, &ModelSpec::standard(1).unwrap(), None, SeKind::Classical),
            Err(AnalysisError::TooFewManagers(1))
        );
        assert_eq!(ModelSpec::standard(5), Err(AnalysisError::UnknownSpec(5)));
        assert_eq!(ModelSpec::standard(3).unwrap().terms.len(), 11);
        assert_eq!(ModelSpec::standard(4).unwrap().terms.len(), 9);
    }
}
