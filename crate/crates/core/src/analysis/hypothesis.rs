use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::special::{f_sf, t_cdf, t_two_sided};
use super::{mean, variance, FitResult, PanelCell, Term};
use crate::model::{JobId, SubjectId, WorkerId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    /// Point estimate being tested (mean difference or coefficient).
    pub estimate: f64,
    pub statistic: f64,
    pub df: f64,
    pub p: f64,
}

/// Welch's two-sample t test of `mean(a) = mean(b)`.
pub fn welch_t(name: &str, a: &[f64], b: &[f64]) -> Option<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    let (t, df, p) = if se2 == 0.0 {
        if diff == 0.0 {
            (0.0, na + nb - 2.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, na + nb - 2.0, 0.0)
        }
    } else {
        let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
        let t = diff / libm::sqrt(se2);
        (t, df, t_two_sided(t, df))
    };
    Some(TestResult {
        name: name.into(),
        estimate: diff,
        statistic: t,
        df,
        p,
    })
}

/// One-sample t test of `mean(d) = 0`. A sample of identical zeros gives
/// `t = 0, p = 1`.
pub fn paired_t(name: &str, d: &[f64]) -> Option<TestResult> {
    if d.len() < 2 {
        return None;
    }
    let n = d.len() as f64;
    let m = mean(d);
    let se = libm::sqrt(variance(d) / n);
    let (t, p) = if se == 0.0 {
        if m == 0.0 {
            (0.0, 1.0)
        } else {
            (m.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = m / se;
        (t, t_two_sided(t, n - 1.0))
    };
    Some(TestResult {
        name: name.into(),
        estimate: m,
        statistic: t,
        df: n - 1.0,
        p,
    })
}

/// Manager-level mean value in NC minus that in C.
pub fn h1_paired(panel: &[PanelCell]) -> Option<TestResult> {
    let mut sums: BTreeMap<(&SubjectId, JobId), (f64, usize)> = BTreeMap::new();
    for c in panel {
        let e = sums.entry((&c.manager_id, c.job)).or_insert((0.0, 0));
        e.0 += c.value;
        e.1 += 1;
    }
    let managers: Vec<&SubjectId> = {
        let mut m: Vec<&SubjectId> = sums.keys().map(|(m, _)| *m).collect();
        m.dedup();
        m
    };
    let d: Vec<f64> = managers
        .iter()
        .filter_map(|m| {
            let (sc, nc) = sums.get(&(*m, JobId::C))?;
            let (sn, nn) = sums.get(&(*m, JobId::NC))?;
            Some(sn / *nn as f64 - sc / *nc as f64)
        })
        .collect();
    paired_t("h1_nc_minus_c", &d)
}

/// Wald test of `a = b`, reported as `F(1, df)`.
pub fn wald_equal(name: &str, fit: &FitResult, a: Term, b: Term) -> Option<TestResult> {
    let diff = fit.get(a)?.estimate - fit.get(b)?.estimate;
    let var = fit.cov_of(a, a)? + fit.cov_of(b, b)? - 2.0 * fit.cov_of(a, b)?;
    let f = diff * diff / var;
    Some(TestResult {
        name: name.into(),
        estimate: diff,
        statistic: f,
        df: fit.df_test as f64,
        p: f_sf(f, 1.0, fit.df_test as f64),
    })
}

/// t test of `coef = 0` against `coef > 0`.
pub fn one_sided_upper(name: &str, fit: &FitResult, term: Term) -> Option<TestResult> {
    let e = fit.get(term)?;
    Some(TestResult {
        name: name.into(),
        estimate: e.estimate,
        statistic: e.t,
        df: fit.df_test as f64,
        p: 1.0 - t_cdf(e.t, fit.df_test as f64),
    })
}

fn two_sided(name: &str, fit: &FitResult, term: Term) -> Option<TestResult> {
    let e = fit.get(term)?;
    Some(TestResult {
        name: name.into(),
        estimate: e.estimate,
        statistic: e.t,
        df: fit.df_test as f64,
        p: e.p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub results: Vec<TestResult>,
    /// Tests that could not be run, with the reason.
    pub missing: Vec<String>,
}

/// Runs the hypothesis battery:
/// * H1: managers value workers more in NC than in C (paired t).
/// * H2: equal sent and score slopes in C (Wald), per available spec.
/// * H3: zero sent slope in NC (t), per available spec.
/// * H4a: larger sent slope for high-sending managers (one-sided, specs 3-4).
/// * H4b: larger score slope for high-scoring managers (one-sided, spec 3).
///
/// It also runs a Welch comparison of each worker's C and NC values.
pub fn hypothesis_tests(panel: &[PanelCell], fits: &[FitResult]) -> TestReport {
    let mut results = Vec::new();
    let mut missing = Vec::new();
    let mut push = |name: String, r: Option<TestResult>| match r {
        Some(r) => results.push(r),
        None => missing.push(name),
    };
    push("h1_nc_minus_c".into(), h1_paired(panel));

    let fit = |job: JobId, spec: u8| fits.iter().find(|f| f.job == Some(job) && f.spec == Some(spec));
    for spec in 1..=4u8 {
        let name = format!("h2_c_spec{spec}");
        let r = fit(JobId::C, spec).and_then(|f| wald_equal(&name, f, Term::Sent, Term::Score));
        push(name, r);
        let name = format!("h3_nc_spec{spec}");
        let r = fit(JobId::NC, spec).and_then(|f| two_sided(&name, f, Term::Sent));
        push(name, r);
    }
    for job in JobId::ALL {
        for (hyp, spec, term) in [
            ("h4a", 3, Term::SentXHighSent),
            ("h4a", 4, Term::SentXSentGtScore),
            ("h4b", 3, Term::ScoreXHighScore),
        ] {
            let name = format!("{hyp}_{}_spec{spec}_{}", job.as_str().to_lowercase(), term.name());
            let r = fit(job, spec).and_then(|f| one_sided_upper(&name, f, term));
            push(name, r);
        }
    }

    let mut by_worker: BTreeMap<(&WorkerId, JobId), Vec<f64>> = BTreeMap::new();
    for c in panel {
        by_worker.entry((&c.worker_id, c.job)).or_default().push(c.value);
    }
    let workers: Vec<&WorkerId> = {
        let mut w: Vec<&WorkerId> = by_worker.keys().map(|(w, _)| *w).collect();
        w.dedup();
        w
    };
    for w in workers {
        let name = format!("welch_{w}_nc_minus_c");
        let r = match (by_worker.get(&(w, JobId::NC)), by_worker.get(&(w, JobId::C))) {
            (Some(nc), Some(c)) => welch_t(&name, nc, c),
            _ => None,
        };
        push(name, r);
    }
    TestReport { results, missing }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::cell;
    use super::*;

    #[test]
    fn welch_textbook() {
        let r = welch_t("w", &[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.statistic + 1.224_744_871).abs() < 1e-8);
        assert!((r.df - 4.0).abs() < 1e-12);
        assert!(welch_t("w", &[1.0], &[2.0, 3.0]).is_none());
    }

    #[test]
    fn identical_jobs_give_null_h1() {
        let mut p = Vec::new();
        for m in ["a", "b", "c"] {
            for (x, v) in [(1u8, 30.0), (5, 55.0)] {
                p.push(cell(m, JobId::C, x, 6, v));
                p.push(cell(m, JobId::NC, x, 6, v));
            }
        }
        let r = h1_paired(&p).unwrap();
        assert_eq!((r.statistic, r.p), (0.0, 1.0));
    }

    #[test]
    fn missing_fits_are_listed() {
        let report = hypothesis_tests(&[], &[]);
        assert!(report.missing.iter().any(|m| m == "h2_c_spec1"));
        assert!(report.results.is_empty());
    }
}
