//! Exhaustive checks of the payment rules against literal re-statements of
//! the experiment's rates, plus the configured constants.

use jobmarket_core::model::{JobId, JobSpec, JobSpecs};
use jobmarket_core::payoff::{bdm_resolve, dictator_payoffs, job_payoffs, math_task_points, to_cad, BdmDraw};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check {
            name,
            cases: 0,
            failures: Vec::new(),
        }
    }

    fn expect(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures.push(msg());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Points per problem as (correct worker, correct manager, skipped worker,
/// skipped manager).
fn return_table(job: JobId) -> (u32, u32, u32, u32) {
    match job {
        JobId::C => (10, 10, 15, 0),
        JobId::NC => (10, 10, 0, 0),
    }
}

/// Every `(job, attempted, correct)` against a per-problem sum.
pub fn payoff_enumeration(specs: &JobSpecs) -> Check {
    let mut c = Check::new("payoff_enumeration");
    for job in JobId::ALL {
        let (cw, cm, sw, sm) = return_table(job);
        for attempted in 0..=10u8 {
            for correct in 0..=attempted {
                let (mut w, mut m) = (0, 0);
                for problem in 0..10u8 {
                    if problem >= attempted {
                        w += sw;
                        m += sm;
                    } else if problem < correct {
                        w += cw;
                        m += cm;
                    }
                }
                let got = job_payoffs(specs.get(job), attempted, correct);
                c.expect(
                    matches!(got, Ok(o) if (o.worker_points, o.manager_points) == (w, m)),
                    || format!("{job} attempted={attempted} correct={correct}: {got:?}, expected ({w}, {m})"),
                );
            }
        }
    }
    c
}

pub fn dictator_identity() -> Check {
    let mut c = Check::new("dictator_identity");
    for sent in 0..=10u8 {
        let want = (10 * u32::from(10 - sent) + 5 * u32::from(sent), 5 * u32::from(sent));
        let got = dictator_payoffs(sent);
        c.expect(got == Ok(want), || format!("send {sent}: {got:?}, expected {want:?}"));
        c.expect(got.is_ok_and(|(d, r)| d + r == 100), || format!("send {sent}: points do not sum to 100"));
    }
    c.expect(dictator_payoffs(10) == Ok((50, 50)), || "send 10 is not an equal split".into());
    c
}

pub fn math_points() -> Check {
    let mut c = Check::new("math_points");
    for correct in 0..=10u8 {
        let got = math_task_points(correct);
        c.expect(got == Ok(10 * u32::from(correct)), || format!("{correct} correct: {got:?}"));
    }
    c
}

/// Sum over alpha in `0..=100` of the manager's points for report `r` when
/// the worker is worth `v` for sure.
fn bdm_expected(r: u32, v: u32) -> Option<u64> {
    let mut total = 0;
    for alpha in 0..=100 {
        let draw = BdmDraw {
            alpha,
            job_id: JobId::C,
            finalist_ids: ("a".into(), "b".into()),
        };
        total += u64::from(bdm_resolve(r, &draw, v).ok()?);
    }
    Some(total)
}

/// For every worth `v`, reporting `v` maximizes expected points. Another
/// report may tie only if it is adjacent and the expected payoff does not
/// change between the two.
pub fn bdm_truthfulness() -> Check {
    let mut c = Check::new("bdm_truthfulness");
    for v in 0..=100u32 {
        let Some(payoffs) = (0..=100).map(|r| bdm_expected(r, v)).collect::<Option<Vec<u64>>>() else {
            c.expect(false, || format!("worth {v}: resolution failed"));
            continue;
        };
        let best = *payoffs.iter().max().unwrap_or(&0);
        c.expect(payoffs[v as usize] == best, || format!("worth {v}: truthful report not optimal"));
        for (r, p) in payoffs.iter().enumerate() {
            if *p == best && r as u32 != v {
                let flat = r.abs_diff(v as usize) == 1;
                c.expect(flat, || format!("worth {v}: report {r} ties the truthful report"));
            }
        }
    }
    c
}

/// The configured rates, timers and conversion equal the experiment's.
pub fn config_defaults(cfg: &RunConfig) -> Check {
    let mut c = Check::new("config_defaults");
    for job in JobId::ALL {
        let s: &JobSpec = cfg.job_specs.get(job);
        let (cw, cm, sw, sm) = return_table(job);
        c.expect(
            (s.rate_correct_worker, s.rate_correct_manager, s.rate_skip_worker, s.rate_skip_manager) == (cw, cm, sw, sm),
            || format!("{job} rates differ from the return table: {s:?}"),
        );
        c.expect(s.num_problems == 10, || format!("{job} has {} problems", s.num_problems));
        c.expect(s.seconds_per_attempt == 6, || format!("{job} allows {} s per attempt", s.seconds_per_attempt));
    }
    c.expect(cfg.timers.math_task_seconds == 60, || {
        format!("math task timer is {} s", cfg.timers.math_task_seconds)
    });
    c.expect(cfg.conversion_rate == 0.08, || format!("conversion rate is {}", cfg.conversion_rate));
    let cad = to_cad(100, cfg.conversion_rate);
    c.expect(cad.as_ref().is_ok_and(|x| x.0 == 800), || format!("100 points convert to {cad:?}"));
    let session = cfg.session_config();
    c.expect(session.validate().is_ok(), || "session config does not validate".into());
    c
}

pub fn validation_suite(cfg: &RunConfig) -> Vec<Check> {
    vec![
        payoff_enumeration(&cfg.job_specs),
        dictator_identity(),
        math_points(),
        bdm_truthfulness(),
        config_defaults(cfg),
    ]
}
