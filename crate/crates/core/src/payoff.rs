//! Point arithmetic: Dictator Game, addition task, job returns, BDM
//! resolution and conversion to currency.

use alloc::collections::BTreeMap;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{JobId, JobSpec, WorkerId, ENDOWMENT_TOKENS, MAX_VALUE, PROBLEMS_PER_TASK};
use crate::pool::WorkerPool;

/// Points per token kept by the Dictator.
pub const POINTS_PER_KEPT_TOKEN: u32 = 10;
/// Points each player earns per token sent.
pub const POINTS_PER_SENT_TOKEN: u32 = 5;
/// Points per correct answer in the addition task.
pub const POINTS_PER_CORRECT: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayoffError {
    #[error("sent tokens {0} outside 0..=10")]
    SentOutOfRange(u8),
    #[error("correct answers {0} outside 0..=10")]
    CorrectOutOfRange(u8),
    #[error("attempted {attempted} exceeds {max} problems")]
    AttemptedOutOfRange { attempted: u8, max: u8 },
    #[error("correct {correct} exceeds attempted {attempted}")]
    CorrectExceedsAttempted { correct: u8, attempted: u8 },
    #[error("{what} {value} outside 0..=100")]
    PointsOutOfRange { what: &'static str, value: u32 },
    #[error("negative points: {0}")]
    NegativePoints(i64),
    #[error("finalist {0} is not a human worker")]
    SyntheticFinalist(WorkerId),
    #[error("finalists must be distinct")]
    SameFinalists,
    #[error("no reported value for finalist {0}")]
    MissingValue(WorkerId),
    #[error("no outcome for job {0}")]
    MissingOutcome(JobId),
}

/// Realized (dictator, receiver) points for a send of `sent` tokens.
pub fn dictator_payoffs(sent: u8) -> Result<(u32, u32), PayoffError> {
    if sent > ENDOWMENT_TOKENS {
        return Err(PayoffError::SentOutOfRange(sent));
    }
    let kept = u32::from(ENDOWMENT_TOKENS - sent);
    let sent = u32::from(sent);
    Ok((
        POINTS_PER_KEPT_TOKEN * kept + POINTS_PER_SENT_TOKEN * sent,
        POINTS_PER_SENT_TOKEN * sent,
    ))
}

pub fn math_task_points(correct: u8) -> Result<u32, PayoffError> {
    if correct > PROBLEMS_PER_TASK {
        return Err(PayoffError::CorrectOutOfRange(correct));
    }
    Ok(POINTS_PER_CORRECT * u32::from(correct))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub job_id: JobId,
    pub attempted: u8,
    pub correct: u8,
    pub worker_points: u32,
    pub manager_points: u32,
}

/// Points earned by both roles in one job. Skipped problems pay the skip
/// rates; incorrect attempts pay nobody.
pub fn job_payoffs(spec: &JobSpec, attempted: u8, correct: u8) -> Result<JobOutcome, PayoffError> {
    if attempted > spec.num_problems {
        return Err(PayoffError::AttemptedOutOfRange {
            attempted,
            max: spec.num_problems,
        });
    }
    if correct > attempted {
        return Err(PayoffError::CorrectExceedsAttempted { correct, attempted });
    }
    let skipped = u32::from(spec.num_problems - attempted);
    let correct32 = u32::from(correct);
    Ok(JobOutcome {
        job_id: spec.job_id,
        attempted,
        correct,
        worker_points: spec.rate_correct_worker * correct32 + spec.rate_skip_worker * skipped,
        manager_points: spec.rate_correct_manager * correct32 + spec.rate_skip_manager * skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BdmDraw {
    pub alpha: u32,
    pub job_id: JobId,
    pub finalist_ids: (WorkerId, WorkerId),
}

/// The manager keeps the worker's realized points when the draw is below
/// the report and receives the draw itself otherwise.
pub fn bdm_resolve(reported: u32, draw: &BdmDraw, realized_manager_points: u32) -> Result<u32, PayoffError> {
    if reported > MAX_VALUE {
        return Err(PayoffError::PointsOutOfRange {
            what: "reported value",
            value: reported,
        });
    }
    if draw.alpha > MAX_VALUE {
        return Err(PayoffError::PointsOutOfRange {
            what: "alpha",
            value: draw.alpha,
        });
    }
    Ok(if draw.alpha < reported {
        realized_manager_points
    } else {
        draw.alpha
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalistChoice {
    pub preferred: WorkerId,
    /// Set when both finalists had the same value and a coin decided.
    pub tie_broken: bool,
}

/// Picks the finalist with the higher reported value for `draw.job_id`;
/// equal values are settled by a fair coin from `rng`.
pub fn select_finalists<R: Rng + ?Sized>(
    values: &BTreeMap<WorkerId, u32>,
    draw: &BdmDraw,
    pool: &WorkerPool,
    rng: &mut R,
) -> Result<FinalistChoice, PayoffError> {
    let (a, b) = &draw.finalist_ids;
    if a == b {
        return Err(PayoffError::SameFinalists);
    }
    for id in [a, b] {
        match pool.get(id) {
            Some(w) if w.is_human() => {}
            _ => return Err(PayoffError::SyntheticFinalist(id.clone())),
        }
    }
    let va = *values.get(a).ok_or_else(|| PayoffError::MissingValue(a.clone()))?;
    let vb = *values.get(b).ok_or_else(|| PayoffError::MissingValue(b.clone()))?;
    Ok(match va.cmp(&vb) {
        core::cmp::Ordering::Greater => FinalistChoice {
            preferred: a.clone(),
            tie_broken: false,
        },
        core::cmp::Ordering::Less => FinalistChoice {
            preferred: b.clone(),
            tie_broken: false,
        },
        core::cmp::Ordering::Equal => FinalistChoice {
            preferred: if rng.random_bool(0.5) { a.clone() } else { b.clone() },
            tie_broken: true,
        },
    })
}

/// An amount of currency in cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cents(pub u64);

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

/// Converts points at `rate` currency units per point, rounded to the cent.
pub fn to_cad(points: i64, rate: f64) -> Result<Cents, PayoffError> {
    if points < 0 {
        return Err(PayoffError::NegativePoints(points));
    }
    Ok(Cents(libm::round(points as f64 * rate * 100.0) as u64))
}

/// Worker earnings: both measurement parts plus the selected job only.
pub fn worker_session_total(
    part1_points: u32,
    part2_points: u32,
    job_outcomes: &BTreeMap<JobId, JobOutcome>,
    selected_job: JobId,
) -> Result<u32, PayoffError> {
    let job = job_outcomes
        .get(&selected_job)
        .ok_or(PayoffError::MissingOutcome(selected_job))?;
    Ok(part1_points + part2_points + job.worker_points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JobSpec, Provenance, WorkerProfile};
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dictator_examples() {
        assert_eq!(dictator_payoffs(10), Ok((50, 50)));
        assert_eq!(dictator_payoffs(0), Ok((100, 0)));
        assert_eq!(dictator_payoffs(3), Ok((85, 15)));
        assert_eq!(dictator_payoffs(7), Ok((65, 35)));
        assert_eq!(dictator_payoffs(11), Err(PayoffError::SentOutOfRange(11)));
        for s in 0..=10 {
            let (d, r) = dictator_payoffs(s).unwrap();
            assert_eq!(d + r, 100);
        }
    }

    #[test]
    fn math_points() {
        assert_eq!(math_task_points(10), Ok(100));
        assert_eq!(math_task_points(0), Ok(0));
        assert_eq!(math_task_points(7), Ok(70));
        assert!(math_task_points(11).is_err());
    }

    #[test]
    fn job_examples() {
        let c = JobSpec::conflict();
        let nc = JobSpec::no_conflict();
        let o = job_payoffs(&c, 0, 0).unwrap();
        assert_eq!((o.worker_points, o.manager_points), (150, 0));
        let o = job_payoffs(&nc, 10, 10).unwrap();
        assert_eq!((o.worker_points, o.manager_points), (100, 100));
        let o = job_payoffs(&c, 10, 10).unwrap();
        assert_eq!((o.worker_points, o.manager_points), (100, 100));
        assert!(o.worker_points < job_payoffs(&c, 0, 0).unwrap().worker_points);
        assert_eq!(
            job_payoffs(&c, 3, 4),
            Err(PayoffError::CorrectExceedsAttempted { correct: 4, attempted: 3 })
        );
        assert!(job_payoffs(&c, 11, 0).is_err());
    }

    #[test]
    fn answering_correctly_versus_skipping() {
        // Turning one skip into a correct answer: -5 for the worker in C,
        // +10 in NC, +10 for the manager in both.
        for (spec, delta) in [(JobSpec::conflict(), -5i64), (JobSpec::no_conflict(), 10)] {
            for attempted in 0..10u8 {
                for correct in 0..=attempted {
                    let base = job_payoffs(&spec, attempted, correct).unwrap();
                    let more = job_payoffs(&spec, attempted + 1, correct + 1).unwrap();
                    assert_eq!(i64::from(more.worker_points) - i64::from(base.worker_points), delta);
                    assert_eq!(more.manager_points - base.manager_points, 10);
                    assert_eq!(base.manager_points % 10, 0);
                    assert!(base.manager_points <= MAX_VALUE);
                }
            }
        }
    }

    fn draw(alpha: u32) -> BdmDraw {
        BdmDraw {
            alpha,
            job_id: JobId::C,
            finalist_ids: ("a".into(), "b".into()),
        }
    }

    #[test]
    fn bdm_examples() {
        assert_eq!(bdm_resolve(80, &draw(50), 70), Ok(70));
        assert_eq!(bdm_resolve(80, &draw(90), 70), Ok(90));
        assert_eq!(bdm_resolve(80, &draw(80), 70), Ok(80));
        assert!(bdm_resolve(101, &draw(10), 0).is_err());
        assert!(bdm_resolve(10, &draw(101), 0).is_err());
    }

    #[test]
    fn truthful_report_maximizes_expected_payoff() {
        for v in 0..=100u32 {
            let expected = |r: u32| -> u64 {
                (0..=100).map(|a| u64::from(bdm_resolve(r, &draw(a), v).unwrap())).sum()
            };
            let best = (0..=100).map(expected).max().unwrap();
            assert_eq!(expected(v), best, "v = {v}");
            for r in 0..=100 {
                if expected(r) == best {
                    assert!(r == v || r == v + 1, "v = {v}, r = {r}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn bdm_monotone_in_alpha(reported in 0u32..=100, realized in 0u32..=100) {
            let mut prev = 0;
            for a in 0..=100 {
                let p = bdm_resolve(reported, &draw(a), realized).unwrap();
                if a >= reported {
                    prop_assert!(p >= prev || a == reported);
                    prop_assert_eq!(p, a);
                } else {
                    prop_assert_eq!(p, realized);
                }
                prev = p;
            }
        }

        #[test]
        fn swapping_selected_job_moves_total_by_job_difference(
            p1 in 0u32..=100, p2 in 0u32..=100,
            ca in 0u8..=10, cc in 0u8..=10, na in 0u8..=10, nc_ in 0u8..=10,
        ) {
            let c = job_payoffs(&JobSpec::conflict(), ca, cc.min(ca)).unwrap();
            let n = job_payoffs(&JobSpec::no_conflict(), na, nc_.min(na)).unwrap();
            let outcomes: BTreeMap<_, _> = [(JobId::C, c), (JobId::NC, n)].into_iter().collect();
            let tc = worker_session_total(p1, p2, &outcomes, JobId::C).unwrap() as i64;
            let tn = worker_session_total(p1, p2, &outcomes, JobId::NC).unwrap() as i64;
            prop_assert_eq!(tc - tn, c.worker_points as i64 - n.worker_points as i64);
        }
    }

    #[test]
    fn cad_conversion() {
        assert_eq!(to_cad(100, 0.08).unwrap().to_string(), "8.00");
        assert_eq!(to_cad(0, 0.08).unwrap().to_string(), "0.00");
        assert_eq!(to_cad(29, 0.08).unwrap().to_string(), "2.32");
        assert_eq!(to_cad(-1, 0.08), Err(PayoffError::NegativePoints(-1)));
        for p in 0..5000 {
            assert_eq!(to_cad(p, 0.08).unwrap().0, (p as u64) * 8);
        }
    }

    #[test]
    fn session_totals() {
        let c = JobOutcome { job_id: JobId::C, attempted: 0, correct: 0, worker_points: 150, manager_points: 0 };
        let n = JobOutcome { job_id: JobId::NC, attempted: 0, correct: 0, worker_points: 0, manager_points: 0 };
        let both: BTreeMap<_, _> = [(JobId::C, c), (JobId::NC, n)].into_iter().collect();
        assert_eq!(worker_session_total(85, 70, &both, JobId::C), Ok(305));
        let zero: BTreeMap<_, _> = [(JobId::C, JobOutcome { worker_points: 0, ..c }), (JobId::NC, n)].into_iter().collect();
        assert_eq!(worker_session_total(0, 0, &zero, JobId::NC), Ok(0));
        let only_c: BTreeMap<_, _> = [(JobId::C, c)].into_iter().collect();
        assert_eq!(worker_session_total(0, 0, &only_c, JobId::NC), Err(PayoffError::MissingOutcome(JobId::NC)));
    }

    fn finalist_pool() -> WorkerPool {
        WorkerPool::new(vec![
            WorkerProfile::new("a", 1, 5, Provenance::Human).unwrap(),
            WorkerProfile::new("b", 3, 7, Provenance::Human).unwrap(),
            WorkerProfile::new("s", 8, 8, Provenance::Synthetic).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn finalist_selection() {
        let pool = finalist_pool();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals = |a, b| -> BTreeMap<WorkerId, u32> { [("a".into(), a), ("b".into(), b)].into_iter().collect() };
        let d = draw(0);
        assert_eq!(select_finalists(&vals(60, 40), &d, &pool, &mut rng).unwrap().preferred.as_str(), "a");
        assert_eq!(select_finalists(&vals(40, 60), &d, &pool, &mut rng).unwrap().preferred.as_str(), "b");

        let mut first = 0;
        let trials = 10_000;
        for _ in 0..trials {
            let c = select_finalists(&vals(50, 50), &d, &pool, &mut rng).unwrap();
            assert!(c.tie_broken);
            if c.preferred.as_str() == "a" {
                first += 1;
            }
        }
        let share = first as f64 / trials as f64;
        assert!((share - 0.5).abs() <= 0.02, "share {share}");

        let synthetic = BdmDraw { finalist_ids: ("a".into(), "s".into()), ..draw(0) };
        let mut v = vals(1, 2);
        v.insert("s".into(), 3);
        assert_eq!(
            select_finalists(&v, &synthetic, &pool, &mut rng),
            Err(PayoffError::SyntheticFinalist("s".into()))
        );
    }
}
