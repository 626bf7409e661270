use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{manager_ranking, manager_report, worker_answers, ManagerPolicy, WorkerPolicy};
use crate::model::{JobId, ManagerProfile, SessionConfig, SessionId, SubjectId, ValuationReport, WorkerId};
use crate::pool::{lab_worker_results, WorkerPool};
use crate::rng::{stream, Purpose};
use crate::session::{
    Action, ManagerSetup, Phase, Session, SessionError, SessionEvent, SessionRole, SessionSetup, StoredOutcome,
    SubjectPayoff, SubjectView, TaskRef, TaskView, WorkerSessionResult,
};

/// Virtual time between consecutive bot moves.
pub const BOT_STEP_MS: u64 = 500;

/// Answers the first unanswered problem, correctly if the plan says so.
fn answer_next(task: &TaskView, plan: &[bool]) -> Option<Action> {
    if task.closed {
        return None;
    }
    let i = task.answers.iter().position(Option::is_none)?;
    let (a, b) = task.problems[i];
    let sum = i64::from(a) + i64::from(b);
    let correct = plan.get(i).copied().unwrap_or(false);
    Some(Action::Answer {
        task: task.task,
        index: i as u8,
        value: if correct { sum } else { sum + 1 },
    })
}

fn math_plan(score: u8) -> Vec<bool> {
    (0..10).map(|i| i < score).collect()
}

fn task(view: &SubjectView, task: TaskRef) -> Option<&TaskView> {
    view.tasks.iter().find(|t| t.task == task)
}

/// Moves shared by both roles: Parts 1 and 2, the quiz and the questionnaire.
fn common_move(view: &SubjectView, sent: u8, score: u8, quiz: &[i64]) -> Option<Action> {
    match view.phase {
        Phase::Part1Decide if view.part1.sent.is_none() => Some(Action::Send { tokens: sent }),
        Phase::Part1Reveal if !view.part1.proceeded => Some(Action::Proceed),
        Phase::Part2Math => answer_next(task(view, TaskRef::Math)?, &math_plan(score)),
        Phase::QuizJobs => Some(Action::SubmitQuiz { answers: quiz.to_vec() }),
        _ => None,
    }
}

pub struct WorkerBot {
    pub policy: WorkerPolicy,
    plans: BTreeMap<JobId, Vec<bool>>,
    rng: ChaCha8Rng,
}

impl WorkerBot {
    pub fn new(policy: WorkerPolicy, rng: ChaCha8Rng) -> Self {
        Self {
            policy,
            plans: BTreeMap::new(),
            rng,
        }
    }

    pub fn next_action(&mut self, view: &SubjectView, quiz: &[i64]) -> Option<Action> {
        match view.phase {
            Phase::Job(job) => {
                if let Some(plan) = self.plans.get(&job) {
                    return answer_next(task(view, TaskRef::Job(job))?, plan);
                }
                let plan = worker_answers(&self.policy, job, &mut self.rng);
                let attempted = plan.len() as u8;
                self.plans.insert(job, plan);
                Some(Action::ChooseAttempts { job, attempted })
            }
            Phase::Questionnaire => Some(Action::SubmitQuestionnaire {
                questionnaire: self.policy.questionnaire.clone().unwrap_or(crate::model::Questionnaire {
                    stem: false,
                    male: false,
                    age: 21,
                    risk: 5,
                }),
            }),
            _ => common_move(view, self.policy.sent, self.policy.score, quiz),
        }
    }
}

/// One reported value with the latent valuation behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub manager_id: SubjectId,
    pub job: JobId,
    pub worker_id: WorkerId,
    pub latent: f64,
    pub value: u32,
}

struct TablePlan {
    values: BTreeMap<WorkerId, u32>,
    order: Vec<WorkerId>,
}

pub struct ManagerBot {
    pub id: SubjectId,
    pub policy: ManagerPolicy,
    pool: WorkerPool,
    plans: BTreeMap<JobId, TablePlan>,
    pub latents: Vec<LatentRecord>,
    rng: ChaCha8Rng,
}

impl ManagerBot {
    pub fn new(id: SubjectId, policy: ManagerPolicy, pool: WorkerPool, rng: ChaCha8Rng) -> Self {
        Self {
            id,
            policy,
            pool,
            plans: BTreeMap::new(),
            latents: Vec::new(),
            rng,
        }
    }

    fn plan(&mut self, job: JobId) -> &TablePlan {
        if !self.plans.contains_key(&job) {
            let mut values = Vec::with_capacity(self.pool.len());
            for w in &self.pool.workers {
                let r = manager_report(&self.policy, w, job, &mut self.rng);
                self.latents.push(LatentRecord {
                    manager_id: self.id.clone(),
                    job,
                    worker_id: w.worker_id.clone(),
                    latent: r.latent,
                    value: r.value,
                });
                values.push((w.worker_id.clone(), r.value));
            }
            let order = manager_ranking(&values, &mut self.rng);
            self.plans.insert(
                job,
                TablePlan {
                    values: values.into_iter().collect(),
                    order,
                },
            );
        }
        &self.plans[&job]
    }

    pub fn next_action(&mut self, view: &SubjectView, quiz: &[i64]) -> Option<Action> {
        let own = self.policy.own;
        match view.phase {
            Phase::RankValue(job) => {
                let table = view.table.as_ref()?;
                if table.remaining > 0 {
                    return Some(Action::AddWorker { job });
                }
                let plan = self.plan(job);
                if !table.order_locked {
                    let misplaced = table.rows.iter().zip(&plan.order).position(|(row, want)| row.worker_id != *want);
                    if let Some(i) = misplaced {
                        return Some(Action::MoveWorker {
                            job,
                            worker: plan.order[i].clone(),
                            position: i as u8,
                        });
                    }
                }
                if let Some(row) = table.rows.iter().find(|r| r.value.is_none()) {
                    return Some(Action::EnterValue {
                        job,
                        worker: row.worker_id.clone(),
                        value: i64::from(plan.values[&row.worker_id]),
                    });
                }
                Some(Action::SubmitJob { job })
            }
            Phase::Questionnaire => Some(Action::SubmitQuestionnaire {
                questionnaire: own.questionnaire(),
            }),
            _ => common_move(view, own.sent, own.score, quiz),
        }
    }
}

#[allow(clippy::large_enum_variant)]
enum Bot {
    Worker(WorkerBot),
    Manager(ManagerBot),
}

impl Bot {
    fn next_action(&mut self, view: &SubjectView, quiz: &[i64]) -> Option<Action> {
        match self {
            Bot::Worker(b) => b.next_action(view, quiz),
            Bot::Manager(b) => b.next_action(view, quiz),
        }
    }
}

/// Runs bots to completion. All bots move once per step of the virtual
/// clock; when none can move the clock jumps to the next deadline.
fn drive(session: &mut Session, bots: &mut [Bot], start_ms: u64) -> Result<(), SessionError> {
    let roster: Vec<SubjectId> = session.roster().to_vec();
    let quiz: Vec<i64> = session.quiz().iter().map(|q| q.answer).collect();
    let mut now = start_ms;
    while !session.is_finished() {
        now += BOT_STEP_MS;
        let mut acted = false;
        for (id, bot) in roster.iter().zip(bots.iter_mut()) {
            let view = session.view(id).expect("roster member");
            if let Some(action) = bot.next_action(&view, &quiz) {
                session.apply(id, action, now)?;
                acted = true;
            }
        }
        session.tick(now);
        if !acted {
            match session.next_deadline() {
                Some(d) => {
                    now = now.max(d);
                    session.tick(now);
                }
                None if session.is_finished() => {}
                None => return Err(SessionError::Invalid("bots stalled".to_string())),
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct WorkerSessionOutput {
    pub results: Vec<WorkerSessionResult>,
    pub log: Vec<SessionEvent>,
    pub payoffs: Vec<(SubjectId, SubjectPayoff)>,
}

impl WorkerSessionOutput {
    /// Job outcomes keyed by the worker ids used in the pool.
    pub fn stored_outcomes(&self) -> Vec<StoredOutcome> {
        self.results
            .iter()
            .flat_map(|r| {
                r.outcomes.iter().map(move |o| StoredOutcome {
                    worker_id: WorkerId(r.subject_id.0.clone()),
                    outcome: *o,
                })
            })
            .collect()
    }
}

/// Worker policies reproducing the lab workers' signals, ids `W01`...
pub fn lab_worker_policies() -> Vec<(SubjectId, WorkerPolicy)> {
    lab_worker_results()
        .into_iter()
        .map(|r| (SubjectId(r.subject_id.0), WorkerPolicy::new(r.sent, r.score)))
        .collect()
}

pub fn simulate_worker_session(
    session_id: SessionId,
    policies: &[(SubjectId, WorkerPolicy)],
    config: SessionConfig,
) -> Result<WorkerSessionOutput, SessionError> {
    let seed = config.rng_seed;
    let setup = SessionSetup {
        session_id,
        role: SessionRole::WorkerSession,
        roster: policies.iter().map(|(id, _)| id.clone()).collect(),
        config,
        manager: None,
    };
    let mut session = Session::open(setup, 0)?;
    let mut bots: Vec<Bot> = policies
        .iter()
        .map(|(id, p)| Bot::Worker(WorkerBot::new(p.clone(), stream(seed, Purpose::Agent, id.as_str()))))
        .collect();
    drive(&mut session, &mut bots, 0)?;
    Ok(WorkerSessionOutput {
        results: session.worker_results(),
        log: session.events().to_vec(),
        payoffs: session.payoffs(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct StudyOutput {
    pub reports: Vec<ValuationReport>,
    pub managers: Vec<ManagerProfile>,
    pub latents: Vec<LatentRecord>,
    pub logs: Vec<Vec<SessionEvent>>,
    pub payoffs: Vec<(SubjectId, SubjectPayoff)>,
}

/// Seed of the `index`-th session of a study.
pub fn session_seed(study_seed: u64, index: usize) -> u64 {
    stream(study_seed, Purpose::Agent, &format!("session-{index}")).next_u64()
}

/// Runs manager sessions of up to `session_size` bots each until every
/// policy has reported. Each manager yields 2 x pool-size reports.
pub fn simulate_study(
    pool: &WorkerPool,
    outcomes: &[StoredOutcome],
    policies: &[(SubjectId, ManagerPolicy)],
    config: &SessionConfig,
    session_size: usize,
) -> Result<StudyOutput, SessionError> {
    let mut out = StudyOutput::default();
    for (i, chunk) in policies.chunks(session_size.max(1)).enumerate() {
        let seed = session_seed(config.rng_seed, i);
        let setup = SessionSetup {
            session_id: SessionId(format!("managers-{:02}", i + 1)),
            role: SessionRole::ManagerSession,
            roster: chunk.iter().map(|(id, _)| id.clone()).collect(),
            config: SessionConfig {
                rng_seed: seed,
                ..config.clone()
            },
            manager: Some(ManagerSetup {
                pool: pool.clone(),
                outcomes: outcomes.to_vec(),
            }),
        };
        let mut session = Session::open(setup, 0)?;
        let mut bots: Vec<Bot> = chunk
            .iter()
            .map(|(id, p)| {
                Bot::Manager(ManagerBot::new(
                    id.clone(),
                    p.clone(),
                    pool.clone(),
                    stream(seed, Purpose::Agent, id.as_str()),
                ))
            })
            .collect();
        drive(&mut session, &mut bots, 0)?;
        out.reports.extend(session.reports());
        out.managers.extend(session.manager_profiles());
        out.payoffs.extend(session.payoffs());
        out.logs.push(session.events().to_vec());
        for bot in bots {
            if let Bot::Manager(b) = bot {
                out.latents.extend(b.latents);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{draw_manager_policies, OwnTraits};
    use crate::pool::{build_worker_pool, PoolOptions, RawWorkerResult};
    use crate::session::replay;
    use crate::validate::validate_reports;

    fn worker_run(seed: u64) -> WorkerSessionOutput {
        simulate_worker_session(
            SessionId::from("workers"),
            &lab_worker_policies(),
            SessionConfig::with_seed(seed),
        )
        .unwrap()
    }

    fn pool_from(run: &WorkerSessionOutput) -> WorkerPool {
        let raw: Vec<RawWorkerResult> = run
            .results
            .iter()
            .map(|r| RawWorkerResult::new(r.subject_id.as_str(), r.sent, r.score))
            .collect();
        build_worker_pool(&raw, &PoolOptions::lab_reference()).unwrap()
    }

    #[test]
    fn worker_session_realizes_signals() {
        let run = worker_run(9);
        assert_eq!(run.results.len(), 20);
        for (r, (_, p)) in run.results.iter().zip(lab_worker_policies()) {
            assert_eq!((r.sent, r.score), (p.sent, p.score));
            assert_eq!(r.outcomes.len(), 2);
            let c = r.outcomes.iter().find(|o| o.job_id == JobId::C).unwrap();
            assert_eq!(c.attempted, p.attempts(JobId::C));
        }
        assert_eq!(run.payoffs.len(), 20);
        replay(&run.log).unwrap();
    }

    #[test]
    fn one_manager_gives_forty_reports() {
        let run = worker_run(1);
        let pool = pool_from(&run);
        let policies = alloc::vec![(SubjectId::from("M01"), ManagerPolicy::default())];
        let study = simulate_study(&pool, &run.stored_outcomes(), &policies, &SessionConfig::with_seed(2), 20).unwrap();
        assert_eq!(study.reports.len(), 40);
        assert_eq!(study.latents.len(), 40);
        validate_reports(&study.reports, &pool).unwrap();
        for r in &study.reports {
            let l = study
                .latents
                .iter()
                .find(|l| l.job == r.job_id && l.worker_id == r.worker_id)
                .unwrap();
            assert_eq!(l.value, r.value);
        }
        // ranks follow values
        for job in JobId::ALL {
            let mut rows: Vec<_> = study.reports.iter().filter(|r| r.job_id == job).collect();
            rows.sort_by_key(|r| r.rank);
            assert!(rows.windows(2).all(|w| w[0].value >= w[1].value));
        }
    }

    #[test]
    fn study_sessions_replay() {
        let run = worker_run(3);
        let pool = pool_from(&run);
        let mut rng = stream(5, Purpose::Agent, "cohort");
        let mut policies: Vec<(SubjectId, ManagerPolicy)> =
            draw_manager_policies(25, &ManagerPolicy::default(), 10.0, 4.0, &mut rng)
                .into_iter()
                .enumerate()
                .map(|(i, p)| (SubjectId(format!("M{:03}", i + 1)), p))
                .collect();
        policies.push((SubjectId::from("M999"), ManagerPolicy::constant(40, OwnTraits::default())));
        let study = simulate_study(&pool, &run.stored_outcomes(), &policies, &SessionConfig::with_seed(5), 20).unwrap();
        assert_eq!(study.logs.len(), 2);
        assert_eq!(study.reports.len(), 26 * 40);
        assert_eq!(study.managers.len(), 26);
        for log in &study.logs {
            replay(log).unwrap();
        }
    }
}
