use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::event::{EventPayload, Pairing, SessionEvent};
use super::quiz::{job_quiz, QuizQuestion};
use super::table::{RankingTable, TableError};
use super::task::{Problem, TimedTask};
use super::view::SubjectView;
use super::{Action, ManagerSetup, Phase, SessionError, SessionRole, SessionSetup, TaskRef};
use crate::model::{
    JobId, ManagerProfile, Questionnaire, SessionId, SubjectId, ValuationReport, WorkerId, ENDOWMENT_TOKENS,
    PROBLEMS_PER_TASK,
};
use crate::payoff::{
    bdm_resolve, dictator_payoffs, job_payoffs, math_task_points, select_finalists, to_cad, worker_session_total,
    BdmDraw, Cents, JobOutcome,
};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part1Role {
    Dictator,
    Receiver,
    /// Left unpaired because of an odd head count; earns nothing in Part 1.
    Held,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Part1Result {
    pub role: Part1Role,
    pub partner: Option<SubjectId>,
    /// Tokens the pair's Dictator sent; `None` when held.
    pub allocation: Option<u8>,
    pub points: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectPayoff {
    pub part1: u32,
    pub part2: u32,
    pub part3: u32,
    pub total: u32,
    pub cents: Cents,
}

/// What a worker session leaves behind for manager sessions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerSessionResult {
    pub subject_id: SubjectId,
    pub sent: u8,
    pub score: u8,
    pub outcomes: Vec<JobOutcome>,
}

struct Streams {
    problems: ChaCha8Rng,
    presentation: ChaCha8Rng,
    finalists: ChaCha8Rng,
    alpha: ChaCha8Rng,
    selection: ChaCha8Rng,
}

impl Streams {
    /// Keyed by roster position, so two sessions sharing a seed draw the
    /// same sequences whatever the subjects are called.
    fn new(seed: u64, position: usize) -> Self {
        let s = &format!("subject-{position}");
        Self {
            problems: stream(seed, Purpose::Problems, s),
            presentation: stream(seed, Purpose::Presentation, s),
            finalists: stream(seed, Purpose::Finalists, s),
            alpha: stream(seed, Purpose::Alpha, s),
            selection: stream(seed, Purpose::JobSelection, s),
        }
    }
}

pub(super) struct Subject {
    pub id: SubjectId,
    pub phase: Phase,
    pub sent: Option<u8>,
    pub part1: Option<Part1Result>,
    pub proceeded: bool,
    pub tasks: BTreeMap<TaskRef, TimedTask>,
    pub score: Option<u8>,
    pub quiz_wrong: Option<Vec<usize>>,
    pub job_order: Option<[JobId; 2]>,
    pub attempts: BTreeMap<JobId, u8>,
    pub outcomes: BTreeMap<JobId, JobOutcome>,
    pub tables: BTreeMap<JobId, RankingTable>,
    pub reports: BTreeMap<JobId, Vec<ValuationReport>>,
    pub questionnaire: Option<Questionnaire>,
    pub payoff: Option<SubjectPayoff>,
    streams: Streams,
}

impl Subject {
    fn new(id: SubjectId, seed: u64, position: usize) -> Self {
        let streams = Streams::new(seed, position);
        Self {
            id,
            phase: Phase::Part1Decide,
            sent: None,
            part1: None,
            proceeded: false,
            tasks: BTreeMap::new(),
            score: None,
            quiz_wrong: None,
            job_order: None,
            attempts: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            tables: BTreeMap::new(),
            reports: BTreeMap::new(),
            questionnaire: None,
            payoff: None,
            streams,
        }
    }
}

struct Log {
    session_id: SessionId,
    events: Vec<SessionEvent>,
}

impl Log {
    fn emit(&mut self, ts: u64, subject: Option<&SubjectId>, payload: EventPayload) {
        let seq = self.events.len() as u64;
        self.events.push(SessionEvent {
            seq,
            ts,
            session_id: self.session_id.clone(),
            subject_id: subject.cloned(),
            kind: payload.kind(),
            payload,
        });
    }
}

/// One worker or manager session.
pub struct Session {
    setup: SessionSetup,
    subjects: Vec<Subject>,
    index: BTreeMap<SubjectId, usize>,
    log: Log,
    pairing: ChaCha8Rng,
    paired: bool,
    part2_started: bool,
    quiz: Vec<QuizQuestion>,
}

fn table_error(e: TableError, action: &Action, phase: Phase) -> SessionError {
    match e {
        TableError::OrderLocked | TableError::RankingIncomplete => SessionError::PhaseViolation {
            action: action.name(),
            phase,
        },
        TableError::MissingValues(missing) => SessionError::MissingValues {
            job: match phase {
                Phase::RankValue(j) => j,
                _ => JobId::C,
            },
            missing,
        },
        other => SessionError::Invalid(other.to_string()),
    }
}

fn validate_setup(setup: &SessionSetup) -> Result<(), SessionError> {
    let bad = |m: String| Err(SessionError::Setup(m));
    if setup.roster.is_empty() {
        return bad("empty roster".into());
    }
    let unique: BTreeSet<_> = setup.roster.iter().collect();
    if unique.len() != setup.roster.len() {
        return bad("duplicate subject ids in roster".into());
    }
    setup.config.validate().map_err(|e| SessionError::Setup(e.to_string()))?;
    match (setup.role, &setup.manager) {
        (SessionRole::WorkerSession, None) => Ok(()),
        (SessionRole::WorkerSession, Some(_)) => bad("worker sessions take no pool".into()),
        (SessionRole::ManagerSession, None) => bad("manager sessions need a worker pool".into()),
        (SessionRole::ManagerSession, Some(m)) => {
            if m.pool.len() != setup.config.n_workers {
                return bad(format!(
                    "pool has {} workers, config expects {}",
                    m.pool.len(),
                    setup.config.n_workers
                ));
            }
            if m.pool.humans().count() < 2 {
                return bad("at least two human workers are needed for finalist draws".into());
            }
            for w in m.pool.humans() {
                for job in JobId::ALL {
                    if m.manager_points(&w.worker_id, job).is_none() {
                        return bad(format!("no stored {job} outcome for human worker {}", w.worker_id));
                    }
                }
            }
            Ok(())
        }
    }
}

impl Session {
    pub fn open(setup: SessionSetup, now: u64) -> Result<Session, SessionError> {
        validate_setup(&setup)?;
        let seed = setup.config.rng_seed;
        let subjects: Vec<Subject> = setup
            .roster
            .iter()
            .enumerate()
            .map(|(i, id)| Subject::new(id.clone(), seed, i))
            .collect();
        let index = setup.roster.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let quiz = job_quiz(&setup.config.job_specs);
        let mut session = Session {
            pairing: stream(seed, Purpose::Pairing, ""),
            log: Log {
                session_id: setup.session_id.clone(),
                events: Vec::new(),
            },
            setup,
            subjects,
            index,
            paired: false,
            part2_started: false,
            quiz,
        };
        session.log.emit(
            now,
            None,
            EventPayload::SessionOpened {
                setup: session.setup.clone(),
            },
        );
        for s in &session.subjects {
            session.log.emit(now, Some(&s.id), EventPayload::PhaseEntered { phase: Phase::Part1Decide });
        }
        Ok(session)
    }

    pub fn setup(&self) -> &SessionSetup {
        &self.setup
    }

    pub fn session_id(&self) -> &SessionId {
        &self.setup.session_id
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.log.events
    }

    pub fn quiz(&self) -> &[QuizQuestion] {
        &self.quiz
    }

    pub fn roster(&self) -> &[SubjectId] {
        &self.setup.roster
    }

    pub fn phase(&self, subject: &SubjectId) -> Option<Phase> {
        self.index.get(subject).map(|&i| self.subjects[i].phase)
    }

    pub fn is_finished(&self) -> bool {
        self.subjects.iter().all(|s| s.phase == Phase::Paid)
    }

    pub fn view(&self, subject: &SubjectId) -> Option<SubjectView> {
        let s = &self.subjects[*self.index.get(subject)?];
        Some(SubjectView::build(self, s))
    }

    pub(super) fn manager_setup(&self) -> Option<&ManagerSetup> {
        self.setup.manager.as_ref()
    }

    pub(super) fn last_ts(&self) -> u64 {
        self.log.events.last().map_or(0, |e| e.ts)
    }

    pub fn payoffs(&self) -> Vec<(SubjectId, SubjectPayoff)> {
        self.subjects
            .iter()
            .filter_map(|s| s.payoff.map(|p| (s.id.clone(), p)))
            .collect()
    }

    /// All submitted reports, by subject in roster order, then job in
    /// submission order.
    pub fn reports(&self) -> Vec<ValuationReport> {
        let mut out = Vec::new();
        for s in &self.subjects {
            if let Some(order) = s.job_order {
                for job in order {
                    if let Some(r) = s.reports.get(&job) {
                        out.extend(r.iter().cloned());
                    }
                }
            }
        }
        out
    }

    /// Profiles of subjects who completed Parts 1 and 2.
    pub fn manager_profiles(&self) -> Vec<ManagerProfile> {
        self.subjects
            .iter()
            .filter_map(|s| {
                Some(ManagerProfile {
                    manager_id: s.id.clone(),
                    own_sent: s.sent?,
                    own_score: s.score?,
                    questionnaire: s.questionnaire.clone(),
                })
            })
            .collect()
    }

    pub fn worker_results(&self) -> Vec<WorkerSessionResult> {
        self.subjects
            .iter()
            .filter_map(|s| {
                Some(WorkerSessionResult {
                    subject_id: s.id.clone(),
                    sent: s.sent?,
                    score: s.score?,
                    outcomes: s.outcomes.values().copied().collect(),
                })
            })
            .collect()
    }

    /// Logs a message that was refused before reaching the state machine.
    pub fn note_rejection(&mut self, subject: Option<&SubjectId>, reason: &str, now: u64) -> SessionEvent {
        let now = now.max(self.last_ts());
        self.log.emit(now, subject, EventPayload::Rejected { reason: reason.into() });
        self.log.events.last().cloned().expect("just pushed")
    }

    /// Applies one subject action. On error nothing is logged and no state
    /// changes; on success the newly appended events are returned.
    pub fn apply(&mut self, subject: &SubjectId, action: Action, now: u64) -> Result<Vec<SessionEvent>, SessionError> {
        let idx = *self
            .index
            .get(subject)
            .ok_or_else(|| SessionError::UnknownSubject(subject.clone()))?;
        if now < self.last_ts() {
            return Err(SessionError::Invalid(format!(
                "timestamp {now} precedes last event at {}",
                self.last_ts()
            )));
        }
        let start = self.log.events.len();
        let result = self.dispatch(idx, action, now);
        match result {
            Ok(()) => Ok(self.log.events[start..].to_vec()),
            Err(e) => {
                debug_assert_eq!(self.log.events.len(), start, "failed action must not log");
                Err(e)
            }
        }
    }

    /// Closes every timed task whose deadline has passed.
    pub fn tick(&mut self, now: u64) -> Vec<SessionEvent> {
        let now = now.max(self.last_ts());
        let start = self.log.events.len();
        for idx in 0..self.subjects.len() {
            let due: Vec<(TaskRef, u64)> = self.subjects[idx]
                .tasks
                .iter()
                .filter(|(_, t)| !t.closed && now >= t.deadline_ms)
                .map(|(r, t)| (*r, t.deadline_ms))
                .collect();
            for (task, deadline_ms) in due {
                let id = self.subjects[idx].id.clone();
                self.log.emit(now, Some(&id), EventPayload::Deadline { task, deadline_ms });
                self.close_task(idx, task, now);
            }
        }
        self.log.events[start..].to_vec()
    }

    /// Earliest pending deadline, if any task is running.
    pub fn next_deadline(&self) -> Option<u64> {
        self.subjects
            .iter()
            .flat_map(|s| s.tasks.values())
            .filter(|t| !t.closed)
            .map(|t| t.deadline_ms)
            .min()
    }

    fn enter(&mut self, idx: usize, phase: Phase, now: u64) {
        self.subjects[idx].phase = phase;
        let id = self.subjects[idx].id.clone();
        self.log.emit(now, Some(&id), EventPayload::PhaseEntered { phase });
    }

    fn record(&mut self, idx: usize, action: Action, late: bool, now: u64) {
        let id = self.subjects[idx].id.clone();
        self.log.emit(now, Some(&id), EventPayload::Action { action, late });
    }

    fn violation(&self, idx: usize, action: &Action) -> SessionError {
        SessionError::PhaseViolation {
            action: action.name(),
            phase: self.subjects[idx].phase,
        }
    }

    fn dispatch(&mut self, idx: usize, action: Action, now: u64) -> Result<(), SessionError> {
        let phase = self.subjects[idx].phase;
        match &action {
            Action::Send { tokens } => {
                let tokens = *tokens;
                if phase != Phase::Part1Decide {
                    return Err(self.violation(idx, &action));
                }
                if self.subjects[idx].sent.is_some() {
                    return Err(SessionError::Invalid("Part 1 decision already submitted".into()));
                }
                if tokens > ENDOWMENT_TOKENS {
                    return Err(SessionError::Invalid(format!("cannot send {tokens} of {ENDOWMENT_TOKENS} tokens")));
                }
                self.subjects[idx].sent = Some(tokens);
                self.record(idx, action, false, now);
                if !self.paired && self.subjects.iter().all(|s| s.sent.is_some()) {
                    self.pair_and_assign_roles(now);
                }
            }
            Action::Proceed => {
                if phase != Phase::Part1Reveal {
                    return Err(self.violation(idx, &action));
                }
                if self.subjects[idx].proceeded {
                    return Err(SessionError::Invalid("already proceeded".into()));
                }
                self.subjects[idx].proceeded = true;
                self.record(idx, action, false, now);
                if !self.part2_started && self.subjects.iter().all(|s| s.proceeded) {
                    self.start_math_task(now);
                }
            }
            Action::Answer { task, index, value } => {
                let (task, index, value) = (*task, usize::from(*index), *value);
                let t = match self.subjects[idx].tasks.get(&task) {
                    Some(t) => t,
                    None => return Err(self.violation(idx, &action)),
                };
                if index >= t.problems.len() {
                    return Err(SessionError::Invalid(format!("no problem {index}")));
                }
                if t.is_late(now) {
                    self.subjects[idx].tasks.get_mut(&task).expect("checked").late += 1;
                    self.record(idx, action, true, now);
                    return Ok(());
                }
                if t.answers[index].is_some() {
                    return Err(SessionError::Invalid(format!("problem {index} already answered")));
                }
                let t = self.subjects[idx].tasks.get_mut(&task).expect("checked");
                t.answers[index] = Some(value);
                let done = t.all_answered();
                self.record(idx, action, false, now);
                if done {
                    self.close_task(idx, task, now);
                }
            }
            Action::SubmitQuiz { answers } => {
                if phase != Phase::QuizJobs {
                    return Err(self.violation(idx, &action));
                }
                if answers.len() != self.quiz.len() {
                    return Err(SessionError::Invalid(format!(
                        "quiz has {} questions, got {} answers",
                        self.quiz.len(),
                        answers.len()
                    )));
                }
                let wrong: Vec<usize> = self
                    .quiz
                    .iter()
                    .zip(answers)
                    .enumerate()
                    .filter(|(_, (q, a))| q.answer != **a)
                    .map(|(i, _)| i)
                    .collect();
                self.record(idx, action, false, now);
                let id = self.subjects[idx].id.clone();
                self.log.emit(now, Some(&id), EventPayload::QuizChecked { wrong: wrong.clone() });
                let passed = wrong.is_empty();
                self.subjects[idx].quiz_wrong = Some(wrong);
                if passed {
                    self.start_part3(idx, now);
                }
            }
            Action::ChooseAttempts { job, attempted } => {
                let (job, attempted) = (*job, *attempted);
                if phase != Phase::Job(job) || self.subjects[idx].attempts.contains_key(&job) {
                    return Err(self.violation(idx, &action));
                }
                let spec = *self.setup.config.job_specs.get(job);
                if attempted > spec.num_problems {
                    return Err(SessionError::Invalid(format!(
                        "cannot attempt {attempted} of {} problems",
                        spec.num_problems
                    )));
                }
                self.subjects[idx].attempts.insert(job, attempted);
                self.record(idx, action, false, now);
                if attempted == 0 {
                    self.finish_job(idx, job, 0, now);
                } else {
                    let deadline_ms = now + spec.time_budget_ms(attempted);
                    let s = &mut self.subjects[idx];
                    let problems = Problem::generate(&mut s.streams.problems, usize::from(attempted));
                    s.tasks
                        .insert(TaskRef::Job(job), TimedTask::new(problems.clone(), now, deadline_ms));
                    let id = s.id.clone();
                    self.log.emit(
                        now,
                        Some(&id),
                        EventPayload::Problems {
                            task: TaskRef::Job(job),
                            problems: problems.iter().map(|p| (p.a, p.b)).collect(),
                            deadline_ms,
                        },
                    );
                }
            }
            Action::AddWorker { job } => {
                let table = self.table(idx, *job, &action)?;
                table.check_add().map_err(|e| table_error(e, &action, phase))?;
                self.subjects[idx].tables.get_mut(job).expect("checked").add_worker().expect("checked");
                self.record(idx, action, false, now);
            }
            Action::MoveWorker { job, worker, position } => {
                let table = self.table(idx, *job, &action)?;
                table
                    .check_move(worker, usize::from(*position))
                    .map_err(|e| table_error(e, &action, phase))?;
                let (worker, position) = (worker.clone(), usize::from(*position));
                self.subjects[idx]
                    .tables
                    .get_mut(job)
                    .expect("checked")
                    .move_worker(&worker, position)
                    .expect("checked");
                self.record(idx, action, false, now);
            }
            Action::EnterValue { job, worker, value } => {
                let table = self.table(idx, *job, &action)?;
                table.check_value(worker, *value).map_err(|e| table_error(e, &action, phase))?;
                let (worker, value) = (worker.clone(), *value);
                self.subjects[idx]
                    .tables
                    .get_mut(job)
                    .expect("checked")
                    .enter_value(&worker, value)
                    .expect("checked");
                self.record(idx, action, false, now);
            }
            Action::SubmitJob { job } => {
                let job = *job;
                let table = self.table(idx, job, &action)?;
                let rows = table.submit().map_err(|e| table_error(e, &action, phase))?;
                let manager_id = self.subjects[idx].id.clone();
                let reports: Vec<ValuationReport> = rows
                    .into_iter()
                    .map(|(worker_id, rank, value)| ValuationReport {
                        manager_id: manager_id.clone(),
                        job_id: job,
                        worker_id,
                        rank,
                        value,
                    })
                    .collect();
                self.record(idx, action, false, now);
                self.log.emit(
                    now,
                    Some(&manager_id),
                    EventPayload::ReportsSubmitted {
                        job,
                        reports: reports.clone(),
                    },
                );
                self.subjects[idx].reports.insert(job, reports);
                self.advance_part3(idx, now);
            }
            Action::SubmitQuestionnaire { questionnaire } => {
                if phase != Phase::Questionnaire {
                    return Err(self.violation(idx, &action));
                }
                if questionnaire.risk > 10 {
                    return Err(SessionError::Invalid("risk must be on the 0..=10 scale".into()));
                }
                self.subjects[idx].questionnaire = Some(questionnaire.clone());
                self.record(idx, action, false, now);
                match self.setup.role {
                    SessionRole::WorkerSession => self.pay_worker(idx, now),
                    SessionRole::ManagerSession => self.resolve_manager_payoff(idx, now),
                }
            }
        }
        Ok(())
    }

    fn table(&self, idx: usize, job: JobId, action: &Action) -> Result<&RankingTable, SessionError> {
        if self.subjects[idx].phase != Phase::RankValue(job) {
            return Err(self.violation(idx, action));
        }
        Ok(self.subjects[idx].tables.get(&job).expect("table opened with phase"))
    }

    /// Random pairs with one random Dictator each; the Dictator's own
    /// decision is realized. With an odd count the last subject in the
    /// shuffled order is held out.
    fn pair_and_assign_roles(&mut self, now: u64) {
        self.paired = true;
        let mut order: Vec<usize> = (0..self.subjects.len()).collect();
        order.shuffle(&mut self.pairing);
        let mut pairs = Vec::new();
        let mut results: BTreeMap<usize, Part1Result> = BTreeMap::new();
        for chunk in order.chunks_exact(2) {
            let (d, r) = if self.pairing.random_bool(0.5) {
                (chunk[0], chunk[1])
            } else {
                (chunk[1], chunk[0])
            };
            let sent = self.subjects[d].sent.expect("all decided");
            let (dp, rp) = dictator_payoffs(sent).expect("validated on entry");
            results.insert(
                d,
                Part1Result {
                    role: Part1Role::Dictator,
                    partner: Some(self.subjects[r].id.clone()),
                    allocation: Some(sent),
                    points: dp,
                },
            );
            results.insert(
                r,
                Part1Result {
                    role: Part1Role::Receiver,
                    partner: Some(self.subjects[d].id.clone()),
                    allocation: Some(sent),
                    points: rp,
                },
            );
            pairs.push(Pairing {
                dictator: self.subjects[d].id.clone(),
                receiver: self.subjects[r].id.clone(),
            });
        }
        let held = if order.len() % 2 == 1 {
            let h = *order.last().expect("odd count is non-empty");
            results.insert(
                h,
                Part1Result {
                    role: Part1Role::Held,
                    partner: None,
                    allocation: None,
                    points: 0,
                },
            );
            Some(self.subjects[h].id.clone())
        } else {
            None
        };
        self.log.emit(now, None, EventPayload::Pairs { pairs, held: held.clone() });
        if let Some(h) = &held {
            self.log.emit(now, Some(h), EventPayload::SubjectHeld);
        }
        for (idx, result) in results {
            let id = self.subjects[idx].id.clone();
            self.subjects[idx].part1 = Some(result.clone());
            self.log.emit(now, Some(&id), EventPayload::Part1Settled { result });
            self.enter(idx, Phase::Part1Reveal, now);
        }
    }

    fn start_math_task(&mut self, now: u64) {
        self.part2_started = true;
        let deadline_ms = now + u64::from(self.setup.config.timers.math_task_seconds) * 1000;
        for idx in 0..self.subjects.len() {
            let s = &mut self.subjects[idx];
            let problems = Problem::generate(&mut s.streams.problems, usize::from(PROBLEMS_PER_TASK));
            s.tasks
                .insert(TaskRef::Math, TimedTask::new(problems.clone(), now, deadline_ms));
            let id = s.id.clone();
            self.log.emit(
                now,
                Some(&id),
                EventPayload::Problems {
                    task: TaskRef::Math,
                    problems: problems.iter().map(|p| (p.a, p.b)).collect(),
                    deadline_ms,
                },
            );
            self.enter(idx, Phase::Part2Math, now);
        }
    }

    fn close_task(&mut self, idx: usize, task: TaskRef, now: u64) {
        let t = self.subjects[idx].tasks.get_mut(&task).expect("task exists");
        t.closed = true;
        let correct = t.correct();
        let late = t.late;
        let id = self.subjects[idx].id.clone();
        self.log.emit(now, Some(&id), EventPayload::TaskClosed { task, correct, late });
        match task {
            TaskRef::Math => {
                self.subjects[idx].score = Some(correct);
                self.enter(idx, Phase::QuizJobs, now);
            }
            TaskRef::Job(job) => self.finish_job(idx, job, correct, now),
        }
    }

    fn finish_job(&mut self, idx: usize, job: JobId, correct: u8, now: u64) {
        let spec = self.setup.config.job_specs.get(job);
        let attempted = self.subjects[idx].attempts[&job];
        let outcome = job_payoffs(spec, attempted, correct).expect("correct never exceeds attempted");
        self.subjects[idx].outcomes.insert(job, outcome);
        let id = self.subjects[idx].id.clone();
        self.log.emit(now, Some(&id), EventPayload::JobCompleted { outcome });
        self.advance_part3(idx, now);
    }

    fn start_part3(&mut self, idx: usize, now: u64) {
        let s = &mut self.subjects[idx];
        let order = if s.streams.presentation.random_bool(0.5) {
            [JobId::C, JobId::NC]
        } else {
            [JobId::NC, JobId::C]
        };
        s.job_order = Some(order);
        let id = s.id.clone();
        self.log.emit(now, Some(&id), EventPayload::JobOrder { order });
        self.enter_job(idx, order[0], now);
    }

    fn enter_job(&mut self, idx: usize, job: JobId, now: u64) {
        match self.setup.role {
            SessionRole::WorkerSession => self.enter(idx, Phase::Job(job), now),
            SessionRole::ManagerSession => {
                let mut order: Vec<WorkerId> = self
                    .setup
                    .manager
                    .as_ref()
                    .expect("validated")
                    .pool
                    .ids()
                    .cloned()
                    .collect();
                let s = &mut self.subjects[idx];
                order.shuffle(&mut s.streams.presentation);
                s.tables.insert(job, RankingTable::new(job, order.clone()));
                let id = s.id.clone();
                self.log.emit(now, Some(&id), EventPayload::WorkerOrder { job, order });
                self.enter(idx, Phase::RankValue(job), now);
            }
        }
    }

    fn advance_part3(&mut self, idx: usize, now: u64) {
        let s = &self.subjects[idx];
        let order = s.job_order.expect("part 3 started");
        let done = |j: &JobId| s.outcomes.contains_key(j) || s.reports.contains_key(j);
        match order.iter().find(|j| !done(j)) {
            Some(&next) => self.enter_job(idx, next, now),
            None => self.enter(idx, Phase::Questionnaire, now),
        }
    }

    fn cents(&self, points: u32) -> Cents {
        to_cad(i64::from(points), self.setup.config.conversion_rate).expect("points are non-negative")
    }

    fn pay(&mut self, idx: usize, part3: u32, now: u64) {
        let s = &self.subjects[idx];
        let part1 = s.part1.as_ref().map_or(0, |p| p.points);
        let part2 = math_task_points(s.score.expect("part 2 done")).expect("score in range");
        let total = part1 + part2 + part3;
        let payoff = SubjectPayoff {
            part1,
            part2,
            part3,
            total,
            cents: self.cents(total),
        };
        self.subjects[idx].payoff = Some(payoff);
        let id = self.subjects[idx].id.clone();
        self.log.emit(now, Some(&id), EventPayload::PaymentDetermined { payoff });
        self.enter(idx, Phase::Paid, now);
    }

    /// One job is drawn for the worker's pay; manager reports play no part.
    fn pay_worker(&mut self, idx: usize, now: u64) {
        let s = &mut self.subjects[idx];
        let job = if s.streams.selection.random_bool(0.5) {
            JobId::C
        } else {
            JobId::NC
        };
        let id = s.id.clone();
        let part1 = s.part1.as_ref().map_or(0, |p| p.points);
        let part2 = math_task_points(s.score.expect("part 2 done")).expect("score in range");
        let total = worker_session_total(part1, part2, &s.outcomes, job).expect("both jobs completed");
        self.log.emit(now, Some(&id), EventPayload::JobSelected { job });
        self.pay(idx, total - part1 - part2, now);
    }

    /// Draws a job and two distinct human finalists, takes the preferred one
    /// and settles it against a BDM draw.
    fn resolve_manager_payoff(&mut self, idx: usize, now: u64) {
        self.enter(idx, Phase::BdmResolution, now);
        let setup = self.setup.manager.as_ref().expect("manager session");
        let humans: Vec<WorkerId> = setup.pool.humans().map(|w| w.worker_id.clone()).collect();
        let s = &mut self.subjects[idx];
        let id = s.id.clone();
        let rng = &mut s.streams.finalists;
        let job = if rng.random_bool(0.5) { JobId::C } else { JobId::NC };
        let i = rng.random_range(0..humans.len());
        let mut j = rng.random_range(0..humans.len() - 1);
        if j >= i {
            j += 1;
        }
        let finalists = (humans[i].clone(), humans[j].clone());
        let values: BTreeMap<WorkerId, u32> = s.reports[&job]
            .iter()
            .map(|r| (r.worker_id.clone(), r.value))
            .collect();
        let mut draw = BdmDraw {
            alpha: 0,
            job_id: job,
            finalist_ids: finalists.clone(),
        };
        let choice = select_finalists(&values, &draw, &setup.pool, rng).expect("finalists are human and valued");
        draw.alpha = s.streams.alpha.random_range(0..=100);
        let reported = values[&choice.preferred];
        let realized = setup
            .manager_points(&choice.preferred, job)
            .expect("validated at open");
        let points = bdm_resolve(reported, &draw, realized).expect("values in range");
        self.log.emit(now, Some(&id), EventPayload::Finalists { job, finalists });
        if choice.tie_broken {
            self.log.emit(
                now,
                Some(&id),
                EventPayload::FinalistTie {
                    preferred: choice.preferred.clone(),
                },
            );
        }
        self.log.emit(now, Some(&id), EventPayload::Alpha { alpha: draw.alpha });
        self.log.emit(
            now,
            Some(&id),
            EventPayload::BdmResolved {
                job,
                preferred: choice.preferred,
                reported,
                alpha: draw.alpha,
                realized,
                points,
            },
        );
        self.pay(idx, points, now);
    }
}
