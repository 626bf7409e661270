use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::engine::{Part1Result, Session, Subject, SubjectPayoff};
use super::{Phase, TaskRef};
use crate::model::{JobId, SessionId, SubjectId, WorkerId};
use crate::payoff::JobOutcome;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Part1View {
    pub sent: Option<u8>,
    pub proceeded: bool,
    pub result: Option<Part1Result>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task: TaskRef,
    pub problems: Vec<(u8, u8)>,
    pub answers: Vec<Option<i64>>,
    pub deadline_ms: u64,
    pub closed: bool,
    /// Only shown once the task is closed.
    pub correct: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub worker_id: WorkerId,
    pub sent: u8,
    pub score: u8,
    pub value: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableView {
    pub job: JobId,
    /// Revealed workers, top row first.
    pub rows: Vec<TableRow>,
    pub remaining: usize,
    pub order_locked: bool,
}

/// Everything one subject's screen may show. Built only from that
/// subject's own state plus the public pool signals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectView {
    pub session_id: SessionId,
    pub subject_id: SubjectId,
    pub phase: Phase,
    pub part1: Part1View,
    pub tasks: Vec<TaskView>,
    pub quiz: Vec<String>,
    pub quiz_wrong: Option<Vec<usize>>,
    pub job_order: Option<[JobId; 2]>,
    pub job_outcomes: Vec<JobOutcome>,
    pub table: Option<TableView>,
    pub submitted_jobs: Vec<JobId>,
    pub payoff: Option<SubjectPayoff>,
}

impl SubjectView {
    pub(super) fn build(session: &Session, s: &Subject) -> SubjectView {
        let tasks = s
            .tasks
            .iter()
            .map(|(task, t)| TaskView {
                task: *task,
                problems: t.problems.iter().map(|p| (p.a, p.b)).collect(),
                answers: t.answers.clone(),
                deadline_ms: t.deadline_ms,
                closed: t.closed,
                correct: t.closed.then(|| t.correct()),
            })
            .collect();
        let table = match s.phase {
            Phase::RankValue(job) => s.tables.get(&job).map(|t| {
                let pool = &session.manager_setup().expect("manager session").pool;
                TableView {
                    job,
                    rows: t
                        .revealed
                        .iter()
                        .map(|w| {
                            let p = pool.get(w).expect("table workers come from the pool");
                            TableRow {
                                worker_id: w.clone(),
                                sent: p.sent,
                                score: p.score,
                                value: t.values.get(w).copied(),
                            }
                        })
                        .collect(),
                    remaining: t.unrevealed.len(),
                    order_locked: t.order_locked,
                }
            }),
            _ => None,
        };
        SubjectView {
            session_id: session.session_id().clone(),
            subject_id: s.id.clone(),
            phase: s.phase,
            part1: Part1View {
                sent: s.sent,
                proceeded: s.proceeded,
                result: s.part1.clone(),
            },
            tasks,
            quiz: session.quiz().iter().map(|q| q.prompt.clone()).collect(),
            quiz_wrong: s.quiz_wrong.clone(),
            job_order: s.job_order,
            job_outcomes: s.outcomes.values().copied().collect(),
            table,
            submitted_jobs: s.reports.keys().copied().collect(),
            payoff: s.payoff,
        }
    }
}
