//! Authoritative session state machines for worker and manager sessions.
//!
//! A [`Session`] consumes subject [`Action`]s and clock ticks, each stamped
//! with a caller-supplied millisecond timestamp, and appends every decision,
//! random draw, deadline and phase change to an append-only
//! [`SessionEvent`] log. Re-feeding the logged inputs to a fresh session with
//! the same setup regenerates the log exactly; see [`replay`].

mod engine;
mod event;
mod quiz;
mod replay;
mod table;
mod task;
mod view;

pub use engine::{Part1Result, Part1Role, Session, SubjectPayoff, WorkerSessionResult};
pub use event::{EventKind, EventPayload, SessionEvent};
pub use quiz::{job_quiz, QuizQuestion};
pub use replay::{recover, replay, ReplayError};
pub use table::{RankingTable, TableError};
pub use task::{Problem, TimedTask};
pub use view::{Part1View, SubjectView, TableRow, TableView, TaskView};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{JobId, Questionnaire, SessionConfig, SessionId, SubjectId, WorkerId};
use crate::payoff::JobOutcome;
use crate::pool::WorkerPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionRole {
    WorkerSession,
    ManagerSession,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Part1Decide,
    Part1Reveal,
    Part2Math,
    QuizJobs,
    Job(JobId),
    RankValue(JobId),
    Questionnaire,
    BdmResolution,
    Paid,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Job(j) => write!(f, "Job({j})"),
            Phase::RankValue(j) => write!(f, "RankValue({j})"),
            other => fmt::Debug::fmt(other, f),
        }
    }
}

/// Which timed task an answer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskRef {
    Math,
    Job(JobId),
}

/// A subject's input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    /// Part 1: tokens to send if chosen as Dictator.
    Send { tokens: u8 },
    /// Leave the Part 1 results screen.
    Proceed,
    Answer { task: TaskRef, index: u8, value: i64 },
    SubmitQuiz { answers: Vec<i64> },
    ChooseAttempts { job: JobId, attempted: u8 },
    AddWorker { job: JobId },
    /// Drag a revealed worker to `position` (0 is rank 1).
    MoveWorker { job: JobId, worker: WorkerId, position: u8 },
    EnterValue { job: JobId, worker: WorkerId, value: i64 },
    SubmitJob { job: JobId },
    SubmitQuestionnaire { questionnaire: Questionnaire },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Send { .. } => "send",
            Action::Proceed => "proceed",
            Action::Answer { .. } => "answer",
            Action::SubmitQuiz { .. } => "submit_quiz",
            Action::ChooseAttempts { .. } => "choose_attempts",
            Action::AddWorker { .. } => "add_worker",
            Action::MoveWorker { .. } => "move_worker",
            Action::EnterValue { .. } => "enter_value",
            Action::SubmitJob { .. } => "submit_job",
            Action::SubmitQuestionnaire { .. } => "submit_questionnaire",
        }
    }
}

/// A worker's stored job result, carried into manager sessions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredOutcome {
    pub worker_id: WorkerId,
    pub outcome: JobOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerSetup {
    pub pool: WorkerPool,
    /// Realized job outcomes of the human workers in `pool`.
    pub outcomes: Vec<StoredOutcome>,
}

impl ManagerSetup {
    pub fn manager_points(&self, worker: &WorkerId, job: JobId) -> Option<u32> {
        self.outcomes
            .iter()
            .find(|o| &o.worker_id == worker && o.outcome.job_id == job)
            .map(|o| o.outcome.manager_points)
    }
}

/// Everything needed to open a session; logged as the first event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSetup {
    pub session_id: SessionId,
    pub role: SessionRole,
    pub roster: Vec<SubjectId>,
    pub config: SessionConfig,
    #[serde(default)]
    pub manager: Option<ManagerSetup>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error("unknown subject {0}")]
    UnknownSubject(SubjectId),
    #[error("phase violation: {action} not allowed in {phase}")]
    PhaseViolation { action: &'static str, phase: Phase },
    #[error("invalid action: {0}")]
    Invalid(String),
    #[error("values missing for {missing:?}")]
    MissingValues { job: JobId, missing: Vec<WorkerId> },
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Setup(_) => "setup",
            SessionError::UnknownSubject(_) => "unknown_subject",
            SessionError::PhaseViolation { .. } => "phase_violation",
            SessionError::Invalid(_) => "invalid_action",
            SessionError::MissingValues { .. } => "missing_values",
        }
    }
}
