use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::engine::{Part1Result, SubjectPayoff};
use super::{Action, Phase, SessionSetup, TaskRef};
use crate::model::{JobId, SessionId, SubjectId, ValuationReport, WorkerId};
use crate::payoff::JobOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Decision,
    Draw,
    TimerExpiry,
    Admin,
}

/// One pairing from the Part 1 draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub dictator: SubjectId,
    pub receiver: SubjectId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    // admin
    SessionOpened { setup: SessionSetup },
    PhaseEntered { phase: Phase },
    Rejected { reason: String },
    SubjectHeld,
    Part1Settled { result: Part1Result },
    TaskClosed { task: TaskRef, correct: u8, late: u32 },
    JobCompleted { outcome: JobOutcome },
    QuizChecked { wrong: Vec<usize> },
    ReportsSubmitted { job: JobId, reports: Vec<ValuationReport> },
    BdmResolved { job: JobId, preferred: WorkerId, reported: u32, alpha: u32, realized: u32, points: u32 },
    PaymentDetermined { payoff: SubjectPayoff },
    // decision
    Action { action: Action, late: bool },
    // draw
    Pairs { pairs: Vec<Pairing>, held: Option<SubjectId> },
    Problems { task: TaskRef, problems: Vec<(u8, u8)>, deadline_ms: u64 },
    JobOrder { order: [JobId; 2] },
    WorkerOrder { job: JobId, order: Vec<WorkerId> },
    JobSelected { job: JobId },
    Finalists { job: JobId, finalists: (WorkerId, WorkerId) },
    FinalistTie { preferred: WorkerId },
    Alpha { alpha: u32 },
    // timer
    Deadline { task: TaskRef, deadline_ms: u64 },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        use EventPayload::*;
        match self {
            Action { .. } => EventKind::Decision,
            Pairs { .. } | Problems { .. } | JobOrder { .. } | WorkerOrder { .. } | JobSelected { .. }
            | Finalists { .. } | FinalistTie { .. } | Alpha { .. } => EventKind::Draw,
            Deadline { .. } => EventKind::TimerExpiry,
            _ => EventKind::Admin,
        }
    }
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    /// Milliseconds on the session clock.
    pub ts: u64,
    pub session_id: SessionId,
    pub subject_id: Option<SubjectId>,
    pub kind: EventKind,
    pub payload: EventPayload,
}
