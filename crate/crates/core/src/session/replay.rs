use super::event::{EventPayload, SessionEvent};
use super::{Session, SessionError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("log is empty")]
    Empty,
    #[error("first event is not a session opening")]
    NotOpened,
    #[error("setup rejected: {0}")]
    Setup(SessionError),
    #[error("input at seq {seq} failed on replay: {error}")]
    InputFailed { seq: u64, error: SessionError },
    #[error("regenerated log diverges at seq {seq}")]
    Divergence { seq: u64 },
    #[error("regenerated log has {got} events, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Re-feeds the logged inputs to a fresh session. Ticks are replayed at the
/// timestamp of the deadline event they produced.
fn feed(events: &[SessionEvent]) -> Result<Session, ReplayError> {
    let first = events.first().ok_or(ReplayError::Empty)?;
    let setup = match &first.payload {
        EventPayload::SessionOpened { setup } => setup.clone(),
        _ => return Err(ReplayError::NotOpened),
    };
    let mut session = Session::open(setup, first.ts).map_err(ReplayError::Setup)?;
    for e in &events[1..] {
        if session.events().len() > e.seq as usize {
            // already regenerated as an effect of an earlier input
            continue;
        }
        match &e.payload {
            EventPayload::Action { action, .. } => {
                let subject = e.subject_id.as_ref().ok_or(ReplayError::Divergence { seq: e.seq })?;
                session
                    .apply(subject, action.clone(), e.ts)
                    .map_err(|error| ReplayError::InputFailed { seq: e.seq, error })?;
            }
            EventPayload::Deadline { .. } => {
                session.tick(e.ts);
            }
            EventPayload::Rejected { reason } => {
                session.note_rejection(e.subject_id.as_ref(), reason, e.ts);
            }
            _ => return Err(ReplayError::Divergence { seq: e.seq }),
        }
        let upto = session.events().len().min(events.len());
        if let Some(i) = (e.seq as usize..upto).find(|&i| session.events()[i] != events[i]) {
            return Err(ReplayError::Divergence { seq: i as u64 });
        }
    }
    Ok(session)
}

/// Rebuilds a session from a complete log and checks the regenerated log is
/// identical.
pub fn replay(events: &[SessionEvent]) -> Result<Session, ReplayError> {
    let session = feed(events)?;
    if session.events().len() != events.len() {
        return Err(ReplayError::LengthMismatch {
            expected: events.len(),
            got: session.events().len(),
        });
    }
    Ok(session)
}

/// Rebuilds a session from a log cut short, e.g. by a crash. Effects of the
/// last logged input that were never written are regenerated, so the result
/// may extend `prefix`.
pub fn recover(prefix: &[SessionEvent]) -> Result<Session, ReplayError> {
    feed(prefix)
}
