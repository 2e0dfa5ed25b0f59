use serde::{Deserialize, Serialize};

use super::{Phase, ProtocolConfig, SessionError, Trigger};
use crate::mat::{Attempt, Question};

/// One line of the session event log. `t_ms` is relative to session creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    SessionCreated {
        session_id: String,
        participant_label: String,
        seed: u64,
        protocol: ProtocolConfig,
    },
    ConsentGiven,
    PhaseStart {
        phase: Phase,
    },
    PhaseEnd {
        phase: Phase,
        trigger: Trigger,
    },
    QuestionShown {
        phase: Phase,
        cursor: u32,
        deadline_ms: u64,
        question: Question,
    },
    HurryUpShown {
        question_id: String,
        remaining_ms: u64,
    },
    AnswerSubmitted {
        phase: Phase,
        attempt: Attempt,
    },
    AnswerTimeout {
        phase: Phase,
        attempt: Attempt,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::SessionCreated { .. } => "session_created",
            EventBody::ConsentGiven => "consent_given",
            EventBody::PhaseStart { .. } => "phase_start",
            EventBody::PhaseEnd { .. } => "phase_end",
            EventBody::QuestionShown { .. } => "question_shown",
            EventBody::HurryUpShown { .. } => "hurry_up_shown",
            EventBody::AnswerSubmitted { .. } => "answer_submitted",
            EventBody::AnswerTimeout { .. } => "answer_timeout",
        }
    }
}

/// `[start_ms, end_ms)` span of one phase; `end_ms` is `None` while live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseWindow {
    pub phase: Phase,
    pub start_ms: u64,
    pub end_ms: Option<u64>,
}

impl PhaseWindow {
    pub fn is_open(&self) -> bool {
        self.end_ms.is_none()
    }
}

/// Phase windows rebuilt purely from `phase_start`/`phase_end` events.
///
/// The terminal `done` marker has no extent and yields no window.
pub fn phase_windows(events: &[SessionEvent]) -> Result<Vec<PhaseWindow>, SessionError> {
    let mut windows = Vec::new();
    let mut open: Option<(Phase, u64)> = None;
    let mut last_t = 0;
    for (i, ev) in events.iter().enumerate() {
        if ev.t_ms < last_t {
            return Err(SessionError::LogIntegrity(format!(
                "event {i} at {} ms precedes {last_t} ms",
                ev.t_ms
            )));
        }
        last_t = ev.t_ms;
        match &ev.body {
            EventBody::PhaseStart { phase } => {
                if let Some((live, _)) = open {
                    return Err(SessionError::LogIntegrity(format!(
                        "{phase} started while {live} still open"
                    )));
                }
                open = Some((*phase, ev.t_ms));
            }
            EventBody::PhaseEnd { phase, .. } => match open.take() {
                Some((live, start)) if live == *phase => {
                    if ev.t_ms <= start {
                        return Err(SessionError::LogIntegrity(format!(
                            "{phase} has empty window at {start} ms"
                        )));
                    }
                    windows.push(PhaseWindow {
                        phase: live,
                        start_ms: start,
                        end_ms: Some(ev.t_ms),
                    });
                }
                Some((live, _)) => {
                    return Err(SessionError::LogIntegrity(format!(
                        "{phase} ended while {live} was open"
                    )))
                }
                None => {
                    return Err(SessionError::LogIntegrity(format!(
                        "{phase} ended without a start"
                    )))
                }
            },
            _ => {}
        }
    }
    if let Some((phase, start)) = open {
        if phase != Phase::Done {
            windows.push(PhaseWindow {
                phase,
                start_ms: start,
                end_ms: None,
            });
        }
    }
    Ok(windows)
}
