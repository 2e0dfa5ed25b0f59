//! Protocol phase machine.
//!
//! A [`Session`] walks consent, baseline, instructions, demo, the four timed
//! levels with breaks in between, and rest. Every mutation appends to an
//! event log; [`Session::replay`] rebuilds an identical session from that
//! log alone.
//!
//! Timestamps are milliseconds since session creation. Timer-driven
//! transitions are stamped at their nominal deadline, not at the moment the
//! caller noticed them, so phase lengths in the log are exact.
//!
//! Level questions run on a fixed slot grid: question `k` of a level owns
//! `[start + k*limit, start + (k+1)*limit)`. Demo questions are shown back to
//! back, each with its own limit.

mod event;
mod phase;

pub use event::{phase_windows, EventBody, PhaseWindow, SessionEvent};
pub use phase::{Phase, Trigger, HEADLINE_PHASES, PROTOCOL_ORDER};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::{self, Attempt, LevelConfig, MatError, Question};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("session is done")]
    TerminalState,
    #[error("all questions of {0} have been shown")]
    LevelComplete(Phase),
    #[error("clock moved backwards: {now_ms} ms is before {last_ms} ms")]
    ClockRegression { now_ms: u64, last_ms: u64 },
    #[error(transparent)]
    Answer(#[from] MatError),
    #[error("event log integrity: {0}")]
    LogIntegrity(String),
}

/// Protocol durations fixed per session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub baseline_ms: u64,
    pub rest_ms: u64,
    pub break_cap_ms: u64,
    pub demo_questions: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            baseline_ms: 180_000,
            rest_ms: 180_000,
            break_cap_ms: 120_000,
            demo_questions: 5,
        }
    }
}

/// The question currently on screen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveQuestion {
    pub question: Question,
    pub shown_at_ms: u64,
    pub deadline_ms: u64,
    pub hurry_up_threshold_ms: u64,
    pub hurry_up_shown: bool,
}

impl LiveQuestion {
    pub fn remaining_ms(&self, now_ms: u64) -> u64 {
        self.deadline_ms.saturating_sub(now_ms)
    }

    pub fn hurry_up_at_ms(&self) -> u64 {
        self.deadline_ms - self.hurry_up_threshold_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    session_id: String,
    participant_label: String,
    seed: u64,
    protocol: ProtocolConfig,
    phase: Phase,
    phase_started_at: u64,
    question_cursor: u32,
    score: u32,
    rng: ChaCha8Rng,
    live: Option<LiveQuestion>,
    events: Vec<SessionEvent>,
}

/// Fresh random session id.
pub fn new_session_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

/// Seed for sessions created without one.
pub fn random_seed() -> u64 {
    rand::random()
}

impl Session {
    /// New session in the consent phase with a fresh random id.
    pub fn create(participant_label: &str, seed: u64, now_ms: u64) -> Session {
        Session::create_with(
            &new_session_id(),
            participant_label,
            seed,
            ProtocolConfig::default(),
            now_ms,
        )
    }

    pub fn create_with(
        session_id: &str,
        participant_label: &str,
        seed: u64,
        protocol: ProtocolConfig,
        now_ms: u64,
    ) -> Session {
        let participant_label = if participant_label.trim().is_empty() {
            format!("participant-{}", session_id.chars().take(8).collect::<String>())
        } else {
            participant_label.to_string()
        };
        let mut session = Session {
            session_id: session_id.to_string(),
            participant_label: participant_label.clone(),
            seed,
            protocol,
            phase: Phase::Consent,
            phase_started_at: now_ms,
            question_cursor: 0,
            score: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            live: None,
            events: Vec::new(),
        };
        session.push(
            now_ms,
            EventBody::SessionCreated {
                session_id: session_id.to_string(),
                participant_label,
                seed,
                protocol,
            },
        );
        session.push(now_ms, EventBody::PhaseStart { phase: Phase::Consent });
        session
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn participant_label(&self) -> &str {
        &self.participant_label
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn protocol(&self) -> &ProtocolConfig {
        &self.protocol
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn phase_started_at(&self) -> u64 {
        self.phase_started_at
    }

    pub fn question_cursor(&self) -> u32 {
        self.question_cursor
    }

    pub fn score(&self) -> u32 {
        self.score
    }

    pub fn live_question(&self) -> Option<&LiveQuestion> {
        self.live.as_ref()
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn last_event_ms(&self) -> u64 {
        self.events.last().map_or(0, |e| e.t_ms)
    }

    pub fn phase_windows(&self) -> Result<Vec<PhaseWindow>, SessionError> {
        phase_windows(&self.events)
    }

    /// Nominal length of the current phase, when a timer governs it.
    pub fn phase_duration_ms(&self) -> Option<u64> {
        match self.phase {
            Phase::Baseline => Some(self.protocol.baseline_ms),
            Phase::Rest => Some(self.protocol.rest_ms),
            p if p.is_break() => Some(self.protocol.break_cap_ms),
            p => p.level().map(|l| level_of(l).total_ms()),
        }
    }

    /// Time left on the live question, else on the phase timer.
    pub fn remaining_ms(&self, now_ms: u64) -> Option<u64> {
        if let Some(live) = &self.live {
            return Some(live.remaining_ms(now_ms));
        }
        if let Some(level) = self.phase.level() {
            let cfg = level_of(level);
            let next_slot =
                self.phase_started_at + u64::from(self.question_cursor) * cfg.time_limit_ms();
            return Some(next_slot.saturating_sub(now_ms).min(cfg.total_ms()));
        }
        self.phase_duration_ms()
            .map(|d| (self.phase_started_at + d).saturating_sub(now_ms))
    }

    /// Wall time at which level 4 finished, if it has.
    pub fn level4_completed_ms(&self) -> Option<u64> {
        self.events.iter().find_map(|e| match e.body {
            EventBody::PhaseEnd { phase: Phase::Level4, .. } => Some(e.t_ms),
            _ => None,
        })
    }

    fn push(&mut self, t_ms: u64, body: EventBody) {
        self.events.push(SessionEvent { t_ms, body });
    }

    fn check_clock(&self, now_ms: u64) -> Result<(), SessionError> {
        let last_ms = self.last_event_ms();
        if now_ms < last_ms {
            return Err(SessionError::ClockRegression { now_ms, last_ms });
        }
        Ok(())
    }

    /// End the current phase and enter the next one.
    pub fn advance(&mut self, trigger: Trigger, now_ms: u64) -> Result<(), SessionError> {
        self.check_clock(now_ms)?;
        let phase = self.phase;
        if phase == Phase::Done {
            return Err(SessionError::TerminalState);
        }
        if !phase.accepts(trigger) {
            return Err(SessionError::ProtocolViolation(format!(
                "{phase} cannot end on {trigger:?}"
            )));
        }
        let end_ms = match trigger {
            Trigger::UserAction => {
                if phase == Phase::Demo && self.live.is_some() {
                    return Err(SessionError::ProtocolViolation(
                        "demo question still live".into(),
                    ));
                }
                if let Some(cap) = self.phase_duration_ms() {
                    let expired_at = self.phase_started_at + cap;
                    if now_ms > expired_at {
                        return Err(SessionError::ProtocolViolation(format!(
                            "{phase} timer expired at {expired_at} ms"
                        )));
                    }
                }
                now_ms
            }
            Trigger::TimerExpired => {
                let deadline = self.phase_started_at + self.phase_duration_ms().unwrap_or(0);
                if now_ms < deadline {
                    return Err(SessionError::ProtocolViolation(format!(
                        "{phase} timer runs until {deadline} ms, now {now_ms} ms"
                    )));
                }
                deadline
            }
        };
        if end_ms <= self.phase_started_at || end_ms < self.last_event_ms() {
            return Err(SessionError::ProtocolViolation(format!(
                "{phase} cannot end at {end_ms} ms"
            )));
        }

        if let Some(live) = &self.live {
            let deadline = live.deadline_ms;
            self.resolve(None, deadline)?;
        }
        if phase == Phase::Consent {
            self.push(end_ms, EventBody::ConsentGiven);
        }
        self.push(end_ms, EventBody::PhaseEnd { phase, trigger });
        let next = phase.next().expect("non-terminal phase has a successor");
        self.phase = next;
        self.phase_started_at = end_ms;
        self.question_cursor = 0;
        self.push(end_ms, EventBody::PhaseStart { phase: next });
        Ok(())
    }

    fn question_plan(&self) -> Result<(LevelConfig, u32), SessionError> {
        match self.phase {
            Phase::Demo => Ok((level_of(1), self.protocol.demo_questions)),
            p => match p.level() {
                Some(level) => {
                    let cfg = level_of(level);
                    let count = cfg.question_count;
                    Ok((cfg, count))
                }
                None if p == Phase::Done => Err(SessionError::TerminalState),
                None => Err(SessionError::ProtocolViolation(format!(
                    "no questions during {p}"
                ))),
            },
        }
    }

    /// Present the next question of the demo or current level.
    pub fn next_question(&mut self, now_ms: u64) -> Result<&Question, SessionError> {
        self.check_clock(now_ms)?;
        let (cfg, count) = self.question_plan()?;
        if self.live.is_some() {
            return Err(SessionError::ProtocolViolation("a question is already live".into()));
        }
        if self.question_cursor >= count {
            return Err(SessionError::LevelComplete(self.phase));
        }
        let limit_ms = cfg.time_limit_ms();
        let deadline_ms = if self.phase == Phase::Demo {
            now_ms + limit_ms
        } else {
            let slot_start = self.phase_started_at + u64::from(self.question_cursor) * limit_ms;
            if now_ms < slot_start {
                return Err(SessionError::ProtocolViolation(format!(
                    "question slot opens at {slot_start} ms"
                )));
            }
            let deadline = slot_start + limit_ms;
            if now_ms >= deadline {
                return Err(SessionError::ProtocolViolation(format!(
                    "question slot closed at {deadline} ms"
                )));
            }
            deadline
        };

        let question = mat::generate_question(&cfg, &mut self.rng);
        let threshold = mat::hurry_up_threshold_ms(i64::from(question.time_limit_s))?;
        self.push(
            now_ms,
            EventBody::QuestionShown {
                phase: self.phase,
                cursor: self.question_cursor,
                deadline_ms,
                question: question.clone(),
            },
        );
        self.question_cursor += 1;
        self.live = Some(LiveQuestion {
            question,
            shown_at_ms: now_ms,
            deadline_ms,
            hurry_up_threshold_ms: threshold,
            hurry_up_shown: false,
        });
        Ok(&self.live.as_ref().unwrap().question)
    }

    /// Record that the hurry-up indicator went on for the live question.
    pub fn mark_hurry_up(&mut self, now_ms: u64) -> Result<(), SessionError> {
        self.check_clock(now_ms)?;
        let live = self
            .live
            .as_mut()
            .ok_or_else(|| SessionError::ProtocolViolation("no live question".into()))?;
        if live.hurry_up_shown {
            return Err(SessionError::ProtocolViolation("hurry-up already shown".into()));
        }
        let remaining_ms = live.remaining_ms(now_ms);
        if remaining_ms > live.hurry_up_threshold_ms || now_ms > live.deadline_ms {
            return Err(SessionError::ProtocolViolation(format!(
                "hurry-up not due with {remaining_ms} ms remaining"
            )));
        }
        live.hurry_up_shown = true;
        let question_id = live.question.question_id.clone();
        self.push(
            now_ms,
            EventBody::HurryUpShown {
                question_id,
                remaining_ms,
            },
        );
        Ok(())
    }

    /// Answer (or time out, with `None`) the live question.
    pub fn submit_answer(
        &mut self,
        value: Option<i64>,
        now_ms: u64,
    ) -> Result<Attempt, SessionError> {
        self.check_clock(now_ms)?;
        if self.live.is_none() {
            return Err(SessionError::ProtocolViolation("no live question".into()));
        }
        self.resolve(value, now_ms)
    }

    fn resolve(&mut self, value: Option<i64>, now_ms: u64) -> Result<Attempt, SessionError> {
        let live = self.live.as_ref().expect("caller checked live question");
        let end_ms = now_ms.min(live.deadline_ms);
        if value.is_some() && now_ms > live.deadline_ms {
            return Err(MatError::LateSubmission {
                elapsed_ms: now_ms - live.shown_at_ms,
                limit_ms: live.deadline_ms - live.shown_at_ms,
            }
            .into());
        }
        let attempt = mat::check_answer(&live.question, value, end_ms - live.shown_at_ms)?;
        self.live = None;
        if attempt.correct && self.phase != Phase::Demo {
            self.score += 1;
        }
        let phase = self.phase;
        let body = if attempt.is_timeout() {
            EventBody::AnswerTimeout {
                phase,
                attempt: attempt.clone(),
            }
        } else {
            EventBody::AnswerSubmitted {
                phase,
                attempt: attempt.clone(),
            }
        };
        self.push(now_ms, body);
        Ok(attempt)
    }

    /// Apply every timer-driven event due at or before `now_ms`, in order:
    /// phase timers, question presentation, hurry-up marks and timeouts.
    pub fn sync(&mut self, now_ms: u64) -> Result<(), SessionError> {
        self.check_clock(now_ms)?;
        loop {
            let phase = self.phase;
            if let Some(live) = &self.live {
                let hurry_at = live.hurry_up_at_ms().max(self.last_event_ms());
                if !live.hurry_up_shown && now_ms >= hurry_at {
                    self.mark_hurry_up(hurry_at)?;
                    continue;
                }
                if now_ms >= live.deadline_ms {
                    let deadline = live.deadline_ms;
                    self.resolve(None, deadline)?;
                    continue;
                }
                return Ok(());
            }
            match phase {
                Phase::Demo => {
                    if self.question_cursor < self.protocol.demo_questions {
                        let t = self.last_event_ms();
                        self.next_question(t)?;
                        continue;
                    }
                    return Ok(());
                }
                p if p.level().is_some() => {
                    let cfg = level_of(p.level().unwrap());
                    if self.question_cursor < cfg.question_count {
                        let slot = self.phase_started_at
                            + u64::from(self.question_cursor) * cfg.time_limit_ms();
                        if now_ms >= slot {
                            self.next_question(slot)?;
                            continue;
                        }
                        return Ok(());
                    }
                }
                _ => {}
            }
            match self.phase_duration_ms() {
                Some(d) if now_ms >= self.phase_started_at + d => {
                    self.advance(Trigger::TimerExpired, now_ms)?;
                }
                _ => return Ok(()),
            }
        }
    }

    /// Rebuild a session by re-running the commands recorded in `events`.
    ///
    /// Fails with [`SessionError::LogIntegrity`] unless the regenerated log
    /// matches the input event for event.
    pub fn replay(events: &[SessionEvent]) -> Result<Session, SessionError> {
        let (first, rest) = events
            .split_first()
            .ok_or_else(|| SessionError::LogIntegrity("empty event log".into()))?;
        let mut session = match &first.body {
            EventBody::SessionCreated {
                session_id,
                participant_label,
                seed,
                protocol,
            } => Session::create_with(session_id, participant_label, *seed, *protocol, first.t_ms),
            other => {
                return Err(SessionError::LogIntegrity(format!(
                    "log starts with {} instead of session_created",
                    other.kind()
                )))
            }
        };
        for ev in rest {
            let t = ev.t_ms;
            let step = match &ev.body {
                EventBody::SessionCreated { .. } => {
                    return Err(SessionError::LogIntegrity("second session_created".into()))
                }
                EventBody::ConsentGiven | EventBody::PhaseStart { .. } => Ok(()),
                EventBody::PhaseEnd { trigger, .. } => session.advance(*trigger, t),
                EventBody::QuestionShown { .. } => session.next_question(t).map(|_| ()),
                EventBody::HurryUpShown { .. } => session.mark_hurry_up(t),
                EventBody::AnswerSubmitted { attempt, .. } => {
                    session.submit_answer(attempt.submitted_value, t).map(|_| ())
                }
                EventBody::AnswerTimeout { .. } => session.submit_answer(None, t).map(|_| ()),
            };
            step.map_err(|e| SessionError::LogIntegrity(format!("replay at {t} ms: {e}")))?;
        }
        if session.events != events {
            let at = session
                .events
                .iter()
                .zip(events)
                .position(|(a, b)| a != b)
                .unwrap_or(session.events.len().min(events.len()));
            return Err(SessionError::LogIntegrity(format!(
                "replayed log diverges at event {at}"
            )));
        }
        Ok(session)
    }
}

fn level_of(level: u8) -> LevelConfig {
    mat::level_config(i64::from(level)).expect("phase levels are 1..=4")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_demo(s: &mut Session) -> u64 {
        s.advance(Trigger::UserAction, 5_000).unwrap();
        s.sync(185_000).unwrap();
        assert_eq!(s.phase(), Phase::Instructions);
        s.advance(Trigger::UserAction, 200_000).unwrap();
        assert_eq!(s.phase(), Phase::Demo);
        200_000
    }

    #[test]
    fn create_starts_in_consent() {
        let s = Session::create("P01", 42, 0);
        assert_eq!(s.phase(), Phase::Consent);
        assert_eq!(s.score(), 0);
        assert_eq!(s.participant_label(), "P01");
        assert_eq!(s.events().len(), 2);
        let anon = Session::create("", 1, 0);
        assert!(anon.participant_label().starts_with("participant-"));
    }

    #[test]
    fn consent_then_baseline() {
        let mut s = Session::create("P01", 42, 0);
        s.advance(Trigger::UserAction, 1_000).unwrap();
        assert_eq!(s.phase(), Phase::Baseline);
        assert!(s
            .events()
            .iter()
            .any(|e| matches!(e.body, EventBody::ConsentGiven)));
        assert!(matches!(
            s.advance(Trigger::UserAction, 2_000),
            Err(SessionError::ProtocolViolation(_))
        ));
        assert!(s.advance(Trigger::TimerExpired, 100_000).is_err());
        s.advance(Trigger::TimerExpired, 181_500).unwrap();
        assert_eq!(s.phase(), Phase::Instructions);
        // stamped at the nominal deadline
        assert_eq!(s.phase_started_at(), 181_000);
    }

    #[test]
    fn same_seed_same_questions() {
        let mut a = Session::create("A", 7, 0);
        let mut b = Session::create("B", 7, 0);
        let t = to_demo(&mut a);
        to_demo(&mut b);
        a.sync(t).unwrap();
        b.sync(t).unwrap();
        assert_eq!(
            a.live_question().unwrap().question,
            b.live_question().unwrap().question
        );
    }

    #[test]
    fn demo_is_unscored() {
        let mut s = Session::create("P", 3, 0);
        let t = to_demo(&mut s);
        s.sync(t).unwrap();
        let answer = s.live_question().unwrap().question.correct_answer;
        let attempt = s.submit_answer(Some(answer), t + 1_000).unwrap();
        assert!(attempt.correct);
        assert_eq!(s.score(), 0);
        let demo_q = &s.events().iter().rev().find_map(|e| match &e.body {
            EventBody::QuestionShown { question, .. } => Some(question.clone()),
            _ => None,
        });
        assert_eq!(demo_q.as_ref().unwrap().operands.len(), 2);
    }

    #[test]
    fn level_flow_and_scoring() {
        let mut s = Session::create("P", 9, 0);
        let t = to_demo(&mut s);
        s.sync(t).unwrap();
        for k in 0..5 {
            let live = s.live_question().unwrap().clone();
            assert_eq!(live.deadline_ms - live.shown_at_ms, 4_000);
            s.submit_answer(None, t + 100 * (k + 1)).unwrap();
            s.sync(t + 100 * (k + 1)).unwrap();
        }
        assert!(s.live_question().is_none());
        assert!(matches!(s.next_question(t + 600), Err(SessionError::LevelComplete(_))));
        s.advance(Trigger::UserAction, t + 1_000).unwrap();
        assert_eq!(s.phase(), Phase::Level1);
        let l1 = t + 1_000;

        s.sync(l1).unwrap();
        let q = s.live_question().unwrap().question.clone();
        assert_eq!(q.operands.len(), 2);
        s.submit_answer(Some(q.correct_answer), l1 + 1_500).unwrap();
        assert_eq!(s.score(), 1);
        // wrong answer in the next slot
        s.sync(l1 + 4_000).unwrap();
        let q = s.live_question().unwrap().question.clone();
        s.submit_answer(Some(q.correct_answer + 1), l1 + 4_500).unwrap();
        assert_eq!(s.score(), 1);
        // no live question now
        assert!(matches!(
            s.submit_answer(Some(1), l1 + 4_600),
            Err(SessionError::ProtocolViolation(_))
        ));
        // run out the level
        s.sync(l1 + 120_000).unwrap();
        assert_eq!(s.phase(), Phase::Break1);
        assert_eq!(s.phase_started_at(), l1 + 120_000);
        assert!(matches!(
            s.next_question(l1 + 120_001),
            Err(SessionError::ProtocolViolation(_))
        ));
    }

    #[test]
    fn hurry_up_at_half_time() {
        let mut s = Session::create("P", 1, 0);
        let t = to_demo(&mut s);
        s.sync(t).unwrap();
        s.sync(t + 1_999).unwrap();
        assert!(!s.live_question().unwrap().hurry_up_shown);
        s.sync(t + 2_000).unwrap();
        assert!(s.live_question().unwrap().hurry_up_shown);
        let ev = s.events().last().unwrap();
        assert_eq!(ev.t_ms, t + 2_000);
        assert!(matches!(ev.body, EventBody::HurryUpShown { remaining_ms: 2_000, .. }));
    }

    #[test]
    fn late_answer_rejected() {
        let mut s = Session::create("P", 1, 0);
        let t = to_demo(&mut s);
        s.sync(t).unwrap();
        assert!(matches!(
            s.submit_answer(Some(3), t + 4_001),
            Err(SessionError::Answer(MatError::LateSubmission { .. }))
        ));
        // state untouched, timeout still possible
        let attempt = s.submit_answer(None, t + 4_001).unwrap();
        assert_eq!(attempt.elapsed_ms, 4_000);
    }

    #[test]
    fn terminal_and_clock_errors() {
        let mut s = Session::create("P", 1, 0);
        s.advance(Trigger::UserAction, 10).unwrap();
        assert!(matches!(
            s.advance(Trigger::TimerExpired, 5),
            Err(SessionError::ClockRegression { .. })
        ));
        let mut done = full_run(5);
        assert_eq!(done.phase(), Phase::Done);
        assert_eq!(
            done.advance(Trigger::UserAction, 10_000_000),
            Err(SessionError::TerminalState)
        );
    }

    #[test]
    fn continue_after_break_cap_is_rejected() {
        let mut s = Session::create("P", 1, 0);
        let t = to_demo(&mut s);
        s.sync(t + 30_000).unwrap();
        s.advance(Trigger::UserAction, t + 30_000).unwrap();
        s.sync(t + 150_000).unwrap();
        assert_eq!(s.phase(), Phase::Break1);
        let cap_end = s.phase_started_at() + 120_000;
        assert!(s.advance(Trigger::UserAction, cap_end + 1).is_err());
        s.advance(Trigger::UserAction, cap_end).unwrap();
        assert_eq!(s.phase(), Phase::Level2);
    }

    #[test]
    fn break_cap_auto_advances() {
        let mut s = Session::create("P", 1, 0);
        let t = to_demo(&mut s);
        s.sync(t + 30_000).unwrap();
        s.advance(Trigger::UserAction, t + 30_000).unwrap();
        s.sync(t + 30_000 + 120_000).unwrap();
        assert_eq!(s.phase(), Phase::Break1);
        s.sync(t + 30_000 + 240_000).unwrap();
        assert_eq!(s.phase(), Phase::Level2);
    }

    pub(crate) fn full_run(seed: u64) -> Session {
        let mut s = Session::create("P", seed, 0);
        let mut t = to_demo(&mut s);
        t += 30_000;
        s.sync(t).unwrap();
        s.advance(Trigger::UserAction, t).unwrap();
        for _ in 0..3 {
            t += 160_000;
            s.sync(t).unwrap();
            s.advance(Trigger::UserAction, t).unwrap();
        }
        s.sync(t + 1_000_000).unwrap();
        s
    }

    #[test]
    fn nominal_windows() {
        let s = full_run(11);
        let windows = s.phase_windows().unwrap();
        assert_eq!(windows.len(), 12);
        let baseline = windows.iter().find(|w| w.phase == Phase::Baseline).unwrap();
        assert_eq!(baseline.end_ms.unwrap() - baseline.start_ms, 180_000);
        for w in &windows {
            if let Some(level) = w.phase.level() {
                let expected = if level <= 2 { 120_000 } else { 150_000 };
                assert_eq!(w.end_ms.unwrap() - w.start_ms, expected);
            }
        }
        assert!(windows.windows(2).all(|p| p[0].end_ms.unwrap() <= p[1].start_ms));
    }

    #[test]
    fn abandoned_session_has_open_window() {
        let mut s = Session::create("P", 2, 0);
        let t = to_demo(&mut s);
        s.sync(t + 20_000).unwrap();
        s.advance(Trigger::UserAction, t + 20_000).unwrap();
        s.sync(t + 200_000).unwrap();
        s.advance(Trigger::UserAction, t + 200_000).unwrap();
        s.sync(t + 230_000).unwrap();
        assert_eq!(s.phase(), Phase::Level2);
        let windows = s.phase_windows().unwrap();
        assert_eq!(windows.last().unwrap().phase, Phase::Level2);
        assert!(windows.last().unwrap().is_open());
    }

    #[test]
    fn replay_round_trip() {
        let s = full_run(21);
        let replayed = Session::replay(s.events()).unwrap();
        assert_eq!(replayed, s);
    }

    #[test]
    fn replay_detects_tampering() {
        let s = full_run(21);
        let mut log = s.events().to_vec();
        for ev in log.iter_mut() {
            if let EventBody::AnswerTimeout { attempt, .. } = &mut ev.body {
                attempt.elapsed_ms += 1;
                break;
            }
        }
        assert!(matches!(Session::replay(&log), Err(SessionError::LogIntegrity(_))));
        assert!(Session::replay(&[]).is_err());
    }
}
