//! Fully synthetic sessions: a scripted participant drives a real
//! [`Session`] through the protocol, then a synthetic ECG is generated whose
//! rate in each phase window follows a profile.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::ecg::{EcgError, EcgSynth, SynthPhase, DEFAULT_SAMPLING_RATE_HZ};
use crate::session::{Phase, ProtocolConfig, Session, SessionError, Trigger, PROTOCOL_ORDER};
use crate::store::{self, SessionMeta, StoreError};

/// Creation time written to synthetic metadata (2024-01-01T00:00:00Z).
pub const SYNTH_EPOCH_UNIX_MS: i64 = 1_704_067_200_000;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Ecg(#[from] EcgError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Durations of the phases that end on participant action.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticipantTiming {
    pub consent_ms: u64,
    pub instructions_ms: u64,
    /// Pause after the last demo answer before continuing.
    pub demo_exit_ms: u64,
    pub break_ms: u64,
}

impl Default for ParticipantTiming {
    fn default() -> Self {
        ParticipantTiming {
            consent_ms: 20_000,
            instructions_ms: 30_000,
            demo_exit_ms: 3_000,
            break_ms: 45_000,
        }
    }
}

/// Per-phase heart rates plus participant behaviour.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthProfile {
    pub participant: String,
    #[serde(default = "default_fs")]
    pub sampling_rate_hz: f64,
    /// Omitted means noise-free.
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
    #[serde(default = "default_accuracy")]
    pub answer_accuracy: f64,
    #[serde(default)]
    pub timing: ParticipantTiming,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    /// Rate for every phase except `done`, keyed by phase name.
    bpm: BTreeMap<String, f64>,
}

fn default_fs() -> f64 {
    DEFAULT_SAMPLING_RATE_HZ
}

fn default_accuracy() -> f64 {
    0.7
}

impl SynthProfile {
    /// Profile with the given rates; `bpm` must name every phase but `done`.
    pub fn new(participant: &str, bpm: &[(Phase, f64)]) -> Result<SynthProfile, SimulateError> {
        let profile = SynthProfile {
            participant: participant.to_string(),
            sampling_rate_hz: default_fs(),
            noise_snr_db: None,
            answer_accuracy: default_accuracy(),
            timing: ParticipantTiming::default(),
            protocol: ProtocolConfig::default(),
            bpm: bpm.iter().map(|(p, v)| (p.to_string(), *v)).collect(),
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn from_toml(text: &str) -> Result<SynthProfile, SimulateError> {
        let profile: SynthProfile =
            toml::from_str(text).map_err(|e| SimulateError::Profile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn bpm(&self, phase: Phase) -> f64 {
        self.bpm[phase.as_str()]
    }

    /// Same profile with every rate moved by `delta`.
    pub fn shifted(&self, delta: f64) -> SynthProfile {
        let mut p = self.clone();
        for v in p.bpm.values_mut() {
            *v += delta;
        }
        p
    }

    fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: String| Err(SimulateError::Profile(m));
        for key in self.bpm.keys() {
            match key.parse::<Phase>() {
                Ok(Phase::Done) => return bad("phase done takes no rate".into()),
                Ok(_) => {}
                Err(_) => return bad(format!("unknown phase {key:?}")),
            }
        }
        for phase in &PROTOCOL_ORDER[..PROTOCOL_ORDER.len() - 1] {
            match self.bpm.get(phase.as_str()) {
                None => return bad(format!("missing rate for phase {phase}")),
                Some(v) if !(*v > 30.0 && *v < 200.0) => {
                    return bad(format!("rate {v} for {phase} outside 30-200 bpm"))
                }
                Some(_) => {}
            }
        }
        if !(0.0..=1.0).contains(&self.answer_accuracy) {
            return bad(format!("answer_accuracy {} outside [0, 1]", self.answer_accuracy));
        }
        if !(self.sampling_rate_hz >= 100.0 && self.sampling_rate_hz.is_finite()) {
            return bad(format!("sampling rate {} below 100 Hz", self.sampling_rate_hz));
        }
        let t = &self.timing;
        if t.consent_ms == 0 || t.instructions_ms == 0 || t.demo_exit_ms == 0 || t.break_ms == 0 {
            return bad("participant timings must be positive".into());
        }
        if t.break_ms >= self.protocol.break_cap_ms {
            return bad(format!(
                "break_ms {} must be below the {} ms break cap",
                t.break_ms, self.protocol.break_cap_ms
            ));
        }
        Ok(())
    }
}

/// A scripted session and its ECG, before anything is written.
#[derive(Debug, Clone)]
pub struct SynthSession {
    pub meta: SessionMeta,
    pub session: Session,
    pub ecg: crate::ecg::SynthEcg,
}

/// Drive a session from consent to done with simulated answers.
pub fn simulate_protocol(profile: &SynthProfile, seed: u64) -> Result<Session, SimulateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let id = uuid::Builder::from_random_bytes(rng.random()).into_uuid().to_string();
    let mut s = Session::create_with(&id, &profile.participant, seed, profile.protocol, 0);
    let timing = profile.timing;

    while s.phase() != Phase::Done {
        let start = s.phase_started_at();
        match s.phase() {
            Phase::Consent => s.advance(Trigger::UserAction, start + timing.consent_ms)?,
            Phase::Instructions => s.advance(Trigger::UserAction, start + timing.instructions_ms)?,
            p if p.is_break() => s.advance(Trigger::UserAction, start + timing.break_ms)?,
            Phase::Baseline | Phase::Rest => {
                let end = start + s.phase_duration_ms().expect("timed phase");
                s.sync(end)?;
            }
            Phase::Demo => {
                let t = s.last_event_ms();
                s.sync(t)?;
                if s.live_question().is_some() {
                    answer_live(&mut s, profile, &mut rng)?;
                } else {
                    s.advance(Trigger::UserAction, t + timing.demo_exit_ms)?;
                }
            }
            _ => {
                let t = s.last_event_ms();
                s.sync(t)?;
                if s.live_question().is_some() {
                    answer_live(&mut s, profile, &mut rng)?;
                } else {
                    // between slots or after the last one
                    let level = s.phase().level().expect("level phase");
                    let cfg = crate::mat::level_config(i64::from(level)).expect("valid level");
                    let next = start + u64::from(s.question_cursor()) * cfg.time_limit_ms();
                    s.sync(next.min(start + cfg.total_ms()))?;
                }
            }
        }
    }
    Ok(s)
}

fn answer_live(s: &mut Session, profile: &SynthProfile, rng: &mut ChaCha8Rng) -> Result<(), SimulateError> {
    let live = s.live_question().expect("caller checked").clone();
    let limit = live.deadline_ms - live.shown_at_ms;
    let rt = (limit as f64 * rng.random_range(0.35..1.15)) as u64;
    let t = live.shown_at_ms + rt.max(1);
    let correct = rng.random_bool(profile.answer_accuracy);
    let wrong_by = rng.random_range(1..=9i64);
    s.sync(t)?;
    if s.live_question().is_some() {
        let answer = live.question.correct_answer;
        let value = if correct { answer } else { answer + wrong_by };
        s.submit_answer(Some(value), t)?;
    }
    Ok(())
}

/// Simulate the protocol and synthesise an ECG aligned to its windows.
pub fn synth_session(profile: &SynthProfile, seed: u64) -> Result<SynthSession, SimulateError> {
    profile.validate()?;
    let session = simulate_protocol(profile, seed)?;
    let windows = session.phase_windows()?;
    let phases: Vec<SynthPhase> = windows
        .iter()
        .map(|w| SynthPhase {
            duration_ms: (w.end_ms.expect("finished session") - w.start_ms) as f64,
            bpm: profile.bpm(w.phase),
        })
        .collect();
    let ecg = EcgSynth {
        sampling_rate_hz: profile.sampling_rate_hz,
        start_t_ms: windows[0].start_ms as f64,
        noise_snr_db: profile.noise_snr_db,
        seed,
        ..EcgSynth::default()
    }
    .generate(&phases)?;
    let meta = SessionMeta {
        session_id: session.session_id().to_string(),
        participant_label: session.participant_label().to_string(),
        seed,
        created_unix_ms: SYNTH_EPOCH_UNIX_MS,
        protocol: profile.protocol,
        finalized: true,
        sensor_offset_ms: Some(0.0),
        channel_rates_hz: [(store::Channel::Ecg, profile.sampling_rate_hz)].into(),
    };
    Ok(SynthSession { meta, session, ecg })
}

/// Write a synthetic session directory at `out` (created if missing; must
/// not already hold a session).
pub fn write_synth_session(profile: &SynthProfile, seed: u64, out: &Path) -> Result<SynthSession, SimulateError> {
    let synth = synth_session(profile, seed)?;
    if out.join(store::META_FILE).exists() {
        return Err(SimulateError::Profile(format!(
            "{} already contains a session",
            out.display()
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| StoreError::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    store::write_meta(out, &synth.meta)?;
    std::fs::write(out.join(store::EVENTS_FILE), "").map_err(|e| StoreError::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    store::append_events(out, synth.session.events())?;
    store::write_ecg_record(&out.join(store::Channel::Ecg.file_name()), &synth.ecg.record)?;
    Ok(synth)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROFILE: &str = r#"
participant = "S01"
noise_snr_db = 20.0

[bpm]
consent = 72.0
baseline = 75.0
instructions = 74.0
demo = 76.0
level1 = 84.0
break1 = 78.0
level2 = 83.0
break2 = 78.0
level3 = 81.0
break3 = 77.0
level4 = 80.0
rest = 74.0
"#;

    #[test]
    fn parses_and_validates() {
        let p = SynthProfile::from_toml(PROFILE).unwrap();
        assert_eq!(p.bpm(Phase::Level2), 83.0);
        assert_eq!(p.sampling_rate_hz, 250.0);
        let missing = PROFILE.replace("rest = 74.0\n", "");
        assert!(SynthProfile::from_toml(&missing).is_err());
        let unknown = PROFILE.replace("rest =", "recess =");
        assert!(SynthProfile::from_toml(&unknown).is_err());
        assert!(SynthProfile::from_toml("participant = 3").is_err());
        let slow = PROFILE.replace("rest = 74.0", "rest = 12.0");
        assert!(SynthProfile::from_toml(&slow).is_err());
    }

    #[test]
    fn protocol_reaches_done_with_nominal_windows() {
        let p = SynthProfile::from_toml(PROFILE).unwrap();
        let s = simulate_protocol(&p, 11).unwrap();
        assert_eq!(s.phase(), Phase::Done);
        let windows = s.phase_windows().unwrap();
        assert_eq!(windows.len(), 12);
        let len = |ph: Phase| {
            let w = windows.iter().find(|w| w.phase == ph).unwrap();
            w.end_ms.unwrap() - w.start_ms
        };
        assert_eq!(len(Phase::Consent), 20_000);
        assert_eq!(len(Phase::Baseline), 180_000);
        assert_eq!(len(Phase::Level1), 120_000);
        assert_eq!(len(Phase::Level3), 150_000);
        assert_eq!(len(Phase::Break2), 45_000);
        assert_eq!(len(Phase::Rest), 180_000);
        assert_eq!(Session::replay(s.events()).unwrap(), s);
        let answered = s
            .events()
            .iter()
            .filter(|e| matches!(e.body, crate::session::EventBody::AnswerSubmitted { .. }))
            .count();
        // response times are drawn over 0.35-1.15 of the limit
        assert!(answered > 80, "{answered} answers");
        assert!(s.score() > 40);
    }

    #[test]
    fn seed_determinism() {
        let p = SynthProfile::from_toml(PROFILE).unwrap();
        let a = simulate_protocol(&p, 5).unwrap();
        let b = simulate_protocol(&p, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_protocol(&p, 6).unwrap();
        assert_ne!(a.session_id(), c.session_id());
    }
}
