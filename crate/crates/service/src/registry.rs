//! Live sessions, their on-disk state and the operations behind every
//! endpoint.
//!
//! Lock order: a channel writer lock may be held while taking the session
//! lock, never the reverse.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use stresslab_core::analysis::{analyze_session_dir, PhaseReport};
use stresslab_core::mat::{self, Attempt, ScoreboardEntry, Standing};
use stresslab_core::session::{new_session_id, random_seed, Phase, ProtocolConfig, Session, Trigger};
use stresslab_core::store::{self, Channel, SessionMeta, SessionStore, StoreError};
use tokio::sync::Mutex;

use crate::clock::Clock;
use crate::config::ServiceConfig;
use crate::error::ApiError;

struct SessionCore {
    session: Session,
    meta: SessionMeta,
    /// Events already on disk.
    persisted: usize,
}

#[derive(Debug, Default)]
struct ChannelState {
    count: u64,
    last_t_ms: Option<f64>,
    rate_hz: Option<f64>,
    offset_ms: Option<f64>,
}

struct SessionHandle {
    id: String,
    dir: PathBuf,
    core: Mutex<SessionCore>,
    finalized: AtomicBool,
    channels: [Mutex<ChannelState>; 3],
}

impl SessionHandle {
    fn channel(&self, c: Channel) -> &Mutex<ChannelState> {
        &self.channels[Channel::ALL.iter().position(|x| *x == c).expect("known channel")]
    }
}

struct Inner {
    config: ServiceConfig,
    store: SessionStore,
    clock: Arc<dyn Clock>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    standings: std::sync::Mutex<BTreeMap<String, Standing>>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub participant_label: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Submitted answer: a JSON number or the raw text typed by the participant.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Number(i64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRequest {
    Consent,
    Continue,
    Answer { value: AnswerValue },
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub question_id: String,
    pub level_id: u8,
    pub text: String,
    pub time_limit_ms: u64,
    pub shown_at_ms: u64,
    pub deadline_ms: u64,
}

/// Everything a client needs to render the current screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub participant_label: String,
    pub phase: Phase,
    pub phase_started_at_ms: u64,
    pub now_ms: u64,
    /// Time left on the live question, else on the phase timer.
    pub remaining_ms: Option<u64>,
    pub phase_remaining_ms: Option<u64>,
    pub question: Option<QuestionView>,
    pub hurry_up_threshold_ms: Option<u64>,
    pub hurry_up_active: bool,
    pub question_cursor: u32,
    pub question_count: Option<u32>,
    pub score: u32,
    pub scoreboard: Vec<ScoreboardEntry>,
    pub continue_enabled: bool,
    pub media_url: Option<String>,
    pub finalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    #[serde(flatten)]
    pub state: SessionView,
    pub attempt: Option<Attempt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub participant_label: String,
    pub phase: Phase,
    pub elapsed_ms: u64,
    pub score: u32,
    pub finalized: bool,
    pub samples: BTreeMap<Channel, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorBatch {
    #[serde(default)]
    pub session_id: Option<String>,
    pub channel: String,
    pub sampling_rate_hz: f64,
    pub first_sample_t_ms: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAck {
    pub channel: Channel,
    pub accepted: usize,
    /// Samples stored for this channel so far, this batch included.
    pub total_samples: u64,
    /// Session-epoch time assigned to the first sample.
    pub first_t_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub session_id: String,
    pub phase: Phase,
    pub finalized: bool,
    pub report: String,
}

impl AppState {
    /// Open the store and rebuild every session from its event log.
    pub fn open(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<AppState, StoreError> {
        let store = SessionStore::open(&config.store_root)?;
        let mut sessions = HashMap::new();
        let mut standings = BTreeMap::new();
        for dir in store.session_dirs()? {
            match recover(&dir) {
                Ok(handle) => {
                    let core = handle.core.try_lock().expect("fresh handle");
                    if let Some(s) = standing_of(&core) {
                        standings.insert(handle.id.clone(), s);
                    }
                    drop(core);
                    sessions.insert(handle.id.clone(), Arc::new(handle));
                }
                Err(e) => tracing::warn!(dir = %dir.display(), error = %e, "skipping unrecoverable session"),
            }
        }
        tracing::info!(count = sessions.len(), root = %store.root().display(), "sessions recovered");
        Ok(AppState {
            inner: Arc::new(Inner {
                config,
                store,
                clock,
                sessions: RwLock::new(sessions),
                standings: std::sync::Mutex::new(standings),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.inner
            .sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn session_now(&self, core: &SessionCore) -> u64 {
        let elapsed = self.inner.clock.now_unix_ms() - core.meta.created_unix_ms;
        (elapsed.max(0) as u64).max(core.session.last_event_ms())
    }

    pub async fn create_session(&self, req: CreateRequest) -> Result<SessionView, ApiError> {
        let seed = req.seed.unwrap_or_else(random_seed);
        let created = self.inner.clock.now_unix_ms();
        let protocol: ProtocolConfig = self.inner.config.protocol;
        let label = req.participant_label.unwrap_or_default();
        let id = new_session_id();
        let session = Session::create_with(&id, &label, seed, protocol, 0);
        let meta = SessionMeta {
            session_id: id.clone(),
            participant_label: session.participant_label().to_string(),
            seed,
            created_unix_ms: created,
            protocol,
            finalized: false,
            sensor_offset_ms: None,
            channel_rates_hz: BTreeMap::new(),
        };
        let dir = self.inner.store.create_session(&meta, session.events())?;
        let core = SessionCore {
            persisted: session.events().len(),
            session,
            meta,
        };
        let view = self.view(&core, false, 0);
        let handle = SessionHandle {
            id: id.clone(),
            dir,
            core: Mutex::new(core),
            finalized: AtomicBool::new(false),
            channels: Default::default(),
        };
        self.inner
            .sessions
            .write()
            .expect("registry lock")
            .insert(id.clone(), Arc::new(handle));
        tracing::info!(session = %id, "session created");
        Ok(view)
    }

    pub async fn list(&self) -> Vec<SessionSummary> {
        let handles: Vec<Arc<SessionHandle>> =
            self.inner.sessions.read().expect("registry lock").values().cloned().collect();
        let mut out = Vec::with_capacity(handles.len());
        for h in handles {
            let mut samples = BTreeMap::new();
            for c in Channel::ALL {
                samples.insert(c, h.channel(c).lock().await.count);
            }
            let core = h.core.lock().await;
            out.push((
                core.meta.created_unix_ms,
                SessionSummary {
                    session_id: h.id.clone(),
                    participant_label: core.meta.participant_label.clone(),
                    phase: core.session.phase(),
                    elapsed_ms: self.session_now(&core),
                    score: core.session.score(),
                    finalized: h.finalized.load(Ordering::SeqCst),
                    samples,
                },
            ));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.session_id.cmp(&b.1.session_id)));
        out.into_iter().map(|(_, s)| s).collect()
    }

    pub async fn state(&self, id: &str) -> Result<SessionView, ApiError> {
        let h = self.handle(id)?;
        let mut core = h.core.lock().await;
        let finalized = h.finalized.load(Ordering::SeqCst);
        let now = self.session_now(&core);
        if !finalized {
            core.session.sync(now)?;
            self.persist(&h, &mut core)?;
        }
        Ok(self.view(&core, finalized, now))
    }

    pub async fn step(&self, id: &str, req: StepRequest) -> Result<StepResponse, ApiError> {
        let h = self.handle(id)?;
        let mut core = h.core.lock().await;
        if h.finalized.load(Ordering::SeqCst) {
            return Err(ApiError::finalized(id));
        }
        let now = self.session_now(&core);
        core.session.sync(now)?;
        let result = apply_step(&mut core.session, &req, now);
        if result.is_ok() {
            let now = now.max(core.session.last_event_ms());
            if let Err(e) = core.session.sync(now) {
                tracing::warn!(session = %id, error = %e, "post-step sync failed");
            }
        }
        // timer events applied before a rejected command are still real
        self.persist(&h, &mut core)?;
        let attempt = result?;
        let now = self.session_now(&core);
        Ok(StepResponse {
            state: self.view(&core, false, now),
            attempt,
        })
    }

    pub async fn ingest(&self, id: &str, batch: SensorBatch) -> Result<BatchAck, ApiError> {
        let h = self.handle(id)?;
        if batch.session_id.as_deref().is_some_and(|s| s != id) {
            return Err(ApiError::bad_request("batch_rejected", "session_id does not match the path"));
        }
        let channel: Channel = batch
            .channel
            .parse()
            .map_err(|e: String| ApiError::bad_request("unknown_channel", e))?;
        let rate = batch.sampling_rate_hz;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ApiError::bad_request("batch_rejected", format!("sampling rate {rate}")));
        }
        if batch.values.is_empty() {
            return Err(ApiError::bad_request("batch_rejected", "empty batch"));
        }
        if !batch.first_sample_t_ms.is_finite() || batch.values.iter().any(|v| !v.is_finite()) {
            return Err(ApiError::bad_request("batch_rejected", "non-finite number in batch"));
        }

        let mut ch = h.channel(channel).lock().await;
        if h.finalized.load(Ordering::SeqCst) {
            return Err(ApiError::finalized(id));
        }
        let offset = match (ch.rate_hz, ch.offset_ms) {
            (Some(expected), Some(offset)) => {
                if expected != rate {
                    return Err(ApiError::bad_request(
                        "batch_rejected",
                        format!("{channel} sampling rate is {expected} Hz, batch says {rate} Hz"),
                    ));
                }
                offset
            }
            _ => self.register_channel(&h, channel, rate, batch.first_sample_t_ms).await?,
        };
        let first_t = batch.first_sample_t_ms + offset;
        if let Some(last) = ch.last_t_ms {
            if first_t <= last {
                return Err(ApiError::bad_request(
                    "batch_rejected",
                    format!("{channel} batch starts at {first_t} ms, not after stored {last} ms"),
                ));
            }
        }
        store::append_samples(&h.dir, channel, first_t, rate, &batch.values)?;
        let n = batch.values.len();
        ch.rate_hz = Some(rate);
        ch.offset_ms = Some(offset);
        ch.count += n as u64;
        ch.last_t_ms = Some(store::sample_time_ms(first_t, rate, n - 1));
        Ok(BatchAck {
            channel,
            accepted: n,
            total_samples: ch.count,
            first_t_ms: first_t,
        })
    }

    /// First batch of a channel: fix its rate, and the session clock offset
    /// if no channel has done so yet.
    async fn register_channel(
        &self,
        h: &SessionHandle,
        channel: Channel,
        rate: f64,
        first_sample_t_ms: f64,
    ) -> Result<f64, ApiError> {
        let mut core = h.core.lock().await;
        if let Some(&expected) = core.meta.channel_rates_hz.get(&channel) {
            if expected != rate {
                return Err(ApiError::bad_request(
                    "batch_rejected",
                    format!("{channel} sampling rate is {expected} Hz, batch says {rate} Hz"),
                ));
            }
        }
        let mut meta = core.meta.clone();
        let offset = match meta.sensor_offset_ms {
            Some(o) => o,
            None => {
                let o = self.session_now(&core) as f64 - first_sample_t_ms;
                meta.sensor_offset_ms = Some(o);
                tracing::info!(session = %h.id, offset_ms = o, "sensor clock offset fixed");
                o
            }
        };
        meta.channel_rates_hz.insert(channel, rate);
        if meta != core.meta {
            store::write_meta(&h.dir, &meta)?;
            core.meta = meta;
        }
        Ok(offset)
    }

    pub async fn finalize(&self, id: &str) -> Result<FinalizeResponse, ApiError> {
        let h = self.handle(id)?;
        let report = format!("/sessions/{id}/report");
        {
            let mut core = h.core.lock().await;
            if h.finalized.load(Ordering::SeqCst) {
                return Ok(FinalizeResponse {
                    session_id: id.to_string(),
                    phase: core.session.phase(),
                    finalized: true,
                    report,
                });
            }
            let now = self.session_now(&core);
            core.session.sync(now)?;
            self.persist(&h, &mut core)?;
            let phase = core.session.phase();
            if !matches!(phase, Phase::Rest | Phase::Done) {
                return Err(ApiError::protocol(format!("cannot finalize during {phase}")));
            }
            h.finalized.store(true, Ordering::SeqCst);
        }
        // let in-flight batches land before sealing
        for c in Channel::ALL {
            drop(h.channel(c).lock().await);
        }
        let mut core = h.core.lock().await;
        let mut meta = core.meta.clone();
        meta.finalized = true;
        store::write_meta(&h.dir, &meta)?;
        core.meta = meta;
        tracing::info!(session = %id, "session finalized");
        Ok(FinalizeResponse {
            session_id: id.to_string(),
            phase: core.session.phase(),
            finalized: true,
            report,
        })
    }

    /// Headline report of one finalized session, as CSV.
    pub async fn report(&self, id: &str) -> Result<String, ApiError> {
        let h = self.handle(id)?;
        if !h.finalized.load(Ordering::SeqCst) {
            return Err(ApiError::new(
                axum::http::StatusCode::CONFLICT,
                "not_finalized",
                format!("session {id} must be finalized first"),
            ));
        }
        let dir = h.dir.clone();
        let analysis = tokio::task::spawn_blocking(move || analyze_session_dir(&dir))
            .await
            .map_err(|e| ApiError::storage(e.to_string()))?
            .map_err(|e| ApiError::bad_request("analysis_failed", e.to_string()))?;
        let report = PhaseReport::build(vec![analysis])
            .map_err(|e| ApiError::bad_request("analysis_failed", e.to_string()))?;
        Ok(report.render_csv())
    }

    fn persist(&self, h: &SessionHandle, core: &mut SessionCore) -> Result<(), ApiError> {
        let pending = &core.session.events()[core.persisted..];
        match store::append_events(&h.dir, pending) {
            Ok(()) => {
                core.persisted = core.session.events().len();
                if let Some(s) = standing_of(core) {
                    self.inner.standings.lock().expect("standings lock").insert(h.id.clone(), s);
                }
                Ok(())
            }
            Err(e) => {
                // roll memory back to what is on disk
                let on_disk = &core.session.events()[..core.persisted];
                core.session = Session::replay(on_disk).expect("persisted prefix replays");
                tracing::error!(session = %h.id, error = %e, "event append failed");
                Err(e.into())
            }
        }
    }

    fn view(&self, core: &SessionCore, finalized: bool, now: u64) -> SessionView {
        let s = &core.session;
        let phase = s.phase();
        let live = s.live_question();
        let question_count = match phase {
            Phase::Demo => Some(s.protocol().demo_questions),
            p => p
                .level()
                .map(|l| mat::level_config(i64::from(l)).expect("valid level").question_count),
        };
        let phase_remaining_ms = s
            .phase_duration_ms()
            .map(|d| (s.phase_started_at() + d).saturating_sub(now));
        let remaining_ms = s.remaining_ms(now);
        let hurry_up_threshold_ms = live.map(|l| l.hurry_up_threshold_ms);
        let standings: Vec<Standing> = self
            .inner
            .standings
            .lock()
            .expect("standings lock")
            .values()
            .cloned()
            .collect();
        SessionView {
            session_id: s.session_id().to_string(),
            participant_label: s.participant_label().to_string(),
            phase,
            phase_started_at_ms: s.phase_started_at(),
            now_ms: now,
            remaining_ms,
            phase_remaining_ms,
            question: live.map(|l| QuestionView {
                question_id: l.question.question_id.clone(),
                level_id: l.question.level_id,
                text: l.question.rendered_text.clone(),
                time_limit_ms: l.question.time_limit_ms(),
                shown_at_ms: l.shown_at_ms,
                deadline_ms: l.deadline_ms,
            }),
            hurry_up_threshold_ms,
            hurry_up_active: live.is_some_and(|l| l.remaining_ms(now) <= l.hurry_up_threshold_ms),
            question_cursor: s.question_cursor(),
            question_count,
            score: s.score(),
            scoreboard: mat::scoreboard(&standings, &self.inner.config.scoreboard),
            continue_enabled: !finalized
                && (phase.is_break()
                    || (live.is_none()
                        && matches!(phase, Phase::Consent | Phase::Instructions | Phase::Demo))),
            media_url: matches!(phase, Phase::Baseline | Phase::Rest)
                .then(|| self.inner.config.media_url().map(str::to_string))
                .flatten(),
            finalized,
        }
    }
}

fn apply_step(s: &mut Session, req: &StepRequest, now: u64) -> Result<Option<Attempt>, ApiError> {
    let user_now = now.max(s.phase_started_at() + 1);
    match req {
        StepRequest::Consent => {
            if s.phase() != Phase::Consent {
                return Err(ApiError::protocol(format!("consent is not pending during {}", s.phase())));
            }
            s.advance(Trigger::UserAction, user_now)?;
            Ok(None)
        }
        StepRequest::Continue => {
            let phase = s.phase();
            if !(matches!(phase, Phase::Instructions | Phase::Demo) || phase.is_break()) {
                return Err(ApiError::protocol(format!("continue is not available during {phase}")));
            }
            s.advance(Trigger::UserAction, user_now)?;
            Ok(None)
        }
        StepRequest::Answer { value } => {
            if s.live_question().is_none() {
                return Err(ApiError::protocol(format!("no question is live during {}", s.phase())));
            }
            let value = match value {
                AnswerValue::Number(n) => *n,
                AnswerValue::Text(t) => mat::parse_answer(t)
                    .map_err(|e| ApiError::bad_request("invalid_answer", e.to_string()))?,
            };
            Ok(Some(s.submit_answer(Some(value), now)?))
        }
        StepRequest::Timeout => {
            if s.live_question().is_none() {
                return Err(ApiError::protocol(format!("no question is live during {}", s.phase())));
            }
            Ok(Some(s.submit_answer(None, now)?))
        }
    }
}

fn standing_of(core: &SessionCore) -> Option<Standing> {
    core.session.level4_completed_ms().map(|t| Standing {
        display_name: core.meta.participant_label.clone(),
        score: core.session.score(),
        completed_at_ms: core.meta.created_unix_ms + t as i64,
    })
}

fn recover(dir: &std::path::Path) -> Result<SessionHandle, ApiError> {
    let meta = store::read_meta(dir)?;
    let events = store::read_events(dir)?;
    let session = Session::replay(&events)?;
    if session.session_id() != meta.session_id {
        return Err(ApiError::storage("event log belongs to another session"));
    }
    let channels: [Mutex<ChannelState>; 3] = Default::default();
    for (i, c) in Channel::ALL.into_iter().enumerate() {
        if !dir.join(c.file_name()).exists() {
            continue;
        }
        let data = store::read_signal(dir, c)?;
        let mut st = channels[i].try_lock().expect("fresh lock");
        st.count = data.t_ms.len() as u64;
        st.last_t_ms = data.t_ms.last().copied();
        st.rate_hz = meta.channel_rates_hz.get(&c).copied();
        st.offset_ms = meta.sensor_offset_ms;
    }
    Ok(SessionHandle {
        id: meta.session_id.clone(),
        dir: dir.to_path_buf(),
        finalized: AtomicBool::new(meta.finalized),
        core: Mutex::new(SessionCore {
            persisted: events.len(),
            session,
            meta,
        }),
        channels,
    })
}
