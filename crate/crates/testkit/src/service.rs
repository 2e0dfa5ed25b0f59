//! Drive the HTTP router in-process with a manual clock.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use stresslab_core::session::{EventBody, Phase, Trigger};
use stresslab_core::simulate::SynthSession;
use stresslab_service::{router, AppState, ManualClock, ServiceConfig};
use tower::ServiceExt;

pub use axum::http::Method as HttpMethod;

/// Unix time the manual clock starts at.
pub const T0_UNIX_MS: i64 = 1_750_000_000_000;

pub struct Harness {
    pub app: Router,
    pub state: AppState,
    pub clock: Arc<ManualClock>,
    pub config: ServiceConfig,
}

impl Harness {
    pub fn new(store_root: &std::path::Path) -> Harness {
        let config = ServiceConfig {
            store_root: store_root.to_path_buf(),
            ..ServiceConfig::default()
        };
        Harness::with_config(config)
    }

    pub fn with_config(config: ServiceConfig) -> Harness {
        let clock = Arc::new(ManualClock::new(T0_UNIX_MS));
        let state = AppState::open(config.clone(), clock.clone()).expect("store opens");
        Harness {
            app: router(state.clone()),
            state,
            clock,
            config,
        }
    }

    /// Restart on the same store, keeping the clock.
    pub fn restart(&self) -> Harness {
        let state = AppState::open(self.config.clone(), self.clock.clone()).expect("store reopens");
        Harness {
            app: router(state.clone()),
            state,
            clock: self.clock.clone(),
            config: self.config.clone(),
        }
    }

    pub async fn raw(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, body).await;
        let v = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, v)
    }

    pub async fn step(&self, id: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, &format!("/sessions/{id}/step"), Some(body)).await
    }

    /// Set the clock to `t_ms` in the epoch of a session created at `T0_UNIX_MS`.
    pub fn at(&self, t_ms: u64) {
        self.clock.set(T0_UNIX_MS + t_ms as i64);
    }
}

/// Replay a synthetic session through the endpoints: create it, stream its
/// ECG in `batch` sized chunks, then issue every participant command at the
/// recorded time and let the service's timers do the rest. Returns the new
/// session id.
pub async fn push_synth_session(h: &Harness, synth: &SynthSession, batch: usize) -> String {
    h.at(0);
    let (status, created) = h
        .call(
            Method::POST,
            "/sessions",
            Some(json!({
                "participant_label": synth.session.participant_label(),
                "seed": synth.session.seed(),
            })),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let id = created["session_id"].as_str().unwrap().to_string();

    // sensor clock runs on its own origin; the first batch fixes the offset
    let record = &synth.ecg.record;
    let fs = record.sampling_rate_hz();
    let source_origin = 3_600_000.0;
    for (k, chunk) in record.samples().chunks(batch).enumerate() {
        let first = source_origin + record.time_ms(k * batch) - record.start_t_ms();
        let (status, ack) = h
            .call(
                Method::POST,
                &format!("/sessions/{id}/sensors"),
                Some(json!({
                    "channel": "ecg",
                    "sampling_rate_hz": fs,
                    "first_sample_t_ms": first,
                    "values": chunk,
                })),
            )
            .await;
        assert_eq!(status, StatusCode::OK, "{ack}");
    }

    for ev in synth.session.events() {
        let cmd = match &ev.body {
            EventBody::ConsentGiven => Some(json!({"action": "consent"})),
            EventBody::PhaseEnd { phase, trigger: Trigger::UserAction } if *phase != Phase::Consent => {
                Some(json!({"action": "continue"}))
            }
            EventBody::AnswerSubmitted { attempt, .. } => {
                Some(json!({"action": "answer", "value": attempt.submitted_value}))
            }
            _ => None,
        };
        if let Some(cmd) = cmd {
            h.at(ev.t_ms);
            let (status, body) = h.step(&id, cmd.clone()).await;
            assert_eq!(status, StatusCode::OK, "{cmd} at {} ms: {body}", ev.t_ms);
        }
    }
    h.at(synth.session.last_event_ms());
    let (status, state) = h.call(Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state["phase"], "done", "{state}");
    let (status, fin) = h.call(Method::POST, &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK, "{fin}");
    id
}
