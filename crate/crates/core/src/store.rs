//! On-disk session layout.
//!
//! ```text
//! <root>/<session_id>/
//!     meta.json      session metadata (one JSON object)
//!     events.jsonl   event log, one event per line, append-only
//!     ecg.csv        t_ms,ecg_mv
//!     ppg.csv        t_ms,ppg
//!     eda.csv        t_ms,eda
//! ```
//!
//! Signal timestamps are session-epoch milliseconds written with the
//! shortest representation that reads back to the identical `f64`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecg::EcgRecord;
use crate::session::{ProtocolConfig, SessionEvent};

pub const META_FILE: &str = "meta.json";
pub const EVENTS_FILE: &str = "events.jsonl";

/// Allowed deviation of any sample step from the mean step.
pub const MAX_STEP_JITTER: f64 = 0.01;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Format {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn invalid(path: &Path, reason: impl Into<String>) -> Self {
        StoreError::Invalid {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Ecg,
    Ppg,
    Eda,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Ecg, Channel::Ppg, Channel::Eda];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Ecg => "ecg",
            Channel::Ppg => "ppg",
            Channel::Eda => "eda",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Channel::Ecg => "ecg.csv",
            Channel::Ppg => "ppg.csv",
            Channel::Eda => "eda.csv",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Channel::Ecg => "t_ms,ecg_mv",
            Channel::Ppg => "t_ms,ppg",
            Channel::Eda => "t_ms,eda",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown channel {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub participant_label: String,
    pub seed: u64,
    /// Wall-clock time of session creation (Unix ms); the session epoch.
    pub created_unix_ms: i64,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub finalized: bool,
    /// Sensor clock offset fixed at the first batch: session_t = source_t + offset.
    #[serde(default)]
    pub sensor_offset_ms: Option<f64>,
    /// Fixed at each channel's first batch.
    #[serde(default)]
    pub channel_rates_hz: BTreeMap<Channel, f64>,
}

pub fn read_meta(dir: &Path) -> Result<SessionMeta, StoreError> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Format {
        path,
        line: e.line(),
        reason: e.to_string(),
    })
}

/// Replace `meta.json` atomically (write to a temp file, then rename).
pub fn write_meta(dir: &Path, meta: &SessionMeta) -> Result<(), StoreError> {
    let path = dir.join(META_FILE);
    let tmp = dir.join(".meta.json.tmp");
    let text = serde_json::to_string_pretty(meta).expect("meta serialises");
    fs::write(&tmp, text + "\n").map_err(|e| StoreError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| StoreError::io(&path, e))
}

pub fn append_events(dir: &Path, events: &[SessionEvent]) -> Result<(), StoreError> {
    if events.is_empty() {
        return Ok(());
    }
    let path = dir.join(EVENTS_FILE);
    let mut buf = String::new();
    for ev in events {
        buf.push_str(&serde_json::to_string(ev).expect("event serialises"));
        buf.push('\n');
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| StoreError::io(&path, e))?;
    file.write_all(buf.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| StoreError::io(&path, e))
}

pub fn read_events(dir: &Path) -> Result<Vec<SessionEvent>, StoreError> {
    let path = dir.join(EVENTS_FILE);
    let file = File::open(&path).map_err(|e| StoreError::io(&path, e))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| StoreError::Format {
            path: path.clone(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(ev);
    }
    Ok(events)
}

/// Timestamp of sample `i` of a block starting at `first_t_ms`.
pub fn sample_time_ms(first_t_ms: f64, sampling_rate_hz: f64, i: usize) -> f64 {
    first_t_ms + i as f64 * 1000.0 / sampling_rate_hz
}

/// Append a uniformly sampled block to a channel file, writing the header
/// when the file is new.
pub fn append_samples(
    dir: &Path,
    channel: Channel,
    first_t_ms: f64,
    sampling_rate_hz: f64,
    values: &[f64],
) -> Result<(), StoreError> {
    let path = dir.join(channel.file_name());
    let fresh = !path.exists();
    let mut buf = String::with_capacity(values.len() * 24);
    if fresh {
        buf.push_str(channel.header());
        buf.push('\n');
    }
    for (i, v) in values.iter().enumerate() {
        buf.push_str(&format!("{},{}\n", sample_time_ms(first_t_ms, sampling_rate_hz, i), v));
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| StoreError::io(&path, e))?;
    file.write_all(buf.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| StoreError::io(&path, e))
}

/// Raw contents of one channel file.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalData {
    pub t_ms: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn read_signal(dir: &Path, channel: Channel) -> Result<SignalData, StoreError> {
    read_signal_file(&dir.join(channel.file_name()), channel)
}

pub fn read_signal_file(path: &Path, channel: Channel) -> Result<SignalData, StoreError> {
    let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| StoreError::io(path, e))?
        .ok_or_else(|| StoreError::invalid(path, "empty file"))?;
    if header.trim() != channel.header() {
        return Err(StoreError::Format {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected header {:?}, got {:?}", channel.header(), header.trim()),
        });
    }
    let mut data = SignalData {
        t_ms: Vec::new(),
        values: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| StoreError::Format {
            path: path.to_path_buf(),
            line: i + 2,
            reason,
        };
        let (t, v) = line
            .split_once(',')
            .ok_or_else(|| bad("expected two columns".into()))?;
        let t: f64 = t.trim().parse().map_err(|_| bad(format!("bad time {t:?}")))?;
        let v: f64 = v.trim().parse().map_err(|_| bad(format!("bad value {v:?}")))?;
        if !t.is_finite() || !v.is_finite() {
            return Err(bad("non-finite number".into()));
        }
        if let Some(&prev) = data.t_ms.last() {
            if t <= prev {
                return Err(bad(format!("time {t} not after {prev}")));
            }
        }
        data.t_ms.push(t);
        data.values.push(v);
    }
    Ok(data)
}

/// Load an ECG file as a uniformly sampled record.
///
/// Every step must be within 1% of the mean step; nothing is resampled.
pub fn read_ecg_record(path: &Path) -> Result<EcgRecord, StoreError> {
    let data = read_signal_file(path, Channel::Ecg)?;
    let n = data.t_ms.len();
    if n < 2 {
        return Err(StoreError::invalid(path, format!("{n} samples, need at least 2")));
    }
    let step = (data.t_ms[n - 1] - data.t_ms[0]) / (n - 1) as f64;
    if let Some(k) = data
        .t_ms
        .windows(2)
        .position(|w| ((w[1] - w[0]) - step).abs() > MAX_STEP_JITTER * step)
    {
        return Err(StoreError::invalid(
            path,
            format!(
                "non-uniform sampling at row {}: step {} ms vs mean {step} ms",
                k + 3,
                data.t_ms[k + 1] - data.t_ms[k]
            ),
        ));
    }
    EcgRecord::new(1000.0 / step, data.t_ms[0], data.values)
        .map_err(|e| StoreError::invalid(path, e.to_string()))
}

/// Write a whole record as a fresh ECG file.
pub fn write_ecg_record(path: &Path, record: &EcgRecord) -> Result<(), StoreError> {
    let mut buf = String::with_capacity(record.len() * 24);
    buf.push_str(Channel::Ecg.header());
    buf.push('\n');
    for (i, v) in record.samples().iter().enumerate() {
        buf.push_str(&format!("{},{}\n", record.time_ms(i), v));
    }
    fs::write(path, buf).map_err(|e| StoreError::io(path, e))
}

/// Root directory holding one subdirectory per session.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<SessionStore, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        Ok(SessionStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, session_id: &str) -> PathBuf {
        self.root.join(session_id)
    }

    /// Create the directory, metadata and initial event log of a session.
    pub fn create_session(
        &self,
        meta: &SessionMeta,
        events: &[SessionEvent],
    ) -> Result<PathBuf, StoreError> {
        let dir = self.session_dir(&meta.session_id);
        if dir.exists() {
            return Err(StoreError::invalid(&dir, "session directory already exists"));
        }
        fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        write_meta(&dir, meta)?;
        File::create(dir.join(EVENTS_FILE)).map_err(|e| StoreError::io(&dir, e))?;
        append_events(&dir, events)?;
        Ok(dir)
    }

    /// Directories containing a `meta.json`, sorted by name.
    pub fn session_dirs(&self) -> Result<Vec<PathBuf>, StoreError> {
        let mut dirs = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| StoreError::io(&self.root, e))? {
            let entry = entry.map_err(|e| StoreError::io(&self.root, e))?;
            let path = entry.path();
            if path.is_dir() && path.join(META_FILE).exists() {
                dirs.push(path);
            }
        }
        dirs.sort();
        Ok(dirs)
    }
}
