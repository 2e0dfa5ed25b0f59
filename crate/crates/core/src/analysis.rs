//! Offline analysis of stored sessions into per-phase heart-rate reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::ecg::{detect_r_peaks, hr_series, segment_and_aggregate, EcgError, PhaseHrStats};
use crate::session::{phase_windows, Phase, Session, SessionError, HEADLINE_PHASES, PROTOCOL_ORDER};
use crate::store::{self, Channel, StoreError};
use crate::Strategy;

pub const REPORT_FILE: &str = "report.csv";
pub const PARTICIPANTS_FILE: &str = "participants.csv";
pub const PLOT_DATA_FILE: &str = "plot_data.json";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Ecg(#[from] EcgError),
    #[error("phase {0} has no end; session incomplete")]
    OpenWindow(Phase),
    #[error("no sessions to report")]
    Empty,
}

/// Heart-rate results for one stored session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionAnalysis {
    pub session_id: String,
    pub participant_label: String,
    pub sampling_rate_hz: f64,
    pub n_peaks: usize,
    pub rr_artifacts: usize,
    /// Every closed phase window, in protocol order.
    pub phases: Vec<PhaseHrStats>,
}

impl SessionAnalysis {
    pub fn phase(&self, phase: Phase) -> Option<&PhaseHrStats> {
        self.phases.iter().find(|s| s.phase == phase)
    }

    pub fn mean_bpm(&self, phase: Phase) -> Option<f64> {
        self.phase(phase).and_then(|s| s.mean_bpm)
    }
}

/// Event log -> phase windows; ECG -> peaks -> HR; HR segmented by window.
pub fn analyze_session_dir(dir: &Path) -> Result<SessionAnalysis, AnalysisError> {
    let meta = store::read_meta(dir)?;
    let events = store::read_events(dir)?;
    Session::replay(&events)?;
    let windows = phase_windows(&events)?;
    if let Some(open) = windows.iter().find(|w| w.is_open()) {
        return Err(AnalysisError::OpenWindow(open.phase));
    }
    let record = store::read_ecg_record(&dir.join(Channel::Ecg.file_name()))?;
    let peaks = detect_r_peaks(&record)?;
    let (hr, rr) = hr_series(&record, &peaks)?;
    let phases = segment_and_aggregate(&hr, &windows)?;
    Ok(SessionAnalysis {
        session_id: meta.session_id,
        participant_label: meta.participant_label,
        sampling_rate_hz: record.sampling_rate_hz(),
        n_peaks: peaks.len(),
        rr_artifacts: rr.artifacts,
        phases,
    })
}

/// Analyse many sessions; results keep the input order.
pub fn analyze_dirs(
    dirs: &[PathBuf],
    strategy: Strategy,
) -> Vec<Result<SessionAnalysis, AnalysisError>> {
    strategy.map(dirs, |d| analyze_session_dir(d))
}

/// Across-participant summary of one phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallPhase {
    pub phase: Phase,
    /// Unweighted mean of participant means.
    pub mean_bpm: Option<f64>,
    /// Sample SD of participant means.
    pub sd_bpm: Option<f64>,
    pub n_participants: usize,
    pub n_beats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    /// Sorted by participant label, then session id.
    pub sessions: Vec<SessionAnalysis>,
    /// One entry per phase present in any session, protocol order.
    pub overall: Vec<OverallPhase>,
}

impl PhaseReport {
    pub fn build(mut sessions: Vec<SessionAnalysis>) -> Result<PhaseReport, AnalysisError> {
        if sessions.is_empty() {
            return Err(AnalysisError::Empty);
        }
        sessions.sort_by(|a, b| {
            a.participant_label
                .cmp(&b.participant_label)
                .then_with(|| a.session_id.cmp(&b.session_id))
        });
        let overall = PROTOCOL_ORDER
            .iter()
            .filter(|p| sessions.iter().any(|s| s.phase(**p).is_some()))
            .map(|&phase| {
                let means: Vec<f64> = sessions.iter().filter_map(|s| s.mean_bpm(phase)).collect();
                let n_beats = sessions
                    .iter()
                    .filter_map(|s| s.phase(phase))
                    .map(|s| s.n_beats)
                    .sum();
                let (mean_bpm, sd_bpm) = mean_sd(&means);
                OverallPhase {
                    phase,
                    mean_bpm,
                    sd_bpm,
                    n_participants: means.len(),
                    n_beats,
                }
            })
            .collect();
        Ok(PhaseReport { sessions, overall })
    }

    pub fn overall_mean(&self, phase: Phase) -> Option<f64> {
        self.overall
            .iter()
            .find(|o| o.phase == phase)
            .and_then(|o| o.mean_bpm)
    }

    /// Headline table: baseline, the four levels and rest, per participant
    /// and overall.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("scope,participant,session_id,phase,mean_bpm,sd_bpm,n_beats\n");
        for s in &self.sessions {
            for phase in HEADLINE_PHASES {
                let (mean, sd, n) = match s.phase(phase) {
                    Some(st) => (st.mean_bpm, st.sd_bpm, st.n_beats),
                    None => (None, None, 0),
                };
                let _ = writeln!(
                    out,
                    "participant,{},{},{},{},{},{}",
                    csv_field(&s.participant_label),
                    s.session_id,
                    phase,
                    fmt_opt(mean),
                    fmt_opt(sd),
                    n
                );
            }
        }
        for phase in HEADLINE_PHASES {
            let o = self.overall.iter().find(|o| o.phase == phase);
            let _ = writeln!(
                out,
                "overall,all,,{},{},{},{}",
                phase,
                fmt_opt(o.and_then(|o| o.mean_bpm)),
                fmt_opt(o.and_then(|o| o.sd_bpm)),
                o.map_or(0, |o| o.n_beats)
            );
        }
        out
    }

    /// Participant x headline-phase matrix of mean rates.
    pub fn render_participants_csv(&self) -> String {
        let mut out = String::from("participant,session_id");
        for phase in HEADLINE_PHASES {
            let _ = write!(out, ",{phase}");
        }
        out.push('\n');
        for s in &self.sessions {
            let _ = write!(out, "{},{}", csv_field(&s.participant_label), s.session_id);
            for phase in HEADLINE_PHASES {
                let _ = write!(out, ",{}", fmt_opt(s.mean_bpm(phase)));
            }
            out.push('\n');
        }
        out
    }

    /// Everything needed to redraw the overall and per-participant bar
    /// charts, including demo and break phases.
    pub fn render_plot_data(&self) -> String {
        #[derive(Serialize)]
        struct PlotData<'a> {
            headline_phases: Vec<Phase>,
            phases: Vec<Phase>,
            overall: &'a [OverallPhase],
            participants: Vec<PlotParticipant<'a>>,
        }
        #[derive(Serialize)]
        struct PlotParticipant<'a> {
            participant: &'a str,
            session_id: &'a str,
            phases: &'a [PhaseHrStats],
        }
        let data = PlotData {
            headline_phases: HEADLINE_PHASES.to_vec(),
            phases: self.overall.iter().map(|o| o.phase).collect(),
            overall: &self.overall,
            participants: self
                .sessions
                .iter()
                .map(|s| PlotParticipant {
                    participant: &s.participant_label,
                    session_id: &s.session_id,
                    phases: &s.phases,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&data).expect("plot data serialises") + "\n"
    }

    /// Write the three report files into `out`, creating it if needed.
    pub fn write_to(&self, out: &Path) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(out)?;
        let files = [
            (REPORT_FILE, self.render_csv()),
            (PARTICIPANTS_FILE, self.render_participants_csv()),
            (PLOT_DATA_FILE, self.render_plot_data()),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = out.join(name);
            fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
