//! ECG processing: zero-phase filtering, R-peak detection, RR intervals,
//! instantaneous heart rate and per-phase aggregation, plus a synthetic ECG
//! generator with exact ground truth used to verify the chain end to end.

mod detect;
mod filter;
mod hr;
mod segment;
mod synth;

pub use detect::{detect_batch, detect_r_peaks, detect_r_peaks_with, DetectorConfig, RPeakSeries};
pub use filter::{bandpass_filter, Biquad, Sos, FILTER_ORDER, MIN_FILTER_SECONDS};
pub use hr::{hr_from_rr, hr_series, rr_intervals, HrSeries, RrSeries, RR_MAX_MS, RR_MIN_MS};
pub use segment::{segment_and_aggregate, PhaseHrStats};
pub use synth::{match_peaks, synth_ecg, EcgSynth, PeakMatch, SynthEcg, SynthPhase};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Analysis band for display and R-peak refinement.
pub const ANALYSIS_BAND_HZ: (f64, f64) = (0.5, 40.0);
pub const DEFAULT_SAMPLING_RATE_HZ: f64 = 250.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EcgError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("band {low_hz}-{high_hz} Hz invalid at {sampling_rate_hz} Hz sampling")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        sampling_rate_hz: f64,
    },
    #[error("record too short: {actual_s:.3} s, need {required_s} s")]
    TooShort { actual_s: f64, required_s: f64 },
    #[error("sampling rate {0} Hz below the 100 Hz minimum")]
    SamplingRateTooLow(f64),
    #[error("need at least 2 beats, got {0}")]
    InsufficientBeats(usize),
    #[error("phase windows overlap or are out of order: {0}")]
    InvalidWindows(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Uniformly sampled ECG in millivolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    sampling_rate_hz: f64,
    /// Time of the first sample, ms in the session epoch.
    start_t_ms: f64,
    samples: Vec<f64>,
}

impl EcgRecord {
    pub fn new(sampling_rate_hz: f64, start_t_ms: f64, samples: Vec<f64>) -> Result<Self, EcgError> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(EcgError::InvalidRecord(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        if !start_t_ms.is_finite() {
            return Err(EcgError::InvalidRecord("start time is not finite".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(EcgError::InvalidRecord(format!("sample {i} is not finite")));
        }
        Ok(EcgRecord {
            sampling_rate_hz,
            start_t_ms,
            samples,
        })
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn start_t_ms(&self) -> f64 {
        self.start_t_ms
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }

    /// Session-epoch time of sample `index`.
    pub fn time_ms(&self, index: usize) -> f64 {
        self.start_t_ms + index as f64 * 1000.0 / self.sampling_rate_hz
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> EcgRecord {
        EcgRecord {
            sampling_rate_hz: self.sampling_rate_hz,
            start_t_ms: self.start_t_ms,
            samples,
        }
    }
}
