//! Pan-Tompkins style QRS detection over a complete record.
//!
//! QRS band-pass (5-15 Hz) -> five-point derivative -> square -> 150 ms
//! moving-window integration -> adaptive signal/noise thresholds with a
//! 200 ms refractory period and search-back -> refinement to the maximum of
//! the 0.5-40 Hz filtered ECG within +-50 ms.
//!
//! All stages are non-causal (centred) so detections carry no group delay.

use super::filter::{Sos, FILTER_ORDER};
use super::{EcgError, EcgRecord, ANALYSIS_BAND_HZ};
use crate::Strategy;

/// Strictly increasing R-peak sample indices into one record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RPeakSeries {
    pub peak_indices: Vec<usize>,
}

impl RPeakSeries {
    pub fn len(&self) -> usize {
        self.peak_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peak_indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub qrs_band_hz: (f64, f64),
    pub analysis_band_hz: (f64, f64),
    pub integration_window_ms: f64,
    pub refractory_ms: f64,
    pub refine_window_ms: f64,
    /// Candidates closer than this to the previous beat get the T-wave slope test.
    pub t_wave_window_ms: f64,
    /// Search back when no beat for this multiple of the running RR mean.
    pub searchback_factor: f64,
    pub min_record_s: f64,
    pub min_sampling_rate_hz: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            qrs_band_hz: (5.0, 15.0),
            analysis_band_hz: ANALYSIS_BAND_HZ,
            integration_window_ms: 150.0,
            refractory_ms: 200.0,
            refine_window_ms: 50.0,
            t_wave_window_ms: 360.0,
            searchback_factor: 1.66,
            min_record_s: 10.0,
            min_sampling_rate_hz: 100.0,
        }
    }
}

// Integrated energy below this ((mV/s)^2) is treated as flatline.
const ENERGY_FLOOR: f64 = 1e-6;

pub fn detect_r_peaks(record: &EcgRecord) -> Result<RPeakSeries, EcgError> {
    detect_r_peaks_with(record, &DetectorConfig::default())
}

/// Detect peaks in many records.
pub fn detect_batch(records: &[EcgRecord], strategy: Strategy) -> Vec<Result<RPeakSeries, EcgError>> {
    strategy.map(records, detect_r_peaks)
}

pub fn detect_r_peaks_with(record: &EcgRecord, cfg: &DetectorConfig) -> Result<RPeakSeries, EcgError> {
    let fs = record.sampling_rate_hz();
    if fs < cfg.min_sampling_rate_hz {
        return Err(EcgError::SamplingRateTooLow(fs));
    }
    if record.duration_s() < cfg.min_record_s {
        return Err(EcgError::TooShort {
            actual_s: record.duration_s(),
            required_s: cfg.min_record_s,
        });
    }
    let samples = |ms: f64| ((ms * fs / 1000.0).round() as usize).max(1);

    let (lo, hi) = cfg.analysis_band_hz;
    let analysis = Sos::butterworth_bandpass(FILTER_ORDER, lo, hi, fs).filtfilt(record.samples());
    let (lo, hi) = cfg.qrs_band_hz;
    let qrs = Sos::butterworth_bandpass(FILTER_ORDER, lo, hi, fs).filtfilt(record.samples());

    let slope = derivative(&qrs, fs);
    let energy: Vec<f64> = slope.iter().map(|d| d * d).collect();
    let integrated = moving_average(&energy, samples(cfg.integration_window_ms));

    let refractory = samples(cfg.refractory_ms);
    let candidates = suppress_non_maxima(&local_maxima(&integrated), &integrated, refractory);
    let beats = classify(
        &candidates,
        &integrated,
        &slope,
        fs,
        refractory,
        samples(cfg.t_wave_window_ms),
        cfg.searchback_factor,
    );

    let half = samples(cfg.refine_window_ms);
    let mut refined: Vec<usize> = beats
        .iter()
        .map(|&c| {
            let lo = c.saturating_sub(half);
            let hi = (c + half).min(analysis.len() - 1);
            (lo..=hi)
                .max_by(|&a, &b| analysis[a].total_cmp(&analysis[b]).then(b.cmp(&a)))
                .unwrap()
        })
        .collect();
    refined.dedup();

    // refinement can pull neighbours together; keep the taller one
    let mut peaks: Vec<usize> = Vec::with_capacity(refined.len());
    for idx in refined {
        match peaks.last_mut() {
            Some(prev) if idx - *prev < refractory => {
                if analysis[idx] > analysis[*prev] {
                    *prev = idx;
                }
            }
            _ => peaks.push(idx),
        }
    }
    Ok(RPeakSeries { peak_indices: peaks })
}

// Centred five-point derivative, units per second.
fn derivative(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
    (0..n as isize)
        .map(|i| (2.0 * at(i + 2) + at(i + 1) - at(i - 1) - 2.0 * at(i - 2)) * fs / 8.0)
        .collect()
}

// Centred moving average over `width` samples, shrinking at the edges.
fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v;
        prefix.push(acc);
    }
    let before = width / 2;
    let after = width - 1 - before;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < x.len() {
        if x[i] > x[i - 1] && x[i] >= ENERGY_FLOOR {
            // plateau: take its first sample if it ends by falling
            let mut j = i;
            while j + 1 < x.len() && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < x.len() && x[j + 1] < x[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn accept(c: usize, beats: &mut Vec<usize>, rr: &mut Vec<usize>) {
    if let Some(&prev) = beats.last() {
        rr.push(c - prev);
        if rr.len() > 8 {
            rr.remove(0);
        }
    }
    beats.push(c);
}

// Keep only candidates that dominate every other candidate closer than
// `radius`; the integrated QRS hump has several ripples.
fn suppress_non_maxima(candidates: &[usize], x: &[f64], radius: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(candidates.len());
    let mut lo = 0;
    for (k, &c) in candidates.iter().enumerate() {
        while c - candidates[lo] >= radius {
            lo += 1;
        }
        let beaten_before = candidates[lo..k].iter().any(|&d| x[d] >= x[c]);
        let beaten_after = candidates[k + 1..]
            .iter()
            .take_while(|&&d| d - c < radius)
            .any(|&d| x[d] > x[c]);
        if !beaten_before && !beaten_after {
            out.push(c);
        }
    }
    out
}

struct Levels {
    signal: f64,
    noise: f64,
}

impl Levels {
    fn threshold(&self) -> f64 {
        self.noise + 0.25 * (self.signal - self.noise)
    }
}

fn classify(
    candidates: &[usize],
    integrated: &[f64],
    slope: &[f64],
    fs: f64,
    refractory: usize,
    t_wave_window: usize,
    searchback_factor: f64,
) -> Vec<usize> {
    let learn = ((2.0 * fs) as usize).min(integrated.len());
    let head = &integrated[..learn];
    let mut levels = Levels {
        signal: head.iter().cloned().fold(0.0, f64::max) / 3.0,
        noise: head.iter().sum::<f64>() / learn as f64 / 2.0,
    };
    let max_slope = |c: usize| {
        let w = refractory / 2;
        slope[c.saturating_sub(w)..(c + w).min(slope.len())]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };

    let mut beats: Vec<usize> = Vec::new();
    let mut rr: Vec<usize> = Vec::new();
    let mut since_last: Vec<usize> = Vec::new();

    for &c in candidates {
        // search back for a missed beat before handling this candidate
        if let (Some(&prev), false) = (beats.last(), rr.is_empty()) {
            let mean_rr = rr.iter().sum::<usize>() as f64 / rr.len() as f64;
            if (c - prev) as f64 > searchback_factor * mean_rr {
                let threshold = 0.5 * levels.threshold();
                let missed = since_last
                    .iter()
                    .copied()
                    .filter(|&m| m - prev >= refractory && c - m >= refractory)
                    .filter(|&m| integrated[m] > threshold)
                    .max_by(|&a, &b| integrated[a].total_cmp(&integrated[b]));
                if let Some(m) = missed {
                    levels.signal = 0.25 * integrated[m] + 0.75 * levels.signal;
                    accept(m, &mut beats, &mut rr);
                    since_last.clear();
                }
            }
        }

        let value = integrated[c];
        if let Some(&prev) = beats.last() {
            if c - prev < refractory {
                continue;
            }
        }
        let mut is_beat = value > levels.threshold();
        if is_beat {
            if let Some(&prev) = beats.last() {
                if c - prev < t_wave_window && max_slope(c) < 0.5 * max_slope(prev) {
                    is_beat = false;
                }
            }
        }
        if is_beat {
            levels.signal = 0.125 * value + 0.875 * levels.signal;
            accept(c, &mut beats, &mut rr);
            since_last.clear();
        } else {
            levels.noise = 0.125 * value + 0.875 * levels.noise;
            since_last.push(c);
        }
    }
    beats
}
