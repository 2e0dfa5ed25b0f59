use super::{EcgError, EcgRecord, RPeakSeries};

/// Shortest plausible RR interval (250 bpm).
pub const RR_MIN_MS: f64 = 240.0;
/// Longest plausible RR interval (20 bpm).
pub const RR_MAX_MS: f64 = 3000.0;

/// Accepted RR intervals with the peak that closes each one.
#[derive(Debug, Clone, PartialEq)]
pub struct RrSeries {
    pub intervals_ms: Vec<f64>,
    /// Index (into the peak series) of the beat ending each interval.
    pub end_beats: Vec<usize>,
    /// Intervals dropped for falling outside `[RR_MIN_MS, RR_MAX_MS]`.
    pub artifacts: usize,
}

pub fn rr_intervals(peaks: &RPeakSeries, sampling_rate_hz: f64) -> Result<RrSeries, EcgError> {
    let idx = &peaks.peak_indices;
    if idx.len() < 2 {
        return Err(EcgError::InsufficientBeats(idx.len()));
    }
    let mut out = RrSeries {
        intervals_ms: Vec::with_capacity(idx.len() - 1),
        end_beats: Vec::with_capacity(idx.len() - 1),
        artifacts: 0,
    };
    for (k, pair) in idx.windows(2).enumerate() {
        let ms = (pair[1] - pair[0]) as f64 * 1000.0 / sampling_rate_hz;
        if (RR_MIN_MS..=RR_MAX_MS).contains(&ms) {
            out.intervals_ms.push(ms);
            out.end_beats.push(k + 1);
        } else {
            out.artifacts += 1;
        }
    }
    Ok(out)
}

/// Instantaneous heart rate, `60000 / rr` per interval.
pub fn hr_from_rr(rr_ms: &[f64]) -> Vec<f64> {
    rr_ms.iter().map(|rr| 60_000.0 / rr).collect()
}

/// Beat-level heart rate.
///
/// `bpm[i]` is the rate of the RR interval that *ends* at `beat_t_ms[i]`, so
/// both vectors have the same length and each rate is attributed to the
/// phase in which its closing beat falls.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HrSeries {
    pub beat_t_ms: Vec<f64>,
    pub bpm: Vec<f64>,
}

impl HrSeries {
    pub fn len(&self) -> usize {
        self.bpm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bpm.is_empty()
    }
}

/// Peaks -> RR intervals -> heart rate, timestamped in the session epoch.
pub fn hr_series(record: &EcgRecord, peaks: &RPeakSeries) -> Result<(HrSeries, RrSeries), EcgError> {
    let rr = rr_intervals(peaks, record.sampling_rate_hz())?;
    let series = HrSeries {
        beat_t_ms: rr
            .end_beats
            .iter()
            .map(|&k| record.time_ms(peaks.peak_indices[k]))
            .collect(),
        bpm: hr_from_rr(&rr.intervals_ms),
    };
    Ok((series, rr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peaks(idx: &[usize]) -> RPeakSeries {
        RPeakSeries { peak_indices: idx.to_vec() }
    }

    #[test]
    fn uniform_spacing() {
        let rr = rr_intervals(&peaks(&[0, 250, 500]), 250.0).unwrap();
        assert_eq!(rr.intervals_ms, vec![1000.0, 1000.0]);
        assert_eq!(rr.artifacts, 0);
    }

    #[test]
    fn short_interval_is_artifact() {
        let rr = rr_intervals(&peaks(&[0, 50, 300]), 250.0).unwrap();
        assert_eq!(rr.intervals_ms, vec![1000.0]);
        assert_eq!(rr.artifacts, 1);
        assert_eq!(rr.end_beats, vec![2]);
    }

    #[test]
    fn single_peak_errors() {
        assert_eq!(
            rr_intervals(&peaks(&[10]), 250.0),
            Err(EcgError::InsufficientBeats(1))
        );
    }

    #[test]
    fn rates() {
        assert_eq!(hr_from_rr(&[1000.0]), vec![60.0]);
        assert_eq!(hr_from_rr(&[800.0]), vec![75.0]);
        assert!((hr_from_rr(&[710.65])[0] - 84.43).abs() < 0.01);
        assert!((hr_from_rr(&[60_000.0 / 84.43])[0] - 84.43).abs() < 1e-9);
        assert!(hr_from_rr(&[]).is_empty());
    }

    #[test]
    fn periodic_peaks_give_exact_rate() {
        for rate in [48.0, 60.0, 75.0, 120.0, 150.0] {
            let fs = 1000.0;
            let step = (60_000.0 / rate) as usize;
            let idx: Vec<usize> = (0..50).map(|i| i * step).collect();
            let rr = rr_intervals(&peaks(&idx), fs).unwrap();
            for bpm in hr_from_rr(&rr.intervals_ms) {
                let expected = 60_000.0 / step as f64;
                assert!(((bpm - expected) / expected).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn series_timestamps() {
        let r = EcgRecord::new(250.0, 1000.0, vec![0.0; 1000]).unwrap();
        let (hr, _) = hr_series(&r, &peaks(&[0, 50, 300, 500])).unwrap();
        assert_eq!(hr.beat_t_ms, vec![2200.0, 3000.0]);
        assert_eq!(hr.bpm, vec![60.0, 75.0]);
    }
}
