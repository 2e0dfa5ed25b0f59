use serde::{Deserialize, Serialize};

use super::{EcgError, HrSeries};
use crate::session::{Phase, PhaseWindow};

/// Heart-rate summary of one phase window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseHrStats {
    pub phase: Phase,
    pub mean_bpm: Option<f64>,
    pub sd_bpm: Option<f64>,
    pub n_beats: usize,
}

/// Assign each beat to the closed window `[start, end)` containing it and
/// summarise per window. Open windows and beats outside every window are
/// ignored. Mean and sample SD need at least two beats.
pub fn segment_and_aggregate(
    hr: &HrSeries,
    windows: &[PhaseWindow],
) -> Result<Vec<PhaseHrStats>, EcgError> {
    for pair in windows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        match a.end_ms {
            Some(end) if end <= b.start_ms => {}
            _ => {
                return Err(EcgError::InvalidWindows(format!(
                    "{} [{}, {:?}) overlaps {} starting at {}",
                    a.phase, a.start_ms, a.end_ms, b.phase, b.start_ms
                )))
            }
        }
    }
    if let Some(w) = windows.iter().find(|w| w.end_ms.is_some_and(|e| e <= w.start_ms)) {
        return Err(EcgError::InvalidWindows(format!("{} window is empty", w.phase)));
    }
    if hr.beat_t_ms.windows(2).any(|p| p[1] < p[0]) {
        return Err(EcgError::InvalidArgument("beat times must be sorted".into()));
    }

    Ok(windows
        .iter()
        .filter_map(|w| w.end_ms.map(|end| (w.phase, w.start_ms as f64, end as f64)))
        .map(|(phase, start, end)| {
            let lo = hr.beat_t_ms.partition_point(|&t| t < start);
            let hi = hr.beat_t_ms.partition_point(|&t| t < end);
            summarise(phase, &hr.bpm[lo..hi])
        })
        .collect())
}

fn summarise(phase: Phase, bpm: &[f64]) -> PhaseHrStats {
    let n = bpm.len();
    if n < 2 {
        return PhaseHrStats {
            phase,
            mean_bpm: None,
            sd_bpm: None,
            n_beats: n,
        };
    }
    let mean = bpm.iter().sum::<f64>() / n as f64;
    let var = bpm.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    PhaseHrStats {
        phase,
        mean_bpm: Some(mean),
        sd_bpm: Some(var.sqrt()),
        n_beats: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window(phase: Phase, start: u64, end: u64) -> PhaseWindow {
        PhaseWindow { phase, start_ms: start, end_ms: Some(end) }
    }

    #[test]
    fn constant_rate() {
        let hr = HrSeries {
            beat_t_ms: (0..60).map(|i| 800.0 * i as f64).collect(),
            bpm: vec![75.0; 60],
        };
        let stats = segment_and_aggregate(&hr, &[window(Phase::Baseline, 0, 60_000)]).unwrap();
        assert_eq!(stats[0].mean_bpm, Some(75.0));
        assert_eq!(stats[0].sd_bpm, Some(0.0));
        assert_eq!(stats[0].n_beats, 60);
    }

    #[test]
    fn empty_window() {
        let hr = HrSeries { beat_t_ms: vec![10.0, 20.0], bpm: vec![60.0, 61.0] };
        let stats = segment_and_aggregate(&hr, &[window(Phase::Rest, 100, 200)]).unwrap();
        assert_eq!(stats[0].n_beats, 0);
        assert_eq!(stats[0].mean_bpm, None);
    }

    #[test]
    fn overlapping_windows_rejected() {
        let hr = HrSeries::default();
        let ws = [window(Phase::Baseline, 0, 100), window(Phase::Instructions, 50, 200)];
        assert!(matches!(segment_and_aggregate(&hr, &ws), Err(EcgError::InvalidWindows(_))));
        let open_then_more = [
            PhaseWindow { phase: Phase::Baseline, start_ms: 0, end_ms: None },
            window(Phase::Instructions, 50, 200),
        ];
        assert!(segment_and_aggregate(&hr, &open_then_more).is_err());
    }

    #[test]
    fn open_window_skipped() {
        let hr = HrSeries { beat_t_ms: vec![10.0, 20.0, 30.0], bpm: vec![60.0; 3] };
        let ws = [
            window(Phase::Baseline, 0, 15),
            PhaseWindow { phase: Phase::Instructions, start_ms: 15, end_ms: None },
        ];
        let stats = segment_and_aggregate(&hr, &ws).unwrap();
        assert_eq!(stats.len(), 1);
    }

    proptest! {
        #[test]
        fn matches_brute_force_recount(
            mut times in prop::collection::vec(0.0f64..10_000.0, 0..200),
            cuts in prop::collection::btree_set(1u64..10_000, 1..12),
            gaps in prop::collection::vec(any::<bool>(), 12),
        ) {
            times.sort_by(f64::total_cmp);
            let bpm: Vec<f64> = times.iter().map(|t| 50.0 + (t % 37.0)).collect();
            let hr = HrSeries { beat_t_ms: times.clone(), bpm: bpm.clone() };
            let bounds: Vec<u64> = std::iter::once(0).chain(cuts).collect();
            let windows: Vec<PhaseWindow> = bounds
                .windows(2)
                .enumerate()
                .filter(|(i, _)| !gaps[*i % gaps.len()])
                .map(|(_, b)| window(Phase::Level1, b[0], b[1]))
                .collect();
            let stats = segment_and_aggregate(&hr, &windows).unwrap();
            prop_assert_eq!(stats.len(), windows.len());
            let mut assigned = 0;
            for (w, s) in windows.iter().zip(&stats) {
                let inside: Vec<f64> = times
                    .iter()
                    .zip(&bpm)
                    .filter(|(t, _)| **t >= w.start_ms as f64 && **t < w.end_ms.unwrap() as f64)
                    .map(|(_, b)| *b)
                    .collect();
                prop_assert_eq!(s.n_beats, inside.len());
                assigned += inside.len();
                if inside.len() >= 2 {
                    let mean = inside.iter().sum::<f64>() / inside.len() as f64;
                    prop_assert!((s.mean_bpm.unwrap() - mean).abs() < 1e-9);
                }
            }
            prop_assert!(assigned <= times.len());
        }
    }
}
