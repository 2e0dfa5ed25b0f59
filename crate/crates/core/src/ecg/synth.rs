//! Synthetic ECG with known R-peak positions.
//!
//! Each beat is a sum of Gaussian bumps (P, Q, R, S, T) centred on the beat
//! time; P and T offsets scale with the square root of the RR interval. Beat
//! times follow the phase's nominal RR plus seeded Gaussian jitter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{EcgError, EcgRecord};

/// One constant-rate stretch of the synthetic record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthPhase {
    pub duration_ms: f64,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEcg {
    pub record: EcgRecord,
    /// Exact R sample indices.
    pub r_peaks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcgSynth {
    pub sampling_rate_hz: f64,
    pub start_t_ms: f64,
    pub jitter_sd_ms: f64,
    pub noise_snr_db: Option<f64>,
    /// Peak-to-peak amplitude of a slow respiratory baseline drift (mV).
    pub baseline_wander_mv: f64,
    pub seed: u64,
}

impl Default for EcgSynth {
    fn default() -> Self {
        EcgSynth {
            sampling_rate_hz: super::DEFAULT_SAMPLING_RATE_HZ,
            start_t_ms: 0.0,
            jitter_sd_ms: 10.0,
            noise_snr_db: None,
            baseline_wander_mv: 0.1,
            seed: 0,
        }
    }
}

struct Wave {
    offset_ms: f64,
    amplitude_mv: f64,
    width_ms: f64,
    scales: bool,
}

const WAVES: [Wave; 5] = [
    Wave { offset_ms: -160.0, amplitude_mv: 0.12, width_ms: 22.0, scales: true },
    Wave { offset_ms: -24.0, amplitude_mv: -0.12, width_ms: 7.0, scales: false },
    Wave { offset_ms: 0.0, amplitude_mv: 1.1, width_ms: 10.0, scales: false },
    Wave { offset_ms: 26.0, amplitude_mv: -0.22, width_ms: 8.0, scales: false },
    Wave { offset_ms: 260.0, amplitude_mv: 0.32, width_ms: 45.0, scales: true },
];

/// Shorthand: default generator with the given rate, noise and seed.
pub fn synth_ecg(
    sampling_rate_hz: f64,
    phases: &[SynthPhase],
    noise_snr_db: Option<f64>,
    seed: u64,
) -> Result<SynthEcg, EcgError> {
    EcgSynth {
        sampling_rate_hz,
        noise_snr_db,
        seed,
        ..EcgSynth::default()
    }
    .generate(phases)
}

impl EcgSynth {
    pub fn generate(&self, phases: &[SynthPhase]) -> Result<SynthEcg, EcgError> {
        let fs = self.sampling_rate_hz;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(EcgError::InvalidArgument(format!("sampling rate {fs}")));
        }
        if phases.is_empty() {
            return Err(EcgError::InvalidArgument("no phases".into()));
        }
        for p in phases {
            if !(p.duration_ms.is_finite() && p.duration_ms > 0.0) {
                return Err(EcgError::InvalidArgument(format!("duration {} ms", p.duration_ms)));
            }
            if !(p.bpm > 30.0 && p.bpm < 200.0) {
                return Err(EcgError::InvalidArgument(format!("rate {} bpm", p.bpm)));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let jitter = Normal::new(0.0, self.jitter_sd_ms.max(0.0))
            .map_err(|e| EcgError::InvalidArgument(e.to_string()))?;
        let total_ms: f64 = phases.iter().map(|p| p.duration_ms).sum();
        let n = (total_ms * fs / 1000.0).floor() as usize;

        let rate_at = |t: f64| {
            let mut end = 0.0;
            for p in phases {
                end += p.duration_ms;
                if t < end {
                    return p.bpm;
                }
            }
            phases.last().unwrap().bpm
        };

        // beat times in ms from record start, and the RR that follows each
        let mut beats: Vec<(f64, f64)> = Vec::new();
        let mut t = 0.5 * 60_000.0 / phases[0].bpm;
        while t < total_ms {
            let nominal = 60_000.0 / rate_at(t);
            let sd = self.jitter_sd_ms;
            let rr = nominal + jitter.sample(&mut rng).clamp(-3.0 * sd, 3.0 * sd);
            beats.push((t, rr));
            t += rr;
        }

        let mut signal = vec![0.0; n];
        let ms_per_sample = 1000.0 / fs;
        for &(beat, rr) in &beats {
            let scale = (rr / 1000.0).sqrt();
            for wave in &WAVES {
                let (offset, width) = if wave.scales {
                    (wave.offset_ms * scale, wave.width_ms * scale)
                } else {
                    (wave.offset_ms, wave.width_ms)
                };
                let centre = beat + offset;
                let lo = ((centre - 5.0 * width) / ms_per_sample).floor().max(0.0) as usize;
                let hi = (((centre + 5.0 * width) / ms_per_sample).ceil() as usize).min(n);
                for (i, v) in signal.iter_mut().enumerate().take(hi).skip(lo) {
                    let d = (i as f64 * ms_per_sample - centre) / width;
                    *v += wave.amplitude_mv * (-0.5 * d * d).exp();
                }
            }
        }
        if self.baseline_wander_mv > 0.0 {
            for (i, v) in signal.iter_mut().enumerate() {
                let t_s = i as f64 / fs;
                *v += 0.5 * self.baseline_wander_mv * (2.0 * std::f64::consts::PI * 0.25 * t_s).sin();
            }
        }

        if let Some(snr_db) = self.noise_snr_db {
            let power = signal.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
            let sd = (power / 10f64.powf(snr_db / 10.0)).sqrt();
            let noise = Normal::new(0.0, sd).map_err(|e| EcgError::InvalidArgument(e.to_string()))?;
            for v in signal.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }

        let r_peaks = beats
            .iter()
            .map(|&(beat, _)| (beat / ms_per_sample).round() as usize)
            .filter(|&i| i < n)
            .collect();
        Ok(SynthEcg {
            record: EcgRecord::new(fs, self.start_t_ms, signal)?,
            r_peaks,
        })
    }
}

/// One-to-one matching of detections against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeakMatch {
    pub true_positives: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
}

impl PeakMatch {
    pub fn sensitivity(&self) -> f64 {
        self.true_positives as f64 / (self.true_positives + self.false_negatives).max(1) as f64
    }

    pub fn positive_predictivity(&self) -> f64 {
        self.true_positives as f64 / (self.true_positives + self.false_positives).max(1) as f64
    }
}

/// Greedy in-order matching within `tolerance_ms`; both inputs sorted.
pub fn match_peaks(truth: &[usize], found: &[usize], sampling_rate_hz: f64, tolerance_ms: f64) -> PeakMatch {
    let tol = tolerance_ms * sampling_rate_hz / 1000.0;
    let (mut i, mut j, mut tp) = (0, 0, 0);
    while i < truth.len() && j < found.len() {
        let d = found[j] as f64 - truth[i] as f64;
        if d.abs() <= tol {
            tp += 1;
            i += 1;
            j += 1;
        } else if d < 0.0 {
            j += 1;
        } else {
            i += 1;
        }
    }
    PeakMatch {
        true_positives: tp,
        false_negatives: truth.len() - tp,
        false_positives: found.len() - tp,
    }
}
