use std::f64::consts::PI;

use super::{EcgError, EcgRecord};

/// Butterworth order of each band edge.
pub const FILTER_ORDER: usize = 4;

/// Shortest record the forward-backward filter accepts.
pub const MIN_FILTER_SECONDS: f64 = 2.0;

/// Second-order section, `a0` normalised to 1, direct form II transposed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// DC gain `H(1)`.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// |H(e^{jw})| at `freq_hz`.
    fn magnitude(&self, freq_hz: f64, sampling_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sampling_rate_hz;
        let poly = |c0: f64, c1: f64, c2: f64| {
            let re = c0 + c1 * w.cos() + c2 * (2.0 * w).cos();
            let im = -(c1 * w.sin() + c2 * (2.0 * w).sin());
            re.hypot(im)
        };
        poly(self.b[0], self.b[1], self.b[2]) / poly(1.0, self.a[0], self.a[1])
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    sections: Vec<Biquad>,
}

#[derive(Clone, Copy)]
enum Edge {
    Low,
    High,
}

impl Sos {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, sampling_rate_hz: f64) -> Sos {
        Sos::butterworth(Edge::Low, order, cutoff_hz, sampling_rate_hz)
    }

    pub fn butterworth_highpass(order: usize, cutoff_hz: f64, sampling_rate_hz: f64) -> Sos {
        Sos::butterworth(Edge::High, order, cutoff_hz, sampling_rate_hz)
    }

    /// High-pass at `low_hz` cascaded with low-pass at `high_hz`.
    pub fn butterworth_bandpass(order: usize, low_hz: f64, high_hz: f64, sampling_rate_hz: f64) -> Sos {
        let mut sos = Sos::butterworth_highpass(order, low_hz, sampling_rate_hz);
        sos.sections
            .extend(Sos::butterworth_lowpass(order, high_hz, sampling_rate_hz).sections);
        sos
    }

    // Bilinear transform of the analog prototype with the cutoff pre-warped.
    fn butterworth(edge: Edge, order: usize, cutoff_hz: f64, sampling_rate_hz: f64) -> Sos {
        let k = (PI * cutoff_hz / sampling_rate_hz).tan();
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            let q = 1.0 / (2.0 * ((2 * i + 1) as f64 * PI / (2 * order) as f64).sin());
            let norm = 1.0 / (1.0 + k / q + k * k);
            let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm];
            let b = match edge {
                Edge::Low => {
                    let b0 = k * k * norm;
                    [b0, 2.0 * b0, b0]
                }
                Edge::High => [norm, -2.0 * norm, norm],
            };
            sections.push(Biquad { b, a });
        }
        if order % 2 == 1 {
            let norm = 1.0 / (1.0 + k);
            let b = match edge {
                Edge::Low => [k * norm, k * norm, 0.0],
                Edge::High => [norm, -norm, 0.0],
            };
            sections.push(Biquad {
                b,
                a: [(k - 1.0) * norm, 0.0],
            });
        }
        Sos { sections }
    }

    /// Single-pass magnitude response.
    pub fn magnitude(&self, freq_hz: f64, sampling_rate_hz: f64) -> f64 {
        self.sections
            .iter()
            .map(|s| s.magnitude(freq_hz, sampling_rate_hz))
            .product()
    }

    /// Per-section state that holds a unit constant input in steady state.
    fn steady_state(&self) -> Vec<[f64; 2]> {
        let mut input = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let output = s.dc_gain() * input;
                let z2 = s.b[2] * input - s.a[1] * output;
                let z1 = s.b[1] * input - s.a[0] * output + z2;
                input = output;
                [z1, z2]
            })
            .collect()
    }

    /// Causal filtering starting from `state`.
    fn run(&self, signal: &mut [f64], mut state: Vec<[f64; 2]>) {
        for x in signal.iter_mut() {
            let mut v = *x;
            for (s, z) in self.sections.iter().zip(state.iter_mut()) {
                let y = s.b[0] * v + z[0];
                z[0] = s.b[1] * v - s.a[0] * y + z[1];
                z[1] = s.b[2] * v - s.a[1] * y;
                v = y;
            }
            *x = v;
        }
    }

    /// Causal filtering from rest.
    pub fn filter(&self, signal: &[f64]) -> Vec<f64> {
        let mut out = signal.to_vec();
        self.run(&mut out, vec![[0.0; 2]; self.sections.len()]);
        out
    }

    /// Samples of odd reflection added at each end before filtering.
    pub fn pad_len(&self) -> usize {
        let first_order = self
            .sections
            .iter()
            .filter(|s| s.b[2] == 0.0 && s.a[1] == 0.0)
            .count();
        3 * (2 * self.sections.len() + 1 - first_order)
    }

    /// Zero-phase forward-backward filtering with odd-reflection padding and
    /// steady-state initial conditions. Output length equals input length.
    pub fn filtfilt(&self, signal: &[f64]) -> Vec<f64> {
        let n = signal.len();
        let pad = self.pad_len().min(n.saturating_sub(1));
        if n == 0 {
            return Vec::new();
        }
        let first = signal[0];
        let last = signal[n - 1];
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
        ext.extend_from_slice(signal);
        ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

        let unit = self.steady_state();
        let scaled = |x0: f64| unit.iter().map(|z| [z[0] * x0, z[1] * x0]).collect::<Vec<_>>();

        let x0 = ext[0];
        self.run(&mut ext, scaled(x0));
        ext.reverse();
        let y0 = ext[0];
        self.run(&mut ext, scaled(y0));
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Zero-phase Butterworth band-pass of a whole record.
pub fn bandpass_filter(record: &EcgRecord, low_hz: f64, high_hz: f64) -> Result<EcgRecord, EcgError> {
    let fs = record.sampling_rate_hz();
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(EcgError::InvalidBand {
            low_hz,
            high_hz,
            sampling_rate_hz: fs,
        });
    }
    if record.duration_s() < MIN_FILTER_SECONDS {
        return Err(EcgError::TooShort {
            actual_s: record.duration_s(),
            required_s: MIN_FILTER_SECONDS,
        });
    }
    let sos = Sos::butterworth_bandpass(FILTER_ORDER, low_hz, high_hz, fs);
    Ok(record.with_samples(sos.filtfilt(record.samples())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FS: f64 = 250.0;

    // Analog Butterworth magnitude after pre-warping; independent of the
    // section coefficients.
    fn prototype_gain(order: i32, f: f64, fc: f64, high: bool) -> f64 {
        let w = (PI * f / FS).tan();
        let wc = (PI * fc / FS).tan();
        let r = if high { wc / w } else { w / wc };
        1.0 / (1.0 + r.powi(2 * order)).sqrt()
    }

    fn sine(freq: f64, seconds: f64) -> Vec<f64> {
        (0..(seconds * FS) as usize)
            .map(|i| (2.0 * PI * freq * i as f64 / FS).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn sections_match_prototype_response() {
        let sos = Sos::butterworth_bandpass(4, 0.5, 40.0, FS);
        for f in [1.0, 5.0, 10.0, 30.0, 40.0, 50.0, 80.0] {
            let expected = prototype_gain(4, f, 0.5, true) * prototype_gain(4, f, 40.0, false);
            assert!((sos.magnitude(f, FS) - expected).abs() < 1e-9, "at {f} Hz");
        }
        let odd = Sos::butterworth_lowpass(3, 20.0, FS);
        assert_eq!(odd.sections().len(), 2);
        assert!((odd.magnitude(30.0, FS) - prototype_gain(3, 30.0, 20.0, false)).abs() < 1e-9);
    }

    #[test]
    fn fifty_hz_attenuated_twenty_db() {
        let r = EcgRecord::new(FS, 0.0, sine(50.0, 20.0)).unwrap();
        let out = bandpass_filter(&r, 0.5, 40.0).unwrap();
        let mid = &out.samples()[1000..4000];
        let gain_db = 20.0 * (rms(mid) / rms(&r.samples()[1000..4000])).log10();
        // forward-backward squares the single-pass response
        let designed_db =
            40.0 * (prototype_gain(4, 50.0, 0.5, true) * prototype_gain(4, 50.0, 40.0, false)).log10();
        assert!(designed_db <= -20.0, "designed {designed_db} dB");
        assert!(gain_db <= -20.0, "measured {gain_db} dB");
        assert!((gain_db - designed_db).abs() < 0.1);
    }

    #[test]
    fn ten_hz_passes_within_three_db() {
        let r = EcgRecord::new(FS, 0.0, sine(10.0, 20.0)).unwrap();
        let out = bandpass_filter(&r, 0.5, 40.0).unwrap();
        let gain_db = 20.0 * (rms(&out.samples()[1000..4000]) / rms(&r.samples()[1000..4000])).log10();
        assert!(gain_db.abs() < 3.0, "{gain_db} dB");
    }

    #[test]
    fn dc_is_removed() {
        let r = EcgRecord::new(FS, 0.0, vec![3.7; 2500]).unwrap();
        let out = bandpass_filter(&r, 0.5, 40.0).unwrap();
        assert_eq!(out.len(), r.len());
        let mean = out.samples().iter().sum::<f64>() / out.len() as f64;
        assert!(mean.abs() < 1e-6, "mean {mean}");
    }

    #[test]
    fn zero_phase() {
        // symmetric pulse stays centred
        let mut x = vec![0.0; 2500];
        for (i, v) in x.iter_mut().enumerate() {
            let d = (i as f64 - 1250.0) / 3.0;
            *v = (-0.5 * d * d).exp();
        }
        let r = EcgRecord::new(FS, 0.0, x).unwrap();
        let out = bandpass_filter(&r, 5.0, 15.0).unwrap();
        let argmax = out
            .samples()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 1250);
    }

    #[test]
    fn band_and_length_errors() {
        let r = EcgRecord::new(FS, 0.0, vec![0.0; 2500]).unwrap();
        assert!(matches!(bandpass_filter(&r, 0.5, 130.0), Err(EcgError::InvalidBand { .. })));
        assert!(matches!(bandpass_filter(&r, 40.0, 0.5), Err(EcgError::InvalidBand { .. })));
        assert!(matches!(bandpass_filter(&r, 0.0, 40.0), Err(EcgError::InvalidBand { .. })));
        let short = EcgRecord::new(FS, 0.0, vec![0.0; 499]).unwrap();
        assert!(matches!(bandpass_filter(&short, 0.5, 40.0), Err(EcgError::TooShort { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn filtering_is_linear(
            xs in prop::collection::vec(-5.0f64..5.0, 600),
            ys in prop::collection::vec(-5.0f64..5.0, 600),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let sos = Sos::butterworth_bandpass(4, 0.5, 40.0, FS);
            let combo: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let lhs = sos.filtfilt(&combo);
            let fx = sos.filtfilt(&xs);
            let fy = sos.filtfilt(&ys);
            let scale = lhs.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for i in 0..lhs.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-6 * scale);
            }
        }
    }
}
