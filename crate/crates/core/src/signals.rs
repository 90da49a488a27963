//! Chirp synthesis and the receive chain: white noise, wake-up window and
//! ADC quantization, plus the closed-form chirp autocorrelation envelope.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{round_index, sinc, triangle, Scalar};

/// Linear chirp `A cos(2 pi (f_start t + (f_end - f_start) t^2 / (2 tau)))` on `[0, tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec<T> {
    /// Frequency at `t = 0` (Hz).
    pub f_start: T,
    /// Frequency at `t = tau_tx` (Hz).
    pub f_end: T,
    /// Broadcast duration (s).
    pub tau_tx: T,
    pub amplitude: T,
    pub sample_rate: T,
}

impl<T: Scalar> ChirpSpec<T> {
    /// Descending 45 kHz to 25 kHz, 30 ms sweep sampled at 196 kHz.
    pub fn reference() -> Self {
        Self {
            f_start: T::lit(45_000.0),
            f_end: T::lit(25_000.0),
            tau_tx: T::lit(0.030),
            amplitude: T::one(),
            sample_rate: T::lit(196_000.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.f_start, self.f_end, self.tau_tx, self.amplitude, self.sample_rate]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("chirp parameters must be finite"));
        }
        if self.tau_tx <= T::zero() {
            return Err(Error::param("chirp duration must be positive"));
        }
        if self.amplitude <= T::zero() {
            return Err(Error::param("chirp amplitude must be positive"));
        }
        if self.f_start < T::zero() || self.f_end < T::zero() {
            return Err(Error::param("chirp frequencies must be non-negative"));
        }
        if self.bandwidth() <= T::zero() {
            return Err(Error::param("chirp bandwidth must be non-zero"));
        }
        if self.sample_rate <= T::lit(2.0) * self.f_start.max(self.f_end) {
            return Err(Error::param(format!(
                "sample rate {} Hz violates Nyquist for a {} Hz chirp",
                self.sample_rate,
                self.f_start.max(self.f_end)
            )));
        }
        Ok(())
    }

    /// Nominal swept bandwidth `|f_end - f_start|`.
    pub fn bandwidth(&self) -> T {
        (self.f_end - self.f_start).abs()
    }

    /// Signed sweep rate in Hz/s (negative for descending chirps).
    pub fn sweep_rate(&self) -> T {
        (self.f_end - self.f_start) / self.tau_tx
    }

    /// Number of samples in the broadcast, `round(tau_tx f_s)`.
    pub fn len_samples(&self) -> usize {
        round_index(self.tau_tx * self.sample_rate).max(0) as usize
    }

    fn phase(&self, t: T) -> T {
        let two = T::lit(2.0);
        two * T::PI() * (self.f_start * t + self.sweep_rate() / two * t * t)
    }
}

/// Uniformly sampled real signal whose first sample sits at absolute time `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform<T> {
    samples: Vec<T>,
    sample_rate: T,
    t0: T,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: T, t0: T) -> Result<Self> {
        if !(sample_rate > T::zero()) || !sample_rate.is_finite() {
            return Err(Error::param("sample rate must be positive and finite"));
        }
        if !t0.is_finite() {
            return Err(Error::param("start time must be finite"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::param(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate, t0 })
    }

    pub fn zeros(len: usize, sample_rate: T, t0: T) -> Result<Self> {
        Self::new(vec![T::zero(); len], sample_rate, t0)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> T {
        self.sample_rate
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> T {
        T::from_usize_lossy(self.len()) / self.sample_rate
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> T {
        self.samples.iter().map(|&s| s * s).sum()
    }

    /// Mean squared sample value.
    pub fn mean_power(&self) -> T {
        if self.is_empty() {
            T::zero()
        } else {
            self.energy() / T::from_usize_lossy(self.len())
        }
    }

    pub fn peak_abs(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.abs()))
    }

    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|s| s.is_zero())
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn with_samples(&self, samples: Vec<T>) -> Self {
        Self { samples, sample_rate: self.sample_rate, t0: self.t0 }
    }
}

/// White Gaussian noise at a given SNR. `snr_db = +inf` disables noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec<T> {
    pub snr_db: T,
    pub seed: u64,
}

impl<T: Scalar> NoiseSpec<T> {
    pub fn noiseless() -> Self {
        Self { snr_db: T::infinity(), seed: 0 }
    }

    pub fn new(snr_db: T, seed: u64) -> Self {
        Self { snr_db, seed }
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == T::infinity()
    }
}

/// Samples the chirp described by `spec` starting at `t0 = 0`.
pub fn generate_chirp<T: Scalar>(spec: &ChirpSpec<T>) -> Result<Waveform<T>> {
    spec.validate()?;
    let fs = spec.sample_rate;
    let samples = (0..spec.len_samples())
        .map(|n| {
            let t = T::from_usize_lossy(n) / fs;
            spec.amplitude * spec.phase(t).cos()
        })
        .collect();
    Waveform::new(samples, fs, T::zero())
}

/// Instantaneous frequency of the chirp at time `t` within the broadcast.
pub fn instantaneous_frequency<T: Scalar>(spec: &ChirpSpec<T>, t: T) -> Result<T> {
    if !(t >= T::zero() && t <= spec.tau_tx) {
        return Err(Error::Domain(format!(
            "t = {t} s lies outside the broadcast [0, {}] s",
            spec.tau_tx
        )));
    }
    Ok(spec.f_start + (spec.f_end - spec.f_start) * t / spec.tau_tx)
}

/// Adds zero-mean white Gaussian noise whose variance is set from the mean
/// power of `w` and the requested SNR. The noise sequence depends only on the
/// seed and the waveform length.
pub fn add_white_noise<T: Scalar>(w: &Waveform<T>, noise: &NoiseSpec<T>) -> Result<Waveform<T>> {
    if w.is_empty() {
        return Err(Error::param("cannot add noise to an empty waveform"));
    }
    if noise.is_noiseless() {
        return Ok(w.clone());
    }
    if !noise.snr_db.is_finite() {
        return Err(Error::param(format!("unsupported SNR {} dB", noise.snr_db)));
    }
    let power = w.mean_power();
    if power <= T::zero() {
        return Err(Error::Domain(
            "signal power is zero; a finite SNR is undefined".into(),
        ));
    }
    let sigma = (power / T::lit(10.0).powf(noise.snr_db / T::lit(10.0))).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let samples = w
        .samples()
        .iter()
        .map(|&s| {
            let z: f64 = StandardNormal.sample(&mut rng);
            s + sigma * T::lit(z)
        })
        .collect();
    Ok(w.with_samples(samples))
}

/// Returns the part of `w` on `[start, start + duration)`, zero-padded where
/// `w` has no samples.
pub fn extract_window<T: Scalar>(w: &Waveform<T>, start: T, duration: T) -> Result<Waveform<T>> {
    if !(duration > T::zero()) {
        return Err(Error::param("window duration must be positive"));
    }
    let fs = w.sample_rate();
    let offset = round_index((start - w.t0()) * fs);
    let len = round_index(duration * fs).max(0) as usize;
    let src = w.samples();
    let samples = (0..len as i64)
        .map(|j| {
            let n = offset + j;
            if n >= 0 && (n as usize) < src.len() {
                src[n as usize]
            } else {
                T::zero()
            }
        })
        .collect();
    Waveform::new(samples, fs, start)
}

/// Uniform mid-tread quantizer with `2^bits` levels spanning `[-full_scale, full_scale)`.
pub fn quantize<T: Scalar>(w: &Waveform<T>, bits: u32, full_scale: T) -> Result<Waveform<T>> {
    if !(2..=24).contains(&bits) {
        return Err(Error::param(format!("bits must lie in [2, 24], got {bits}")));
    }
    if !(full_scale > T::zero()) || !full_scale.is_finite() {
        return Err(Error::param("full scale must be positive and finite"));
    }
    let half_levels = T::from_u32(1u32 << (bits - 1)).expect("level count");
    let step = full_scale / half_levels;
    let lo = -half_levels;
    let hi = half_levels - T::one();
    let samples = w
        .samples()
        .iter()
        .map(|&s| {
            let clamped = s.max(-full_scale).min(full_scale);
            (clamped / step).round().max(lo).min(hi) * step
        })
        .collect();
    Ok(w.with_samples(samples))
}

/// Quantization step `2 full_scale / 2^bits`.
pub fn quantization_step<T: Scalar>(bits: u32, full_scale: T) -> T {
    T::lit(2.0) * full_scale / T::lit(2f64.powi(bits as i32))
}

/// Closed-form magnitude of the chirp autocorrelation at lag `t` for a pulse of
/// duration `window`: `|A^2 tau tri(t/tau) sinc(df_w t tri(t/tau))|`, where
/// `df_w` is the bandwidth swept within the window.
pub fn analytic_autocorrelation<T: Scalar>(spec: &ChirpSpec<T>, t: T, window: T) -> T {
    let tri = triangle(t / window);
    let swept = spec.sweep_rate().abs() * window;
    (spec.amplitude * spec.amplitude * window * tri * sinc(swept * t * tri)).abs()
}

/// Analytic signal `x + i H{x}` computed with a single FFT round trip.
pub fn analytic_signal<T: Scalar>(samples: &[T]) -> Vec<Complex<T>> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<T>::new();
    let mut buf: Vec<Complex<T>> = samples.iter().map(|&s| Complex::new(s, T::zero())).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let two = T::lit(2.0);
    // Keep DC (and Nyquist for even n), double positive bins, zero negative bins.
    let positive_end = n.div_ceil(2);
    for (k, bin) in buf.iter_mut().enumerate() {
        if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            continue;
        }
        if k < positive_end {
            *bin = *bin * two;
        } else {
            *bin = Complex::new(T::zero(), T::zero());
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = T::one() / T::from_usize_lossy(n);
    buf.into_iter().map(|c| c * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_chirp() -> ChirpSpec<f64> {
        ChirpSpec::reference()
    }

    #[test]
    fn chirp_length_and_first_sample() {
        let w = generate_chirp(&reference_chirp()).unwrap();
        assert_eq!(w.len(), 5880);
        assert_eq!(w.samples()[0], 1.0);
        assert!(w.samples().iter().all(|s| s.abs() <= 1.0));
        let snippet = extract_window(&w, 0.029, 0.001).unwrap();
        assert_eq!(snippet.len(), 196);
    }

    #[test]
    fn chirp_rejects_invalid_specs() {
        let mut s = reference_chirp();
        s.sample_rate = 80_000.0;
        assert!(matches!(generate_chirp(&s), Err(Error::Parameter(_))));
        let mut s = reference_chirp();
        s.f_end = s.f_start;
        assert!(generate_chirp(&s).is_err());
        let mut s = reference_chirp();
        s.tau_tx = 0.0;
        assert!(generate_chirp(&s).is_err());
        let mut s = reference_chirp();
        s.amplitude = -1.0;
        assert!(generate_chirp(&s).is_err());
    }

    #[test]
    fn instantaneous_frequency_endpoints() {
        let s = reference_chirp();
        assert_eq!(instantaneous_frequency(&s, 0.0).unwrap(), 45_000.0);
        assert_relative_eq!(instantaneous_frequency(&s, 0.030).unwrap(), 25_000.0);
        assert_relative_eq!(instantaneous_frequency(&s, 0.015).unwrap(), 35_000.0);
        assert!(matches!(instantaneous_frequency(&s, 0.031), Err(Error::Domain(_))));
        assert!(instantaneous_frequency(&s, -1e-6).is_err());
    }

    #[test]
    fn phase_derivative_tracks_instantaneous_frequency() {
        let s = reference_chirp();
        let h = 1e-7;
        for k in 1..30 {
            let t = k as f64 * 1e-3;
            let f = (s.phase(t + h) - s.phase(t - h)) / (2.0 * h) / (2.0 * std::f64::consts::PI);
            let expected = instantaneous_frequency(&s, t).unwrap();
            assert!((f - expected).abs() < 1.0, "t={t}: {f} vs {expected}");
        }
    }

    #[test]
    fn noiseless_sentinel_is_identity() {
        let w = generate_chirp(&reference_chirp()).unwrap();
        let out = add_white_noise(&w, &NoiseSpec::noiseless()).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn noise_power_matches_snr() {
        let n = 200_000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = Waveform::new(samples, 196_000.0, 0.0).unwrap();
        let noisy = add_white_noise(&w, &NoiseSpec::new(0.0, 7)).unwrap();
        let noise_power: f64 = noisy
            .samples()
            .iter()
            .zip(w.samples())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n as f64;
        let ratio = noise_power / w.mean_power();
        assert!((0.95..=1.05).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn noise_is_seeded_and_content_independent() {
        let a = Waveform::new(vec![1.0, -1.0, 1.0, -1.0], 10.0, 0.0).unwrap();
        let b = Waveform::new(vec![0.5, 0.5, -0.5, -0.5], 10.0, 0.0).unwrap();
        let spec = NoiseSpec::new(3.0, 42);
        let na = add_white_noise(&a, &spec).unwrap();
        assert_eq!(na, add_white_noise(&a, &spec).unwrap());
        let nb = add_white_noise(&b, &spec).unwrap();
        // Both signals have unit/quarter power; normalise by sigma to compare sequences.
        let sa = (a.mean_power() / 10f64.powf(0.3)).sqrt();
        let sb = (b.mean_power() / 10f64.powf(0.3)).sqrt();
        for i in 0..4 {
            let za = (na.samples()[i] - a.samples()[i]) / sa;
            let zb = (nb.samples()[i] - b.samples()[i]) / sb;
            assert_relative_eq!(za, zb, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_power_with_finite_snr_is_domain_error() {
        let w = Waveform::zeros(16, 10.0, 0.0).unwrap();
        assert!(matches!(
            add_white_noise(&w, &NoiseSpec::new(10.0, 1)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn window_cases() {
        let w = generate_chirp(&reference_chirp()).unwrap();
        let tail = extract_window(&w, 0.029, 0.001).unwrap();
        assert_eq!(tail.samples(), &w.samples()[5684..5880]);
        assert_eq!(tail.t0(), 0.029);

        let silent = extract_window(&w, 0.040, 0.001).unwrap();
        assert!(silent.is_silent());

        let full = extract_window(&w, 0.0, w.duration()).unwrap();
        assert_eq!(full.samples(), w.samples());

        let straddle = extract_window(&w, -0.0005, 0.001).unwrap();
        assert!(straddle.samples()[..98].iter().all(|s| *s == 0.0));
        assert_eq!(&straddle.samples()[98..], &w.samples()[..98]);
        assert!(extract_window(&w, 0.0, 0.0).is_err());
    }

    #[test]
    fn quantizer_step_and_clamp() {
        assert_relative_eq!(quantization_step(12, 1.0f64), 2.0 / 4096.0);
        let w = Waveform::new(vec![1.5f64, -1.5, 0.1234, 0.0], 10.0, 0.0).unwrap();
        let q = quantize(&w, 12, 1.0).unwrap();
        assert!(q.samples()[0] <= 1.0);
        assert!(q.samples()[1] >= -1.0);
        assert!((q.samples()[2] - 0.1234).abs() <= 1.0 / 4096.0);
        assert_eq!(q.samples()[3], 0.0);
        assert!(quantize(&w, 1, 1.0).is_err());
        assert!(quantize(&w, 25, 1.0).is_err());
        assert!(quantize(&w, 12, 0.0).is_err());
    }

    #[test]
    fn analytic_autocorrelation_closed_form_points() {
        let s = reference_chirp();
        assert_relative_eq!(analytic_autocorrelation(&s, 0.0, 0.030), 0.030);
        assert_eq!(analytic_autocorrelation(&s, 0.030, 0.030), 0.0);
        assert_eq!(analytic_autocorrelation(&s, -0.05, 0.030), 0.0);
    }

    #[test]
    fn analytic_signal_of_cosine_is_complex_exponential() {
        let n = 256;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 8.0 * i as f64 / n as f64).cos())
            .collect();
        let a = analytic_signal(&x);
        for (i, c) in a.iter().enumerate() {
            let phase = 2.0 * std::f64::consts::PI * 8.0 * i as f64 / n as f64;
            assert!((c.re - phase.cos()).abs() < 1e-12);
            assert!((c.im - phase.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_over_f32() {
        let s = ChirpSpec::<f32>::reference();
        let w = generate_chirp(&s).unwrap();
        assert_eq!(w.len(), 5880);
        assert!(w.samples().iter().all(|x| x.abs() <= 1.0));
    }
}
