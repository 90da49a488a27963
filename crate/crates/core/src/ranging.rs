//! Pulse compression of a wake-up snippet against the broadcast template and
//! the timing geometry that turns a correlation lag into a distance.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::{analytic_signal, ChirpSpec, Waveform};

/// Magnitude of the valid-overlap cross-correlation. Index `i` is the template
/// offset (in samples) the snippet is compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries<T> {
    pub values: Vec<T>,
    pub sample_rate: T,
}

impl<T: Scalar> CorrelationSeries<T> {
    pub fn new(values: Vec<T>, sample_rate: T) -> Result<Self> {
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::param("correlation magnitudes must be finite and non-negative"));
        }
        Ok(Self { values, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The same series indexed by arrival order: index `j` is template offset
    /// `len - 1 - j`, so earlier arrivals (shorter paths) come first. For a
    /// late wake-up `j` equals the propagation delay in samples.
    pub fn arrival_ordered(&self) -> Self {
        Self {
            values: self.values.iter().rev().copied().collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn max_value(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v))
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// How the snippet is compared with the template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    /// `|sum s[n] t[i+n]|`, the magnitude of the real correlation.
    Coherent,
    /// `|sum s[n] conj(a[i+n])|` with `a` the analytic template: the smooth
    /// envelope of the real correlation, free of carrier ripple.
    Envelope,
    /// Peak selection on the envelope, then the coherent maximum inside the
    /// selected envelope lobe. Selection sees arrivals rather than carrier
    /// cycles while the final lag keeps carrier-level precision.
    #[default]
    Hybrid,
}

/// Broadcast template with its analytic counterpart precomputed.
#[derive(Debug, Clone)]
pub struct Template<T> {
    waveform: Waveform<T>,
    analytic: Vec<Complex<T>>,
}

impl<T: Scalar> Template<T> {
    pub fn new(waveform: Waveform<T>) -> Self {
        let analytic = analytic_signal(waveform.samples());
        Self { waveform, analytic }
    }

    pub fn from_chirp(spec: &ChirpSpec<T>) -> Result<Self> {
        Ok(Self::new(crate::signals::generate_chirp(spec)?))
    }

    pub fn waveform(&self) -> &Waveform<T> {
        &self.waveform
    }

    pub fn len(&self) -> usize {
        self.waveform.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveform.is_empty()
    }

    /// Correlates `snippet` against this template. [`Detector::Hybrid`] yields
    /// the envelope, which is the series its peak selection runs on.
    pub fn compress(&self, snippet: &Waveform<T>, detector: Detector) -> Result<CorrelationSeries<T>> {
        match detector {
            Detector::Coherent => pulse_compress(snippet, &self.waveform),
            Detector::Envelope | Detector::Hybrid => Ok(self.compress_pair(snippet)?.1),
        }
    }

    /// Coherent magnitude and envelope from a single complex correlation: the
    /// real part of `sum s[n] conj(a[i+n])` is the real correlation.
    pub fn compress_pair(
        &self,
        snippet: &Waveform<T>,
    ) -> Result<(CorrelationSeries<T>, CorrelationSeries<T>)> {
        check_shapes(snippet, &self.waveform)?;
        let s = snippet.samples();
        let lags = self.len() - s.len() + 1;
        let zero = Complex::new(T::zero(), T::zero());
        let (coherent, envelope): (Vec<T>, Vec<T>) = (0..lags)
            .map(|i| {
                let acc = s
                    .iter()
                    .zip(&self.analytic[i..i + s.len()])
                    .fold(zero, |acc, (&x, a)| acc + a.conj() * x);
                (acc.re.abs(), acc.norm())
            })
            .unzip();
        let fs = snippet.sample_rate();
        Ok((CorrelationSeries::new(coherent, fs)?, CorrelationSeries::new(envelope, fs)?))
    }
}

fn check_shapes<T: Scalar>(snippet: &Waveform<T>, template: &Waveform<T>) -> Result<()> {
    let (a, b) = (snippet.sample_rate(), template.sample_rate());
    if (a - b).abs() > T::lit(1e-9) * a.abs().max(b.abs()) {
        return Err(Error::RateMismatch { expected: b.to_f64_lossy(), found: a.to_f64_lossy() });
    }
    if snippet.is_empty() {
        return Err(Error::param("snippet is empty"));
    }
    if snippet.len() > template.len() {
        return Err(Error::param(format!(
            "snippet ({} samples) is longer than the template ({} samples)",
            snippet.len(),
            template.len()
        )));
    }
    Ok(())
}

/// `values[i] = |sum_n snippet[n] template[i + n]|` over every offset where the
/// snippet lies fully inside the template. Computed directly.
pub fn pulse_compress<T: Scalar>(
    snippet: &Waveform<T>,
    template: &Waveform<T>,
) -> Result<CorrelationSeries<T>> {
    check_shapes(snippet, template)?;
    let s = snippet.samples();
    let t = template.samples();
    let values = (0..=t.len() - s.len())
        .map(|i| {
            s.iter()
                .zip(&t[i..i + s.len()])
                .map(|(&a, &b)| a * b)
                .sum::<T>()
                .abs()
        })
        .collect();
    CorrelationSeries::new(values, snippet.sample_rate())
}

/// Transform-domain route to [`pulse_compress`]; agrees with the direct sum to
/// rounding error.
pub fn pulse_compress_fft<T: Scalar>(
    snippet: &Waveform<T>,
    template: &Waveform<T>,
) -> Result<CorrelationSeries<T>> {
    check_shapes(snippet, template)?;
    let s = snippet.samples();
    let t = template.samples();
    let n = (s.len() + t.len()).next_power_of_two();
    let zero = Complex::new(T::zero(), T::zero());
    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex<T>> = t.iter().map(|&v| Complex::new(v, T::zero())).collect();
    a.resize(n, zero);
    let mut b: Vec<Complex<T>> = s.iter().map(|&v| Complex::new(v, T::zero())).collect();
    b.resize(n, zero);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x = *x * y.conj();
    }
    inv.process(&mut a);
    let scale = T::one() / T::from_usize_lossy(n);
    let values = a[..=t.len() - s.len()].iter().map(|c| (c.re * scale).abs()).collect();
    CorrelationSeries::new(values, snippet.sample_rate())
}

/// Broadcast and wake-up timing. `wake_offset` is the wake-up instant measured
/// from the broadcast start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSpec<T> {
    pub tau_tx: T,
    pub tau_rx: T,
    pub wake_offset: T,
    pub speed_of_sound: T,
    pub sample_rate: T,
}

impl<T: Scalar> TimingSpec<T> {
    /// Wake-up as late as possible: `wake_offset = tau_tx - tau_rx`.
    pub fn late_wake(tau_tx: T, tau_rx: T, speed_of_sound: T, sample_rate: T) -> Self {
        Self { tau_tx, tau_rx, wake_offset: tau_tx - tau_rx, speed_of_sound, sample_rate }
    }

    /// 30 ms broadcast, 1 ms wake-up at 29 ms, 340 m/s, 196 kHz.
    pub fn reference() -> Self {
        Self::late_wake(T::lit(0.030), T::lit(0.001), T::lit(340.0), T::lit(196_000.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_rx > T::zero() && self.tau_rx <= self.tau_tx) {
            return Err(Error::param("timing requires 0 < tau_rx <= tau_tx"));
        }
        if !(self.wake_offset >= T::zero()) {
            return Err(Error::param("wake offset must be non-negative"));
        }
        if !(self.speed_of_sound > T::zero()) || !(self.sample_rate > T::zero()) {
            return Err(Error::param("speed of sound and sample rate must be positive"));
        }
        Ok(())
    }

    /// Distance sound travels during the whole broadcast.
    pub fn broadcast_span(&self) -> T {
        self.speed_of_sound * self.tau_tx
    }
}

/// Converts a template offset into a distance: `d = c (wake_offset - lag / f_s)`.
pub fn lag_to_distance<T: Scalar>(lag: i64, timing: &TimingSpec<T>) -> Result<T> {
    if lag < 0 {
        return Err(Error::param(format!("lag must be non-negative, got {lag}")));
    }
    let d = raw_lag_distance(lag, timing);
    let slack = T::lit(1e-9) * timing.speed_of_sound / timing.sample_rate;
    if d < -slack {
        return Err(Error::NegativeDistance { lag, distance: d.to_f64_lossy() });
    }
    Ok(d.max(T::zero()))
}

/// Unchecked form of [`lag_to_distance`]; may be negative.
pub fn raw_lag_distance<T: Scalar>(lag: i64, timing: &TimingSpec<T>) -> T {
    let lag_s = T::from_i64(lag).expect("lag fits scalar") / timing.sample_rate;
    timing.speed_of_sound * (timing.wake_offset - lag_s)
}

/// Fractional template offset heard at wake-up by a node at distance `d`.
pub fn distance_to_lag<T: Scalar>(distance: T, timing: &TimingSpec<T>) -> T {
    (timing.wake_offset - distance / timing.speed_of_sound) * timing.sample_rate
}

/// Wake-up placement relative to the broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WakeScenario {
    /// Wake-up window ends with the broadcast.
    LateWake,
    /// Wake-up during the broadcast, before its final `tau_rx`.
    EarlyWake,
    /// Wake-up window extends past the end of the broadcast.
    PostBroadcastWake,
}

impl WakeScenario {
    pub fn classify<T: Scalar>(timing: &TimingSpec<T>) -> Self {
        let late = timing.tau_tx - timing.tau_rx;
        let tol = T::lit(1e-12) * timing.tau_tx.max(T::one());
        if (timing.wake_offset - late).abs() <= tol {
            WakeScenario::LateWake
        } else if timing.wake_offset < late {
            WakeScenario::EarlyWake
        } else {
            WakeScenario::PostBroadcastWake
        }
    }
}

/// Distance band `(d_min, d_max)` in which nodes hear the direct path.
pub fn coverage<T: Scalar>(timing: &TimingSpec<T>, scenario: WakeScenario) -> (T, T) {
    let c = timing.speed_of_sound;
    let late = timing.tau_tx - timing.tau_rx;
    match scenario {
        WakeScenario::LateWake => (T::zero(), c * late),
        WakeScenario::EarlyWake => (T::zero(), c * timing.wake_offset),
        WakeScenario::PostBroadcastWake => {
            (c * (timing.wake_offset - late), c * timing.wake_offset)
        }
    }
}

/// Pulse compression ratio `tau_rx^2 df_tx / tau_tx`.
pub fn compression_ratio<T: Scalar>(tau_rx: T, tau_tx: T, delta_f_tx: T) -> T {
    tau_rx * tau_rx * delta_f_tx / tau_tx
}

/// Bandwidth swept during the wake-up window, `tau_rx df_tx / tau_tx`.
pub fn received_bandwidth<T: Scalar>(tau_rx: T, tau_tx: T, delta_f_tx: T) -> T {
    tau_rx * delta_f_tx / tau_tx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{extract_window, generate_chirp};
    use approx::assert_relative_eq;

    fn chirp() -> Waveform<f64> {
        generate_chirp(&ChirpSpec::reference()).unwrap()
    }

    #[test]
    fn identical_inputs_give_energy() {
        let w = chirp();
        let c = pulse_compress(&w, &w).unwrap();
        assert_eq!(c.len(), 1);
        assert_relative_eq!(c.values[0], w.energy(), max_relative = 1e-12);
        let e = Template::new(w.clone()).compress(&w, Detector::Envelope).unwrap();
        assert_relative_eq!(e.values[0], w.energy(), max_relative = 1e-6);
    }

    #[test]
    fn matched_segment_peaks_at_its_offset() {
        let w = chirp();
        let template = Template::new(w.clone());
        for k in [0usize, 1000, 4788, 5684] {
            let seg = Waveform::new(w.samples()[k..k + 196].to_vec(), w.sample_rate(), 0.0).unwrap();
            for det in [Detector::Coherent, Detector::Envelope] {
                let c = template.compress(&seg, det).unwrap();
                assert_eq!(c.len(), 5880 - 196 + 1);
                let best = c
                    .values
                    .iter()
                    .enumerate()
                    .fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
                // The envelope peak is flat to within a couple of samples.
                let tol = if det == Detector::Envelope { 2 } else { 0 };
                assert!(best.0.abs_diff(k) <= tol, "{det:?} at {k}: {}", best.0);
            }
        }
    }

    #[test]
    fn one_millisecond_snippet_has_distinct_peak() {
        let w = chirp();
        let snippet = extract_window(&w, 0.020, 0.001).unwrap();
        let c = Template::new(w).compress(&snippet, Detector::Envelope).unwrap();
        let truth = 3920;
        let peak = c.values[truth];
        // Outside the main lobe (one received-bandwidth period) nothing comes close.
        let lobe = (196_000.0 / 666.7) as usize;
        let side = c
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| i.abs_diff(truth) > lobe)
            .fold(0.0f64, |m, (_, &v)| m.max(v));
        assert!(side < 0.3 * peak, "sidelobe {side} vs peak {peak}");
    }

    #[test]
    fn snippet_longer_than_template_rejected() {
        let w = chirp();
        let short = Waveform::new(w.samples()[..100].to_vec(), w.sample_rate(), 0.0).unwrap();
        assert!(matches!(pulse_compress(&w, &short), Err(Error::Parameter(_))));
        let other_rate = Waveform::new(vec![1.0; 10], 48_000.0, 0.0).unwrap();
        assert!(matches!(pulse_compress(&other_rate, &w), Err(Error::RateMismatch { .. })));
    }

    #[test]
    fn fft_route_matches_direct_route() {
        let w = chirp();
        let snippet = extract_window(&w, 0.0173, 0.001).unwrap();
        let direct = pulse_compress(&snippet, &w).unwrap();
        let fft = pulse_compress_fft(&snippet, &w).unwrap();
        let scale = direct.max_value();
        for (a, b) in direct.values.iter().zip(&fft.values) {
            assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn lag_distance_geometry() {
        let t = TimingSpec::<f64>::reference();
        assert_relative_eq!(lag_to_distance(5684, &t).unwrap(), 0.0, epsilon = 1e-9);
        let lag = distance_to_lag(1.553, &t);
        assert_relative_eq!(lag, 4788.741176, epsilon = 1e-5);
        let d = lag_to_distance(lag.round() as i64, &t).unwrap();
        assert_relative_eq!(d, 1.552_551_02, epsilon = 1e-6);
        assert!((d - 1.553).abs() <= 340.0 / 196_000.0 / 2.0);
        assert!(matches!(lag_to_distance(5685, &t), Err(Error::NegativeDistance { .. })));
        assert!(matches!(lag_to_distance(-1, &t), Err(Error::Parameter(_))));
    }

    #[test]
    fn coverage_scenarios() {
        let t = TimingSpec::<f64>::reference();
        assert_relative_eq!(t.broadcast_span(), 10.2, epsilon = 1e-12);
        assert_eq!(WakeScenario::classify(&t), WakeScenario::LateWake);
        let (lo, hi) = coverage(&t, WakeScenario::LateWake);
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, 9.86, epsilon = 1e-12);

        let early = TimingSpec { wake_offset: 0.010, ..t };
        assert_eq!(WakeScenario::classify(&early), WakeScenario::EarlyWake);
        assert_relative_eq!(coverage(&early, WakeScenario::EarlyWake).1, 3.4, epsilon = 1e-12);

        let post = TimingSpec { wake_offset: 0.031, ..t };
        assert_eq!(WakeScenario::classify(&post), WakeScenario::PostBroadcastWake);
        let (lo, hi) = coverage(&post, WakeScenario::PostBroadcastWake);
        assert_relative_eq!(lo, 0.68, epsilon = 1e-12);
        assert_relative_eq!(hi, 10.54, epsilon = 1e-12);
    }

    #[test]
    fn compression_ratio_values() {
        assert_relative_eq!(compression_ratio(0.030, 0.030, 20_000.0), 600.0, epsilon = 1e-9);
        assert_relative_eq!(compression_ratio(0.001, 0.030, 20_000.0), 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(received_bandwidth(0.001, 0.030, 20_000.0), 666.666_666_7, epsilon = 1e-6);
        assert_relative_eq!(
            compression_ratio(0.002, 0.030, 20_000.0) / compression_ratio(0.001, 0.030, 20_000.0),
            4.0,
            epsilon = 1e-12
        );
        // Only the sweep rate matters.
        assert_relative_eq!(
            compression_ratio(0.001, 0.060, 40_000.0),
            compression_ratio(0.001, 0.030, 20_000.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn timing_validation() {
        let mut t = TimingSpec::<f64>::reference();
        assert!(t.validate().is_ok());
        t.tau_rx = 0.05;
        assert!(t.validate().is_err());
        let t = TimingSpec { wake_offset: -0.001, ..TimingSpec::<f64>::reference() };
        assert!(t.validate().is_err());
    }
}
