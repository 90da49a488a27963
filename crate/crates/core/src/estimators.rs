//! Peak-selection rules that turn a correlation series into a single index.
//!
//! All selection functions treat the series index as arrival order: lower
//! indices are earlier arrivals. [`Ranger`] feeds them
//! [`CorrelationSeries::arrival_ordered`] views so that "first peak" means the
//! shortest propagation path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranging::{raw_lag_distance, CorrelationSeries, Detector, Template, TimingSpec};
use crate::scalar::Scalar;
use crate::signals::Waveform;

/// Scale the correlation is normalized to before prominence thresholding.
pub const PROMINENCE_SCALE: f64 = 100.0;

/// Default peak prominence factor.
pub const DEFAULT_PPF: f64 = 65.0;

/// Default half-life of the exponential window (s).
pub const DEFAULT_HALF_LIFE: f64 = 0.003;

/// Weighting applied across the correlation before taking its maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum WindowSpec<T> {
    /// `w = 1 + slope x`, `slope` in `[-1, 0]`.
    Linear { slope: T },
    /// `w = (1 - x)^2`.
    QuadraticPos,
    /// `w = 1 - x^2`.
    QuadraticNeg,
    /// `w = 2^(-t / half_life)` on the absolute lag time axis.
    Exponential { half_life: T },
}

impl<T: Scalar> WindowSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WindowSpec::Linear { slope } => {
                if !(slope >= -T::one() && slope <= T::zero()) {
                    return Err(Error::param(format!(
                        "linear window slope {slope} must lie in [-1, 0]"
                    )));
                }
            }
            WindowSpec::Exponential { half_life } => {
                if !(half_life > T::zero()) || !half_life.is_finite() {
                    return Err(Error::param("window half-life must be positive"));
                }
            }
            WindowSpec::QuadraticPos | WindowSpec::QuadraticNeg => {}
        }
        Ok(())
    }

    /// Window weight at normalized position `x` in `[0, 1]` and lag time `t` (s).
    pub fn weight(&self, x: T, t: T) -> T {
        match *self {
            WindowSpec::Linear { slope } => T::one() + slope * x,
            WindowSpec::QuadraticPos => (T::one() - x) * (T::one() - x),
            WindowSpec::QuadraticNeg => T::one() - x * x,
            WindowSpec::Exponential { half_life } => T::lit(2.0).powf(-t / half_life),
        }
    }
}

/// A peak-selection method with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EstimatorSpec<T> {
    Maximum,
    Windowed { window: WindowSpec<T> },
    /// First peak whose prominence, on a 0..100 normalized scale, reaches `ppf`.
    Prominence { ppf: T },
    DeltaPeak,
}

impl<T: Scalar> EstimatorSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorSpec::Windowed { window } => window.validate(),
            EstimatorSpec::Prominence { ppf } => {
                if *ppf > T::zero() && ppf.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("peak prominence factor must be positive"))
                }
            }
            EstimatorSpec::Maximum | EstimatorSpec::DeltaPeak => Ok(()),
        }
    }

    /// The four methods with their default parameters.
    pub fn standard_set() -> Vec<Self> {
        vec![
            EstimatorSpec::Maximum,
            EstimatorSpec::Windowed { window: WindowSpec::QuadraticPos },
            EstimatorSpec::Prominence { ppf: T::lit(DEFAULT_PPF) },
            EstimatorSpec::DeltaPeak,
        ]
    }

    /// Short stable identifier used in result files.
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Maximum => "maximum".into(),
            EstimatorSpec::Windowed { window } => match window {
                WindowSpec::Linear { slope } => format!("linear({slope})"),
                WindowSpec::QuadraticPos => "quadratic_pos".into(),
                WindowSpec::QuadraticNeg => "quadratic_neg".into(),
                WindowSpec::Exponential { half_life } => {
                    format!("exponential({}ms)", *half_life * T::lit(1e3))
                }
            },
            EstimatorSpec::Prominence { ppf } => format!("prominence({ppf})"),
            EstimatorSpec::DeltaPeak => "delta_peak".into(),
        }
    }
}

/// Local maxima of a series, optionally with their prominences.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakSet<T> {
    pub indices: Vec<usize>,
    pub heights: Vec<T>,
    pub prominences: Option<Vec<T>>,
}

impl<T> PeakSet<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Interior local maxima. A plateau counts once, at its first index, and only
/// when it is entered from below and left downward.
pub fn find_local_maxima<T: Scalar>(corr: &CorrelationSeries<T>) -> Result<PeakSet<T>> {
    let v = &corr.values;
    if v.len() < 3 {
        return Err(Error::param(format!(
            "need at least 3 correlation values, got {}",
            v.len()
        )));
    }
    let mut peaks = PeakSet::default();
    let mut i = 1;
    while i + 1 < v.len() {
        if v[i] > v[i - 1] {
            let mut j = i;
            while j + 1 < v.len() && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < v.len() && v[j + 1] < v[i] {
                peaks.indices.push(i);
                peaks.heights.push(v[i]);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(peaks)
}

/// Index of the largest value; ties resolve to the smallest index.
pub fn pick_maximum<T: Scalar>(corr: &CorrelationSeries<T>) -> Result<usize> {
    if corr.is_empty() {
        return Err(Error::param("empty correlation series"));
    }
    let mut best = 0;
    for (i, &v) in corr.values.iter().enumerate().skip(1) {
        if v > corr.values[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Multiplies the series by the window, with `x_i = i / (len - 1)` and
/// `t_i = i / f_s`.
pub fn apply_window<T: Scalar>(
    corr: &CorrelationSeries<T>,
    window: &WindowSpec<T>,
) -> Result<CorrelationSeries<T>> {
    window.validate()?;
    let last = T::from_usize_lossy(corr.len().saturating_sub(1).max(1));
    let values = corr
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let fi = T::from_usize_lossy(i);
            let w = window.weight(fi / last, fi / corr.sample_rate);
            v * w.max(T::zero())
        })
        .collect();
    Ok(CorrelationSeries { values, sample_rate: corr.sample_rate })
}

/// Range-minimum queries over a fixed slice.
struct SparseMin<T> {
    levels: Vec<Vec<T>>,
}

impl<T: Scalar> SparseMin<T> {
    fn new(v: &[T]) -> Self {
        let mut levels = vec![v.to_vec()];
        let mut width = 1;
        while 2 * width <= v.len() {
            let prev = levels.last().unwrap();
            let next = (0..=v.len() - 2 * width)
                .map(|i| prev[i].min(prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    /// Minimum over the inclusive range `[lo, hi]`.
    fn query(&self, lo: usize, hi: usize) -> T {
        let span = hi - lo + 1;
        let k = (usize::BITS - 1 - span.leading_zeros()) as usize;
        self.levels[k][lo].min(self.levels[k][hi + 1 - (1 << k)])
    }
}

/// Fills in the prominence of every peak: height minus the higher of the two
/// minima found between the peak and the nearest strictly higher sample (or
/// the series end) on each side.
pub fn peak_prominences<T: Scalar>(corr: &CorrelationSeries<T>, peaks: &PeakSet<T>) -> PeakSet<T> {
    let v = &corr.values;
    let n = v.len();
    let mut out = peaks.clone();
    if peaks.is_empty() {
        out.prominences = Some(Vec::new());
        return out;
    }
    // Nearest strictly higher sample on each side via monotone stacks.
    let mut left_higher = vec![None; n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..n {
        while let Some(&top) = stack.last() {
            if v[top] <= v[i] {
                stack.pop();
            } else {
                break;
            }
        }
        left_higher[i] = stack.last().copied();
        stack.push(i);
    }
    let mut right_higher = vec![None; n];
    stack.clear();
    for i in (0..n).rev() {
        while let Some(&top) = stack.last() {
            if v[top] <= v[i] {
                stack.pop();
            } else {
                break;
            }
        }
        right_higher[i] = stack.last().copied();
        stack.push(i);
    }
    let mins = SparseMin::new(v);
    let proms = peaks
        .indices
        .iter()
        .map(|&p| {
            let lo = left_higher[p].map_or(0, |j| j + 1);
            let hi = right_higher[p].map_or(n - 1, |j| j - 1);
            let left_min = mins.query(lo, p);
            let right_min = mins.query(p, hi);
            v[p] - left_min.max(right_min)
        })
        .collect();
    out.prominences = Some(proms);
    out
}

/// First peak (not later than the global maximum) whose prominence reaches
/// `ppf` on the 0..100 normalized scale; the global maximum otherwise.
pub fn pick_prominence<T: Scalar>(corr: &CorrelationSeries<T>, ppf: T) -> Result<usize> {
    let best = pick_maximum(corr)?;
    let top = corr.values[best];
    if corr.len() < 3 || !(top > T::zero()) {
        return Ok(best);
    }
    let peaks = peak_prominences(corr, &find_local_maxima(corr)?);
    let scale = T::lit(PROMINENCE_SCALE) / top;
    let proms = peaks.prominences.as_deref().unwrap_or(&[]);
    Ok(peaks
        .indices
        .iter()
        .zip(proms)
        .find(|(&i, &p)| i <= best && p * scale >= ppf)
        .map_or(best, |(&i, _)| i))
}

/// Peak that follows the largest positive step between consecutive local
/// maxima, counting a zero-height maximum before the series start so the first
/// peak's step is its own height. Falls back to the global maximum when the
/// series has no local maxima.
pub fn pick_delta<T: Scalar>(corr: &CorrelationSeries<T>) -> Result<usize> {
    if corr.len() < 3 {
        return pick_maximum(corr);
    }
    let peaks = find_local_maxima(corr)?;
    if peaks.is_empty() {
        return pick_maximum(corr);
    }
    let mut best = (0, T::neg_infinity());
    let mut prev = T::zero();
    for (k, &h) in peaks.heights.iter().enumerate() {
        if h - prev > best.1 {
            best = (k, h - prev);
        }
        prev = h;
    }
    Ok(peaks.indices[best.0])
}

/// Index chosen by `spec` on an arrival-ordered series.
pub fn select_index<T: Scalar>(corr: &CorrelationSeries<T>, spec: &EstimatorSpec<T>) -> Result<usize> {
    match spec {
        EstimatorSpec::Maximum => pick_maximum(corr),
        EstimatorSpec::Windowed { window } => pick_maximum(&apply_window(corr, window)?),
        EstimatorSpec::Prominence { ppf } => pick_prominence(corr, *ppf),
        EstimatorSpec::DeltaPeak => pick_delta(corr),
    }
}

/// Outcome of one estimator on one snippet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    /// Template offset (samples).
    pub lag: i64,
    /// `c (wake_offset - lag / f_s)`; negative when the peak lies past the wake-up.
    pub distance: T,
}

impl<T: Scalar> Estimate<T> {
    pub fn in_range(&self) -> bool {
        self.distance >= T::zero()
    }
}

/// Pulse compression plus peak selection for a fixed template and timing.
#[derive(Debug, Clone)]
pub struct Ranger<T> {
    pub template: Template<T>,
    pub timing: TimingSpec<T>,
    pub detector: Detector,
}

impl<T: Scalar> Ranger<T> {
    pub fn new(template: Template<T>, timing: TimingSpec<T>) -> Self {
        Self { template, timing, detector: Detector::default() }
    }

    pub fn with_detector(mut self, detector: Detector) -> Self {
        self.detector = detector;
        self
    }

    /// Arrival-ordered series the estimators select on.
    pub fn correlate(&self, snippet: &Waveform<T>) -> Result<CorrelationSeries<T>> {
        if snippet.is_silent() {
            return Err(Error::NoSignal);
        }
        Ok(self.template.compress(snippet, self.detector)?.arrival_ordered())
    }

    /// Maps an arrival-ordered index back to a lag and distance.
    pub fn estimate_at(&self, corr_len: usize, index: usize) -> Estimate<T> {
        let lag = (corr_len - 1 - index) as i64;
        Estimate { lag, distance: raw_lag_distance(lag, &self.timing) }
    }

    /// Runs several estimators on one correlation.
    pub fn estimate_many(
        &self,
        snippet: &Waveform<T>,
        specs: &[EstimatorSpec<T>],
    ) -> Result<Vec<Estimate<T>>> {
        if self.detector != Detector::Hybrid {
            let corr = self.correlate(snippet)?;
            return specs
                .iter()
                .map(|spec| Ok(self.estimate_at(corr.len(), select_index(&corr, spec)?)))
                .collect();
        }
        if snippet.is_silent() {
            return Err(Error::NoSignal);
        }
        let (coherent, envelope) = self.template.compress_pair(snippet)?;
        let (coherent, envelope) = (coherent.arrival_ordered(), envelope.arrival_ordered());
        specs
            .iter()
            .map(|spec| {
                let picked = select_index(&envelope, spec)?;
                let (lo, hi) = lobe_bounds(&envelope.values, picked);
                Ok(self.estimate_at(coherent.len(), lo + argmax(&coherent.values[lo..=hi])))
            })
            .collect()
    }

    pub fn estimate(&self, snippet: &Waveform<T>, spec: &EstimatorSpec<T>) -> Result<Estimate<T>> {
        Ok(self.estimate_many(snippet, std::slice::from_ref(spec))?[0])
    }
}

/// Extent of the lobe containing `index`: climb to the lobe's crest, then walk
/// downhill on both sides to the nearest local minima.
pub fn lobe_bounds<T: Scalar>(values: &[T], index: usize) -> (usize, usize) {
    let mut top = index;
    loop {
        if top + 1 < values.len() && values[top + 1] > values[top] {
            top += 1;
        } else if top > 0 && values[top - 1] > values[top] {
            top -= 1;
        } else {
            break;
        }
    }
    let mut lo = top;
    while lo > 0 && values[lo - 1] <= values[lo] {
        lo -= 1;
    }
    let mut hi = top;
    while hi + 1 < values.len() && values[hi + 1] <= values[hi] {
        hi += 1;
    }
    (lo, hi)
}

/// First index of the largest value.
fn argmax<T: Scalar>(values: &[T]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Distance of the node that recorded `snippet`, per `spec`.
pub fn estimate_distance<T: Scalar>(
    snippet: &Waveform<T>,
    template: &Template<T>,
    timing: &TimingSpec<T>,
    spec: &EstimatorSpec<T>,
) -> Result<T> {
    spec.validate()?;
    timing.validate()?;
    let ranger = Ranger::new(template.clone(), *timing);
    let est = ranger.estimate(snippet, spec)?;
    crate::ranging::lag_to_distance(est.lag, timing)
}
