//! Post-processing of distance estimates: Gaussian fit, Epanechnikov kernel
//! density, nearest-rank percentiles and empirical CDFs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Summary of an error population. `epsilon` and `sigma` come from a Gaussian
/// fit of the signed estimates and are absent when no fit was made.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats<T> {
    pub n: usize,
    pub mean: T,
    pub p50: T,
    pub p95: T,
    pub p100: T,
    pub epsilon: Option<T>,
    pub sigma: Option<T>,
}

impl<T: Scalar> ErrorStats<T> {
    /// Percentile metrics of `abs_errors` plus a Gaussian fit of `signed_errors`
    /// (estimate minus truth). With a single sample the spread is zero.
    pub fn with_fit(abs_errors: &[T], signed_errors: &[T]) -> Result<Self> {
        let mut stats = error_metrics(abs_errors)?;
        let (bias, sigma) = match signed_errors.len() {
            0 => return Err(Error::param("no signed errors to fit")),
            1 => (signed_errors[0], T::zero()),
            _ => gaussian_fit(signed_errors)?,
        };
        stats.epsilon = Some(bias.abs());
        stats.sigma = Some(sigma);
        Ok(stats)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate<T> {
    pub grid: Vec<T>,
    pub density: Vec<T>,
    pub bandwidth: T,
}

impl<T: Scalar> DensityEstimate<T> {
    /// Trapezoidal integral of the density over the grid.
    pub fn mass(&self) -> T {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) * T::lit(0.5))
            .sum()
    }

    /// Grid positions of strict interior local maxima of the density.
    pub fn modes(&self) -> Vec<T> {
        let d = &self.density;
        let mut out = Vec::new();
        let mut i = 1;
        while i + 1 < d.len() {
            if d[i] > d[i - 1] {
                let mut j = i;
                while j + 1 < d.len() && d[j + 1] == d[i] {
                    j += 1;
                }
                if j + 1 < d.len() && d[j + 1] < d[i] {
                    out.push(self.grid[(i + j) / 2]);
                }
                i = j + 1;
            } else {
                i += 1;
            }
        }
        out
    }
}

/// Sample mean and standard deviation (n - 1 denominator).
pub fn gaussian_fit<T: Scalar>(samples: &[T]) -> Result<(T, T)> {
    if samples.len() < 2 {
        return Err(Error::param("a Gaussian fit needs at least two samples"));
    }
    let n = T::from_usize_lossy(samples.len());
    let mean = samples.iter().copied().sum::<T>() / n;
    let ss: T = samples.iter().map(|&x| (x - mean) * (x - mean)).sum();
    Ok((mean, (ss / (n - T::one())).sqrt()))
}

fn sorted<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    v
}

/// Nearest-rank percentile of already sorted values: element `ceil(p n / 100)`.
pub fn nearest_rank<T: Scalar>(sorted: &[T], percent: f64) -> T {
    let n = sorted.len();
    let rank = ((percent / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Mean and nearest-rank P50/P95/P100 of absolute errors.
pub fn error_metrics<T: Scalar>(errors: &[T]) -> Result<ErrorStats<T>> {
    if errors.is_empty() {
        return Err(Error::param("no errors to summarize"));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::param("errors must be finite"));
    }
    let s = sorted(errors);
    let n = s.len();
    Ok(ErrorStats {
        n,
        mean: s.iter().copied().sum::<T>() / T::from_usize_lossy(n),
        p50: nearest_rank(&s, 50.0),
        p95: nearest_rank(&s, 95.0),
        p100: s[n - 1],
        epsilon: None,
        sigma: None,
    })
}

/// `0.9 min(sd, IQR / 1.34) n^(-1/5)`, falling back to whichever spread
/// measure is non-zero, then to 1e-3 for degenerate samples.
pub fn silverman_bandwidth<T: Scalar>(samples: &[T]) -> T {
    let floor = T::lit(1e-3);
    if samples.len() < 2 {
        return floor;
    }
    let (_, sd) = gaussian_fit(samples).expect("n >= 2");
    let s = sorted(samples);
    let iqr = (nearest_rank(&s, 75.0) - nearest_rank(&s, 25.0)) / T::lit(1.34);
    let spread = match (sd > T::zero(), iqr > T::zero()) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return floor,
    };
    T::lit(0.9) * spread * T::from_usize_lossy(samples.len()).powf(T::lit(-0.2))
}

/// Epanechnikov kernel `0.75 (1 - u^2)` on `|u| <= 1`.
pub fn epanechnikov<T: Scalar>(u: T) -> T {
    if u.abs() <= T::one() {
        T::lit(0.75) * (T::one() - u * u)
    } else {
        T::zero()
    }
}

/// Kernel density estimate evaluated on `grid`.
pub fn epanechnikov_kde<T: Scalar>(samples: &[T], bandwidth: T, grid: &[T]) -> Result<DensityEstimate<T>> {
    if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
        return Err(Error::param("bandwidth must be positive"));
    }
    if samples.is_empty() {
        return Err(Error::param("no samples for density estimate"));
    }
    let s = sorted(samples);
    let norm = T::one() / (T::from_usize_lossy(s.len()) * bandwidth);
    let density = grid
        .iter()
        .map(|&x| {
            // Only samples within one bandwidth contribute.
            let lo = s.partition_point(|&v| v < x - bandwidth);
            let hi = s.partition_point(|&v| v <= x + bandwidth);
            s[lo..hi].iter().map(|&v| epanechnikov((x - v) / bandwidth)).sum::<T>() * norm
        })
        .collect();
    Ok(DensityEstimate { grid: grid.to_vec(), density, bandwidth })
}

/// Uniform grid covering all samples plus one bandwidth on each side.
pub fn kde_grid<T: Scalar>(samples: &[T], bandwidth: T, points: usize) -> Vec<T> {
    let lo = samples.iter().copied().fold(T::infinity(), T::min) - bandwidth;
    let hi = samples.iter().copied().fold(T::neg_infinity(), T::max) + bandwidth;
    let points = points.max(2);
    let step = (hi - lo) / T::from_usize_lossy(points - 1);
    (0..points).map(|i| lo + step * T::from_usize_lossy(i)).collect()
}

/// KDE with the Silverman bandwidth on an automatic grid.
pub fn epanechnikov_kde_auto<T: Scalar>(samples: &[T], points: usize) -> Result<DensityEstimate<T>> {
    let h = silverman_bandwidth(samples);
    epanechnikov_kde(samples, h, &kde_grid(samples, h, points))
}

/// Right-continuous empirical CDF as `(value, fraction <= value)` steps.
pub fn empirical_cdf<T: Scalar>(errors: &[T]) -> Result<Vec<(T, T)>> {
    if errors.is_empty() {
        return Err(Error::param("no samples for CDF"));
    }
    let s = sorted(errors);
    let n = T::from_usize_lossy(s.len());
    let mut out: Vec<(T, T)> = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        let frac = T::from_usize_lossy(i + 1) / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}

/// Evaluates a step CDF from [`empirical_cdf`] at `x`.
pub fn cdf_at<T: Scalar>(cdf: &[(T, T)], x: T) -> T {
    let k = cdf.partition_point(|&(v, _)| v <= x);
    if k == 0 {
        T::zero()
    } else {
        cdf[k - 1].1
    }
}
