//! Experiment pipelines: Monte Carlo at a single node, grid sweeps over a room
//! quadrant, prominence-factor sweeps and estimator comparisons.
//!
//! Every pipeline caches the clean reception per receiver and reuses it for all
//! noise trials. Noise seeds depend only on `(master_seed, trial, receiver)`,
//! so results are identical for any thread count, and every SNR level sees the
//! same underlying noise realisation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, Ranger};
use crate::ranging::{Detector, Template, TimingSpec};
use crate::room::{CleanReception, Point3, ReceiveChain, RoomSpec};
use crate::signals::{generate_chirp, ChirpSpec, NoiseSpec};
use crate::stats::{epanechnikov_kde_auto, DensityEstimate, ErrorStats};

/// Width of the band of acceptable PPF values above the minimum P95.
pub const PPF_BAND_WIDTH_M: f64 = 0.25;

const KDE_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl Scale {
    pub fn monte_carlo_trials(self) -> usize {
        match self {
            Scale::Desk => 1_000,
            Scale::Paper => 10_000,
        }
    }

    pub fn grid(self) -> GridSpec {
        match self {
            Scale::Desk => GridSpec { nx: 15, ny: 10, spacing: 0.2, margin: 0.1, z: 1.0 },
            Scale::Paper => GridSpec { nx: 30, ny: 20, spacing: 0.1, margin: 0.1, z: 1.0 },
        }
    }
}

/// Rectangular receiver grid anchored at `(margin, margin, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub margin: f64,
    pub z: f64,
}

impl GridSpec {
    /// Row-major positions: `y` index outer, `x` index inner.
    pub fn points(&self) -> Vec<Point3<f64>> {
        (0..self.ny)
            .flat_map(|iy| {
                (0..self.nx).map(move |ix| {
                    Point3::new(
                        self.margin + ix as f64 * self.spacing,
                        self.margin + iy as f64 * self.spacing,
                        self.z,
                    )
                })
            })
            .collect()
    }

    pub fn validate(&self, room: &RoomSpec<f64>) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::param("grid needs at least one column and one row"));
        }
        if !(self.spacing > 0.0) || !(self.margin > 0.0) {
            return Err(Error::param("grid spacing and margin must be positive"));
        }
        for p in [self.points()[0], *self.points().last().expect("non-empty")] {
            room.require_inside(&p, "grid receiver")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReceiverLayout {
    Points { points: Vec<Point3<f64>> },
    Grid(GridSpec),
}

impl ReceiverLayout {
    pub fn points(&self) -> Vec<Point3<f64>> {
        match self {
            ReceiverLayout::Points { points } => points.clone(),
            ReceiverLayout::Grid(g) => g.points(),
        }
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        match self {
            ReceiverLayout::Grid(g) => Some(g),
            ReceiverLayout::Points { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub room: RoomSpec<f64>,
    pub chirp: ChirpSpec<f64>,
    pub timing: TimingSpec<f64>,
    pub source: Point3<f64>,
    pub receivers: ReceiverLayout,
    /// SNR levels in dB; `f64::INFINITY` means noiseless.
    pub snr_db: Vec<f64>,
    pub estimators: Vec<EstimatorSpec<f64>>,
    pub trials: usize,
    pub master_seed: u64,
    pub detector: Detector,
    pub adc_bits: Option<u32>,
    pub max_order: Option<u32>,
}

impl ExperimentConfig {
    /// Reference source slightly off the room centre at 1 m height.
    pub fn reference_source() -> Point3<f64> {
        Point3::new(3.1, 2.1, 1.0)
    }

    fn base(alpha: f64, receivers: ReceiverLayout, trials: usize, snr_db: Vec<f64>) -> Self {
        Self {
            room: RoomSpec::reference(alpha),
            chirp: ChirpSpec::reference(),
            timing: TimingSpec::reference(),
            source: Self::reference_source(),
            receivers,
            snr_db,
            estimators: vec![EstimatorSpec::Maximum],
            trials,
            master_seed: 1,
            detector: Detector::default(),
            adc_bits: Some(12),
            max_order: None,
        }
    }

    /// One node 1.553 m from the source in the α = 0.9 room.
    pub fn monte_carlo(scale: Scale) -> Self {
        let rx = Point3::new(3.1 - 1.553, 2.1, 1.0);
        Self::base(0.9, ReceiverLayout::Points { points: vec![rx] }, scale.monte_carlo_trials(), vec![20.0])
    }

    /// Noiseless quadrant grid in a room with absorption `alpha`.
    pub fn grid(scale: Scale, alpha: f64) -> Self {
        Self::base(alpha, ReceiverLayout::Grid(scale.grid()), 1, vec![f64::INFINITY])
    }

    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |r: Result<()>| {
            if let Err(e) = r {
                out.push(e.to_string());
            }
        };
        check(self.room.validate());
        check(self.chirp.validate());
        check(self.timing.validate());
        if self.chirp.tau_tx != self.timing.tau_tx {
            check(Err(Error::param("chirp and timing disagree on the broadcast duration")));
        }
        if self.chirp.sample_rate != self.timing.sample_rate {
            check(Err(Error::param("chirp and timing disagree on the sample rate")));
        }
        if self.room.speed_of_sound != self.timing.speed_of_sound {
            check(Err(Error::param("room and timing disagree on the speed of sound")));
        }
        if self.trials == 0 {
            check(Err(Error::param("trials must be at least 1")));
        }
        if self.snr_db.is_empty() {
            check(Err(Error::param("at least one SNR level is required")));
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            check(Err(Error::param("SNR levels must be finite or +inf")));
        }
        if self.estimators.is_empty() {
            check(Err(Error::param("at least one estimator is required")));
        }
        for e in &self.estimators {
            check(e.validate());
        }
        if let Some(g) = self.receivers.grid() {
            check(g.validate(&self.room));
        }
        let points = self.receivers.points();
        if points.is_empty() {
            check(Err(Error::param("receiver list is empty")));
        }
        check(self.room.require_inside(&self.source, "source"));
        for p in &points {
            check(self.room.require_inside(p, "receiver"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().as_slice() {
            [] => Ok(()),
            list => Err(Error::Parameter(list.join("; "))),
        }
    }

    /// Receive chain implied by the timing and ADC settings.
    pub fn chain(&self) -> ReceiveChain<f64> {
        ReceiveChain {
            t_wake: self.timing.wake_offset,
            tau_rx: self.timing.tau_rx,
            adc_bits: self.adc_bits,
            max_order: self.max_order,
        }
    }
}

/// One estimate of one estimator on one noisy snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub receiver: Point3<f64>,
    pub true_distance: f64,
    pub estimator: String,
    pub snr_db: f64,
    pub trial: usize,
    /// Raw distance of the selected lag; negative for peaks past the wake-up.
    pub estimated_distance: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub snr_db: f64,
    pub stats: ErrorStats<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOutcome {
    pub records: Vec<ResultRecord>,
    pub summaries: Vec<EstimatorSummary>,
    /// Kernel density of the estimated distances, aligned with `summaries`.
    pub densities: Vec<DensityEstimate<f64>>,
}

/// Error matrix of one estimator at one SNR, `ny` rows of `nx` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub estimator: String,
    pub snr_db: f64,
    pub spacing: f64,
    pub margin: f64,
    pub cells: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub records: Vec<ResultRecord>,
    pub summaries: Vec<EstimatorSummary>,
    pub heatmaps: Vec<Heatmap>,
}

/// Per-trial seed from the master seed, trial and receiver indices.
pub fn trial_seed(master_seed: u64, trial: usize, receiver: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let a = mix(master_seed ^ 0x9e37_79b9_7f4a_7c15);
    let b = mix(a ^ (trial as u64).wrapping_mul(0xd1b5_4a32_d192_ed03));
    mix(b ^ (receiver as u64).wrapping_mul(0xa24b_aed4_963e_e407))
}

/// Estimated distances indexed `[receiver][snr][trial][estimator]`.
type Raw = Vec<Vec<Vec<Vec<f64>>>>;

fn simulate(cfg: &ExperimentConfig) -> Result<(Vec<Point3<f64>>, Vec<f64>, Raw)> {
    cfg.validate()?;
    let broadcast = generate_chirp(&cfg.chirp)?;
    let ranger = Ranger::new(Template::new(broadcast.clone()), cfg.timing).with_detector(cfg.detector);
    let chain = cfg.chain();
    let points = cfg.receivers.points();

    let per_receiver = |(r, rx): (usize, &Point3<f64>)| -> Result<(f64, Vec<Vec<Vec<f64>>>)> {
        let clean = CleanReception::from_broadcast(&broadcast, &cfg.room, &cfg.source, rx, &chain)?;
        let trials = |trial: usize| -> Result<Vec<Vec<f64>>> {
            let seed = trial_seed(cfg.master_seed, trial, r);
            cfg.snr_db
                .iter()
                .map(|&snr| {
                    let snippet = clean.observe(&NoiseSpec::new(snr, seed))?;
                    let est = ranger.estimate_many(&snippet, &cfg.estimators)?;
                    Ok(est.into_iter().map(|e| e.distance).collect())
                })
                .collect()
        };
        let by_trial: Vec<Vec<Vec<f64>>> =
            (0..cfg.trials).into_par_iter().map(trials).collect::<Result<_>>()?;
        // Reorder [trial][snr] into [snr][trial].
        let by_snr = (0..cfg.snr_db.len())
            .map(|s| by_trial.iter().map(|t| t[s].clone()).collect())
            .collect();
        Ok((clean.true_distance, by_snr))
    };

    let results: Vec<(f64, Vec<Vec<Vec<f64>>>)> =
        points.par_iter().enumerate().map(per_receiver).collect::<Result<_>>()?;
    let (truths, raw) = results.into_iter().unzip();
    Ok((points, truths, raw))
}

/// Records ordered by SNR, receiver, estimator, then trial.
fn records(cfg: &ExperimentConfig, points: &[Point3<f64>], truths: &[f64], raw: &Raw) -> Vec<ResultRecord> {
    let labels: Vec<String> = cfg.estimators.iter().map(|e| e.label()).collect();
    let mut out = Vec::with_capacity(points.len() * cfg.snr_db.len() * labels.len() * cfg.trials);
    for (s, &snr) in cfg.snr_db.iter().enumerate() {
        for (r, rx) in points.iter().enumerate() {
            for (e, label) in labels.iter().enumerate() {
                for (trial, estimates) in raw[r][s].iter().enumerate() {
                    let d = estimates[e];
                    out.push(ResultRecord {
                        receiver: *rx,
                        true_distance: truths[r],
                        estimator: label.clone(),
                        snr_db: snr,
                        trial,
                        estimated_distance: d,
                        abs_error: (d - truths[r]).abs(),
                    });
                }
            }
        }
    }
    out
}

/// Groups records by `(snr, estimator)` in configuration order.
fn groups<'a>(cfg: &ExperimentConfig, records: &'a [ResultRecord]) -> Vec<(f64, String, Vec<&'a ResultRecord>)> {
    let mut out = Vec::new();
    for &snr in &cfg.snr_db {
        for est in &cfg.estimators {
            let label = est.label();
            let rows = records
                .iter()
                .filter(|r| r.estimator == label && same_snr(r.snr_db, snr))
                .collect();
            out.push((snr, label, rows));
        }
    }
    out
}

fn same_snr(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Percentile and Gaussian-fit statistics of one group of records.
pub fn summarize(rows: &[&ResultRecord]) -> Result<ErrorStats<f64>> {
    let abs: Vec<f64> = rows.iter().map(|r| r.abs_error).collect();
    let signed: Vec<f64> = rows.iter().map(|r| r.estimated_distance - r.true_distance).collect();
    ErrorStats::with_fit(&abs, &signed)
}

/// Monte Carlo at a single receiver: repeated noise, window, correlate and
/// estimate on one cached clean reception.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloOutcome> {
    if cfg.receivers.points().len() != 1 {
        return Err(Error::param("Monte Carlo runs take exactly one receiver"));
    }
    let (points, truths, raw) = simulate(cfg)?;
    let records = records(cfg, &points, &truths, &raw);
    let mut summaries = Vec::new();
    let mut densities = Vec::new();
    for (snr, label, rows) in groups(cfg, &records) {
        summaries.push(EstimatorSummary { estimator: label, snr_db: snr, stats: summarize(&rows)? });
        let distances: Vec<f64> = rows.iter().map(|r| r.estimated_distance).collect();
        densities.push(epanechnikov_kde_auto(&distances, KDE_POINTS)?);
    }
    Ok(MonteCarloOutcome { records, summaries, densities })
}

/// One estimate per receiver, estimator, SNR and trial over the receiver layout.
pub fn run_grid_sweep(cfg: &ExperimentConfig) -> Result<GridOutcome> {
    let (points, truths, raw) = simulate(cfg)?;
    let records = records(cfg, &points, &truths, &raw);
    let mut summaries = Vec::new();
    let mut heatmaps = Vec::new();
    for (snr, label, rows) in groups(cfg, &records) {
        summaries.push(EstimatorSummary { estimator: label.clone(), snr_db: snr, stats: summarize(&rows)? });
        if let Some(g) = cfg.receivers.grid() {
            // Rows are receiver-major with `trials` entries each; average per receiver.
            let per_rx: Vec<f64> = rows
                .chunks(cfg.trials)
                .map(|c| c.iter().map(|r| r.abs_error).sum::<f64>() / c.len() as f64)
                .collect();
            let cells = per_rx.chunks(g.nx).map(<[f64]>::to_vec).collect();
            heatmaps.push(Heatmap { estimator: label, snr_db: snr, spacing: g.spacing, margin: g.margin, cells });
        }
    }
    Ok(GridOutcome { records, summaries, heatmaps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpfRow {
    pub ppf: f64,
    pub snr_db: f64,
    pub stats: ErrorStats<f64>,
}

/// PPF values whose P95 lies within [`PPF_BAND_WIDTH_M`] of the minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpfBand {
    pub snr_db: f64,
    pub best_ppf: f64,
    pub min_p95: f64,
    pub members: Vec<f64>,
    pub low: f64,
    pub high: f64,
}

impl PpfBand {
    pub fn contains(&self, ppf: f64) -> bool {
        self.members.contains(&ppf)
    }
}

/// `ppf_opt(snr) = a exp(b snr) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sse: f64,
}

impl ExpFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (self.b * x).exp() + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpfSweep {
    pub rows: Vec<PpfRow>,
    pub bands: Vec<PpfBand>,
    pub fit: Option<ExpFit>,
}

/// Least-squares fit of `a exp(b x) + c`. For each trial `b` the optimal `a`
/// and `c` are linear; `b` is refined by a coarse scan followed by golden
/// section search. Needs three or more points.
pub fn fit_exponential(x: &[f64], y: &[f64]) -> Option<ExpFit> {
    if x.len() != y.len() || x.len() < 3 || x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let span = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.abs())).max(1e-12);
    let solve = |b: f64| -> Option<ExpFit> {
        let e: Vec<f64> = x.iter().map(|&xi| (b * xi).exp()).collect();
        let n = x.len() as f64;
        let (se, see) = (e.iter().sum::<f64>(), e.iter().map(|v| v * v).sum::<f64>());
        let (sy, sey) = (y.iter().sum::<f64>(), e.iter().zip(y).map(|(a, b)| a * b).sum::<f64>());
        let det = n * see - se * se;
        if det.abs() < 1e-12 * n * see.max(1.0) {
            return None;
        }
        let a = (n * sey - se * sy) / det;
        let c = (sy - a * se) / n;
        let sse = e.iter().zip(y).map(|(ei, yi)| (a * ei + c - yi).powi(2)).sum();
        Some(ExpFit { a, b, c, sse })
    };
    let cost = |b: f64| solve(b).map_or(f64::INFINITY, |f| f.sse);
    let bound = 10.0 / span;
    let steps = 400;
    let grid: Vec<f64> = (0..=steps).map(|i| -bound + 2.0 * bound * i as f64 / steps as f64).collect();
    let k = (0..grid.len()).min_by(|&i, &j| cost(grid[i]).total_cmp(&cost(grid[j])))?;
    let (mut lo, mut hi) = (grid[k.saturating_sub(1)], grid[(k + 1).min(steps)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if cost(m1) <= cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    solve(0.5 * (lo + hi)).filter(|f| f.sse.is_finite())
}

/// Prominence estimator at each PPF value, evaluated on the configured layout.
pub fn run_ppf_sweep(cfg: &ExperimentConfig, ppf_values: &[f64]) -> Result<PpfSweep> {
    if ppf_values.is_empty() {
        return Err(Error::param("no PPF values to sweep"));
    }
    let mut sweep_cfg = cfg.clone();
    sweep_cfg.estimators = ppf_values.iter().map(|&ppf| EstimatorSpec::Prominence { ppf }).collect();
    let outcome = run_grid_sweep(&sweep_cfg)?;
    let rows: Vec<PpfRow> = outcome
        .summaries
        .iter()
        .zip(sweep_cfg.estimators.iter().cycle())
        .map(|(s, e)| PpfRow {
            ppf: match e {
                EstimatorSpec::Prominence { ppf } => *ppf,
                _ => unreachable!("sweep only holds prominence estimators"),
            },
            snr_db: s.snr_db,
            stats: s.stats,
        })
        .collect();

    let bands: Vec<PpfBand> = rows
        .chunks(ppf_values.len())
        .map(|chunk| {
            let best = chunk
                .iter()
                .min_by(|a, b| a.stats.p95.total_cmp(&b.stats.p95))
                .expect("non-empty chunk");
            let members: Vec<f64> = chunk
                .iter()
                .filter(|r| r.stats.p95 <= best.stats.p95 + PPF_BAND_WIDTH_M)
                .map(|r| r.ppf)
                .collect();
            PpfBand {
                snr_db: best.snr_db,
                best_ppf: best.ppf,
                min_p95: best.stats.p95,
                low: members.iter().copied().fold(f64::INFINITY, f64::min),
                high: members.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                members,
            }
        })
        .collect();

    let finite: Vec<&PpfBand> = bands.iter().filter(|b| b.snr_db.is_finite()).collect();
    let xs: Vec<f64> = finite.iter().map(|b| b.snr_db).collect();
    let ys: Vec<f64> = finite.iter().map(|b| b.best_ppf).collect();
    Ok(PpfSweep { rows, bands, fit: fit_exponential(&xs, &ys) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub estimator: String,
    pub snr_db: f64,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Grid sweep of every configured estimator at every SNR in `snr_list`.
pub fn compare_estimators(cfg: &ExperimentConfig, snr_list: &[f64]) -> Result<(Vec<ComparisonRow>, GridOutcome)> {
    let mut c = cfg.clone();
    c.snr_db = snr_list.to_vec();
    let outcome = run_grid_sweep(&c)?;
    let rows = outcome
        .summaries
        .iter()
        .map(|s| ComparisonRow {
            estimator: s.estimator.clone(),
            snr_db: s.snr_db,
            mean: s.stats.mean,
            p50: s.stats.p50,
            p95: s.stats.p95,
        })
        .collect();
    Ok((rows, outcome))
}
