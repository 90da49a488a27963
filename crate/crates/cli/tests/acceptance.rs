//! End-to-end acceptance checks. Runs every criterion, prints one PASS/FAIL
//! line each, and exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use chirp_ranging::estimators::{find_local_maxima, peak_prominences};
use chirp_ranging::experiments::{run_grid_sweep, run_monte_carlo, ExperimentConfig, Scale};
use chirp_ranging::power::{self, battery_life, duty_cycle_power, raw_battery_life};
use chirp_ranging::signals::{analytic_autocorrelation, analytic_signal};
use chirp_ranging::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Fail(String);

impl From<String> for Fail {
    fn from(s: String) -> Self {
        Fail(s)
    }
}

impl From<chirp_ranging::Error> for Fail {
    fn from(e: chirp_ranging::Error) -> Self {
        Fail(e.to_string())
    }
}

type Check = Result<String, Fail>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(Fail(detail))
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Check {
    ensure(elapsed < limit, format!("{detail}; runtime {:.2?} (limit {limit:?})", elapsed))
}

fn stats_for<'a>(summaries: &'a [experiments::EstimatorSummary], label: &str, snr: f64) -> &'a ErrorStats<f64> {
    &summaries
        .iter()
        .find(|s| s.estimator == label && (s.snr_db == snr || (s.snr_db.is_infinite() && snr.is_infinite())))
        .unwrap_or_else(|| panic!("no summary for {label} at {snr} dB"))
        .stats
}

/// Magnitude of the analytic-signal autocorrelation at lags `0..=max_lag`.
fn envelope_autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let a = analytic_signal(x);
    (0..=max_lag)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (p, q) in a[k..].iter().zip(&a) {
                let z = p * q.conj();
                re += z.re;
                im += z.im;
            }
            f64::hypot(re, im)
        })
        .collect()
}

/// Full −3 dB width of a symmetric lobe sampled at non-negative lags.
fn half_power_width(values: &[f64], dt: f64) -> f64 {
    let level = values[0] / std::f64::consts::SQRT_2;
    let k = values.iter().position(|&v| v < level).expect("lobe decays below -3 dB");
    let (a, b) = (values[k - 1], values[k]);
    let t = (k - 1) as f64 + (a - level) / (a - b);
    2.0 * t * dt
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let spec = ChirpSpec64::reference();
    let w = generate_chirp(&spec)?;
    let fs = spec.sample_rate;
    let lags = 60;
    let numeric = envelope_autocorrelation(w.samples(), lags);
    let closed: Vec<f64> =
        (0..=lags).map(|k| analytic_autocorrelation(&spec, k as f64 / fs, spec.tau_tx).abs()).collect();
    let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
    let lag_error = argmax(&numeric).abs_diff(argmax(&closed));
    let target = 1.0 / spec.bandwidth();
    let width = half_power_width(&numeric, 1.0 / fs);
    let closed_width = half_power_width(&closed, 1.0 / fs);
    let rel = (width - target).abs() / target;
    within(
        start.elapsed(),
        Duration::from_secs(5),
        format!(
            "peak lag error {lag_error} samples; -3 dB width {:.2} us numeric, {:.2} us closed form, {:.1}% from 1/bandwidth",
            width * 1e6,
            closed_width * 1e6,
            rel * 100.0
        ),
    )
    .and_then(|d| ensure(lag_error <= 1 && rel <= 0.15 && (closed_width - target).abs() / target <= 0.15, d))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::monte_carlo(Scale::Desk);
    cfg.snr_db = vec![20.0, 0.0];
    let out = run_monte_carlo(&cfg)?;
    let hi = stats_for(&out.summaries, "maximum", 20.0);
    let lo = stats_for(&out.summaries, "maximum", 0.0);
    let (eps20, sig20) = (hi.epsilon.unwrap_or(f64::NAN), hi.sigma.unwrap_or(f64::NAN));
    let sig0 = lo.sigma.unwrap_or(f64::NAN);
    let detail = format!(
        "{} trials; 20 dB: epsilon {eps20:.5} m, sigma {sig20:.5} m; 0 dB: sigma {sig0:.5} m (needs >= 0.2)",
        cfg.trials
    );
    within(start.elapsed(), Duration::from_secs(120), detail)
        .and_then(|d| ensure(cfg.trials == 1000 && eps20 <= 0.01 && sig20 <= 0.02 && sig0 >= 0.2, d))
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let mut p95 = Vec::new();
    let mut p50_09 = f64::NAN;
    for alpha in [0.9, 0.3, 0.05] {
        let cfg = ExperimentConfig::grid(Scale::Desk, alpha);
        let out = run_grid_sweep(&cfg)?;
        let s = stats_for(&out.summaries, "maximum", f64::INFINITY);
        if alpha == 0.9 {
            p50_09 = s.p50;
        }
        p95.push(s.p95);
    }
    let detail = format!(
        "alpha 0.9: P50 {p50_09:.4} m, P95 {:.4} m; alpha 0.3: P95 {:.3} m; alpha 0.05: P95 {:.3} m",
        p95[0], p95[1], p95[2]
    );
    within(start.elapsed(), Duration::from_secs(600), detail).and_then(|d| {
        ensure(p50_09 <= 0.01 && p95[0] <= 0.10 && p95[2] >= 2.0 && p95[0] < p95[1] && p95[1] < p95[2], d)
    })
}

fn criterion_4() -> Check {
    let mut cfg = ExperimentConfig::grid(Scale::Desk, 0.3);
    cfg.snr_db = vec![3.0];
    cfg.master_seed = 1;
    cfg.estimators = vec![
        EstimatorSpec::Prominence { ppf: 65.0 },
        EstimatorSpec::Windowed { window: WindowSpec::QuadraticPos },
        EstimatorSpec::Maximum,
    ];
    let out = run_grid_sweep(&cfg)?;
    let prom = stats_for(&out.summaries, "prominence(65)", 3.0);
    let quad = stats_for(&out.summaries, "quadratic_pos", 3.0);
    let max = stats_for(&out.summaries, "maximum", 3.0);
    ensure(
        prom.p95 < quad.p95 && quad.p95 < max.p95 && prom.p50 <= 0.10,
        format!(
            "P95 prominence {:.3} m, quadratic {:.3} m, maximum {:.3} m; P50 prominence {:.4} m",
            prom.p95, quad.p95, max.p95, prom.p50
        ),
    )
}

fn brute_force_prominence(v: &[f64], p: usize) -> f64 {
    let mut left_min = v[p];
    let mut i = p;
    while i > 0 && v[i - 1] <= v[p] {
        i -= 1;
        left_min = left_min.min(v[i]);
    }
    let mut right_min = v[p];
    let mut j = p;
    while j + 1 < v.len() && v[j + 1] <= v[p] {
        j += 1;
        right_min = right_min.min(v[j]);
    }
    v[p] - left_min.max(right_min)
}

fn criterion_5() -> Check {
    let mut rng = StdRng::seed_from_u64(5);
    let mut peaks_checked = 0usize;
    for case in 0..10_000 {
        let n = rng.random_range(3..=512);
        // Half the cases use a coarse alphabet so ties and plateaus are common.
        let coarse = case % 2 == 0;
        let v: Vec<f64> = (0..n)
            .map(|_| if coarse { rng.random_range(0..8) as f64 } else { rng.random::<f64>() })
            .collect();
        let series = CorrelationSeries::new(v.clone(), 1.0)?;
        let peaks = peak_prominences(&series, &find_local_maxima(&series)?);
        let proms = peaks.prominences.as_deref().unwrap_or(&[]);
        for (&p, &got) in peaks.indices.iter().zip(proms) {
            let want = brute_force_prominence(&v, p);
            if got != want {
                return Err(Fail(format!("case {case}, peak {p}: fast {got} vs brute force {want}")));
            }
        }
        peaks_checked += peaks.len();
    }
    Ok(format!("10000 series, {peaks_checked} peaks identical to the O(n^2) reference"))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let b = duty_cycle_power(
        &power::reference_node::<f64>(),
        power::REFERENCE_SUPPLY_V,
        power::REFERENCE_ACTIVE_S,
        power::REFERENCE_PERIOD_S,
    )?;
    let table = [
        ("LDO + MEMS", 407.2, 107.9, 515.1),
        ("OPAMP 1", 293.4, 0.0, 293.4),
        ("OPAMP 2", 293.4, 0.0, 293.4),
        ("ADC", 1080.0, 6833.2, 7913.2),
    ];
    let mut misses = Vec::new();
    let mut cell = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > 0.1 {
            misses.push(format!("{name} {got:.2} vs {want}"));
        }
    };
    for (c, (name, a, p, t)) in b.components.iter().zip(table) {
        cell(&format!("{name} active"), c.active_nw, a);
        cell(&format!("{name} passive"), c.passive_nw, p);
        cell(&format!("{name} total"), c.total_nw, t);
    }
    cell("active total", b.active_nw, 2074.0);
    cell("passive total", b.passive_nw, 6940.9);
    cell("grand total", b.total_nw, 9014.9);
    let life = battery_life(b.total_nw, power::CR2032_CAPACITY_MAH, b.supply_voltage, power::CR2032_SHELF_LIFE_Y);
    let raw = raw_battery_life(b.total_nw, power::CR2032_CAPACITY_MAH, b.supply_voltage);
    let detail = format!(
        "total {:.2} nW, active {:.2} nW, life {life} y (raw {raw:.2} y); cells off by more than 0.1 nW: {}",
        b.total_nw,
        b.active_nw,
        if misses.is_empty() { "none".to_string() } else { misses.join(", ") }
    );
    let ok = misses.is_empty() && life == 8.5 && raw > 8.5;
    within(start.elapsed(), Duration::from_secs(1), detail).and_then(|d| ensure(ok, d))
}

fn criterion_7() -> Check {
    let spec = ChirpSpec64::reference();
    let timing = TimingSpec64::reference();
    let quantum = timing.speed_of_sound / timing.sample_rate;
    let span = timing.broadcast_span();
    let (_, late_max) = coverage(&timing, WakeScenario::classify(&timing));
    let room = RoomSpec64::new([24.0, 24.0, 24.0], 1.0);
    let source = Point64::new(12.0, 12.0, 12.0);
    let broadcast = generate_chirp(&spec)?;
    let ranger = Ranger::new(Template::new(broadcast.clone()), timing);
    let chain = ReceiveChain::new(timing.wake_offset, timing.tau_rx);
    let estimators = [EstimatorSpec::Maximum, EstimatorSpec::Prominence { ppf: 65.0 }, EstimatorSpec::DeltaPeak];
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(0.05..late_max - 0.01);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let z = rng.random_range(-1.0..1.0f64);
        let r = (1.0 - z * z).sqrt();
        let rx = Point64::new(12.0 + d * r * theta.cos(), 12.0 + d * r * theta.sin(), 12.0 + d * z);
        let truth = source.distance(&rx);
        let clean = CleanReception::from_broadcast(&broadcast, &room, &source, &rx, &chain)?;
        let snippet = clean.observe(&NoiseSpec::noiseless())?;
        for e in ranger.estimate_many(&snippet, &estimators)? {
            worst = worst.max((e.distance - truth).abs());
        }
    }
    ensure(
        worst <= quantum && (span - 10.2).abs() < 1e-9 && (late_max - 9.86).abs() < 1e-9,
        format!(
            "worst error {:.3} mm over 100 distances (limit {:.3} mm); span {span:.2} m, late-wake max {late_max:.2} m",
            worst * 1e3,
            quantum * 1e3
        ),
    )
}

fn criterion_8() -> Check {
    let exe = env!("CARGO_BIN_EXE_chirp-ranging");
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for dir in &dirs {
        let status = Command::new(exe)
            .args(["grid", "--alpha", "0.3", "--snr", "3,inf", "--seed", "42", "--trials", "2", "--out"])
            .arg(dir.path())
            .env_remove("RAYON_NUM_THREADS")
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(Fail(format!("grid exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr))));
        }
    }
    let mut compared = Vec::new();
    for name in ["results.csv", "summary.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(name)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(Fail(format!("{name} differs between runs")));
        }
        compared.push(format!("{name} ({} bytes)", a.len()));
    }
    Ok(format!("{} identical across two runs", compared.join(" and ")))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("chirp autocorrelation oracle", criterion_1),
        ("Monte Carlo precision and collapse", criterion_2),
        ("reverberation degradation", criterion_3),
        ("estimator ordering at 3 dB", criterion_4),
        ("prominence oracle", criterion_5),
        ("power budget", criterion_6),
        ("free-field geometry", criterion_7),
        ("grid determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(Fail(format!("panicked: {:?}", p.downcast_ref::<String>().cloned().unwrap_or_default()))));
        match result {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(Fail(detail)) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
