use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chirp_ranging::experiments::{
    compare_estimators, run_grid_sweep, run_monte_carlo, run_ppf_sweep, EstimatorSummary, ExperimentConfig,
    Heatmap, ResultRecord, Scale,
};
use chirp_ranging::io::{self, fmt_float, WaveformFormat};
use chirp_ranging::power::{battery_life, duty_cycle_power, raw_battery_life};
use chirp_ranging::stats::empirical_cdf;
use chirp_ranging::{compute_rir, generate_chirp, CleanReception, NoiseSpec, Ranger, Template, Waveform};
use serde_json::{json, Value};

use crate::config::{self, Overrides, Resolved};
use crate::svg::{self, Series};
use crate::{Cli, Command, Failure, FormatArg};

type Outcome = Result<(), Failure>;

pub fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    let file = config::load(c.config.as_deref()).map_err(|e| Failure::Config(vec![format!("{e:#}")]))?;
    let overrides = Overrides {
        seed: c.seed,
        alpha: c.alpha,
        snr: c.snr.clone(),
        estimators: c.estimator.clone(),
        ppf: c.ppf.clone(),
        trials: c.trials,
        detector: c.detector.map(Into::into),
    };
    let scale: Scale = c.scale.into();
    let default_snr: &[f64] = match cli.command {
        Command::Mc => &[20.0],
        Command::Ppf => &[0.0, 3.0, 10.0, 20.0],
        Command::Compare => &[f64::INFINITY, 20.0, 3.0],
        _ => &[f64::INFINITY],
    };
    let resolved = config::resolve(&file, &overrides, scale, default_snr).map_err(Failure::Config)?;
    let ctx = Runner { out: c.out.clone(), scale, resolved, format: c.format };
    match &cli.command {
        Command::Synth => ctx.synth(),
        Command::Rir => ctx.rir(),
        Command::Range { template } => {
            let input = c.input.as_deref().ok_or_else(|| Failure::Config(vec!["range needs --input".into()]))?;
            ctx.range(input, template)
        }
        Command::Mc => ctx.monte_carlo(),
        Command::Grid => ctx.grid(),
        Command::Ppf => ctx.ppf(),
        Command::Compare => ctx.compare(),
        Command::Power => ctx.power(),
    }
}

struct Runner {
    out: PathBuf,
    scale: Scale,
    resolved: Resolved,
    format: Option<FormatArg>,
}

fn snr_value(snr: f64) -> Value {
    if snr.is_finite() {
        json!(snr)
    } else if snr > 0.0 {
        json!("inf")
    } else {
        json!(snr.to_string())
    }
}

fn snr_tag(snr: f64) -> String {
    if snr.is_finite() {
        format!("{snr}dB")
    } else {
        "noiseless".into()
    }
}

fn config_value(cfg: &ExperimentConfig) -> Value {
    let mut v = serde_json::to_value(cfg).unwrap_or(Value::Null);
    if let Some(obj) = v.as_object_mut() {
        obj.insert("snr_db".into(), Value::Array(cfg.snr_db.iter().map(|s| snr_value(*s)).collect()));
    }
    v
}

fn summaries_value(summaries: &[EstimatorSummary]) -> Value {
    Value::Array(
        summaries
            .iter()
            .map(|s| {
                json!({
                    "estimator": s.estimator,
                    "snr_db": snr_value(s.snr_db),
                    "n": s.stats.n,
                    "mean": s.stats.mean,
                    "p50": s.stats.p50,
                    "p95": s.stats.p95,
                    "p100": s.stats.p100,
                    "epsilon": s.stats.epsilon,
                    "sigma": s.stats.sigma,
                })
            })
            .collect(),
    )
}

fn cdf_series(records: &[ResultRecord], summaries: &[EstimatorSummary]) -> anyhow::Result<Vec<Series>> {
    summaries
        .iter()
        .map(|s| {
            let errors: Vec<f64> = records
                .iter()
                .filter(|r| r.estimator == s.estimator && (r.snr_db == s.snr_db))
                .map(|r| r.abs_error)
                .collect();
            let label = if summaries.iter().any(|o| o.snr_db != s.snr_db) {
                format!("{} {}", s.estimator, snr_tag(s.snr_db))
            } else {
                s.estimator.clone()
            };
            Ok(Series { label, points: empirical_cdf(&errors)? })
        })
        .collect()
}

impl Runner {
    fn ensure_out(&self) -> anyhow::Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))
    }

    fn write(&self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        self.ensure_out()?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn write_json(&self, name: &str, value: &Value) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn save_results(&self, records: &[ResultRecord]) -> anyhow::Result<PathBuf> {
        self.ensure_out()?;
        let path = self.out.join("results.csv");
        io::save_results(&path, records).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn wave_format(&self, path_hint: Option<&Path>) -> WaveformFormat {
        match self.format {
            Some(FormatArg::Wav) => WaveformFormat::WavPcm16,
            Some(FormatArg::Csv) => WaveformFormat::CsvFloat,
            None => path_hint.and_then(WaveformFormat::from_path).unwrap_or(WaveformFormat::CsvFloat),
        }
    }

    fn heatmaps(&self, maps: &[Heatmap]) -> anyhow::Result<()> {
        for h in maps {
            let name = format!("heatmap_{}_{}.svg", file_stem(&h.estimator), snr_tag(h.snr_db));
            let title = format!("Mean |error| {} at {}, alpha {}", h.estimator, snr_tag(h.snr_db), self.resolved.experiment.room.absorption);
            self.write(&name, &svg::heatmap(&title, &h.cells, h.spacing, h.margin))?;
        }
        Ok(())
    }

    fn synth(&self) -> Outcome {
        let cfg = &self.resolved.experiment;
        let format = self.wave_format(None);
        let ext = if format == WaveformFormat::WavPcm16 { "wav" } else { "csv" };
        let chirp = generate_chirp(&cfg.chirp)?;
        self.ensure_out()?;
        io::save_waveform(&self.out.join(format!("chirp.{ext}")), format, &chirp)?;
        let clean =
            CleanReception::from_broadcast(&chirp, &cfg.room, &cfg.source, &self.resolved.receiver, &cfg.chain())?;
        let seed = chirp_ranging::experiments::trial_seed(cfg.master_seed, 0, 0);
        let snippets = cfg
            .snr_db
            .iter()
            .map(|&snr| clean.observe(&NoiseSpec::new(snr, seed)))
            .collect::<chirp_ranging::Result<Vec<_>>>()?;
        let mut files = Vec::new();
        match format {
            WaveformFormat::CsvFloat => {
                let path = self.out.join("snippets.csv");
                let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
                io::write_waveforms_csv(std::io::BufWriter::new(file), &snippets.iter().collect::<Vec<_>>())?;
                files.push("snippets.csv".to_string());
            }
            WaveformFormat::WavPcm16 => {
                for (snr, s) in cfg.snr_db.iter().zip(&snippets) {
                    let peak = s.peak_abs();
                    let s = if peak > 1.0 { s.scaled(1.0 / peak) } else { s.clone() };
                    let name = format!("snippet_{}.wav", snr_tag(*snr));
                    io::write_wav(&self.out.join(&name), &s)?;
                    files.push(name);
                }
            }
        }
        self.write_json(
            "summary.json",
            &json!({
                "command": "synth",
                "chirp_samples": chirp.len(),
                "snippet_samples": snippets.first().map_or(0, Waveform::len),
                "true_distance_m": clean.true_distance,
                "snr_db": cfg.snr_db.iter().map(|s| snr_value(*s)).collect::<Vec<_>>(),
                "snippet_files": files,
                "config": config_value(cfg),
            }),
        )?;
        println!(
            "wrote chirp.{ext} ({} samples) and {} snippet(s) of {} samples, true distance {:.4} m",
            chirp.len(),
            snippets.len(),
            snippets.first().map_or(0, Waveform::len),
            clean.true_distance
        );
        Ok(())
    }

    fn rir(&self) -> Outcome {
        let cfg = &self.resolved.experiment;
        let order = cfg.max_order.unwrap_or_else(|| cfg.room.default_max_order());
        let length = cfg.timing.wake_offset + cfg.timing.tau_rx;
        let rir = compute_rir(&cfg.room, &cfg.source, &self.resolved.receiver, cfg.chirp.sample_rate, order, length)?;
        self.ensure_out()?;
        io::save_waveform(&self.out.join("rir.csv"), WaveformFormat::CsvFloat, &rir.taps)?;
        let direct = rir.direct_index(cfg.room.speed_of_sound);
        let distance = cfg.source.distance(&self.resolved.receiver);
        self.write_json(
            "summary.json",
            &json!({
                "command": "rir",
                "max_order": order,
                "image_count": rir.image_count,
                "taps": rir.taps.len(),
                "direct_index": direct,
                "true_distance_m": distance,
                "reflection_coefficient": cfg.room.reflection_coefficient(),
                "config": config_value(cfg),
            }),
        )?;
        println!(
            "RIR: {} taps, order {order}, {} images, direct path at tap {direct} ({distance:.4} m)",
            rir.taps.len(),
            rir.image_count
        );
        Ok(())
    }

    fn range(&self, input: &Path, template: &str) -> Outcome {
        let cfg = &self.resolved.experiment;
        let rate = Some(cfg.chirp.sample_rate);
        let snippets = io::load_snippets(input, self.wave_format(Some(input)), rate)
            .with_context(|| format!("reading {}", input.display()))?;
        let template = if template == "paper-chirp" {
            Template::from_chirp(&cfg.chirp)?
        } else {
            let path = Path::new(template);
            let fmt = WaveformFormat::from_path(path).unwrap_or(WaveformFormat::CsvFloat);
            Template::new(io::load_waveform(path, fmt, rate).with_context(|| format!("reading {}", path.display()))?)
        };
        let ranger = Ranger::new(template, cfg.timing).with_detector(cfg.detector);
        let mut csv = String::from("snippet,estimator,lag,distance_m,in_range\n");
        println!("{:<8} {:<22} {:>8} {:>14}", "snippet", "estimator", "lag", "distance_m");
        for (i, s) in snippets.iter().enumerate() {
            let estimates = ranger.estimate_many(s, &cfg.estimators).with_context(|| format!("snippet {i}"))?;
            for (spec, e) in cfg.estimators.iter().zip(estimates) {
                let label = spec.label();
                csv.push_str(&format!("{i},{label},{},{},{}\n", e.lag, fmt_float(e.distance), e.in_range()));
                let shown = if e.in_range() { format!("{:.6}", e.distance) } else { "out of range".into() };
                println!("{i:<8} {label:<22} {:>8} {shown:>14}", e.lag);
            }
        }
        self.write("range.csv", &csv)?;
        Ok(())
    }

    fn monte_carlo(&self) -> Outcome {
        let cfg = self.resolved.monte_carlo(self.scale);
        let outcome = run_monte_carlo(&cfg)?;
        self.save_results(&outcome.records)?;
        let densities: Vec<Value> = outcome
            .summaries
            .iter()
            .zip(&outcome.densities)
            .map(|(s, d)| {
                json!({
                    "estimator": s.estimator,
                    "snr_db": snr_value(s.snr_db),
                    "bandwidth": d.bandwidth,
                    "modes": d.modes(),
                })
            })
            .collect();
        self.write_json(
            "summary.json",
            &json!({
                "command": "mc",
                "scale": format!("{:?}", self.scale).to_lowercase(),
                "true_distance_m": outcome.records.first().map(|r| r.true_distance),
                "summaries": summaries_value(&outcome.summaries),
                "densities": densities,
                "config": config_value(&cfg),
            }),
        )?;
        let series = cdf_series(&outcome.records, &outcome.summaries)?;
        self.write("cdf.svg", &svg::cdf("Monte Carlo |error| CDF", &series))?;
        let kde: Vec<Series> = outcome
            .summaries
            .iter()
            .zip(&outcome.densities)
            .map(|(s, d)| Series {
                label: format!("{} {}", s.estimator, snr_tag(s.snr_db)),
                points: d.grid.iter().copied().zip(d.density.iter().copied()).collect(),
            })
            .collect();
        self.write("density.svg", &svg::lines("Estimated distance density", "distance_m", "density", &kde))?;
        print_summaries(&outcome.summaries);
        Ok(())
    }

    fn grid(&self) -> Outcome {
        let cfg = self.resolved.grid();
        let outcome = run_grid_sweep(&cfg)?;
        self.save_results(&outcome.records)?;
        self.write_json(
            "summary.json",
            &json!({
                "command": "grid",
                "scale": format!("{:?}", self.scale).to_lowercase(),
                "receivers": cfg.receivers.points().len(),
                "summaries": summaries_value(&outcome.summaries),
                "config": config_value(&cfg),
            }),
        )?;
        self.heatmaps(&outcome.heatmaps)?;
        let series = cdf_series(&outcome.records, &outcome.summaries)?;
        self.write("cdf.svg", &svg::cdf("Grid |error| CDF", &series))?;
        print_summaries(&outcome.summaries);
        Ok(())
    }

    fn ppf(&self) -> Outcome {
        let cfg = self.resolved.grid();
        let sweep = run_ppf_sweep(&cfg, &self.resolved.ppf_values)?;
        let mut csv = String::from("snr_db,ppf,mean,p50,p95,p100\n");
        for r in &sweep.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.snr_db,
                r.ppf,
                fmt_float(r.stats.mean),
                fmt_float(r.stats.p50),
                fmt_float(r.stats.p95),
                fmt_float(r.stats.p100)
            ));
        }
        self.write("ppf.csv", &csv)?;
        let bands: Vec<Value> = sweep
            .bands
            .iter()
            .map(|b| {
                json!({
                    "snr_db": snr_value(b.snr_db),
                    "best_ppf": b.best_ppf,
                    "min_p95": b.min_p95,
                    "band_low": b.low,
                    "band_high": b.high,
                    "members": b.members,
                })
            })
            .collect();
        let fit = sweep.fit.map(|f| json!({"a": f.a, "b": f.b, "c": f.c, "sse": f.sse}));
        self.write_json(
            "summary.json",
            &json!({"command": "ppf", "bands": bands, "fit": fit, "config": config_value(&cfg)}),
        )?;
        let mut series = Vec::new();
        for &snr in &cfg.snr_db {
            let points = sweep.rows.iter().filter(|r| r.snr_db == snr).map(|r| (r.ppf, r.stats.p95)).collect();
            series.push(Series { label: snr_tag(snr), points });
        }
        self.write("ppf.svg", &svg::lines("Prominence P95 error vs PPF", "ppf", "p95_m", &series))?;
        println!("{:>10} {:>9} {:>10} {:>14}", "snr_db", "best_ppf", "min_p95", "band");
        for b in &sweep.bands {
            println!("{:>10} {:>9} {:>10.4} {:>14}", snr_tag(b.snr_db), b.best_ppf, b.min_p95, format!("[{}, {}]", b.low, b.high));
        }
        if let Some(f) = sweep.fit {
            println!("best PPF fit: {:.4} * exp({:.4} * snr) + {:.4}", f.a, f.b, f.c);
        }
        Ok(())
    }

    fn compare(&self) -> Outcome {
        let cfg = self.resolved.grid();
        let (rows, outcome) = compare_estimators(&cfg, &cfg.snr_db)?;
        self.save_results(&outcome.records)?;
        let mut csv = String::from("estimator,snr_db,mean,p50,p95\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.estimator,
                r.snr_db,
                fmt_float(r.mean),
                fmt_float(r.p50),
                fmt_float(r.p95)
            ));
        }
        self.write("compare.csv", &csv)?;
        self.write_json(
            "summary.json",
            &json!({
                "command": "compare",
                "summaries": summaries_value(&outcome.summaries),
                "config": config_value(&cfg),
            }),
        )?;
        self.heatmaps(&outcome.heatmaps)?;
        let series = cdf_series(&outcome.records, &outcome.summaries)?;
        self.write("cdf.svg", &svg::cdf("Estimator comparison |error| CDF", &series))?;
        print_summaries(&outcome.summaries);
        Ok(())
    }

    fn power(&self) -> Outcome {
        let p = &self.resolved.power;
        let b = duty_cycle_power(&p.components, p.supply_voltage, p.active_time, p.period)?;
        let raw = raw_battery_life(b.total_nw, p.capacity_mah, p.supply_voltage);
        let life = battery_life(b.total_nw, p.capacity_mah, p.supply_voltage, p.shelf_life_years);
        let mut csv = String::from("component,active_nw,passive_nw,total_nw\n");
        println!("{:<12} {:>12} {:>12} {:>12}", "Component", "Active [nW]", "Passive [nW]", "Total [nW]");
        for c in &b.components {
            csv.push_str(&format!("{},{:.1},{:.1},{:.1}\n", c.name, c.active_nw, c.passive_nw, c.total_nw));
            println!("{:<12} {:>12.1} {:>12.1} {:>12.1}", c.name, c.active_nw, c.passive_nw, c.total_nw);
        }
        csv.push_str(&format!("Total,{:.1},{:.1},{:.1}\n", b.active_nw, b.passive_nw, b.total_nw));
        println!("{:<12} {:>12.1} {:>12.1} {:>12.1}", "Total", b.active_nw, b.passive_nw, b.total_nw);
        println!(
            "duty cycle {}, mean current {:.3} uA, battery life {:.2} y ({:.2} y before shelf-life cap)",
            b.duty_cycle,
            b.mean_current_ua(),
            life,
            raw
        );
        self.write("power.csv", &csv)?;
        self.write_json(
            "summary.json",
            &json!({
                "command": "power",
                "breakdown": b,
                "mean_current_ua": b.mean_current_ua(),
                "battery_life_years": life,
                "raw_battery_life_years": raw,
                "capacity_mah": p.capacity_mah,
                "shelf_life_years": p.shelf_life_years,
            }),
        )?;
        Ok(())
    }
}

fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn print_summaries(summaries: &[EstimatorSummary]) {
    println!("{:<22} {:>10} {:>6} {:>10} {:>10} {:>10} {:>10}", "estimator", "snr", "n", "mean", "p50", "p95", "sigma");
    for s in summaries {
        let sigma = s.stats.sigma.map_or_else(|| "-".into(), |v| format!("{v:.5}"));
        println!(
            "{:<22} {:>10} {:>6} {:>10.5} {:>10.5} {:>10.5} {:>10}",
            s.estimator,
            snr_tag(s.snr_db),
            s.stats.n,
            s.stats.mean,
            s.stats.p50,
            s.stats.p95,
            sigma
        );
    }
}
