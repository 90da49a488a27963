use std::path::Path;

use anyhow::Context;
use chirp_ranging::experiments::{ExperimentConfig, GridSpec, ReceiverLayout, Scale};
use chirp_ranging::power::{self, ComponentBudget};
use chirp_ranging::{ChirpSpec, Detector, EstimatorSpec, Point3, RoomSpec, TimingSpec, WindowSpec};
use serde::{Deserialize, Serialize};

/// Contents of the TOML configuration file. Every section is optional and
/// falls back to the reference setup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub room: RoomSection,
    pub chirp: ChirpSection,
    pub timing: TimingSection,
    pub source: PointSection,
    /// Defaults to 1.553 m from the source along -x.
    pub receiver: Option<PointSection>,
    pub grid: Option<GridSpec>,
    pub experiment: ExperimentSection,
    pub power: PowerSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomSection {
    pub dims: [f64; 3],
    pub absorption: f64,
    pub speed_of_sound: f64,
}

impl Default for RoomSection {
    fn default() -> Self {
        Self { dims: [6.0, 4.0, 2.5], absorption: 0.9, speed_of_sound: 340.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChirpSection {
    pub f_start: f64,
    pub f_end: f64,
    pub tau_tx: f64,
    pub amplitude: f64,
    pub sample_rate: f64,
}

impl Default for ChirpSection {
    fn default() -> Self {
        let c = ChirpSpec::<f64>::reference();
        Self { f_start: c.f_start, f_end: c.f_end, tau_tx: c.tau_tx, amplitude: c.amplitude, sample_rate: c.sample_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSection {
    pub tau_rx: f64,
    /// Defaults to the late wake-up `tau_tx - tau_rx`.
    pub wake_offset: Option<f64>,
}

impl Default for TimingSection {
    fn default() -> Self {
        Self { tau_rx: 0.001, wake_offset: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSection {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for PointSection {
    fn default() -> Self {
        let p = ExperimentConfig::reference_source();
        Self { x: p.x, y: p.y, z: p.z }
    }
}

impl From<PointSection> for Point3<f64> {
    fn from(p: PointSection) -> Self {
        Point3::new(p.x, p.y, p.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    /// Overrides the scale's trial count.
    pub trials: Option<usize>,
    /// `"inf"` or a number.
    pub snr_db: Vec<SnrValue>,
    pub estimators: Vec<String>,
    pub ppf: f64,
    pub ppf_values: Vec<f64>,
    pub detector: Detector,
    pub adc_bits: Option<u32>,
    pub max_order: Option<u32>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: None,
            snr_db: Vec::new(),
            estimators: Vec::new(),
            ppf: chirp_ranging::estimators::DEFAULT_PPF,
            ppf_values: vec![5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 65.0, 80.0, 90.0, 100.0],
            detector: Detector::default(),
            adc_bits: Some(12),
            max_order: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrValue {
    Number(f64),
    Text(SnrText),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrText {
    Inf,
}

impl SnrValue {
    pub fn db(self) -> f64 {
        match self {
            SnrValue::Number(v) => v,
            SnrValue::Text(SnrText::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSection {
    pub supply_voltage: f64,
    pub active_time: f64,
    pub period: f64,
    pub capacity_mah: f64,
    pub shelf_life_years: f64,
    pub components: Vec<ComponentBudget<f64>>,
}

impl Default for PowerSection {
    fn default() -> Self {
        Self {
            supply_voltage: power::REFERENCE_SUPPLY_V,
            active_time: power::REFERENCE_ACTIVE_S,
            period: power::REFERENCE_PERIOD_S,
            capacity_mah: power::CR2032_CAPACITY_MAH,
            shelf_life_years: power::CR2032_SHELF_LIFE_Y,
            components: power::reference_node(),
        }
    }
}

pub const REFERENCE_RANGE_M: f64 = 1.553;

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub snr: Vec<f64>,
    pub estimators: Vec<String>,
    pub ppf: Vec<f64>,
    pub trials: Option<usize>,
    pub detector: Option<Detector>,
}

pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// Parses `name[:parameter]`, e.g. `linear:-0.5`, `exponential:0.003`, `prominence:40`.
pub fn parse_estimator(text: &str, default_ppf: f64) -> Result<Vec<EstimatorSpec<f64>>, String> {
    let (name, arg) = match text.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (text.trim(), None),
    };
    let number = |default: f64| -> Result<f64, String> {
        arg.map_or(Ok(default), |a| a.parse().map_err(|_| format!("bad parameter {a:?} for estimator {name}")))
    };
    let one = match name {
        "all" | "standard" => {
            let mut set = EstimatorSpec::standard_set();
            for e in &mut set {
                if let EstimatorSpec::Prominence { ppf } = e {
                    *ppf = default_ppf;
                }
            }
            return Ok(set);
        }
        "maximum" | "max" => EstimatorSpec::Maximum,
        "linear" => EstimatorSpec::Windowed { window: WindowSpec::Linear { slope: number(-1.0)? } },
        "quadratic_pos" | "quadratic" => EstimatorSpec::Windowed { window: WindowSpec::QuadraticPos },
        "quadratic_neg" => EstimatorSpec::Windowed { window: WindowSpec::QuadraticNeg },
        "exponential" => EstimatorSpec::Windowed {
            window: WindowSpec::Exponential { half_life: number(chirp_ranging::estimators::DEFAULT_HALF_LIFE)? },
        },
        "prominence" => EstimatorSpec::Prominence { ppf: number(default_ppf)? },
        "delta_peak" | "delta" => EstimatorSpec::DeltaPeak,
        other => return Err(format!("unknown estimator {other:?}")),
    };
    Ok(vec![one])
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub receiver: Point3<f64>,
    pub grid: GridSpec,
    pub ppf_values: Vec<f64>,
    pub trials_explicit: bool,
    pub power: PowerSection,
}

impl Resolved {
    /// Single-receiver configuration for Monte Carlo runs.
    pub fn monte_carlo(&self, scale: Scale) -> ExperimentConfig {
        let mut cfg = self.experiment.clone();
        cfg.receivers = ReceiverLayout::Points { points: vec![self.receiver] };
        if !self.trials_explicit {
            cfg.trials = scale.monte_carlo_trials();
        }
        cfg
    }

    pub fn grid(&self) -> ExperimentConfig {
        let mut cfg = self.experiment.clone();
        cfg.receivers = ReceiverLayout::Grid(self.grid);
        cfg
    }
}

/// Merges file and flags and checks everything, reporting all problems at once.
/// `default_snr` applies when neither the file nor the flags name an SNR.
pub fn resolve(
    file: &FileConfig,
    ov: &Overrides,
    scale: Scale,
    default_snr: &[f64],
) -> Result<Resolved, Vec<String>> {
    let mut problems = Vec::new();
    let alpha = ov.alpha.unwrap_or(file.room.absorption);
    let room = RoomSpec { dims: file.room.dims, absorption: alpha, speed_of_sound: file.room.speed_of_sound };
    let ch = &file.chirp;
    let chirp = ChirpSpec {
        f_start: ch.f_start,
        f_end: ch.f_end,
        tau_tx: ch.tau_tx,
        amplitude: ch.amplitude,
        sample_rate: ch.sample_rate,
    };
    let timing = TimingSpec {
        tau_tx: ch.tau_tx,
        tau_rx: file.timing.tau_rx,
        wake_offset: file.timing.wake_offset.unwrap_or(ch.tau_tx - file.timing.tau_rx),
        speed_of_sound: file.room.speed_of_sound,
        sample_rate: ch.sample_rate,
    };
    let ex = &file.experiment;
    let ppf = ov.ppf.first().copied().unwrap_or(ex.ppf);
    let names: Vec<String> = if !ov.estimators.is_empty() {
        ov.estimators.clone()
    } else if !ex.estimators.is_empty() {
        ex.estimators.clone()
    } else {
        vec!["all".into()]
    };
    let mut estimators = Vec::new();
    for n in &names {
        match parse_estimator(n, ppf) {
            Ok(mut e) => estimators.append(&mut e),
            Err(msg) => problems.push(msg),
        }
    }
    let snr_db: Vec<f64> = if !ov.snr.is_empty() {
        ov.snr.clone()
    } else if !ex.snr_db.is_empty() {
        ex.snr_db.iter().map(|s| s.db()).collect()
    } else {
        default_snr.to_vec()
    };
    let trials_explicit = ov.trials.is_some() || ex.trials.is_some();
    let experiment = ExperimentConfig {
        room,
        chirp,
        timing,
        source: file.source.into(),
        receivers: ReceiverLayout::Points { points: vec![file_receiver(file)] },
        snr_db,
        estimators,
        trials: ov.trials.or(ex.trials).unwrap_or(1),
        master_seed: ov.seed.unwrap_or(ex.seed),
        detector: ov.detector.unwrap_or(ex.detector),
        adc_bits: ex.adc_bits,
        max_order: ex.max_order,
    };
    let grid = file.grid.unwrap_or_else(|| scale.grid());
    problems.extend(experiment.problems());
    if let Err(e) = grid.validate(&experiment.room) {
        problems.push(e.to_string());
    }
    let ppf_values = if ov.ppf.len() > 1 { ov.ppf.clone() } else { ex.ppf_values.clone() };
    if ppf_values.is_empty() || ppf_values.iter().any(|p| !(*p > 0.0)) {
        problems.push("PPF values must be positive and non-empty".into());
    }
    let p = &file.power;
    if !(p.capacity_mah > 0.0) || !(p.shelf_life_years > 0.0) {
        problems.push("battery capacity and shelf life must be positive".into());
    }
    if let Err(e) = power::duty_cycle_power(&p.components, p.supply_voltage, p.active_time, p.period) {
        problems.push(e.to_string());
    }
    problems.dedup();
    if !problems.is_empty() {
        return Err(problems);
    }
    Ok(Resolved {
        receiver: file_receiver(file),
        experiment,
        grid,
        ppf_values,
        trials_explicit,
        power: file.power.clone(),
    })
}

fn file_receiver(file: &FileConfig) -> Point3<f64> {
    match file.receiver {
        Some(p) => p.into(),
        None => Point3::new(file.source.x - REFERENCE_RANGE_M, file.source.y, file.source.z),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_reference_setup() {
        let r = resolve(&FileConfig::default(), &Overrides::default(), Scale::Desk, &[20.0]).unwrap();
        assert_eq!(r.experiment.estimators.len(), 4);
        assert_eq!(r.experiment.timing, chirp_ranging::TimingSpec::reference());
        assert!((r.experiment.source.distance(&r.receiver) - 1.553).abs() < 1e-9);
        assert_eq!(r.grid, Scale::Desk.grid());
        assert_eq!(r.monte_carlo(Scale::Paper).trials, 10_000);
    }

    #[test]
    fn every_problem_is_reported() {
        let mut f = FileConfig::default();
        f.room.absorption = 1.5;
        f.chirp.f_start = 120_000.0;
        f.source = PointSection { x: 50.0, y: 1.0, z: 1.0 };
        let ov = Overrides { estimators: vec!["bogus".into()], ..Default::default() };
        let errs = resolve(&f, &ov, Scale::Desk, &[20.0]).unwrap_err();
        assert!(errs.len() >= 4, "{errs:?}");
    }

    #[test]
    fn toml_sections_parse() {
        let text = r#"
            [room]
            absorption = 0.3
            [experiment]
            snr_db = [3, "inf"]
            estimators = ["maximum", "prominence:40", "linear:-0.5"]
            [grid]
            nx = 4
            ny = 3
            spacing = 0.5
            margin = 0.2
            z = 1.0
        "#;
        let f: FileConfig = toml::from_str(text).unwrap();
        let r = resolve(&f, &Overrides::default(), Scale::Desk, &[20.0]).unwrap();
        assert_eq!(r.experiment.snr_db, vec![3.0, f64::INFINITY]);
        assert_eq!(r.experiment.estimators[1], EstimatorSpec::Prominence { ppf: 40.0 });
        assert_eq!(r.grid.nx, 4);
        assert!(toml::from_str::<FileConfig>("[room]\ncolour = 1").is_err());
    }

    #[test]
    fn flags_override_file() {
        let ov = Overrides { alpha: Some(0.05), snr: vec![6.0], seed: Some(9), ..Default::default() };
        let r = resolve(&FileConfig::default(), &ov, Scale::Desk, &[20.0]).unwrap();
        assert_eq!(r.experiment.room.absorption, 0.05);
        assert_eq!(r.experiment.snr_db, vec![6.0]);
        assert_eq!(r.experiment.master_seed, 9);
    }
}
