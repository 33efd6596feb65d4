//! JSON scenario files. Every technology block defaults to the reference
//! cost assumptions; any field may be overridden.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::weather::{align, synth_weather, SynthParams, WeatherTable};
use crate::demand::{CrossElasticitySpec, DemandCurve, DemandModel, DemandSegment};
use crate::dispatch::{split_years, BatteryTerminal, ExperimentKind, SplitMode};
use crate::error::{Error, Result};
use crate::model::{
    defaults, CostComponent, GeneratorTech, Representation,
    StorageTech, SystemConfig, TimeGrid,
};
use crate::solver::SolveOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default = "default_dataset")]
    pub country_or_dataset: String,
    pub time: TimeSpec,
    #[serde(default)]
    pub weather: WeatherSource,
    #[serde(default)]
    pub technologies: TechnologySpec,
    pub demand: DemandSpec,
    #[serde(default = "default_representation")]
    pub representation: Representation,
    pub experiment: ExperimentSpec,
    /// Relative change applied to all fixed capacities of short-term runs.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_dataset() -> String {
    "synthetic".into()
}

fn default_representation() -> Representation {
    Representation::LoadShedding
}

fn one() -> u32 {
    1
}

/// Either an explicit `[start, end)` range or whole weather years selected by
/// a year split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<DateTime<Utc>>,
    #[serde(default = "one")]
    pub resolution_h: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year_split: Option<YearSplitSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearSplitSpec {
    pub split: SplitMode,
    /// Use only the first `count` years of the relevant list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Use only the first hours of each year (desk-scale runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hours_per_year: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeatherSource {
    Synthetic {
        #[serde(default = "default_seed")]
        seed: u64,
        #[serde(default)]
        params: SynthParams,
    },
    /// Relative paths are resolved against the scenario file's directory.
    Csv { path: PathBuf },
}

fn default_seed() -> u64 {
    1
}

impl Default for WeatherSource {
    fn default() -> Self {
        WeatherSource::Synthetic {
            seed: default_seed(),
            params: SynthParams::default(),
        }
    }
}

/// Overrides of one cost component; absent fields keep the default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub investment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fom_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<f64>,
}

impl CostOverride {
    fn apply(&self, base: CostComponent<f64>) -> CostComponent<f64> {
        CostComponent::new(
            self.investment.unwrap_or(base.investment),
            self.fom_fraction.unwrap_or(base.fom_fraction),
            self.lifetime.unwrap_or(base.lifetime),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub cost: CostOverride,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_capacity: Option<f64>,
}

fn yes() -> bool {
    true
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            cost: CostOverride::default(),
            min_capacity: None,
            max_capacity: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discharge_efficiency: Option<f64>,
    #[serde(default)]
    pub charge_cost: CostOverride,
    #[serde(default)]
    pub discharge_cost: CostOverride,
    #[serde(default)]
    pub energy_cost: CostOverride,
    /// Forced minimum discharge capacity (MW).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_discharge_capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_energy_capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cyclic_soc: Option<bool>,
}

impl Default for StorageSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            charge_efficiency: None,
            discharge_efficiency: None,
            charge_cost: CostOverride::default(),
            discharge_cost: CostOverride::default(),
            energy_cost: CostOverride::default(),
            min_discharge_capacity: None,
            max_energy_capacity: None,
            cyclic_soc: None,
        }
    }
}

/// Optional dispatchable backup plant with constant availability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchableSpec {
    #[serde(default = "dispatchable_cost")]
    pub marginal_cost: f64,
    #[serde(default)]
    pub cost: CostOverride,
}

fn dispatchable_cost() -> f64 {
    defaults::DISPATCHABLE_MARGINAL_COST
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnologySpec {
    #[serde(default = "discount_rate")]
    pub discount_rate: f64,
    #[serde(default)]
    pub wind: GeneratorSpec,
    #[serde(default)]
    pub solar: GeneratorSpec,
    #[serde(default)]
    pub battery: StorageSpec,
    #[serde(default)]
    pub hydrogen: StorageSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispatchable: Option<DispatchableSpec>,
}

fn discount_rate() -> f64 {
    defaults::DISCOUNT_RATE
}

impl Default for TechnologySpec {
    fn default() -> Self {
        Self {
            discount_rate: discount_rate(),
            wind: GeneratorSpec::default(),
            solar: GeneratorSpec::default(),
            battery: StorageSpec::default(),
            hydrogen: StorageSpec::default(),
            dispatchable: None,
        }
    }
}

fn apply_generator(spec: &GeneratorSpec, mut base: GeneratorTech<f64>) -> Option<GeneratorTech<f64>> {
    if !spec.enabled {
        return None;
    }
    base.cost = spec.cost.apply(base.cost);
    if let Some(v) = spec.min_capacity {
        base.min_capacity = v;
    }
    if spec.max_capacity.is_some() {
        base.max_capacity = spec.max_capacity;
    }
    Some(base)
}

fn apply_storage(spec: &StorageSpec, mut base: StorageTech<f64>) -> Option<StorageTech<f64>> {
    if !spec.enabled {
        return None;
    }
    base.charge_efficiency = spec.charge_efficiency.unwrap_or(base.charge_efficiency);
    base.discharge_efficiency = spec.discharge_efficiency.unwrap_or(base.discharge_efficiency);
    base.charge_cost = spec.charge_cost.apply(base.charge_cost);
    base.discharge_cost = spec.discharge_cost.apply(base.discharge_cost);
    base.energy_cost = spec.energy_cost.apply(base.energy_cost);
    base.min_discharge_capacity = spec.min_discharge_capacity.unwrap_or(base.min_discharge_capacity);
    if spec.max_energy_capacity.is_some() {
        base.max_energy_capacity = spec.max_energy_capacity;
    }
    base.cyclic_soc = spec.cyclic_soc.unwrap_or(base.cyclic_soc);
    Some(base)
}

/// Demand curve as written in a scenario. Parameters default to the
/// reference curves; `scale` multiplies the piecewise-linear intercepts and
/// slopes (0.5 doubles the elasticity at 100 €/MWh, 2 halves it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandSpec {
    PerfectlyInelastic {
        #[serde(default = "hundred")]
        level: f64,
    },
    Voll {
        #[serde(default = "voll")]
        value: f64,
        #[serde(default = "hundred")]
        peak: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cross_elasticity: Option<CrossElasticitySpec<f64>>,
    },
    Linear {
        #[serde(default = "voll")]
        a: f64,
        #[serde(default = "twenty")]
        b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cross_elasticity: Option<CrossElasticitySpec<f64>>,
    },
    PiecewiseLinear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segments: Option<Vec<DemandSegment<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cross_elasticity: Option<CrossElasticitySpec<f64>>,
    },
}

fn hundred() -> f64 {
    100.0
}

fn voll() -> f64 {
    2000.0
}

fn twenty() -> f64 {
    20.0
}

impl DemandSpec {
    pub fn model(&self) -> Result<DemandModel<f64>> {
        let (curve, cross) = match self {
            DemandSpec::PerfectlyInelastic { level } => (DemandCurve::PerfectlyInelastic { level: *level }, None),
            DemandSpec::Voll { value, peak, cross_elasticity } => {
                (DemandCurve::Voll { value: *value, peak: *peak }, cross_elasticity.clone())
            }
            DemandSpec::Linear { a, b, cross_elasticity } => (DemandCurve::Linear { a: *a, b: *b }, cross_elasticity.clone()),
            DemandSpec::PiecewiseLinear { segments, scale, cross_elasticity } => {
                let base = match segments {
                    Some(s) => DemandCurve::PiecewiseLinear { segments: s.clone() },
                    None => DemandModel::pwl_default().curve,
                };
                let curve = match scale {
                    Some(k) if *k > 0.0 => base.scaled(*k),
                    Some(k) => return Err(Error::Config(format!("demand scale {k} must be positive"))),
                    None => base,
                };
                (curve, cross_elasticity.clone())
            }
        };
        let model = DemandModel { curve, cross_elasticity: cross };
        model.validate()?;
        Ok(model)
    }

    /// Short label used for output directories.
    pub fn label(&self) -> String {
        match self {
            DemandSpec::PerfectlyInelastic { .. } => "inelastic".into(),
            DemandSpec::Voll { cross_elasticity, .. } => with_cross("voll", cross_elasticity),
            DemandSpec::Linear { cross_elasticity, .. } => with_cross("linear", cross_elasticity),
            DemandSpec::PiecewiseLinear { scale, cross_elasticity, .. } => {
                let base = match scale {
                    Some(k) if *k != 1.0 => format!("pwl_x{k}"),
                    _ => "pwl".into(),
                };
                with_cross(&base, cross_elasticity)
            }
        }
    }
}

fn with_cross(base: &str, cross: &Option<CrossElasticitySpec<f64>>) -> String {
    match cross {
        Some(_) => format!("{base}_cross"),
        None => base.into(),
    }
}

/// What to run. Short-term capacities come from the command line or `capacities`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Lt {},
    StPerfect {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        capacities: Option<PathBuf>,
    },
    StMyopic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        capacities: Option<PathBuf>,
        #[serde(default = "default_horizon")]
        horizon: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        /// Constant medium value per price-taking storage (€/MWh).
        #[serde(default)]
        msv_bar: IndexMap<String, f64>,
        #[serde(default)]
        battery_terminal: BatteryTerminal,
    },
}

fn default_horizon() -> usize {
    96
}

fn default_stride() -> usize {
    48
}

impl ExperimentSpec {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentSpec::Lt {} => ExperimentKind::Lt,
            ExperimentSpec::StPerfect { .. } => ExperimentKind::StPerfect,
            ExperimentSpec::StMyopic { .. } => ExperimentKind::StMyopic,
        }
    }
}

/// A parsed scenario together with the exact bytes it was read from.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub raw: Vec<u8>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl LoadedScenario {
    pub fn from_path(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_bytes(raw, base_dir)
    }

    pub fn from_bytes(raw: Vec<u8>, base_dir: PathBuf) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_slice(&raw)?;
        file.validate()?;
        Ok(Self { file, raw, base_dir })
    }

    pub fn hash(&self) -> String {
        sha256_hex(&self.raw)
    }
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("scenario name is empty".into()));
        }
        if self.time.resolution_h == 0 {
            return Err(Error::Config("resolution_h must be at least 1".into()));
        }
        match (&self.time.year_split, self.time.start, self.time.end) {
            (Some(_), None, None) => {}
            (Some(_), _, _) => {
                return Err(Error::Config("time.start/end cannot be combined with year_split".into()))
            }
            (None, Some(s), Some(e)) if e > s => {}
            (None, _, _) => return Err(Error::Config("time needs start < end or a year_split".into())),
        }
        if !(self.perturbation > -1.0) {
            return Err(Error::Config(format!("perturbation {} must exceed −1", self.perturbation)));
        }
        self.demand.model()?;
        Ok(())
    }

    /// Hourly snapshots of the run, before aggregation to `resolution_h`.
    fn hours(&self, kind: ExperimentKind) -> Result<Vec<DateTime<Utc>>> {
        if let Some(ys) = &self.time.year_split {
            let split = split_years(&ys.split)?;
            let list = match kind {
                ExperimentKind::Lt => split.lt_years,
                _ => split.st_years,
            };
            let mut years: Vec<i32> = list.into_iter().take(ys.count.unwrap_or(usize::MAX)).collect();
            // Snapshots must increase, so the selected years run chronologically.
            years.sort_unstable();
            let mut out = Vec::new();
            for y in years {
                let start = Utc.with_ymd_and_hms(y, 1, 1, 0, 0, 0).single().ok_or_else(|| Error::Config(format!("bad year {y}")))?;
                let end = Utc.with_ymd_and_hms(y + 1, 1, 1, 0, 0, 0).single().ok_or_else(|| Error::Config(format!("bad year {y}")))?;
                let n = ((end - start).num_hours() as usize).min(ys.hours_per_year.unwrap_or(usize::MAX));
                out.extend((0..n).map(|h| start + Duration::hours(h as i64)));
            }
            if out.is_empty() {
                return Err(Error::Config("year split selects no snapshots".into()));
            }
            Ok(out)
        } else {
            let (start, end) = (self.time.start.expect("validated"), self.time.end.expect("validated"));
            let n = (end - start).num_hours() as usize;
            Ok((0..n).map(|h| start + Duration::hours(h as i64)).collect())
        }
    }

    fn weather(&self, base_dir: &Path, hours: &[DateTime<Utc>]) -> Result<WeatherTable> {
        match &self.weather {
            WeatherSource::Synthetic { seed, params } => {
                let mut years: Vec<i32> = hours.iter().map(|t| chrono::Datelike::year(t)).collect();
                years.dedup();
                align(&synth_weather(*seed, &years, params)?, hours)
            }
            WeatherSource::Csv { path } => {
                let p = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                super::weather::load_weather(&p, hours)
            }
        }
    }

    /// Hourly weather on the scenario's snapshots.
    pub fn resolve_weather(&self, base_dir: &Path, kind: ExperimentKind) -> Result<WeatherTable> {
        let hours = self.hours(kind)?;
        self.weather(base_dir, &hours)
    }

    /// Builds the system configuration on hourly weather. With
    /// `resolution_h > 1` consecutive hours are averaged into blocks weighted
    /// by their length; the last block may be shorter.
    pub fn system_config(&self, hourly: &WeatherTable) -> Result<SystemConfig<f64>> {
        let r = self.time.resolution_h as usize;
        let mut weather = WeatherTable { timestamps: Vec::new(), onwind: Vec::new(), solar: Vec::new(), clipped: hourly.clipped };
        let mut weights = Vec::new();
        let idx: Vec<usize> = (0..hourly.len()).collect();
        for chunk in idx.chunks(r) {
            let k = chunk.len() as f64;
            weather.timestamps.push(hourly.timestamps[chunk[0]]);
            weather.onwind.push(chunk.iter().map(|&i| hourly.onwind[i]).sum::<f64>() / k);
            weather.solar.push(chunk.iter().map(|&i| hourly.solar[i]).sum::<f64>() / k);
            weights.push(k);
        }
        let n = weather.len();
        let time = TimeGrid::new(weather.timestamps.clone(), weights)?;
        let (wind, solar) = weather.availability::<f64>();
        let tech = &self.technologies;
        let mut generators = Vec::new();
        generators.extend(apply_generator(&tech.wind, defaults::onshore_wind(wind)));
        generators.extend(apply_generator(&tech.solar, defaults::solar(solar)));
        if let Some(d) = &tech.dispatchable {
            generators.push(GeneratorTech::dispatchable(
                "dispatchable",
                d.cost.apply(CostComponent::free()),
                d.marginal_cost,
                n,
            ));
        }
        let mut storages = Vec::new();
        storages.extend(apply_storage(&tech.battery, defaults::battery()));
        storages.extend(apply_storage(&tech.hydrogen, defaults::hydrogen()));
        let config = SystemConfig {
            name: self.name.clone(),
            time,
            generators,
            storages,
            representation: self.representation,
            discount_rate: tech.discount_rate,
        };
        config.validate()?;
        Ok(config)
    }
}
