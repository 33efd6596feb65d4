//! Scenario files, weather data and run archives.

mod export;
mod scenario;
mod weather;

pub use export::{export_run, import_run, to_f64, verify_manifest, ExportExtras, Manifest};
pub use scenario::{
    sha256_hex, CostOverride, DemandSpec, DispatchableSpec, ExperimentSpec, GeneratorSpec, LoadedScenario,
    ScenarioFile, StorageSpec, TechnologySpec, TimeSpec, WeatherSource, YearSplitSpec,
};
pub use weather::{align, load_weather, synth_weather, SynthParams, WeatherTable};

/// File names inside a run directory.
pub mod files {
    pub use super::export::{
        CAPACITIES, COST_RECOVERY, DISPATCH, DURATION_CURVE, KKT, MANIFEST, METRICS, MSV, PRICES, RUN, SCENARIO,
        SOLUTION, WEATHER,
    };
}
