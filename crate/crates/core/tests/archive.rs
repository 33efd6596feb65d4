mod common;

use std::fs;
use std::path::Path;

use proptest::prelude::*;

use common::{desk, weather};
use gridprice::demand::DemandModel;
use gridprice::dispatch::{run_lt, run_st_myopic, MyopicPolicy};
use gridprice::io::{
    export_run, files, import_run, verify_manifest, DemandSpec, ExportExtras, LoadedScenario, ScenarioFile,
};
use gridprice::solver::SolveOptions;

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn export_import_export_is_byte_identical() {
    let wx = weather(1, 2011);
    let cfg = desk("archive", &wx, 2016, 72);
    let dm = DemandModel::pwl_default();
    let run = run_lt(&cfg, &dm, &SolveOptions::default()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let extras = ExportExtras { model: Some((&cfg, &dm)), ..Default::default() };

    let m1 = export_run(&run, &a, &extras).unwrap();
    let back = import_run::<f64>(&a).unwrap();
    assert_eq!(back.prices, run.prices);
    assert_eq!(back.msv, run.msv);
    assert_eq!(back.state_of_charge, run.state_of_charge);
    assert_eq!(back.solution, run.solution);
    assert_eq!(back.kkt, run.kkt);
    assert_eq!(back.welfare, run.welfare);
    let m2 = export_run(&back, &b, &extras).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(read_dir(&a), read_dir(&b));

    let prices = fs::read_to_string(a.join(files::PRICES)).unwrap();
    assert_eq!(prices.lines().next(), Some("timestamp,value"));
    assert_eq!(prices.lines().count(), 72 + 1);
    verify_manifest(&a).unwrap();

    fs::write(a.join(files::PRICES), prices.replacen("timestamp,value\n", "timestamp,value\n2011-01-01T00:00:00Z,1\n", 1)).unwrap();
    assert!(verify_manifest(&a).is_err());
}

#[test]
fn rolling_runs_round_trip_without_solution() {
    let wx = weather(1, 2011);
    let cfg = desk("roll", &wx, 2016, 96);
    let dm = DemandModel::pwl_default();
    let lt = run_lt(&cfg, &dm, &SolveOptions::default()).unwrap();
    let policy = MyopicPolicy::new(48, 24, [("hydrogen".to_string(), 80.0)].into_iter().collect());
    let run = run_st_myopic(&cfg, &dm, &lt.capacities, &policy, &SolveOptions::default()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    export_run(&run, tmp.path(), &ExportExtras::default()).unwrap();
    assert!(!tmp.path().join(files::SOLUTION).exists());
    let back = import_run::<f64>(tmp.path()).unwrap();
    assert_eq!(back.objective, None);
    assert_eq!(back.demand, run.demand);
    assert_eq!(back.kkt, run.kkt);
}

const SCENARIO: &str = r#"{
  "name": "hash",
  "time": {"start": "2011-04-01T00:00:00Z", "end": "2011-04-01T12:00:00Z"},
  "demand": {"variant": "linear"},
  "experiment": {"kind": "lt"}
}
"#;

fn export_scenario(raw: &str, dir: &Path) -> gridprice::io::Manifest {
    let s = LoadedScenario::from_bytes(raw.as_bytes().to_vec(), Default::default()).unwrap();
    let wx = s.file.resolve_weather(Path::new(""), gridprice::dispatch::ExperimentKind::Lt).unwrap();
    let cfg = s.file.system_config(&wx).unwrap();
    let dm = s.file.demand.model().unwrap();
    let mut run = run_lt(&cfg, &dm, &s.file.solver).unwrap();
    run.scenario_hash = Some(s.hash());
    let extras = ExportExtras { scenario: Some(&s.raw), weather: Some(&wx), model: Some((&cfg, &dm)) };
    export_run(&run, dir, &extras).unwrap()
}

#[test]
fn manifest_hash_tracks_scenario_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let a = export_scenario(SCENARIO, &tmp.path().join("a"));
    let b = export_scenario(SCENARIO, &tmp.path().join("b"));
    assert_eq!(a.scenario_hash, b.scenario_hash);
    assert_eq!(a.files, b.files);
    let changed = SCENARIO.replace("\"linear\"", "\"linear\", \"a\": 1900");
    let c = export_scenario(&changed, &tmp.path().join("c"));
    assert_ne!(a.scenario_hash, c.scenario_hash);
    let reloaded = LoadedScenario::from_path(&tmp.path().join("a").join(files::SCENARIO)).unwrap();
    assert_eq!(Some(reloaded.hash()), a.scenario_hash);
}

fn demand_spec() -> impl Strategy<Value = DemandSpec> {
    prop_oneof![
        (1000.0..3000.0f64, 50.0..150.0f64).prop_map(|(value, peak)| DemandSpec::Voll { value, peak, cross_elasticity: None }),
        (1000.0..3000.0f64, 5.0..40.0f64).prop_map(|(a, b)| DemandSpec::Linear { a, b, cross_elasticity: None }),
        (prop::option::of(0.25..4.0f64), prop::option::of((0.01..0.2f64, 1usize..6))).prop_map(|(scale, cross)| {
            DemandSpec::PiecewiseLinear {
                segments: None,
                scale,
                cross_elasticity: cross.map(|(g, w)| gridprice::demand::CrossElasticitySpec { gamma_fraction: g, window: w }),
            }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_schema_round_trips(
        demand in demand_spec(),
        hours in 1i64..500,
        resolution in 1u32..6,
        wind_inv in prop::option::of(5e5..2e6f64),
        h2_enabled in any::<bool>(),
        perturbation in -0.5..0.5f64,
        seed in any::<u64>(),
    ) {
        let base: ScenarioFile = serde_json::from_str(SCENARIO).unwrap();
        let mut file = base.clone();
        file.demand = demand;
        file.time.end = Some(file.time.start.unwrap() + chrono::Duration::hours(hours));
        file.time.resolution_h = resolution;
        file.technologies.wind.cost.investment = wind_inv;
        file.technologies.hydrogen.enabled = h2_enabled;
        file.perturbation = perturbation;
        file.weather = gridprice::io::WeatherSource::Synthetic { seed, params: Default::default() };
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back: ScenarioFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert!(back.validate().is_ok());
    }
}
