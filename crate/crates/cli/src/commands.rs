use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use indexmap::IndexMap;

use gridprice::dispatch::{mean_msv, run_lt, run_st_myopic, run_st_perfect, ExperimentKind, MyopicPolicy};
use gridprice::io::{
    export_run, files, import_run, verify_manifest, ExperimentSpec, ExportExtras, LoadedScenario, WeatherTable,
};
use gridprice::metrics::run_metrics;
use gridprice::model::{build_problem, BuildOptions, PowerCoupling};
use gridprice::solver::verify_kkt;
use gridprice::{CapacitySet, DemandModel, RunResult, SystemConfig};

/// A scenario resolved into model inputs for one kind of run.
pub struct Prepared {
    pub scenario: LoadedScenario,
    pub weather: WeatherTable,
    pub config: SystemConfig,
    pub demand: DemandModel,
}

pub fn prepare(scenario: LoadedScenario, kind: ExperimentKind) -> Result<Prepared> {
    let weather = scenario.file.resolve_weather(&scenario.base_dir, kind)?;
    if weather.clipped > 0 {
        eprintln!("warning: clipped {} capacity factors into [0, 1]", weather.clipped);
    }
    let config = scenario.file.system_config(&weather)?;
    let demand = scenario.file.demand.model()?;
    Ok(Prepared { scenario, weather, config, demand })
}

fn load(path: &Path, kind: ExperimentKind) -> Result<Prepared> {
    let scenario = LoadedScenario::from_path(path).with_context(|| format!("reading scenario {}", path.display()))?;
    prepare(scenario, kind)
}

pub fn default_out(p: &Prepared, kind: ExperimentKind) -> PathBuf {
    let base = match &p.scenario.file.output_dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => p.scenario.base_dir.join(d),
        None => PathBuf::from("runs").join(&p.scenario.file.name),
    };
    base.join(kind.as_str())
}

pub fn write_run(p: &Prepared, mut run: RunResult, dir: &Path) -> Result<RunResult> {
    run.scenario_hash = Some(p.scenario.hash());
    let extras = ExportExtras {
        scenario: Some(&p.scenario.raw),
        weather: Some(&p.weather),
        model: Some((&p.config, &p.demand)),
    };
    export_run(&run, dir, &extras).with_context(|| format!("writing {}", dir.display()))?;
    Ok(run)
}

fn summarize(run: &RunResult, dir: &Path) {
    let hours: f64 = run.weights.iter().sum();
    let mean = run.prices.iter().zip(&run.weights).map(|(p, w)| p * w).sum::<f64>() / hours;
    println!(
        "{} {}: {} snapshots, mean price {:.2} €/MWh -> {}",
        run.scenario,
        run.kind.as_str(),
        run.len(),
        mean,
        dir.display()
    );
}

pub fn solve_lt(scenario: &Path, out: Option<PathBuf>) -> Result<()> {
    let p = load(scenario, ExperimentKind::Lt)?;
    let run = run_lt(&p.config, &p.demand, &p.scenario.file.solver)?;
    let dir = out.unwrap_or_else(|| default_out(&p, ExperimentKind::Lt));
    let run = write_run(&p, run, &dir)?;
    summarize(&run, &dir);
    Ok(())
}

/// Reads capacities from a JSON file or a run directory.
pub fn read_capacities(path: &Path) -> Result<CapacitySet> {
    let file = if path.is_dir() { path.join(files::CAPACITIES) } else { path.to_path_buf() };
    let text = std::fs::read(&file).with_context(|| format!("reading capacities {}", file.display()))?;
    let caps: CapacitySet = serde_json::from_slice(&text).with_context(|| format!("parsing {}", file.display()))?;
    caps.validate()?;
    Ok(caps)
}

fn capacities_for(p: &Prepared, arg: Option<PathBuf>, perturb: Option<f64>) -> Result<CapacitySet> {
    let from_spec = match &p.scenario.file.experiment {
        ExperimentSpec::StPerfect { capacities } | ExperimentSpec::StMyopic { capacities, .. } => {
            capacities.as_ref().map(|c| p.scenario.base_dir.join(c))
        }
        ExperimentSpec::Lt {} => None,
    };
    let path = arg.or(from_spec).context("short-term runs need --capacities")?;
    let caps = read_capacities(&path)?;
    let factor = perturb.unwrap_or(p.scenario.file.perturbation);
    Ok(caps.perturbed(factor)?)
}

pub fn solve_st(scenario: &Path, capacities: Option<PathBuf>, perturb: Option<f64>, out: Option<PathBuf>) -> Result<()> {
    let p = load(scenario, ExperimentKind::StPerfect)?;
    let caps = capacities_for(&p, capacities, perturb)?;
    let run = run_st_perfect(&p.config, &p.demand, &caps, &p.scenario.file.solver)?;
    let dir = out.unwrap_or_else(|| default_out(&p, ExperimentKind::StPerfect));
    let run = write_run(&p, run, &dir)?;
    summarize(&run, &dir);
    Ok(())
}

pub struct MyopicArgs {
    pub capacities: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub stride: Option<usize>,
    pub msv_bar: Option<String>,
    pub perturb: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Storages with separate charge and discharge converters, i.e. the
/// long-duration ones that trade at heuristic bids.
fn long_duration(config: &SystemConfig) -> Vec<String> {
    config
        .storages
        .iter()
        .filter(|s| s.coupling == PowerCoupling::Separate)
        .map(|s| s.name.clone())
        .collect()
}

/// Parses `--msv-bar`: a number, a run directory or a JSON map.
pub fn parse_msv_bar(arg: &str, config: &SystemConfig) -> Result<IndexMap<String, f64>> {
    if let Ok(v) = arg.parse::<f64>() {
        return Ok(long_duration(config).into_iter().map(|n| (n, v)).collect());
    }
    let path = Path::new(arg);
    if path.is_dir() {
        let run: RunResult = import_run(path).with_context(|| format!("reading run {}", path.display()))?;
        let mut out = IndexMap::new();
        for name in long_duration(config) {
            let series = run.msv.get(&name).with_context(|| format!("run has no MSV for `{name}`"))?;
            out.insert(name, mean_msv(series, &run.weights));
        }
        return Ok(out);
    }
    let text = std::fs::read(path).with_context(|| format!("reading msv-bar file {arg}"))?;
    Ok(serde_json::from_slice(&text).with_context(|| format!("parsing {arg}"))?)
}

pub fn dispatch_myopic(scenario: &Path, args: MyopicArgs) -> Result<()> {
    let p = load(scenario, ExperimentKind::StMyopic)?;
    let caps = capacities_for(&p, args.capacities, args.perturb)?;
    let (horizon, stride, spec_bar, terminal) = match &p.scenario.file.experiment {
        ExperimentSpec::StMyopic { horizon, stride, msv_bar, battery_terminal, .. } => {
            (*horizon, *stride, msv_bar.clone(), *battery_terminal)
        }
        _ => (96, 48, IndexMap::new(), Default::default()),
    };
    let msv_bar = match &args.msv_bar {
        Some(a) => parse_msv_bar(a, &p.config)?,
        None if !spec_bar.is_empty() => spec_bar,
        None => bail!("rolling-horizon dispatch needs --msv-bar or experiment.msv_bar"),
    };
    let mut policy = MyopicPolicy::new(args.horizon.unwrap_or(horizon), args.stride.unwrap_or(stride), msv_bar);
    policy.battery_terminal = terminal;
    let run = run_st_myopic(&p.config, &p.demand, &caps, &policy, &p.scenario.file.solver)?;
    let dir = args.out.unwrap_or_else(|| default_out(&p, ExperimentKind::StMyopic));
    let run = write_run(&p, run, &dir)?;
    summarize(&run, &dir);
    Ok(())
}

/// A run directory with the model rebuilt from its own scenario and weather copies.
struct Reloaded {
    config: SystemConfig,
    demand: DemandModel,
    run: RunResult,
}

fn reload(dir: &Path) -> Result<Reloaded> {
    let manifest = verify_manifest(dir).with_context(|| format!("checking {}", dir.display()))?;
    let scenario = LoadedScenario::from_path(&dir.join(files::SCENARIO))?;
    if manifest.scenario_hash.as_deref() != Some(scenario.hash().as_str()) {
        bail!("scenario.json does not match the hash recorded in the manifest");
    }
    let weather = WeatherTable::read_saved(&dir.join(files::WEATHER))?;
    let config = scenario.file.system_config(&weather)?;
    let demand = scenario.file.demand.model()?;
    let run = import_run(dir)?;
    Ok(Reloaded { config, demand, run })
}

pub fn metrics(dir: &Path) -> Result<()> {
    let r = reload(dir)?;
    let fresh = run_metrics(&r.run, &r.config, &r.demand)?;
    let path = dir.join(files::METRICS);
    let stored: IndexMap<String, Option<f64>> =
        serde_json::from_slice(&std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?)?;
    let mut mismatches = Vec::new();
    for (k, v) in &fresh {
        let same = match (stored.get(k), v) {
            (Some(Some(a)), Some(b)) => a.to_bits() == b.to_bits(),
            (Some(None), None) => true,
            _ => false,
        };
        if !same {
            mismatches.push(format!("{k}: stored {:?}, recomputed {v:?}", stored.get(k).copied().flatten()));
        }
        println!("{k},{}", v.map(|x| x.to_string()).unwrap_or_default());
    }
    for k in stored.keys().filter(|k| !fresh.contains_key(*k)) {
        mismatches.push(format!("{k}: stored but not recomputed"));
    }
    if !mismatches.is_empty() {
        for m in &mismatches {
            eprintln!("mismatch: {m}");
        }
        bail!("{} metric(s) differ from {}", mismatches.len(), path.display());
    }
    eprintln!("metrics match ({} rows)", fresh.len());
    Ok(())
}

pub fn validate_kkt(dir: &Path, tol: f64) -> Result<()> {
    let r = reload(dir)?;
    let report = match (&r.run.solution, r.run.kind) {
        (Some(sol), kind) => {
            let opts = match kind {
                ExperimentKind::Lt => BuildOptions::long_term(r.config.time.horizon_years()),
                _ => BuildOptions::short_term(r.run.capacities.clone()),
            };
            let problem = build_problem(&r.config, &r.demand, &opts)?;
            if problem.n_vars() != sol.x.len() || problem.n_rows() != sol.duals.len() {
                bail!("stored solution does not fit the rebuilt problem");
            }
            verify_kkt(&problem, sol)?
        }
        (None, _) => r.run.kkt.clone().context("run has neither a solution nor a KKT report")?,
    };
    eprintln!(
        "stationarity {:.3e}, complementarity {:.3e}, primal {:.3e}, zero-profit {:.3e}",
        report.max_stationarity(),
        report.complementarity,
        report.primal_feasibility,
        report.max_zero_profit()
    );
    if !report.passes(tol) {
        bail!("KKT residuals exceed {tol:e}");
    }
    println!("ok");
    Ok(())
}
