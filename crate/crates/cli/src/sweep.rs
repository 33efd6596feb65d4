//! Demand models × capacity perturbations, one long-term run per demand model
//! and short-term runs on its capacities.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use indexmap::IndexMap;
use rayon::prelude::*;
use serde::Deserialize;

use gridprice::dispatch::{mean_msv, run_lt, run_st_myopic, run_st_perfect, BatteryTerminal, ExperimentKind, MyopicPolicy};
use gridprice::io::{DemandSpec, LoadedScenario, ScenarioFile};
use gridprice::metrics::run_metrics;

use crate::commands::{prepare, write_run};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Matrix {
    /// Base scenario, relative to the matrix file.
    scenario: PathBuf,
    demands: Vec<DemandSpec>,
    #[serde(default = "no_perturbation")]
    perturbations: Vec<f64>,
    #[serde(default)]
    myopic: Option<MyopicSweep>,
    #[serde(default)]
    jobs: Option<usize>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

fn no_perturbation() -> Vec<f64> {
    vec![0.0]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MyopicSweep {
    #[serde(default = "horizon")]
    horizon: usize,
    #[serde(default = "stride")]
    stride: usize,
    #[serde(default)]
    battery_terminal: BatteryTerminal,
}

fn horizon() -> usize {
    96
}

fn stride() -> usize {
    48
}

struct Row {
    scenario: String,
    demand: String,
    experiment: &'static str,
    perturbation: f64,
    metrics: IndexMap<String, Option<f64>>,
}

fn variant(base: &ScenarioFile, name: String, demand: &DemandSpec, perturbation: f64, base_dir: &Path) -> Result<LoadedScenario> {
    let mut file = base.clone();
    file.name = name;
    file.demand = demand.clone();
    file.perturbation = perturbation;
    file.output_dir = None;
    let mut raw = serde_json::to_vec_pretty(&file)?;
    raw.push(b'\n');
    Ok(LoadedScenario::from_bytes(raw, base_dir.to_path_buf())?)
}

fn one_demand(base: &LoadedScenario, m: &Matrix, demand: &DemandSpec, out: &Path) -> Result<Vec<Row>> {
    let label = demand.label();
    let name = format!("{}_{label}", base.file.name);
    let dir = out.join(&label);
    let mut rows = Vec::new();
    let mut record = |kind: ExperimentKind, perturbation: f64, metrics| {
        rows.push(Row { scenario: name.clone(), demand: label.clone(), experiment: kind.as_str(), perturbation, metrics })
    };

    let p = prepare(variant(&base.file, name.clone(), demand, 0.0, &base.base_dir)?, ExperimentKind::Lt)?;
    let lt = run_lt(&p.config, &p.demand, &p.scenario.file.solver).with_context(|| format!("{name} lt"))?;
    let lt = write_run(&p, lt, &dir.join("lt"))?;
    record(ExperimentKind::Lt, 0.0, run_metrics(&lt, &p.config, &p.demand)?);

    for &dp in &m.perturbations {
        let p = prepare(variant(&base.file, name.clone(), demand, dp, &base.base_dir)?, ExperimentKind::StPerfect)?;
        let caps = lt.capacities.perturbed(dp)?;
        let st = run_st_perfect(&p.config, &p.demand, &caps, &p.scenario.file.solver)
            .with_context(|| format!("{name} st_perfect {dp:+}"))?;
        let st = write_run(&p, st, &dir.join(format!("st_perfect_{dp:+}")))?;
        record(ExperimentKind::StPerfect, dp, run_metrics(&st, &p.config, &p.demand)?);
    }

    if let Some(my) = &m.myopic {
        let p = prepare(variant(&base.file, name.clone(), demand, 0.0, &base.base_dir)?, ExperimentKind::StMyopic)?;
        let bars = p
            .config
            .storages
            .iter()
            .filter(|s| s.coupling == gridprice::model::PowerCoupling::Separate)
            .map(|s| (s.name.clone(), mean_msv(&lt.msv[&s.name], &lt.weights)))
            .collect();
        let mut policy = MyopicPolicy::new(my.horizon, my.stride, bars);
        policy.battery_terminal = my.battery_terminal;
        let run = run_st_myopic(&p.config, &p.demand, &lt.capacities, &policy, &p.scenario.file.solver)
            .with_context(|| format!("{name} st_myopic"))?;
        let run = write_run(&p, run, &dir.join("st_myopic"))?;
        record(ExperimentKind::StMyopic, 0.0, run_metrics(&run, &p.config, &p.demand)?);
    }
    Ok(rows)
}

pub fn run(matrix: &Path, jobs: Option<usize>) -> Result<()> {
    let text = std::fs::read(matrix).with_context(|| format!("reading {}", matrix.display()))?;
    let m: Matrix = serde_json::from_slice(&text).with_context(|| format!("parsing {}", matrix.display()))?;
    let here = matrix.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = LoadedScenario::from_path(&here.join(&m.scenario))?;
    let out = match &m.output_dir {
        Some(d) => here.join(d),
        None => PathBuf::from("runs").join(format!("{}_sweep", base.file.name)),
    };
    let threads = jobs.or(m.jobs).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let results: Vec<Result<Vec<Row>>> =
        pool.install(|| m.demands.par_iter().map(|d| one_demand(&base, &m, d, &out)).collect());

    std::fs::create_dir_all(&out)?;
    let mut w = csv::Writer::from_path(out.join("metrics.csv"))?;
    w.write_record(["scenario", "demand", "experiment", "perturbation", "metric", "value"])?;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(rows) => {
                for row in rows {
                    for (k, v) in &row.metrics {
                        w.write_record([
                            row.scenario.as_str(),
                            &row.demand,
                            row.experiment,
                            &row.perturbation.to_string(),
                            k,
                            &v.map(|x| x.to_string()).unwrap_or_default(),
                        ])?;
                    }
                }
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                first_err.get_or_insert(e);
            }
        }
    }
    w.flush()?;
    println!("sweep results -> {}", out.join("metrics.csv").display());
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
