//! Run directories: CSV series, JSON summaries and a hashed manifest.
//!
//! Floats are written with `Display`, the shortest string that parses back
//! to the same value, so export → import → export is byte-identical.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::scenario::sha256_hex;
use super::weather::WeatherTable;
use crate::demand::DemandModel;
use crate::dispatch::{ExperimentKind, RunResult};
use crate::error::{Error, Result};
use crate::metrics::{cost_recovery, duration_curve, run_metrics, Welfare};
use crate::model::{CapacitySet, SystemConfig};
use crate::scalar::Scalar;
use crate::solver::{KktReport, SolutionBundle};

pub const CAPACITIES: &str = "capacities.json";
pub const PRICES: &str = "prices.csv";
pub const MSV: &str = "msv.csv";
pub const DISPATCH: &str = "dispatch.csv";
pub const KKT: &str = "kkt.json";
pub const METRICS: &str = "metrics.json";
pub const COST_RECOVERY: &str = "cost_recovery.csv";
pub const DURATION_CURVE: &str = "duration_curve.csv";
pub const SOLUTION: &str = "solution.json";
pub const RUN: &str = "run.json";
pub const SCENARIO: &str = "scenario.json";
pub const WEATHER: &str = "weather.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub kind: ExperimentKind,
    /// SHA-256 of the scenario file bytes, if the run came from one.
    pub scenario_hash: Option<String>,
    pub crate_version: String,
    /// SHA-256 of every file written, by file name.
    pub files: IndexMap<String, String>,
}

/// Scalar fields of a run that have no CSV of their own.
#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct RunSummary<T> {
    scenario: String,
    kind: ExperimentKind,
    scenario_hash: Option<String>,
    objective: Option<T>,
    dropped_constant: T,
    welfare: Welfare<T>,
    msv_degenerate: Vec<String>,
    demand_segments: usize,
}

/// What to write besides the run itself.
#[derive(Default)]
pub struct ExportExtras<'a> {
    /// Exact bytes of the scenario file.
    pub scenario: Option<&'a [u8]>,
    pub weather: Option<&'a WeatherTable>,
    /// Needed for metrics and cost recovery.
    pub model: Option<(&'a SystemConfig<f64>, &'a DemandModel<f64>)>,
}

fn ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn json_bytes<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn dispatch_header<T>(run: &RunResult<T>) -> Vec<String> {
    let mut h = vec!["timestamp".to_string(), "weight".into(), "demand".into()];
    h.extend((0..run.demand_segments.len()).map(|c| format!("segment {c}")));
    h.extend(run.generation.keys().cloned());
    for name in run.charge.keys() {
        h.push(format!("{name} charge"));
        h.push(format!("{name} discharge"));
        h.push(format!("{name} state of charge"));
    }
    h
}

fn dispatch_columns<T>(run: &RunResult<T>) -> Vec<&Vec<T>> {
    let mut cols = vec![&run.weights, &run.demand];
    cols.extend(run.demand_segments.iter());
    cols.extend(run.generation.values());
    for name in run.charge.keys() {
        cols.push(&run.charge[name]);
        cols.push(&run.discharge[name]);
        cols.push(&run.state_of_charge[name]);
    }
    cols
}

/// Writes `run` into `dir` (created if needed) and returns the manifest.
pub fn export_run<T: Scalar>(run: &RunResult<T>, dir: &Path, extras: &ExportExtras<'_>) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();

    if let Some(raw) = extras.scenario {
        files.push((SCENARIO, raw.to_vec()));
    }
    if let Some(wx) = extras.weather {
        let mut buf = Vec::new();
        wx.write(&mut buf)?;
        files.push((WEATHER, buf));
    }
    files.push((CAPACITIES, json_bytes(&run.capacities)?));
    files.push((
        PRICES,
        csv_bytes(
            &["timestamp".into(), "value".into()],
            run.timestamps.iter().zip(&run.prices).map(|(t, p)| vec![ts(t), p.to_string()]),
        )?,
    ));
    files.push((
        MSV,
        csv_bytes(
            &["timestamp".into(), "storage".into(), "value".into()],
            run.msv
                .iter()
                .flat_map(|(name, v)| run.timestamps.iter().zip(v).map(move |(t, x)| vec![ts(t), name.clone(), x.to_string()])),
        )?,
    ));
    let cols = dispatch_columns(run);
    files.push((
        DISPATCH,
        csv_bytes(
            &dispatch_header(run),
            run.timestamps.iter().enumerate().map(|(i, t)| {
                let mut r = vec![ts(t)];
                r.extend(cols.iter().map(|c| c[i].to_string()));
                r
            }),
        )?,
    ));
    if let Some(k) = &run.kkt {
        files.push((KKT, json_bytes(k)?));
    }
    if let Some(sol) = &run.solution {
        files.push((SOLUTION, json_bytes(sol)?));
    }
    files.push((
        RUN,
        json_bytes(&RunSummary {
            scenario: run.scenario.clone(),
            kind: run.kind,
            scenario_hash: run.scenario_hash.clone(),
            objective: run.objective,
            dropped_constant: run.dropped_constant,
            welfare: run.welfare.clone(),
            msv_degenerate: run.msv_degenerate.clone(),
            demand_segments: run.demand_segments.len(),
        })?,
    ));
    if let Some((config, demand)) = extras.model {
        let run64 = to_f64(run);
        files.push((METRICS, json_bytes(&run_metrics(&run64, config, demand)?)?));
        let rows = cost_recovery(&run64, config)?;
        files.push((
            COST_RECOVERY,
            csv_bytes(
                &["asset", "revenue", "variable_cost", "fixed_cost", "ratio"].map(String::from),
                rows.iter().map(|r| {
                    vec![r.asset.clone(), r.revenue.to_string(), r.variable_cost.to_string(), r.fixed_cost.to_string(), r.ratio.to_string()]
                }),
            )?,
        ));
        let dc = duration_curve(&run64.prices, &run64.weights)?;
        files.push((
            DURATION_CURVE,
            csv_bytes(
                &["hours".into(), "price".into()],
                dc.cumulative_hours.iter().zip(&dc.values).map(|(h, v)| vec![h.to_string(), v.to_string()]),
            )?,
        ));
    }

    let mut hashes = IndexMap::new();
    for (name, bytes) in &files {
        fs::write(dir.join(name), bytes)?;
        hashes.insert(name.to_string(), sha256_hex(bytes));
    }
    let manifest = Manifest {
        scenario: run.scenario.clone(),
        kind: run.kind,
        scenario_hash: run.scenario_hash.clone(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        files: hashes,
    };
    fs::write(dir.join(MANIFEST), json_bytes(&manifest)?)?;
    Ok(manifest)
}

/// Lossless for `f64` runs; used to evaluate metrics, which are `f64`.
pub fn to_f64<T: Scalar>(run: &RunResult<T>) -> RunResult<f64> {
    let v = |x: &Vec<T>| x.iter().map(|y| y.as_f64()).collect::<Vec<f64>>();
    let m = |x: &IndexMap<String, Vec<T>>| x.iter().map(|(k, s)| (k.clone(), v(s))).collect::<IndexMap<_, _>>();
    let caps = CapacitySet {
        generators: run.capacities.generators.iter().map(|(k, x)| (k.clone(), x.as_f64())).collect(),
        storages: run
            .capacities
            .storages
            .iter()
            .map(|(k, s)| {
                (
                    k.clone(),
                    crate::model::StorageCapacity { charge: s.charge.as_f64(), discharge: s.discharge.as_f64(), energy: s.energy.as_f64() },
                )
            })
            .collect(),
    };
    RunResult {
        scenario: run.scenario.clone(),
        kind: run.kind,
        scenario_hash: run.scenario_hash.clone(),
        timestamps: run.timestamps.clone(),
        weights: v(&run.weights),
        capacities: caps,
        generation: m(&run.generation),
        charge: m(&run.charge),
        discharge: m(&run.discharge),
        state_of_charge: m(&run.state_of_charge),
        demand_segments: run.demand_segments.iter().map(v).collect(),
        demand: v(&run.demand),
        prices: v(&run.prices),
        msv: m(&run.msv),
        msv_degenerate: run.msv_degenerate.clone(),
        objective: run.objective.map(|x| x.as_f64()),
        dropped_constant: run.dropped_constant.as_f64(),
        welfare: Welfare {
            utility: run.welfare.utility.map(|x| x.as_f64()),
            variable_cost: run.welfare.variable_cost.as_f64(),
            fixed_cost: run.welfare.fixed_cost.as_f64(),
            reserve_cost: run.welfare.reserve_cost.as_f64(),
            welfare: run.welfare.welfare.map(|x| x.as_f64()),
        },
        kkt: None,
        solution: None,
    }
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn parse<T: FromStr>(s: &str, file: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Config(format!("{file} line {line}: cannot parse `{s}`")))
}

fn parse_ts(s: &str, file: &str, line: usize) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| Error::Config(format!("{file} line {line}: bad timestamp `{s}`")))
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.iter().map(String::from).collect();
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

/// Reads a run directory written by [`export_run`]. The raw solution is
/// restored when `solution.json` is present.
pub fn import_run<T: Scalar>(dir: &Path) -> Result<RunResult<T>> {
    let summary: RunSummary<T> = read_json(&dir.join(RUN))?;
    let capacities: CapacitySet<T> = read_json(&dir.join(CAPACITIES))?;
    let kkt: Option<KktReport<T>> = match dir.join(KKT) {
        p if p.exists() => Some(read_json(&p)?),
        _ => None,
    };
    let solution: Option<SolutionBundle<T>> = match dir.join(SOLUTION) {
        p if p.exists() => Some(read_json(&p)?),
        _ => None,
    };

    let (header, rows) = read_rows(&dir.join(DISPATCH))?;
    let gens: Vec<String> = capacities.generators.keys().cloned().collect();
    let stores: Vec<String> = capacities.storages.keys().cloned().collect();
    let mut run = RunResult {
        scenario: summary.scenario,
        kind: summary.kind,
        scenario_hash: summary.scenario_hash,
        timestamps: Vec::with_capacity(rows.len()),
        weights: Vec::new(),
        capacities,
        generation: IndexMap::new(),
        charge: IndexMap::new(),
        discharge: IndexMap::new(),
        state_of_charge: IndexMap::new(),
        demand_segments: vec![Vec::new(); summary.demand_segments],
        demand: Vec::new(),
        prices: Vec::new(),
        msv: IndexMap::new(),
        msv_degenerate: summary.msv_degenerate,
        objective: summary.objective,
        dropped_constant: summary.dropped_constant,
        welfare: summary.welfare,
        kkt,
        solution,
    };
    let mut cols: Vec<Vec<T>> = vec![Vec::with_capacity(rows.len()); header.len() - 1];
    for (i, r) in rows.iter().enumerate() {
        if r.len() != header.len() {
            return Err(Error::Config(format!("{DISPATCH} line {}: expected {} fields", i + 2, header.len())));
        }
        run.timestamps.push(parse_ts(&r[0], DISPATCH, i + 2)?);
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(parse(&r[c + 1], DISPATCH, i + 2)?);
        }
    }
    let mut it = cols.into_iter();
    let mut next = || it.next().ok_or_else(|| Error::Config(format!("{DISPATCH} has too few columns")));
    run.weights = next()?;
    run.demand = next()?;
    for seg in run.demand_segments.iter_mut() {
        *seg = next()?;
    }
    for g in &gens {
        run.generation.insert(g.clone(), next()?);
    }
    for s in &stores {
        run.charge.insert(s.clone(), next()?);
        run.discharge.insert(s.clone(), next()?);
        run.state_of_charge.insert(s.clone(), next()?);
    }
    if dispatch_header(&run) != header {
        return Err(Error::Config(format!("{DISPATCH} header does not match {CAPACITIES}")));
    }

    let (_, rows) = read_rows(&dir.join(PRICES))?;
    for (i, r) in rows.iter().enumerate() {
        if r.len() != 2 || parse_ts(&r[0], PRICES, i + 2)? != *run.timestamps.get(i).unwrap_or(&DateTime::<Utc>::MIN_UTC) {
            return Err(Error::Config(format!("{PRICES} line {}: timestamp mismatch", i + 2)));
        }
        run.prices.push(parse(&r[1], PRICES, i + 2)?);
    }
    let (_, rows) = read_rows(&dir.join(MSV))?;
    for s in &stores {
        run.msv.insert(s.clone(), Vec::with_capacity(run.timestamps.len()));
    }
    for (i, r) in rows.iter().enumerate() {
        let series = run
            .msv
            .get_mut(&r[1])
            .ok_or_else(|| Error::UnknownTechnology(r[1].to_string()))?;
        series.push(parse(&r[2], MSV, i + 2)?);
    }
    let n = run.timestamps.len();
    if run.prices.len() != n || run.msv.values().any(|v| v.len() != n) {
        return Err(Error::Config(format!("series lengths in {} disagree", dir.display())));
    }
    Ok(run)
}

/// Checks every file listed in the manifest against its recorded hash.
pub fn verify_manifest(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    for (name, hash) in &manifest.files {
        let actual = sha256_hex(&fs::read(dir.join(name))?);
        if &actual != hash {
            return Err(Error::Config(format!("{name} does not match its manifest hash")));
        }
    }
    Ok(manifest)
}
