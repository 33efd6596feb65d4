//! Experiment orchestration: long-term expansion, short-term dispatch with
//! perfect foresight, and rolling-horizon dispatch with heuristic bids.

mod years;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use years::{split_years, SplitMode, YearSplit, PUBLISHED_LT_YEARS, PUBLISHED_ST_YEARS};

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::metrics::{welfare_decomposition, Welfare};
use crate::model::{
    build_problem, BuildOptions, CapacitySet, PowerCoupling, SocBoundary, StorageCapacity,
    StorageMode, SystemConfig,
};
use crate::scalar::Scalar;
use crate::solver::{
    extract_msv_series, extract_price_series, verify_kkt, AssetKey, ClarabelSolver, KktReport,
    ProblemSpec, QpSolver, SolutionBundle, SolveOptions, SolveStatus, VarKind,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Lt,
    StPerfect,
    StMyopic,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Lt => "lt",
            ExperimentKind::StPerfect => "st_perfect",
            ExperimentKind::StMyopic => "st_myopic",
        }
    }
}

/// Everything produced by one scenario run. Series are indexed by snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct RunResult<T> {
    pub scenario: String,
    pub kind: ExperimentKind,
    /// SHA-256 of the scenario file, when run from one.
    pub scenario_hash: Option<String>,
    pub timestamps: Vec<DateTime<Utc>>,
    pub weights: Vec<T>,
    pub capacities: CapacitySet<T>,
    pub generation: IndexMap<String, Vec<T>>,
    pub charge: IndexMap<String, Vec<T>>,
    pub discharge: IndexMap<String, Vec<T>>,
    pub state_of_charge: IndexMap<String, Vec<T>>,
    /// Served demand per consumer segment.
    pub demand_segments: Vec<Vec<T>>,
    /// Total served demand.
    pub demand: Vec<T>,
    pub prices: Vec<T>,
    pub msv: IndexMap<String, Vec<T>>,
    /// Storages whose energy capacity is (near) zero, making their MSV arbitrary.
    pub msv_degenerate: Vec<String>,
    /// Solver objective (welfare without dropped constants); absent for
    /// rolling-horizon runs, whose window objectives contain bid terms.
    pub objective: Option<T>,
    pub dropped_constant: T,
    pub welfare: Welfare<T>,
    pub kkt: Option<KktReport<T>>,
    /// Raw primal/dual vector of full-horizon runs, kept for re-verification.
    #[serde(skip)]
    pub solution: Option<SolutionBundle<T>>,
}

impl<T: Scalar> RunResult<T> {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// `Σ_t w_t (Σ g + Σ f − Σ h − d)`, zero for a balanced run.
    pub fn energy_imbalance(&self) -> T {
        let mut total = T::zero();
        for t in 0..self.len() {
            let mut net = -self.demand[t];
            for g in self.generation.values() {
                net += g[t];
            }
            for (h, f) in self.charge.values().zip(self.discharge.values()) {
                net += f[t] - h[t];
            }
            total += self.weights[t] * net;
        }
        total
    }

    /// Weighted energy served, used to scale imbalance checks.
    pub fn energy_served(&self) -> T {
        self.demand.iter().zip(&self.weights).map(|(d, w)| *d * *w).sum()
    }
}

fn solver_for(options: &SolveOptions) -> ClarabelSolver {
    ClarabelSolver::new(options.clone())
}

fn solve_checked<T: Scalar>(
    problem: &ProblemSpec<T>,
    solver: &dyn QpSolver<T>,
) -> Result<SolutionBundle<T>> {
    let solution = solver.solve(problem);
    if !solution.is_optimal() {
        return Err(Error::Solve {
            scenario: problem.name.clone(),
            status: solution.status,
            diagnostics: solution.diagnostics.clone(),
        });
    }
    Ok(solution)
}

fn nonneg<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

/// Capacities at the solution, clipped at zero against solver round-off.
pub fn solution_capacities<T: Scalar>(
    config: &SystemConfig<T>,
    problem: &ProblemSpec<T>,
    x: &[T],
) -> CapacitySet<T> {
    let value = |key| nonneg(problem.capacity_value(key, x).unwrap_or_else(T::zero));
    let mut caps = CapacitySet::default();
    for (r, g) in config.generators.iter().enumerate() {
        caps.generators.insert(g.name.clone(), value(AssetKey::Generator(r)));
    }
    for (s, st) in config.storages.iter().enumerate() {
        let energy = value(AssetKey::StorageEnergy(s));
        let c = match st.coupling {
            PowerCoupling::Shared => {
                // Short-term problems carry the two sides separately.
                let p = problem
                    .capacity_value(AssetKey::StoragePower(s), x)
                    .or_else(|| problem.capacity_value(AssetKey::StorageCharge(s), x))
                    .map(nonneg)
                    .unwrap_or_else(T::zero);
                StorageCapacity { charge: p, discharge: p, energy }
            }
            PowerCoupling::Separate => StorageCapacity {
                charge: value(AssetKey::StorageCharge(s)),
                discharge: value(AssetKey::StorageDischarge(s)),
                energy,
            },
        };
        caps.storages.insert(st.name.clone(), c);
    }
    caps
}

/// Dispatch, demand and dual series of one solved problem.
struct Series<T> {
    generation: Vec<Vec<T>>,
    charge: Vec<Vec<T>>,
    discharge: Vec<Vec<T>>,
    soc: Vec<Vec<T>>,
    segments: Vec<Vec<T>>,
    prices: Vec<T>,
    msv: Vec<Vec<T>>,
    degenerate: Vec<bool>,
}

fn extract_series<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    problem: &ProblemSpec<T>,
    solution: &SolutionBundle<T>,
) -> Result<Series<T>> {
    let n = problem.n_snapshots;
    let pieces = demand.curve.pieces();
    let zeros = |k: usize| vec![vec![T::zero(); n]; k];
    let mut out = Series {
        generation: zeros(config.generators.len()),
        charge: zeros(config.storages.len()),
        discharge: zeros(config.storages.len()),
        soc: zeros(config.storages.len()),
        segments: pieces.iter().map(|p| vec![p.width; n]).collect(),
        prices: extract_price_series(solution, problem)?,
        msv: Vec::new(),
        degenerate: Vec::new(),
    };
    if demand.is_inelastic() {
        out.segments = vec![vec![demand.curve.total_width(); n]];
    }
    for (v, &x) in problem.variables.iter().zip(&solution.x) {
        match v.kind {
            VarKind::Generation { gen, t } => out.generation[gen][t] = nonneg(x),
            VarKind::Charge { storage, t } => out.charge[storage][t] = nonneg(x),
            VarKind::Discharge { storage, t } => out.discharge[storage][t] = nonneg(x),
            VarKind::Soc { storage, t } => out.soc[storage][t] = nonneg(x),
            VarKind::Demand { segment, t } => out.segments[segment][t] = x.max(T::zero()).min(pieces[segment].width),
            VarKind::Shedding { segment, t } => {
                let w = pieces[segment].width;
                out.segments[segment][t] = (w - x).max(T::zero()).min(w)
            }
            VarKind::Capacity(_) => {}
        }
    }
    for s in 0..config.storages.len() {
        let m = extract_msv_series(solution, problem, s)?;
        out.msv.push(m.values);
        out.degenerate.push(m.degenerate);
    }
    Ok(out)
}

fn named<T: Clone>(names: impl Iterator<Item = String>, series: Vec<Vec<T>>) -> IndexMap<String, Vec<T>> {
    names.zip(series).collect()
}

fn assemble<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    kind: ExperimentKind,
    capacities: CapacitySet<T>,
    series: Series<T>,
    objective: Option<T>,
    dropped_constant: T,
    kkt: Option<KktReport<T>>,
) -> Result<RunResult<T>> {
    let n = config.time.len();
    let demand_total = (0..n)
        .map(|t| series.segments.iter().map(|s| s[t]).sum())
        .collect();
    let gen_names = || config.generators.iter().map(|g| g.name.clone());
    let sto_names = || config.storages.iter().map(|s| s.name.clone());
    let mut run = RunResult {
        scenario: config.name.clone(),
        kind,
        scenario_hash: None,
        timestamps: config.time.snapshots().to_vec(),
        weights: config.time.weights().to_vec(),
        capacities,
        generation: named(gen_names(), series.generation),
        charge: named(sto_names(), series.charge),
        discharge: named(sto_names(), series.discharge),
        state_of_charge: named(sto_names(), series.soc),
        demand_segments: series.segments,
        demand: demand_total,
        prices: series.prices,
        msv: named(sto_names(), series.msv),
        msv_degenerate: sto_names()
            .zip(series.degenerate)
            .filter(|(_, d)| *d)
            .map(|(n, _)| n)
            .collect(),
        objective,
        dropped_constant,
        welfare: Welfare::default(),
        kkt,
        solution: None,
    };
    run.welfare = welfare_decomposition(&run, config, demand)?;
    Ok(run)
}

/// Builds, solves and summarises one full-horizon problem.
pub fn run_problem<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    options: &BuildOptions<T>,
    solver: &dyn QpSolver<T>,
) -> Result<RunResult<T>> {
    let problem = build_problem(config, demand, options)?;
    let solution = solve_checked(&problem, solver)?;
    let kkt = verify_kkt(&problem, &solution)?;
    let series = extract_series(config, demand, &problem, &solution)?;
    let (kind, caps) = match &options.capacities {
        Some(c) => (ExperimentKind::StPerfect, c.clone()),
        None => (ExperimentKind::Lt, solution_capacities(config, &problem, &solution.x)),
    };
    let mut run = assemble(
        config,
        demand,
        kind,
        caps,
        series,
        Some(solution.objective),
        problem.dropped_constant,
        Some(kkt),
    )?;
    run.solution = Some(solution);
    Ok(run)
}

/// Long-term run with fixed costs scaled to the modelled horizon.
pub fn run_lt<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    options: &SolveOptions,
) -> Result<RunResult<T>> {
    let build = BuildOptions::long_term(config.time.horizon_years());
    run_problem(config, demand, &build, &solver_for(options))
}

/// Short-term run over the full horizon with perfect foresight.
pub fn run_st_perfect<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    capacities: &CapacitySet<T>,
    options: &SolveOptions,
) -> Result<RunResult<T>> {
    run_problem(config, demand, &BuildOptions::short_term(capacities.clone()), &solver_for(options))
}

/// Perfect-foresight counterpart of a rolling-horizon run: same initial
/// state of charge, and each storage must end with at least the energy the
/// rolling run left in it. The rolling dispatch is feasible here, so the
/// welfare of this run bounds it from above.
pub fn run_st_matched<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    myopic: &RunResult<T>,
    policy: &MyopicPolicy<T>,
    options: &SolveOptions,
) -> Result<RunResult<T>> {
    let soc = config
        .storages
        .iter()
        .map(|st| {
            let initial = policy.initial_soc.get(&st.name).copied().unwrap_or_else(T::zero);
            let last = myopic
                .state_of_charge
                .get(&st.name)
                .and_then(|e| e.last().copied())
                .ok_or_else(|| Error::Config(format!("run has no state of charge for `{}`", st.name)))?;
            Ok(SocBoundary::Fixed { initial, terminal_min: Some(last) })
        })
        .collect::<Result<Vec<_>>>()?;
    let build = BuildOptions {
        soc: Some(soc),
        ..BuildOptions::short_term(myopic.capacities.clone())
    };
    run_problem(config, demand, &build, &solver_for(options))
}

/// Constant bids of a price-taking storage valuing its medium at `msv_bar`:
/// `(ηʰ·msv_bar, msv_bar/ηᶠ)`.
pub fn msv_heuristic_bids<T: Scalar>(msv_bar: T, charge_efficiency: T, discharge_efficiency: T) -> Result<(T, T)> {
    if msv_bar < T::zero() {
        return Err(Error::Domain(format!("msv_bar {msv_bar} < 0")));
    }
    if !(discharge_efficiency > T::zero() && discharge_efficiency <= T::one()) {
        return Err(Error::Domain(format!("discharge efficiency {discharge_efficiency} outside (0, 1]")));
    }
    if !(charge_efficiency > T::zero() && charge_efficiency <= T::one()) {
        return Err(Error::Domain(format!("charge efficiency {charge_efficiency} outside (0, 1]")));
    }
    Ok((charge_efficiency * msv_bar, msv_bar / discharge_efficiency))
}

/// Weighted mean of a marginal storage value series.
pub fn mean_msv<T: Scalar>(msv: &[T], weights: &[T]) -> T {
    let total: T = weights.iter().copied().sum();
    msv.iter().zip(weights).map(|(m, w)| *m * *w).sum::<T>() / total
}

/// End-of-window treatment of endogenously dispatched storage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryTerminal {
    /// No terminal condition; the look-ahead overlap buffers end effects.
    #[default]
    Free,
    /// Each window must end with at least the energy it started with.
    PreserveValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar"))]
pub struct MyopicPolicy<T> {
    /// Look-ahead window length in snapshots.
    pub horizon: usize,
    /// Snapshots committed per window.
    pub stride: usize,
    /// Constant medium value per price-taking (long-duration) storage, €/MWh.
    pub msv_bar: IndexMap<String, T>,
    #[serde(default)]
    pub battery_terminal: BatteryTerminal,
    /// State of charge at the first snapshot; zero where absent.
    #[serde(default)]
    pub initial_soc: IndexMap<String, T>,
}

impl<T: Scalar> MyopicPolicy<T> {
    pub fn new(horizon: usize, stride: usize, msv_bar: IndexMap<String, T>) -> Self {
        Self {
            horizon,
            stride,
            msv_bar,
            battery_terminal: BatteryTerminal::Free,
            initial_soc: IndexMap::new(),
        }
    }

    pub fn validate(&self, config: &SystemConfig<T>) -> Result<()> {
        if self.stride == 0 || self.stride > self.horizon {
            return Err(Error::Config(format!(
                "myopic policy needs 0 < stride ≤ horizon (got stride {}, horizon {})",
                self.stride, self.horizon
            )));
        }
        for (name, v) in self.msv_bar.iter() {
            if config.storage(name).is_none() {
                return Err(Error::UnknownTechnology(name.clone()));
            }
            if *v < T::zero() {
                return Err(Error::Config(format!("msv_bar of `{name}` is negative")));
            }
        }
        for name in self.initial_soc.keys() {
            if config.storage(name).is_none() {
                return Err(Error::UnknownTechnology(name.clone()));
            }
        }
        Ok(())
    }
}

/// One rolling-horizon window: optimised over `[start, end)`, committed
/// over `[start, commit_end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub commit_end: usize,
}

pub fn window_plan(n: usize, horizon: usize, stride: usize) -> Result<Vec<Window>> {
    if stride == 0 || stride > horizon {
        return Err(Error::Config(format!("need 0 < stride ≤ horizon (got {stride}, {horizon})")));
    }
    Ok((0..n)
        .step_by(stride)
        .map(|start| Window {
            start,
            end: (start + horizon).min(n),
            commit_end: (start + stride).min(n),
        })
        .collect())
}

/// Worst residual of each kind across several reports.
fn merge_kkt<T: Scalar>(reports: &[KktReport<T>]) -> Option<KktReport<T>> {
    let mut it = reports.iter();
    let mut acc = it.next()?.clone();
    for r in it {
        acc.generation = acc.generation.max(r.generation);
        acc.discharge = acc.discharge.max(r.discharge);
        acc.demand = acc.demand.max(r.demand);
        acc.charge = acc.charge.max(r.charge);
        acc.state_of_charge = acc.state_of_charge.max(r.state_of_charge);
        acc.complementarity = acc.complementarity.max(r.complementarity);
        acc.primal_feasibility = acc.primal_feasibility.max(r.primal_feasibility);
        acc.price_scale = acc.price_scale.max(r.price_scale);
        acc.quantity_scale = acc.quantity_scale.max(r.quantity_scale);
    }
    Some(acc)
}

/// Rolling-horizon dispatch. Storages named in `policy.msv_bar` trade at
/// constant heuristic bids; the others are optimised within each window.
pub fn run_st_myopic<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    capacities: &CapacitySet<T>,
    policy: &MyopicPolicy<T>,
    options: &SolveOptions,
) -> Result<RunResult<T>> {
    config.validate()?;
    policy.validate(config)?;
    capacities.check_covers(config)?;
    let solver = solver_for(options);
    let n = config.time.len();
    let n_s = config.storages.len();

    let mut modes = Vec::with_capacity(n_s);
    for st in &config.storages {
        modes.push(match policy.msv_bar.get(&st.name) {
            Some(&bar) => {
                let (charge_bid, discharge_offer) =
                    msv_heuristic_bids(bar, st.charge_efficiency, st.discharge_efficiency)?;
                StorageMode::PriceTaking { charge_bid, discharge_offer }
            }
            None => StorageMode::Endogenous,
        });
    }
    let mut soc: Vec<T> = config
        .storages
        .iter()
        .map(|s| policy.initial_soc.get(&s.name).copied().unwrap_or_else(T::zero))
        .collect();

    let pieces = demand.curve.pieces();
    let n_seg = if demand.is_inelastic() { 1 } else { pieces.len() };
    let mut acc = Series {
        generation: vec![Vec::with_capacity(n); config.generators.len()],
        charge: vec![Vec::with_capacity(n); n_s],
        discharge: vec![Vec::with_capacity(n); n_s],
        soc: vec![Vec::with_capacity(n); n_s],
        segments: vec![Vec::with_capacity(n); n_seg],
        prices: Vec::with_capacity(n),
        msv: vec![Vec::with_capacity(n); n_s],
        degenerate: vec![false; n_s],
    };
    let mut reports = Vec::new();
    let mut dropped = T::zero();

    for (k, win) in window_plan(n, policy.horizon, policy.stride)?.into_iter().enumerate() {
        let sub = config.slice(win.start..win.end);
        let boundaries = config
            .storages
            .iter()
            .enumerate()
            .map(|(s, _)| {
                let terminal_min = match (modes[s], policy.battery_terminal) {
                    (StorageMode::Endogenous, BatteryTerminal::PreserveValue) => Some(soc[s]),
                    _ => None,
                };
                SocBoundary::Fixed { initial: soc[s], terminal_min }
            })
            .collect();
        let build = BuildOptions {
            capacities: Some(capacities.clone()),
            horizon_years: T::zero(),
            soc: Some(boundaries),
            modes: Some(modes.clone()),
        };
        let problem = build_problem(&sub, demand, &build)?;
        let solution = solver.solve(&problem);
        match solution.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(Error::InfeasibleWindow {
                    window: k,
                    start: win.start,
                    soc: config
                        .storages
                        .iter()
                        .zip(&soc)
                        .map(|(s, v)| (s.name.clone(), v.as_f64()))
                        .collect(),
                })
            }
            status => {
                return Err(Error::Solve {
                    scenario: format!("{} window {k} (start {})", config.name, win.start),
                    status,
                    diagnostics: solution.diagnostics,
                })
            }
        }
        reports.push(verify_kkt(&problem, &solution)?);
        let s = extract_series(&sub, demand, &problem, &solution)?;
        let m = win.commit_end - win.start;
        let take = |dst: &mut Vec<Vec<T>>, src: &[Vec<T>]| {
            for (d, v) in dst.iter_mut().zip(src) {
                d.extend_from_slice(&v[..m]);
            }
        };
        take(&mut acc.generation, &s.generation);
        take(&mut acc.charge, &s.charge);
        take(&mut acc.discharge, &s.discharge);
        take(&mut acc.soc, &s.soc);
        take(&mut acc.segments, &s.segments);
        take(&mut acc.msv, &s.msv);
        acc.prices.extend_from_slice(&s.prices[..m]);
        for (st, e) in soc.iter_mut().zip(&s.soc) {
            *st = e[m - 1];
        }
        if !pieces.is_empty() && config.representation == crate::model::Representation::LoadShedding {
            let per_hour: T = pieces.iter().map(|p| p.full_utility()).sum();
            dropped += per_hour * sub.time.weights()[..m].iter().copied().sum();
        }
    }
    for (s, st) in config.storages.iter().enumerate() {
        acc.degenerate[s] = capacities.storages[&st.name].energy <= T::lit(crate::solver::BUILT_THRESHOLD);
    }
    let mut run = assemble(
        config,
        demand,
        ExperimentKind::StMyopic,
        capacities.clone(),
        acc,
        None,
        dropped,
        merge_kkt(&reports),
    )?;
    run.kind = ExperimentKind::StMyopic;
    Ok(run)
}

/// Runs `f` over `items` on the rayon pool, returning results in input order.
pub fn run_batch<I, R, F>(items: &[I], f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bids_from_worked_example() {
        assert_eq!(msv_heuristic_bids(100.0, 0.7, 0.5).unwrap(), (70.0, 200.0));
        assert_eq!(msv_heuristic_bids(0.0, 0.3, 0.9).unwrap(), (0.0, 0.0));
        let (bid, offer) = msv_heuristic_bids(80.0_f64, 0.622, 0.5).unwrap();
        assert!((bid - 49.76).abs() < 1e-12);
        assert_eq!(offer, 160.0);
        assert!(msv_heuristic_bids(80.0, 0.622, 0.0).is_err());
        assert!(msv_heuristic_bids(-1.0, 0.622, 0.5).is_err());
    }

    #[test]
    fn window_arithmetic() {
        let plan = window_plan(168, 96, 48).unwrap();
        let commits: Vec<_> = plan.iter().map(|w| (w.start, w.commit_end)).collect();
        assert_eq!(commits, vec![(0, 48), (48, 96), (96, 144), (144, 168)]);
        assert_eq!(plan[0].end, 96);
        assert_eq!(plan[2].end, 168);
        assert_eq!(plan[3].end, 168);
        assert!(window_plan(10, 4, 5).is_err());
        assert!(window_plan(10, 4, 0).is_err());
        assert_eq!(window_plan(10, 4, 4).unwrap().last().unwrap().commit_end, 10);
    }

    #[test]
    fn batch_preserves_order() {
        let items: Vec<u64> = (0..64).collect();
        let out = run_batch(&items, |x| x * x);
        assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
    }
}
