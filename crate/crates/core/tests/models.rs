mod common;

use common::{desk, max_abs_diff, weather};
use gridprice::demand::{CrossElasticitySpec, DemandModel};
use gridprice::dispatch::{run_lt, run_st_perfect};
use gridprice::model::{fixed_cost_block, Representation};
use gridprice::solver::SolveOptions;

fn opts() -> SolveOptions {
    SolveOptions::default()
}

/// Objective gap between the direct and the substituted form, computed from
/// the curve parameters alone.
fn substitution_constant(model: &DemandModel<f64>, hours: f64) -> f64 {
    use gridprice::demand::DemandCurve::*;
    match &model.curve {
        Voll { value, peak } => value * peak * hours,
        Linear { a, b } => hours * a * a / (2.0 * b),
        PiecewiseLinear { segments } => {
            hours * segments.iter().map(|s| s.a * s.width - s.b * s.width * s.width / 2.0).sum::<f64>()
        }
        PerfectlyInelastic { .. } => 0.0,
    }
}

fn max_dispatch_diff(a: &gridprice::RunResult, b: &gridprice::RunResult) -> f64 {
    let mut d = max_abs_diff(&a.demand, &b.demand);
    for (k, v) in &a.generation {
        d = d.max(max_abs_diff(v, &b.generation[k]));
    }
    for (k, v) in &a.charge {
        d = d.max(max_abs_diff(v, &b.charge[k]));
        d = d.max(max_abs_diff(&a.discharge[k], &b.discharge[k]));
        d = d.max(max_abs_diff(&a.state_of_charge[k], &b.state_of_charge[k]));
    }
    d
}

#[test]
fn direct_and_substituted_demand_agree() {
    let wx = weather(1, 2011);
    for model in [DemandModel::voll_default(), DemandModel::linear_default(), DemandModel::pwl_default()] {
        let mut direct = desk("direct", &wx, 2016, 48);
        direct.representation = Representation::DirectDemand;
        let shed = desk("shed", &wx, 2016, 48);
        let a = run_lt(&direct, &model, &opts()).unwrap();
        let b = run_lt(&shed, &model, &opts()).unwrap();

        let prices = max_abs_diff(&a.prices, &b.prices);
        assert!(prices <= 1e-3, "{:?}: prices differ by {prices}", model.curve);
        let constant = substitution_constant(&model, 48.0);
        let (oa, ob) = (a.objective.unwrap(), b.objective.unwrap());
        let gap = (oa - (ob + constant)).abs() / oa.abs().max(1.0);
        assert!(gap <= 1e-6, "{:?}: objective gap {gap}", model.curve);
        assert!((b.dropped_constant - constant).abs() <= 1e-9 * constant);

        // Dispatch is compared where the optimum is unique: strictly concave
        // utility and no curtailment, which would leave the split between
        // wind and solar free.
        if matches!(model.curve, gridprice::demand::DemandCurve::Voll { .. }) {
            continue;
        }
        let caps = b.capacities.perturbed(-0.2).unwrap();
        let a = run_st_perfect(&direct, &model, &caps, &opts()).unwrap();
        let b = run_st_perfect(&shed, &model, &caps, &opts()).unwrap();
        assert!(b.prices.iter().all(|p| *p > 1e-3));
        let dispatch = max_dispatch_diff(&a, &b);
        assert!(dispatch <= 1e-4, "{:?}: dispatch differs by {dispatch}", model.curve);
    }
}

#[test]
fn short_term_objective_plus_fixed_costs_is_long_term() {
    let wx = weather(2, 2011);
    let cfg = desk("lt", &wx, 3000, 168);
    let dm = DemandModel::pwl_default();
    let lt = run_lt(&cfg, &dm, &opts()).unwrap();
    let st = run_st_perfect(&cfg, &dm, &lt.capacities, &opts()).unwrap();
    let block = fixed_cost_block(&cfg, &lt.capacities, cfg.time.horizon_years()).unwrap();
    let (l, s) = (lt.objective.unwrap(), st.objective.unwrap());
    assert!((s - block - l).abs() <= 1e-6 * l.abs(), "{s} − {block} vs {l}");
    // Welfare accounting agrees with the solver objective in both runs.
    for run in [&lt, &st] {
        let w = run.welfare.welfare.unwrap();
        let from_objective = match run.kind {
            gridprice::dispatch::ExperimentKind::Lt => l + run.dropped_constant,
            _ => s + run.dropped_constant - block,
        };
        assert!((w - from_objective).abs() <= 1e-6 * w.abs(), "{w} vs {from_objective}");
    }
}

#[test]
fn single_precision_runs() {
    let wx = weather(1, 2011);
    let (w, s) = wx.availability::<f32>();
    let time = gridprice::model::TimeGrid::<f32>::regular(wx.timestamps[2016], 24, 1).unwrap();
    let cfg = gridprice::model::defaults::desk_config("f32", time, w[2016..2040].to_vec(), s[2016..2040].to_vec());
    let mut options = opts();
    options.barrier_tolerance = 1e-5;
    options.dual_tolerance = 1e-5;
    let run = run_lt(&cfg, &DemandModel::<f32>::pwl_default(), &options).unwrap();
    let run64 = run_lt(&desk("f64", &wx, 2016, 24), &DemandModel::pwl_default(), &opts()).unwrap();
    let mean = |p: &[f64]| p.iter().sum::<f64>() / p.len() as f64;
    let m32 = mean(&run.prices.iter().map(|x| *x as f64).collect::<Vec<_>>());
    assert!((m32 - mean(&run64.prices)).abs() < 0.5, "{m32} vs {}", mean(&run64.prices));
}

#[test]
fn cross_elastic_runs_stay_concave_and_balanced() {
    let wx = weather(1, 2011);
    let cfg = desk("cross", &wx, 2016, 24);
    let dm = DemandModel::pwl_default().with_cross_elasticity(CrossElasticitySpec { gamma_fraction: 1.0 / 16.0, window: 4 });
    let lt = run_lt(&cfg, &dm, &opts()).unwrap();
    assert!(lt.energy_imbalance().abs() <= 1e-6 * lt.energy_served());
    assert!(lt.kkt.as_ref().unwrap().passes(1e-5));
    let st = run_st_perfect(&cfg, &dm, &lt.capacities, &opts()).unwrap();
    assert!(st.kkt.as_ref().unwrap().passes(1e-5));

    // A coupling this strong makes the utility non-concave.
    let strong = DemandModel::pwl_default().with_cross_elasticity(CrossElasticitySpec { gamma_fraction: 0.5, window: 4 });
    assert!(run_lt(&cfg, &strong, &opts()).is_err());
}
