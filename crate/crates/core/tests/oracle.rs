//! Reference values recomputed independently of the library code.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use gridprice::demand::DemandModel;
use gridprice::dispatch::msv_heuristic_bids;
use gridprice::io::{LoadedScenario, TechnologySpec};
use gridprice::model::{annualized_fixed_cost, annuity, defaults, CostComponent};

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `r / (1 − (1 + r)^−n)` in exact rational arithmetic.
fn annuity_exact(r: &BigRational, n: u32) -> BigRational {
    let mut growth = BigRational::one();
    for _ in 0..n {
        growth *= BigRational::one() + r;
    }
    r / (BigRational::one() - growth.recip())
}

fn to_f64(x: &BigRational) -> f64 {
    x.numer().to_f64().unwrap() / x.denom().to_f64().unwrap()
}

#[test]
fn onshore_wind_annuity_matches_exact_rational() {
    let r = ratio(7, 100);
    let exact = ratio(10959, 10) * annuity_exact(&r, 30) + ratio(122, 10000) * ratio(10959, 10);
    let exact = to_f64(&exact);
    let got = annualized_fixed_cost(1095.9_f64, 0.0122, 30.0, 0.07).unwrap();
    assert!(((got - exact) / exact).abs() < 1e-6, "{got} vs {exact}");
    assert!((got - 101.68).abs() < 0.01);
}

#[test]
fn annuities_of_every_default_component() {
    let r = ratio(7, 100);
    let cases: [(f64, u32); 7] = [
        (defaults::ONSHORE_WIND.2, 30),
        (defaults::SOLAR_PV.2, 40),
        (defaults::BATTERY_INVERTER.2, 10),
        (defaults::BATTERY_STORAGE.2, 25),
        (defaults::ELECTROLYSIS.2, 25),
        (defaults::HYDROGEN_TURBINE.2, 10),
        (defaults::HYDROGEN_CAVERN.2, 100),
    ];
    for (lifetime, n) in cases {
        let exact = to_f64(&annuity_exact(&r, n));
        let got = annuity(0.07_f64, lifetime).unwrap();
        assert!(((got - exact) / exact).abs() < 1e-12, "n = {n}: {got} vs {exact}");
    }
}

#[test]
fn zero_rate_annuity_is_straight_line() {
    assert!((annuity(0.0_f64, 25.0).unwrap() - 0.04).abs() < 1e-15);
    assert!(annuity(0.07, 0.0).is_err());
}

#[test]
fn scenario_defaults_are_reference_costs() {
    let text = r#"{"name": "d", "time": {"start": "2011-01-01T00:00:00Z", "end": "2011-01-01T03:00:00Z"},
                   "demand": {"variant": "voll"}, "experiment": {"kind": "lt"}}"#;
    let s = LoadedScenario::from_bytes(text.as_bytes().to_vec(), Default::default()).unwrap();
    assert_eq!(s.file.technologies, TechnologySpec::default());
    let wx = s.file.resolve_weather(std::path::Path::new(""), gridprice::dispatch::ExperimentKind::Lt).unwrap();
    let cfg = s.file.system_config(&wx).unwrap();
    assert_eq!(cfg.discount_rate, 0.07);

    let c = |inv: f64, fom: f64, life: f64| CostComponent::new(inv, fom, life);
    let wind = &cfg.generators[cfg.generator("wind").unwrap()];
    let solar = &cfg.generators[cfg.generator("solar").unwrap()];
    assert_eq!(wind.cost, c(1_095_900.0, 0.0122, 30.0));
    assert_eq!(solar.cost, c(543_300.0, 0.0195, 40.0));

    let bat = &cfg.storages[cfg.storage("battery").unwrap()];
    assert_eq!(bat.charge_cost, c(169_300.0, 0.0034, 10.0));
    assert_eq!(bat.energy_cost, c(150_300.0, 0.0, 25.0));
    assert_eq!((bat.charge_efficiency, bat.discharge_efficiency), (0.96, 0.96));

    let h2 = &cfg.storages[cfg.storage("hydrogen").unwrap()];
    assert_eq!(h2.charge_cost, c(1_500_000.0, 0.04, 25.0));
    assert_eq!(h2.discharge_cost, c(1_164_000.0, 0.05, 10.0));
    assert_eq!(h2.energy_cost, c(150.0, 0.0, 100.0));
    assert_eq!((h2.charge_efficiency, h2.discharge_efficiency), (0.622, 0.5));
}

#[test]
fn elasticities_match_closed_forms() {
    // Linear p = a − b·d: ε(p) = −p / (a − p).
    let lin = DemandModel::<f64>::linear_default();
    let want = -100.0 / (2000.0 - 100.0);
    assert!((lin.point_elasticity(100.0).unwrap() - want).abs() < 1e-12);
    assert!((want + 0.0526).abs() < 1e-4);

    // At 100 €/MWh the first two segments are saturated ((8000 − 100)/80 > 95,
    // (400 − 100)/40 > 5) and only the third responds, d = (200 − 100)/20.
    let pwl = DemandModel::<f64>::pwl_default();
    let demand = 95.0 + 5.0 + 5.0;
    let want = -(1.0 / 20.0) * 100.0 / demand;
    let got = pwl.point_elasticity(100.0).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    assert!((-0.055..=-0.045).contains(&got));
}

#[test]
fn heuristic_bids_worked_example() {
    assert_eq!(msv_heuristic_bids(100.0, 0.7, 0.5).unwrap(), (70.0, 200.0));
}
