//! Default techno-economic assumptions (2030 projections, currency year 2020).
//!
//! Costs are per MW or MWh; efficiencies are one-way.

use super::{
    ComponentLabels, CostComponent, GeneratorTech, PowerCoupling, Representation, StorageTech,
    SystemConfig, TimeGrid,
};
use crate::scalar::Scalar;

pub const DISCOUNT_RATE: f64 = 0.07;

/// `(investment per MW or MWh, fixed O&M share per year, lifetime in years)`.
pub const ONSHORE_WIND: (f64, f64, f64) = (1_095_900.0, 0.0122, 30.0);
pub const SOLAR_PV: (f64, f64, f64) = (543_300.0, 0.0195, 40.0);
pub const BATTERY_INVERTER: (f64, f64, f64) = (169_300.0, 0.0034, 10.0);
pub const BATTERY_STORAGE: (f64, f64, f64) = (150_300.0, 0.0, 25.0);
pub const ELECTROLYSIS: (f64, f64, f64) = (1_500_000.0, 0.04, 25.0);
pub const HYDROGEN_TURBINE: (f64, f64, f64) = (1_164_000.0, 0.05, 10.0);
pub const HYDROGEN_CAVERN: (f64, f64, f64) = (150.0, 0.0, 100.0);

pub const BATTERY_EFFICIENCY: f64 = 0.96;
pub const ELECTROLYSIS_EFFICIENCY: f64 = 0.622;
pub const HYDROGEN_TURBINE_EFFICIENCY: f64 = 0.5;

/// Variable cost of the optional dispatchable backup generator (€/MWh).
pub const DISPATCHABLE_MARGINAL_COST: f64 = 64.7;

fn cost<T: Scalar>((inv, fom, life): (f64, f64, f64)) -> CostComponent<T> {
    CostComponent::new(T::lit(inv), T::lit(fom), T::lit(life))
}

fn vre<T: Scalar>(name: &str, data: (f64, f64, f64), availability: Vec<T>) -> GeneratorTech<T> {
    GeneratorTech {
        name: name.into(),
        cost: cost(data),
        marginal_cost: T::zero(),
        availability,
        min_capacity: T::zero(),
        max_capacity: None,
    }
}

pub fn onshore_wind<T: Scalar>(availability: Vec<T>) -> GeneratorTech<T> {
    vre("wind", ONSHORE_WIND, availability)
}

pub fn solar<T: Scalar>(availability: Vec<T>) -> GeneratorTech<T> {
    vre("solar", SOLAR_PV, availability)
}

pub fn battery<T: Scalar>() -> StorageTech<T> {
    StorageTech {
        name: "battery".into(),
        charge_efficiency: T::lit(BATTERY_EFFICIENCY),
        discharge_efficiency: T::lit(BATTERY_EFFICIENCY),
        coupling: PowerCoupling::Shared,
        charge_cost: cost(BATTERY_INVERTER),
        discharge_cost: CostComponent::free(),
        energy_cost: cost(BATTERY_STORAGE),
        min_discharge_capacity: T::zero(),
        max_energy_capacity: None,
        cyclic_soc: true,
        labels: ComponentLabels {
            charge: "battery inverter".into(),
            discharge: "battery inverter".into(),
            energy: "battery storage".into(),
        },
    }
}

pub fn hydrogen<T: Scalar>() -> StorageTech<T> {
    StorageTech {
        name: "hydrogen".into(),
        charge_efficiency: T::lit(ELECTROLYSIS_EFFICIENCY),
        discharge_efficiency: T::lit(HYDROGEN_TURBINE_EFFICIENCY),
        coupling: PowerCoupling::Separate,
        charge_cost: cost(ELECTROLYSIS),
        discharge_cost: cost(HYDROGEN_TURBINE),
        energy_cost: cost(HYDROGEN_CAVERN),
        min_discharge_capacity: T::zero(),
        max_energy_capacity: None,
        cyclic_soc: true,
        labels: ComponentLabels {
            charge: "electrolyser".into(),
            discharge: "fuel cell".into(),
            energy: "hydrogen storage".into(),
        },
    }
}

/// Wind, solar, battery and hydrogen storage with default costs, demand
/// represented through load shedding.
pub fn desk_config<T: Scalar>(
    name: &str,
    time: TimeGrid<T>,
    wind_availability: Vec<T>,
    solar_availability: Vec<T>,
) -> SystemConfig<T> {
    SystemConfig {
        name: name.into(),
        time,
        generators: vec![onshore_wind(wind_availability), solar(solar_availability)],
        storages: vec![battery(), hydrogen()],
        representation: Representation::LoadShedding,
        discount_rate: T::lit(DISCOUNT_RATE),
    }
}
