//! System configuration and translation into the long-term (capacity
//! expansion) and short-term (fixed capacity) optimisation problems.

mod build;
pub mod defaults;

use chrono::{DateTime, Datelike, Duration, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use build::{
    build_lt_problem, build_problem, build_st_problem, fixed_cost_block, BuildOptions, SocBoundary, StorageMode,
};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, HOURS_PER_YEAR};

/// Capital recovery factor `r / (1 − (1 + r)^−n)`, `1/n` at zero rate.
pub fn annuity<T: Scalar>(rate: T, lifetime: T) -> Result<T> {
    if !(lifetime > T::zero()) {
        return Err(Error::Domain(format!("lifetime must be positive (got {lifetime})")));
    }
    if rate < T::zero() {
        return Err(Error::Domain(format!("discount rate must be non-negative (got {rate})")));
    }
    if rate == T::zero() {
        return Ok(T::one() / lifetime);
    }
    Ok(rate / (T::one() - (T::one() + rate).powf(-lifetime)))
}

/// Annualised investment plus fixed O&M per unit of capacity and year.
pub fn annualized_fixed_cost<T: Scalar>(investment: T, fom_fraction: T, lifetime: T, rate: T) -> Result<T> {
    if investment < T::zero() || fom_fraction < T::zero() {
        return Err(Error::Domain("costs must be non-negative".into()));
    }
    Ok(investment * annuity(rate, lifetime)? + fom_fraction * investment)
}

/// Overnight investment, fixed O&M share and lifetime of one component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar"))]
pub struct CostComponent<T> {
    /// €/MW (or €/MWh for energy capacity).
    pub investment: T,
    /// Share of the investment paid per year.
    #[serde(default = "zero")]
    pub fom_fraction: T,
    /// Years.
    pub lifetime: T,
}

fn zero<T: Scalar>() -> T {
    T::zero()
}

impl<T: Scalar> CostComponent<T> {
    pub fn new(investment: T, fom_fraction: T, lifetime: T) -> Self {
        Self {
            investment,
            fom_fraction,
            lifetime,
        }
    }

    pub fn free() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    pub fn annualized(&self, rate: T) -> Result<T> {
        annualized_fixed_cost(self.investment, self.fom_fraction, self.lifetime, rate)
    }
}

/// Ordered snapshots with durations.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid<T> {
    snapshots: Vec<DateTime<Utc>>,
    weights: Vec<T>,
    calendar: Vec<(i32, u32)>,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(snapshots: Vec<DateTime<Utc>>, weights: Vec<T>) -> Result<Self> {
        if snapshots.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} snapshots but {} weights",
                snapshots.len(),
                weights.len()
            )));
        }
        if snapshots.is_empty() {
            return Err(Error::Config("time grid has no snapshots".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > T::zero())) {
            return Err(Error::Config(format!("snapshot weight {w} is not positive")));
        }
        if snapshots.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config("snapshots are not strictly increasing".into()));
        }
        let calendar = snapshots.iter().map(|s| (s.year(), s.month())).collect();
        Ok(Self {
            snapshots,
            weights,
            calendar,
        })
    }

    /// `n` snapshots of `resolution_h` hours starting at `start`.
    pub fn regular(start: DateTime<Utc>, n: usize, resolution_h: u32) -> Result<Self> {
        let snapshots = (0..n)
            .map(|i| start + Duration::hours(i as i64 * resolution_h as i64))
            .collect();
        Self::new(snapshots, vec![T::lit(resolution_h as f64); n])
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[DateTime<Utc>] {
        &self.snapshots
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `(year, month)` of each snapshot.
    pub fn calendar(&self) -> &[(i32, u32)] {
        &self.calendar
    }

    pub fn total_hours(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// Modelled horizon in years of 8760 h.
    pub fn horizon_years(&self) -> T {
        self.total_hours() / T::lit(HOURS_PER_YEAR)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            snapshots: self.snapshots[range.clone()].to_vec(),
            weights: self.weights[range.clone()].to_vec(),
            calendar: self.calendar[range].to_vec(),
        }
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn rescaled(&self, factor: T) -> Self {
        Self {
            snapshots: self.snapshots.clone(),
            weights: self.weights.iter().map(|w| *w * factor).collect(),
            calendar: self.calendar.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorTech<T> {
    pub name: String,
    pub cost: CostComponent<T>,
    /// €/MWh, zero for wind and solar.
    pub marginal_cost: T,
    /// Per-snapshot capacity factor in `[0, 1]`.
    pub availability: Vec<T>,
    pub min_capacity: T,
    pub max_capacity: Option<T>,
}

impl<T: Scalar> GeneratorTech<T> {
    /// Generator with constant full availability over `n` snapshots.
    pub fn dispatchable(name: &str, cost: CostComponent<T>, marginal_cost: T, n: usize) -> Self {
        Self {
            name: name.into(),
            cost,
            marginal_cost,
            availability: vec![T::one(); n],
            min_capacity: T::zero(),
            max_capacity: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.availability.len() != n {
            return Err(Error::Config(format!(
                "generator `{}` has {} availability values for {n} snapshots",
                self.name,
                self.availability.len()
            )));
        }
        if let Some(v) = self.availability.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(Error::Config(format!("generator `{}` availability {v} outside [0, 1]", self.name)));
        }
        if self.marginal_cost < T::zero() || self.cost.investment < T::zero() || self.cost.fom_fraction < T::zero() {
            return Err(Error::Config(format!("generator `{}` has negative costs", self.name)));
        }
        check_bounds(&self.name, self.min_capacity, self.max_capacity)
    }
}

fn check_bounds<T: Scalar>(name: &str, min: T, max: Option<T>) -> Result<()> {
    if min < T::zero() {
        return Err(Error::Config(format!("`{name}` minimum capacity {min} < 0")));
    }
    if let Some(max) = max {
        if max < min {
            return Err(Error::Config(format!("`{name}` minimum capacity {min} exceeds maximum {max}")));
        }
    }
    Ok(())
}

/// How charging and discharging power is sized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerCoupling {
    /// One converter sized once, limiting both charge and discharge.
    Shared,
    /// Independent charger and discharger capacities.
    Separate,
}

/// Names used in reports for each capacity component of a storage unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentLabels {
    /// Charger, or the shared converter.
    pub charge: String,
    pub discharge: String,
    pub energy: String,
}

impl ComponentLabels {
    pub fn for_storage(name: &str) -> Self {
        Self {
            charge: format!("{name} charger"),
            discharge: format!("{name} discharger"),
            energy: format!("{name} storage"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageTech<T> {
    pub name: String,
    pub charge_efficiency: T,
    pub discharge_efficiency: T,
    pub coupling: PowerCoupling,
    /// Charger cost, or the shared converter cost.
    pub charge_cost: CostComponent<T>,
    /// Ignored for shared coupling.
    pub discharge_cost: CostComponent<T>,
    pub energy_cost: CostComponent<T>,
    pub min_discharge_capacity: T,
    pub max_energy_capacity: Option<T>,
    pub cyclic_soc: bool,
    pub labels: ComponentLabels,
}

impl<T: Scalar> StorageTech<T> {
    pub fn validate(&self) -> Result<()> {
        for eta in [self.charge_efficiency, self.discharge_efficiency] {
            if !(eta > T::zero() && eta <= T::one()) {
                return Err(Error::Config(format!("storage `{}` efficiency {eta} outside (0, 1]", self.name)));
            }
        }
        for c in [self.charge_cost, self.discharge_cost, self.energy_cost] {
            if c.investment < T::zero() || c.fom_fraction < T::zero() {
                return Err(Error::Config(format!("storage `{}` has negative costs", self.name)));
            }
        }
        if self.coupling == PowerCoupling::Shared && self.discharge_cost.investment > T::zero() {
            return Err(Error::Config(format!(
                "storage `{}` shares one converter; put its cost on the charge component",
                self.name
            )));
        }
        check_bounds(&self.name, self.min_discharge_capacity, None)?;
        if let Some(e) = self.max_energy_capacity {
            check_bounds(&self.name, T::zero(), Some(e))?;
        }
        Ok(())
    }
}

/// Whether demand is modelled by demand variables or by shedding generators
/// against a fixed demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    DirectDemand,
    LoadShedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig<T> {
    pub name: String,
    pub time: TimeGrid<T>,
    pub generators: Vec<GeneratorTech<T>>,
    pub storages: Vec<StorageTech<T>>,
    pub representation: Representation,
    pub discount_rate: T,
}

impl<T: Scalar> SystemConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.generators.is_empty() {
            return Err(Error::Config("at least one generator is required".into()));
        }
        let mut names = std::collections::HashSet::new();
        for g in &self.generators {
            g.validate(self.time.len())?;
            if !names.insert(g.name.as_str()) {
                return Err(Error::Config(format!("duplicate technology name `{}`", g.name)));
            }
        }
        for s in &self.storages {
            s.validate()?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate technology name `{}`", s.name)));
            }
        }
        if self.discount_rate < T::zero() {
            return Err(Error::Config("discount rate must be non-negative".into()));
        }
        Ok(())
    }

    pub fn generator(&self, name: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.name == name)
    }

    pub fn storage(&self, name: &str) -> Option<usize> {
        self.storages.iter().position(|s| s.name == name)
    }

    /// Configuration restricted to the snapshots in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let mut out = self.clone();
        out.time = self.time.slice(range.clone());
        for g in &mut out.generators {
            g.availability = g.availability[range.clone()].to_vec();
        }
        out
    }

    /// Annualised fixed cost of a capacity component.
    pub fn fixed_cost(&self, key: crate::solver::AssetKey) -> Result<T> {
        use crate::solver::AssetKey::*;
        let r = self.discount_rate;
        match key {
            Generator(i) => self.generators[i].cost.annualized(r),
            StoragePower(s) | StorageCharge(s) => self.storages[s].charge_cost.annualized(r),
            StorageDischarge(s) => self.storages[s].discharge_cost.annualized(r),
            StorageEnergy(s) => self.storages[s].energy_cost.annualized(r),
        }
    }
}

/// Installed capacities of one storage unit. For shared coupling `charge`
/// and `discharge` are equal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageCapacity<T> {
    /// MW.
    pub charge: T,
    /// MW.
    pub discharge: T,
    /// MWh.
    pub energy: T,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySet<T> {
    pub generators: IndexMap<String, T>,
    pub storages: IndexMap<String, StorageCapacity<T>>,
}

impl<T: Scalar> CapacitySet<T> {
    /// Every capacity scaled by `1 + factor`.
    pub fn perturbed(&self, factor: T) -> Result<Self> {
        if !(factor > -T::one()) {
            return Err(Error::Domain(format!("perturbation factor {factor} must exceed −1")));
        }
        let k = T::one() + factor;
        Ok(Self {
            generators: self.generators.iter().map(|(n, c)| (n.clone(), *c * k)).collect(),
            storages: self
                .storages
                .iter()
                .map(|(n, c)| {
                    (
                        n.clone(),
                        StorageCapacity {
                            charge: c.charge * k,
                            discharge: c.discharge * k,
                            energy: c.energy * k,
                        },
                    )
                })
                .collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let neg = self
            .generators
            .values()
            .copied()
            .chain(self.storages.values().flat_map(|s| [s.charge, s.discharge, s.energy]))
            .any(|c| c < T::zero());
        if neg {
            return Err(Error::Config("capacities must be non-negative".into()));
        }
        Ok(())
    }

    /// Checks the keys match the configuration's technologies exactly.
    pub fn check_covers(&self, config: &SystemConfig<T>) -> Result<()> {
        for g in &config.generators {
            if !self.generators.contains_key(&g.name) {
                return Err(Error::MissingCapacity(g.name.clone()));
            }
        }
        for s in &config.storages {
            if !self.storages.contains_key(&s.name) {
                return Err(Error::MissingCapacity(s.name.clone()));
            }
        }
        for name in self.generators.keys().chain(self.storages.keys()) {
            if config.generator(name).is_none() && config.storage(name).is_none() {
                return Err(Error::UnknownTechnology(name.clone()));
            }
        }
        Ok(())
    }
}

/// Scales every capacity by `1 + factor`; the input is left unchanged.
pub fn apply_capacity_perturbation<T: Scalar>(capacities: &CapacitySet<T>, factor: T) -> Result<CapacitySet<T>> {
    capacities.perturbed(factor)
}

/// Configuration whose long-term problem must build at least `min_discharge`
/// MW of discharge capacity for `storage_name`.
pub fn force_reserve_capacity<T: Scalar>(
    config: &SystemConfig<T>,
    storage_name: &str,
    min_discharge: T,
) -> Result<SystemConfig<T>> {
    if min_discharge < T::zero() {
        return Err(Error::Domain(format!("reserve capacity {min_discharge} < 0")));
    }
    let idx = config
        .storage(storage_name)
        .ok_or_else(|| Error::UnknownTechnology(storage_name.into()))?;
    let mut out = config.clone();
    out.storages[idx].min_discharge_capacity = min_discharge;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn annuity_edge_cases() {
        assert_relative_eq!(annualized_fixed_cost(100.0, 0.0, 1.0, 0.0).unwrap(), 100.0);
        assert_eq!(annualized_fixed_cost(0.0, 0.05, 25.0, 0.07).unwrap(), 0.0);
        assert!(annualized_fixed_cost(100.0, 0.0, 0.0, 0.07).is_err());
        assert!(annualized_fixed_cost(100.0, 0.0, -3.0, 0.07).is_err());
    }

    #[test]
    fn perturbation() {
        let mut caps = CapacitySet::<f64>::default();
        caps.generators.insert("wind".into(), 100.0);
        caps.storages.insert("h2".into(), StorageCapacity { charge: 10.0, discharge: 50.0, energy: 200.0 });
        let up = apply_capacity_perturbation(&caps, 0.05).unwrap();
        assert_relative_eq!(up.generators["wind"], 105.0);
        let down = apply_capacity_perturbation(&caps, -0.05).unwrap();
        assert_relative_eq!(down.storages["h2"].energy, 190.0);
        assert_relative_eq!(down.storages["h2"].discharge, 47.5);
        assert_eq!(apply_capacity_perturbation(&caps, 0.0).unwrap(), caps);
        assert_eq!(caps.generators["wind"], 100.0);
        assert!(apply_capacity_perturbation(&caps, -1.0).is_err());
    }

    #[test]
    fn time_grid_invariants() {
        let t0 = "2020-01-01T00:00:00Z".parse::<DateTime<Utc>>().unwrap();
        let grid = TimeGrid::<f64>::regular(t0, 48, 1).unwrap();
        assert_eq!(grid.total_hours(), 48.0);
        assert_eq!(grid.calendar()[0], (2020, 1));
        assert!(TimeGrid::<f64>::new(vec![t0, t0], vec![1.0, 1.0]).is_err());
        assert!(TimeGrid::<f64>::new(vec![t0], vec![0.0]).is_err());
        assert!(TimeGrid::<f64>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn reserve_requires_known_storage() {
        let cfg = defaults::desk_config::<f64>("t", TimeGrid::regular("2020-01-01T00:00:00Z".parse().unwrap(), 4, 1).unwrap(), vec![0.5; 4], vec![0.2; 4]);
        assert!(matches!(force_reserve_capacity(&cfg, "nope", 1.0), Err(Error::UnknownTechnology(_))));
        let forced = force_reserve_capacity(&cfg, "hydrogen", 70.0).unwrap();
        assert_eq!(forced.storages[1].min_discharge_capacity, 70.0);
        assert_eq!(cfg.storages[1].min_discharge_capacity, 0.0);
    }
}
