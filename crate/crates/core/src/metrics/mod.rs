//! Diagnostics computed from run results: duration curves, price statistics,
//! market values, curtailment, cost recovery and welfare.
//!
//! Standard deviations use the population convention. Baseload prices are
//! plain time averages (weighted by snapshot duration, not by volume).

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::demand::{coupled_pairs, DemandModel, ZERO_PRICE_TOL};
use crate::dispatch::RunResult;
use crate::error::{Error, Result};
use crate::model::{PowerCoupling, SystemConfig};
use crate::scalar::{Scalar, HOURS_PER_YEAR};
use crate::solver::{AssetKey, BUILT_THRESHOLD};

/// Values sorted in descending order against cumulative duration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationCurve<T> {
    pub values: Vec<T>,
    /// Hours up to and including each step.
    pub cumulative_hours: Vec<T>,
    pub total_hours: T,
}

impl<T: Scalar> DurationCurve<T> {
    /// Area under the curve, `Σ value·width`.
    pub fn area(&self) -> T {
        let mut prev = T::zero();
        let mut area = T::zero();
        for (v, c) in self.values.iter().zip(&self.cumulative_hours) {
            area += *v * (*c - prev);
            prev = *c;
        }
        area
    }
}

fn check_lengths<T>(series: &[T], weights: &[T]) -> Result<()> {
    if series.len() != weights.len() {
        return Err(Error::Domain(format!(
            "series has {} values but {} weights",
            series.len(),
            weights.len()
        )));
    }
    Ok(())
}

pub fn duration_curve<T: Scalar>(series: &[T], weights: &[T]) -> Result<DurationCurve<T>> {
    check_lengths(series, weights)?;
    if series.is_empty() {
        return Err(Error::Domain("duration curve of an empty series".into()));
    }
    let mut order: Vec<usize> = (0..series.len()).collect();
    // Stable, so ties keep their input order.
    order.sort_by(|&i, &j| series[j].partial_cmp(&series[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = T::zero();
    let mut cumulative_hours = Vec::with_capacity(order.len());
    for &i in &order {
        cum += weights[i];
        cumulative_hours.push(cum);
    }
    Ok(DurationCurve {
        values: order.iter().map(|&i| series[i]).collect(),
        cumulative_hours,
        total_hours: cum,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricePredicate<T> {
    /// `|λ| ≤ ZERO_PRICE_TOL`.
    Zero,
    Above(T),
}

/// Weighted fraction of snapshots satisfying `predicate`.
pub fn price_share<T: Scalar>(series: &[T], weights: &[T], predicate: PricePredicate<T>) -> Result<T> {
    check_lengths(series, weights)?;
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::Domain("price share over zero hours".into()));
    }
    let hit: T = series
        .iter()
        .zip(weights)
        .filter(|(p, _)| match predicate {
            PricePredicate::Zero => p.abs() <= T::lit(ZERO_PRICE_TOL),
            PricePredicate::Above(th) => **p > th,
        })
        .map(|(_, w)| *w)
        .sum();
    Ok(hit / total)
}

fn weighted_mean_std<T: Scalar>(values: &[T], weights: &[T]) -> (T, T) {
    let total: T = weights.iter().copied().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| *v * *w).sum::<T>() / total;
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| (*v - mean) * (*v - mean) * *w)
        .sum::<T>()
        / total;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseloadStats<T> {
    pub annual: Vec<(i32, T)>,
    pub monthly: Vec<((i32, u32), T)>,
    pub mean: T,
    /// Spread of the annual means.
    pub std_annual: T,
    /// Spread of the hourly prices.
    pub std_hourly: T,
}

pub fn baseload_stats<T: Scalar>(prices: &[T], weights: &[T], calendar: &[(i32, u32)]) -> Result<BaseloadStats<T>> {
    check_lengths(prices, weights)?;
    if calendar.len() != prices.len() {
        return Err(Error::Domain("calendar does not cover every snapshot".into()));
    }
    if prices.is_empty() {
        return Err(Error::Domain("baseload statistics of an empty series".into()));
    }
    let mut years: BTreeMap<i32, (T, T)> = BTreeMap::new();
    let mut months: BTreeMap<(i32, u32), (T, T)> = BTreeMap::new();
    for ((p, w), ym) in prices.iter().zip(weights).zip(calendar) {
        let y = years.entry(ym.0).or_insert((T::zero(), T::zero()));
        y.0 += *p * *w;
        y.1 += *w;
        let m = months.entry(*ym).or_insert((T::zero(), T::zero()));
        m.0 += *p * *w;
        m.1 += *w;
    }
    let annual: Vec<(i32, T)> = years.into_iter().map(|(y, (s, w))| (y, s / w)).collect();
    let monthly = months.into_iter().map(|(k, (s, w))| (k, s / w)).collect();
    let (mean, std_hourly) = weighted_mean_std(prices, weights);
    let means: Vec<T> = annual.iter().map(|(_, v)| *v).collect();
    let (_, std_annual) = weighted_mean_std(&means, &vec![T::one(); means.len()]);
    Ok(BaseloadStats {
        annual,
        monthly,
        mean,
        std_annual,
        std_hourly,
    })
}

/// Volume-weighted price `Σ wλg / Σ wg`; `None` without dispatch.
pub fn market_value<T: Scalar>(prices: &[T], dispatch: &[T], weights: &[T]) -> Option<T> {
    let energy: T = dispatch.iter().zip(weights).map(|(g, w)| *g * *w).sum();
    if !(energy > T::zero()) {
        return None;
    }
    let revenue: T = prices
        .iter()
        .zip(dispatch)
        .zip(weights)
        .map(|((p, g), w)| *p * *g * *w)
        .sum();
    Some(revenue / energy)
}

/// One variable generator's availability, capacity and dispatch.
pub struct VreDispatch<'a, T> {
    pub availability: &'a [T],
    pub capacity: T,
    pub dispatch: &'a [T],
}

/// Share of available variable-renewable energy not used, aggregated over
/// all given generators.
pub fn curtailment<T: Scalar>(items: &[VreDispatch<'_, T>], weights: &[T]) -> Result<T> {
    let mut available = T::zero();
    let mut used = T::zero();
    for it in items {
        for t in 0..weights.len() {
            available += weights[t] * it.availability[t] * it.capacity;
            used += weights[t] * it.dispatch[t];
        }
    }
    if !(available > T::zero()) {
        return Err(Error::Domain("no available renewable energy".into()));
    }
    Ok(T::one() - used / available)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRecoveryRow<T> {
    pub asset: String,
    /// Market revenue over the run (€).
    pub revenue: T,
    pub variable_cost: T,
    /// Annualised fixed cost scaled to the run's duration (€).
    pub fixed_cost: T,
    /// `(revenue − variable_cost) / fixed_cost`.
    pub ratio: T,
}

fn horizon_years<T: Scalar>(weights: &[T]) -> T {
    weights.iter().copied().sum::<T>() / T::lit(HOURS_PER_YEAR)
}

/// Component-level accounting: electricity at λ, storage media at the MSV.
///
/// A converter earns the spread between electricity and medium (charging
/// `Σ w(ηʰλˢ − λ)h`, discharging `Σ w(λ − λˢ/ηᶠ)f`); the energy store earns
/// `Σ wλˢ(f/ηᶠ − ηʰh)`, the medium it releases minus what it absorbs.
/// Components with capacity at or below the build threshold are skipped.
pub fn cost_recovery<T: Scalar>(run: &RunResult<T>, config: &SystemConfig<T>) -> Result<Vec<CostRecoveryRow<T>>> {
    let w = &run.weights;
    let n = run.len();
    let hy = horizon_years(w);
    let threshold = T::lit(BUILT_THRESHOLD);
    let mut rows = Vec::new();
    let mut push = |asset: &str, capacity: T, key: AssetKey, revenue: T, variable_cost: T| -> Result<()> {
        if capacity <= threshold {
            return Ok(());
        }
        let fixed_cost = config.fixed_cost(key)? * capacity * hy;
        let ratio = if fixed_cost > T::zero() {
            (revenue - variable_cost) / fixed_cost
        } else {
            T::nan()
        };
        rows.push(CostRecoveryRow {
            asset: asset.to_string(),
            revenue,
            variable_cost,
            fixed_cost,
            ratio,
        });
        Ok(())
    };
    for (r, g) in config.generators.iter().enumerate() {
        let d = &run.generation[&g.name];
        let revenue = (0..n).map(|t| w[t] * run.prices[t] * d[t]).sum();
        let var = (0..n).map(|t| w[t] * g.marginal_cost * d[t]).sum();
        push(&g.name, run.capacities.generators[&g.name], AssetKey::Generator(r), revenue, var)?;
    }
    for (s, st) in config.storages.iter().enumerate() {
        let h = &run.charge[&st.name];
        let f = &run.discharge[&st.name];
        let m = &run.msv[&st.name];
        let (eh, ef) = (st.charge_efficiency, st.discharge_efficiency);
        let lam = &run.prices;
        let charger: T = (0..n).map(|t| w[t] * (eh * m[t] - lam[t]) * h[t]).sum();
        let discharger: T = (0..n).map(|t| w[t] * (lam[t] - m[t] / ef) * f[t]).sum();
        let store: T = (0..n).map(|t| w[t] * m[t] * (f[t] / ef - eh * h[t])).sum();
        let cap = run.capacities.storages[&st.name];
        match st.coupling {
            PowerCoupling::Shared => {
                push(&st.labels.charge, cap.charge, AssetKey::StoragePower(s), charger + discharger, T::zero())?;
            }
            PowerCoupling::Separate => {
                push(&st.labels.charge, cap.charge, AssetKey::StorageCharge(s), charger, T::zero())?;
                push(&st.labels.discharge, cap.discharge, AssetKey::StorageDischarge(s), discharger, T::zero())?;
            }
        }
        push(&st.labels.energy, cap.energy, AssetKey::StorageEnergy(s), store, T::zero())?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceBand<T> {
    /// Exclusive lower edge, `None` for −∞.
    pub lower: Option<T>,
    /// Inclusive upper edge, `None` for +∞.
    pub upper: Option<T>,
    pub revenue: T,
}

/// Splits revenue `Σ wλx` by the price band each snapshot falls into.
/// `edges` produce the bands `(−∞, e₀], (e₀, e₁], …, (eₖ, ∞)`.
pub fn revenue_by_price_band<T: Scalar>(prices: &[T], position: &[T], weights: &[T], edges: &[T]) -> Result<Vec<PriceBand<T>>> {
    check_lengths(prices, weights)?;
    check_lengths(position, weights)?;
    if edges.windows(2).any(|e| !(e[0] < e[1])) {
        return Err(Error::Domain("band edges must be strictly ascending".into()));
    }
    let mut bands: Vec<PriceBand<T>> = (0..=edges.len())
        .map(|i| PriceBand {
            lower: if i == 0 { None } else { Some(edges[i - 1]) },
            upper: edges.get(i).copied(),
            revenue: T::zero(),
        })
        .collect();
    for ((p, x), w) in prices.iter().zip(position).zip(weights) {
        let i = edges.iter().position(|e| *p <= *e).unwrap_or(edges.len());
        bands[i].revenue += *p * *x * *w;
    }
    Ok(bands)
}

/// Welfare accounting of a run (€ over the run's duration).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Welfare<T> {
    /// Consumer utility of the served demand; `None` for perfectly inelastic demand.
    pub utility: Option<T>,
    pub variable_cost: T,
    pub fixed_cost: T,
    /// Fixed cost of capacity forced in by minimum-capacity requirements.
    pub reserve_cost: T,
    pub welfare: Option<T>,
}

impl<T: Scalar> Welfare<T> {
    pub fn system_cost(&self) -> T {
        self.variable_cost + self.fixed_cost
    }
}

pub fn welfare_decomposition<T: Scalar>(run: &RunResult<T>, config: &SystemConfig<T>, demand: &DemandModel<T>) -> Result<Welfare<T>> {
    let w = &run.weights;
    let n = run.len();
    let hy = horizon_years(w);
    let mut variable_cost = T::zero();
    for g in &config.generators {
        let d = &run.generation[&g.name];
        variable_cost += (0..n).map(|t| w[t] * g.marginal_cost * d[t]).sum::<T>();
    }
    let mut fixed_cost = T::zero();
    let mut reserve_cost = T::zero();
    for (r, g) in config.generators.iter().enumerate() {
        let c = config.fixed_cost(AssetKey::Generator(r))?;
        fixed_cost += c * run.capacities.generators[&g.name] * hy;
        reserve_cost += c * g.min_capacity * hy;
    }
    for (s, st) in config.storages.iter().enumerate() {
        let cap = run.capacities.storages[&st.name];
        fixed_cost += config.fixed_cost(AssetKey::StorageEnergy(s))? * cap.energy * hy;
        match st.coupling {
            PowerCoupling::Shared => {
                let c = config.fixed_cost(AssetKey::StoragePower(s))?;
                fixed_cost += c * cap.charge * hy;
                reserve_cost += c * st.min_discharge_capacity * hy;
            }
            PowerCoupling::Separate => {
                fixed_cost += config.fixed_cost(AssetKey::StorageCharge(s))? * cap.charge * hy;
                let c = config.fixed_cost(AssetKey::StorageDischarge(s))?;
                fixed_cost += c * cap.discharge * hy;
                reserve_cost += c * st.min_discharge_capacity * hy;
            }
        }
    }
    let utility = if demand.is_inelastic() {
        None
    } else {
        let pieces = demand.curve.pieces();
        let mut u = T::zero();
        for (piece, served) in pieces.iter().zip(&run.demand_segments) {
            u += (0..n).map(|t| w[t] * piece.utility(served[t])).sum::<T>();
        }
        if let Some(spec) = &demand.cross_elasticity {
            let half = T::lit(0.5);
            for (piece, served) in pieces.iter().zip(&run.demand_segments) {
                let gamma = spec.gamma_fraction * piece.b;
                for (t, k) in coupled_pairs(n, spec.window) {
                    u += gamma * half * w[t] * served[t] * served[k];
                }
            }
        }
        Some(u)
    };
    Ok(Welfare {
        utility,
        variable_cost,
        fixed_cost,
        reserve_cost,
        welfare: utility.map(|u| u - variable_cost - fixed_cost),
    })
}

/// Table-style metrics of one run. Row names carry their unit; money in
/// bn€, energy in TWh, storage capacity in GWh, all for the run's duration.
pub fn run_metrics<T: Scalar>(
    run: &RunResult<T>,
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
) -> Result<IndexMap<String, Option<f64>>> {
    let f = |x: T| Some(x.as_f64());
    let w = &run.weights;
    let n = run.len();
    let total_hours: T = w.iter().copied().sum();
    let welfare = welfare_decomposition(run, config, demand)?;
    let served_energy: T = (0..n).map(|t| w[t] * run.demand[t]).sum();
    let bn = T::lit(1e9);
    let mut m: IndexMap<String, Option<f64>> = IndexMap::new();
    m.insert("system costs (bn€/period)".into(), f(welfare.system_cost() / bn));
    m.insert("utility (bn€/period)".into(), welfare.utility.map(|u| (u / bn).as_f64()));
    m.insert("welfare (bn€/period)".into(), welfare.welfare.map(|u| (u / bn).as_f64()));
    m.insert(
        "average system costs (€/MWh)".into(),
        if served_energy > T::zero() { f(welfare.system_cost() / served_energy) } else { None },
    );
    m.insert("average load served (MW)".into(), f(served_energy / total_hours));
    let full = demand.curve.total_width();
    let peak_shed = run.demand.iter().map(|d| (full - *d).max(T::zero())).fold(T::zero(), T::max);
    m.insert("peak load shedding (MW)".into(), f(peak_shed));
    let gen_energy: Vec<T> = config
        .generators
        .iter()
        .map(|g| (0..n).map(|t| w[t] * run.generation[&g.name][t]).sum())
        .collect();
    let primary: T = gen_energy.iter().copied().sum();
    m.insert("primary energy (TWh/period)".into(), f(primary / T::lit(1e6)));
    for (g, e) in config.generators.iter().zip(&gen_energy) {
        m.insert(
            format!("{} share (%)", g.name),
            if primary > T::zero() { f(*e / primary * T::lit(100.0)) } else { None },
        );
    }
    for g in &config.generators {
        m.insert(
            format!("{} market value (€/MWh)", g.name),
            market_value(&run.prices, &run.generation[&g.name], w).map(|v| v.as_f64()),
        );
    }
    for g in &config.generators {
        let cf = g.availability.iter().zip(w).map(|(a, wt)| *a * *wt).sum::<T>() / total_hours;
        m.insert(format!("{} capacity factor (%)", g.name), f(cf * T::lit(100.0)));
    }
    for st in config.storages.iter().filter(|s| s.coupling == PowerCoupling::Separate) {
        let used: T = (0..n).map(|t| w[t] * run.discharge[&st.name][t] / st.discharge_efficiency).sum();
        m.insert(format!("{} consumed (TWh/period)", st.name), f(used / T::lit(1e6)));
    }
    let vre: Vec<VreDispatch<'_, T>> = config
        .generators
        .iter()
        .filter(|g| g.marginal_cost == T::zero())
        .map(|g| VreDispatch {
            availability: &g.availability,
            capacity: run.capacities.generators[&g.name],
            dispatch: &run.generation[&g.name],
        })
        .collect();
    m.insert("curtailment (%)".into(), curtailment(&vre, w).ok().map(|c| c.as_f64() * 100.0));
    for g in &config.generators {
        m.insert(format!("{} capacity (MW)", g.name), f(run.capacities.generators[&g.name]));
    }
    for st in &config.storages {
        let cap = run.capacities.storages[&st.name];
        match st.coupling {
            PowerCoupling::Shared => {
                m.insert(format!("{} capacity (MW)", st.labels.charge), f(cap.charge));
            }
            PowerCoupling::Separate => {
                m.insert(format!("{} capacity (MW)", st.labels.charge), f(cap.charge));
                m.insert(format!("{} capacity (MW)", st.labels.discharge), f(cap.discharge));
            }
        }
        m.insert(format!("{} capacity (GWh)", st.labels.energy), f(cap.energy / T::lit(1e3)));
    }
    let (mean_p, std_p) = weighted_mean_std(&run.prices, w);
    m.insert("mean electricity price (€/MWh)".into(), f(mean_p));
    for st in config.storages.iter().filter(|s| s.coupling == PowerCoupling::Separate) {
        let (mu, sd) = weighted_mean_std(&run.msv[&st.name], w);
        m.insert(format!("mean {} price (€/MWh)", st.name), f(mu));
        m.insert(format!("STD {} price (€/MWh)", st.name), f(sd));
    }
    m.insert("STD electricity price (€/MWh)".into(), f(std_p));
    for st in &config.storages {
        let (mu, _) = weighted_mean_std(&run.msv[&st.name], w);
        m.insert(format!("mean {} MSV (€/MWh)", st.name), f(mu));
    }
    for st in &config.storages {
        let (_, sd) = weighted_mean_std(&run.msv[&st.name], w);
        m.insert(format!("STD {} MSV (€/MWh)", st.name), f(sd));
    }
    m.insert(
        "zero price share (%)".into(),
        f(price_share(&run.prices, w, PricePredicate::Zero)? * T::lit(100.0)),
    );
    m.insert(
        "price above 400 share (%)".into(),
        f(price_share(&run.prices, w, PricePredicate::Above(T::lit(400.0)))? * T::lit(100.0)),
    );
    let base = baseload_stats(&run.prices, w, config.time.calendar())?;
    m.insert("STD annual baseload price (€/MWh)".into(), f(base.std_annual));
    m.insert("reserve cost (bn€/period)".into(), f(welfare.reserve_cost / bn));
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn duration_curve_examples() {
        let c = duration_curve(&[0.0, 50.0, 100.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.values, vec![100.0, 50.0, 0.0]);
        assert_eq!(c.cumulative_hours, vec![1.0, 2.0, 3.0]);
        let single = duration_curve(&[10.0], &[5.0]).unwrap();
        assert_eq!(single.cumulative_hours, vec![5.0]);
        assert_eq!(single.total_hours, 5.0);
        assert!(duration_curve::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn price_share_examples() {
        assert_eq!(price_share(&[0.0; 4], &[1.0; 4], PricePredicate::Zero).unwrap(), 1.0);
        let s = price_share(&[0.0, 100.0, 500.0, 2000.0], &[1.0; 4], PricePredicate::Above(400.0)).unwrap();
        assert_eq!(s, 0.5);
    }

    #[test]
    fn baseload_examples() {
        let b = baseload_stats(&[100.0; 3], &[1.0; 3], &[(2000, 1), (2000, 2), (2001, 1)]).unwrap();
        assert!(b.annual.iter().all(|(_, v)| *v == 100.0));
        assert_eq!(b.std_annual, 0.0);
        let b = baseload_stats(&[50.0, 150.0], &[1.0, 1.0], &[(2000, 1), (2001, 1)]).unwrap();
        assert_eq!(b.mean, 100.0);
        assert_eq!(b.std_annual, 50.0);
    }

    #[test]
    fn market_value_examples() {
        assert_eq!(market_value(&[80.0, 80.0], &[3.0, 7.0], &[1.0, 1.0]), Some(80.0));
        assert_eq!(market_value(&[0.0, 200.0], &[5.0, 0.0], &[1.0, 1.0]), Some(0.0));
        assert_eq!(market_value(&[0.0, 200.0], &[50.0, 50.0], &[1.0, 1.0]), Some(100.0));
        assert_eq!(market_value(&[1.0], &[0.0], &[1.0]), None);
    }

    #[test]
    fn curtailment_examples() {
        let avail = [0.5, 1.0];
        let full = [5.0, 10.0];
        let half = [2.5, 5.0];
        let c = curtailment(&[VreDispatch { availability: &avail, capacity: 10.0, dispatch: &full }], &[1.0, 1.0]).unwrap();
        assert_eq!(c, 0.0);
        let c = curtailment(&[VreDispatch { availability: &avail, capacity: 10.0, dispatch: &half }], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(c, 0.5);
        assert!(curtailment(&[VreDispatch { availability: &[0.0], capacity: 10.0, dispatch: &[0.0] }], &[1.0]).is_err());
    }

    #[test]
    fn revenue_bands() {
        let all = revenue_by_price_band(&[10.0, 20.0], &[1.0, 2.0], &[1.0, 1.0], &[]).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].revenue, 50.0);
        let b = revenue_by_price_band(&[150.0; 3], &[1.0; 3], &[1.0; 3], &[0.0, 100.0, 200.0]).unwrap();
        assert_eq!(b.iter().map(|x| x.revenue).collect::<Vec<_>>(), vec![0.0, 0.0, 450.0, 0.0]);
        assert_eq!((b[2].lower, b[2].upper), (Some(100.0), Some(200.0)));
        assert!(revenue_by_price_band(&[1.0], &[1.0], &[1.0], &[2.0, 1.0]).is_err());
    }
}
