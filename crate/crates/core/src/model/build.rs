use super::{CapacitySet, PowerCoupling, Representation, SystemConfig};
use crate::demand::{cross_elastic_terms, DemandModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::solver::{
    AssetKey, CapacityValue, Constraint, ProblemSpec, RowTag, Sense, VarKind, Variable,
};

/// Boundary condition of a storage energy series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SocBoundary<T> {
    /// The first snapshot's predecessor is the last snapshot.
    Cyclic,
    /// Starts from `initial` MWh; optionally ends with at least `terminal_min`.
    Fixed { initial: T, terminal_min: Option<T> },
}

/// How a storage unit's dispatch is valued inside the problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StorageMode<T> {
    /// Dispatch optimised against the storage's own energy balance.
    Endogenous,
    /// Charging earns `charge_bid` and discharging costs `discharge_offer`
    /// (€/MWh of electricity); the energy balance is still tracked.
    PriceTaking { charge_bid: T, discharge_offer: T },
}

/// Everything beyond the configuration that shapes a problem.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildOptions<T> {
    /// `None` co-optimises capacities (long-term); `Some` fixes them.
    pub capacities: Option<CapacitySet<T>>,
    /// Multiplier on annualised fixed costs, normally `Σ w_t / 8760`.
    pub horizon_years: T,
    /// Per storage; `None` follows each storage's `cyclic_soc` flag.
    pub soc: Option<Vec<SocBoundary<T>>>,
    /// Per storage; `None` means all endogenous.
    pub modes: Option<Vec<StorageMode<T>>>,
}

impl<T: Scalar> BuildOptions<T> {
    pub fn long_term(horizon_years: T) -> Self {
        Self {
            capacities: None,
            horizon_years,
            soc: None,
            modes: None,
        }
    }

    pub fn short_term(capacities: CapacitySet<T>) -> Self {
        Self {
            capacities: Some(capacities),
            horizon_years: T::zero(),
            soc: None,
            modes: None,
        }
    }
}

/// Long-term welfare maximisation with capacities as decisions.
pub fn build_lt_problem<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    horizon_years: T,
) -> Result<ProblemSpec<T>> {
    build_problem(config, demand, &BuildOptions::long_term(horizon_years))
}

/// Short-term dispatch with capacities fixed to `capacities`.
pub fn build_st_problem<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    capacities: &CapacitySet<T>,
) -> Result<ProblemSpec<T>> {
    build_problem(config, demand, &BuildOptions::short_term(capacities.clone()))
}

fn push_merged<T: Scalar>(coeffs: &mut Vec<(usize, T)>, j: usize, a: T) {
    if let Some(entry) = coeffs.iter_mut().find(|(k, _)| *k == j) {
        entry.1 += a;
    } else {
        coeffs.push((j, a));
    }
}

fn bounded<T: Scalar>(v: Option<T>) -> T {
    v.unwrap_or_else(T::infinity)
}

pub fn build_problem<T: Scalar>(
    config: &SystemConfig<T>,
    demand: &DemandModel<T>,
    options: &BuildOptions<T>,
) -> Result<ProblemSpec<T>> {
    config.validate()?;
    demand.validate()?;
    if demand.is_inelastic() && config.representation == Representation::LoadShedding {
        return Err(Error::Config(
            "perfectly inelastic demand admits only the direct (fixed demand) representation".into(),
        ));
    }
    if let Some(caps) = &options.capacities {
        caps.check_covers(config)?;
        caps.validate()?;
    }
    let n_t = config.time.len();
    let n_s = config.storages.len();
    let soc: Vec<SocBoundary<T>> = match &options.soc {
        Some(v) if v.len() == n_s => v.clone(),
        Some(v) => {
            return Err(Error::Config(format!("{} SOC boundaries for {n_s} storages", v.len())))
        }
        None => config
            .storages
            .iter()
            .map(|s| {
                if s.cyclic_soc {
                    SocBoundary::Cyclic
                } else {
                    SocBoundary::Fixed {
                        initial: T::zero(),
                        terminal_min: None,
                    }
                }
            })
            .collect(),
    };
    let modes: Vec<StorageMode<T>> = match &options.modes {
        Some(v) if v.len() == n_s => v.clone(),
        Some(v) => return Err(Error::Config(format!("{} storage modes for {n_s} storages", v.len()))),
        None => vec![StorageMode::Endogenous; n_s],
    };

    let w = config.time.weights();
    let hy = options.horizon_years;
    let half = T::lit(0.5);
    let kind = if options.capacities.is_some() { "st" } else { "lt" };
    let mut p = ProblemSpec::new(format!("{}-{kind}", config.name), n_t);

    // Capacity variables (long-term) or constants (short-term).
    let cap = |p: &mut ProblemSpec<T>, key: AssetKey, name: String, lower: T, upper: T, fixed: Option<T>| -> Result<CapacityValue<T>> {
        let value = match fixed {
            Some(c) => CapacityValue::Fixed(c),
            None => {
                let c = config.fixed_cost(key)? * hy;
                CapacityValue::Var(p.add_variable(Variable {
                    name,
                    kind: VarKind::Capacity(key),
                    lower,
                    upper,
                    cost: c,
                    quad: T::zero(),
                    weight: T::one(),
                }))
            }
        };
        p.capacities.push((key, value));
        Ok(value)
    };
    let caps = options.capacities.as_ref();
    let mut gen_caps = Vec::new();
    for (r, g) in config.generators.iter().enumerate() {
        let fixed = caps.map(|c| c.generators[&g.name]);
        gen_caps.push(cap(&mut p, AssetKey::Generator(r), format!("G[{}]", g.name), g.min_capacity, bounded(g.max_capacity), fixed)?);
    }
    // (charge, discharge, energy) capacity per storage.
    let mut sto_caps = Vec::new();
    for (s, st) in config.storages.iter().enumerate() {
        let fixed = caps.map(|c| c.storages[&st.name]);
        let energy_key = AssetKey::StorageEnergy(s);
        let triple = match st.coupling {
            PowerCoupling::Shared => {
                let pw = cap(&mut p, AssetKey::StoragePower(s), format!("P[{}]", st.name), st.min_discharge_capacity, T::infinity(), fixed.map(|f| f.charge))?;
                let pw_f = match fixed {
                    Some(f) => CapacityValue::Fixed(f.discharge),
                    None => pw,
                };
                let e = cap(&mut p, energy_key, format!("E[{}]", st.name), T::zero(), bounded(st.max_energy_capacity), fixed.map(|f| f.energy))?;
                (pw, pw_f, e)
            }
            PowerCoupling::Separate => {
                let h = cap(&mut p, AssetKey::StorageCharge(s), format!("H[{}]", st.name), T::zero(), T::infinity(), fixed.map(|f| f.charge))?;
                let f = cap(&mut p, AssetKey::StorageDischarge(s), format!("F[{}]", st.name), st.min_discharge_capacity, T::infinity(), fixed.map(|f| f.discharge))?;
                let e = cap(&mut p, energy_key, format!("E[{}]", st.name), T::zero(), bounded(st.max_energy_capacity), fixed.map(|f| f.energy))?;
                (h, f, e)
            }
        };
        sto_caps.push(triple);
    }

    // Demand side.
    let pieces = demand.curve.pieces();
    let shedding = config.representation == Representation::LoadShedding;
    let mut demand_vars = vec![Vec::with_capacity(n_t); pieces.len()];
    for (c, piece) in pieces.iter().enumerate() {
        for t in 0..n_t {
            let (name, kind, cost) = if shedding {
                (format!("shed[{c}][{t}]"), VarKind::Shedding { segment: c, t }, (piece.a - piece.b * piece.width) * w[t])
            } else {
                (format!("d[{c}][{t}]"), VarKind::Demand { segment: c, t }, -piece.a * w[t])
            };
            demand_vars[c].push(p.add_variable(Variable {
                name,
                kind,
                lower: T::zero(),
                upper: piece.width,
                cost,
                quad: piece.b * half * w[t],
                weight: w[t],
            }));
        }
    }
    if shedding {
        let per_hour: T = pieces.iter().map(|pc| pc.full_utility()).sum();
        p.dropped_constant = per_hour * config.time.total_hours();
    }
    if let Some(spec) = &demand.cross_elasticity {
        let terms = cross_elastic_terms(spec, &pieces, w, shedding)?;
        for (c, t, k, coef) in terms.bilinear {
            p.bilinear.push((demand_vars[c][t], demand_vars[c][k], coef));
        }
        for (c, t, coef) in terms.linear {
            p.variables[demand_vars[c][t]].cost += coef;
        }
        p.dropped_constant += terms.constant;
    }

    // Supply side.
    let mut gen_vars = vec![Vec::with_capacity(n_t); config.generators.len()];
    for (r, g) in config.generators.iter().enumerate() {
        for t in 0..n_t {
            gen_vars[r].push(p.add_variable(Variable {
                name: format!("g[{}][{t}]", g.name),
                kind: VarKind::Generation { gen: r, t },
                lower: T::zero(),
                upper: T::infinity(),
                cost: g.marginal_cost * w[t],
                quad: T::zero(),
                weight: w[t],
            }));
        }
    }
    let mut charge_vars = vec![Vec::with_capacity(n_t); n_s];
    let mut discharge_vars = vec![Vec::with_capacity(n_t); n_s];
    let mut soc_vars = vec![Vec::with_capacity(n_t); n_s];
    for (s, st) in config.storages.iter().enumerate() {
        let (h_cost, f_cost) = match modes[s] {
            StorageMode::Endogenous => (T::zero(), T::zero()),
            StorageMode::PriceTaking { charge_bid, discharge_offer } => (-charge_bid, discharge_offer),
        };
        for t in 0..n_t {
            charge_vars[s].push(p.add_variable(Variable {
                name: format!("h[{}][{t}]", st.name),
                kind: VarKind::Charge { storage: s, t },
                lower: T::zero(),
                upper: T::infinity(),
                cost: h_cost * w[t],
                quad: T::zero(),
                weight: w[t],
            }));
            discharge_vars[s].push(p.add_variable(Variable {
                name: format!("f[{}][{t}]", st.name),
                kind: VarKind::Discharge { storage: s, t },
                lower: T::zero(),
                upper: T::infinity(),
                cost: f_cost * w[t],
                quad: T::zero(),
                weight: w[t],
            }));
            let lower = match soc[s] {
                SocBoundary::Fixed { terminal_min: Some(m), .. } if t + 1 == n_t => m,
                _ => T::zero(),
            };
            soc_vars[s].push(p.add_variable(Variable {
                name: format!("e[{}][{t}]", st.name),
                kind: VarKind::Soc { storage: s, t },
                lower,
                upper: T::infinity(),
                cost: T::zero(),
                quad: T::zero(),
                weight: T::one(),
            }));
        }
    }

    // Electricity balance: Σd + Σh − Σg − Σf = 0.
    let fixed_demand = if demand.is_inelastic() {
        demand.curve.total_width()
    } else if shedding {
        demand.curve.total_width()
    } else {
        T::zero()
    };
    for t in 0..n_t {
        let mut coeffs = Vec::new();
        for vars in &demand_vars {
            coeffs.push((vars[t], if shedding { -T::one() } else { T::one() }));
        }
        for s in 0..n_s {
            coeffs.push((charge_vars[s][t], T::one()));
            coeffs.push((discharge_vars[s][t], -T::one()));
        }
        for vars in &gen_vars {
            coeffs.push((vars[t], -T::one()));
        }
        p.add_constraint(Constraint {
            name: format!("balance[{t}]"),
            coeffs,
            sense: Sense::Eq,
            rhs: -fixed_demand,
            tag: RowTag::Price(t),
            dual_scale: w[t],
        });
    }

    // Storage balance: e_t − e_{t−1} − w·ηʰ·h + w·f/ηᶠ = 0.
    for (s, st) in config.storages.iter().enumerate() {
        for t in 0..n_t {
            let mut coeffs = vec![(soc_vars[s][t], T::one())];
            let mut rhs = T::zero();
            if t > 0 {
                push_merged(&mut coeffs, soc_vars[s][t - 1], -T::one());
            } else {
                match soc[s] {
                    SocBoundary::Cyclic => push_merged(&mut coeffs, soc_vars[s][n_t - 1], -T::one()),
                    SocBoundary::Fixed { initial, .. } => rhs = initial,
                }
            }
            coeffs.retain(|(_, a)| *a != T::zero());
            coeffs.push((charge_vars[s][t], -w[t] * st.charge_efficiency));
            coeffs.push((discharge_vars[s][t], w[t] / st.discharge_efficiency));
            p.add_constraint(Constraint {
                name: format!("soc_balance[{}][{t}]", st.name),
                coeffs,
                sense: Sense::Eq,
                rhs,
                tag: RowTag::Msv { storage: s, t },
                dual_scale: T::one(),
            });
        }
    }

    // Capacity limits: dispatch − availability·capacity ≤ 0.
    let cap_row = |p: &mut ProblemSpec<T>, name: String, var: usize, factor: T, capv: CapacityValue<T>, asset: AssetKey, t: usize, scale: T| {
        let (coeffs, rhs) = match capv {
            CapacityValue::Var(c) => (vec![(var, T::one()), (c, -factor)], T::zero()),
            CapacityValue::Fixed(c) => (vec![(var, T::one())], factor * c),
        };
        p.add_constraint(Constraint {
            name,
            coeffs,
            sense: Sense::Le,
            rhs,
            tag: RowTag::Cap { asset, t },
            dual_scale: scale,
        });
    };
    for (r, g) in config.generators.iter().enumerate() {
        for t in 0..n_t {
            cap_row(&mut p, format!("cap_g[{}][{t}]", g.name), gen_vars[r][t], g.availability[t], gen_caps[r], AssetKey::Generator(r), t, w[t]);
        }
    }
    for (s, st) in config.storages.iter().enumerate() {
        let (hc, fc, ec) = sto_caps[s];
        for t in 0..n_t {
            cap_row(&mut p, format!("cap_h[{}][{t}]", st.name), charge_vars[s][t], T::one(), hc, AssetKey::StorageCharge(s), t, w[t]);
            cap_row(&mut p, format!("cap_f[{}][{t}]", st.name), discharge_vars[s][t], T::one(), fc, AssetKey::StorageDischarge(s), t, w[t]);
            cap_row(&mut p, format!("cap_e[{}][{t}]", st.name), soc_vars[s][t], T::one(), ec, AssetKey::StorageEnergy(s), t, T::one());
        }
    }
    Ok(p)
}

/// Annualised fixed cost of `capacities` over `horizon_years`.
pub fn fixed_cost_block<T: Scalar>(config: &SystemConfig<T>, capacities: &CapacitySet<T>, horizon_years: T) -> Result<T> {
    let mut total = T::zero();
    for (r, g) in config.generators.iter().enumerate() {
        let c = *capacities.generators.get(&g.name).ok_or_else(|| Error::MissingCapacity(g.name.clone()))?;
        total += config.fixed_cost(AssetKey::Generator(r))? * c;
    }
    for (s, st) in config.storages.iter().enumerate() {
        let c = *capacities.storages.get(&st.name).ok_or_else(|| Error::MissingCapacity(st.name.clone()))?;
        total += config.fixed_cost(AssetKey::StorageEnergy(s))? * c.energy;
        match st.coupling {
            PowerCoupling::Shared => total += config.fixed_cost(AssetKey::StoragePower(s))? * c.charge,
            PowerCoupling::Separate => {
                total += config.fixed_cost(AssetKey::StorageCharge(s))? * c.charge;
                total += config.fixed_cost(AssetKey::StorageDischarge(s))? * c.discharge;
            }
        }
    }
    Ok(total * horizon_years)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::defaults;
    use crate::model::{StorageCapacity, TimeGrid};

    fn grid(n: usize) -> TimeGrid<f64> {
        TimeGrid::regular("2020-01-01T00:00:00Z".parse().unwrap(), n, 1).unwrap()
    }

    #[test]
    fn variable_count_matches_enumeration() {
        let n = 24;
        let cfg = defaults::desk_config("count", grid(n), vec![0.3; n], vec![0.1; n]);
        let p = build_lt_problem(&cfg, &DemandModel::voll_default(), 1.0).unwrap();
        // Per snapshot: 2 generators, 1 shedder, 3 series per storage.
        // Capacities: 2 generators, battery converter + energy, hydrogen charger + discharger + energy.
        let per_t = 2 + 1 + 3 + 3;
        let caps = 2 + 2 + 3;
        assert_eq!(p.n_vars(), n * per_t + caps);
        assert_eq!(p.price_rows().unwrap().len(), n);
        for s in 0..2 {
            assert_eq!(p.msv_rows(s).unwrap().len(), n);
        }
        assert!(p.row("balance[3]").is_some());
        assert!(p.row("soc_balance[hydrogen][23]").is_some());
        assert!(p.var("E[battery]").is_some());
        // The shared converter bounds both flows.
        let pw = p.var("P[battery]").unwrap();
        for name in ["cap_h[battery][5]", "cap_f[battery][5]"] {
            let row = &p.constraints[p.row(name).unwrap()];
            assert!(row.coeffs.contains(&(pw, -1.0)));
        }
    }

    #[test]
    fn single_hour_inelastic() {
        let mut cfg = defaults::desk_config("one", grid(1), vec![1.0], vec![0.0]);
        cfg.generators.truncate(1);
        cfg.storages.clear();
        cfg.representation = Representation::DirectDemand;
        let p = build_lt_problem(&cfg, &DemandModel::inelastic(100.0), 1.0).unwrap();
        let row = &p.constraints[p.price_rows().unwrap()[0]];
        assert_eq!(row.coeffs.len(), 1);
        assert_eq!(row.rhs, -100.0);
    }

    #[test]
    fn inelastic_rejects_substitution() {
        let cfg = defaults::desk_config("x", grid(2), vec![1.0; 2], vec![0.0; 2]);
        assert!(build_lt_problem(&cfg, &DemandModel::inelastic(100.0), 1.0).is_err());
    }

    #[test]
    fn pwl_creates_three_shedders() {
        let cfg = defaults::desk_config("pwl", grid(2), vec![1.0; 2], vec![0.0; 2]);
        let p = build_lt_problem(&cfg, &DemandModel::pwl_default(), 1.0).unwrap();
        let shed: Vec<_> = p.variables.iter().filter(|v| matches!(v.kind, VarKind::Shedding { t: 0, .. })).collect();
        assert_eq!(shed.len(), 3);
        assert_eq!((shed[0].cost, shed[0].quad, shed[0].upper), (400.0, 40.0, 95.0));
        assert_eq!((shed[2].cost, shed[2].quad, shed[2].upper), (0.0, 10.0, 10.0));
    }

    #[test]
    fn st_requires_every_capacity() {
        let cfg = defaults::desk_config("st", grid(2), vec![1.0; 2], vec![0.0; 2]);
        let mut caps = CapacitySet::default();
        caps.generators.insert("wind".to_string(), 10.0);
        caps.generators.insert("solar".to_string(), 10.0);
        caps.storages.insert("battery".to_string(), StorageCapacity { charge: 1.0, discharge: 1.0, energy: 1.0 });
        match build_st_problem(&cfg, &DemandModel::voll_default(), &caps) {
            Err(Error::MissingCapacity(name)) => assert_eq!(name, "hydrogen"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn st_has_no_capacity_variables() {
        let cfg = defaults::desk_config("st", grid(3), vec![1.0; 3], vec![0.0; 3]);
        let lt = build_lt_problem(&cfg, &DemandModel::voll_default(), 1.0).unwrap();
        let mut caps = CapacitySet::default();
        for g in ["wind", "solar"] {
            caps.generators.insert(g.to_string(), 5.0);
        }
        for s in ["battery", "hydrogen"] {
            caps.storages.insert(s.to_string(), StorageCapacity { charge: 1.0, discharge: 1.0, energy: 1.0 });
        }
        let st = build_st_problem(&cfg, &DemandModel::voll_default(), &caps).unwrap();
        assert!(st.variables.iter().all(|v| !matches!(v.kind, VarKind::Capacity(_))));
        let names = |p: &ProblemSpec<f64>| p.constraints.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
        assert_eq!(names(&lt), names(&st));
    }
}
