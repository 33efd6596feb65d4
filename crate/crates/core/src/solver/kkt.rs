//! First-order optimality checks on a solved problem.
//!
//! For every variable `x_j` the welfare Lagrangian must be stationary:
//!
//! ```text
//! −∂cost/∂x_j − Σ_i a_ij y_i + μ̲_j − μ̄_j = 0
//! ```
//!
//! which, for the row structure emitted by the model builder, is exactly the
//! generation, discharge, demand and charge conditions
//! `λ − o + μ̲ − μ̄ = 0`, `λ − λˢ/ηᶠ + μ̲ − μ̄ = 0`, `U'(d) − λ + μ̲ − μ̄ = 0` and
//! `ηʰλˢ − λ + μ̲ − μ̄ = 0`. For capacity variables it is the zero-profit
//! condition. Bound multipliers are only credited where the bound is active
//! at the reported primal point, so a perturbed primal shows up as a
//! stationarity violation.

use serde::{Deserialize, Serialize};

use super::problem::{ProblemSpec, Sense, VarKind};
use super::SolutionBundle;
use crate::error::Result;
use crate::scalar::Scalar;

/// Residuals of the KKT conditions. Stationarity and complementarity are in
/// scaled units (€/MWh divided by the problem's price scale); zero-profit
/// residuals are relative to the asset's fixed cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport<T> {
    pub generation: T,
    pub discharge: T,
    pub demand: T,
    pub charge: T,
    pub state_of_charge: T,
    pub complementarity: T,
    pub primal_feasibility: T,
    pub zero_profit: Vec<(String, T)>,
    /// €/MWh used to scale stationarity residuals.
    pub price_scale: T,
    /// MW used to scale primal and complementarity residuals.
    pub quantity_scale: T,
}

impl<T: Scalar> KktReport<T> {
    pub fn max_stationarity(&self) -> T {
        [
            self.generation,
            self.discharge,
            self.demand,
            self.charge,
            self.state_of_charge,
        ]
        .into_iter()
        .fold(T::zero(), T::max)
    }

    pub fn max_zero_profit(&self) -> T {
        self.zero_profit
            .iter()
            .map(|(_, r)| *r)
            .fold(T::zero(), T::max)
    }

    pub fn passes(&self, tol: T) -> bool {
        self.max_stationarity() <= tol
            && self.complementarity <= tol
            && self.primal_feasibility <= tol
            && self.max_zero_profit() <= tol
    }
}

/// Relative slack below which a bound or inequality counts as active.
const ACTIVITY_TOL: f64 = 1e-6;

pub fn verify_kkt<T: Scalar>(
    problem: &ProblemSpec<T>,
    solution: &SolutionBundle<T>,
) -> Result<KktReport<T>> {
    solution.require_optimal()?;
    let x = &solution.x;
    let y = &solution.duals;

    let price_scale = problem
        .variables
        .iter()
        .filter(|v| v.kind.snapshot().is_some())
        .map(|v| (v.cost / v.weight).abs())
        .chain(y.iter().zip(&problem.constraints).map(|(d, c)| (*d / c.dual_scale).abs()))
        .fold(T::one(), T::max);
    let quantity_scale = problem
        .constraints
        .iter()
        .map(|c| c.rhs.abs())
        .chain(problem.variables.iter().flat_map(|v| [v.lower, v.upper]).filter(|b| b.is_finite()).map(T::abs))
        .chain(x.iter().map(|v| v.abs()))
        .fold(T::one(), T::max);
    let act_tol = T::lit(ACTIVITY_TOL) * quantity_scale;

    // Reduced gradient of the welfare Lagrangian.
    let mut resid: Vec<T> = problem.cost_gradient(x).into_iter().map(|g| -g).collect();
    let activity = problem.row_activity(x);
    let mut complementarity = T::zero();
    for ((row, &dual), &act) in problem.constraints.iter().zip(y).zip(&activity) {
        let slack = match row.sense {
            Sense::Eq => T::zero(),
            Sense::Le => row.rhs - act,
            Sense::Ge => act - row.rhs,
        };
        let credited = if slack > act_tol { T::zero() } else { dual };
        for &(j, a) in &row.coeffs {
            resid[j] -= a * credited;
        }
        if row.sense != Sense::Eq {
            complementarity = complementarity.max((dual * slack).abs() / (row.dual_scale * price_scale * quantity_scale));
        }
    }
    for (j, v) in problem.variables.iter().enumerate() {
        let lo_slack = x[j] - v.lower;
        let up_slack = v.upper - x[j];
        if v.lower.is_finite() {
            if lo_slack <= act_tol {
                resid[j] += solution.lower_duals[j];
            }
            complementarity = complementarity
                .max((solution.lower_duals[j] * lo_slack).abs() / (v.weight * price_scale * quantity_scale));
        }
        if v.upper.is_finite() {
            if up_slack <= act_tol {
                resid[j] -= solution.upper_duals[j];
            }
            complementarity = complementarity
                .max((solution.upper_duals[j] * up_slack).abs() / (v.weight * price_scale * quantity_scale));
        }
    }

    let mut report = KktReport {
        generation: T::zero(),
        discharge: T::zero(),
        demand: T::zero(),
        charge: T::zero(),
        state_of_charge: T::zero(),
        complementarity,
        primal_feasibility: problem.max_infeasibility(x) / quantity_scale,
        zero_profit: Vec::new(),
        price_scale,
        quantity_scale,
    };
    for (v, r) in problem.variables.iter().zip(resid) {
        let scaled = (r / v.weight).abs() / price_scale;
        let slot = match v.kind {
            VarKind::Generation { .. } => &mut report.generation,
            VarKind::Discharge { .. } => &mut report.discharge,
            VarKind::Demand { .. } | VarKind::Shedding { .. } => &mut report.demand,
            VarKind::Charge { .. } => &mut report.charge,
            VarKind::Soc { .. } => &mut report.state_of_charge,
            VarKind::Capacity(_) => {
                let fixed = v.cost.abs().max(T::one());
                report.zero_profit.push((v.name.clone(), r.abs() / fixed));
                continue;
            }
        };
        *slot = slot.max(scaled);
    }
    Ok(report)
}
