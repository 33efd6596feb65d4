//! Solver-facing problem representation, the interior-point backend and
//! dual-based price extraction.
//!
//! Prices are never reconstructed from bid stacks: the electricity price is
//! the dual of the hourly balance row and the marginal storage value is the
//! dual of the storage energy balance.

mod kkt;
mod lp_format;
mod problem;

use std::collections::HashMap;
use std::sync::Mutex;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT::{NonnegativeConeT, ZeroConeT},
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use kkt::{verify_kkt, KktReport};
pub use lp_format::write_lp;
pub use problem::{
    AssetKey, CapacityValue, Constraint, ProblemSpec, RowTag, Sense, VarKind, Variable,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Environment variable selecting the backend thread count.
pub const THREADS_ENV: &str = "GRIDPRICE_SOLVER_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Relative and absolute duality-gap tolerance of the barrier method.
    pub barrier_tolerance: f64,
    /// Primal/dual feasibility tolerance.
    pub dual_tolerance: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            barrier_tolerance: 1e-9,
            dual_tolerance: 1e-9,
            max_iter: 200,
            verbose: false,
        }
    }
}

/// Primal and dual solution of a [`ProblemSpec`].
///
/// Row duals follow the sign convention of the welfare Lagrangian
/// `W(x) − Σ y_i (a_i·x − b_i) + μ̲(x − l) − μ̄(x − u)`, so a scarce balance row
/// has a positive dual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionBundle<T> {
    pub status: SolveStatus,
    pub x: Vec<T>,
    pub duals: Vec<T>,
    /// Multipliers of `x ≥ lower`, non-negative.
    pub lower_duals: Vec<T>,
    /// Multipliers of `x ≤ upper`, non-negative.
    pub upper_duals: Vec<T>,
    /// Welfare objective, excluding constants dropped by substitution.
    pub objective: T,
    pub iterations: u32,
    pub diagnostics: String,
}

impl<T: Scalar> SolutionBundle<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    fn failed(status: SolveStatus, n: usize, m: usize, diagnostics: String) -> Self {
        Self {
            status,
            x: vec![T::nan(); n],
            duals: vec![T::nan(); m],
            lower_duals: vec![T::nan(); n],
            upper_duals: vec![T::nan(); n],
            objective: T::nan(),
            iterations: 0,
            diagnostics,
        }
    }

    pub fn require_optimal(&self) -> Result<()> {
        if self.is_optimal() {
            Ok(())
        } else {
            Err(Error::NotOptimal(self.status))
        }
    }
}

/// Any convex QP method that returns Lagrange multipliers.
pub trait QpSolver<T: Scalar> {
    fn solve(&self, problem: &ProblemSpec<T>) -> SolutionBundle<T>;
}

/// Interior-point backend without crossover.
#[derive(Clone, Debug, Default)]
pub struct ClarabelSolver {
    pub options: SolveOptions,
}

impl ClarabelSolver {
    pub fn new(options: SolveOptions) -> Self {
        Self { options }
    }

    fn settings<T: Scalar>(&self) -> DefaultSettings<T> {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse::<u32>().ok())
            .unwrap_or(0);
        let tol = T::lit(self.options.barrier_tolerance);
        DefaultSettingsBuilder::default()
            .verbose(self.options.verbose)
            .max_iter(self.options.max_iter)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_feas(T::lit(self.options.dual_tolerance))
            .max_threads(threads)
            .presolve_enable(false)
            .build()
            .expect("valid solver settings")
    }
}

/// Origin of a row handed to the backend.
#[derive(Clone, Copy)]
enum RowOrigin {
    Row(usize, bool),
    Lower(usize),
    Upper(usize),
}

impl<T: Scalar> QpSolver<T> for ClarabelSolver {
    fn solve(&self, problem: &ProblemSpec<T>) -> SolutionBundle<T> {
        let n = problem.n_vars();
        let m = problem.n_rows();
        if n == 0 {
            let feasible = problem.constraints.iter().all(|c| match c.sense {
                Sense::Eq => c.rhs == T::zero(),
                Sense::Le => c.rhs >= T::zero(),
                Sense::Ge => c.rhs <= T::zero(),
            });
            if !feasible {
                return SolutionBundle::failed(SolveStatus::Infeasible, 0, m, "empty problem with infeasible rows".into());
            }
            return SolutionBundle {
                status: SolveStatus::Optimal,
                x: Vec::new(),
                duals: vec![T::zero(); m],
                lower_duals: Vec::new(),
                upper_duals: Vec::new(),
                objective: T::zero(),
                iterations: 0,
                diagnostics: String::new(),
            };
        }

        let two = T::lit(2.0);
        // Quadratic term ½xᵀPx with P upper triangular.
        let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
        for (j, v) in problem.variables.iter().enumerate() {
            if v.quad != T::zero() {
                pi.push(j);
                pj.push(j);
                pv.push(two * v.quad);
            }
        }
        for &(i, j, c) in &problem.bilinear {
            if i == j {
                pi.push(i);
                pj.push(i);
                pv.push(two * c);
            } else {
                pi.push(i.min(j));
                pj.push(i.max(j));
                pv.push(c);
            }
        }
        let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
        let q: Vec<T> = problem.variables.iter().map(|v| v.cost).collect();

        let n_eq = problem.constraints.iter().filter(|c| c.sense == Sense::Eq).count();
        let mut origins = Vec::new();
        let (mut ai, mut aj, mut av, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut push_row = |origin: RowOrigin, coeffs: &[(usize, T)], sign: T, rhs: T| {
            let r = origins.len();
            for &(j, a) in coeffs {
                ai.push(r);
                aj.push(j);
                av.push(sign * a);
            }
            b.push(sign * rhs);
            origins.push(origin);
        };
        for (i, c) in problem.constraints.iter().enumerate() {
            if c.sense == Sense::Eq {
                push_row(RowOrigin::Row(i, false), &c.coeffs, T::one(), c.rhs);
            }
        }
        for (i, c) in problem.constraints.iter().enumerate() {
            match c.sense {
                Sense::Le => push_row(RowOrigin::Row(i, false), &c.coeffs, T::one(), c.rhs),
                Sense::Ge => push_row(RowOrigin::Row(i, true), &c.coeffs, -T::one(), c.rhs),
                Sense::Eq => {}
            }
        }
        for (j, v) in problem.variables.iter().enumerate() {
            if v.lower.is_finite() {
                push_row(RowOrigin::Lower(j), &[(j, T::one())], -T::one(), v.lower);
            }
            if v.upper.is_finite() {
                push_row(RowOrigin::Upper(j), &[(j, T::one())], T::one(), v.upper);
            }
        }
        let rows = origins.len();
        let a = CscMatrix::new_from_triplets(rows, n, ai, aj, av);
        let mut cones = Vec::new();
        if n_eq > 0 {
            cones.push(ZeroConeT(n_eq));
        }
        if rows > n_eq {
            cones.push(NonnegativeConeT(rows - n_eq));
        }

        let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, self.settings()) {
            Ok(s) => s,
            Err(e) => {
                return SolutionBundle::failed(SolveStatus::NumericFailure, n, m, format!("setup failed: {e:?}"))
            }
        };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::NumericFailure,
        };
        let diagnostics = format!(
            "clarabel status {:?}, {} iterations, r_prim {:e}, r_dual {:e}",
            sol.status, sol.iterations, sol.r_prim, sol.r_dual
        );
        if status != SolveStatus::Optimal {
            let mut failed = SolutionBundle::failed(status, n, m, diagnostics);
            failed.iterations = sol.iterations;
            return failed;
        }

        let mut duals = vec![T::zero(); m];
        let mut lower_duals = vec![T::zero(); n];
        let mut upper_duals = vec![T::zero(); n];
        for (origin, &z) in origins.iter().zip(&sol.z) {
            match *origin {
                RowOrigin::Row(i, flipped) => duals[i] = if flipped { -z } else { z },
                RowOrigin::Lower(j) => lower_duals[j] = z,
                RowOrigin::Upper(j) => upper_duals[j] = z,
            }
        }
        let x = sol.x.clone();
        SolutionBundle {
            status,
            objective: problem.objective(&x),
            x,
            duals,
            lower_duals,
            upper_duals,
            iterations: sol.iterations,
            diagnostics,
        }
    }
}

/// Solves `problem` with the default interior-point backend.
pub fn solve<T: Scalar>(problem: &ProblemSpec<T>, options: &SolveOptions) -> SolutionBundle<T> {
    ClarabelSolver::new(options.clone()).solve(problem)
}

/// Memoises solutions by a content hash of the problem.
pub struct CachingSolver<S, T> {
    inner: S,
    cache: Mutex<HashMap<[u8; 32], SolutionBundle<T>>>,
}

impl<S, T: Scalar> CachingSolver<S, T> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<S: QpSolver<T>, T: Scalar> QpSolver<T> for CachingSolver<S, T> {
    fn solve(&self, problem: &ProblemSpec<T>) -> SolutionBundle<T> {
        let key = problem_digest(problem);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let solution = self.inner.solve(problem);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, solution.clone());
        solution
    }
}

/// SHA-256 over every number and name that defines the problem.
pub fn problem_digest<T: Scalar>(problem: &ProblemSpec<T>) -> [u8; 32] {
    let mut h = Sha256::new();
    let num = |h: &mut Sha256, x: T| h.update(x.as_f64().to_bits().to_le_bytes());
    for v in &problem.variables {
        h.update(v.name.as_bytes());
        for x in [v.lower, v.upper, v.cost, v.quad] {
            num(&mut h, x);
        }
    }
    for c in &problem.constraints {
        h.update(c.name.as_bytes());
        h.update([c.sense as u8]);
        num(&mut h, c.rhs);
        for &(j, a) in &c.coeffs {
            h.update((j as u64).to_le_bytes());
            num(&mut h, a);
        }
    }
    for &(i, j, c) in &problem.bilinear {
        h.update((i as u64).to_le_bytes());
        h.update((j as u64).to_le_bytes());
        num(&mut h, c);
    }
    h.finalize().into()
}

/// Electricity price per snapshot (€/MWh): balance-row duals divided by the
/// snapshot weight.
pub fn extract_price_series<T: Scalar>(
    solution: &SolutionBundle<T>,
    problem: &ProblemSpec<T>,
) -> Result<Vec<T>> {
    solution.require_optimal()?;
    Ok(problem
        .price_rows()?
        .into_iter()
        .map(|i| solution.duals[i] / problem.constraints[i].dual_scale)
        .collect())
}

/// Marginal storage values of one storage unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsvSeries<T> {
    pub values: Vec<T>,
    /// Set when the storage has (near) zero energy capacity, so its MSV is
    /// not pinned down by any dispatch.
    pub degenerate: bool,
}

/// Energy capacities at or below this are treated as not built.
pub const BUILT_THRESHOLD: f64 = 1e-3;

pub fn extract_msv_series<T: Scalar>(
    solution: &SolutionBundle<T>,
    problem: &ProblemSpec<T>,
    storage: usize,
) -> Result<MsvSeries<T>> {
    solution.require_optimal()?;
    let values = problem
        .msv_rows(storage)?
        .into_iter()
        .map(|i| solution.duals[i] / problem.constraints[i].dual_scale)
        .collect();
    let degenerate = problem
        .capacity_value(AssetKey::StorageEnergy(storage), &solution.x)
        .map(|e| e <= T::lit(BUILT_THRESHOLD))
        .unwrap_or(false);
    Ok(MsvSeries { values, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn var(name: &str, kind: VarKind, upper: f64, cost: f64) -> Variable<f64> {
        Variable {
            name: name.into(),
            kind,
            lower: 0.0,
            upper,
            cost,
            quad: 0.0,
            weight: 1.0,
        }
    }

    /// One snapshot: generator `g` with capacity `cap` plus an optional
    /// VOLL shedder serve a fixed demand.
    fn single_hour(cap: f64, demand: f64, shedder: bool, weight: f64) -> ProblemSpec<f64> {
        let mut p = ProblemSpec::new("toy", 1);
        let mut g = var("g", VarKind::Generation { gen: 0, t: 0 }, cap, 0.0);
        g.weight = weight;
        let g = p.add_variable(g);
        let mut coeffs = vec![(g, -1.0)];
        if shedder {
            let mut s = var("shed", VarKind::Shedding { segment: 0, t: 0 }, demand, 2000.0 * weight);
            s.weight = weight;
            coeffs.push((p.add_variable(s), -1.0));
        }
        p.add_constraint(Constraint {
            name: "balance[0]".into(),
            coeffs,
            sense: Sense::Eq,
            rhs: -demand,
            tag: RowTag::Price(0),
            dual_scale: weight,
        });
        p
    }

    #[test]
    fn slack_capacity_gives_zero_price() {
        let p = single_hour(200.0, 100.0, false, 1.0);
        let sol = solve(&p, &SolveOptions::default());
        assert!(sol.is_optimal());
        assert_relative_eq!(sol.x[0], 100.0, epsilon = 1e-6);
        assert!(extract_price_series(&sol, &p).unwrap()[0].abs() < 1e-6);
    }

    #[test]
    fn scarcity_price_is_voll() {
        let p = single_hour(99.0, 100.0, true, 1.0);
        let sol = solve(&p, &SolveOptions::default());
        assert_relative_eq!(extract_price_series(&sol, &p).unwrap()[0], 2000.0, epsilon = 1e-4);
        assert_relative_eq!(sol.x[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn weighted_dual_is_normalised() {
        let p = single_hour(99.0, 100.0, true, 3.0);
        let sol = solve(&p, &SolveOptions::default());
        let raw = sol.duals[0];
        assert_relative_eq!(raw, 6000.0, epsilon = 1e-3);
        assert_relative_eq!(extract_price_series(&sol, &p).unwrap()[0], 2000.0, epsilon = 1e-4);
    }

    #[test]
    fn empty_problem_is_optimal() {
        let p = ProblemSpec::<f64>::new("empty", 0);
        let sol = solve(&p, &SolveOptions::default());
        assert!(sol.is_optimal());
        assert_eq!(sol.objective, 0.0);
        assert!(matches!(extract_price_series(&sol, &p), Err(Error::MissingTag(_))));
    }

    #[test]
    fn infeasible_is_a_status() {
        let p = single_hour(50.0, 100.0, false, 1.0);
        let sol = solve(&p, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(extract_price_series(&sol, &p).is_err());
    }

    #[test]
    fn caching_returns_identical_solution() {
        let p = single_hour(99.0, 100.0, true, 1.0);
        let cached = CachingSolver::new(ClarabelSolver::default());
        let a = cached.solve(&p);
        let b = cached.solve(&p);
        assert_eq!(a, b);
        assert_eq!(cached.len(), 1);
    }

    #[test]
    fn single_precision_solve() {
        let mut p = ProblemSpec::<f32>::new("toy32", 1);
        let g = p.add_variable(Variable {
            name: "g".into(),
            kind: VarKind::Generation { gen: 0, t: 0 },
            lower: 0.0,
            upper: 200.0,
            cost: 10.0,
            quad: 0.0,
            weight: 1.0,
        });
        p.add_constraint(Constraint {
            name: "balance[0]".into(),
            coeffs: vec![(g, -1.0)],
            sense: Sense::Eq,
            rhs: -100.0,
            tag: RowTag::Price(0),
            dual_scale: 1.0,
        });
        let sol = ClarabelSolver::new(SolveOptions { barrier_tolerance: 1e-5, dual_tolerance: 1e-5, ..Default::default() }).solve(&p);
        assert!(sol.is_optimal(), "{}", sol.diagnostics);
        assert!((extract_price_series(&sol, &p).unwrap()[0] - 10.0).abs() < 1e-2);
    }
}
