use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Capacity decision of one asset component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssetKey {
    Generator(usize),
    /// Shared charge/discharge power of a storage unit.
    StoragePower(usize),
    StorageCharge(usize),
    StorageDischarge(usize),
    StorageEnergy(usize),
}

/// Role of a variable, used by the KKT verifier and result extraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Generation { gen: usize, t: usize },
    /// Served demand of a consumer segment (direct representation).
    Demand { segment: usize, t: usize },
    /// Shed load of a consumer segment (substituted representation).
    Shedding { segment: usize, t: usize },
    Charge { storage: usize, t: usize },
    Discharge { storage: usize, t: usize },
    Soc { storage: usize, t: usize },
    Capacity(AssetKey),
}

impl VarKind {
    pub fn snapshot(&self) -> Option<usize> {
        match *self {
            VarKind::Generation { t, .. }
            | VarKind::Demand { t, .. }
            | VarKind::Shedding { t, .. }
            | VarKind::Charge { t, .. }
            | VarKind::Discharge { t, .. }
            | VarKind::Soc { t, .. } => Some(t),
            VarKind::Capacity(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub kind: VarKind,
    pub lower: T,
    /// `+∞` when unbounded above.
    pub upper: T,
    /// Linear cost coefficient (minimisation form).
    pub cost: T,
    /// Coefficient `q` of the cost term `q·x²`.
    pub quad: T,
    /// Snapshot weight in hours, 1 for non-dispatch variables. Stationarity
    /// residuals are divided by it to report €/MWh.
    pub weight: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

/// Semantic tag of a constraint row, unique per `(kind, index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowTag {
    /// Electricity balance; dual is the price.
    Price(usize),
    /// Storage energy balance; dual is the marginal storage value.
    Msv { storage: usize, t: usize },
    /// Dispatch limited by an installed capacity.
    Cap { asset: AssetKey, t: usize },
    Other,
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowTag::Price(t) => write!(f, "PRICE({t})"),
            RowTag::Msv { storage, t } => write!(f, "MSV({storage},{t})"),
            RowTag::Cap { asset, t } => write!(f, "CAP({asset:?},{t})"),
            RowTag::Other => write!(f, "OTHER"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub name: String,
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
    pub tag: RowTag,
    /// Raw duals are divided by this to obtain €/MWh.
    pub dual_scale: T,
}

/// Where the value of a capacity comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapacityValue<T> {
    Var(usize),
    Fixed(T),
}

/// Explicit sparse QP: maximise welfare `−(cᵀx + Σ q_j x_j² + Σ b_ij x_i x_j)`
/// subject to linear rows and variable bounds.
#[derive(Clone, Debug, Default)]
pub struct ProblemSpec<T> {
    pub name: String,
    pub variables: Vec<Variable<T>>,
    pub constraints: Vec<Constraint<T>>,
    /// Off-diagonal cost entries `(i, j, coefficient)` for `coefficient·x_i·x_j`.
    pub bilinear: Vec<(usize, usize, T)>,
    /// Welfare dropped from the objective by the load-shedding substitution.
    pub dropped_constant: T,
    pub n_snapshots: usize,
    pub capacities: Vec<(AssetKey, CapacityValue<T>)>,
    var_index: HashMap<String, usize>,
    row_index: HashMap<String, usize>,
    tags: HashSet<RowTag>,
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn new(name: impl Into<String>, n_snapshots: usize) -> Self {
        Self {
            name: name.into(),
            variables: Vec::new(),
            constraints: Vec::new(),
            bilinear: Vec::new(),
            dropped_constant: T::zero(),
            n_snapshots,
            capacities: Vec::new(),
            var_index: HashMap::new(),
            row_index: HashMap::new(),
            tags: HashSet::new(),
        }
    }

    pub fn add_variable(&mut self, var: Variable<T>) -> usize {
        let idx = self.variables.len();
        let previous = self.var_index.insert(var.name.clone(), idx);
        assert!(previous.is_none(), "duplicate variable name {}", var.name);
        self.variables.push(var);
        idx
    }

    pub fn add_constraint(&mut self, row: Constraint<T>) -> usize {
        if row.tag != RowTag::Other {
            assert!(self.tags.insert(row.tag), "duplicate row tag {}", row.tag);
        }
        let idx = self.constraints.len();
        let previous = self.row_index.insert(row.name.clone(), idx);
        assert!(previous.is_none(), "duplicate constraint name {}", row.name);
        self.constraints.push(row);
        idx
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    pub fn row(&self, name: &str) -> Option<usize> {
        self.row_index.get(name).copied()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_rows(&self) -> usize {
        self.constraints.len()
    }

    /// Price rows in snapshot order.
    pub fn price_rows(&self) -> Result<Vec<usize>> {
        let mut rows: Vec<(usize, usize)> = self
            .constraints
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c.tag {
                RowTag::Price(t) => Some((t, i)),
                _ => None,
            })
            .collect();
        if rows.is_empty() {
            return Err(Error::MissingTag("PRICE".into()));
        }
        rows.sort_unstable();
        Ok(rows.into_iter().map(|(_, i)| i).collect())
    }

    /// Storage balance rows of `storage` in snapshot order.
    pub fn msv_rows(&self, storage: usize) -> Result<Vec<usize>> {
        let mut rows: Vec<(usize, usize)> = self
            .constraints
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c.tag {
                RowTag::Msv { storage: s, t } if s == storage => Some((t, i)),
                _ => None,
            })
            .collect();
        if rows.is_empty() {
            return Err(Error::MissingTag(format!("MSV({storage}, *)")));
        }
        rows.sort_unstable();
        Ok(rows.into_iter().map(|(_, i)| i).collect())
    }

    pub fn capacity_value(&self, key: AssetKey, x: &[T]) -> Option<T> {
        self.capacities.iter().find(|(k, _)| *k == key).map(|(_, v)| match v {
            CapacityValue::Var(i) => x[*i],
            CapacityValue::Fixed(c) => *c,
        })
    }

    /// Minimisation cost at `x`.
    pub fn cost(&self, x: &[T]) -> T {
        let mut total = T::zero();
        for (v, &xi) in self.variables.iter().zip(x) {
            total += v.cost * xi + v.quad * xi * xi;
        }
        for &(i, j, c) in &self.bilinear {
            total += c * x[i] * x[j];
        }
        total
    }

    /// Welfare objective `−cost(x)`, excluding the dropped constant.
    pub fn objective(&self, x: &[T]) -> T {
        -self.cost(x)
    }

    /// Gradient of the minimisation cost.
    pub fn cost_gradient(&self, x: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        let mut g: Vec<T> = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xi)| v.cost + two * v.quad * xi)
            .collect();
        for &(i, j, c) in &self.bilinear {
            g[i] += c * x[j];
            g[j] += c * x[i];
        }
        g
    }

    /// Row activities `A·x`.
    pub fn row_activity(&self, x: &[T]) -> Vec<T> {
        self.constraints
            .iter()
            .map(|c| c.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_infeasibility(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (c, act) in self.constraints.iter().zip(self.row_activity(x)) {
            let viol = match c.sense {
                Sense::Eq => (act - c.rhs).abs(),
                Sense::Le => (act - c.rhs).max(T::zero()),
                Sense::Ge => (c.rhs - act).max(T::zero()),
            };
            worst = worst.max(viol);
        }
        for (v, &xi) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        worst
    }
}
