//! Demand curves, their utility functions and the load-shedding reformulation.
//!
//! Every elastic curve is handled as a list of [`UtilityPiece`]s, one per
//! consumer segment, each with utility `a·d − (b/2)·d²` on `0 ≤ d ≤ width`.
//! A VOLL step is a piece with zero slope, a linear curve is a single piece
//! whose width is its demand at zero price.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Prices at or below this magnitude count as zero when classifying hours.
pub const ZERO_PRICE_TOL: f64 = 1e-3;

/// One linear segment of a piecewise-linear demand curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSegment<T> {
    /// Willingness to pay for the first MW (€/MWh).
    pub a: T,
    /// Slope of the inverse demand (€/MWh per MW).
    pub b: T,
    /// Segment width (MW).
    #[serde(rename = "D")]
    pub width: T,
}

impl<T: Scalar> DemandSegment<T> {
    pub fn new(a: T, b: T, width: T) -> Result<Self> {
        let seg = Self { a, b, width };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > T::zero() && self.b > T::zero() && self.width > T::zero()) {
            return Err(Error::Config(format!(
                "demand segment needs a, b, D > 0 (got a={}, b={}, D={})",
                self.a, self.b, self.width
            )));
        }
        // A few ulps of slack so that scaled curves ending at exactly zero pass.
        if self.end_price() < -T::lit(16.0) * T::epsilon() * self.a {
            return Err(Error::Config(format!(
                "demand segment (a={}, b={}, D={}) has negative willingness to pay at full consumption",
                self.a, self.b, self.width
            )));
        }
        Ok(())
    }

    /// Willingness to pay at full consumption of the segment.
    pub fn end_price(&self) -> T {
        self.a - self.b * self.width
    }
}

/// The demand curve families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandCurve<T> {
    /// Fixed load that must always be served.
    PerfectlyInelastic { level: T },
    /// Inelastic up to the value of lost load `value`, for loads up to `peak`.
    Voll { value: T, peak: T },
    /// Inverse demand `p = a − b·d`.
    Linear { a: T, b: T },
    /// Aggregate of linear segments.
    PiecewiseLinear { segments: Vec<DemandSegment<T>> },
}

/// Bilinear coupling of demand across neighbouring snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossElasticitySpec<T> {
    /// Cross coefficient as a fraction of each segment's own slope `b`.
    pub gamma_fraction: T,
    /// Maximum snapshot distance that is coupled.
    pub window: usize,
}

/// A demand curve plus optional cross-elasticity between hours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandModel<T> {
    pub curve: DemandCurve<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_elasticity: Option<CrossElasticitySpec<T>>,
}

/// Utility `a·d − (b/2)·d²` of one consumer segment on `[0, width]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilityPiece<T> {
    pub a: T,
    pub b: T,
    pub width: T,
}

impl<T: Scalar> UtilityPiece<T> {
    pub fn utility(&self, d: T) -> T {
        self.a * d - self.b * d * d / T::lit(2.0)
    }

    pub fn marginal(&self, d: T) -> T {
        self.a - self.b * d
    }

    /// Welfare of serving the whole segment; the constant dropped by the
    /// load-shedding substitution.
    pub fn full_utility(&self) -> T {
        self.utility(self.width)
    }
}

/// A load-shedding generator replacing one demand segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shedder<T> {
    pub capacity: T,
    /// €/MWh on the shed amount.
    pub linear_cost: T,
    /// €/MW²h; the cost curve is `linear_cost·g + quadratic_cost·g²`.
    pub quadratic_cost: T,
}

/// Fixed demand plus shedding generators equivalent to an elastic curve.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadShedding<T> {
    pub fixed_demand: T,
    pub shedders: Vec<Shedder<T>>,
    /// Per-hour utility constant dropped from the objective.
    pub constant: T,
}

/// Price interval `(lo, hi)` on which the aggregate demand is `level − slope·p`.
#[derive(Clone, Copy, Debug)]
struct PriceInterval<T> {
    lo: T,
    hi: T,
    level: T,
    slope: T,
}

impl<T: Scalar> DemandCurve<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            DemandCurve::PerfectlyInelastic { level } => {
                if !(*level >= T::zero()) {
                    return Err(Error::Config(format!("inelastic demand level {level} < 0")));
                }
            }
            DemandCurve::Voll { value, peak } => {
                if !(*value > T::zero() && *peak > T::zero()) {
                    return Err(Error::Config(format!(
                        "VOLL demand needs V > 0 and D > 0 (got V={value}, D={peak})"
                    )));
                }
            }
            DemandCurve::Linear { a, b } => {
                if !(*a > T::zero() && *b > T::zero()) {
                    return Err(Error::Config(format!(
                        "linear demand needs a, b > 0 (got a={a}, b={b})"
                    )));
                }
            }
            DemandCurve::PiecewiseLinear { segments } => {
                if segments.is_empty() {
                    return Err(Error::Config("piecewise-linear demand has no segments".into()));
                }
                for seg in segments {
                    seg.validate()?;
                }
                for pair in segments.windows(2) {
                    if !(pair[0].a > pair[1].a) {
                        return Err(Error::Config(format!(
                            "segments must be ordered by strictly decreasing start price ({} then {})",
                            pair[0].a, pair[1].a
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Consumer segments; empty for perfectly inelastic demand.
    pub fn pieces(&self) -> Vec<UtilityPiece<T>> {
        match self {
            DemandCurve::PerfectlyInelastic { .. } => Vec::new(),
            DemandCurve::Voll { value, peak } => vec![UtilityPiece {
                a: *value,
                b: T::zero(),
                width: *peak,
            }],
            DemandCurve::Linear { a, b } => vec![UtilityPiece {
                a: *a,
                b: *b,
                width: *a / *b,
            }],
            DemandCurve::PiecewiseLinear { segments } => segments
                .iter()
                .map(|s| UtilityPiece {
                    a: s.a,
                    b: s.b,
                    width: s.width,
                })
                .collect(),
        }
    }

    /// Largest demand the curve admits (MW).
    pub fn total_width(&self) -> T {
        match self {
            DemandCurve::PerfectlyInelastic { level } => *level,
            _ => self.pieces().iter().map(|p| p.width).sum(),
        }
    }

    /// Same curve with intercepts and slopes multiplied by `factor`.
    ///
    /// Halving the default piecewise-linear curve doubles its elasticity at
    /// 100 €/MWh; doubling it halves the elasticity.
    pub fn scaled(&self, factor: T) -> Self {
        match self {
            DemandCurve::Linear { a, b } => DemandCurve::Linear {
                a: *a * factor,
                b: *b * factor,
            },
            DemandCurve::PiecewiseLinear { segments } => DemandCurve::PiecewiseLinear {
                segments: segments
                    .iter()
                    .map(|s| DemandSegment {
                        a: s.a * factor,
                        b: s.b * factor,
                        width: s.width,
                    })
                    .collect(),
            },
            other => other.clone(),
        }
    }

    fn intervals(&self) -> Vec<PriceInterval<T>> {
        let pieces = self.pieces();
        let mut points: Vec<T> = vec![T::zero()];
        for p in &pieces {
            points.push(p.a);
            if p.b > T::zero() {
                points.push(p.a - p.b * p.width);
            }
        }
        points.retain(|p| *p >= T::zero());
        points.sort_by(|x, y| y.partial_cmp(x).expect("finite breakpoints"));
        points.dedup();

        let mut out = Vec::with_capacity(points.len());
        for pair in points.windows(2) {
            let (hi, lo) = (pair[0], pair[1]);
            let mut level = T::zero();
            let mut slope = T::zero();
            for p in &pieces {
                if p.b == T::zero() {
                    if p.a >= hi {
                        level += p.width;
                    }
                } else if p.a - p.b * p.width >= hi {
                    level += p.width;
                } else if p.a >= hi {
                    level += p.a / p.b;
                    slope += T::one() / p.b;
                }
            }
            out.push(PriceInterval { lo, hi, level, slope });
        }
        out
    }

    /// Aggregate demand at price `p`, i.e. load with willingness to pay above `p`.
    pub fn demand_at(&self, p: T) -> T {
        self.pieces()
            .iter()
            .map(|piece| {
                if piece.b == T::zero() {
                    if p < piece.a {
                        piece.width
                    } else {
                        T::zero()
                    }
                } else {
                    ((piece.a - p) / piece.b).max(T::zero()).min(piece.width)
                }
            })
            .sum()
    }

    fn check_domain(&self, d: T) -> Result<()> {
        if let DemandCurve::PerfectlyInelastic { .. } = self {
            return Err(Error::Domain(
                "perfectly inelastic demand has no inverse demand or utility".into(),
            ));
        }
        let tol = T::lit(1e-9) * T::one().max(self.total_width());
        if d < T::zero() || (!matches!(self, DemandCurve::Linear { .. }) && d > self.total_width() + tol) {
            return Err(Error::Domain(format!(
                "demand {d} outside [0, {}]",
                self.total_width()
            )));
        }
        Ok(())
    }

    /// Marginal willingness to pay at consumption `d` (right-hand value at kinks).
    pub fn inverse_demand(&self, d: T) -> Result<T> {
        self.check_domain(d)?;
        if let DemandCurve::Linear { a, b } = self {
            return Ok(*a - *b * d);
        }
        for iv in self.intervals() {
            let at_lo = iv.level - iv.slope * iv.lo;
            if at_lo > d {
                if iv.slope == T::zero() {
                    return Ok(iv.hi);
                }
                let p = (iv.level - d) / iv.slope;
                return Ok(p.min(iv.hi));
            }
        }
        Ok(T::zero())
    }

    /// Utility of consuming `d`, the integral of the inverse demand from 0.
    pub fn utility(&self, d: T) -> Result<T> {
        self.check_domain(d)?;
        if let DemandCurve::Linear { a, b } = self {
            return Ok(*a * d - *b * d * d / T::lit(2.0));
        }
        // Layer-cake: U(d) = ∫_0^∞ min(d, Q(p)) dp.
        let two = T::lit(2.0);
        let mut total = T::zero();
        for iv in self.intervals() {
            let q_hi = iv.level - iv.slope * iv.hi;
            let q_lo = iv.level - iv.slope * iv.lo;
            if q_lo <= d {
                total += (q_hi + q_lo) / two * (iv.hi - iv.lo);
            } else if q_hi >= d {
                total += d * (iv.hi - iv.lo);
            } else {
                let cross = (iv.level - d) / iv.slope;
                total += d * (cross - iv.lo) + (q_hi + d) / two * (iv.hi - cross);
            }
        }
        Ok(total)
    }

    /// Point elasticity `(dd/dp)·(p/d)` using the curve just below price `p`.
    pub fn point_elasticity(&self, p: T) -> Result<T> {
        if let DemandCurve::PerfectlyInelastic { .. } = self {
            return Err(Error::Domain("perfectly inelastic demand has no elasticity".into()));
        }
        if !(p > T::zero()) {
            return Err(Error::Domain(format!("price {p} must be positive")));
        }
        let iv = self
            .intervals()
            .into_iter()
            .find(|iv| iv.lo < p && p <= iv.hi)
            .ok_or_else(|| Error::Domain(format!("price {p} outside the curve's price range")))?;
        if iv.slope == T::zero() {
            return Err(Error::Domain(format!(
                "price {p} lies on a perfectly elastic or inelastic piece"
            )));
        }
        let d = self.demand_at(p);
        if d <= T::zero() {
            return Err(Error::Domain(format!("no demand at price {p}")));
        }
        Ok(-iv.slope * p / d)
    }

    /// Fixed demand plus shedding generators with the same optimal dispatch.
    pub fn to_load_shedding_form(&self) -> Result<LoadShedding<T>> {
        if let DemandCurve::PerfectlyInelastic { .. } = self {
            return Err(Error::Config(
                "perfectly inelastic demand has no load-shedding substitution".into(),
            ));
        }
        let pieces = self.pieces();
        let shedders = pieces
            .iter()
            .map(|p| Shedder {
                capacity: p.width,
                linear_cost: p.a - p.b * p.width,
                quadratic_cost: p.b / T::lit(2.0),
            })
            .collect();
        Ok(LoadShedding {
            fixed_demand: pieces.iter().map(|p| p.width).sum(),
            shedders,
            constant: pieces.iter().map(|p| p.full_utility()).sum(),
        })
    }
}

impl<T: Scalar> DemandModel<T> {
    pub fn new(curve: DemandCurve<T>) -> Self {
        Self {
            curve,
            cross_elasticity: None,
        }
    }

    pub fn with_cross_elasticity(mut self, spec: CrossElasticitySpec<T>) -> Self {
        self.cross_elasticity = Some(spec);
        self
    }

    /// VOLL of 2000 €/MWh with a 100 MW peak.
    pub fn voll_default() -> Self {
        Self::new(DemandCurve::Voll {
            value: T::lit(2000.0),
            peak: T::lit(100.0),
        })
    }

    /// `p = 2000 − 20·d`.
    pub fn linear_default() -> Self {
        Self::new(DemandCurve::Linear {
            a: T::lit(2000.0),
            b: T::lit(20.0),
        })
    }

    /// Three-segment approximation of a log-log curve, −5 % elastic at 100 €/MWh.
    pub fn pwl_default() -> Self {
        let seg = |a: f64, b: f64, d: f64| DemandSegment {
            a: T::lit(a),
            b: T::lit(b),
            width: T::lit(d),
        };
        Self::new(DemandCurve::PiecewiseLinear {
            segments: vec![seg(8000.0, 80.0, 95.0), seg(400.0, 40.0, 5.0), seg(200.0, 20.0, 10.0)],
        })
    }

    pub fn inelastic(level: T) -> Self {
        Self::new(DemandCurve::PerfectlyInelastic { level })
    }

    pub fn validate(&self) -> Result<()> {
        self.curve.validate()?;
        if let Some(spec) = &self.cross_elasticity {
            if !(spec.gamma_fraction > T::zero()) {
                return Err(Error::Config("cross-elasticity gamma_fraction must be > 0".into()));
            }
            if matches!(self.curve, DemandCurve::PerfectlyInelastic { .. }) {
                return Err(Error::Config(
                    "cross-elasticity requires an elastic demand curve".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_inelastic(&self) -> bool {
        matches!(self.curve, DemandCurve::PerfectlyInelastic { .. })
    }

    pub fn inverse_demand(&self, d: T) -> Result<T> {
        self.curve.inverse_demand(d)
    }

    pub fn utility(&self, d: T) -> Result<T> {
        self.curve.utility(d)
    }

    pub fn point_elasticity(&self, p: T) -> Result<T> {
        self.curve.point_elasticity(p)
    }

    pub fn to_load_shedding_form(&self) -> Result<LoadShedding<T>> {
        self.curve.to_load_shedding_form()
    }
}

/// Objective entries generated by cross-elastic demand, in minimisation form.
///
/// `bilinear` holds ordered `(segment, t, k, coefficient)` entries, both
/// `(t, k)` and `(k, t)` for each coupled pair, so the cost contains
/// `Σ coefficient·x_t·x_k`. `linear` and `constant` are only non-zero for the
/// load-shedding form, where `d = D − g` shifts part of the coupling onto the
/// shedding variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CrossElasticTerms<T> {
    pub bilinear: Vec<(usize, usize, usize, T)>,
    pub linear: Vec<(usize, usize, T)>,
    pub constant: T,
}

/// Snapshot pairs `(t, k)`, `t ≠ k`, with `|t − k| ≤ window`, both orders.
pub fn coupled_pairs(n: usize, window: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |t| {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(n.saturating_sub(1));
        (lo..=hi).filter(move |&k| k != t).map(move |k| (t, k))
    })
}

/// Expands a cross-elasticity spec into objective entries for every segment.
pub fn cross_elastic_terms<T: Scalar>(
    spec: &CrossElasticitySpec<T>,
    pieces: &[UtilityPiece<T>],
    weights: &[T],
    shedding_form: bool,
) -> Result<CrossElasticTerms<T>> {
    check_concavity(spec, pieces, weights)?;
    let half = T::lit(0.5);
    let mut terms = CrossElasticTerms {
        bilinear: Vec::new(),
        linear: Vec::new(),
        constant: T::zero(),
    };
    if spec.window == 0 {
        return Ok(terms);
    }
    for (c, piece) in pieces.iter().enumerate() {
        let gamma = spec.gamma_fraction * piece.b;
        if gamma == T::zero() {
            continue;
        }
        for (t, k) in coupled_pairs(weights.len(), spec.window) {
            let w = weights[t];
            terms.bilinear.push((c, t, k, -gamma * half * w));
            if shedding_form {
                let lin = piece.width * gamma * half * w;
                terms.linear.push((c, t, lin));
                terms.linear.push((c, k, lin));
                terms.constant += piece.width * piece.width * gamma * half * w;
            }
        }
    }
    Ok(terms)
}

/// Segment blocks beyond this size are only checked with Gershgorin discs.
const EXACT_EIGEN_LIMIT: usize = 400;

/// Checks that the cost Hessian of every cross-elastic segment is positive
/// semidefinite, i.e. the utility stays concave. Returns the smallest
/// eigenvalue (or Gershgorin lower bound) found.
pub fn check_concavity<T: Scalar>(
    spec: &CrossElasticitySpec<T>,
    pieces: &[UtilityPiece<T>],
    weights: &[T],
) -> Result<T> {
    let n = weights.len();
    let mut worst = T::infinity();
    for piece in pieces {
        let gamma = spec.gamma_fraction * piece.b;
        let diag = |t: usize| piece.b * weights[t];
        let off = |t: usize, k: usize| -gamma * (weights[t] + weights[k]) / T::lit(2.0);
        // Gershgorin lower bound, sufficient on its own when non-negative.
        let mut bound = T::infinity();
        for t in 0..n {
            let radius: T = coupled_pairs(n, spec.window)
                .filter(|(a, _)| *a == t)
                .map(|(a, k)| off(a, k).abs())
                .sum();
            bound = bound.min(diag(t) - radius);
        }
        let value = if bound >= T::zero() || n > EXACT_EIGEN_LIMIT {
            bound
        } else {
            let mut h = DMatrix::<f64>::zeros(n, n);
            for t in 0..n {
                h[(t, t)] = diag(t).as_f64();
            }
            for (t, k) in coupled_pairs(n, spec.window) {
                h[(t, k)] = off(t, k).as_f64();
            }
            let eig = SymmetricEigen::new(h).eigenvalues;
            T::lit(eig.iter().cloned().fold(f64::INFINITY, f64::min))
        };
        worst = worst.min(value);
    }
    let scale = pieces
        .iter()
        .map(|p| p.b)
        .fold(T::one(), |acc, b| acc.max(b));
    if worst < -T::lit(1e-8) * scale {
        return Err(Error::NotConcave(worst.as_f64()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear() -> DemandCurve<f64> {
        DemandModel::linear_default().curve
    }

    fn pwl() -> DemandCurve<f64> {
        DemandModel::pwl_default().curve
    }

    #[test]
    fn linear_inverse_demand_and_utility() {
        let c = linear();
        assert_relative_eq!(c.inverse_demand(95.0).unwrap(), 100.0);
        assert_relative_eq!(c.inverse_demand(0.0).unwrap(), 2000.0);
        assert_relative_eq!(c.utility(0.0).unwrap(), 0.0);
        assert_relative_eq!(c.utility(100.0).unwrap(), 100_000.0);
    }

    #[test]
    fn voll_utility_and_step() {
        let c = DemandModel::<f64>::voll_default().curve;
        assert_relative_eq!(c.utility(100.0).unwrap(), 200_000.0);
        assert_relative_eq!(c.inverse_demand(50.0).unwrap(), 2000.0);
        assert_relative_eq!(c.inverse_demand(100.0).unwrap(), 0.0);
        assert!(c.point_elasticity(1000.0).is_err());
    }

    #[test]
    fn pwl_breakpoints() {
        let c = pwl();
        assert_relative_eq!(c.demand_at(100.0), 105.0);
        assert_relative_eq!(c.inverse_demand(105.0).unwrap(), 100.0);
        // Segments one and two exactly full: price sits at the start of segment three.
        assert_relative_eq!(c.inverse_demand(100.0).unwrap(), 200.0);
        assert_relative_eq!(c.inverse_demand(0.0).unwrap(), 8000.0);
        assert_relative_eq!(c.inverse_demand(110.0).unwrap(), 0.0);
        // Sum of the three full segment utilities.
        let full = (8000.0 * 95.0 - 40.0 * 95.0 * 95.0) + (400.0 * 5.0 - 20.0 * 25.0) + (200.0 * 10.0 - 10.0 * 100.0);
        assert_relative_eq!(c.utility(110.0).unwrap(), full, max_relative = 1e-12);
    }

    #[test]
    fn elasticities() {
        assert_relative_eq!(linear().point_elasticity(100.0).unwrap(), -100.0 / (20.0 * 95.0), epsilon = 1e-12);
        let e = pwl().point_elasticity(100.0).unwrap();
        assert!((-0.055..=-0.045).contains(&e), "{e}");
        let halved = pwl().scaled(0.5).point_elasticity(100.0).unwrap();
        assert_relative_eq!(halved, -0.10, epsilon = 1e-12);
        let doubled = pwl().scaled(2.0).point_elasticity(100.0).unwrap();
        assert!((doubled + 0.025).abs() < 0.003, "{doubled}");
    }

    #[test]
    fn inelastic_has_no_curve() {
        let c = DemandCurve::PerfectlyInelastic { level: 100.0 };
        assert!(c.inverse_demand(10.0).is_err());
        assert!(c.utility(10.0).is_err());
        assert!(c.to_load_shedding_form().is_err());
    }

    #[test]
    fn out_of_domain() {
        assert!(pwl().inverse_demand(111.0).is_err());
        assert!(pwl().inverse_demand(-1.0).is_err());
        assert!(linear().inverse_demand(500.0).is_ok());
    }

    #[test]
    fn shedding_forms() {
        let voll = DemandModel::<f64>::voll_default().to_load_shedding_form().unwrap();
        assert_eq!(voll.fixed_demand, 100.0);
        assert_eq!(voll.shedders, vec![Shedder { capacity: 100.0, linear_cost: 2000.0, quadratic_cost: 0.0 }]);
        assert_eq!(voll.constant, 200_000.0);

        let lin = linear().to_load_shedding_form().unwrap();
        assert_eq!(lin.fixed_demand, 100.0);
        assert_eq!(lin.shedders[0].linear_cost, 0.0);
        assert_eq!(lin.shedders[0].quadratic_cost, 10.0);
        assert_relative_eq!(lin.constant, 2000.0 * 2000.0 / 40.0);

        let p = pwl().to_load_shedding_form().unwrap();
        assert_eq!(p.fixed_demand, 110.0);
        assert_eq!(p.shedders[0], Shedder { capacity: 95.0, linear_cost: 400.0, quadratic_cost: 40.0 });
    }

    #[test]
    fn segment_validation() {
        assert!(DemandSegment::new(100.0, 10.0, 20.0).is_err());
        assert!(DemandSegment::new(100.0, 0.0, 20.0).is_err());
        let bad_order = DemandCurve::PiecewiseLinear {
            segments: vec![DemandSegment { a: 200.0, b: 20.0, width: 10.0 }, DemandSegment { a: 400.0, b: 40.0, width: 5.0 }],
        };
        assert!(bad_order.validate().is_err());
        assert!(pwl().validate().is_ok());
    }

    #[test]
    fn cross_terms_enumeration() {
        let spec = CrossElasticitySpec { gamma_fraction: 1.0 / 16.0, window: 4 };
        let pieces = vec![UtilityPiece { a: 8000.0, b: 80.0, width: 95.0 }];
        let terms = cross_elastic_terms(&spec, &pieces, &[1.0; 3], false).unwrap();
        let mut pairs: Vec<_> = terms.bilinear.iter().map(|&(_, t, k, c)| (t, k, c)).collect();
        pairs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let expected = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];
        assert_eq!(pairs.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>(), expected);
        assert!(pairs.iter().all(|p| p.2 == -2.5));
        assert!(terms.linear.is_empty());

        let none = cross_elastic_terms(&CrossElasticitySpec { gamma_fraction: 0.1, window: 0 }, &pieces, &[1.0; 3], true).unwrap();
        assert!(none.bilinear.is_empty() && none.linear.is_empty());
    }

    #[test]
    fn concavity_guard_rejects_large_gamma() {
        let pieces = vec![UtilityPiece { a: 200.0, b: 20.0, width: 10.0 }];
        let ok = CrossElasticitySpec { gamma_fraction: 1.0 / 16.0, window: 4 };
        assert!(check_concavity(&ok, &pieces, &[1.0; 24]).unwrap() >= 0.0);
        let bad = CrossElasticitySpec { gamma_fraction: 0.5, window: 4 };
        assert!(matches!(check_concavity(&bad, &pieces, &[1.0; 24]), Err(Error::NotConcave(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let c = DemandModel::<f32>::pwl_default().curve;
        assert!((c.inverse_demand(105.0).unwrap() - 100.0).abs() < 1e-3);
        assert!((c.point_elasticity(100.0).unwrap() + 0.0476).abs() < 1e-3);
    }
}
