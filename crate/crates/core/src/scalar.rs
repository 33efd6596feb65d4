//! Floating-point abstraction shared by the whole crate.

use std::iter::Sum;
use std::str::FromStr;

use clarabel::algebra::FloatT;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Scalar type the models, solver bridge and metrics are generic over.
///
/// Implemented for `f32` and `f64`. The interior-point backend is generic over
/// the same types, so a whole scenario can be assembled and solved in either
/// precision.
pub trait Scalar: FloatT + num_traits::Float + Sum + Serialize + DeserializeOwned + FromStr {
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count into the scalar type.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Hours in a non-leap year; fixed costs are quoted per year of this length.
pub const HOURS_PER_YEAR: f64 = 8760.0;
