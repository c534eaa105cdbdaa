//! Scalar abstractions.
//!
//! `Field` covers the operations that only need exact ring arithmetic (grids,
//! paths, brackets, compensation) and is implemented by rationals as well as
//! floats. `Scalar` adds the transcendental functions used everywhere else.

use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

pub trait Field: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Field for T where T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {}

pub trait Scalar: Field + Float + FloatConst + Sum + Display + LowerExp + Default {
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl<T> Scalar for T where T: Field + Float + FloatConst + Sum + Display + LowerExp + Default {}
