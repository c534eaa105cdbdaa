use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Gap below which an active ladder term is treated as singular.
pub const SINGULAR_GAP: f64 = 1e-12;

/// Current Bessel-3 value and its future infimum for a ladder of width `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LadderState<T> {
    pub eps: T,
    pub z: T,
    pub x: T,
}

impl<T: Scalar> LadderState<T> {
    pub fn new(eps: T, z: T, x: T) -> Result<Self> {
        if !(eps > T::zero()) {
            return Err(invalid("ladder width must be positive"));
        }
        if !(x >= T::zero() && x <= z) {
            return Err(invalid("ladder state needs 0 <= x <= z"));
        }
        Ok(Self { eps, z, x })
    }

    /// Highest ladder level already passed for good: `floor(x / eps) * eps`.
    pub fn quantized(&self) -> T {
        (self.x / self.eps).floor() * self.eps
    }

    pub fn drift(&self) -> Result<T> {
        bessel_ladder_drift(self.z, self.x, self.eps)
    }
}

/// `1/z - sum 1/(z - p eps)` over the active ladder levels: those `p` with
/// `p eps < x` (the level will never be revisited) and `z <= (p+1) eps`.
pub fn bessel_ladder_drift<T: Scalar>(z: T, x: T, eps: T) -> Result<T> {
    if !(eps > T::zero()) {
        return Err(invalid("ladder width must be positive"));
    }
    if !(z > T::zero()) {
        return Err(invalid("Bessel value must be positive"));
    }
    if !(x >= T::zero() && x <= z) {
        return Err(invalid("future infimum must lie in [0, z]"));
    }
    let mut alpha = z.recip();
    let p0 = (z / eps - T::one()).ceil().max(T::zero());
    let mut p = p0;
    while p * eps < x {
        if z <= (p + T::one()) * eps {
            let gap = z - p * eps;
            if gap <= T::lit(SINGULAR_GAP) {
                return Err(Error::Singularity { gap: gap.to_f64_lossy() });
            }
            alpha = alpha - gap.recip();
        }
        p = p + T::one();
    }
    Ok(alpha)
}
