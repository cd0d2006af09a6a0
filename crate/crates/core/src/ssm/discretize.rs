use crate::error::{Error, Result};
use crate::real::Real;

/// Below this `|ΔA|` the zero-order-hold gain `(exp(ΔA) - 1) / A` is taken
/// from its series expansion.
pub const SMALL_DELTA_A: f64 = 1e-6;

/// Zero-order-hold terms for a diagonal entry: returns `(Ā, g)` with
/// `Ā = exp(ΔA)` and `B̄ = g·B`, `g = (exp(ΔA) - 1) / A`.
#[inline]
pub fn zoh<T: Real>(a: T, delta: T) -> (T, T) {
    let da = delta * a;
    let abar = da.exp();
    let gain = if da.abs() < T::from_f64(SMALL_DELTA_A) {
        // Δ(1 + ΔA/2) matches the closed form to O((ΔA)²).
        delta * (T::ONE + da * T::from_f64(0.5))
    } else {
        da.expm1() / a
    };
    (abar, gain)
}

/// Discretizes one diagonal entry of `(A, B)` with timescale `Δ`, returning
/// `(Ā, B̄)`.
pub fn discretize<T: Real>(a: T, b: T, delta: T) -> Result<(T, T)> {
    if !(a.is_finite() && b.is_finite() && delta.is_finite()) {
        return Err(Error::NonFinite { op: "discretize" });
    }
    if delta <= T::ZERO {
        return Err(Error::invalid("discretize", "timescale must be positive"));
    }
    let (abar, gain) = zoh(a, delta);
    Ok((abar, gain * b))
}
