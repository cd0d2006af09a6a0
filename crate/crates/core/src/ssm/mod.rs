//! Selective state-space scans.
//!
//! A scan runs `D` independent channels, each with an `N`-dimensional
//! diagonal state. Per token `t` and channel `d`:
//!
//! ```text
//! h_t = exp(Δ_t A) ⊙ h_{t-1} + ((exp(Δ_t A) - 1) / A) ⊙ B_t x_t
//! y_t = <C_t, h_t> + D x_t
//! ```
//!
//! with `h_0 = 0`, `A = -exp(A_log) < 0` and `Δ > 0`.

mod backward;
mod discretize;
mod s6;
mod scan;

pub use backward::{selective_scan_backward, ScanGrads};
pub use discretize::{discretize, zoh, SMALL_DELTA_A};
pub use s6::{s6_forward, s6_forward_with, S6Weights};
pub use scan::{selective_scan, selective_scan_par, selective_scan_seq, ScanMode};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Discretization-ready parameters of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanParams<T = f32> {
    /// `[D, N]`, with `A = -exp(A_log)`.
    pub a_log: Tensor<T>,
    /// `[L, D]`, strictly positive.
    pub delta: Tensor<T>,
    /// `[L, N]`.
    pub b: Tensor<T>,
    /// `[L, N]`.
    pub c: Tensor<T>,
    /// `[D]` skip coefficients.
    pub d: Tensor<T>,
}

impl<T: Real> ScanParams<T> {
    pub fn state_dim(&self) -> usize {
        self.a_log.channels()
    }

    pub fn channels(&self) -> usize {
        self.d.len()
    }

    /// Checks every shape against the input `x: [L, D]` and returns `(L, D, N)`.
    pub fn check(&self, x: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize)> {
        let (l, d) = x.dims2(op)?;
        let (ad, n) = self.a_log.dims2(op)?;
        if ad != d {
            return Err(Error::shape(op, "A_log channels", d, ad));
        }
        if self.delta.shape() != [l, d] {
            let (dl, dd) = self.delta.dims2(op)?;
            return Err(if dl != l {
                Error::shape(op, "delta tokens", l, dl)
            } else {
                Error::shape(op, "delta channels", d, dd)
            });
        }
        for (name, t) in [("B", &self.b), ("C", &self.c)] {
            let (tl, tn) = t.dims2(op)?;
            if tl != l {
                return Err(Error::shape(
                    op,
                    if name == "B" { "B tokens" } else { "C tokens" },
                    l,
                    tl,
                ));
            }
            if tn != n {
                return Err(Error::shape(op, if name == "B" { "B state" } else { "C state" }, n, tn));
            }
        }
        if self.d.len() != d {
            return Err(Error::shape(op, "D length", d, self.d.len()));
        }
        Ok((l, d, n))
    }

    /// The continuous evolution terms `A = -exp(A_log)`, `[D, N]`.
    pub fn a(&self) -> Tensor<T> {
        self.a_log.map(|v| -v.exp())
    }
}
