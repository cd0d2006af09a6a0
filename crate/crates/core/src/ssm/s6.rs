use super::{selective_scan, ScanMode, ScanParams};
use crate::error::{Error, Result};
use crate::nn::{linear, softplus_scalar};
use crate::real::Real;
use crate::tensor::Tensor;

/// Projections that make `Δ`, `B` and `C` functions of the current token.
#[derive(Debug, Clone, PartialEq)]
pub struct S6Weights<T = f32> {
    /// `[D, R]` low-rank down-projection feeding `dt_proj`.
    pub dt_down: Tensor<T>,
    /// `[R, D]`.
    pub dt_up: Tensor<T>,
    /// `[D]`; `softplus(dt_bias)` is the timescale of a zero token.
    pub dt_bias: Tensor<T>,
    /// `[D, N]` and `[N]`.
    pub b_proj: Tensor<T>,
    pub b_bias: Tensor<T>,
    /// `[D, N]` and `[N]`.
    pub c_proj: Tensor<T>,
    pub c_bias: Tensor<T>,
    /// `[D, N]`.
    pub a_log: Tensor<T>,
    /// `[D]`.
    pub d: Tensor<T>,
}

impl<T: Real> S6Weights<T> {
    pub fn channels(&self) -> usize {
        self.d.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a_log.channels()
    }

    /// Input-dependent scan parameters for `x: [L, D]`.
    pub fn scan_params(&self, x: &Tensor<T>) -> Result<ScanParams<T>> {
        let op = "s6_forward";
        let (_, d) = x.dims2(op)?;
        if d != self.channels() {
            return Err(Error::shape(op, "token channels", self.channels(), d));
        }
        let zero_r = Tensor::zeros([self.dt_down.channels()]);
        let low = linear(x, &self.dt_down, &zero_r)?;
        let delta = linear(&low, &self.dt_up, &self.dt_bias)?.map(softplus_scalar);
        Ok(ScanParams {
            a_log: self.a_log.clone(),
            delta,
            b: linear(x, &self.b_proj, &self.b_bias)?,
            c: linear(x, &self.c_proj, &self.c_bias)?,
            d: self.d.clone(),
        })
    }
}

/// S6 token mixer over `x: [L, D]` with the sequential schedule.
pub fn s6_forward<T: Real>(x: &Tensor<T>, w: &S6Weights<T>) -> Result<Tensor<T>> {
    s6_forward_with(x, w, ScanMode::Sequential)
}

pub fn s6_forward_with<T: Real>(x: &Tensor<T>, w: &S6Weights<T>, mode: ScanMode) -> Result<Tensor<T>> {
    let p = w.scan_params(x)?;
    selective_scan(x, &p, mode)
}
