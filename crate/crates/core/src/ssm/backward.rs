use alloc::vec;

use super::{ScanParams, SMALL_DELTA_A};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Gradients of `sum(dy ⊙ y)` for [`selective_scan_seq`](super::selective_scan_seq).
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrads<T = f32> {
    pub dx: Tensor<T>,
    pub ddelta: Tensor<T>,
    pub db: Tensor<T>,
    pub dc: Tensor<T>,
    pub da_log: Tensor<T>,
    pub dd: Tensor<T>,
}

/// Reverse-time pass of the selective scan.
///
/// With `g_t = ∂/∂h_t`, the adjoint recurrence is
/// `g_t = dy_t C_t + Ā_{t+1} g_{t+1}`; every parameter gradient is a sum of
/// local terms against `g_t` and the stored forward states `h_{t-1}`.
pub fn selective_scan_backward<T: Real>(x: &Tensor<T>, p: &ScanParams<T>, dy: &Tensor<T>) -> Result<ScanGrads<T>> {
    let op = "selective_scan_backward";
    let (l, d, n) = p.check(x, op)?;
    if dy.shape() != x.shape() {
        let (dl, dd) = dy.dims2(op)?;
        return Err(if dl != l {
            Error::shape(op, "dy tokens", l, dl)
        } else {
            Error::shape(op, "dy channels", d, dd)
        });
    }
    let a = p.a();
    let (xs, delta, b, c, dys) = (x.data(), p.delta.data(), p.b.data(), p.c.data(), dy.data());
    let small = T::from_f64(SMALL_DELTA_A);
    let half = T::from_f64(0.5);

    // Forward pass, keeping every state: hs[t] is h_{t+1} in 1-based terms.
    let mut hs = vec![T::ZERO; l * d * n];
    let mut abars = vec![T::ZERO; l * d * n];
    let mut gains = vec![T::ZERO; l * d * n];
    for t in 0..l {
        for ch in 0..d {
            for k in 0..n {
                let i = (t * d + ch) * n + k;
                let (abar, gain) = super::zoh(a.data()[ch * n + k], delta[t * d + ch]);
                abars[i] = abar;
                gains[i] = gain;
                let prev = if t == 0 { T::ZERO } else { hs[i - d * n] };
                hs[i] = abar * prev + gain * b[t * n + k] * xs[t * d + ch];
            }
        }
    }

    let mut dx = vec![T::ZERO; l * d];
    let mut ddelta = vec![T::ZERO; l * d];
    let mut db = vec![T::ZERO; l * n];
    let mut dc = vec![T::ZERO; l * n];
    let mut da_log = vec![T::ZERO; d * n];
    let mut dd = vec![T::ZERO; d];
    // Adjoint of the state, carried backwards in time.
    let mut g = vec![T::ZERO; d * n];

    for t in (0..l).rev() {
        for ch in 0..d {
            let xv = xs[t * d + ch];
            let dyv = dys[t * d + ch];
            let dt = delta[t * d + ch];
            dd[ch] += dyv * xv;
            let mut dxv = dyv * p.d.data()[ch];
            let mut ddt = T::ZERO;
            for k in 0..n {
                let i = (t * d + ch) * n + k;
                let av = a.data()[ch * n + k];
                let gi = ch * n + k;
                // Ā_{t+1} g_{t+1} was folded in at the previous (later) step.
                g[gi] += dyv * c[t * n + k];
                let gv = g[gi];
                dc[t * n + k] += dyv * hs[i];
                let prev = if t == 0 { T::ZERO } else { hs[i - d * n] };
                let (abar, gain) = (abars[i], gains[i]);
                let bk = b[t * n + k];
                dxv += gv * gain * bk;
                db[t * n + k] += gv * gain * xv;
                // ∂h/∂Ā = h_{t-1}, ∂h/∂g = B x.
                let d_abar = gv * prev;
                let d_gain = gv * bk * xv;
                let da = dt * av;
                let (dgain_ddelta, dgain_da) = if da.abs() < small {
                    (T::ONE + da, dt * dt * half)
                } else {
                    (abar, (dt * abar - gain) / av)
                };
                ddt += d_abar * av * abar + d_gain * dgain_ddelta;
                let d_a = d_abar * dt * abar + d_gain * dgain_da;
                // A = -exp(A_log) ⇒ ∂A/∂A_log = A.
                da_log[gi] += d_a * av;
                g[gi] = gv * abar;
            }
            dx[t * d + ch] = dxv;
            ddelta[t * d + ch] = ddt;
        }
    }

    Ok(ScanGrads {
        dx: Tensor::new([l, d], dx)?,
        ddelta: Tensor::new([l, d], ddelta)?,
        db: Tensor::new([l, n], db)?,
        dc: Tensor::new([l, n], dc)?,
        da_log: Tensor::new([d, n], da_log)?,
        dd: Tensor::new([d], dd)?,
    })
}
