//! Gated VSS layers wrapped around the 2D selective scan.
//!
//! ```text
//! hidden = LN₂(2DSS(SiLU(DWConv(Linear₁(LN₁(f))))))
//! gate   = SiLU(Linear₂(LN₁(f)))
//! out    = Linear₃(hidden ⊙ gate) + f
//! ```

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{depthwise_conv2d, layer_norm, linear, silu_scalar, LAYER_NORM_EPS};
use crate::real::Real;
use crate::scan2d::{scan2d_with, Scan2dWeights};
use crate::ssm::ScanMode;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct VssLayerWeights<T = f32> {
    pub ln1_gamma: Tensor<T>,
    pub ln1_beta: Tensor<T>,
    /// `[C, E]` expansion.
    pub in_proj: Tensor<T>,
    pub in_bias: Tensor<T>,
    /// `[C, E]` gate.
    pub gate_proj: Tensor<T>,
    pub gate_bias: Tensor<T>,
    /// `[k, k, E]`.
    pub dw_kernel: Tensor<T>,
    pub dw_bias: Tensor<T>,
    pub scan: Scan2dWeights<T>,
    pub ln2_gamma: Tensor<T>,
    pub ln2_beta: Tensor<T>,
    /// `[E, C]`.
    pub out_proj: Tensor<T>,
    pub out_bias: Tensor<T>,
}

impl<T: Real> VssLayerWeights<T> {
    pub fn channels(&self) -> usize {
        self.ln1_gamma.len()
    }

    pub fn hidden(&self) -> usize {
        self.in_proj.channels()
    }

    fn check(&self, c: usize) -> Result<()> {
        let op = "vss_layer_forward";
        if self.channels() != c {
            return Err(Error::shape(op, "input channels", self.channels(), c));
        }
        let e = self.hidden();
        if self.gate_proj.shape() != [c, e] {
            return Err(Error::shape(op, "gate width", e, self.gate_proj.channels()));
        }
        if self.out_proj.shape() != [e, c] {
            return Err(Error::shape(op, "output projection width", c, self.out_proj.channels()));
        }
        if self.scan.channels() != e {
            return Err(Error::shape(op, "scan channels", e, self.scan.channels()));
        }
        Ok(())
    }
}

pub fn vss_layer_forward<T: Real>(f_in: &Tensor<T>, w: &VssLayerWeights<T>) -> Result<Tensor<T>> {
    vss_layer_forward_with(f_in, w, ScanMode::Sequential)
}

pub fn vss_layer_forward_with<T: Real>(f_in: &Tensor<T>, w: &VssLayerWeights<T>, mode: ScanMode) -> Result<Tensor<T>> {
    let (_, _, c) = f_in.dims3("vss_layer_forward")?;
    w.check(c)?;
    let eps = T::from_f64(LAYER_NORM_EPS);
    let normed = layer_norm(f_in, &w.ln1_gamma, &w.ln1_beta, eps)?;

    let main = linear(&normed, &w.in_proj, &w.in_bias)?;
    let main = depthwise_conv2d(&main, &w.dw_kernel, &w.dw_bias)?.map(silu_scalar);
    let main = scan2d_with(&main, &w.scan, mode)?;
    let hidden = layer_norm(&main, &w.ln2_gamma, &w.ln2_beta, eps)?;

    let gate = linear(&normed, &w.gate_proj, &w.gate_bias)?.map(silu_scalar);
    let mixed = hidden.mul(&gate)?;
    let mut out = linear(&mixed, &w.out_proj, &w.out_bias)?;
    out.add_assign(f_in)?;
    Ok(out)
}

/// A stack of VSS layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct VssBlock<T = f32> {
    pub layers: Vec<VssLayerWeights<T>>,
}

/// Number of layers and channel count of a VSS block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VssBlockConfig {
    pub layers: usize,
    pub channels: usize,
}

pub fn vss_block_forward<T: Real>(f_in: &Tensor<T>, cfg: &VssBlockConfig, block: &VssBlock<T>) -> Result<Tensor<T>> {
    vss_block_forward_with(f_in, cfg, block, ScanMode::Sequential)
}

pub fn vss_block_forward_with<T: Real>(
    f_in: &Tensor<T>,
    cfg: &VssBlockConfig,
    block: &VssBlock<T>,
    mode: ScanMode,
) -> Result<Tensor<T>> {
    let op = "vss_block_forward";
    if cfg.layers == 0 {
        return Err(Error::invalid(op, "a block needs at least one layer"));
    }
    if block.layers.len() != cfg.layers {
        return Err(Error::shape(op, "layer count", cfg.layers, block.layers.len()));
    }
    let (_, _, c) = f_in.dims3(op)?;
    if c != cfg.channels {
        return Err(Error::shape(op, "channels", cfg.channels, c));
    }
    let mut f = f_in.clone();
    for layer in &block.layers {
        f = vss_layer_forward_with(&f, layer, mode)?;
    }
    Ok(f)
}
