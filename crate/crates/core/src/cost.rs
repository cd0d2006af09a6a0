//! Analytic multiply-accumulate counts.
//!
//! Counts cover the matrix products, convolutions and scan recurrences;
//! normalizations and activations are ignored.

use alloc::vec::Vec;

use crate::transforms::{TransformConfig, ANALYSIS_STRIDE, TOTAL_STRIDE};

/// `H_out · W_out · C_in · C_out · k²`.
pub fn conv_macs(h_out: usize, w_out: usize, c_in: usize, c_out: usize, k: usize) -> u64 {
    (h_out * w_out) as u64 * (c_in * c_out * k * k) as u64
}

/// One selective scan direction, per token, at hidden width `e`: the Δ
/// projections, the `B`/`C` projections, the recurrence and the skip term.
pub fn scan_direction_macs_per_token(e: usize, cfg: &TransformConfig) -> u64 {
    let r = TransformConfig::dt_rank(e);
    let n = cfg.state_dim;
    (e * r + r * e + 2 * e * n + 3 * e * n + e) as u64
}

/// Four-direction scan of one VSS layer over `tokens` positions.
pub fn scan_macs(tokens: usize, e: usize, cfg: &TransformConfig) -> u64 {
    4 * tokens as u64 * scan_direction_macs_per_token(e, cfg)
}

/// One VSS layer of width `c` over `tokens` positions.
pub fn vss_layer_macs(tokens: usize, c: usize, cfg: &TransformConfig) -> u64 {
    let e = c * cfg.expand;
    let k = cfg.dw_kernel;
    let dense = (2 * c * e + e * k * k + e * c) as u64;
    tokens as u64 * dense + scan_macs(tokens, e, cfg)
}

/// MAC estimate for one pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageCost {
    pub stage: &'static str,
    pub macs: u64,
    /// Part of `macs` spent in the selective scans.
    pub scan_macs: u64,
}

fn vss_stage(tokens: usize, c: usize, layers: usize, cfg: &TransformConfig) -> (u64, u64) {
    let e = c * cfg.expand;
    (
        layers as u64 * vss_layer_macs(tokens, c, cfg),
        layers as u64 * scan_macs(tokens, e, cfg),
    )
}

/// Per-stage estimates for coding an `h × w` image (after padding).
pub fn pipeline_costs(cfg: &TransformConfig, h: usize, w: usize) -> Vec<StageCost> {
    let ph = h.div_ceil(TOTAL_STRIDE).max(1) * TOTAL_STRIDE;
    let pw = w.div_ceil(TOTAL_STRIDE).max(1) * TOTAL_STRIDE;
    let k = cfg.kernel;
    let [c1, c2, c3, m, c5, c6] = cfg.channels;
    let ga = [(3, c1), (c1, c2), (c2, c3), (c3, m)];
    let mut out = Vec::new();

    let (mut macs, mut scan) = (0, 0);
    let (mut hh, mut ww) = (ph, pw);
    for (i, &(cin, cout)) in ga.iter().enumerate() {
        hh /= 2;
        ww /= 2;
        macs += conv_macs(hh, ww, cin, cout, k);
        let (a, b) = vss_stage(hh * ww, cout, cfg.layers[i], cfg);
        macs += a;
        scan += b;
    }
    out.push(StageCost {
        stage: "analysis",
        macs,
        scan_macs: scan,
    });

    let (lh, lw) = (ph / ANALYSIS_STRIDE, pw / ANALYSIS_STRIDE);
    let (mut macs, mut scan) = (0, 0);
    let (mut hh, mut ww) = (lh, lw);
    for &(cin, cout) in &[(m, c5), (c5, c6)] {
        hh /= 2;
        ww /= 2;
        macs += conv_macs(hh, ww, cin, cout, k);
        let (a, b) = vss_stage(hh * ww, cout, cfg.hyper_layers, cfg);
        macs += a;
        scan += b;
    }
    out.push(StageCost {
        stage: "hyper_analysis",
        macs,
        scan_macs: scan,
    });

    let (mut macs, mut scan) = (0, 0);
    let (mut hh, mut ww) = (ph / TOTAL_STRIDE, pw / TOTAL_STRIDE);
    for &(cin, cout) in &[(c6, c5), (c5, 2 * m)] {
        // Transposed convolution: every input position scatters a k×k patch.
        macs += conv_macs(hh, ww, cin, cout, k);
        hh *= 2;
        ww *= 2;
        let (a, b) = vss_stage(hh * ww, cout, cfg.hyper_layers, cfg);
        macs += a;
        scan += b;
    }
    out.push(StageCost {
        stage: "hyper_synthesis",
        macs,
        scan_macs: scan,
    });

    let s = cfg.slice_width();
    let tokens = (lh * lw) as u64;
    let cam: u64 = (0..cfg.slices)
        .map(|i| {
            let ctx = 2 * m + i * s;
            let params = ctx * cfg.cam_hidden + cfg.cam_hidden * 2 * s;
            let residual = (ctx + s) * cfg.cam_hidden + cfg.cam_hidden * s;
            tokens * (params + residual) as u64
        })
        .sum();
    out.push(StageCost {
        stage: "context_model",
        macs: cam,
        scan_macs: 0,
    });

    let gs = [
        (m, c3, cfg.layers[3], m),
        (c3, c2, cfg.layers[2], c3),
        (c2, c1, cfg.layers[1], c2),
        (c1, 3, cfg.layers[0], c1),
    ];
    let (mut macs, mut scan) = (0, 0);
    let (mut hh, mut ww) = (lh, lw);
    for &(cin, cout, layers, block_c) in &gs {
        let (a, b) = vss_stage(hh * ww, block_c, layers, cfg);
        macs += a;
        scan += b;
        macs += conv_macs(hh, ww, cin, cout, k);
        hh *= 2;
        ww *= 2;
    }
    out.push(StageCost {
        stage: "synthesis",
        macs,
        scan_macs: scan,
    });
    out
}

/// Total selective-scan MACs of encoding and decoding an `h × w` image.
pub fn scan_stage_macs(cfg: &TransformConfig, h: usize, w: usize) -> u64 {
    pipeline_costs(cfg, h, w).iter().map(|s| s.scan_macs).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_conv_count() {
        assert_eq!(conv_macs(4, 5, 3, 7, 1), 4 * 5 * 3 * 7);
        assert_eq!(conv_macs(1, 1, 2, 2, 3), 36);
    }

    #[test]
    fn scan_cost_is_linear_in_pixels() {
        let cfg = TransformConfig::full();
        for n in [256, 512, 1024] {
            let a = scan_stage_macs(&cfg, n, n) as f64;
            let b = scan_stage_macs(&cfg, 2 * n, 2 * n) as f64;
            assert_eq!(b / a, 4.0);
        }
    }

    #[test]
    fn stages_are_reported_in_pipeline_order() {
        let names: Vec<_> = pipeline_costs(&TransformConfig::tiny(), 64, 64)
            .iter()
            .map(|s| s.stage)
            .collect();
        assert_eq!(
            names,
            [
                "analysis",
                "hyper_analysis",
                "hyper_synthesis",
                "context_model",
                "synthesis"
            ]
        );
    }
}
