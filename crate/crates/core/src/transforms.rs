//! Analysis / synthesis transforms, hyper transforms and the channel-wise
//! autoregressive slice networks.

use alloc::format;
use alloc::vec::Vec;

use crate::entropy::{FactorizedPrior, SIGMA_MIN};
use crate::error::{Error, Result, StageExt};
use crate::nn::{linear, silu_scalar, softplus_scalar, ConvSpec};
use crate::real::Real;
use crate::rng::fnv1a64;
use crate::scan2d::Scan2dWeights;
use crate::ssm::{S6Weights, ScanMode};
use crate::tensor::Tensor;
use crate::vss::{vss_block_forward_with, VssBlock, VssBlockConfig, VssLayerWeights};
use crate::weights::{join, Init, ParamSource, StoreLoader, WeightStore};

/// Spatial downsampling of the analysis transform.
pub const ANALYSIS_STRIDE: usize = 16;
/// Downsampling from the image to the hyper-latent.
pub const TOTAL_STRIDE: usize = 64;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformConfig {
    /// `(C₁, C₂, C₃, C₄, C₅, C₆)`: analysis stage widths (C₄ is the latent
    /// width `M`), then the two hyper stages (C₆ is the hyper-latent width).
    pub channels: [usize; 6],
    /// VSS layers after each of the four analysis downsamplings.
    pub layers: [usize; 4],
    /// VSS layers after each hyper stage.
    pub hyper_layers: usize,
    /// Scan state size `N`.
    pub state_dim: usize,
    /// VSS hidden width is `expand × C`.
    pub expand: usize,
    /// Main convolution kernel extent.
    pub kernel: usize,
    pub dw_kernel: usize,
    /// Latent slices `S` for the autoregressive entropy model.
    pub slices: usize,
    /// Hidden width of each slice network.
    pub cam_hidden: usize,
    /// Share S6 parameters across the four scan directions.
    pub tied_directions: bool,
}

impl TransformConfig {
    /// Full-size architecture: channels (256, 256, 256, 320, 256, 192) and
    /// layers (2, 2, 9, 2).
    pub fn full() -> Self {
        TransformConfig {
            channels: [256, 256, 256, 320, 256, 192],
            layers: [2, 2, 9, 2],
            hyper_layers: 2,
            state_dim: 16,
            expand: 2,
            kernel: 3,
            dw_kernel: 3,
            slices: 5,
            cam_hidden: 224,
            tied_directions: false,
        }
    }

    /// Same topology at a width that encodes megapixel images in seconds on
    /// one core. Default for the command line.
    pub fn compact() -> Self {
        TransformConfig {
            channels: [32, 32, 32, 40, 32, 24],
            layers: [2, 2, 9, 2],
            hyper_layers: 2,
            state_dim: 4,
            expand: 2,
            kernel: 3,
            dw_kernel: 3,
            slices: 5,
            cam_hidden: 32,
            tied_directions: false,
        }
    }

    /// Minimal configuration for fast tests.
    pub fn tiny() -> Self {
        TransformConfig {
            channels: [8, 8, 8, 10, 8, 6],
            layers: [1, 1, 1, 1],
            hyper_layers: 1,
            state_dim: 2,
            expand: 2,
            kernel: 3,
            dw_kernel: 3,
            slices: 5,
            cam_hidden: 8,
            tied_directions: false,
        }
    }

    pub fn latent_channels(&self) -> usize {
        self.channels[3]
    }

    pub fn hyper_channels(&self) -> usize {
        self.channels[5]
    }

    pub fn slice_width(&self) -> usize {
        self.latent_channels() / self.slices.max(1)
    }

    /// Low-rank width of the timescale projection for hidden width `e`.
    pub fn dt_rank(e: usize) -> usize {
        e.div_ceil(16).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let op = "TransformConfig";
        if self.channels.contains(&0) {
            return Err(Error::invalid(op, "channel counts must be positive"));
        }
        if self.layers.contains(&0) || self.hyper_layers == 0 {
            return Err(Error::invalid(op, "every VSS block needs at least one layer"));
        }
        if self.slices == 0 || !self.latent_channels().is_multiple_of(self.slices) {
            return Err(Error::invalid(op, "latent channels must divide evenly into slices"));
        }
        if self.state_dim == 0 || self.expand == 0 || self.cam_hidden == 0 {
            return Err(Error::invalid(op, "state, expansion and slice widths must be positive"));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) || self.dw_kernel.is_multiple_of(2) {
            return Err(Error::invalid(op, "kernel extents must be odd"));
        }
        Ok(())
    }

    /// Number of little-endian `u32` words in [`TransformConfig::to_bytes`].
    const WORDS: usize = 18;
    pub const ENCODED_LEN: usize = Self::WORDS * 4;

    /// Canonical little-endian encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut words: Vec<u32> = Vec::with_capacity(Self::WORDS);
        words.extend(self.channels.iter().map(|&c| c as u32));
        words.extend(self.layers.iter().map(|&l| l as u32));
        words.extend(
            [
                self.hyper_layers,
                self.state_dim,
                self.expand,
                self.kernel,
                self.dw_kernel,
                self.slices,
                self.cam_hidden,
            ]
            .map(|v| v as u32),
        );
        words.push(self.tied_directions as u32);
        words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != Self::ENCODED_LEN {
            return Err(Error::shape(
                "TransformConfig::from_bytes",
                "length",
                Self::ENCODED_LEN,
                bytes.len(),
            ));
        }
        let w: Vec<usize> = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        if w[17] > 1 {
            return Err(Error::invalid("TransformConfig::from_bytes", "tie flag must be 0 or 1"));
        }
        let cfg = TransformConfig {
            channels: [w[0], w[1], w[2], w[3], w[4], w[5]],
            layers: [w[6], w[7], w[8], w[9]],
            hyper_layers: w[10],
            state_dim: w[11],
            expand: w[12],
            kernel: w[13],
            dw_kernel: w[14],
            slices: w[15],
            cam_hidden: w[16],
            tied_directions: w[17] == 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 32-bit identifier of the architecture, recorded in bitstreams.
    pub fn fingerprint(&self) -> u32 {
        let h = fnv1a64(&self.to_bytes());
        (h ^ (h >> 32)) as u32
    }
}

/// A convolution with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T = f32> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.spec.apply(x, &self.weight, &self.bias)
    }
}

/// Two 1×1 convolutions with a SiLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseMlp<T = f32> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

impl<T: Real> PointwiseMlp<T> {
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = linear(x, &self.w1, &self.b1)?.map(silu_scalar);
        linear(&h, &self.w2, &self.b2)
    }
}

/// A down/up-sampling convolution followed by a VSS block (or, for
/// synthesis stages, preceded by it).
#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T = f32> {
    pub conv: ConvLayer<T>,
    pub block: VssBlock<T>,
    pub block_cfg: VssBlockConfig,
    pub block_first: bool,
}

impl<T: Real> Stage<T> {
    fn forward(&self, x: &Tensor<T>, mode: ScanMode) -> Result<Tensor<T>> {
        if self.block_first {
            let f = vss_block_forward_with(x, &self.block_cfg, &self.block, mode)?;
            self.conv.forward(&f)
        } else {
            let f = self.conv.forward(x)?;
            vss_block_forward_with(&f, &self.block_cfg, &self.block, mode)
        }
    }
}

/// Networks of one latent slice: the `(μ, σ)` head reads
/// `(μ̃, σ̃, ȳ_{<i})`, the residual head additionally reads `ŷ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceNet<T = f32> {
    pub params: PointwiseMlp<T>,
    pub residual: PointwiseMlp<T>,
}

/// Every transform and entropy-model parameter of a codec, in typed form.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: TransformConfig,
    pub analysis: Vec<Stage>,
    pub hyper_analysis: Vec<Stage>,
    pub hyper_synthesis: Vec<Stage>,
    pub synthesis: Vec<Stage>,
    pub slices: Vec<SliceNet>,
    pub prior: FactorizedPrior,
    /// Schedule used for every selective scan in the transforms.
    pub scan_mode: ScanMode,
}

fn build_s6(src: &mut dyn ParamSource, prefix: &str, d: usize, n: usize) -> Result<S6Weights> {
    let r = TransformConfig::dt_rank(d);
    let p = |leaf| join(prefix, leaf);
    Ok(S6Weights {
        dt_down: src.take(&p("dt_down"), &[d, r], Init::FanIn(d))?,
        dt_up: src.take(&p("dt_up"), &[r, d], Init::FanIn(r))?,
        dt_bias: src.take(&p("dt_bias"), &[d], Init::SoftplusUniform(1e-3, 1e-1))?,
        b_proj: src.take(&p("b_proj"), &[d, n], Init::FanIn(d))?,
        b_bias: src.take(&p("b_bias"), &[n], Init::Zeros)?,
        c_proj: src.take(&p("c_proj"), &[d, n], Init::FanIn(d))?,
        c_bias: src.take(&p("c_bias"), &[n], Init::Zeros)?,
        a_log: src.take(&p("a_log"), &[d, n], Init::StateLadder)?,
        d: src.take(&p("d"), &[d], Init::Const(1.0))?,
    })
}

fn build_vss_layer(
    src: &mut dyn ParamSource,
    prefix: &str,
    c: usize,
    cfg: &TransformConfig,
) -> Result<VssLayerWeights> {
    let e = c * cfg.expand;
    let k = cfg.dw_kernel;
    let p = |leaf| join(prefix, leaf);
    let scan = if cfg.tied_directions {
        Scan2dWeights::tied(build_s6(src, &p("scan"), e, cfg.state_dim)?)
    } else {
        let mut sets = Vec::with_capacity(4);
        for dir in 0..4 {
            sets.push(build_s6(
                src,
                &join(prefix, &format!("scan.dir{dir}")),
                e,
                cfg.state_dim,
            )?);
        }
        let sets: [S6Weights; 4] = sets
            .try_into()
            .map_err(|_| Error::invalid("build", "direction count"))?;
        Scan2dWeights::separate(sets)
    };
    Ok(VssLayerWeights {
        ln1_gamma: src.take(&p("ln1.gamma"), &[c], Init::Const(1.0))?,
        ln1_beta: src.take(&p("ln1.beta"), &[c], Init::Zeros)?,
        in_proj: src.take(&p("in_proj.weight"), &[c, e], Init::FanIn(c))?,
        in_bias: src.take(&p("in_proj.bias"), &[e], Init::FanIn(c))?,
        gate_proj: src.take(&p("gate_proj.weight"), &[c, e], Init::FanIn(c))?,
        gate_bias: src.take(&p("gate_proj.bias"), &[e], Init::FanIn(c))?,
        dw_kernel: src.take(&p("dwconv.weight"), &[k, k, e], Init::FanIn(k * k))?,
        dw_bias: src.take(&p("dwconv.bias"), &[e], Init::FanIn(k * k))?,
        scan,
        ln2_gamma: src.take(&p("ln2.gamma"), &[e], Init::Const(1.0))?,
        ln2_beta: src.take(&p("ln2.beta"), &[e], Init::Zeros)?,
        out_proj: src.take(&p("out_proj.weight"), &[e, c], Init::FanIn(e))?,
        out_bias: src.take(&p("out_proj.bias"), &[c], Init::FanIn(e))?,
    })
}

fn build_block(
    src: &mut dyn ParamSource,
    prefix: &str,
    layers: usize,
    c: usize,
    cfg: &TransformConfig,
) -> Result<(VssBlock, VssBlockConfig)> {
    let layers_w = (0..layers)
        .map(|l| build_vss_layer(src, &join(prefix, &format!("{l}")), c, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((VssBlock { layers: layers_w }, VssBlockConfig { layers, channels: c }))
}

fn build_conv(src: &mut dyn ParamSource, prefix: &str, spec: ConvSpec) -> Result<ConvLayer> {
    let fan_in = spec.in_channels * spec.kernel * spec.kernel;
    Ok(ConvLayer {
        weight: src.take(&join(prefix, "weight"), &spec.weight_shape(), Init::FanIn(fan_in))?,
        bias: src.take(&join(prefix, "bias"), &[spec.out_channels], Init::FanIn(fan_in))?,
        spec,
    })
}

/// `(in, out, layers, block_first)` per stage → stages.
fn build_stages(
    src: &mut dyn ParamSource,
    prefix: &str,
    plan: &[(usize, usize, usize, usize)],
    up: bool,
    block_first: bool,
    cfg: &TransformConfig,
) -> Result<Vec<Stage>> {
    plan.iter()
        .enumerate()
        .map(|(i, &(cin, cout, layers, block_c))| {
            let sp = join(prefix, &format!("{i}"));
            let spec = if up {
                ConvSpec::up(cin, cout, cfg.kernel, 2)
            } else {
                ConvSpec::down(cin, cout, cfg.kernel, 2)
            };
            let conv = build_conv(src, &join(&sp, "conv"), spec)?;
            let (block, block_cfg) = build_block(src, &join(&sp, "vss"), layers, block_c, cfg)?;
            Ok(Stage {
                conv,
                block,
                block_cfg,
                block_first,
            })
        })
        .collect()
}

fn build_mlp(src: &mut dyn ParamSource, prefix: &str, cin: usize, hidden: usize, cout: usize) -> Result<PointwiseMlp> {
    let p = |leaf| join(prefix, leaf);
    Ok(PointwiseMlp {
        w1: src.take(&p("fc1.weight"), &[cin, hidden], Init::FanIn(cin))?,
        b1: src.take(&p("fc1.bias"), &[hidden], Init::FanIn(cin))?,
        w2: src.take(&p("fc2.weight"), &[hidden, cout], Init::FanIn(hidden))?,
        b2: src.take(&p("fc2.bias"), &[cout], Init::FanIn(hidden))?,
    })
}

impl Model {
    /// Builds every parameter through `src`; this is the single definition
    /// of parameter names, shapes and initializers.
    pub fn build(cfg: &TransformConfig, src: &mut dyn ParamSource) -> Result<Self> {
        cfg.validate()?;
        let [c1, c2, c3, m, c5, c6] = cfg.channels;
        let [l1, l2, l3, l4] = cfg.layers;
        let hl = cfg.hyper_layers;
        let analysis = build_stages(
            src,
            "g_a",
            &[(3, c1, l1, c1), (c1, c2, l2, c2), (c2, c3, l3, c3), (c3, m, l4, m)],
            false,
            false,
            cfg,
        )?;
        let hyper_analysis = build_stages(src, "h_a", &[(m, c5, hl, c5), (c5, c6, hl, c6)], false, false, cfg)?;
        let hyper_synthesis = build_stages(
            src,
            "h_s",
            &[(c6, c5, hl, c5), (c5, 2 * m, hl, 2 * m)],
            true,
            false,
            cfg,
        )?;
        // Mirror of the analysis transform: each block runs before its upsampling.
        let synthesis = build_stages(
            src,
            "g_s",
            &[(m, c3, l4, m), (c3, c2, l3, c3), (c2, c1, l2, c2), (c1, 3, l1, c1)],
            true,
            true,
            cfg,
        )?;
        let s = cfg.slice_width();
        let slices = (0..cfg.slices)
            .map(|i| {
                let ctx = 2 * m + i * s;
                Ok(SliceNet {
                    params: build_mlp(src, &format!("cam.{i}.params"), ctx, cfg.cam_hidden, 2 * s)?,
                    residual: build_mlp(src, &format!("cam.{i}.residual"), ctx + s, cfg.cam_hidden, s)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let prior = FactorizedPrior::build(src, "prior", c6)?;
        Ok(Model {
            config: cfg.clone(),
            analysis,
            hyper_analysis,
            hyper_synthesis,
            synthesis,
            slices,
            prior,
            scan_mode: ScanMode::Sequential,
        })
    }

    /// Typed view of a weight archive. Fails on missing, misshapen or
    /// unexpected parameters.
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let mut loader = StoreLoader::new(store);
        let model = Model::build(&store.config, &mut loader)?;
        loader.finish()?;
        Ok(model)
    }
}

fn run_stages(stages: &[Stage], x: &Tensor, mode: ScanMode) -> Result<Tensor> {
    let mut f = x.clone();
    for s in stages {
        f = s.forward(&f, mode)?;
    }
    Ok(f)
}

fn check_divisible(op: &'static str, x: &Tensor, stride: usize, channels: usize) -> Result<()> {
    let (h, w, c) = x.dims3(op)?;
    if c != channels {
        return Err(Error::shape(op, "channels", channels, c));
    }
    if h == 0 || w == 0 || h % stride != 0 || w % stride != 0 {
        return Err(Error::invalid(
            op,
            format!("extent {h}x{w} is not a positive multiple of {stride}; pad the input first"),
        ));
    }
    Ok(())
}

/// `y = g_a(x)`: `[H, W, 3] → [H/16, W/16, M]`.
pub fn analysis(model: &Model, x: &Tensor) -> Result<Tensor> {
    check_divisible("analysis", x, ANALYSIS_STRIDE, 3)?;
    run_stages(&model.analysis, x, model.scan_mode)
}

/// `z = h_a(y)`: `[h, w, M] → [h/4, w/4, C₆]`.
pub fn hyper_analysis(model: &Model, y: &Tensor) -> Result<Tensor> {
    check_divisible("hyper_analysis", y, 4, model.config.latent_channels())?;
    run_stages(&model.hyper_analysis, y, model.scan_mode)
}

/// `(μ̃, σ̃) = h_s(ẑ)`, both `[4h, 4w, M]`, with `σ̃ ≥ σ_min`.
pub fn hyper_synthesis(model: &Model, z_hat: &Tensor) -> Result<(Tensor, Tensor)> {
    let (_, _, c) = z_hat.dims3("hyper_synthesis")?;
    if c != model.config.hyper_channels() {
        return Err(Error::shape(
            "hyper_synthesis",
            "channels",
            model.config.hyper_channels(),
            c,
        ));
    }
    let out = run_stages(&model.hyper_synthesis, z_hat, model.scan_mode)?;
    let m = model.config.latent_channels();
    let mu = out.channel_slice(0, m)?;
    let sigma = out.channel_slice(m, 2 * m)?.map(scale_from_raw);
    Ok((mu, sigma))
}

/// `max(softplus(raw), σ_min)`.
#[inline]
pub fn scale_from_raw(raw: f32) -> f32 {
    softplus_scalar(raw).max(SIGMA_MIN)
}

fn slice_context(
    op: &'static str,
    mu_t: &Tensor,
    sigma_t: &Tensor,
    prev: &[Tensor],
    extra: Option<&Tensor>,
) -> Result<Tensor> {
    let mut parts: Vec<&Tensor> = Vec::with_capacity(prev.len() + 3);
    parts.push(mu_t);
    parts.push(sigma_t);
    parts.extend(prev.iter());
    parts.extend(extra);
    Tensor::concat_channels(&parts).stage(op)
}

fn check_slice(model: &Model, i: usize, prev: &[Tensor]) -> Result<()> {
    if i >= model.config.slices {
        return Err(Error::invalid(
            "cam_slice",
            format!("slice {i} out of range 0..{}", model.config.slices),
        ));
    }
    if prev.len() != i {
        return Err(Error::shape("cam_slice", "previous slice count", i, prev.len()));
    }
    Ok(())
}

/// `(μ_i, σ_i)` from the hyperprior and the previously reconstructed slices.
pub fn slice_params(
    model: &Model,
    i: usize,
    mu_t: &Tensor,
    sigma_t: &Tensor,
    prev: &[Tensor],
) -> Result<(Tensor, Tensor)> {
    check_slice(model, i, prev)?;
    let ctx = slice_context("slice_params", mu_t, sigma_t, prev, None)?;
    let out = model.slices[i].params.forward(&ctx)?;
    let s = model.config.slice_width();
    Ok((
        out.channel_slice(0, s)?,
        out.channel_slice(s, 2 * s)?.map(scale_from_raw),
    ))
}

/// Latent residual `r_i = ½ tanh(e_i(μ̃, σ̃, ȳ_{<i}, ŷ_i))`.
pub fn slice_residual(
    model: &Model,
    i: usize,
    mu_t: &Tensor,
    sigma_t: &Tensor,
    prev: &[Tensor],
    y_hat: &Tensor,
) -> Result<Tensor> {
    check_slice(model, i, prev)?;
    let ctx = slice_context("slice_residual", mu_t, sigma_t, prev, Some(y_hat))?;
    Ok(model.slices[i].residual.forward(&ctx)?.map(|v| 0.5 * v.tanh()))
}

/// Output of one autoregressive slice step.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceOutput {
    pub residual: Tensor,
    pub mu: Tensor,
    pub sigma: Tensor,
    pub y_hat: Tensor,
    pub y_bar: Tensor,
}

/// Encoder-side slice step: predicts `(μ_i, σ_i)`, quantizes
/// `ŷ_i = Q(y_i - μ_i) + μ_i` and applies the residual `ȳ_i = ŷ_i + r_i`.
pub fn cam_slice(
    model: &Model,
    i: usize,
    mu_t: &Tensor,
    sigma_t: &Tensor,
    prev: &[Tensor],
    y_i: &Tensor,
) -> Result<SliceOutput> {
    let (mu, sigma) = slice_params(model, i, mu_t, sigma_t, prev)?;
    let y_hat = crate::entropy::quantize(y_i, &mu)?;
    let residual = slice_residual(model, i, mu_t, sigma_t, prev, &y_hat)?;
    let y_bar = y_hat.add(&residual)?;
    Ok(SliceOutput {
        residual,
        mu,
        sigma,
        y_hat,
        y_bar,
    })
}

/// `x̂ = g_s(ȳ)`: `[h, w, M] → [16h, 16w, 3]`, not clamped.
pub fn synthesis(model: &Model, y: &Tensor) -> Result<Tensor> {
    let (h, w, c) = y.dims3("synthesis")?;
    if c != model.config.latent_channels() {
        return Err(Error::shape("synthesis", "channels", model.config.latent_channels(), c));
    }
    if h == 0 || w == 0 {
        return Err(Error::invalid("synthesis", "empty latent"));
    }
    run_stages(&model.synthesis, y, model.scan_mode)
}

/// Every intermediate latent of one encode.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBundle {
    pub y: Tensor,
    pub y_hat: Tensor,
    pub y_bar: Tensor,
    pub z: Tensor,
    pub z_hat: Tensor,
    pub mu: Tensor,
    pub sigma: Tensor,
    pub mu_tilde: Tensor,
    pub sigma_tilde: Tensor,
}
