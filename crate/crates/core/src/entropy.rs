//! Quantization, the Gaussian conditional for `ŷ`, the factorized prior for
//! `ẑ`, rate estimates and the rate-distortion objective.
//!
//! All probabilities are evaluated in `f64` and handed to the range coder as
//! [`CdfTable`]s covering the symbols `-SYMBOL_LIMIT ..= SYMBOL_LIMIT`. Mass
//! outside that interval is folded into the two edge bins.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::range_coder::CdfTable;
use crate::tensor::Tensor;
use crate::weights::{join, Init, ParamSource};

/// Lower bound on every predicted scale.
pub const SIGMA_MIN: f32 = 0.11;
/// Largest scale of the quantized scale table.
pub const SIGMA_MAX: f64 = 256.0;
pub const SCALE_LEVELS: usize = 64;
/// Symbols are saturated into `[-SYMBOL_LIMIT, SYMBOL_LIMIT]`.
pub const SYMBOL_LIMIT: i32 = 255;
/// The quality ladder: λ for `--lambda-index` 0 through 4.
pub const LAMBDA_LADDER: [f64; 5] = [0.0035, 0.0067, 0.013, 0.025, 0.05];

/// `round(v - μ) + μ`, ties away from zero.
pub fn quantize(v: &Tensor, mu: &Tensor) -> Result<Tensor> {
    v.zip_map(mu, "quantize", |a, m| libm::roundf(a - m) + m)
}

/// Integer lattice symbols `round(v - μ)`, saturated to the alphabet.
/// Returns the symbols and how many of them were saturated.
pub fn lattice_symbols(v: &Tensor, mu: &Tensor) -> Result<(Vec<i32>, usize)> {
    v.same_shape(mu, "lattice_symbols")?;
    let mut saturated = 0;
    let syms = v
        .data()
        .iter()
        .zip(mu.data())
        .map(|(a, m)| {
            let q = libm::roundf(a - m);
            let lim = SYMBOL_LIMIT as f32;
            if !(-lim..=lim).contains(&q) {
                saturated += 1;
            }
            // NaN maps to 0 under a saturating cast.
            (q as i32).clamp(-SYMBOL_LIMIT, SYMBOL_LIMIT)
        })
        .collect();
    Ok((syms, saturated))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Mass of the unit-width bin centered on `k` under `N(0, σ²)`.
///
/// Symbols are coded relative to the predicted mean, so the mass does not
/// depend on `μ`. Both tails are evaluated through `erfc` to avoid
/// cancellation.
pub fn gaussian_bin_mass(k: i32, sigma: f64) -> f64 {
    let s = core::f64::consts::FRAC_1_SQRT_2 / sigma;
    if k == 0 {
        return libm::erf(0.5 * s);
    }
    let a = (k.unsigned_abs() as f64 - 0.5) * s;
    let b = (k.unsigned_abs() as f64 + 0.5) * s;
    0.5 * (libm::erfc(a) - libm::erfc(b))
}

/// Masses for `-SYMBOL_LIMIT ..= SYMBOL_LIMIT` with the tails folded in.
pub fn gaussian_masses(sigma: f64) -> Vec<f64> {
    let mut m: Vec<f64> = (-SYMBOL_LIMIT..=SYMBOL_LIMIT)
        .map(|k| gaussian_bin_mass(k, sigma))
        .collect();
    let tail = 0.5 * libm::erfc((SYMBOL_LIMIT as f64 + 0.5) * core::f64::consts::FRAC_1_SQRT_2 / sigma);
    let last = m.len() - 1;
    m[0] += tail;
    m[last] += tail;
    m
}

/// Gaussian conditional with a log-spaced table of scales, one coder table
/// per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConditional {
    scales: Vec<f32>,
    tables: Vec<CdfTable>,
}

impl Default for GaussianConditional {
    fn default() -> Self {
        Self::new()
    }
}

impl GaussianConditional {
    pub fn new() -> Self {
        let lo = libm::log(SIGMA_MIN as f64);
        let step = (libm::log(SIGMA_MAX) - lo) / (SCALE_LEVELS - 1) as f64;
        let scales: Vec<f32> = (0..SCALE_LEVELS)
            .map(|i| libm::exp(lo + step * i as f64) as f32)
            .collect();
        let tables = scales
            .iter()
            .map(|&s| {
                CdfTable::from_masses(-SYMBOL_LIMIT, &gaussian_masses(s as f64)).expect("gaussian masses are valid")
            })
            .collect();
        GaussianConditional { scales, tables }
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    /// Smallest level whose scale is at least `σ`; larger or non-finite
    /// scales map to the last level.
    pub fn scale_index(&self, sigma: f32) -> usize {
        if sigma.is_nan() {
            return SCALE_LEVELS - 1;
        }
        self.scales.partition_point(|&s| s < sigma).min(SCALE_LEVELS - 1)
    }

    pub fn table(&self, index: usize) -> &CdfTable {
        &self.tables[index]
    }

    /// Coder tables for every entry of a scale tensor.
    pub fn tables_for(&self, sigma: &Tensor) -> Vec<&CdfTable> {
        sigma.data().iter().map(|&s| self.table(self.scale_index(s))).collect()
    }
}

/// Filter widths of the per-channel cumulative function, input to output.
pub const PRIOR_FILTERS: [usize; 5] = [1, 3, 3, 3, 1];
const PRIOR_INIT_SCALE: f64 = 10.0;

/// Learned univariate CDF per channel: a stack of monotone affine maps with
/// softplus-constrained matrices and tanh gates, squashed by a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedPrior {
    channels: usize,
    /// Layer `k` has shape `[C, f_{k+1}, f_k]`.
    pub matrices: Vec<Tensor>,
    /// `[C, f_{k+1}]`.
    pub biases: Vec<Tensor>,
    /// `[C, f_{k+1}]`, for every layer but the last.
    pub factors: Vec<Tensor>,
}

impl FactorizedPrior {
    pub fn build(src: &mut dyn ParamSource, prefix: &str, channels: usize) -> Result<Self> {
        let layers = PRIOR_FILTERS.len() - 1;
        let scale = libm::pow(PRIOR_INIT_SCALE, 1.0 / layers as f64);
        let mut matrices = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        let mut factors = Vec::with_capacity(layers - 1);
        for k in 0..layers {
            let (fi, fo) = (PRIOR_FILTERS[k], PRIOR_FILTERS[k + 1]);
            let init = libm::log(libm::expm1(1.0 / scale / fo as f64));
            matrices.push(src.take(
                &join(prefix, &alloc::format!("matrix{k}")),
                &[channels, fo, fi],
                Init::Const(init),
            )?);
            biases.push(src.take(
                &join(prefix, &alloc::format!("bias{k}")),
                &[channels, fo],
                Init::Uniform(-0.5, 0.5),
            )?);
            if k + 1 < layers {
                factors.push(src.take(
                    &join(prefix, &alloc::format!("factor{k}")),
                    &[channels, fo],
                    Init::Zeros,
                )?);
            }
        }
        Ok(FactorizedPrior {
            channels,
            matrices,
            biases,
            factors,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Logit of the cumulative function of channel `c` at `x`.
    pub fn logit(&self, c: usize, x: f64) -> f64 {
        let mut v = [0.0f64; 3];
        let mut width = 1;
        v[0] = x;
        let layers = PRIOR_FILTERS.len() - 1;
        for k in 0..layers {
            let (fi, fo) = (PRIOR_FILTERS[k], PRIOR_FILTERS[k + 1]);
            debug_assert_eq!(width, fi);
            let m = &self.matrices[k].data()[c * fo * fi..(c + 1) * fo * fi];
            let b = &self.biases[k].data()[c * fo..(c + 1) * fo];
            let mut next = [0.0f64; 3];
            for o in 0..fo {
                let mut acc = b[o] as f64;
                for i in 0..fi {
                    acc += softplus64(m[o * fi + i] as f64) * v[i];
                }
                next[o] = acc;
            }
            if k + 1 < layers {
                let a = &self.factors[k].data()[c * fo..(c + 1) * fo];
                for o in 0..fo {
                    next[o] += libm::tanh(a[o] as f64) * libm::tanh(next[o]);
                }
            }
            v = next;
            width = fo;
        }
        v[0]
    }

    pub fn cdf(&self, c: usize, x: f64) -> f64 {
        sigmoid64(self.logit(c, x))
    }

    /// Mass of the unit bin centered on `k`, computed on the side of the
    /// median where the sigmoid is not saturated.
    pub fn bin_mass(&self, c: usize, k: i32) -> f64 {
        let lo = self.logit(c, k as f64 - 0.5);
        let hi = self.logit(c, k as f64 + 0.5);
        let sign = if lo + hi > 0.0 { -1.0 } else { 1.0 };
        libm::fabs(sigmoid64(sign * hi) - sigmoid64(sign * lo))
    }

    /// Masses for `-SYMBOL_LIMIT ..= SYMBOL_LIMIT` with the tails folded in.
    pub fn masses(&self, c: usize) -> Vec<f64> {
        let lim = SYMBOL_LIMIT;
        let mut m: Vec<f64> = (-lim..=lim).map(|k| self.bin_mass(c, k)).collect();
        let last = m.len() - 1;
        m[0] += sigmoid64(self.logit(c, -lim as f64 - 0.5));
        m[last] += sigmoid64(-self.logit(c, lim as f64 + 0.5));
        m
    }

    /// One coder table per channel.
    pub fn tables(&self) -> Result<Vec<CdfTable>> {
        (0..self.channels)
            .map(|c| CdfTable::from_masses(-SYMBOL_LIMIT, &self.masses(c)))
            .collect()
    }
}

/// Mass of symbol `k` in channel `c` under the factorized prior.
pub fn factorized_bin_mass(prior: &FactorizedPrior, k: i32, c: usize) -> f64 {
    prior.bin_mass(c, k)
}

fn softplus64(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
}

fn sigmoid64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `Σ -log₂ p` over the coded probabilities of `symbols`.
pub fn estimate_rate(symbols: &[i32], tables: &[&CdfTable]) -> Result<f64> {
    if symbols.len() != tables.len() {
        return Err(Error::shape("estimate_rate", "contexts", symbols.len(), tables.len()));
    }
    symbols
        .iter()
        .zip(tables)
        .try_fold(0.0, |acc, (&s, t)| Ok(acc + t.bits(s)?))
}

/// `Σ -log₂ p` over raw probabilities.
pub fn rate_from_masses(masses: &[f64]) -> f64 {
    masses.iter().map(|&p| -libm::log2(p)).sum()
}

/// `λ·255²·MSE(x, x̂) + (bits_y + bits_z) / pixels`, with images in `[0, 1]`.
pub fn rd_loss(x: &Tensor, x_hat: &Tensor, bits_y: f64, bits_z: f64, lambda: f64, pixels: usize) -> Result<f64> {
    x.same_shape(x_hat, "rd_loss")?;
    if pixels == 0 || x.is_empty() {
        return Err(Error::invalid("rd_loss", "empty image"));
    }
    let se: f64 = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| {
            let d = *a as f64 - *b as f64;
            d * d
        })
        .sum();
    let mse = se / x.len() as f64;
    Ok(lambda * 255.0 * 255.0 * mse + (bits_y + bits_z) / pixels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::TransformConfig;
    use crate::weights::Initializer;

    #[test]
    fn quantize_examples() {
        let v = Tensor::new([3], alloc::vec![1.4f32, 0.25, 2.5]).unwrap();
        let mu = Tensor::new([3], alloc::vec![0.6f32, 0.25, 0.0]).unwrap();
        let q = quantize(&v, &mu).unwrap();
        assert!((q.data()[0] - 1.6).abs() < 1e-6);
        assert_eq!(q.data()[1], 0.25);
        assert_eq!(q.data()[2], 3.0);
        assert_eq!(quantize(&q, &mu).unwrap(), q);
        let neg = Tensor::new([1], alloc::vec![-0.5f32]).unwrap();
        assert_eq!(quantize(&neg, &Tensor::zeros([1])).unwrap().data()[0], -1.0);
    }

    #[test]
    fn lattice_symbols_saturate() {
        let v = Tensor::new([3], alloc::vec![300.0f32, -1.2, -400.0]).unwrap();
        let (s, sat) = lattice_symbols(&v, &Tensor::zeros([3])).unwrap();
        assert_eq!(s, [255, -1, -255]);
        assert_eq!(sat, 2);
    }

    #[test]
    fn center_bin_and_normalization() {
        assert!((gaussian_bin_mass(0, 1.0) - 0.382_924_922_548_026).abs() < 1e-12);
        let total: f64 = (-20..=20).map(|k| gaussian_bin_mass(k, 1.0)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for s in [0.11, 1.0, 17.0, 256.0] {
            let m = gaussian_masses(s);
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_table_covers_range() {
        let g = GaussianConditional::new();
        assert_eq!(g.scales().len(), SCALE_LEVELS);
        assert!((g.scales()[0] - SIGMA_MIN).abs() < 1e-7);
        assert!((g.scales()[SCALE_LEVELS - 1] - 256.0).abs() < 1e-3);
        assert_eq!(g.scale_index(0.0), 0);
        assert_eq!(g.scale_index(1e9), SCALE_LEVELS - 1);
        assert_eq!(g.scale_index(f32::NAN), SCALE_LEVELS - 1);
        for i in 0..SCALE_LEVELS {
            assert_eq!(g.scale_index(g.scales()[i]), i);
            assert!(g.scales()[g.scale_index(g.scales()[i] * 0.999)] >= g.scales()[i] * 0.999);
        }
        // Smallest scale: the tail bins still get a nonzero count.
        let t = g.table(0);
        assert!(t.probability(SYMBOL_LIMIT).unwrap() > 0.0);
        assert!(t.probability(0).unwrap() > 0.99);
    }

    fn prior() -> FactorizedPrior {
        let mut src = Initializer::new(9, TransformConfig::tiny());
        FactorizedPrior::build(&mut src, "prior", 4).unwrap()
    }

    #[test]
    fn prior_cdf_is_monotone_and_normalized() {
        let p = prior();
        for c in 0..4 {
            let mut prev = 0.0;
            for i in -400..400 {
                let v = p.cdf(c, i as f64 * 0.5);
                assert!(v >= prev && (0.0..=1.0).contains(&v));
                prev = v;
            }
            let m = p.masses(c);
            assert!(m.iter().all(|&x| x >= 0.0));
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(p.tables().unwrap().len(), 4);
    }

    #[test]
    fn rate_and_loss() {
        let t = CdfTable::from_masses(0, &[1.0; 256]).unwrap();
        let syms: Vec<i32> = (0..256).collect();
        let bits = estimate_rate(&syms, &alloc::vec![&t; 256]).unwrap();
        assert!((bits / 256.0 - 8.0).abs() < 1e-12);
        assert_eq!(rate_from_masses(&[1.0, 1.0]), 0.0);
        let x = Tensor::full([2, 2, 3], 0.5f32);
        assert_eq!(rd_loss(&x, &x, 0.0, 0.0, 0.013, 4).unwrap(), 0.0);
    }
}
