//! Evaluation metrics and latent diagnostics.

use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::normal_cdf;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean squared error of two equally long sample vectors.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("mse", "length", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::invalid("mse", "no samples"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `10·log₁₀(255² / MSE)`; infinite when the MSE is zero.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * libm::log10(255.0 * 255.0 / mse)
    }
}

/// PSNR of samples on the 8-bit scale.
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_u8(a: &[u8], b: &[u8]) -> Result<f64> {
    let f = |v: &[u8]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    psnr(&f(a), &f(b))
}

/// One operating point of a rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
}

fn sorted_curve(op: &'static str, c: &[RdPoint]) -> Result<Vec<RdPoint>> {
    if c.len() < 4 {
        return Err(Error::invalid(op, "need at least 4 points per curve"));
    }
    if c.iter()
        .any(|p| p.bpp.is_nan() || p.bpp <= 0.0 || !p.bpp.is_finite() || !p.psnr.is_finite())
    {
        return Err(Error::invalid(op, "points need finite PSNR and positive finite rate"));
    }
    let mut v = c.to_vec();
    v.sort_by(|a, b| a.psnr.total_cmp(&b.psnr));
    if v.windows(2).any(|w| w[1].psnr <= w[0].psnr || w[1].bpp <= w[0].bpp) {
        return Err(Error::invalid(op, "curve must be strictly monotone"));
    }
    Ok(v)
}

/// Natural cubic spline through `(x, y)`, stored as second derivatives.
struct Spline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    fn natural(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let f = lower / diag[i - 1];
                diag[i] -= f * upper[i - 1];
                rhs[i] -= f * rhs[i - 1];
            }
            for i in (0..k).rev() {
                let next = if i + 1 < k { upper[i] * m[i + 2] } else { 0.0 };
                m[i + 1] = (rhs[i] - next) / diag[i];
            }
        }
        Spline { x, y, m }
    }

    /// Antiderivative of segment `i` at `t`, up to a per-segment constant.
    fn segment_primitive(&self, i: usize, t: f64) -> f64 {
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let c0 = self.y[i] / h - m0 * h / 6.0;
        let c1 = self.y[i + 1] / h - m1 * h / 6.0;
        let (u, v) = (x1 - t, t - x0);
        -m0 * (u * u) * (u * u) / (24.0 * h) + m1 * (v * v) * (v * v) / (24.0 * h) - c0 * u * u / 2.0 + c1 * v * v / 2.0
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.x.len() - 1 {
            let a = self.x[i].max(lo);
            let b = self.x[i + 1].min(hi);
            if b > a {
                acc += self.segment_primitive(i, b) - self.segment_primitive(i, a);
            }
        }
        acc
    }
}

/// Bjøntegaard delta rate of `test` against `anchor`, in percent. Negative
/// values mean `test` needs fewer bits at equal quality.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    let a = sorted_curve("bd_rate", anchor)?;
    let b = sorted_curve("bd_rate", test)?;
    let lo = a[0].psnr.max(b[0].psnr);
    let hi = a[a.len() - 1].psnr.min(b[b.len() - 1].psnr);
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return Err(Error::invalid("bd_rate", "PSNR ranges do not overlap"));
    }
    let spline = |c: &[RdPoint]| {
        Spline::natural(
            c.iter().map(|p| p.psnr).collect(),
            c.iter().map(|p| libm::log10(p.bpp)).collect(),
        )
    };
    let ia = spline(&a).integral(lo, hi);
    let ib = spline(&b).integral(lo, hi);
    let avg = (ib - ia) / (hi - lo);
    Ok((libm::pow(10.0, avg) - 1.0) * 100.0)
}

/// Mean channel-wise correlation of normalized latents per spatial offset.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    pub max_offset: usize,
    values: Vec<f64>,
    samples: Vec<usize>,
}

impl CorrelationMap {
    fn side(&self) -> usize {
        2 * self.max_offset + 1
    }

    fn slot(&self, di: isize, dj: isize) -> usize {
        let k = self.max_offset as isize;
        assert!(di.abs() <= k && dj.abs() <= k, "offset out of range");
        ((di + k) as usize) * self.side() + (dj + k) as usize
    }

    /// Correlation between positions `(r, c)` and `(r + di, c + dj)`.
    pub fn get(&self, di: isize, dj: isize) -> f64 {
        self.values[self.slot(di, dj)]
    }

    /// Number of position pairs averaged for an offset.
    pub fn samples(&self, di: isize, dj: isize) -> usize {
        self.samples[self.slot(di, dj)]
    }

    /// Row-major values, rows by vertical offset from `-max_offset`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let den = libm::sqrt(saa * sbb);
    if den > 0.0 {
        Some((sab / den).clamp(-1.0, 1.0))
    } else {
        None
    }
}

/// Normalizes `(y - μ) / σ` element-wise.
pub fn normalize_latent(y: &Tensor, mu: &Tensor, sigma: &Tensor) -> Result<Vec<f64>> {
    y.same_shape(mu, "normalize_latent")?;
    y.same_shape(sigma, "normalize_latent")?;
    y.data()
        .iter()
        .zip(mu.data())
        .zip(sigma.data())
        .map(|((&y, &m), &s)| {
            if s > 0.0 {
                Ok((y as f64 - m as f64) / s as f64)
            } else {
                Err(Error::invalid("normalize_latent", "scales must be positive"))
            }
        })
        .collect()
}

/// Correlation map over one or more `(y, μ, σ)` latents of shape `[H, W, C]`.
///
/// Pairs whose channel vectors are constant are skipped. Offset `(0, 0)` is
/// 1 by definition and `map(-i, -j)` equals `map(i, j)`.
pub fn latent_correlation(latents: &[(&Tensor, &Tensor, &Tensor)], max_offset: usize) -> Result<CorrelationMap> {
    if latents.is_empty() {
        return Err(Error::invalid("latent_correlation", "no latents"));
    }
    let side = 2 * max_offset + 1;
    let mut sums = vec![0.0f64; side * side];
    let mut map = CorrelationMap {
        max_offset,
        values: vec![0.0; side * side],
        samples: vec![0; side * side],
    };
    let k = max_offset as isize;
    for &(y, mu, sigma) in latents {
        let (h, w, c) = y.dims3("latent_correlation")?;
        if c < 2 {
            return Err(Error::invalid("latent_correlation", "need at least two channels"));
        }
        let z = normalize_latent(y, mu, sigma)?;
        let at = |r: usize, col: usize| &z[(r * w + col) * c..(r * w + col + 1) * c];
        // Half-plane of offsets; the rest follows by symmetry.
        for di in 0..=k {
            for dj in -k..=k {
                if di == 0 && dj <= 0 {
                    continue;
                }
                let slot = map.slot(di, dj);
                for r in 0..h {
                    let r2 = r as isize + di;
                    if r2 >= h as isize {
                        break;
                    }
                    for col in 0..w {
                        let c2 = col as isize + dj;
                        if c2 < 0 || c2 >= w as isize {
                            continue;
                        }
                        if let Some(p) = pearson(at(r, col), at(r2 as usize, c2 as usize)) {
                            sums[slot] += p;
                            map.samples[slot] += 1;
                        }
                    }
                }
            }
        }
        let center = map.slot(0, 0);
        map.samples[center] += h * w;
    }
    for di in -k..=k {
        for dj in -k..=k {
            let s = map.slot(di, dj);
            let (src, v) = if di == 0 && dj == 0 {
                (s, 1.0)
            } else {
                let src = if di > 0 || (di == 0 && dj > 0) {
                    s
                } else {
                    map.slot(-di, -dj)
                };
                let n = map.samples[src];
                (
                    src,
                    if n == 0 {
                        0.0
                    } else {
                        (sums[src] / n as f64).clamp(-1.0, 1.0)
                    },
                )
            };
            map.values[s] = v;
            map.samples[s] = map.samples[src];
        }
    }
    Ok(map)
}

/// Histogram settings for [`kl_to_standard_normal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlBins {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Added to both densities before taking the log ratio.
    pub epsilon: f64,
}

impl Default for KlBins {
    fn default() -> Self {
        KlBins {
            bins: 201,
            lo: -6.0,
            hi: 6.0,
            epsilon: 1e-12,
        }
    }
}

/// `KL(empirical ‖ N(0, 1))` in nats over matched histogram bins. Samples
/// outside the histogram range are counted in the total but not binned.
pub fn kl_to_standard_normal(samples: &[f64], bins: KlBins) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("kl_to_standard_normal", "no samples"));
    }
    if bins.bins == 0 || bins.hi.is_nan() || bins.lo.is_nan() || bins.hi <= bins.lo {
        return Err(Error::invalid("kl_to_standard_normal", "bad histogram range"));
    }
    let width = (bins.hi - bins.lo) / bins.bins as f64;
    let mut counts = vec![0usize; bins.bins];
    for &s in samples {
        if s >= bins.lo && s < bins.hi {
            let i = (((s - bins.lo) / width) as usize).min(bins.bins - 1);
            counts[i] += 1;
        }
    }
    let n = samples.len() as f64;
    let mut kl = 0.0;
    for (i, &cnt) in counts.iter().enumerate() {
        if cnt == 0 {
            continue;
        }
        let a = bins.lo + i as f64 * width;
        let q = normal_cdf(a + width) - normal_cdf(a);
        let p = cnt as f64 / n;
        kl += p * libm::log((p + bins.epsilon) / (q + bins.epsilon));
    }
    Ok(kl)
}

/// Per-position mean of `|y - ŷ|` over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationMap {
    pub height: usize,
    pub width: usize,
    pub map: Vec<f64>,
    /// Unscaled global mean.
    pub mean: f64,
}

impl DeviationMap {
    /// Min-max scaled copy in `[0, 1]`; a constant map scales to zeros.
    pub fn scaled(&self) -> Vec<f64> {
        let lo = self.map.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        self.map
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect()
    }
}

pub fn quantize_deviation(y: &Tensor, y_hat: &Tensor) -> Result<DeviationMap> {
    let (h, w, c) = y.dims3("quantize_deviation")?;
    y.same_shape(y_hat, "quantize_deviation")?;
    if h * w * c == 0 {
        return Err(Error::invalid("quantize_deviation", "empty latent"));
    }
    let map: Vec<f64> = y
        .data()
        .chunks_exact(c)
        .zip(y_hat.data().chunks_exact(c))
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, z)| libm::fabs(*x as f64 - *z as f64))
                .sum::<f64>()
                / c as f64
        })
        .collect();
    let mean = map.iter().sum::<f64>() / map.len() as f64;
    Ok(DeviationMap {
        height: h,
        width: w,
        map,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(rates: &[f64], psnrs: &[f64]) -> Vec<RdPoint> {
        rates
            .iter()
            .zip(psnrs)
            .map(|(&bpp, &psnr)| RdPoint { bpp, psnr })
            .collect()
    }

    #[test]
    fn psnr_closed_form() {
        assert!((psnr_from_mse(6.5025) - 40.0).abs() < 1e-9);
        assert_eq!(psnr(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), f64::INFINITY);
        assert!(psnr(&[], &[]).is_err());
        assert!(psnr_u8(&[0, 10], &[0, 12]).unwrap() > psnr_u8(&[0, 10], &[0, 13]).unwrap());
    }

    #[test]
    fn spline_interpolates_and_integrates_cubics_exactly_at_knots() {
        let s = Spline::natural(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0, 1.0]);
        assert!((s.integral(0.5, 2.5) - 2.0).abs() < 1e-12);
        let s = Spline::natural(vec![0.0, 1.0, 3.0, 4.0], vec![0.0, 2.0, 6.0, 8.0]);
        assert!(s.m.iter().all(|m| m.abs() < 1e-12));
        assert!((s.integral(0.0, 4.0) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn bd_rate_examples() {
        let a = curve(&[0.1, 0.2, 0.4, 0.8], &[28.0, 30.5, 33.0, 36.0]);
        assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
        let b = curve(&[0.2, 0.4, 0.8, 1.6], &[28.0, 30.5, 33.0, 36.0]);
        assert!((bd_rate(&a, &b).unwrap() - 100.0).abs() < 1e-9);
        assert!(bd_rate(&b, &a).unwrap() < 0.0);
        assert!(bd_rate(&a[..3], &a[..3]).is_err());
        let far = curve(&[0.1, 0.2, 0.4, 0.8], &[40.0, 41.0, 42.0, 43.0]);
        assert!(bd_rate(&a, &far).is_err());
    }

    #[test]
    fn deviation_examples() {
        let y = Tensor::from_fn([2, 3, 4], |i| i as f32 * 0.1);
        let d = quantize_deviation(&y, &y).unwrap();
        assert!(d.map.iter().all(|&v| v == 0.0));
        assert_eq!(d.scaled(), vec![0.0; 6]);
        let shifted = y.map(|v| v + 0.3);
        let d = quantize_deviation(&y, &shifted).unwrap();
        assert!(d.map.iter().all(|&v| (v - 0.3).abs() < 1e-6));
        assert!((d.mean - 0.3).abs() < 1e-6);
    }

    #[test]
    fn correlation_center_and_symmetry() {
        let y = Tensor::from_fn([5, 6, 4], |i| libm::sinf(i as f32 * 1.7));
        let mu = Tensor::zeros([5, 6, 4]);
        let sigma = Tensor::full([5, 6, 4], 1.0f32);
        let m = latent_correlation(&[(&y, &mu, &sigma)], 2).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        for i in -2..=2 {
            for j in -2..=2 {
                assert_eq!(m.get(i, j), m.get(-i, -j));
                assert!((-1.0..=1.0).contains(&m.get(i, j)));
            }
        }
        assert_eq!(m.samples(1, 0), 4 * 6);
    }

    #[test]
    fn kl_rejects_empty() {
        assert!(kl_to_standard_normal(&[], KlBins::default()).is_err());
    }
}
