//! Neural primitives over `[H, W, C]` feature maps and `[.., C]` tokens.
//!
//! Weights are stored input-major (`[.., C_in, C_out]`) so that every inner
//! loop is an axpy over output channels. Each output value therefore
//! accumulates its terms in a fixed order regardless of vectorization.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvDirection {
    /// Strided convolution.
    Down,
    /// Strided transposed convolution.
    Up,
}

/// Geometry of a 2D convolution. Kernels are square and stored as
/// `[k, k, C_in, C_out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Extra rows/columns appended to a transposed convolution's output.
    pub output_padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub direction: ConvDirection,
}

impl ConvSpec {
    /// `k`×`k` strided convolution with "same"-style padding `k / 2`.
    pub fn down(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            kernel,
            stride,
            padding: kernel / 2,
            output_padding: 0,
            in_channels,
            out_channels,
            direction: ConvDirection::Down,
        }
    }

    /// Transposed counterpart of [`ConvSpec::down`]: maps `H` to `H * stride`.
    pub fn up(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        let padding = kernel / 2;
        // (H-1)s - 2p + k + op = Hs  =>  op = s + 2p - k
        let output_padding = (stride + 2 * padding).saturating_sub(kernel);
        ConvSpec {
            kernel,
            stride,
            padding,
            output_padding,
            in_channels,
            out_channels,
            direction: ConvDirection::Up,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.kernel, self.kernel, self.in_channels, self.out_channels]
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::invalid(op, "kernel and stride must be at least 1"));
        }
        if self.direction == ConvDirection::Up && self.output_padding >= self.stride {
            return Err(Error::invalid(op, "output padding must be smaller than the stride"));
        }
        Ok(())
    }

    /// Output extent along one spatial axis.
    pub fn output_extent(&self, input: usize) -> Result<usize> {
        match self.direction {
            ConvDirection::Down => {
                let padded = input + 2 * self.padding;
                if padded < self.kernel {
                    return Err(Error::invalid("conv2d", "kernel larger than padded input"));
                }
                Ok((padded - self.kernel) / self.stride + 1)
            }
            ConvDirection::Up => {
                if input == 0 {
                    return Ok(0);
                }
                let full = (input - 1) * self.stride + self.kernel + self.output_padding;
                full.checked_sub(2 * self.padding)
                    .ok_or_else(|| Error::invalid("conv_transpose2d", "padding exceeds output"))
            }
        }
    }

    /// Dispatches on [`ConvSpec::direction`].
    pub fn apply<T: Real>(&self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        match self.direction {
            ConvDirection::Down => conv2d(x, w, b, self),
            ConvDirection::Up => conv_transpose2d(x, w, b, self),
        }
    }
}

#[inline]
fn axpy<T: Real>(out: &mut [T], a: T, x: &[T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

fn check_conv_params<T: Real>(
    op: &'static str,
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<(usize, usize)> {
    spec.validate(op)?;
    let (h, wd, c) = x.dims3(op)?;
    if c != spec.in_channels {
        return Err(Error::shape(op, "input channels", spec.in_channels, c));
    }
    let ws = spec.weight_shape();
    if w.shape() != ws {
        let names = [
            "kernel height",
            "kernel width",
            "weight input channels",
            "weight output channels",
        ];
        for (i, name) in names.iter().enumerate() {
            let actual = w.shape().get(i).copied().unwrap_or(0);
            if actual != ws[i] {
                return Err(Error::shape(op, name, ws[i], actual));
            }
        }
        return Err(Error::shape(op, "weight rank", 4, w.rank()));
    }
    if b.len() != spec.out_channels {
        return Err(Error::shape(op, "bias length", spec.out_channels, b.len()));
    }
    Ok((h, wd))
}

/// Zero-padded strided convolution.
pub fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
    let op = "conv2d";
    if spec.direction != ConvDirection::Down {
        return Err(Error::invalid(op, "spec describes a transposed convolution"));
    }
    let (h, wd) = check_conv_params(op, x, w, b, spec)?;
    let (oh, ow) = (spec.output_extent(h)?, spec.output_extent(wd)?);
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding as isize);
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let xd = x.data();
    let wdata = w.data();
    let mut out = vec![T::ZERO; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
            o.copy_from_slice(b.data());
            for ky in 0..k {
                let iy = (oy * s + ky) as isize - p;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * s + kx) as isize - p;
                    if ix < 0 || ix >= wd as isize {
                        continue;
                    }
                    let xs = &xd[(iy as usize * wd + ix as usize) * cin..][..cin];
                    let wb = &wdata[(ky * k + kx) * cin * cout..][..cin * cout];
                    for (ci, &xv) in xs.iter().enumerate() {
                        axpy(o, xv, &wb[ci * cout..(ci + 1) * cout]);
                    }
                }
            }
        }
    }
    Tensor::new([oh, ow, cout], out)
}

/// Strided transposed convolution, the adjoint of [`conv2d`] with the kernel's
/// channel axes swapped.
pub fn conv_transpose2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
    let op = "conv_transpose2d";
    if spec.direction != ConvDirection::Up {
        return Err(Error::invalid(op, "spec describes a forward convolution"));
    }
    let (h, wd) = check_conv_params(op, x, w, b, spec)?;
    let (oh, ow) = (spec.output_extent(h)?, spec.output_extent(wd)?);
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding as isize);
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let xd = x.data();
    let wdata = w.data();
    let mut out = Vec::with_capacity(oh * ow * cout);
    for _ in 0..oh * ow {
        out.extend_from_slice(b.data());
    }
    for iy in 0..h {
        for ix in 0..wd {
            let xs = &xd[(iy * wd + ix) * cin..][..cin];
            for ky in 0..k {
                let oy = (iy * s + ky) as isize - p;
                if oy < 0 || oy >= oh as isize {
                    continue;
                }
                for kx in 0..k {
                    let ox = (ix * s + kx) as isize - p;
                    if ox < 0 || ox >= ow as isize {
                        continue;
                    }
                    let o = &mut out[(oy as usize * ow + ox as usize) * cout..][..cout];
                    let wb = &wdata[(ky * k + kx) * cin * cout..][..cin * cout];
                    for (ci, &xv) in xs.iter().enumerate() {
                        axpy(o, xv, &wb[ci * cout..(ci + 1) * cout]);
                    }
                }
            }
        }
    }
    Tensor::new([oh, ow, cout], out)
}

/// Stride-1 depthwise convolution with zero "same" padding. `w` is `[k, k, C]`
/// with odd `k`, `b` is `[C]`.
pub fn depthwise_conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let op = "depthwise_conv2d";
    let (h, wd, c) = x.dims3(op)?;
    let [k, kw, wc] = match *w.shape() {
        [a, b, c] => [a, b, c],
        _ => return Err(Error::shape(op, "weight rank", 3, w.rank())),
    };
    if k != kw {
        return Err(Error::shape(op, "kernel width", k, kw));
    }
    if k % 2 == 0 {
        return Err(Error::invalid(op, "kernel extent must be odd"));
    }
    if wc != c {
        return Err(Error::shape(op, "weight channels", c, wc));
    }
    if b.len() != c {
        return Err(Error::shape(op, "bias length", c, b.len()));
    }
    let p = (k / 2) as isize;
    let xd = x.data();
    let wdata = w.data();
    let mut out = vec![T::ZERO; h * wd * c];
    for y in 0..h {
        for xx in 0..wd {
            let o = &mut out[(y * wd + xx) * c..][..c];
            o.copy_from_slice(b.data());
            for ky in 0..k {
                let iy = y as isize + ky as isize - p;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = xx as isize + kx as isize - p;
                    if ix < 0 || ix >= wd as isize {
                        continue;
                    }
                    let xs = &xd[(iy as usize * wd + ix as usize) * c..][..c];
                    let ws = &wdata[(ky * k + kx) * c..][..c];
                    for ((o, &xv), &wv) in o.iter_mut().zip(xs).zip(ws) {
                        *o += xv * wv;
                    }
                }
            }
        }
    }
    Tensor::new([h, wd, c], out)
}

/// Affine map over the trailing axis: `W` is `[C_in, C_out]`, `b` is `[C_out]`.
pub fn linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let op = "linear";
    let (cin, cout) = w.dims2(op)?;
    let c = x.channels();
    if c != cin {
        return Err(Error::shape(op, "input channels", cin, c));
    }
    if b.len() != cout {
        return Err(Error::shape(op, "bias length", cout, b.len()));
    }
    let tokens = x.len().checked_div(cin).unwrap_or(0);
    let mut out = Vec::with_capacity(tokens * cout);
    for t in 0..tokens {
        out.extend_from_slice(b.data());
        let o = &mut out[t * cout..];
        for (ci, &xv) in x.data()[t * cin..(t + 1) * cin].iter().enumerate() {
            axpy(o, xv, &w.data()[ci * cout..(ci + 1) * cout]);
        }
    }
    let mut shape = x.shape().to_vec();
    if let Some(last) = shape.last_mut() {
        *last = cout;
    }
    Tensor::new(shape, out)
}

/// Normalizes every token over its channel axis, then applies `gamma`/`beta`.
pub fn layer_norm<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let op = "layer_norm";
    let c = x.channels();
    if gamma.len() != c {
        return Err(Error::shape(op, "gamma length", c, gamma.len()));
    }
    if beta.len() != c {
        return Err(Error::shape(op, "beta length", c, beta.len()));
    }
    let mut out = x.clone();
    if c == 0 {
        return Ok(out);
    }
    let inv_c = T::ONE / T::from_usize(c);
    for token in out.data_mut().chunks_exact_mut(c) {
        let mut mean = T::ZERO;
        for &v in token.iter() {
            mean += v;
        }
        mean *= inv_c;
        let mut var = T::ZERO;
        for &v in token.iter() {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_c;
        let inv_std = T::ONE / (var + eps).sqrt();
        for ((v, &g), &bb) in token.iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = (*v - mean) * inv_std * g + bb;
        }
    }
    Ok(out)
}

#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

#[inline]
pub fn silu_scalar<T: Real>(x: T) -> T {
    x * sigmoid_scalar(x)
}

/// `ln(1 + e^x)`, evaluated as `max(x, 0) + ln(1 + e^{-|x|})` so large inputs
/// never overflow.
#[inline]
pub fn softplus_scalar<T: Real>(x: T) -> T {
    x.max(T::ZERO) + (-x.abs()).exp().ln_1p()
}

pub fn silu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(silu_scalar)
}

pub fn softplus<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(softplus_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn rand_tensor(rng: &mut StdRng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
    }

    /// Straightforward six-loop convolution with explicit zero padding.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, k: usize, s: usize, p: usize) -> Tensor<f64> {
        let (h, wd, cin) = x.dims3("t").unwrap();
        let cout = b.len();
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (wd + 2 * p - k) / s + 1;
        let mut out = Tensor::zeros([oh, ow, cout]);
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = b.data()[co];
                    for ky in 0..k {
                        for kx in 0..k {
                            for ci in 0..cin {
                                let iy = (oy * s + ky) as i64 - p as i64;
                                let ix = (ox * s + kx) as i64 - p as i64;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.data()[(iy as usize * wd + ix as usize) * cin + ci]
                                        * w.data()[((ky * k + kx) * cin + ci) * cout + co];
                                }
                            }
                        }
                    }
                    out.data_mut()[(oy * ow + ox) * cout + co] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = StdRng::seed_from_u64(1);
        let x = rand_tensor(&mut rng, &[5, 4, 3]);
        let spec = ConvSpec::down(3, 3, 1, 1);
        let mut w = Tensor::zeros(spec.weight_shape());
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        let y = conv2d(&x, &w, &Tensor::zeros([3]), &spec).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_sum_case() {
        let x = Tensor::full([2, 2, 1], 1.0f32);
        let spec = ConvSpec {
            padding: 0,
            ..ConvSpec::down(1, 1, 2, 2)
        };
        let y = conv2d(&x, &Tensor::full([2, 2, 1, 1], 1.0), &Tensor::zeros([1]), &spec).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = StdRng::seed_from_u64(2);
        let x = rand_tensor(&mut rng, &[8, 8, 4]);
        for (k, s) in [(3, 1), (3, 2), (5, 2), (1, 1)] {
            let spec = ConvSpec::down(4, 5, k, s);
            let w = rand_tensor(&mut rng, &spec.weight_shape());
            let b = rand_tensor(&mut rng, &[5]);
            let got = conv2d(&x, &w, &b, &spec).unwrap();
            let want = naive_conv(&x, &w, &b, k, s, k / 2);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_reports_offending_dimension() {
        let x = Tensor::<f32>::zeros([4, 4, 3]);
        let spec = ConvSpec::down(2, 4, 3, 2);
        let err = conv2d(&x, &Tensor::zeros(spec.weight_shape()), &Tensor::zeros([4]), &spec).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                dim: "input channels",
                expected: 2,
                actual: 3,
                ..
            }
        ));
        let spec = ConvSpec::down(3, 4, 3, 2);
        let err = conv2d(&x, &Tensor::zeros([3, 3, 3, 5]), &Tensor::zeros([4]), &spec).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                dim: "weight output channels",
                ..
            }
        ));
    }

    #[test]
    fn transpose_identity_and_broadcast() {
        let mut rng = StdRng::seed_from_u64(3);
        let x = rand_tensor(&mut rng, &[3, 5, 2]);
        let spec = ConvSpec::up(2, 2, 1, 1);
        let mut w = Tensor::zeros(spec.weight_shape());
        w.data_mut()[0] = 1.0;
        w.data_mut()[3] = 1.0;
        assert_eq!(conv_transpose2d(&x, &w, &Tensor::zeros([2]), &spec).unwrap(), x);

        let spec = ConvSpec {
            padding: 0,
            output_padding: 0,
            ..ConvSpec::up(1, 1, 2, 2)
        };
        let y = conv_transpose2d(
            &Tensor::full([1, 1, 1], 2.5f32),
            &Tensor::full([2, 2, 1, 1], 1.0),
            &Tensor::zeros([1]),
            &spec,
        )
        .unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert_eq!(y.data(), &[2.5; 4]);
    }

    #[test]
    fn transpose_is_adjoint_of_conv() {
        let mut rng = StdRng::seed_from_u64(4);
        for (k, s, h) in [(3, 2, 8), (5, 2, 6), (3, 1, 5), (2, 2, 4)] {
            let (cin, cout) = (3, 4);
            let down = ConvSpec::down(cin, cout, k, s);
            let x = rand_tensor(&mut rng, &[h, h, cin]);
            let w = rand_tensor(&mut rng, &down.weight_shape());
            let zeros_out = Tensor::zeros([cout]);
            let ax = conv2d(&x, &w, &zeros_out, &down).unwrap();
            let (oh, ow, _) = ax.dims3("t").unwrap();
            let y = rand_tensor(&mut rng, &[oh, ow, cout]);
            // Swap the channel axes of the kernel for the adjoint.
            let mut wt = Tensor::zeros([k, k, cout, cin]);
            for kk in 0..k * k {
                for ci in 0..cin {
                    for co in 0..cout {
                        wt.data_mut()[(kk * cout + co) * cin + ci] = w.data()[(kk * cin + ci) * cout + co];
                    }
                }
            }
            let up = ConvSpec {
                kernel: k,
                stride: s,
                padding: down.padding,
                output_padding: 0,
                in_channels: cout,
                out_channels: cin,
                direction: ConvDirection::Up,
            };
            // Pick the output padding that recovers the input extent.
            let op = h - up.output_extent(oh).unwrap();
            let up = ConvSpec {
                output_padding: op,
                ..up
            };
            let aty = conv_transpose2d(&y, &wt, &Tensor::zeros([cin]), &up).unwrap();
            assert_eq!(aty.shape(), x.shape());
            let lhs: f64 = ax.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-6 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn up_then_down_extents_round_trip() {
        for h in [1, 2, 7, 16] {
            let up = ConvSpec::up(1, 1, 3, 2);
            let down = ConvSpec::down(1, 1, 3, 2);
            assert_eq!(up.output_extent(h).unwrap(), 2 * h);
            assert_eq!(down.output_extent(2 * h).unwrap(), h);
        }
    }

    #[test]
    fn layer_norm_constant_token_is_zero() {
        let x = Tensor::full([2, 3, 4], 7.0f32);
        let y = layer_norm(&x, &Tensor::full([4], 1.0), &Tensor::zeros([4]), 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_standardizes() {
        let mut rng = StdRng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, &[6, 16]).map(|v| 3.0 * v + 2.0);
        let y = layer_norm(&x, &Tensor::full([16], 1.0), &Tensor::zeros([16]), 1e-12).unwrap();
        for tok in y.data().chunks(16) {
            let mean: f64 = tok.iter().sum::<f64>() / 16.0;
            let var: f64 = tok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
        let err = layer_norm(&x, &Tensor::full([15], 1.0), &Tensor::zeros([16]), 1e-5).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                dim: "gamma length",
                ..
            }
        ));
    }

    #[test]
    fn activations() {
        assert_eq!(silu_scalar(0.0f32), 0.0);
        // ln(1 + e^20) = 20 + ln(1 + e^-20); the second term is 2.0611536e-9.
        let sp = softplus_scalar(20.0f64);
        assert!((sp - (20.0 + 2.061_153_620_314_381e-9)).abs() < 1e-8);
        assert!((softplus_scalar(0.0f64) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus_scalar(1000.0f32), 1000.0);
        assert!(softplus_scalar(-1000.0f32) >= 0.0);
        assert!(silu_scalar(-1000.0f32).is_finite());
    }

    #[test]
    fn linear_shapes_and_values() {
        let x = Tensor::new([2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new([2, 3], vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let b = Tensor::new([3], vec![0.5, 0.0, -1.0]).unwrap();
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert_eq!(y.data(), &[1.5, 2.0, 2.0, 3.5, 4.0, 6.0]);
    }

    fn naive_depthwise(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (h, wd, c) = x.dims3("t").unwrap();
        let k = w.shape()[0];
        let p = (k / 2) as i64;
        Tensor::from_fn([h, wd, c], |i| {
            let (y, xx, ch) = (i / (wd * c), (i / c) % wd, i % c);
            let mut acc = b.data()[ch];
            for ky in 0..k {
                for kx in 0..k {
                    let iy = y as i64 + ky as i64 - p;
                    let ix = xx as i64 + kx as i64 - p;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                        acc += x.data()[(iy as usize * wd + ix as usize) * c + ch] * w.data()[(ky * k + kx) * c + ch];
                    }
                }
            }
            acc
        })
    }

    fn rel_close(a: &Tensor<f64>, b: &Tensor<f64>, tol: f64) -> bool {
        a.shape() == b.shape()
            && a.data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn ops_match_reference_loops(seed in any::<u64>(), h in 1usize..7, w in 1usize..7, cin in 1usize..5, cout in 1usize..5) {
            let mut rng = StdRng::seed_from_u64(seed);
            let x = rand_tensor(&mut rng, &[h, w, cin]);

            let spec = ConvSpec::down(cin, cout, 3, 1 + (seed % 2) as usize);
            let wt = rand_tensor(&mut rng, &spec.weight_shape());
            let b = rand_tensor(&mut rng, &[cout]);
            prop_assert!(rel_close(&conv2d(&x, &wt, &b, &spec).unwrap(), &naive_conv(&x, &wt, &b, 3, spec.stride, 1), 1e-5));

            let dw = rand_tensor(&mut rng, &[3, 3, cin]);
            let db = rand_tensor(&mut rng, &[cin]);
            prop_assert!(rel_close(&depthwise_conv2d(&x, &dw, &db).unwrap(), &naive_depthwise(&x, &dw, &db), 1e-5));

            let lw = rand_tensor(&mut rng, &[cin, cout]);
            let got = linear(&x, &lw, &b).unwrap();
            let want = Tensor::from_fn([h, w, cout], |i| {
                let (t, co) = (i / cout, i % cout);
                b.data()[co] + (0..cin).map(|ci| x.data()[t * cin + ci] * lw.data()[ci * cout + co]).sum::<f64>()
            });
            prop_assert!(rel_close(&got, &want, 1e-5));

            let g = rand_tensor(&mut rng, &[cin]);
            let got = layer_norm(&x, &g, &db, 1e-5).unwrap();
            let want = Tensor::from_fn([h, w, cin], |i| {
                let t = i / cin;
                let tok = &x.data()[t * cin..(t + 1) * cin];
                let m = tok.iter().sum::<f64>() / cin as f64;
                let v = tok.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / cin as f64;
                (x.data()[i] - m) / (v + 1e-5).sqrt() * g.data()[i % cin] + db.data()[i % cin]
            });
            prop_assert!(rel_close(&got, &want, 1e-5));

            let s = silu(&x);
            let sp = softplus(&x);
            for ((&v, &a), &b) in x.data().iter().zip(s.data()).zip(sp.data()) {
                prop_assert!((a - v / (1.0 + (-v).exp())).abs() < 1e-12);
                prop_assert!((b - (1.0 + v.exp()).ln()).abs() < 1e-12);
            }

            // Purity: identical inputs give identical bits.
            prop_assert_eq!(conv2d(&x, &wt, &b, &spec).unwrap(), conv2d(&x, &wt, &b, &spec).unwrap());
        }
    }
}
