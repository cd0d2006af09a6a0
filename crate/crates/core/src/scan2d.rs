//! Four-direction 2D selective scan.
//!
//! A feature map is flattened along four traversals, each sequence is mixed
//! by its own S6 operator, the results are folded back onto the grid and
//! summed in direction order.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::ssm::{s6_forward_with, S6Weights, ScanMode};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanPattern {
    /// Left to right, top to bottom.
    RowMajor,
    RowMajorReversed,
    /// Top to bottom, left to right.
    ColMajor,
    ColMajorReversed,
}

impl ScanPattern {
    pub const ALL: [ScanPattern; 4] = [
        ScanPattern::RowMajor,
        ScanPattern::RowMajorReversed,
        ScanPattern::ColMajor,
        ScanPattern::ColMajorReversed,
    ];

    /// Grid position `(row, col)` visited at step `i` of an `h`×`w` traversal.
    #[inline]
    pub fn position(self, i: usize, h: usize, w: usize) -> (usize, usize) {
        let n = h * w;
        match self {
            ScanPattern::RowMajor => (i / w, i % w),
            ScanPattern::RowMajorReversed => ((n - 1 - i) / w, (n - 1 - i) % w),
            ScanPattern::ColMajor => (i % h, i / h),
            ScanPattern::ColMajorReversed => ((n - 1 - i) % h, (n - 1 - i) / h),
        }
    }

    /// Sequence indices in visiting order, as flat raster offsets.
    pub fn order(self, h: usize, w: usize) -> Vec<usize> {
        (0..h * w)
            .map(|i| {
                let (r, c) = self.position(i, h, w);
                r * w + c
            })
            .collect()
    }

    /// The traversal that visits the grid in exactly reversed order.
    pub fn reversed(self) -> Self {
        match self {
            ScanPattern::RowMajor => ScanPattern::RowMajorReversed,
            ScanPattern::RowMajorReversed => ScanPattern::RowMajor,
            ScanPattern::ColMajor => ScanPattern::ColMajorReversed,
            ScanPattern::ColMajorReversed => ScanPattern::ColMajor,
        }
    }
}

/// Flattens `f: [H, W, C]` into `[H·W, C]` along `pat`.
pub fn unfold<T: Real>(f: &Tensor<T>, pat: ScanPattern) -> Result<Tensor<T>> {
    let (h, w, c) = f.dims3("unfold")?;
    if h == 0 || w == 0 {
        return Err(Error::invalid("unfold", "feature map must be at least 1x1"));
    }
    let mut out = Vec::with_capacity(h * w * c);
    for src in pat.order(h, w) {
        out.extend_from_slice(&f.data()[src * c..(src + 1) * c]);
    }
    Tensor::new([h * w, c], out)
}

/// Inverse of [`unfold`]: scatters `s: [H·W, C]` back onto an `h`×`w` grid.
pub fn fold<T: Real>(s: &Tensor<T>, pat: ScanPattern, h: usize, w: usize) -> Result<Tensor<T>> {
    let (n, c) = s.dims2("fold")?;
    if n != h * w {
        return Err(Error::shape("fold", "sequence length", h * w, n));
    }
    let mut out = Tensor::zeros([h, w, c]);
    fold_add(&mut out, s, pat)?;
    Ok(out)
}

fn fold_add<T: Real>(acc: &mut Tensor<T>, s: &Tensor<T>, pat: ScanPattern) -> Result<()> {
    let (h, w, c) = acc.dims3("fold")?;
    let (n, sc) = s.dims2("fold")?;
    if n != h * w {
        return Err(Error::shape("fold", "sequence length", h * w, n));
    }
    if sc != c {
        return Err(Error::shape("fold", "channels", c, sc));
    }
    let dst = acc.data_mut();
    for (i, pos) in pat.order(h, w).into_iter().enumerate() {
        for (o, &v) in dst[pos * c..(pos + 1) * c]
            .iter_mut()
            .zip(&s.data()[i * c..(i + 1) * c])
        {
            *o += v;
        }
    }
    Ok(())
}

/// S6 parameters for the four directions: either one tied set or one per
/// direction, in [`ScanPattern::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan2dWeights<T = f32> {
    sets: Vec<S6Weights<T>>,
}

impl<T: Real> Scan2dWeights<T> {
    pub fn separate(sets: [S6Weights<T>; 4]) -> Self {
        Scan2dWeights { sets: sets.into() }
    }

    pub fn tied(w: S6Weights<T>) -> Self {
        Scan2dWeights { sets: alloc::vec![w] }
    }

    pub fn is_tied(&self) -> bool {
        self.sets.len() == 1
    }

    pub fn direction(&self, k: usize) -> &S6Weights<T> {
        &self.sets[k.min(self.sets.len() - 1)]
    }

    pub fn direction_mut(&mut self, k: usize) -> &mut S6Weights<T> {
        let last = self.sets.len() - 1;
        &mut self.sets[k.min(last)]
    }

    pub fn channels(&self) -> usize {
        self.sets[0].channels()
    }
}

/// `f' = Σ_k fold(S6_k(unfold(f, p_k)), p_k)`, summed in direction order.
pub fn scan2d<T: Real>(f: &Tensor<T>, w: &Scan2dWeights<T>) -> Result<Tensor<T>> {
    scan2d_with(f, w, ScanMode::Sequential)
}

pub fn scan2d_with<T: Real>(f: &Tensor<T>, w: &Scan2dWeights<T>, mode: ScanMode) -> Result<Tensor<T>> {
    let (h, wd, c) = f.dims3("scan2d")?;
    if c != w.channels() {
        return Err(Error::shape("scan2d", "channels", w.channels(), c));
    }
    let mut out = Tensor::zeros([h, wd, c]);
    for (k, pat) in ScanPattern::ALL.into_iter().enumerate() {
        let seq = unfold(f, pat)?;
        let mixed = s6_forward_with(&seq, w.direction(k), mode)?;
        fold_add(&mut out, &mixed, pat)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn two_by_two_table() {
        // a=f[0][0], b=f[0][1], c=f[1][0], d=f[1][1] as values 1..4
        let f = Tensor::new([2, 2, 1], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let seq = |p| unfold(&f, p).unwrap().into_data();
        assert_eq!(seq(ScanPattern::RowMajor), [1.0, 2.0, 3.0, 4.0]);
        assert_eq!(seq(ScanPattern::RowMajorReversed), [4.0, 3.0, 2.0, 1.0]);
        assert_eq!(seq(ScanPattern::ColMajor), [1.0, 3.0, 2.0, 4.0]);
        assert_eq!(seq(ScanPattern::ColMajorReversed), [4.0, 2.0, 3.0, 1.0]);
    }

    #[test]
    fn degenerate_grids_coincide() {
        for (h, w) in [(1, 5), (4, 1)] {
            assert_eq!(ScanPattern::RowMajor.order(h, w), ScanPattern::ColMajor.order(h, w));
        }
    }

    #[test]
    fn fold_rejects_wrong_length() {
        let s = Tensor::<f32>::zeros([5, 2]);
        assert!(matches!(
            fold(&s, ScanPattern::RowMajor, 2, 3),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn position_table_matches_index_arithmetic() {
        let (h, w) = (3, 5);
        let n = h * w;
        let idx = Tensor::from_fn([n, 1], |i| i as f64);
        for pat in ScanPattern::ALL {
            let grid = fold(&idx, pat, h, w).unwrap();
            for r in 0..h {
                for c in 0..w {
                    let want = match pat {
                        ScanPattern::RowMajor => r * w + c,
                        ScanPattern::RowMajorReversed => n - 1 - (r * w + c),
                        ScanPattern::ColMajor => c * h + r,
                        ScanPattern::ColMajorReversed => n - 1 - (c * h + r),
                    };
                    assert_eq!(grid.data()[r * w + c], want as f64);
                }
            }
        }
    }
}
