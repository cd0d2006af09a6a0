use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;

/// Dense row-major array. Image-like tensors use the `[H, W, C]` layout and
/// token sequences use `[L, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("Tensor::new", "data length", expected, data.len()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::ZERO)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor {
            data: (0..n).map(&mut f).collect(),
            shape,
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Size of the trailing (channel) axis.
    pub fn channels(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// `(H, W, C)` of a rank-3 tensor.
    pub fn dims3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::shape(op, "rank", 3, self.shape.len())),
        }
    }

    /// `(L, C)` of a rank-2 tensor.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [l, c] => Ok((l, c)),
            _ => Err(Error::shape(op, "rank", 2, self.shape.len())),
        }
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            for (i, (&a, &b)) in self.shape.iter().zip(&other.shape).enumerate() {
                if a != b {
                    let dim = ["axis 0", "axis 1", "axis 2", "axis 3"]
                        .get(i)
                        .copied()
                        .unwrap_or("axis");
                    return Err(Error::shape(op, dim, a, b));
                }
            }
            return Err(Error::shape(op, "rank", self.shape.len(), other.shape.len()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenates rank-3 tensors with equal `H, W` along channels.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::invalid("concat_channels", "no inputs"));
        };
        let (h, w, _) = first.dims3("concat_channels")?;
        let mut total = 0;
        for p in parts {
            let (ph, pw, pc) = p.dims3("concat_channels")?;
            if ph != h {
                return Err(Error::shape("concat_channels", "height", h, ph));
            }
            if pw != w {
                return Err(Error::shape("concat_channels", "width", w, pw));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(h * w * total);
        for pos in 0..h * w {
            for p in parts {
                let c = p.channels();
                data.extend_from_slice(&p.data[pos * c..(pos + 1) * c]);
            }
        }
        Tensor::new([h, w, total], data)
    }

    /// Channels `[start, end)` of a rank-3 tensor.
    pub fn channel_slice(&self, start: usize, end: usize) -> Result<Self> {
        let (h, w, c) = self.dims3("channel_slice")?;
        if start > end || end > c {
            return Err(Error::invalid("channel_slice", "channel range out of bounds"));
        }
        let width = end - start;
        let mut data = Vec::with_capacity(h * w * width);
        for pos in 0..h * w {
            data.extend_from_slice(&self.data[pos * c + start..pos * c + end]);
        }
        Tensor::new([h, w, width], data)
    }
}

impl Tensor<f32> {
    /// Little-endian bytes of the values, without the shape.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}
