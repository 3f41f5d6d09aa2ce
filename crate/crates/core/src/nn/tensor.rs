use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Dense `N x C x H x W` array of f64, stored in row-major (NCHW) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "tensor of shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Shape of one sample, `(C, H, W)`.
    pub fn sample_shape(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, h, w)]
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{what}: shape {:?} does not match {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Samples picked out by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Tensor {
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor {
            shape: [indices.len(), self.shape[1], self.shape[2], self.shape[3]],
            data,
        }
    }

    /// Single channel of every sample, as an `N x 1 x H x W` tensor.
    pub fn channel(&self, c: usize) -> Result<Tensor> {
        let [n, ch, h, w] = self.shape;
        if c >= ch {
            return Err(Error::shape(format!("channel {c} out of range for {ch} channels")));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * plane);
        for i in 0..n {
            let start = self.offset(i, c, 0, 0);
            data.extend_from_slice(&self.data[start..start + plane]);
        }
        Ok(Tensor {
            shape: [n, 1, h, w],
            data,
        })
    }

    /// Top-left `height x width` window of every channel.
    pub fn crop(&self, height: usize, width: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if height > h || width > w {
            return Err(Error::shape(format!("cannot crop {h}x{w} to larger {height}x{width}")));
        }
        if height == h && width == w {
            return Ok(self.clone());
        }
        let mut out = Tensor::zeros([n, c, height, width]);
        for i in 0..n {
            for ch in 0..c {
                for y in 0..height {
                    let src = self.offset(i, ch, y, 0);
                    let dst = out.offset(i, ch, y, 0);
                    out.data[dst..dst + width].copy_from_slice(&self.data[src..src + width]);
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of [`crop`](Self::crop): zero-pads back to `height x width`.
    pub fn uncrop(&self, height: usize, width: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if height < h || width < w {
            return Err(Error::shape(format!("cannot pad {h}x{w} to smaller {height}x{width}")));
        }
        let mut out = Tensor::zeros([n, c, height, width]);
        for i in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    let src = self.offset(i, ch, y, 0);
                    let dst = out.offset(i, ch, y, 0);
                    out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
                }
            }
        }
        Ok(out)
    }

    /// One row per sample, all of C*H*W flattened.
    pub fn flatten(&self) -> Matrix {
        Matrix::from_vec(self.shape[0], self.sample_len(), self.data.clone())
            .expect("tensor length is consistent with its shape")
    }

    pub fn reshape(self, shape: [usize; 4]) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data)
    }

    /// Stack rows into an `N x C x H x W` tensor.
    pub fn from_samples(sample_shape: [usize; 3], samples: &[&[f64]]) -> Result<Tensor> {
        let len: usize = sample_shape.iter().product();
        let mut data = Vec::with_capacity(samples.len() * len);
        for (i, s) in samples.iter().enumerate() {
            if s.len() != len {
                return Err(Error::shape(format!(
                    "sample {i} has {} values, expected {len}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Ok(Tensor {
            shape: [samples.len(), sample_shape[0], sample_shape[1], sample_shape[2]],
            data,
        })
    }
}
