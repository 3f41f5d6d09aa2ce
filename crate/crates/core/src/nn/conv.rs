//! 2-D convolution and transposed convolution with hand-derived gradients.
//!
//! Both layers relate a "small" grid to a "large" grid through
//! `large = small * stride + k - padding`: for `conv2d` the small grid is the
//! output, for `conv_transpose2d` it is the input. The three plane kernels
//! below (gather, scatter, correlate) cover the forward pass and both
//! gradients of either layer.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Only meaningful for transposed convolution.
    pub output_padding: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
            output_padding: 0,
        }
    }

    pub fn with_output_padding(mut self, output_padding: usize) -> Self {
        self.output_padding = output_padding;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::config(format!(
                "kernel ({}) and stride ({}) must be positive",
                self.kernel, self.stride
            )));
        }
        Ok(())
    }

    /// Spatial output length of a convolution over `len` inputs.
    pub fn conv_output_len(&self, len: usize) -> Result<usize> {
        self.validate()?;
        let padded = len + 2 * self.padding;
        if len == 0 || padded < self.kernel {
            return Err(Error::config(format!(
                "kernel {} does not fit input length {len} with padding {}",
                self.kernel, self.padding
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// Spatial output length of a transposed convolution over `len` inputs.
    pub fn transpose_output_len(&self, len: usize) -> Result<usize> {
        self.validate()?;
        if len == 0 {
            return Err(Error::config("transposed convolution over an empty input"));
        }
        let out = (len as i64 - 1) * self.stride as i64 - 2 * self.padding as i64
            + self.kernel as i64
            + self.output_padding as i64;
        if out <= 0 {
            return Err(Error::config(format!(
                "transposed convolution output length {out} is not positive \
                 (input {len}, kernel {}, stride {}, padding {}, output padding {})",
                self.kernel, self.stride, self.padding, self.output_padding
            )));
        }
        Ok(out as usize)
    }
}

/// Weights and bias of a convolution layer.
///
/// `conv2d` stores weights as `[out][in][k][k]`; `conv_transpose2d` stores
/// them as `[in][out][k][k]`, so a transposed layer built from the same blob
/// is the exact adjoint of the forward one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; in_channels * out_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// Kaiming-style normal init with the given fan-in; zero bias.
    pub fn kaiming<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Self {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut p = Self::zeros(in_channels, out_channels, kernel);
        for w in &mut p.weight {
            *w = normal.sample(rng);
        }
        p
    }

    fn check(&self) -> Result<()> {
        let k2 = self.kernel * self.kernel;
        if self.weight.len() != self.in_channels * self.out_channels * k2 || self.bias.len() != self.out_channels {
            return Err(Error::shape(format!(
                "conv params declare {}->{} channels, kernel {}, but hold {} weights and {} biases",
                self.in_channels,
                self.out_channels,
                self.kernel,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Copy)]
struct PlaneGeom {
    small_h: usize,
    small_w: usize,
    large_h: usize,
    large_w: usize,
    stride: usize,
    padding: usize,
}

/// Small-grid indices `s` with `0 <= s * stride + offset - padding < large_len`.
#[inline]
fn valid_range(
    offset: usize,
    padding: usize,
    stride: usize,
    large_len: usize,
    small_len: usize,
) -> std::ops::Range<usize> {
    let lo = if padding > offset {
        (padding - offset).div_ceil(stride)
    } else {
        0
    };
    let limit = large_len + padding;
    let hi = if limit > offset {
        ((limit - offset - 1) / stride + 1).min(small_len)
    } else {
        0
    };
    lo..hi.max(lo)
}

impl PlaneGeom {
    /// Calls `f(small_row_start, large_start, xs, stride)` once per output row
    /// touched by kernel offset `(ky, kx)`. `xs` is the valid range of small
    /// columns; large columns advance by `stride`.
    #[inline]
    fn for_each_row<F: FnMut(usize, usize, std::ops::Range<usize>, usize)>(&self, ky: usize, kx: usize, mut f: F) {
        let ys = valid_range(ky, self.padding, self.stride, self.large_h, self.small_h);
        let xs = valid_range(kx, self.padding, self.stride, self.large_w, self.small_w);
        if xs.is_empty() {
            return;
        }
        for sy in ys {
            let ly = sy * self.stride + ky - self.padding;
            let lx0 = xs.start * self.stride + kx - self.padding;
            f(sy * self.small_w, ly * self.large_w + lx0, xs.clone(), self.stride);
        }
    }

    /// `small[s] += w * large[l]`
    fn gather(&self, small: &mut [f64], large: &[f64], w: f64, ky: usize, kx: usize) {
        self.for_each_row(ky, kx, |srow, lstart, xs, stride| {
            let dst = &mut small[srow + xs.start..srow + xs.end];
            for (i, d) in dst.iter_mut().enumerate() {
                *d += w * large[lstart + i * stride];
            }
        });
    }

    /// `large[l] += w * small[s]`
    fn scatter(&self, large: &mut [f64], small: &[f64], w: f64, ky: usize, kx: usize) {
        self.for_each_row(ky, kx, |srow, lstart, xs, stride| {
            let src = &small[srow + xs.start..srow + xs.end];
            for (i, s) in src.iter().enumerate() {
                large[lstart + i * stride] += w * s;
            }
        });
    }

    /// `sum large[l] * small[s]`
    fn correlate(&self, large: &[f64], small: &[f64], ky: usize, kx: usize) -> f64 {
        let mut acc = 0.0;
        self.for_each_row(ky, kx, |srow, lstart, xs, stride| {
            let src = &small[srow + xs.start..srow + xs.end];
            for (i, s) in src.iter().enumerate() {
                acc += large[lstart + i * stride] * s;
            }
        });
        acc
    }
}

fn check_input(input: &Tensor, params: &ConvParams, what: &str) -> Result<()> {
    params.check()?;
    if input.channels() != params.in_channels {
        return Err(Error::shape(format!(
            "{what}: input has {} channels, layer expects {}",
            input.channels(),
            params.in_channels
        )));
    }
    Ok(())
}

pub fn conv2d(input: &Tensor, params: &ConvParams, geom: ConvGeometry) -> Result<Tensor> {
    check_input(input, params, "conv2d")?;
    let [n, cin, h, w] = input.shape();
    let oh = geom.conv_output_len(h)?;
    let ow = geom.conv_output_len(w)?;
    let cout = params.out_channels;
    let k = params.kernel;
    let pg = PlaneGeom {
        small_h: oh,
        small_w: ow,
        large_h: h,
        large_w: w,
        stride: geom.stride,
        padding: geom.padding,
    };
    let mut out = Tensor::zeros([n, cout, oh, ow]);
    let in_len = cin * h * w;
    let out_plane = oh * ow;
    out.data_mut()
        .par_chunks_mut(cout * out_plane)
        .zip(input.data().par_chunks(in_len))
        .for_each(|(out_s, in_s)| {
            for o in 0..cout {
                let dst = &mut out_s[o * out_plane..(o + 1) * out_plane];
                dst.fill(params.bias[o]);
                for c in 0..cin {
                    let src = &in_s[c * h * w..(c + 1) * h * w];
                    let wbase = (o * cin + c) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            pg.gather(dst, src, params.weight[wbase + ky * k + kx], ky, kx);
                        }
                    }
                }
            }
        });
    Ok(out)
}

pub fn conv2d_backward(
    input: &Tensor,
    params: &ConvParams,
    geom: ConvGeometry,
    grad_output: &Tensor,
) -> Result<ConvGrads> {
    check_input(input, params, "conv2d backward")?;
    let [n, cin, h, w] = input.shape();
    let oh = geom.conv_output_len(h)?;
    let ow = geom.conv_output_len(w)?;
    let cout = params.out_channels;
    if grad_output.shape() != [n, cout, oh, ow] {
        return Err(Error::shape(format!(
            "conv2d backward: upstream gradient {:?}, expected {:?}",
            grad_output.shape(),
            [n, cout, oh, ow]
        )));
    }
    let k = params.kernel;
    let pg = PlaneGeom {
        small_h: oh,
        small_w: ow,
        large_h: h,
        large_w: w,
        stride: geom.stride,
        padding: geom.padding,
    };
    let in_plane = h * w;
    let out_plane = oh * ow;

    let mut grad_in = Tensor::zeros(input.shape());
    grad_in
        .data_mut()
        .par_chunks_mut(cin * in_plane)
        .zip(grad_output.data().par_chunks(cout * out_plane))
        .for_each(|(gi, go)| {
            for o in 0..cout {
                let g = &go[o * out_plane..(o + 1) * out_plane];
                for c in 0..cin {
                    let dst = &mut gi[c * in_plane..(c + 1) * in_plane];
                    let wbase = (o * cin + c) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            pg.scatter(dst, g, params.weight[wbase + ky * k + kx], ky, kx);
                        }
                    }
                }
            }
        });

    let mut grad_w = vec![0.0; params.weight.len()];
    grad_w.par_chunks_mut(cin * k * k).enumerate().for_each(|(o, gw)| {
        for s in 0..n {
            let g = &grad_output.sample(s)[o * out_plane..(o + 1) * out_plane];
            let x = input.sample(s);
            for c in 0..cin {
                let src = &x[c * in_plane..(c + 1) * in_plane];
                for ky in 0..k {
                    for kx in 0..k {
                        gw[(c * k + ky) * k + kx] += pg.correlate(src, g, ky, kx);
                    }
                }
            }
        }
    });

    let grad_b = channel_sums(grad_output);
    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    })
}

pub fn conv_transpose2d(input: &Tensor, params: &ConvParams, geom: ConvGeometry) -> Result<Tensor> {
    check_input(input, params, "conv_transpose2d")?;
    let [n, cin, h, w] = input.shape();
    let oh = geom.transpose_output_len(h)?;
    let ow = geom.transpose_output_len(w)?;
    let cout = params.out_channels;
    let k = params.kernel;
    let pg = PlaneGeom {
        small_h: h,
        small_w: w,
        large_h: oh,
        large_w: ow,
        stride: geom.stride,
        padding: geom.padding,
    };
    let in_plane = h * w;
    let out_plane = oh * ow;
    let mut out = Tensor::zeros([n, cout, oh, ow]);
    out.data_mut()
        .par_chunks_mut(cout * out_plane)
        .zip(input.data().par_chunks(cin * in_plane))
        .for_each(|(out_s, in_s)| {
            for o in 0..cout {
                let dst = &mut out_s[o * out_plane..(o + 1) * out_plane];
                dst.fill(params.bias[o]);
                for c in 0..cin {
                    let src = &in_s[c * in_plane..(c + 1) * in_plane];
                    let wbase = (c * cout + o) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            pg.scatter(dst, src, params.weight[wbase + ky * k + kx], ky, kx);
                        }
                    }
                }
            }
        });
    Ok(out)
}

pub fn conv_transpose2d_backward(
    input: &Tensor,
    params: &ConvParams,
    geom: ConvGeometry,
    grad_output: &Tensor,
) -> Result<ConvGrads> {
    check_input(input, params, "conv_transpose2d backward")?;
    let [n, cin, h, w] = input.shape();
    let oh = geom.transpose_output_len(h)?;
    let ow = geom.transpose_output_len(w)?;
    let cout = params.out_channels;
    if grad_output.shape() != [n, cout, oh, ow] {
        return Err(Error::shape(format!(
            "conv_transpose2d backward: upstream gradient {:?}, expected {:?}",
            grad_output.shape(),
            [n, cout, oh, ow]
        )));
    }
    let k = params.kernel;
    let pg = PlaneGeom {
        small_h: h,
        small_w: w,
        large_h: oh,
        large_w: ow,
        stride: geom.stride,
        padding: geom.padding,
    };
    let in_plane = h * w;
    let out_plane = oh * ow;

    let mut grad_in = Tensor::zeros(input.shape());
    grad_in
        .data_mut()
        .par_chunks_mut(cin * in_plane)
        .zip(grad_output.data().par_chunks(cout * out_plane))
        .for_each(|(gi, go)| {
            for c in 0..cin {
                let dst = &mut gi[c * in_plane..(c + 1) * in_plane];
                for o in 0..cout {
                    let g = &go[o * out_plane..(o + 1) * out_plane];
                    let wbase = (c * cout + o) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            pg.gather(dst, g, params.weight[wbase + ky * k + kx], ky, kx);
                        }
                    }
                }
            }
        });

    let mut grad_w = vec![0.0; params.weight.len()];
    grad_w.par_chunks_mut(cout * k * k).enumerate().for_each(|(c, gw)| {
        for s in 0..n {
            let x = &input.sample(s)[c * in_plane..(c + 1) * in_plane];
            let go = grad_output.sample(s);
            for o in 0..cout {
                let g = &go[o * out_plane..(o + 1) * out_plane];
                for ky in 0..k {
                    for kx in 0..k {
                        gw[(o * k + ky) * k + kx] += pg.correlate(g, x, ky, kx);
                    }
                }
            }
        }
    });

    let grad_b = channel_sums(grad_output);
    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    })
}

/// Per-channel sum over batch and space, in a fixed order.
pub(crate) fn channel_sums(t: &Tensor) -> Vec<f64> {
    let [n, c, h, w] = t.shape();
    let plane = h * w;
    let mut sums = vec![0.0; c];
    for s in 0..n {
        let x = t.sample(s);
        for (ch, acc) in sums.iter_mut().enumerate() {
            *acc += x[ch * plane..(ch + 1) * plane].iter().sum::<f64>();
        }
    }
    sums
}
