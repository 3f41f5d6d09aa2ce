use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolKind {
    /// Non-overlapping `size x size` max pooling (stride = size).
    Max { size: usize },
    /// Average over the standard adaptive region partition.
    AdaptiveAvg { height: usize, width: usize },
}

impl PoolKind {
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match *self {
            PoolKind::Max { size } => {
                if size == 0 || size > h || size > w {
                    return Err(Error::config(format!(
                        "max pool window {size} does not fit {h}x{w} input"
                    )));
                }
                Ok((h / size, w / size))
            }
            PoolKind::AdaptiveAvg { height, width } => {
                if height == 0 || width == 0 || height > h || width > w {
                    return Err(Error::config(format!(
                        "adaptive pool target {height}x{width} is larger than the {h}x{w} input"
                    )));
                }
                Ok((height, width))
            }
        }
    }
}

/// `[floor(i*len/out), ceil((i+1)*len/out))`
fn adaptive_region(i: usize, len: usize, out: usize) -> (usize, usize) {
    let start = i * len / out;
    let end = ((i + 1) * len).div_ceil(out);
    (start, end)
}

/// Flat input index of the maximum in every pooling window; the first
/// occurrence wins ties.
fn argmax_indices(input: &Tensor, size: usize, oh: usize, ow: usize) -> Vec<usize> {
    let [n, c, _, _] = input.shape();
    let mut idx = Vec::with_capacity(n * c * oh * ow);
    for s in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = input.offset(s, ch, y * size, x * size);
                    for dy in 0..size {
                        for dx in 0..size {
                            let o = input.offset(s, ch, y * size + dy, x * size + dx);
                            if input.data()[o] > input.data()[best] {
                                best = o;
                            }
                        }
                    }
                    idx.push(best);
                }
            }
        }
    }
    idx
}

pub fn pool2d(input: &Tensor, kind: PoolKind) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    let (oh, ow) = kind.output_hw(h, w)?;
    match kind {
        PoolKind::Max { size } => {
            let idx = argmax_indices(input, size, oh, ow);
            let data = idx.iter().map(|&i| input.data()[i]).collect();
            Tensor::from_vec([n, c, oh, ow], data)
        }
        PoolKind::AdaptiveAvg { .. } => {
            let mut out = Tensor::zeros([n, c, oh, ow]);
            for s in 0..n {
                for ch in 0..c {
                    for y in 0..oh {
                        let (y0, y1) = adaptive_region(y, h, oh);
                        for x in 0..ow {
                            let (x0, x1) = adaptive_region(x, w, ow);
                            let mut acc = 0.0;
                            for yy in y0..y1 {
                                for xx in x0..x1 {
                                    acc += input.at(s, ch, yy, xx);
                                }
                            }
                            let o = out.offset(s, ch, y, x);
                            out.data_mut()[o] = acc / ((y1 - y0) * (x1 - x0)) as f64;
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

pub fn pool2d_backward(input: &Tensor, kind: PoolKind, grad_output: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    let (oh, ow) = kind.output_hw(h, w)?;
    if grad_output.shape() != [n, c, oh, ow] {
        return Err(Error::shape(format!(
            "pool backward: upstream gradient {:?}, expected {:?}",
            grad_output.shape(),
            [n, c, oh, ow]
        )));
    }
    let mut grad_in = Tensor::zeros(input.shape());
    match kind {
        PoolKind::Max { size } => {
            let idx = argmax_indices(input, size, oh, ow);
            for (g, &i) in grad_output.data().iter().zip(&idx) {
                grad_in.data_mut()[i] += g;
            }
        }
        PoolKind::AdaptiveAvg { .. } => {
            for s in 0..n {
                for ch in 0..c {
                    for y in 0..oh {
                        let (y0, y1) = adaptive_region(y, h, oh);
                        for x in 0..ow {
                            let (x0, x1) = adaptive_region(x, w, ow);
                            let g = grad_output.at(s, ch, y, x) / ((y1 - y0) * (x1 - x0)) as f64;
                            for yy in y0..y1 {
                                for xx in x0..x1 {
                                    let o = grad_in.offset(s, ch, yy, xx);
                                    grad_in.data_mut()[o] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}
