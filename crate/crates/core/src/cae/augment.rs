//! Random flips and small rotations applied independently per image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Uniform;

use crate::nn::Tensor;

pub const MAX_ROTATION_DEG: f64 = 15.0;
pub const FLIP_PROBABILITY: f64 = 0.5;

/// Rotation angle in degrees, uniform on `[-15, 15]`.
pub fn sample_rotation_deg<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Uniform::new_inclusive(-MAX_ROTATION_DEG, MAX_ROTATION_DEG).expect("finite bounds"))
}

/// Mirror every channel left-to-right.
pub fn flip_horizontal(image: &mut [f64], channels: usize, height: usize, width: usize) {
    for c in 0..channels {
        for y in 0..height {
            let row = (c * height + y) * width;
            image[row..row + width].reverse();
        }
    }
}

/// Mirror every channel top-to-bottom.
pub fn flip_vertical(image: &mut [f64], channels: usize, height: usize, width: usize) {
    for c in 0..channels {
        let plane = c * height * width;
        for y in 0..height / 2 {
            let (top, bottom) = (plane + y * width, plane + (height - 1 - y) * width);
            for x in 0..width {
                image.swap(top + x, bottom + x);
            }
        }
    }
}

/// Rotate about the image centre with bilinear interpolation; samples that
/// fall outside the source read as zero.
pub fn rotate(image: &[f64], channels: usize, height: usize, width: usize, degrees: f64) -> Vec<f64> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; image.len()];
    let fetch = |c: usize, y: i64, x: i64| -> f64 {
        if y < 0 || x < 0 || y >= height as i64 || x >= width as i64 {
            0.0
        } else {
            image[(c * height + y as usize) * width + x as usize]
        }
    };
    for y in 0..height {
        for x in 0..width {
            // inverse map: output pixel back into the source frame
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sy = cos * dy - sin * dx + cy;
            let sx = sin * dy + cos * dx + cx;
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            let (y0, x0) = (y0 as i64, x0 as i64);
            for c in 0..channels {
                let v = (1.0 - fy) * ((1.0 - fx) * fetch(c, y0, x0) + fx * fetch(c, y0, x0 + 1))
                    + fy * ((1.0 - fx) * fetch(c, y0 + 1, x0) + fx * fetch(c, y0 + 1, x0 + 1));
                out[(c * height + y) * width + x] = v;
            }
        }
    }
    out
}

/// Each image is flipped horizontally and vertically with probability 0.5
/// each, then rotated by an angle drawn from `[-15, 15]` degrees. Values in
/// `[0, 1]` stay in `[0, 1]`. With `enabled == false` the batch is returned
/// untouched.
pub fn augment_batch(images: &Tensor, seed: u64, enabled: bool) -> Tensor {
    if !enabled {
        return images.clone();
    }
    let [n, c, h, w] = images.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = images.clone();
    for s in 0..n {
        let flip_h = rng.random_bool(FLIP_PROBABILITY);
        let flip_v = rng.random_bool(FLIP_PROBABILITY);
        let angle = sample_rotation_deg(&mut rng);
        let img = out.sample_mut(s);
        if flip_h {
            flip_horizontal(img, c, h, w);
        }
        if flip_v {
            flip_vertical(img, c, h, w);
        }
        let rotated = rotate(img, c, h, w, angle);
        img.copy_from_slice(&rotated);
    }
    out
}
