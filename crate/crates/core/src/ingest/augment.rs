//! Flip and translation augmentation on planar, column-major images (the
//! STL-10 byte layout): feature index = `ch * h * w + col * h + row`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub p_hflip: f64,
    pub p_vflip: f64,
    /// Maximum translation as a fraction of the image side.
    pub max_shift_frac: f64,
    /// (height, width, channels)
    pub image_shape: (usize, usize, usize),
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.p_hflip)
            && (0.0..=1.0).contains(&self.p_vflip)
            && (0.0..=0.5).contains(&self.max_shift_frac);
        if !ok {
            return Err(Error::InvalidConfig(
                "augment probabilities must lie in [0, 1] and max_shift_frac in [0, 0.5]".into(),
            ));
        }
        Ok(())
    }

    pub fn feature_len(&self) -> usize {
        let (h, w, ch) = self.image_shape;
        h * w * ch
    }
}

#[inline]
pub fn pixel_index(shape: (usize, usize, usize), row: usize, col: usize, ch: usize) -> usize {
    let (h, w, _) = shape;
    ch * h * w + col * h + row
}

fn remap(pixels: &[f64], shape: (usize, usize, usize), src: impl Fn(isize, isize) -> (isize, isize)) -> Vec<f64> {
    let (h, w, channels) = shape;
    let mut out = vec![0.0; pixels.len()];
    for ch in 0..channels {
        for col in 0..w {
            for row in 0..h {
                let (r, c) = src(row as isize, col as isize);
                if (0..h as isize).contains(&r) && (0..w as isize).contains(&c) {
                    out[pixel_index(shape, row, col, ch)] = pixels[pixel_index(shape, r as usize, c as usize, ch)];
                }
            }
        }
    }
    out
}

/// Mirror left-right.
pub fn hflip(pixels: &[f64], shape: (usize, usize, usize)) -> Vec<f64> {
    let w = shape.1 as isize;
    remap(pixels, shape, |r, c| (r, w - 1 - c))
}

/// Mirror top-bottom.
pub fn vflip(pixels: &[f64], shape: (usize, usize, usize)) -> Vec<f64> {
    let h = shape.0 as isize;
    remap(pixels, shape, |r, c| (h - 1 - r, c))
}

/// Translate by `dy` rows and `dx` columns, filling vacated pixels with 0.
pub fn shift(pixels: &[f64], shape: (usize, usize, usize), dy: isize, dx: isize) -> Vec<f64> {
    remap(pixels, shape, |r, c| (r - dy, c - dx))
}

/// Applies a random horizontal flip, vertical flip and integer translation.
/// Identity, label and provenance are preserved.
pub fn augment<R: Rng + ?Sized>(example: &Example, spec: &AugmentSpec, rng: &mut R) -> Result<Example> {
    let shape = spec.image_shape;
    let expected = spec.feature_len();
    if example.features().len() != expected {
        return Err(Error::AugmentShape { shape, expected, found: example.features().len() });
    }
    // Draw all random numbers up front so the stream consumed per example is
    // fixed regardless of which transforms fire.
    let do_h = rng.random::<f64>() < spec.p_hflip;
    let do_v = rng.random::<f64>() < spec.p_vflip;
    let max_dx = (spec.max_shift_frac * shape.1 as f64).floor() as i64;
    let max_dy = (spec.max_shift_frac * shape.0 as f64).floor() as i64;
    let dx = rng.random_range(-max_dx..=max_dx) as isize;
    let dy = rng.random_range(-max_dy..=max_dy) as isize;

    let mut pixels = example.features().to_vec();
    if do_h {
        pixels = hflip(&pixels, shape);
    }
    if do_v {
        pixels = vflip(&pixels, shape);
    }
    if dx != 0 || dy != 0 {
        pixels = shift(&pixels, shape, dy, dx);
    }
    Ok(example.with_features(pixels))
}
