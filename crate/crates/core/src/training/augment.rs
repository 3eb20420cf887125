use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::image::{flip_horizontal, flip_vertical};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub scale_range: [f64; 2],
    pub shift_range: [f64; 2],
    pub flip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { scale_range: [0.9, 1.1], shift_range: [-0.1, 0.1], flip_prob: 0.5 }
    }
}

impl AugmentConfig {
    /// No-op augmentation.
    pub fn identity() -> Self {
        Self { scale_range: [1.0, 1.0], shift_range: [0.0, 0.0], flip_prob: 0.0 }
    }
}

/// Drawn augmentation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub scale: f64,
    pub shift: f64,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl AugmentDraw {
    pub fn sample(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let uniform = |rng: &mut dyn rand::RngCore, [lo, hi]: [f64; 2]| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let scale = uniform(rng, cfg.scale_range);
        let shift = uniform(rng, cfg.shift_range);
        let flip_h = rng.gen_bool(cfg.flip_prob);
        let flip_v = rng.gen_bool(cfg.flip_prob);
        Self { scale, shift, flip_h, flip_v }
    }

    /// `clamp(image·s + t, 0, 1)` and identical flips of image and mask.
    pub fn apply(&self, image: &Tensor<f32>, mask: &Tensor<f32>) -> (Tensor<f32>, Tensor<f32>) {
        let (s, t) = (self.scale as f32, self.shift as f32);
        let mut image = image.map(|v| (v * s + t).clamp(0.0, 1.0));
        let mut mask = mask.clone();
        if self.flip_h {
            image = flip_horizontal(&image);
            mask = flip_horizontal(&mask);
        }
        if self.flip_v {
            image = flip_vertical(&image);
            mask = flip_vertical(&mask);
        }
        (image, mask)
    }
}

/// Draw and apply one augmentation.
pub fn augment(image: &Tensor<f32>, mask: &Tensor<f32>, cfg: &AugmentConfig, rng: &mut impl Rng) -> (Tensor<f32>, Tensor<f32>) {
    AugmentDraw::sample(cfg, rng).apply(image, mask)
}
