//! Synthetic two-domain lesion phantoms.
//!
//! A sample is a star-shaped lesion on textured tissue. The geometry and
//! class come from one RNG stream; each domain renderer draws its noise
//! from a second stream, so paired samples share masks exactly.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{assign_splits, Domain, LesionClass, Manifest, Sample};
use super::pgm;
use crate::error::{Error, Result};
use crate::nn::fnv1a;
use crate::tensor::Tensor;

const HARMONICS: usize = 4;
const MAX_HARMONIC_AMP: f64 = 0.15;
const CYSTIC_LEVEL: f64 = 0.3;
const SOLID_LEVEL: f64 = 0.5;

/// Domain A tissue is brighter than any lesion, domain B tissue darker.
fn background(domain: Domain) -> f64 {
    match domain {
        Domain::A => 0.72,
        Domain::B => 0.12,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenConfig {
    pub seed: u64,
    /// Geometries per split; paired mode renders each one in both domains.
    pub counts: [usize; 3],
    pub size: usize,
    pub paired: bool,
}

/// Lesion outline `r(θ) = r0·(1 + Σ a_k sin(kθ + φ_k))` around `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lesion {
    pub center: (f64, f64),
    pub r0: f64,
    pub amps: [f64; HARMONICS],
    pub phases: [f64; HARMONICS],
    pub class: LesionClass,
    /// Direction of the line splitting a mixed lesion into its two halves.
    pub split_angle: f64,
    texture: [(f64, f64, f64); 4],
}

impl Lesion {
    pub fn sample(size: usize, rng: &mut impl Rng) -> Self {
        let s = size as f64;
        let r0 = rng.gen_range(0.15 * s..0.3 * s);
        let amps: [f64; HARMONICS] = std::array::from_fn(|_| rng.gen_range(0.0..MAX_HARMONIC_AMP));
        let phases: [f64; HARMONICS] = std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI));
        let reach = r0 * (1.0 + amps.iter().sum::<f64>());
        let lo = reach.ceil();
        let hi = (s - reach).floor().max(lo);
        let center = (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi));
        let class = LesionClass::ALL[rng.gen_range(0..3)];
        let split_angle = rng.gen_range(0.0..PI);
        let texture = std::array::from_fn(|_| {
            (rng.gen_range(0.15..0.6), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI))
        });
        Self { center, r0, amps, phases, class, split_angle, texture }
    }

    pub fn radius(&self, theta: f64) -> f64 {
        let wobble: f64 = (0..HARMONICS).map(|k| self.amps[k] * ((k + 1) as f64 * theta + self.phases[k]).sin()).sum();
        self.r0 * (1.0 + wobble)
    }

    /// Pixel-centre inside test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        dx.hypot(dy) < self.radius(dy.atan2(dx))
    }

    pub fn mask(&self, size: usize) -> Tensor<f32> {
        Tensor::from_fn([size, size], |i| {
            let (y, x) = ((i / size) as f64 + 0.5, (i % size) as f64 + 0.5);
            if self.contains(x, y) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Smooth oriented texture in roughly `[-1, 1]`.
    fn texture_at(&self, x: f64, y: f64) -> f64 {
        let sum: f64 = self.texture.iter().map(|&(f, dir, ph)| (f * (x * dir.cos() + y * dir.sin()) + ph).sin()).sum();
        sum / self.texture.len() as f64
    }

    /// Interior intensity at a pixel inside the outline. Tissue type sets
    /// it independently of the domain: cystic is dark and flat, solid is
    /// brighter and textured.
    fn intensity(&self, x: f64, y: f64) -> f64 {
        let cystic = CYSTIC_LEVEL;
        let solid = SOLID_LEVEL + 0.1 * self.texture_at(x, y);
        match self.class {
            LesionClass::Cystic => cystic,
            LesionClass::Solid => solid,
            LesionClass::Mixed => {
                let (dx, dy) = (x - self.center.0, y - self.center.1);
                if dx * self.split_angle.cos() + dy * self.split_angle.sin() >= 0.0 {
                    cystic
                } else {
                    solid
                }
            }
        }
    }
}

/// Render a lesion in one domain. Domain A: hypointense lesion, Rayleigh
/// speckle then a 3×3 box blur. Domain B: hyperintense lesion, polynomial
/// bias field and additive Gaussian noise.
pub fn render(lesion: &Lesion, domain: Domain, size: usize, rng: &mut impl Rng) -> Tensor<f32> {
    let tissue = |x: f64, y: f64| 0.04 * (0.21 * x + 0.13 * y).sin() + 0.03 * (0.09 * x - 0.17 * y).cos();
    let clean: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
            let level = if lesion.contains(x, y) { lesion.intensity(x, y) } else { background(domain) };
            level + tissue(x, y)
        })
        .collect();
    let out = match domain {
        Domain::A => {
            // unit-mean Rayleigh: σ·sqrt(−2 ln U) with σ = sqrt(2/π)
            let sigma = (2.0 / PI).sqrt();
            let speckled: Vec<f64> = clean
                .iter()
                .map(|&v| {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    v * sigma * (-2.0 * u.ln()).sqrt()
                })
                .collect();
            box_blur3(&speckled, size)
        }
        Domain::B => {
            let coef: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-0.15..0.15));
            let noise = Normal::new(0.0, 0.04).expect("positive std");
            clean
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let u = 2.0 * ((i % size) as f64 + 0.5) / size as f64 - 1.0;
                    let w = 2.0 * ((i / size) as f64 + 0.5) / size as f64 - 1.0;
                    let bias = 1.0 + coef[0] * u + coef[1] * w + coef[2] * u * w + coef[3] * u * u + coef[4] * w * w;
                    v * bias + noise.sample(rng)
                })
                .collect()
        }
    };
    Tensor::from_fn([size, size], |i| out[i].clamp(0.0, 1.0) as f32)
}

fn box_blur3(v: &[f64], size: usize) -> Vec<f64> {
    (0..size * size)
        .map(|i| {
            let (r, c) = ((i / size) as isize, (i % size) as isize);
            let mut sum = 0.0;
            let mut n = 0.0;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if (0..size as isize).contains(&rr) && (0..size as isize).contains(&cc) {
                        sum += v[rr as usize * size + cc as usize];
                        n += 1.0;
                    }
                }
            }
            sum / n
        })
        .collect()
}

fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(fnv1a(seed, label))
}

/// One rendered sample: image, binary mask, class.
pub fn synthesize(seed: u64, geometry: usize, domain: Domain, size: usize) -> (Tensor<f32>, Tensor<f32>, LesionClass) {
    let lesion = Lesion::sample(size, &mut stream(seed, &format!("geometry/{geometry}")));
    let image = render(&lesion, domain, size, &mut stream(seed, &format!("render/{geometry}/{domain}")));
    (image, lesion.mask(size), lesion.class)
}

/// Write images, masks and the manifest under `out`.
pub fn generate(cfg: &GenConfig, out: &Path) -> Result<Manifest> {
    if cfg.size < 32 || cfg.size % 4 != 0 {
        return Err(Error::Data(format!("image size {} must be at least 32 and divisible by 4", cfg.size)));
    }
    let geometries: usize = cfg.counts.iter().sum();
    if geometries == 0 {
        return Err(Error::Data("no samples requested".into()));
    }
    for dir in ["images", "masks"] {
        let d = out.join(dir);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let gids: Vec<String> = (0..geometries).map(|g| format!("s{g:05}")).collect();
    let splits = assign_splits(&gids, cfg.counts, cfg.seed)?;
    let mut samples = Vec::new();
    for (g, gid) in gids.iter().enumerate() {
        let domains: &[Domain] = if cfg.paired {
            &[Domain::A, Domain::B]
        } else if g % 2 == 0 {
            &[Domain::A]
        } else {
            &[Domain::B]
        };
        for &domain in domains {
            let (image, mask, class) = synthesize(cfg.seed, g, domain, cfg.size);
            let id = format!("{gid}_{domain}");
            let sample = Sample {
                image: format!("images/{id}.pgm"),
                mask: format!("masks/{id}.pgm"),
                id,
                class,
                domain,
                split: splits[g],
            };
            pgm::write(&out.join(&sample.image), &image)?;
            pgm::write(&out.join(&sample.mask), &mask)?;
            samples.push(sample);
        }
    }
    let manifest = Manifest { root: out.to_path_buf(), samples };
    manifest.write()?;
    Ok(manifest)
}
