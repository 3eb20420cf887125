//! Loading samples and building the two model input views.

use super::image::{resize_bilinear, resize_nearest, stack};
use super::manifest::{Domain, LesionClass, Manifest, Sample, Split};
use super::pgm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A sample resized to the low-resolution model input `x_c`.
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub id: String,
    pub class: LesionClass,
    pub domain: Domain,
    /// `[x_c, x_c]` in `[0, 1]`
    pub image: Tensor<f32>,
    /// `[x_c, x_c]` in `{0, 1}`
    pub mask: Tensor<f32>,
}

/// Image at `x_c` (bilinear) from a stored image of any square extent.
pub fn low_res_view(image: &Tensor<f32>, x_c: usize) -> Tensor<f32> {
    if image.shape() == [x_c, x_c] {
        image.clone()
    } else {
        resize_bilinear(image, x_c, x_c)
    }
}

/// Bilinear upsampling of the `x_c` view to `x_s`.
pub fn high_res_view(image_c: &Tensor<f32>, x_s: usize) -> Tensor<f32> {
    resize_bilinear(image_c, x_s, x_s)
}

pub fn load_sample(manifest: &Manifest, sample: &Sample, x_c: usize) -> Result<LoadedSample> {
    let image = pgm::read(&manifest.root.join(&sample.image))?;
    let mask = pgm::read(&manifest.root.join(&sample.mask))?;
    if image.shape() != mask.shape() {
        return Err(Error::Data(format!(
            "sample {}: image {:?} and mask {:?} differ in extent",
            sample.id,
            image.shape(),
            mask.shape()
        )));
    }
    if image.shape()[0] != image.shape()[1] {
        return Err(Error::Data(format!("sample {}: image {:?} is not square", sample.id, image.shape())));
    }
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data(format!("sample {}: mask holds values other than 0 and 255", sample.id)));
    }
    let mask = if mask.shape() == [x_c, x_c] { mask } else { resize_nearest(&mask, x_c, x_c) };
    Ok(LoadedSample {
        id: sample.id.clone(),
        class: sample.class,
        domain: sample.domain,
        image: low_res_view(&image, x_c),
        mask,
    })
}

/// Load every sample of `split` (and `domain`, if given).
pub fn load_split(manifest: &Manifest, split: Split, domain: Option<Domain>, x_c: usize) -> Result<Vec<LoadedSample>> {
    let selected = manifest.select(split, domain);
    if selected.is_empty() {
        let which = domain.map_or(String::new(), |d| format!(" in domain {d}"));
        return Err(Error::Data(format!("no {split} samples{which} in {}", manifest.root.display())));
    }
    selected.into_iter().map(|s| load_sample(manifest, s, x_c)).collect()
}

/// Batched model inputs.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, 1, x_s, x_s]`
    pub high: Tensor<f32>,
    /// `[B, 1, x_c, x_c]`
    pub low: Tensor<f32>,
    /// `[B, 1, x_c, x_c]`
    pub mask: Tensor<f32>,
}

impl Batch {
    pub fn new(images: &[Tensor<f32>], masks: &[Tensor<f32>], x_s: usize) -> Self {
        let high: Vec<_> = images.iter().map(|i| high_res_view(i, x_s)).collect();
        Self { high: stack(&high), low: stack(images), mask: stack(masks) }
    }

    pub fn len(&self) -> usize {
        self.low.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn views_respect_grid_match() {
        let img = Tensor::from_fn([64, 64], |i| (i % 64) as f32 / 64.0);
        let low = low_res_view(&img, 32);
        let high = high_res_view(&low, 128);
        assert_eq!(low.shape(), &[32, 32]);
        assert_eq!(high.shape()[0], 4 * low.shape()[0]);
        let batch = Batch::new(&[low.clone(), low], &[Tensor::zeros([32, 32]), Tensor::zeros([32, 32])], 128);
        assert_eq!(batch.high.shape(), &[2, 1, 128, 128]);
        assert_eq!(batch.len(), 2);
    }
}
