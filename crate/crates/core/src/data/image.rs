//! Single-channel `[H, W]` image helpers.

use crate::tensor::Tensor;

fn dims(t: &Tensor<f32>) -> (usize, usize) {
    match t.shape() {
        [h, w] => (*h, *w),
        s => panic!("expected an [H, W] image, got {s:?}"),
    }
}

pub fn flip_horizontal(t: &Tensor<f32>) -> Tensor<f32> {
    let (h, w) = dims(t);
    let d = t.data();
    Tensor::from_fn([h, w], |i| d[(i / w) * w + (w - 1 - i % w)])
}

pub fn flip_vertical(t: &Tensor<f32>) -> Tensor<f32> {
    let (h, w) = dims(t);
    let d = t.data();
    Tensor::from_fn([h, w], |i| d[(h - 1 - i / w) * w + i % w])
}

/// Half-pixel-centred bilinear resampling with edge clamping.
pub fn resize_bilinear(t: &Tensor<f32>, out_h: usize, out_w: usize) -> Tensor<f32> {
    let (h, w) = dims(t);
    let d = t.data();
    let axis = |o: usize, n_out: usize, n_in: usize| {
        let x = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, (x - i0 as f64) as f32)
    };
    Tensor::from_fn([out_h, out_w], |i| {
        let (y0, y1, fy) = axis(i / out_w, out_h, h);
        let (x0, x1, fx) = axis(i % out_w, out_w, w);
        let top = d[y0 * w + x0] * (1.0 - fx) + d[y0 * w + x1] * fx;
        let bottom = d[y1 * w + x0] * (1.0 - fx) + d[y1 * w + x1] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Nearest-neighbour resampling at output pixel centres; keeps binary
/// masks binary.
pub fn resize_nearest(t: &Tensor<f32>, out_h: usize, out_w: usize) -> Tensor<f32> {
    let (h, w) = dims(t);
    let d = t.data();
    Tensor::from_fn([out_h, out_w], |i| {
        let y = ((i / out_w) * 2 + 1) * h / (2 * out_h);
        let x = ((i % out_w) * 2 + 1) * w / (2 * out_w);
        d[y * w + x]
    })
}

/// Stack `[H, W]` images into `[B, 1, H, W]`.
pub fn stack(images: &[Tensor<f32>]) -> Tensor<f32> {
    let (h, w) = dims(&images[0]);
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        assert_eq!(dims(img), (h, w), "stacked images differ in extent");
        data.extend_from_slice(img.data());
    }
    Tensor::new([images.len(), 1, h, w], data).expect("stack shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Tensor<f32> {
        Tensor::from_fn([4, 6], |i| i as f32)
    }

    #[test]
    fn flips_are_involutions() {
        let t = ramp();
        assert!(flip_horizontal(&flip_horizontal(&t)).bit_eq(&t));
        assert!(flip_vertical(&flip_vertical(&t)).bit_eq(&t));
        assert_eq!(&flip_horizontal(&t).data()[..6], &[5.0, 4.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(&flip_vertical(&t).data()[..6], &[18.0, 19.0, 20.0, 21.0, 22.0, 23.0]);
    }

    #[test]
    fn bilinear_preserves_constants_and_identity() {
        let c = Tensor::full([5, 5], 0.25f32);
        assert!(resize_bilinear(&c, 20, 20).data().iter().all(|&v| v == 0.25));
        let t = ramp();
        assert!(resize_bilinear(&t, 4, 6).bit_eq(&t));
    }

    #[test]
    fn bilinear_upsample_interpolates_linearly() {
        let t = Tensor::new([1, 2], vec![0.0f32, 1.0]).unwrap();
        let up = resize_bilinear(&t, 1, 8);
        assert_eq!(up.data(), &[0.0, 0.0, 0.125, 0.375, 0.625, 0.875, 1.0, 1.0]);
    }

    #[test]
    fn nearest_keeps_binary_values() {
        let m = Tensor::from_fn([8, 8], |i| ((i / 8 + i % 8) % 3 == 0) as u8 as f32);
        let down = resize_nearest(&m, 4, 4);
        assert!(down.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(resize_nearest(&m, 8, 8).bit_eq(&m));
        assert_eq!(down.data()[0], m.data()[8 + 1]);
    }
}
