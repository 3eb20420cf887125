use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Binarisation threshold on the sigmoid probability.
pub const THRESHOLD: f32 = 0.5;

/// `2|P∩G| / (|P| + |G|)` of two binary masks; 1.0 when both are empty.
pub fn dice(pred: &Tensor<f32>, gt: &Tensor<f32>) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape("dice", format!("prediction {:?} vs ground truth {:?}", pred.shape(), gt.shape())));
    }
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        let (a, b) = (a > 0.5, b > 0.5);
        inter += usize::from(a && b);
        p += usize::from(a);
        g += usize::from(b);
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// Probability map to `{0, 1}` at [`THRESHOLD`].
pub fn binarize(probs: &Tensor<f32>) -> Tensor<f32> {
    probs.map(|p| if p >= THRESHOLD { 1.0 } else { 0.0 })
}

/// Population mean and standard deviation (two-pass).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> Tensor<f32> {
        Tensor::new([1, bits.len()], bits.iter().map(|&b| f32::from(b)).collect()).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = mask(&[1, 1, 0, 0]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &mask(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(dice(&mask(&[0, 0]), &mask(&[0, 0])).unwrap(), 1.0);
    }

    #[test]
    fn full_prediction_on_half_truth_is_two_thirds() {
        let d = dice(&mask(&[1, 1, 1, 1]), &mask(&[1, 1, 0, 0])).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric() {
        let a = mask(&[1, 0, 1, 1, 0]);
        let b = mask(&[1, 1, 0, 1, 0]);
        assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
        assert!(dice(&a, &mask(&[1])).is_err());
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = Tensor::new([1, 3], vec![0.49f32, 0.5, 0.9]).unwrap();
        assert_eq!(binarize(&p).data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn population_statistics() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert!(mean_std(&[]).0.is_nan());
    }
}
