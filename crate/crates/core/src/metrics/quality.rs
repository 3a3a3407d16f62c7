use crate::error::Result;
use crate::tensor::{ensure_same_dims, Scalar, Tensor};

/// Value returned when the mean squared error is below 1e-12.
pub const PSNR_CAP_DB: f64 = 99.0;

/// `10·log10(peak² / MSE)` after clamping both images to `[0, peak]`.
pub fn psnr<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, peak: f64) -> Result<f64> {
    ensure_same_dims("psnr", pred, target)?;
    let mut sum = 0.0;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p.as_f64().clamp(0.0, peak) - t.as_f64().clamp(0.0, peak);
        sum += d * d;
    }
    let mse = sum / pred.numel() as f64;
    if mse < 1e-12 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_hit_the_cap() {
        let a = Tensor::<f32>::full([1, 1, 4, 4], 0.3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn uniform_half_error() {
        let a = Tensor::<f64>::zeros([1, 1, 2, 2]);
        let b = Tensor::full([1, 1, 2, 2], 0.5);
        let v = psnr(&a, &b, 1.0).unwrap();
        assert!((v - 6.0206).abs() < 1e-4, "{v}");
        let c = Tensor::full([1, 1, 2, 2], 0.25);
        let w = psnr(&a, &c, 1.0).unwrap();
        assert!((w - v - 20.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn values_are_clamped_first() {
        let a = Tensor::<f64>::full([1, 1, 1, 1], 1.7);
        let b = Tensor::full([1, 1, 1, 1], 1.0);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn mismatched_dims() {
        let a = Tensor::<f64>::zeros([1, 1, 2, 2]);
        let b = Tensor::zeros([1, 1, 2, 3]);
        assert!(psnr(&a, &b, 1.0).is_err());
    }
}
