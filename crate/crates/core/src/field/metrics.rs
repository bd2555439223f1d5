//! Image quality metrics.

use crate::math::log10;

/// Peak signal-to-noise ratio for values in `[0, 1]`. Identical inputs give
/// `f64::INFINITY`.
pub fn psnr(image: &[[f64; 3]], reference: &[[f64; 3]]) -> f64 {
    assert_eq!(image.len(), reference.len(), "images must have equal size");
    assert!(!image.is_empty(), "images must be non-empty");
    let mse = mse(image, reference);
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * log10(mse)
    }
}

pub fn mse(image: &[[f64; 3]], reference: &[[f64; 3]]) -> f64 {
    let mut sum = 0.0;
    for (a, b) in image.iter().zip(reference) {
        for c in 0..3 {
            let d = a[c] - b[c];
            sum += d * d;
        }
    }
    sum / (3 * image.len()) as f64
}

/// Formats a PSNR, spelling the identical-image sentinel as `inf`.
pub fn format_psnr(value: f64) -> alloc::string::String {
    if value.is_infinite() {
        alloc::string::String::from("inf")
    } else {
        alloc::format!("{value:.3}")
    }
}
