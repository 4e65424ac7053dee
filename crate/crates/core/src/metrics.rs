//! MSE and PSNR on the 0-255 gray scale.

use crate::error::{Result, SpiError};
use crate::scene::ImageGrid;

pub const DEFAULT_BIT_DEPTH: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub mse: f64,
    /// `+inf` exactly when `mse == 0`.
    pub psnr_db: f64,
    pub n_pixels_used: usize,
    pub p_bits: u32,
}

fn used_mask(a: &ImageGrid, b: &ImageGrid, excluded: &[usize]) -> Result<Vec<bool>> {
    if !a.same_shape(b) {
        return Err(SpiError::DimensionMismatch {
            expected: format!("{}x{}", a.width(), a.height()),
            actual: format!("{}x{}", b.width(), b.height()),
        });
    }
    let mut used = vec![true; a.len()];
    for &p in excluded {
        *used.get_mut(p).ok_or_else(|| {
            SpiError::InvalidParameter(format!("excluded pixel {p} out of range"))
        })? = false;
    }
    if !used.contains(&true) {
        return Err(SpiError::AllPixelsExcluded);
    }
    Ok(used)
}

/// Mean squared error over the pixels not listed in `excluded`.
pub fn mse(a: &ImageGrid, b: &ImageGrid, excluded: &[usize]) -> Result<f64> {
    let used = used_mask(a, b, excluded)?;
    let (sum, count) = a
        .values()
        .iter()
        .zip(b.values())
        .zip(&used)
        .filter(|(_, &u)| u)
        .fold((0.0, 0usize), |(s, n), ((x, y), _)| {
            (s + (x - y).powi(2), n + 1)
        });
    Ok(sum / count as f64)
}

/// `10 log10((2^p - 1)^2 / MSE)`; `+inf` for a perfect match.
pub fn psnr_from_mse(mse: f64, p_bits: u32) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let peak = 2f64.powi(p_bits as i32) - 1.0;
    10.0 * (peak * peak / mse).log10()
}

pub fn psnr(a: &ImageGrid, b: &ImageGrid, p_bits: u32, excluded: &[usize]) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b, excluded)?, p_bits))
}

pub fn score(
    a: &ImageGrid,
    b: &ImageGrid,
    p_bits: u32,
    excluded: &[usize],
) -> Result<QualityScore> {
    let used = used_mask(a, b, excluded)?;
    let m = mse(a, b, excluded)?;
    Ok(QualityScore {
        mse: m,
        psnr_db: psnr_from_mse(m, p_bits),
        n_pixels_used: used.iter().filter(|&&u| u).count(),
        p_bits,
    })
}

/// CSV rendering of a dB value: `inf` or four decimals.
pub fn format_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.4}")
    }
}
