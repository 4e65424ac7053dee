//! Correlation reconstruction, monitor correction and gray-scale normalization.
//!
//! Accumulation runs in double-double precision (see [`crate::exact`]);
//! values are rounded to f64 only when a gray-scale image is produced.

use rayon::prelude::*;

use crate::detection::{MeasurementSeries, Method};
use crate::error::{Result, SpiError};
use crate::exact::Dd;
use crate::patterns::PatternSet;
#[cfg(doc)]
use crate::scene::snap_gray;
use crate::scene::ImageGrid;

/// Pixels per parallel work unit in [`reconstruct`].
const PIXEL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Correlation image rounded to f64; may hold negative values.
    pub grid: ImageGrid,
    pub method: Method,
    /// Row-major pixel indices left out of normalization and metrics.
    pub excluded: Vec<usize>,
    values: Vec<Dd>,
}

impl Reconstruction {
    pub fn new(grid: ImageGrid, method: Method, excluded: Vec<usize>) -> Self {
        let values = grid.values().iter().map(|&v| Dd::from_f64(v)).collect();
        Reconstruction {
            grid,
            method,
            excluded,
            values,
        }
    }

    fn from_extended(
        width: usize,
        values: Vec<Dd>,
        method: Method,
        excluded: Vec<usize>,
    ) -> Result<Self> {
        let rounded = values.iter().map(|v| v.value()).collect();
        Ok(Reconstruction {
            grid: ImageGrid::new(width, values.len() / width.max(1), rounded)?,
            method,
            excluded,
            values,
        })
    }

    pub fn extended(&self) -> &[Dd] {
        &self.values
    }
}

/// Correlation image `O(x) = (1/K) sum_i (P_i(x) - <P(x)>) B^i`.
///
/// For each pixel the shots are accumulated in ascending order; pixels are
/// split into fixed chunks across threads, so the result does not depend on
/// the thread count. A complete Hadamard set excludes pixel 0, where the
/// all-ones pattern leaves a centered weight of zero.
pub fn reconstruct(patterns: &PatternSet, series: &MeasurementSeries) -> Result<Reconstruction> {
    let k = patterns.count();
    if series.len() != k {
        return Err(SpiError::DimensionMismatch {
            expected: format!("{k} bucket values"),
            actual: format!("{}", series.len()),
        });
    }
    let n = patterns.pixels();
    let k_dd = Dd::from_f64(k as f64);
    // centered weights for P = 0 and P = 1
    let weights: Vec<[Dd; 2]> = ones_per_pixel(patterns)
        .into_iter()
        .map(|ones| {
            let mean = Dd::from_f64(ones as f64) / k_dd;
            [-mean, Dd::from_f64(1.0) - mean]
        })
        .collect();
    let bucket = series.bucket_extended();
    let mut values = vec![Dd::ZERO; n];
    values
        .par_chunks_mut(PIXEL_CHUNK)
        .enumerate()
        .for_each(|(c, acc)| {
            let lo = c * PIXEL_CHUNK;
            let w = &weights[lo..lo + acc.len()];
            for (i, &b) in bucket.iter().enumerate() {
                let p = &patterns.pattern(i)[lo..lo + acc.len()];
                for ((a, &pv), wx) in acc.iter_mut().zip(p).zip(w) {
                    *a += wx[pv as usize] * b;
                }
            }
            acc.iter_mut().for_each(|a| *a = *a / k_dd);
        });
    let excluded = if patterns.is_full_hadamard() {
        vec![0]
    } else {
        Vec::new()
    };
    Reconstruction::from_extended(patterns.side(), values, series.method, excluded)
}

fn ones_per_pixel(patterns: &PatternSet) -> Vec<u64> {
    let mut ones = vec![0u64; patterns.pixels()];
    for p in patterns.iter() {
        for (o, &v) in ones.iter_mut().zip(p) {
            *o += v as u64;
        }
    }
    ones
}

/// Divides each bucket by its monitor value, rescaled by the mean monitor:
/// `B'^i = B^i * mean(M) / M^i`.
pub fn correct_series(series: &MeasurementSeries) -> Result<MeasurementSeries> {
    let monitor = series.monitor_extended().ok_or(SpiError::MissingMonitor)?;
    if let Some((shot, value)) = monitor
        .iter()
        .enumerate()
        .find(|(_, m)| m.hi().is_nan() || m.hi() <= 0.0)
    {
        return Err(SpiError::NonPositiveMonitor {
            shot,
            value: value.value(),
        });
    }
    // a constant monitor carries no information; leave the series untouched
    let bucket = if monitor.iter().all(|&m| m == monitor[0]) {
        series.bucket_extended().to_vec()
    } else {
        let mean = monitor.iter().copied().sum::<Dd>() / Dd::from_f64(monitor.len() as f64);
        series
            .bucket_extended()
            .iter()
            .zip(monitor)
            .map(|(&b, &m)| b * (mean / m))
            .collect()
    };
    Ok(MeasurementSeries::from_extended(
        bucket,
        Some(monitor.to_vec()),
        Method::SpcCorrected,
        series.provenance.clone(),
    ))
}

/// Min-max maps non-excluded values onto `[0, 255]`. Excluded pixels copy
/// their nearest non-excluded neighbour (Euclidean distance, first in
/// row-major order on ties). Levels stay real-valued, held at the uniform
/// resolution of [`snap_gray`] rather than quantized to 8 bits.
pub fn normalize_to_gray(rec: &Reconstruction) -> Result<ImageGrid> {
    let grid = &rec.grid;
    let n = grid.len();
    let mut excluded = vec![false; n];
    for &p in &rec.excluded {
        if p >= n {
            return Err(SpiError::InvalidParameter(format!(
                "excluded pixel {p} outside {n}-pixel grid"
            )));
        }
        excluded[p] = true;
    }
    let v = &rec.values;
    let mut kept = v
        .iter()
        .zip(&excluded)
        .filter(|(_, &ex)| !ex)
        .map(|(x, _)| *x);
    let first = kept.next().ok_or(SpiError::DegenerateReconstruction)?;
    let (lo, hi) = kept.fold((first, first), |(lo, hi), x| {
        (if x < lo { x } else { lo }, if x > hi { x } else { hi })
    });
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(SpiError::DegenerateReconstruction);
    }
    let scale = Dd::from_f64(255.0) / (hi - lo);
    let mut out: Vec<f64> = v
        .iter()
        .map(|&x| ((x - lo) * scale).add_f64(256.0).value() - 256.0)
        .collect();
    let w = grid.width();
    for p in (0..n).filter(|&p| excluded[p]) {
        let (r, c) = ((p / w) as i64, (p % w) as i64);
        let nearest = (0..n)
            .filter(|&q| !excluded[q])
            .min_by_key(|&q| {
                let (qr, qc) = ((q / w) as i64, (q % w) as i64);
                (qr - r).pow(2) + (qc - c).pow(2)
            })
            .expect("at least one non-excluded pixel");
        out[p] = out[nearest];
    }
    ImageGrid::new(w, grid.height(), out)
}
