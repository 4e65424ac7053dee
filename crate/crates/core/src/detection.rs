//! Bucket-detector forward models.
//!
//! CGI: `B^i = sum_x (I0 P_i(x) + I_b^i(x)) T(x)`.
//! SPC: `B^i = (1 - beta) sum_x P_i(x) (I0 + I_b^i(x)) T(x)`, with an optional
//! pre-modulation monitor `M^i = beta sum_x (I0 + I_b^i(x)) T(x)`.
//!
//! Each shot sums pixels in row-major order, and shots run in parallel on
//! the current rayon pool, so every bucket value is bit-identical for any
//! thread count.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disturbance::{DisturbanceGenerator, DisturbanceModel};
use crate::error::{Result, SpiError};
use crate::exact::Dd;
use crate::patterns::PatternSet;
use crate::scene::{write_atomic, ImageGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub intensity_i0: f64,
    /// Mean modulated-signal intensity used to convert the irradiation SNR.
    /// `None` means `I0 / 2`, the mean of binary patterns scaled by I0.
    pub signal_mean: Option<f64>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            intensity_i0: 1.0,
            signal_mean: None,
        }
    }
}

impl SourceConfig {
    pub fn signal_mean(&self) -> f64 {
        self.signal_mean.unwrap_or(self.intensity_i0 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intensity_i0 > 0.0 && self.intensity_i0.is_finite()) {
            return Err(SpiError::InvalidParameter(format!(
                "intensity_i0 must be positive, got {}",
                self.intensity_i0
            )));
        }
        if let Some(m) = self.signal_mean {
            if !(m > 0.0 && m.is_finite()) {
                return Err(SpiError::InvalidParameter(format!(
                    "signal_mean must be positive, got {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Beam-splitter tap in front of the SPC modulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub split_fraction: f64,
    pub enabled: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            split_fraction: 0.1,
            enabled: true,
        }
    }
}

impl MonitorConfig {
    pub fn disabled() -> Self {
        MonitorConfig {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(SpiError::InvalidParameter(format!(
                "split_fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        Ok(())
    }

    /// Fraction diverted to the monitor; zero when disabled.
    fn beta(&self) -> f64 {
        if self.enabled {
            self.split_fraction
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cgi,
    Spc,
    SpcCorrected,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cgi, Method::Spc, Method::SpcCorrected];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cgi => "cgi",
            Method::Spc => "spc",
            Method::SpcCorrected => "spc_corrected",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub model_digest: String,
}

/// Per-shot bucket values, optionally paired with monitor values.
///
/// Values are held in double-double precision; [`MeasurementSeries::bucket`]
/// and [`MeasurementSeries::monitor`] give the nearest f64.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    bucket: Vec<Dd>,
    monitor: Option<Vec<Dd>>,
    pub method: Method,
    pub provenance: Provenance,
}

impl MeasurementSeries {
    pub fn new(
        bucket: Vec<f64>,
        monitor: Option<Vec<f64>>,
        method: Method,
        provenance: Provenance,
    ) -> Self {
        let widen = |v: Vec<f64>| v.into_iter().map(Dd::from_f64).collect();
        Self::from_extended(widen(bucket), monitor.map(widen), method, provenance)
    }

    pub fn from_extended(
        bucket: Vec<Dd>,
        monitor: Option<Vec<Dd>>,
        method: Method,
        provenance: Provenance,
    ) -> Self {
        if let Some(m) = &monitor {
            assert_eq!(
                m.len(),
                bucket.len(),
                "monitor length must match bucket length"
            );
        }
        MeasurementSeries {
            bucket,
            monitor,
            method,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.bucket.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bucket.is_empty()
    }

    pub fn bucket(&self) -> Vec<f64> {
        self.bucket.iter().map(|b| b.value()).collect()
    }

    pub fn monitor(&self) -> Option<Vec<f64>> {
        self.monitor
            .as_ref()
            .map(|m| m.iter().map(|v| v.value()).collect())
    }

    pub fn bucket_extended(&self) -> &[Dd] {
        &self.bucket
    }

    pub fn monitor_extended(&self) -> Option<&[Dd]> {
        self.monitor.as_deref()
    }

    /// `shot_index,bucket,monitor` with an empty monitor column when absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("shot_index,bucket,monitor\n");
        for (i, b) in self.bucket.iter().enumerate() {
            let m = self
                .monitor
                .as_ref()
                .map(|m| m[i].value().to_string())
                .unwrap_or_default();
            out.push_str(&format!("{i},{},{m}\n", b.value()));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

fn check_shapes(target: &ImageGrid, patterns: &PatternSet) -> Result<usize> {
    match target.side() {
        Some(side) if side == patterns.side() => Ok(side),
        _ => Err(SpiError::DimensionMismatch {
            expected: format!("{0}x{0} target", patterns.side()),
            actual: format!("{}x{}", target.width(), target.height()),
        }),
    }
}

/// Computational ghost imaging bucket signal.
pub fn measure_cgi(
    target: &ImageGrid,
    patterns: &PatternSet,
    model: &DisturbanceModel,
    source: &SourceConfig,
    seed: u64,
) -> Result<MeasurementSeries> {
    let side = check_shapes(target, patterns)?;
    source.validate()?;
    let gen =
        DisturbanceGenerator::new(model, seed, side, source.signal_mean(), source.intensity_i0)?;
    let i0 = source.intensity_i0;
    let t = target.values();
    let bucket = (0..patterns.count())
        .into_par_iter()
        .map_init(
            || vec![0.0; t.len()],
            |field, i| {
                gen.fill(i, field);
                let mut acc = Dd::ZERO;
                for ((&pm, &b), &tx) in patterns.pattern(i).iter().zip(field.iter()).zip(t) {
                    // I0 * P is exact for binary P
                    acc += Dd::sum_of(i0 * pm as f64, b).mul_f64(tx);
                }
                acc
            },
        )
        .collect();
    Ok(MeasurementSeries::from_extended(
        bucket,
        None,
        Method::Cgi,
        Provenance {
            seed,
            model_digest: model.digest(),
        },
    ))
}

/// Single-pixel camera bucket signal, with the monitor tap when enabled.
pub fn measure_spc(
    target: &ImageGrid,
    patterns: &PatternSet,
    model: &DisturbanceModel,
    source: &SourceConfig,
    monitor: &MonitorConfig,
    seed: u64,
) -> Result<MeasurementSeries> {
    let side = check_shapes(target, patterns)?;
    source.validate()?;
    if monitor.enabled {
        monitor.validate()?;
    }
    let gen =
        DisturbanceGenerator::new(model, seed, side, source.signal_mean(), source.intensity_i0)?;
    let i0 = source.intensity_i0;
    let beta = monitor.beta();
    let t = target.values();
    let throughput = Dd::diff_of(1.0, beta);
    let pairs: Vec<(Dd, Dd)> = (0..patterns.count())
        .into_par_iter()
        .map_init(
            || vec![0.0; t.len()],
            |field, i| {
                gen.fill(i, field);
                let mut modulated = Dd::ZERO;
                let mut total = Dd::ZERO;
                for ((&pm, &b), &tx) in patterns.pattern(i).iter().zip(field.iter()).zip(t) {
                    let reflected = Dd::sum_of(i0, b).mul_f64(tx);
                    if pm == 1 {
                        modulated += reflected;
                    }
                    total += reflected;
                }
                (modulated * throughput, total.mul_f64(beta))
            },
        )
        .collect();
    let (bucket, mon): (Vec<Dd>, Vec<Dd>) = pairs.into_iter().unzip();
    Ok(MeasurementSeries::from_extended(
        bucket,
        monitor.enabled.then_some(mon),
        Method::Spc,
        Provenance {
            seed,
            model_digest: model.digest(),
        },
    ))
}
