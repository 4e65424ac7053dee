//! Per-shot disturbance light fields `I_b^i(x)` on the object plane.
//!
//! Spatial kinds draw every pixel i.i.d. from `Uniform[0, 2 mu_b)` with
//! `mu_b` set by the irradiation SNR. The intensity-fluctuation kind is a
//! spatially constant level drawn once per shot from a normal law clamped
//! at zero. Draws are addressed through [`crate::stream`], so a shot's field
//! depends only on `(seed, shot_index)`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiError};
use crate::scene::ImageGrid;
use crate::stream::{Domain, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    None,
    GlobalSpatial,
    LocalSpatial,
    IntensityFluctuation,
    Composite,
}

impl DisturbanceKind {
    pub fn is_spatial(self) -> bool {
        matches!(
            self,
            DisturbanceKind::GlobalSpatial
                | DisturbanceKind::LocalSpatial
                | DisturbanceKind::Composite
        )
    }

    pub fn has_fluctuation(self) -> bool {
        matches!(
            self,
            DisturbanceKind::IntensityFluctuation | DisturbanceKind::Composite
        )
    }
}

/// How the irradiation SNR sets the per-pixel mean of a local disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalNormalization {
    /// The disturbance power averaged over the whole field equals
    /// `signal_mean / 10^(eps/10)`; inside the ROI the mean is higher by
    /// `grid_area / roi_area`.
    Field,
    /// Inside the ROI the per-pixel mean equals the global `mu_b`.
    Pixel,
}

/// Axis-aligned rectangle in pixels: columns `x0..x0+w`, rows `y0..y0+h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Roi { x0, y0, w, h }
    }

    /// Centered square covering about 4 % of the grid (13x13 on 64x64).
    pub fn centered_default(side: usize) -> Self {
        let w = ((side as f64 * 0.2).round() as usize).clamp(1, side.max(1));
        let x0 = (side - w) / 2;
        Roi::new(x0, x0, w, w)
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        col >= self.x0 && col < self.x0 + self.w && row >= self.y0 && row < self.y0 + self.h
    }

    fn fits(&self, side: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x0 + self.w <= side && self.y0 + self.h <= side
    }

    fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.x0, self.y0, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceModel {
    pub kind: DisturbanceKind,
    /// Irradiation SNR in dB (spatial kinds).
    pub epsilon_db: f64,
    /// Intensity disturbance degree: std of the fluctuation in units of I0.
    pub gamma: f64,
    /// Local kind only; `None` selects [`Roi::centered_default`].
    pub roi: Option<Roi>,
    /// Mean of the fluctuation in units of I0.
    pub fluct_mean: f64,
    pub local_normalization: LocalNormalization,
}

impl Default for DisturbanceModel {
    fn default() -> Self {
        DisturbanceModel {
            kind: DisturbanceKind::None,
            epsilon_db: 0.0,
            gamma: 0.0,
            roi: None,
            fluct_mean: 1.0,
            local_normalization: LocalNormalization::Field,
        }
    }
}

impl DisturbanceModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn global(epsilon_db: f64) -> Self {
        DisturbanceModel {
            kind: DisturbanceKind::GlobalSpatial,
            epsilon_db,
            ..Self::default()
        }
    }

    pub fn local(epsilon_db: f64, roi: Option<Roi>) -> Self {
        DisturbanceModel {
            kind: DisturbanceKind::LocalSpatial,
            epsilon_db,
            roi,
            ..Self::default()
        }
    }

    pub fn fluctuation(gamma: f64) -> Self {
        DisturbanceModel {
            kind: DisturbanceKind::IntensityFluctuation,
            gamma,
            ..Self::default()
        }
    }

    pub fn composite(epsilon_db: f64, gamma: f64) -> Self {
        DisturbanceModel {
            kind: DisturbanceKind::Composite,
            epsilon_db,
            gamma,
            ..Self::default()
        }
    }

    pub fn resolved_roi(&self, side: usize) -> Roi {
        self.roi.unwrap_or_else(|| Roi::centered_default(side))
    }

    pub fn validate(&self, side: usize) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(SpiError::InvalidParameter(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if !self.epsilon_db.is_finite() || !self.fluct_mean.is_finite() {
            return Err(SpiError::InvalidParameter(
                "epsilon_db and fluct_mean must be finite".into(),
            ));
        }
        if self.kind == DisturbanceKind::LocalSpatial {
            let roi = self.resolved_roi(side);
            if !roi.fits(side) || roi.area() >= side * side {
                return Err(SpiError::RoiOutOfBounds {
                    roi: roi.as_tuple(),
                    side,
                });
            }
        }
        Ok(())
    }

    /// Short stable digest of the model parameters.
    pub fn digest(&self) -> String {
        crate::digest_json(&serde_json::to_value(self).expect("model serializes"))
    }
}

/// Mean disturbance intensity for a given irradiation SNR:
/// `signal_mean / 10^(epsilon_db / 10)`.
pub fn epsilon_to_noise_mean(epsilon_db: f64, signal_mean: f64) -> f64 {
    signal_mean / 10f64.powf(epsilon_db / 10.0)
}

/// One shot's disturbance intensity map.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceField {
    pub grid: ImageGrid,
    pub shot_index: usize,
}

/// Field generator with the model resolved against a grid and source.
#[derive(Debug, Clone)]
pub struct DisturbanceGenerator {
    kind: DisturbanceKind,
    seed: u64,
    side: usize,
    /// Upper bound of the per-pixel uniform law inside the support.
    spatial_span: f64,
    roi: Option<Roi>,
    fluct_mean: f64,
    fluct_std: f64,
}

impl DisturbanceGenerator {
    pub fn new(
        model: &DisturbanceModel,
        seed: u64,
        side: usize,
        signal_mean: f64,
        intensity_i0: f64,
    ) -> Result<Self> {
        model.validate(side)?;
        if model.kind.is_spatial() && (signal_mean.is_nan() || signal_mean <= 0.0) {
            return Err(SpiError::InvalidParameter(format!(
                "signal_mean must be positive, got {signal_mean}"
            )));
        }
        let mut mean = epsilon_to_noise_mean(model.epsilon_db, signal_mean);
        let roi = (model.kind == DisturbanceKind::LocalSpatial).then(|| model.resolved_roi(side));
        if let (Some(r), LocalNormalization::Field) = (roi, model.local_normalization) {
            mean *= (side * side) as f64 / r.area() as f64;
        }
        Ok(DisturbanceGenerator {
            kind: model.kind,
            seed,
            side,
            spatial_span: 2.0 * mean,
            roi,
            fluct_mean: model.fluct_mean * intensity_i0,
            fluct_std: model.gamma * intensity_i0,
        })
    }

    pub fn kind(&self) -> DisturbanceKind {
        self.kind
    }

    /// True when every generated field is identically zero.
    pub fn is_zero(&self) -> bool {
        self.kind == DisturbanceKind::None
    }

    /// Per-shot constant level of the fluctuation component.
    pub fn fluctuation_level(&self, shot: usize) -> f64 {
        let mut s = StreamKey::new(self.seed, Domain::IntensityFluctuation, shot as u64).open();
        let z: f64 = StandardNormal.sample(s.rng());
        (self.fluct_mean + self.fluct_std * z).max(0.0)
    }

    /// Writes the shot's field into `out` (row-major, `side²` values).
    pub fn fill(&self, shot: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.side * self.side);
        if self.kind.is_spatial() {
            let mut s = StreamKey::new(self.seed, Domain::SpatialDisturbance, shot as u64).open();
            for (p, v) in out.iter_mut().enumerate() {
                let u = s.next_unit();
                let inside = self
                    .roi
                    .is_none_or(|r| r.contains(p / self.side, p % self.side));
                *v = if inside { self.spatial_span * u } else { 0.0 };
            }
        } else {
            out.fill(0.0);
        }
        if self.kind.has_fluctuation() {
            let c = self.fluctuation_level(shot);
            out.iter_mut().for_each(|v| *v += c);
        }
    }

    pub fn field(&self, shot: usize) -> DisturbanceField {
        let mut values = vec![0.0; self.side * self.side];
        self.fill(shot, &mut values);
        DisturbanceField {
            grid: ImageGrid::square(self.side, values).expect("side² values"),
            shot_index: shot,
        }
    }
}

/// Disturbance field for one shot. See [`DisturbanceGenerator`] for repeated use.
pub fn disturbance_field(
    model: &DisturbanceModel,
    shot_index: usize,
    seed: u64,
    side: usize,
    signal_mean: f64,
    intensity_i0: f64,
) -> Result<DisturbanceField> {
    Ok(DisturbanceGenerator::new(model, seed, side, signal_mean, intensity_i0)?.field(shot_index))
}
