//! Deterministic simulator for single-pixel imaging under light disturbance.
//!
//! Two forward models are provided: computational ghost imaging (patterns
//! illuminate the object) and the single-pixel camera (the object is imaged
//! onto the modulator). Both are reconstructed by second-order correlation
//! and scored by PSNR against the known target.
//!
//! ```
//! use spi_core::prelude::*;
//!
//! let target = builtin_target("letters", 16).unwrap();
//! let patterns = hadamard_pattern_set(16).unwrap();
//! let series = measure_cgi(&target, &patterns, &DisturbanceModel::none(), &SourceConfig::default(), 1).unwrap();
//! let rec = reconstruct(&patterns, &series).unwrap();
//! let gray = normalize_to_gray(&rec).unwrap();
//! let reference = to_gray_levels(&target);
//! assert_eq!(psnr(&gray, &reference, 8, &rec.excluded).unwrap(), f64::INFINITY);
//! ```

pub mod cli;
pub mod detection;
pub mod disturbance;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod metrics;
pub mod patterns;
pub mod reconstruction;
pub mod scene;
pub mod stream;

pub use error::{Result, SpiError};

pub mod prelude {
    pub use crate::detection::{
        measure_cgi, measure_spc, MeasurementSeries, Method, MonitorConfig, SourceConfig,
    };
    pub use crate::disturbance::{
        disturbance_field, epsilon_to_noise_mean, DisturbanceKind, DisturbanceModel, Roi,
    };
    pub use crate::experiment::{correction_study, preset, run_sweep, SweepConfig};
    pub use crate::metrics::{mse, psnr, QualityScore};
    pub use crate::patterns::{hadamard_pattern_set, random_pattern_set, PatternSet};
    pub use crate::reconstruction::{correct_series, normalize_to_gray, reconstruct};
    pub use crate::scene::{
        builtin_target, load_target, save_image, to_gray_levels, ImageGrid, SaveMode,
    };
}

/// SHA-256 hex digest of a JSON value. `serde_json` maps keep keys sorted,
/// so the digest does not depend on field order in the source.
pub fn digest_json(value: &serde_json::Value) -> String {
    use sha2::{Digest, Sha256};
    let canonical = serde_json::to_string(value).expect("json value serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}
