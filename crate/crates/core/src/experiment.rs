//! Disturbance sweeps and the monitor-correction study.
//!
//! A sweep evaluates every `(sweep value, seed)` job, measures each
//! requested method on the same disturbance realisation, and scores the
//! normalized reconstructions against the target on the 0-255 scale. Jobs
//! run on the ambient rayon pool; rows are sorted before rendering, so the
//! CSV output is independent of scheduling.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{measure_cgi, measure_spc, Method, MonitorConfig, SourceConfig};
use crate::disturbance::{DisturbanceKind, DisturbanceModel};
use crate::error::{Result, SpiError};
use crate::metrics::{format_db, score, DEFAULT_BIT_DEPTH};
use crate::patterns::{hadamard_pattern_set, random_pattern_set, PatternKind, PatternSet};
use crate::reconstruction::{correct_series, normalize_to_gray, reconstruct};
use crate::scene::{save_image, to_gray_levels, write_atomic, ImageGrid, SaveMode, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    EpsilonDb,
    Gamma,
    /// Index 1..=4 into the correction-study cases (a)-(d).
    Case,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::EpsilonDb => "epsilon_db",
            SweepParam::Gamma => "gamma",
            SweepParam::Case => "case",
        }
    }

    /// Default swept parameter for a disturbance kind.
    pub fn for_kind(kind: DisturbanceKind) -> Self {
        match kind {
            DisturbanceKind::IntensityFluctuation => SweepParam::Gamma,
            _ => SweepParam::EpsilonDb,
        }
    }

    pub fn render(self, value: f64) -> String {
        match self {
            SweepParam::Case => case_label(value).to_string(),
            _ => format!("{value}"),
        }
    }
}

fn case_label(value: f64) -> &'static str {
    match value as i64 {
        1 => "a",
        2 => "b",
        3 => "c",
        4 => "d",
        _ => "?",
    }
}

/// Disturbance cases of the correction study, indexed 1..=4.
pub fn correction_case(index: u32) -> Option<DisturbanceModel> {
    Some(match index {
        1 => DisturbanceModel::global(-20.0),
        2 => DisturbanceModel::local(-5.0, None),
        3 => DisturbanceModel::fluctuation(0.12),
        4 => DisturbanceModel::composite(-10.0, 0.2),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Prefix for output files (preset name or `custom`).
    pub name: String,
    pub target: TargetSpec,
    pub side: usize,
    pub pattern_kind: PatternKind,
    /// Number of patterns K. Must equal `side²` for Hadamard sets.
    pub pattern_count: usize,
    pub methods: Vec<Method>,
    /// Base model; the swept parameter overrides `epsilon_db` or `gamma`.
    pub disturbance: DisturbanceModel,
    pub sweep_param: SweepParam,
    pub sweep_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub source: SourceConfig,
    pub monitor: MonitorConfig,
    pub out_dir: Option<PathBuf>,
    pub write_images: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            name: "custom".into(),
            target: TargetSpec::default(),
            side: 64,
            pattern_kind: PatternKind::Hadamard,
            pattern_count: 4096,
            methods: vec![Method::Cgi, Method::Spc],
            disturbance: DisturbanceModel::none(),
            sweep_param: SweepParam::EpsilonDb,
            sweep_values: vec![0.0],
            seeds: (1..=5).collect(),
            source: SourceConfig::default(),
            monitor: MonitorConfig::default(),
            out_dir: None,
            write_images: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(SpiError::Config(msg));
        if self.sweep_values.is_empty() {
            return invalid("sweep_values must not be empty".into());
        }
        if self
            .sweep_values
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less))
        {
            return invalid("sweep_values must be strictly increasing".into());
        }
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty".into());
        }
        if self.methods.is_empty() {
            return invalid("methods must not be empty".into());
        }
        if self.target.size != self.side {
            return invalid(format!(
                "target size {} differs from side {}",
                self.target.size, self.side
            ));
        }
        if self.pattern_kind == PatternKind::Hadamard && !self.side.is_power_of_two() {
            return invalid(format!(
                "hadamard side must be a power of two, got {}",
                self.side
            ));
        }
        if self.pattern_kind == PatternKind::Hadamard && self.pattern_count != self.side * self.side
        {
            return invalid(format!(
                "hadamard pattern_count must equal side^2 = {}, got {}",
                self.side * self.side,
                self.pattern_count
            ));
        }
        if self.methods.contains(&Method::SpcCorrected) && !self.monitor.enabled {
            return Err(SpiError::MonitorDisabled);
        }
        if self.sweep_param == SweepParam::Case
            && self
                .sweep_values
                .iter()
                .any(|&v| v.fract() != 0.0 || correction_case(v as u32).is_none())
        {
            return invalid("case sweep values must be 1, 2, 3 or 4".into());
        }
        self.source.validate()?;
        if self.monitor.enabled {
            self.monitor.validate()?;
        }
        for &v in &self.sweep_values {
            self.model_at(v).validate(self.side)?;
        }
        Ok(())
    }

    /// Disturbance model for one sweep point.
    pub fn model_at(&self, value: f64) -> DisturbanceModel {
        let base = &self.disturbance;
        match self.sweep_param {
            SweepParam::EpsilonDb => DisturbanceModel {
                epsilon_db: value,
                ..base.clone()
            },
            SweepParam::Gamma => DisturbanceModel {
                gamma: value,
                ..base.clone()
            },
            SweepParam::Case => {
                let case = correction_case(value as u32).unwrap_or_default();
                DisturbanceModel {
                    fluct_mean: base.fluct_mean,
                    local_normalization: base.local_normalization,
                    roi: base.roi,
                    ..case
                }
            }
        }
    }

    /// Stable digest of everything that influences the results.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("out_dir");
            obj.remove("write_images");
        }
        crate::digest_json(&value)
    }

    fn patterns_for(&self, seed: u64) -> Result<PatternSet> {
        match self.pattern_kind {
            PatternKind::Hadamard => hadamard_pattern_set(self.side),
            PatternKind::Random => random_pattern_set(self.side, self.pattern_count, seed),
        }
    }
}

/// Built-in experiment presets: `fig2` (global disturbance), `fig3` (local
/// disturbance), `fig4` (intensity fluctuation) and `fig5` (monitor correction).
pub fn preset(name: &str) -> Result<SweepConfig> {
    let base = SweepConfig {
        name: name.to_string(),
        ..SweepConfig::default()
    };
    Ok(match name {
        "fig2" => SweepConfig {
            disturbance: DisturbanceModel::global(0.0),
            sweep_param: SweepParam::EpsilonDb,
            sweep_values: vec![-20.0, -10.0, -5.0, 0.0, 5.0, 10.0],
            ..base
        },
        "fig3" => SweepConfig {
            disturbance: DisturbanceModel::local(0.0, None),
            sweep_param: SweepParam::EpsilonDb,
            sweep_values: vec![-15.0, -10.0, -5.0, 0.0, 5.0, 10.0],
            ..base
        },
        "fig4" => SweepConfig {
            disturbance: DisturbanceModel::fluctuation(0.0),
            sweep_param: SweepParam::Gamma,
            sweep_values: vec![0.01, 0.02, 0.04, 0.08, 0.12, 0.2],
            ..base
        },
        "fig5" => SweepConfig {
            methods: vec![Method::Spc, Method::SpcCorrected],
            sweep_param: SweepParam::Case,
            sweep_values: vec![1.0, 2.0, 3.0, 4.0],
            ..base
        },
        other => return Err(SpiError::UnknownPreset(other.to_string())),
    })
}

pub const PRESETS: [&str; 4] = ["fig2", "fig3", "fig4", "fig5"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub method: Method,
    pub seed: u64,
    pub psnr_db: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub sweep_value: f64,
    pub method: Method,
    pub psnr_mean_db: f64,
    /// Population standard deviation over seeds.
    pub psnr_std_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub sweep_param: SweepParam,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
    pub config_digest: String,
}

impl ExperimentResult {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("sweep_param,sweep_value,method,seed,psnr_db,mse\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.sweep_param.as_str(),
                self.sweep_param.render(r.sweep_value),
                r.method,
                r.seed,
                format_db(r.psnr_db),
                r.mse
            ));
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("sweep_param,sweep_value,method,psnr_mean_db,psnr_std_db\n");
        for a in &self.aggregates {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.sweep_param.as_str(),
                self.sweep_param.render(a.sweep_value),
                a.method,
                format_db(a.psnr_mean_db),
                format_db(a.psnr_std_db)
            ));
        }
        out
    }

    /// Writes `<name>_rows.csv` and `<name>_aggregate.csv` atomically.
    pub fn write_csvs(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let rows = dir.join(format!("{}_rows.csv", self.name));
        let agg = dir.join(format!("{}_aggregate.csv", self.name));
        write_atomic(&rows, self.rows_csv().as_bytes())?;
        write_atomic(&agg, self.aggregate_csv().as_bytes())?;
        Ok((rows, agg))
    }

    /// Seed-mean PSNR for one point, if present.
    pub fn mean_psnr(&self, sweep_value: f64, method: Method) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.sweep_value == sweep_value && a.method == method)
            .map(|a| a.psnr_mean_db)
    }
}

/// Image file name for one sweep point.
pub fn image_name(config: &SweepConfig, method: Method, value: f64, seed: u64) -> String {
    format!(
        "{}_{}_{}_{}.pgm",
        config.name,
        method,
        config.sweep_param.render(value),
        seed
    )
}

struct PointOutput {
    rows: Vec<ResultRow>,
    images: Vec<(String, ImageGrid)>,
}

fn run_point(
    config: &SweepConfig,
    target: &ImageGrid,
    reference: &ImageGrid,
    shared: Option<&PatternSet>,
    value: f64,
    seed: u64,
) -> Result<PointOutput> {
    let owned;
    let patterns = match shared {
        Some(p) => p,
        None => {
            owned = config.patterns_for(seed)?;
            &owned
        }
    };
    let model = config.model_at(value);
    let wants = |m| config.methods.contains(&m);
    let mut series = Vec::new();
    if wants(Method::Cgi) {
        series.push(measure_cgi(target, patterns, &model, &config.source, seed)?);
    }
    if wants(Method::Spc) || wants(Method::SpcCorrected) {
        let spc = measure_spc(
            target,
            patterns,
            &model,
            &config.source,
            &config.monitor,
            seed,
        )?;
        if wants(Method::SpcCorrected) {
            series.push(correct_series(&spc)?);
        }
        if wants(Method::Spc) {
            series.push(spc);
        }
    }
    let mut out = PointOutput {
        rows: Vec::new(),
        images: Vec::new(),
    };
    for s in &series {
        let rec = reconstruct(patterns, s)?;
        let gray = normalize_to_gray(&rec)?;
        let q = score(&gray, reference, DEFAULT_BIT_DEPTH, &rec.excluded)?;
        out.rows.push(ResultRow {
            sweep_value: value,
            method: s.method,
            seed,
            psnr_db: q.psnr_db,
            mse: q.mse,
        });
        if config.write_images {
            out.images
                .push((image_name(config, s.method, value, seed), gray));
        }
    }
    Ok(out)
}

fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    for group in rows.chunk_by(|a, b| a.sweep_value == b.sweep_value && a.method == b.method) {
        let psnrs: Vec<f64> = group.iter().map(|r| r.psnr_db).collect();
        let n = psnrs.len() as f64;
        let (mean, std) = if psnrs.iter().all(|p| p.is_infinite() && *p > 0.0) {
            (f64::INFINITY, 0.0)
        } else {
            let mean = psnrs.iter().sum::<f64>() / n;
            let var = psnrs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        out.push(Aggregate {
            sweep_value: group[0].sweep_value,
            method: group[0].method,
            psnr_mean_db: mean,
            psnr_std_db: std,
        });
    }
    out
}

/// Runs every `(sweep value, method, seed)` combination. When
/// `config.out_dir` is set, the row and aggregate CSVs and (optionally) the
/// normalized reconstructions are written there.
pub fn run_sweep(config: &SweepConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let target = config.target.resolve()?;
    let reference = to_gray_levels(&target);
    let shared = match config.pattern_kind {
        PatternKind::Hadamard => Some(hadamard_pattern_set(config.side)?),
        PatternKind::Random => None,
    };
    let jobs: Vec<(f64, u64)> = config
        .sweep_values
        .iter()
        .flat_map(|&v| config.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let outputs = jobs
        .par_iter()
        .map(|&(v, s)| run_point(config, &target, &reference, shared.as_ref(), v, s))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(jobs.len() * config.methods.len());
    let mut images = Vec::new();
    for o in outputs {
        rows.extend(o.rows);
        images.extend(o.images);
    }
    rows.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(a.method.cmp(&b.method))
            .then(a.seed.cmp(&b.seed))
    });
    let result = ExperimentResult {
        name: config.name.clone(),
        sweep_param: config.sweep_param,
        aggregates: aggregate(&rows),
        rows,
        config_digest: config.digest(),
    };
    if let Some(dir) = &config.out_dir {
        for (name, img) in &images {
            save_image(img, dir.join(name), SaveMode::GRAY_LEVELS)?;
        }
        result.write_csvs(dir)?;
    }
    Ok(result)
}

/// Evaluates one `(sweep value, seed)` point of `config` without writing
/// anything, returning each method's row and normalized reconstruction.
pub fn run_single(
    config: &SweepConfig,
    value: f64,
    seed: u64,
) -> Result<Vec<(ResultRow, ImageGrid)>> {
    let single = SweepConfig {
        sweep_values: vec![value],
        seeds: vec![seed],
        write_images: true,
        ..config.clone()
    };
    single.validate()?;
    let target = single.target.resolve()?;
    let reference = to_gray_levels(&target);
    let patterns = single.patterns_for(seed)?;
    let out = run_point(&single, &target, &reference, Some(&patterns), value, seed)?;
    Ok(out
        .rows
        .into_iter()
        .zip(out.images.into_iter().map(|(_, img)| img))
        .collect())
}

/// Compares SPC with and without monitor correction on the four
/// disturbance cases: global ε = −20 dB, local ε = −5 dB, fluctuation
/// γ = 0.12, and global ε = −10 dB combined with γ = 0.2.
pub fn correction_study(config: &SweepConfig) -> Result<ExperimentResult> {
    if !config.monitor.enabled {
        return Err(SpiError::MonitorDisabled);
    }
    let study = SweepConfig {
        methods: vec![Method::Spc, Method::SpcCorrected],
        sweep_param: SweepParam::Case,
        sweep_values: vec![1.0, 2.0, 3.0, 4.0],
        ..config.clone()
    };
    run_sweep(&study)
}
