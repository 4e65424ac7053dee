//! `spi` command line: TOML-configured sweeps, built-in presets, single-point
//! reconstructions and an `info` summary.
//!
//! Exit status is 0 on success, 1 on a usage error (bad flags, unreadable
//! or invalid config) and 2 when the simulation itself fails.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::detection::{Method, MonitorConfig, SourceConfig};
use crate::disturbance::{DisturbanceKind, DisturbanceModel, LocalNormalization, Roi};
use crate::error::{Result, SpiError};
use crate::experiment::{
    preset, run_single, run_sweep, ExperimentResult, SweepConfig, SweepParam, PRESETS,
};
use crate::metrics::format_db;
use crate::patterns::PatternKind;
use crate::scene::{save_image, write_atomic, SaveMode, TargetSource, TargetSpec, BUILTIN_TARGETS};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPI_OUT_DIR";
/// Output directory when neither a flag, the config nor the environment names one.
pub const DEFAULT_OUT_DIR: &str = "spi_out";

const CONFIG_REFERENCE: &str = "\
Config keys (all optional; an empty file runs the defaults):
  preset              fig2 | fig3 | fig4 | fig5, base for the other keys  [none]
  name                output file prefix                       [preset name or \"custom\"]
  target              builtin name (letters, bars, checker, flat) or image path,
                      relative paths resolve against the config file  [letters]
  side                grid side, a power of two                [64]
  pattern_kind        hadamard | random                        [hadamard]
  pattern_count       number of patterns K                     [side^2]
  methods             list of cgi, spc, spc_corrected          [[\"cgi\", \"spc\"]]
  disturbance         none | global | local | intensity | composite  [none]
  epsilon_db          irradiation SNR in dB                    [0.0]
  gamma               intensity disturbance degree             [0.0]
  fluct_mean          fluctuation mean in units of I0          [1.0]
  roi                 {x0, y0, w, h} for local disturbance     [centered 20% square]
  local_normalization field | pixel                            [field]
  sweep_param         epsilon_db | gamma | case                [gamma for intensity, else epsilon_db]
  sweep_values        strictly increasing list                 [current epsilon_db or gamma; 1..4 for case]
  seeds               list of u64                              [[1, 2, 3, 4, 5]]
  intensity_i0        source intensity I0                      [1.0]
  signal_mean         signal mean for the SNR conversion       [I0 / 2]
  split_fraction      monitor beam-splitter fraction beta      [0.1]
  monitor_enabled     bool                                     [true]
  out_dir             output directory                         [$SPI_OUT_DIR, else spi_out]
  write_images        write normalized PGM reconstructions     [true]
  threads             worker count                             [available parallelism]";

#[derive(Debug, Parser)]
#[command(
    name = "spi",
    version,
    about = "Simulate ghost imaging and single-pixel cameras under light disturbance"
)]
pub struct Cli {
    /// Worker threads [default: available parallelism]
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a sweep described by a TOML config file
    #[command(after_help = CONFIG_REFERENCE)]
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config and $SPI_OUT_DIR
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the built-in experiment presets
    Preset {
        #[arg(value_parser = PRESETS)]
        name: String,
        /// Output directory [default: $SPI_OUT_DIR, else spi_out]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds [default: 1,2,3,4,5]
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        seeds: Option<Vec<u64>>,
    },
    /// Reconstruct a single disturbance realisation and write one image and one CSV row
    Reconstruct {
        /// Builtin target name or image path (PGM, PNG or SPI1 raw)
        #[arg(long, default_value = "letters")]
        target: String,
        /// Grid side, a power of two
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = DisturbanceArg::None)]
        disturbance: DisturbanceArg,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        epsilon_db: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory [default: $SPI_OUT_DIR, else spi_out]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print defaults, presets and file formats
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum MethodArg {
    Cgi,
    Spc,
    SpcCorrected,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Cgi => Method::Cgi,
            MethodArg::Spc => Method::Spc,
            MethodArg::SpcCorrected => Method::SpcCorrected,
        }
    }
}

/// Disturbance names shared by the flags and the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceArg {
    None,
    Global,
    Local,
    Intensity,
    Composite,
}

impl From<DisturbanceArg> for DisturbanceKind {
    fn from(d: DisturbanceArg) -> DisturbanceKind {
        match d {
            DisturbanceArg::None => DisturbanceKind::None,
            DisturbanceArg::Global => DisturbanceKind::GlobalSpatial,
            DisturbanceArg::Local => DisturbanceKind::LocalSpatial,
            DisturbanceArg::Intensity => DisturbanceKind::IntensityFluctuation,
            DisturbanceArg::Composite => DisturbanceKind::Composite,
        }
    }
}

/// Raw config file contents; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub target: Option<String>,
    pub side: Option<usize>,
    pub pattern_kind: Option<PatternKind>,
    pub pattern_count: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub disturbance: Option<DisturbanceArg>,
    pub epsilon_db: Option<f64>,
    pub gamma: Option<f64>,
    pub fluct_mean: Option<f64>,
    pub roi: Option<Roi>,
    pub local_normalization: Option<LocalNormalization>,
    pub sweep_param: Option<SweepParam>,
    pub sweep_values: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub intensity_i0: Option<f64>,
    pub signal_mean: Option<f64>,
    pub split_fraction: Option<f64>,
    pub monitor_enabled: Option<bool>,
    pub out_dir: Option<PathBuf>,
    pub write_images: Option<bool>,
    pub threads: Option<usize>,
}

/// Fully defaulted configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub sweep: SweepConfig,
    /// Output directory as resolved from the file and the environment.
    pub out_dir: PathBuf,
    pub threads: usize,
    /// Digest of the resolved sweep, independent of key order and of the
    /// output location.
    pub digest: String,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

fn target_spec(target: &str, size: usize, base: Option<&Path>) -> TargetSpec {
    let source = if BUILTIN_TARGETS.contains(&target) {
        TargetSource::Builtin(target.to_string())
    } else {
        let path = PathBuf::from(target);
        match base {
            Some(dir) if path.is_relative() => TargetSource::Path(dir.join(path)),
            _ => TargetSource::Path(path),
        }
    };
    TargetSpec { source, size }
}

/// Parses TOML text. `base` anchors relative target paths.
pub fn parse_config_str(text: &str, base: Option<&Path>) -> Result<ResolvedConfig> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| SpiError::Config(e.to_string().trim_end().to_string()))?;
    resolve(file, base)
}

/// Reads and resolves a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ResolvedConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SpiError::io(path, e))?;
    parse_config_str(&text, path.parent())
}

fn resolve(file: ConfigFile, base: Option<&Path>) -> Result<ResolvedConfig> {
    let mut sweep = match &file.preset {
        Some(name) => preset(name)?,
        None => SweepConfig::default(),
    };
    if let Some(name) = file.name {
        sweep.name = name;
    }
    if let Some(side) = file.side {
        sweep.side = side;
        sweep.pattern_count = side * side;
    }
    sweep.target = match &file.target {
        Some(t) => target_spec(t, sweep.side, base),
        None => TargetSpec {
            size: sweep.side,
            ..sweep.target
        },
    };
    if let Some(kind) = file.pattern_kind {
        sweep.pattern_kind = kind;
    }
    if let Some(k) = file.pattern_count {
        sweep.pattern_count = k;
    }
    if let Some(methods) = file.methods {
        sweep.methods = methods;
    }

    let model = &mut sweep.disturbance;
    if let Some(d) = file.disturbance {
        model.kind = d.into();
        if file.sweep_param.is_none() && file.preset.is_none() {
            sweep.sweep_param = SweepParam::for_kind(model.kind);
        }
    }
    if let Some(v) = file.epsilon_db {
        model.epsilon_db = v;
    }
    if let Some(v) = file.gamma {
        model.gamma = v;
    }
    if let Some(v) = file.fluct_mean {
        model.fluct_mean = v;
    }
    if let Some(roi) = file.roi {
        model.roi = Some(roi);
    }
    if let Some(n) = file.local_normalization {
        model.local_normalization = n;
    }
    if let Some(p) = file.sweep_param {
        sweep.sweep_param = p;
    }
    match file.sweep_values {
        Some(values) => sweep.sweep_values = values,
        None if file.preset.is_none() => {
            sweep.sweep_values = match sweep.sweep_param {
                SweepParam::EpsilonDb => vec![sweep.disturbance.epsilon_db],
                SweepParam::Gamma => vec![sweep.disturbance.gamma],
                SweepParam::Case => vec![1.0, 2.0, 3.0, 4.0],
            }
        }
        None => {}
    }
    if let Some(seeds) = file.seeds {
        sweep.seeds = seeds;
    }
    sweep.source = SourceConfig {
        intensity_i0: file.intensity_i0.unwrap_or(sweep.source.intensity_i0),
        signal_mean: file.signal_mean.or(sweep.source.signal_mean),
    };
    sweep.monitor = MonitorConfig {
        split_fraction: file.split_fraction.unwrap_or(sweep.monitor.split_fraction),
        enabled: file.monitor_enabled.unwrap_or(sweep.monitor.enabled),
    };
    if let Some(w) = file.write_images {
        sweep.write_images = w;
    }
    let threads = file.threads.unwrap_or_else(default_threads);
    if threads == 0 {
        return Err(SpiError::Config("threads must be at least 1".into()));
    }
    let out_dir = file.out_dir.unwrap_or_else(default_out_dir);
    sweep.out_dir = Some(out_dir.clone());
    sweep
        .validate()
        .map_err(|e| SpiError::Config(e.to_string()))?;
    Ok(ResolvedConfig {
        digest: sweep.digest(),
        sweep,
        out_dir,
        threads,
    })
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SpiError::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SpiError::io(dir, e))
}

fn report(result: &ExperimentResult, dir: &Path) {
    println!(
        "{}: {} rows, config {}",
        result.name,
        result.rows.len(),
        &result.config_digest[..16]
    );
    for a in &result.aggregates {
        println!(
            "  {}={} {:<13} psnr {} dB (std {})",
            result.sweep_param.as_str(),
            result.sweep_param.render(a.sweep_value),
            a.method.as_str(),
            format_db(a.psnr_mean_db),
            format_db(a.psnr_std_db)
        );
    }
    println!("wrote {}", dir.display());
}

fn run_sweep_in(sweep: &SweepConfig, dir: &Path, threads: usize) -> Result<()> {
    create_dir(dir)?;
    let result = in_pool(threads, || run_sweep(sweep))??;
    report(&result, dir);
    Ok(())
}

fn info() -> String {
    let mut s = String::new();
    let d = SweepConfig::default();
    let _ = writeln!(s, "spi {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "\ndefaults:");
    let _ = writeln!(
        s,
        "  target {} {}x{}, {:?} patterns K={}, methods {}",
        d.target.label(),
        d.side,
        d.side,
        d.pattern_kind,
        d.pattern_count,
        d.methods
            .iter()
            .map(|m| m.as_str())
            .collect::<Vec<_>>()
            .join(",")
    );
    let _ = writeln!(
        s,
        "  I0 {}, signal mean I0/2, monitor beta {}, fluct_mean {}, seeds {:?}",
        d.source.intensity_i0, d.monitor.split_fraction, d.disturbance.fluct_mean, d.seeds
    );
    let _ = writeln!(s, "  threads {} (available parallelism)", default_threads());
    let _ = writeln!(s, "  output dir ${OUT_DIR_ENV}, else {DEFAULT_OUT_DIR}");
    let _ = writeln!(s, "\npresets:");
    for name in PRESETS {
        let p = preset(name).expect("builtin preset");
        let _ = writeln!(
            s,
            "  {name}: {} over {:?}, methods {}",
            p.sweep_param.as_str(),
            p.sweep_values,
            p.methods
                .iter()
                .map(|m| m.as_str())
                .collect::<Vec<_>>()
                .join(",")
        );
    }
    let _ = writeln!(s, "\nbuiltin targets: {}", BUILTIN_TARGETS.join(", "));
    let _ = writeln!(
        s,
        "\nformats:\n  input: 8-bit grayscale PGM (P2/P5) or PNG, or SPI1 raw f64\n  \
         images: PGM P5 of the normalized 0-255 reconstruction\n  \
         <name>_rows.csv: sweep_param,sweep_value,method,seed,psnr_db,mse\n  \
         <name>_aggregate.csv: sweep_param,sweep_value,method,psnr_mean_db,psnr_std_db\n  \
         psnr_db is \"inf\" for an exact reconstruction; std is the population std over seeds"
    );
    s
}

fn reconstruct_config(
    target: &str,
    size: usize,
    method: Method,
    disturbance: DisturbanceArg,
    epsilon_db: f64,
    gamma: f64,
    seed: u64,
) -> Result<(SweepConfig, f64)> {
    let kind: DisturbanceKind = disturbance.into();
    let sweep_param = SweepParam::for_kind(kind);
    let value = match sweep_param {
        SweepParam::Gamma => gamma,
        _ => epsilon_db,
    };
    let config = SweepConfig {
        name: "reconstruct".into(),
        target: target_spec(target, size, None),
        side: size,
        pattern_count: size * size,
        methods: vec![method],
        disturbance: DisturbanceModel {
            kind,
            epsilon_db,
            gamma,
            ..DisturbanceModel::default()
        },
        sweep_param,
        sweep_values: vec![value],
        seeds: vec![seed],
        ..SweepConfig::default()
    };
    config.validate()?;
    config.target.resolve()?;
    Ok((config, value))
}

fn reconstruct_once(
    config: &SweepConfig,
    value: f64,
    disturbance: DisturbanceArg,
    dir: &Path,
    threads: usize,
) -> Result<()> {
    let seed = config.seeds[0];
    let method = config.methods[0];
    create_dir(dir)?;
    let points = in_pool(threads, || run_single(config, value, seed))??;
    let (row, image) = points
        .into_iter()
        .next()
        .ok_or_else(|| SpiError::InvalidParameter("no method evaluated".into()))?;
    let stem = format!("reconstruct_{}_{}", method.as_str(), seed);
    let image_path = dir.join(format!("{stem}.pgm"));
    let csv_path = dir.join(format!("{stem}.csv"));
    save_image(&image, &image_path, SaveMode::GRAY_LEVELS)?;
    let result = ExperimentResult {
        name: config.name.clone(),
        sweep_param: config.sweep_param,
        rows: vec![row.clone()],
        aggregates: Vec::new(),
        config_digest: config.digest(),
    };
    write_atomic(&csv_path, result.rows_csv().as_bytes())?;
    println!(
        "{} {} seed {}: psnr {} dB, mse {}",
        method,
        disturbance_name(disturbance),
        seed,
        format_db(row.psnr_db),
        row.mse
    );
    println!("wrote {} and {}", image_path.display(), csv_path.display());
    Ok(())
}

fn disturbance_name(d: DisturbanceArg) -> &'static str {
    match d {
        DisturbanceArg::None => "none",
        DisturbanceArg::Global => "global",
        DisturbanceArg::Local => "local",
        DisturbanceArg::Intensity => "intensity",
        DisturbanceArg::Composite => "composite",
    }
}

enum Failure {
    Usage(SpiError),
    Runtime(SpiError),
}

fn execute(cli: Cli) -> std::result::Result<(), Failure> {
    let flag_threads = cli.threads.map(|n| n as usize);
    match cli.command {
        Command::Run { config, out } => {
            let resolved = parse_config(&config).map_err(Failure::Usage)?;
            let threads = flag_threads.unwrap_or(resolved.threads);
            let mut sweep = resolved.sweep;
            let dir = out.unwrap_or(resolved.out_dir);
            sweep.out_dir = Some(dir.clone());
            run_sweep_in(&sweep, &dir, threads).map_err(Failure::Runtime)
        }
        Command::Preset { name, out, seeds } => {
            let mut sweep = preset(&name).map_err(Failure::Usage)?;
            if let Some(seeds) = seeds {
                sweep.seeds = seeds;
            }
            let dir = out.unwrap_or_else(default_out_dir);
            sweep.out_dir = Some(dir.clone());
            sweep.validate().map_err(Failure::Usage)?;
            run_sweep_in(&sweep, &dir, flag_threads.unwrap_or_else(default_threads))
                .map_err(Failure::Runtime)
        }
        Command::Reconstruct {
            target,
            size,
            method,
            disturbance,
            epsilon_db,
            gamma,
            seed,
            out,
        } => {
            let (config, value) = reconstruct_config(
                &target,
                size,
                method.into(),
                disturbance,
                epsilon_db,
                gamma,
                seed,
            )
            .map_err(Failure::Usage)?;
            let dir = out.unwrap_or_else(default_out_dir);
            let threads = flag_threads.unwrap_or_else(default_threads);
            reconstruct_once(&config, value, disturbance, &dir, threads).map_err(Failure::Runtime)
        }
        Command::Info => {
            print!("{}", info());
            Ok(())
        }
    }
}

/// Runs the command line and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}
