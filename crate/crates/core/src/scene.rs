//! Image buffers, target loading/saving and the builtin substitute targets.
//!
//! Reflectance is held as real values in `[0, 1]`; conversion to 8-bit gray
//! levels happens only at file and metric boundaries.

use std::fs;
use std::io::{BufReader, Cursor, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiError};

/// Magic prefix of the raw-float dump.
pub const RAW_MAGIC: &[u8; 4] = b"SPI1";

/// Names accepted by [`builtin_target`].
pub const BUILTIN_TARGETS: [&str; 4] = ["letters", "bars", "checker", "flat"];

/// Row-major grid of real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width * height != values.len() {
            return Err(SpiError::DimensionMismatch {
                expected: format!("{} values for {width}x{height}", width * height),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(ImageGrid {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        ImageGrid {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn square(side: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(side, side, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Side length if the grid is square.
    pub fn side(&self) -> Option<usize> {
        (self.width == self.height).then_some(self.width)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.values.iter().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(SpiError::NonFinite(i)),
            None => Ok(()),
        }
    }
}

/// Where a target comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    Builtin(String),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub source: TargetSource,
    pub size: usize,
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec {
            source: TargetSource::Builtin("letters".into()),
            size: 64,
        }
    }
}

impl TargetSpec {
    pub fn resolve(&self) -> Result<ImageGrid> {
        if self.size < 2 {
            return Err(SpiError::InvalidParameter(format!(
                "target size must be at least 2, got {}",
                self.size
            )));
        }
        match &self.source {
            TargetSource::Builtin(name) => builtin_target(name, self.size),
            TargetSource::Path(path) => load_target(path, self.size),
        }
    }

    pub fn label(&self) -> String {
        match &self.source {
            TargetSource::Builtin(name) => name.clone(),
            TargetSource::Path(path) => path.display().to_string(),
        }
    }
}

/// Output encoding for [`save_image`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SaveMode {
    /// PGM P5. Values are divided by `full_scale`, multiplied by 255,
    /// clamped and rounded half-up.
    Gray8 { full_scale: f64 },
    /// Bit-exact little-endian f64 dump with the `SPI1` header.
    RawFloat,
}

impl SaveMode {
    /// Reflectance grids in `[0, 1]`.
    pub const REFLECTANCE: SaveMode = SaveMode::Gray8 { full_scale: 1.0 };
    /// Grids already on the 0-255 gray scale.
    pub const GRAY_LEVELS: SaveMode = SaveMode::Gray8 { full_scale: 255.0 };
}

/// Loads an 8-bit grayscale PGM (P2/P5), PNG or raw-float file as a
/// `size`x`size` reflectance grid. Images of any other dimensions are rejected.
pub fn load_target(path: impl AsRef<Path>, size: usize) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SpiError::io(path, e))?;
    let grid = decode_image(&bytes)?;
    if grid.width != size || grid.height != size {
        return Err(SpiError::DimensionMismatch {
            expected: format!("{size}x{size}"),
            actual: format!("{}x{}", grid.width, grid.height),
        });
    }
    Ok(grid)
}

/// Reads a raw-float dump without any rescaling.
pub fn load_raw(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SpiError::io(path, e))?;
    decode_raw(&bytes)
}

fn decode_image(bytes: &[u8]) -> Result<ImageGrid> {
    match bytes {
        [b'P', b'2', ..] | [b'P', b'5', ..] => decode_pgm(bytes),
        [0x89, b'P', b'N', b'G', ..] => decode_png(bytes),
        [b'S', b'P', b'I', b'1', ..] => decode_raw(bytes),
        _ => Err(SpiError::UnsupportedFormat(
            "expected PGM (P2/P5), PNG or SPI1 raw-float".into(),
        )),
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<ImageGrid> {
    let binary = bytes[1] == b'5';
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        *slot = next_pgm_token(bytes, &mut pos)?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(SpiError::UnsupportedFormat(format!(
            "PGM maxval {maxval} (only 8-bit images are supported)"
        )));
    }
    let n = width * height;
    let scale = maxval as f64;
    let mut values = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = bytes
            .get(pos..pos + n)
            .ok_or_else(|| SpiError::MalformedImage("truncated P5 raster".into()))?;
        values.extend(raster.iter().map(|&b| b as f64 / scale));
    } else {
        for _ in 0..n {
            let v = next_pgm_token(bytes, &mut pos)?;
            if v > maxval {
                return Err(SpiError::MalformedImage(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
            values.push(v as f64 / scale);
        }
    }
    if values.iter().any(|&v| v > 1.0) {
        return Err(SpiError::MalformedImage("sample exceeds maxval".into()));
    }
    ImageGrid::new(width, height, values)
}

fn next_pgm_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while !matches!(bytes.get(*pos), Some(b'\n') | None) {
                    *pos += 1;
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(SpiError::MalformedImage("unexpected end of PGM".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| SpiError::MalformedImage(format!("bad PGM token at byte {start}")))
}

fn decode_png(bytes: &[u8]) -> Result<ImageGrid> {
    let decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    let mut reader = decoder
        .read_info()
        .map_err(|e| SpiError::MalformedImage(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(SpiError::UnsupportedFormat(format!(
            "PNG must be 8-bit grayscale, found {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![
        0u8;
        reader
            .output_buffer_size()
            .ok_or_else(|| SpiError::MalformedImage("PNG too large".into()))?
    ];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| SpiError::MalformedImage(e.to_string()))?;
    let mut values = Vec::with_capacity(width * height);
    for row in buf[..frame.buffer_size()].chunks(frame.line_size) {
        values.extend(row[..width].iter().map(|&b| b as f64 / 255.0));
    }
    ImageGrid::new(width, height, values)
}

fn decode_raw(bytes: &[u8]) -> Result<ImageGrid> {
    if bytes.len() < 16 || &bytes[..4] != RAW_MAGIC {
        return Err(SpiError::UnsupportedFormat("missing SPI1 header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (width, height) = (word(4), word(8));
    let body = &bytes[16..];
    if body.len() != width * height * 8 {
        return Err(SpiError::MalformedImage(format!(
            "raw-float body holds {} bytes, expected {}",
            body.len(),
            width * height * 8
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageGrid::new(width, height, values)
}

/// Encodes a grid per `mode` and writes it to `path` atomically.
pub fn save_image(grid: &ImageGrid, path: impl AsRef<Path>, mode: SaveMode) -> Result<()> {
    let bytes = encode_image(grid, mode)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn encode_image(grid: &ImageGrid, mode: SaveMode) -> Result<Vec<u8>> {
    grid.check_finite()?;
    match mode {
        SaveMode::Gray8 { full_scale } => {
            let mut out = format!("P5\n{} {}\n255\n", grid.width, grid.height).into_bytes();
            out.extend(
                grid.values
                    .iter()
                    .map(|&v| gray_byte(v / full_scale * 255.0)),
            );
            Ok(out)
        }
        SaveMode::RawFloat => {
            let mut out = Vec::with_capacity(16 + grid.len() * 8);
            out.extend_from_slice(RAW_MAGIC);
            out.extend_from_slice(&(grid.width as u32).to_le_bytes());
            out.extend_from_slice(&(grid.height as u32).to_le_bytes());
            out.extend_from_slice(&[0u8; 4]);
            for v in &grid.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
            Ok(out)
        }
    }
}

/// Absolute resolution of real-valued gray levels: the f64 spacing at the
/// top of the 0-255 range (2^-44).
pub const GRAY_RESOLUTION: f64 = 1.0 / (1u64 << 44) as f64;

/// Rounds a gray level in `[0, 256)` to the nearest multiple of
/// [`GRAY_RESOLUTION`], so every level carries the same absolute precision.
#[inline]
pub fn snap_gray(level: f64) -> f64 {
    (level + 256.0) - 256.0
}

/// Reflectance in `[0, 1]` to real-valued gray levels in `[0, 255]`.
pub fn to_gray_levels(grid: &ImageGrid) -> ImageGrid {
    grid.map(|v| snap_gray(v * 255.0))
}

/// Clamp to `[0, 255]` and round half-up.
pub fn gray_byte(level: f64) -> u8 {
    (level.clamp(0.0, 255.0) + 0.5).floor() as u8
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| SpiError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| SpiError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| SpiError::io(path, e))?;
    tmp.persist(path).map_err(|e| SpiError::io(path, e.error))?;
    Ok(())
}

/// Deterministic substitute targets. `letters` renders "SIOM" in four gray
/// levels over a 0.25 background inside a black frame; all levels are
/// multiples of 1/4.
pub fn builtin_target(name: &str, size: usize) -> Result<ImageGrid> {
    if size == 0 {
        return Err(SpiError::InvalidParameter(
            "target size must be positive".into(),
        ));
    }
    let values = match name {
        "flat" => vec![0.5; size * size],
        "checker" => {
            let cell = (size / 8).max(1);
            grid_from_fn(size, |r, c| {
                if (r / cell + c / cell).is_multiple_of(2) {
                    1.0
                } else {
                    0.0
                }
            })
        }
        "bars" => {
            let band = (size / 8).max(1);
            grid_from_fn(size, |_, c| ((c / band) % 5) as f64 / 4.0)
        }
        "letters" => letters(size),
        other => return Err(SpiError::UnknownTarget(other.to_string())),
    };
    ImageGrid::square(size, values)
}

fn grid_from_fn(size: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    (0..size * size).map(|i| f(i / size, i % size)).collect()
}

// 5x7 glyphs, one row per byte, bit 4 = leftmost column.
const GLYPHS: [(char, [u8; 7]); 4] = [
    ('S', [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E]),
    ('I', [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x1F]),
    ('O', [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E]),
    ('M', [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11]),
];
const GLYPH_LEVELS: [f64; 4] = [1.0, 0.75, 0.5, 1.0];

fn letters(size: usize) -> Vec<f64> {
    let frame = (size / 32).max(1);
    let cell = size / 4;
    let margin = (cell / 8).max(if cell >= 4 { 1 } else { 0 });
    let glyph_w = cell.saturating_sub(2 * margin).max(1);
    let glyph_h = (glyph_w * 7 / 5).min(size.saturating_sub(2 * frame)).max(1);
    let top = (size - glyph_h) / 2;
    grid_from_fn(size, |r, c| {
        if r < frame || c < frame || r >= size - frame || c >= size - frame {
            return 0.0;
        }
        if cell > 0 && r >= top && r < top + glyph_h {
            let slot = c / cell;
            let left = slot * cell + margin;
            if slot < 4 && c >= left && c < left + glyph_w {
                let gr = (r - top) * 7 / glyph_h;
                let gc = (c - left) * 5 / glyph_w;
                if GLYPHS[slot].1[gr] >> (4 - gc) & 1 == 1 {
                    return GLYPH_LEVELS[slot];
                }
            }
        }
        0.25
    })
}
