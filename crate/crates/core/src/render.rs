//! Scalogram rendering: decibel normalization, colormap lookup, bilinear
//! resizing to 224x224 and the class-rebalancing colormap augmentation.
//!
//! The four colormap tables ship as repository assets
//! (`assets/colormaps/*.csv`, 256 rows of `r,g,b`). They are embedded at
//! compile time; setting `RESP_SCALOGRAM_ASSETS` to a directory containing
//! replacement CSVs overrides them at run time.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::Disease;
use crate::scalar::Real;

/// Output image side length.
pub const IMAGE_SIZE: usize = 224;
/// Default dB floor for display normalization.
pub const FLOOR_DB: f64 = -80.0;

/// The four color mapping schemes used for augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Colormap {
    Parula,
    Hsv,
    Jet,
    Hot,
}

impl Colormap {
    pub const ALL: [Colormap; 4] = [Colormap::Parula, Colormap::Hsv, Colormap::Jet, Colormap::Hot];

    pub fn name(self) -> &'static str {
        match self {
            Colormap::Parula => "parula",
            Colormap::Hsv => "hsv",
            Colormap::Jet => "jet",
            Colormap::Hot => "hot",
        }
    }
}

/// 256-entry RGB lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColormapTable {
    pub rgb: Vec<[u8; 3]>,
}

impl ColormapTable {
    /// Parse a `r,g,b` CSV with exactly 256 rows.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rgb = Vec::with_capacity(256);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut chan = [0u8; 3];
            for c in &mut chan {
                let field = parts
                    .next()
                    .ok_or_else(|| Error::BadColormap(format!("row {}: expected 3 fields", i + 1)))?;
                *c = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::BadColormap(format!("row {}: bad channel `{field}`", i + 1)))?;
            }
            if parts.next().is_some() {
                return Err(Error::BadColormap(format!("row {}: too many fields", i + 1)));
            }
            rgb.push(chan);
        }
        if rgb.len() != 256 {
            return Err(Error::BadColormap(format!("expected 256 rows, found {}", rgb.len())));
        }
        Ok(Self { rgb })
    }
}

/// All four tables, loaded from the embedded assets or an override directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColormapSet {
    parula: ColormapTable,
    hsv: ColormapTable,
    jet: ColormapTable,
    hot: ColormapTable,
}

const PARULA_CSV: &str = include_str!("../assets/colormaps/parula.csv");
const HSV_CSV: &str = include_str!("../assets/colormaps/hsv.csv");
const JET_CSV: &str = include_str!("../assets/colormaps/jet.csv");
const HOT_CSV: &str = include_str!("../assets/colormaps/hot.csv");

impl ColormapSet {
    /// Load tables from `dir` when given, else the embedded assets.
    pub fn load(dir: Option<&Path>) -> Result<Self> {
        let read = |map: Colormap, embedded: &str| -> Result<ColormapTable> {
            match dir {
                Some(d) => {
                    let path = d.join(format!("{}.csv", map.name()));
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Error::io(format!("reading colormap {}", path.display()), e))?;
                    ColormapTable::parse_csv(&text)
                }
                None => ColormapTable::parse_csv(embedded),
            }
        };
        Ok(Self {
            parula: read(Colormap::Parula, PARULA_CSV)?,
            hsv: read(Colormap::Hsv, HSV_CSV)?,
            jet: read(Colormap::Jet, JET_CSV)?,
            hot: read(Colormap::Hot, HOT_CSV)?,
        })
    }

    /// Load honoring the `RESP_SCALOGRAM_ASSETS` override directory.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os("RESP_SCALOGRAM_ASSETS") {
            Some(dir) => Self::load(Some(Path::new(&dir))),
            None => Self::load(None),
        }
    }

    pub fn table(&self, map: Colormap) -> &ColormapTable {
        match map {
            Colormap::Parula => &self.parula,
            Colormap::Hsv => &self.hsv,
            Colormap::Jet => &self.jet,
            Colormap::Hot => &self.hot,
        }
    }
}

/// Normalize a non-negative power matrix to [0, 1] on a dB scale.
///
/// `10 log10(p / max)` clamped to `[floor_db, 0]`, then mapped affinely to
/// [0, 1]. An all-zero matrix maps to all zeros.
pub fn to_db<T: Real>(power: &[Vec<T>], floor_db: f64) -> Vec<Vec<T>> {
    assert!(floor_db < 0.0, "floor must be negative dB");
    let mut peak = T::zero();
    for row in power {
        for &v in row {
            debug_assert!(v >= T::zero());
            peak = peak.max(v);
        }
    }
    if peak == T::zero() {
        return power.iter().map(|row| vec![T::zero(); row.len()]).collect();
    }
    let floor = T::of(floor_db);
    let ten = T::of(10.0);
    power
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| {
                    let db = if v == T::zero() { floor } else { ten * (v / peak).log10() };
                    let clamped = db.max(floor).min(T::zero());
                    (clamped - floor) / (T::zero() - floor)
                })
                .collect()
        })
        .collect()
}

/// Nearest-entry lookup of normalized values into a 256-color table.
///
/// Returns row-major RGB bytes, 3 per input cell.
pub fn apply_colormap<T: Real>(norm: &[Vec<T>], table: &ColormapTable) -> Vec<u8> {
    let cols = norm.first().map(|r| r.len()).unwrap_or(0);
    let mut out = Vec::with_capacity(norm.len() * cols * 3);
    for row in norm {
        for &v in row {
            let idx = (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as usize;
            out.extend_from_slice(&table.rgb[idx]);
        }
    }
    out
}

/// Separable corner-aligned bilinear resize.
pub fn resize_bilinear<T: Real>(matrix: &[Vec<T>], out_rows: usize, out_cols: usize) -> Result<Vec<Vec<T>>> {
    let rows = matrix.len();
    let cols = matrix.first().map(|r| r.len()).unwrap_or(0);
    if rows < 2 || cols < 2 {
        return Err(Error::TooSmall { rows, cols });
    }
    if rows == out_rows && cols == out_cols {
        return Ok(matrix.to_vec());
    }
    let scale = |i: usize, out: usize, src: usize| -> (usize, usize, T) {
        if out == 1 {
            return (0, 0, T::zero());
        }
        let pos = i as f64 * (src - 1) as f64 / (out - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src - 1);
        (lo, hi, T::of(pos - lo as f64))
    };
    let mut out = Vec::with_capacity(out_rows);
    for r in 0..out_rows {
        let (r0, r1, fr) = scale(r, out_rows, rows);
        let mut row_out = Vec::with_capacity(out_cols);
        for c in 0..out_cols {
            let (c0, c1, fc) = scale(c, out_cols, cols);
            let top = matrix[r0][c0] + (matrix[r0][c1] - matrix[r0][c0]) * fc;
            let bottom = matrix[r1][c0] + (matrix[r1][c1] - matrix[r1][c0]) * fc;
            row_out.push(top + (bottom - top) * fr);
        }
        out.push(row_out);
    }
    Ok(out)
}

/// A rendered 224x224 RGB scalogram image with provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalogramImage {
    /// Row-major RGB bytes, exactly `224 * 224 * 3`.
    pub pixels: Vec<u8>,
    pub colormap: Colormap,
    pub patient_id: u32,
    pub label: Disease,
    pub recording_id: String,
    pub cycle_index: usize,
    /// Augmentation variant index (0..4 for minority classes, 0 for COPD).
    pub variant: usize,
}

impl ScalogramImage {
    pub fn validate(&self) -> Result<()> {
        if self.pixels.len() != IMAGE_SIZE * IMAGE_SIZE * 3 {
            return Err(Error::ShapeMismatch(format!(
                "image has {} bytes, expected {}",
                self.pixels.len(),
                IMAGE_SIZE * IMAGE_SIZE * 3
            )));
        }
        Ok(())
    }

    /// `<patient>_<rec>_<cycle>_<variant>_<colormap>.png`; `recording_id`
    /// already carries `<patient>_<rec>`.
    pub fn filename(&self) -> String {
        format!("{}_{}_{}_{}.png", self.recording_id, self.cycle_index, self.variant, self.colormap.name())
    }
}

/// splitmix64 finalizer; stable across platforms and releases.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic colormap draw for a majority-class segment, derived from the
/// run seed and the segment identity so parallel order cannot change it.
pub fn majority_colormap(seed: u64, recording_id: &str, cycle_index: usize) -> Colormap {
    let mut h = mix64(seed);
    for &b in recording_id.as_bytes() {
        h = mix64(h ^ b as u64);
    }
    h = mix64(h ^ cycle_index as u64);
    Colormap::ALL[(h % 4) as usize]
}

/// The colormap variants a segment will be rendered under: all four for
/// minority classes, one seeded draw for the majority class.
pub fn augment_plan(minority: bool, seed: u64, recording_id: &str, cycle_index: usize) -> Vec<Colormap> {
    if minority {
        Colormap::ALL.to_vec()
    } else {
        vec![majority_colormap(seed, recording_id, cycle_index)]
    }
}

/// Input to [`augment`]: a normalized 224x224 matrix plus provenance.
#[derive(Debug, Clone)]
pub struct SegmentFeature<T> {
    /// Values in [0, 1], `IMAGE_SIZE` x `IMAGE_SIZE`.
    pub norm: Vec<Vec<T>>,
    pub patient_id: u32,
    pub label: Disease,
    pub recording_id: String,
    pub cycle_index: usize,
}

/// Render every augmentation variant of the given segments.
///
/// Minority classes yield exactly 4 images per segment (one per colormap);
/// the majority class yields exactly 1 with a seeded colormap draw.
pub fn augment<T: Real>(
    features: &[SegmentFeature<T>],
    minority: bool,
    seed: u64,
    maps: &ColormapSet,
) -> Vec<ScalogramImage> {
    let mut images = Vec::new();
    for feat in features {
        let plan = augment_plan(minority, seed, &feat.recording_id, feat.cycle_index);
        for (variant, map) in plan.into_iter().enumerate() {
            let image = ScalogramImage {
                pixels: apply_colormap(&feat.norm, maps.table(map)),
                colormap: map,
                patient_id: feat.patient_id,
                label: feat.label,
                recording_id: feat.recording_id.clone(),
                cycle_index: feat.cycle_index,
                variant,
            };
            image.validate().expect("rendered image satisfies invariants");
            images.push(image);
        }
    }
    images
}

/// Write an image as 8-bit RGB PNG without alpha.
pub fn write_png(path: &Path, image: &ScalogramImage) -> Result<()> {
    image.validate()?;
    let file = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), IMAGE_SIZE as u32, IMAGE_SIZE as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::io(format!("encoding {}", path.display()), std::io::Error::other(e)))?;
    writer
        .write_image_data(&image.pixels)
        .map_err(|e| Error::io(format!("encoding {}", path.display()), std::io::Error::other(e)))?;
    Ok(())
}

/// Read an RGB PNG back as row-major bytes, with dimensions.
pub fn read_png(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let file = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let decoder = png::Decoder::new(file);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::io(format!("decoding {}", path.display()), std::io::Error::other(e)))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::io(format!("decoding {}", path.display()), std::io::Error::other(e)))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::BadConfig(format!("{} is not an 8-bit RGB PNG", path.display())));
    }
    buf.truncate(info.buffer_size());
    Ok((buf, info.height as usize, info.width as usize))
}
