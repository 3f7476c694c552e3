//! Multispectral image pairs: band rasters, resampling onto the 10 m grid,
//! channel subsets, normalization, on-disk region layout and a synthetic
//! generator.

mod normalize;
pub mod pgm;
mod region;
mod resample;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use normalize::{apply_normalization, compute_normalization, invert_normalization, NormalizationStats};
pub use region::{import_region, write_region, RegionLayout, RegionMeta};
pub use resample::resample_to_10m;
pub use synthetic::{generate_synthetic, generate_synthetic_with, SyntheticConfig, SYNTHETIC_BAND_ORDER};

/// Sentinel-2 band identifiers in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandId {
    B01,
    B02,
    B03,
    B04,
    B05,
    B06,
    B07,
    B08,
    B8A,
    B09,
    B10,
    B11,
    B12,
}

impl BandId {
    pub const ALL: [BandId; 13] = [
        BandId::B01,
        BandId::B02,
        BandId::B03,
        BandId::B04,
        BandId::B05,
        BandId::B06,
        BandId::B07,
        BandId::B08,
        BandId::B8A,
        BandId::B09,
        BandId::B10,
        BandId::B11,
        BandId::B12,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BandId::B01 => "B01",
            BandId::B02 => "B02",
            BandId::B03 => "B03",
            BandId::B04 => "B04",
            BandId::B05 => "B05",
            BandId::B06 => "B06",
            BandId::B07 => "B07",
            BandId::B08 => "B08",
            BandId::B8A => "B8A",
            BandId::B09 => "B09",
            BandId::B10 => "B10",
            BandId::B11 => "B11",
            BandId::B12 => "B12",
        }
    }

    /// Native ground sampling distance of the band on Sentinel-2.
    pub fn native_resolution(self) -> Resolution {
        match self {
            BandId::B02 | BandId::B03 | BandId::B04 | BandId::B08 => Resolution::M10,
            BandId::B05 | BandId::B06 | BandId::B07 | BandId::B8A | BandId::B11 | BandId::B12 => {
                Resolution::M20
            }
            BandId::B01 | BandId::B09 | BandId::B10 => Resolution::M60,
        }
    }
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BandId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        BandId::ALL
            .iter()
            .copied()
            .find(|b| b.name() == upper)
            .ok_or_else(|| Error::invalid(format!("unknown band id {s:?}")))
    }
}

/// Meters per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Resolution {
    M10,
    M20,
    M60,
}

impl Resolution {
    pub fn meters(self) -> u32 {
        match self {
            Resolution::M10 => 10,
            Resolution::M20 => 20,
            Resolution::M60 => 60,
        }
    }
}

impl TryFrom<u32> for Resolution {
    type Error = Error;

    fn try_from(m: u32) -> Result<Self> {
        match m {
            10 => Ok(Resolution::M10),
            20 => Ok(Resolution::M20),
            60 => Ok(Resolution::M60),
            other => Err(Error::invalid(format!("unsupported resolution {other} m"))),
        }
    }
}

impl From<Resolution> for u32 {
    fn from(r: Resolution) -> u32 {
        r.meters()
    }
}

/// One band of one acquisition. Values are reflectance counts in the 16-bit
/// range, kept as `f32` so resampled bands need no re-quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRaster {
    pub width: usize,
    pub height: usize,
    pub native_resolution: Resolution,
    pub values: Vec<f32>,
}

impl BandRaster {
    pub fn new(width: usize, height: usize, native_resolution: Resolution, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("band raster must be non-empty"));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} band",
                values.len()
            )));
        }
        Ok(BandRaster {
            width,
            height,
            native_resolution,
            values,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// All bands of one acquisition, resampled onto a common 10 m grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultispectralImage {
    bands: BTreeMap<BandId, BandRaster>,
    grid_width: usize,
    grid_height: usize,
}

impl MultispectralImage {
    /// Builds an image from bands that already share the grid.
    pub fn new(bands: impl IntoIterator<Item = (BandId, BandRaster)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut dims = None;
        for (id, band) in bands {
            match dims {
                None => dims = Some((band.width, band.height)),
                Some((w, h)) if (w, h) != (band.width, band.height) => {
                    return Err(Error::DimensionMismatch(format!(
                        "band {id} is {}x{}, expected {w}x{h}",
                        band.width, band.height
                    )))
                }
                _ => {}
            }
            if map.insert(id, band).is_some() {
                return Err(Error::invalid(format!("duplicate band {id}")));
            }
        }
        let (grid_width, grid_height) =
            dims.ok_or_else(|| Error::invalid("image needs at least one band"))?;
        Ok(MultispectralImage {
            bands: map,
            grid_width,
            grid_height,
        })
    }

    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    pub fn grid_height(&self) -> usize {
        self.grid_height
    }

    pub fn band(&self, id: BandId) -> Option<&BandRaster> {
        self.bands.get(&id)
    }

    pub fn band_ids(&self) -> impl Iterator<Item = BandId> + '_ {
        self.bands.keys().copied()
    }

    pub fn bands(&self) -> impl Iterator<Item = (BandId, &BandRaster)> + '_ {
        self.bands.iter().map(|(k, v)| (*k, v))
    }
}

/// Binary raster; 1 = change, 0 = no change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::invalid("binary map values must be 0 or 1"));
        }
        Ok(BinaryMap { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMap {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col] != 0
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }
}

/// Two co-registered acquisitions of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub region_id: String,
    pub earlier: MultispectralImage,
    pub later: MultispectralImage,
    pub ground_truth: Option<BinaryMap>,
    pub acquisition_dates: [String; 2],
}

impl ImagePair {
    pub fn new(
        region_id: impl Into<String>,
        earlier: MultispectralImage,
        later: MultispectralImage,
        ground_truth: Option<BinaryMap>,
        acquisition_dates: [String; 2],
    ) -> Result<Self> {
        let dims = (earlier.grid_width, earlier.grid_height);
        if dims != (later.grid_width, later.grid_height) {
            return Err(Error::DimensionMismatch(format!(
                "earlier image is {}x{}, later is {}x{}",
                dims.0, dims.1, later.grid_width, later.grid_height
            )));
        }
        if let Some(gt) = &ground_truth {
            if (gt.width, gt.height) != dims {
                return Err(Error::DimensionMismatch(format!(
                    "ground truth is {}x{}, images are {}x{}",
                    gt.width, gt.height, dims.0, dims.1
                )));
            }
        }
        Ok(ImagePair {
            region_id: region_id.into(),
            earlier,
            later,
            ground_truth,
            acquisition_dates,
        })
    }

    pub fn width(&self) -> usize {
        self.earlier.grid_width
    }

    pub fn height(&self) -> usize {
        self.earlier.grid_height
    }

    /// Stacks both dates with the bands of `mode`.
    pub fn stacks(&self, mode: ChannelMode) -> Result<PairStacks> {
        Ok(PairStacks {
            earlier: select_channels(&self.earlier, mode)?,
            later: select_channels(&self.later, mode)?,
        })
    }
}

/// The four channel subsets that were compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelMode {
    /// RGB.
    C3,
    /// RGB + near infrared, the 10 m bands.
    C4,
    /// Every band at 10 m or 20 m.
    C10,
    /// All bands.
    C13,
}

impl ChannelMode {
    pub fn from_count(c: usize) -> Result<Self> {
        match c {
            3 => Ok(ChannelMode::C3),
            4 => Ok(ChannelMode::C4),
            10 => Ok(ChannelMode::C10),
            13 => Ok(ChannelMode::C13),
            other => Err(Error::invalid(format!(
                "unsupported channel count {other} (expected 3, 4, 10 or 13)"
            ))),
        }
    }

    pub fn count(self) -> usize {
        self.band_list().len()
    }

    pub fn band_list(self) -> &'static [BandId] {
        use BandId::*;
        match self {
            ChannelMode::C3 => &[B04, B03, B02],
            ChannelMode::C4 => &[B04, B03, B02, B08],
            ChannelMode::C10 => &[B02, B03, B04, B08, B05, B06, B07, B8A, B11, B12],
            ChannelMode::C13 => &BandId::ALL,
        }
    }
}

/// Channel-interleaved raster, `height × width × channels` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Stack {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height}x{channels} stack",
                data.len()
            )));
        }
        Ok(Stack {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn same_shape(&self, other: &Stack) -> bool {
        (self.width, self.height, self.channels) == (other.width, other.height, other.channels)
    }
}

/// Channel stacks of both dates of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStacks {
    pub earlier: Stack,
    pub later: Stack,
}

impl PairStacks {
    pub fn new(earlier: Stack, later: Stack) -> Result<Self> {
        if !earlier.same_shape(&later) {
            return Err(Error::DimensionMismatch(format!(
                "stacks {}x{}x{} and {}x{}x{}",
                earlier.width, earlier.height, earlier.channels, later.width, later.height, later.channels
            )));
        }
        Ok(PairStacks { earlier, later })
    }

    pub fn width(&self) -> usize {
        self.earlier.width
    }

    pub fn height(&self) -> usize {
        self.earlier.height
    }

    pub fn channels(&self) -> usize {
        self.earlier.channels
    }
}

/// Interleaves the bands of `mode` in their canonical order.
pub fn select_channels(img: &MultispectralImage, mode: ChannelMode) -> Result<Stack> {
    let bands = mode
        .band_list()
        .iter()
        .map(|&id| img.band(id).ok_or(Error::MissingBand(id)))
        .collect::<Result<Vec<_>>>()?;
    let (w, h, c) = (img.grid_width, img.grid_height, bands.len());
    let mut data = vec![0.0f32; w * h * c];
    for (ch, band) in bands.iter().enumerate() {
        for (i, &v) in band.values.iter().enumerate() {
            data[i * c + ch] = v;
        }
    }
    Stack::new(w, h, c, data)
}
