//! Deterministic synthetic change-detection regions.
//!
//! Every region has a smooth, spectrally mixed background with a fine
//! texture, observed twice. The later date differs by a global gain/offset
//! and low-frequency noise. Textured blobs are brightened or darkened in
//! place and axis-aligned rectangles are repainted as flat surfaces, both by
//! factors drawn from the same range. Only the rectangles are labelled as
//! change, so no per-pixel statistic separates the classes; the loss of
//! texture does.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{BandId, BandRaster, BinaryMap, ImagePair, MultispectralImage, Resolution};
use crate::{Error, Result, PATCH_SIZE};

/// Bands carried by a synthetic image with `n` channels are the first `n` of
/// this list, so 3, 4, 10 and 13 channels cover exactly the matching
/// [`ChannelMode`](super::ChannelMode) subsets.
pub const SYNTHETIC_BAND_ORDER: [BandId; 13] = [
    BandId::B04,
    BandId::B03,
    BandId::B02,
    BandId::B08,
    BandId::B05,
    BandId::B06,
    BandId::B07,
    BandId::B8A,
    BandId::B11,
    BandId::B12,
    BandId::B01,
    BandId::B09,
    BandId::B10,
];

/// Smallest region side accepted by the generator.
pub const MIN_SYNTHETIC_SIZE: usize = 32;

const LATENT_FIELDS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_regions: usize,
    pub size: usize,
    pub n_channels: usize,
    /// Inclusive range of changed rectangles per region.
    pub rects: (usize, usize),
    /// Inclusive range of unlabelled rescaled blobs per region.
    pub distractors: (usize, usize),
    /// Inclusive range of rectangle side lengths; `None` scales with `size`.
    pub rect_side: Option<(usize, usize)>,
    /// Inclusive range of the global multiplicative gain on the later date.
    pub gain: (f64, f64),
    /// Maximum absolute per-band additive offset on the later date.
    pub offset: f64,
    /// Amplitude of the unlabelled low-frequency noise on the later date.
    pub smooth_noise: f64,
    /// Standard deviation of per-pixel sensor noise on both dates.
    pub sensor_noise: f64,
    /// Amplitude of the fine background texture shared by both dates.
    pub texture: f64,
    /// Range of the relative brightening `k - 1` of rectangles and blobs.
    /// Each one is scaled by `k` or `1 / k` with equal probability.
    pub contrast: (f64, f64),
}

impl SyntheticConfig {
    pub fn new(seed: u64, n_regions: usize, size: usize, n_channels: usize) -> Self {
        SyntheticConfig {
            seed,
            n_regions,
            size,
            n_channels,
            rects: (4, 10),
            distractors: (12, 20),
            rect_side: None,
            gain: (0.95, 1.1),
            offset: 120.0,
            smooth_noise: 60.0,
            sensor_noise: 20.0,
            texture: 800.0,
            contrast: (0.35, 0.8),
        }
    }

    fn side_range(&self) -> (usize, usize) {
        self.rect_side.unwrap_or_else(|| {
            let lo = (self.size * 3 / 16).max(4);
            (lo, (self.size * 3 / 8).max(lo))
        })
    }
}

/// Generates `n_regions` pairs with default appearance parameters.
pub fn generate_synthetic(seed: u64, n_regions: usize, size: usize, n_channels: usize) -> Result<Vec<ImagePair>> {
    generate_synthetic_with(&SyntheticConfig::new(seed, n_regions, size, n_channels))
}

pub fn generate_synthetic_with(cfg: &SyntheticConfig) -> Result<Vec<ImagePair>> {
    if cfg.size < MIN_SYNTHETIC_SIZE.max(PATCH_SIZE + 2) {
        return Err(Error::invalid(format!(
            "synthetic regions must be at least {MIN_SYNTHETIC_SIZE} pixels, got {}",
            cfg.size
        )));
    }
    if cfg.n_channels == 0 || cfg.n_channels > SYNTHETIC_BAND_ORDER.len() {
        return Err(Error::invalid(format!(
            "synthetic channel count must be in 1..=13, got {}",
            cfg.n_channels
        )));
    }
    let (side_lo, side_hi) = cfg.side_range();
    if side_lo == 0 || side_lo > side_hi || side_hi > cfg.size || cfg.rects.0 > cfg.rects.1 || cfg.distractors.0 > cfg.distractors.1 {
        return Err(Error::invalid("inconsistent rectangle ranges"));
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_regions)
        .map(|i| {
            let region_seed: u64 = master.gen();
            generate_region(cfg, i, &mut ChaCha8Rng::seed_from_u64(region_seed))
        })
        .collect()
}

fn generate_region(cfg: &SyntheticConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<ImagePair> {
    let n = cfg.size;
    let c = cfg.n_channels;

    let latents: Vec<Vec<f64>> = (0..LATENT_FIELDS).map(|_| smooth_field(n, 6, rng)).collect();
    let base: Vec<f64> = (0..c).map(|_| rng.gen_range(3000.0..4500.0)).collect();
    let mixing: Vec<[f64; LATENT_FIELDS]> = (0..c)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-350.0..350.0)))
        .collect();

    let smooth: Vec<Vec<f64>> = (0..c)
        .map(|ch| {
            (0..n * n)
                .map(|p| base[ch] + (0..LATENT_FIELDS).map(|k| mixing[ch][k] * latents[k][p]).sum::<f64>())
                .collect()
        })
        .collect();
    let fine = smooth_field(n, 1, rng);
    let texture_gain: Vec<f64> = (0..c).map(|_| cfg.texture * rng.gen_range(0.7..1.0)).collect();
    let background: Vec<Vec<f64>> = smooth
        .iter()
        .zip(&texture_gain)
        .map(|(plane, &t)| plane.iter().zip(&fine).map(|(v, f)| v + t * f).collect())
        .collect();

    let gain = rng.gen_range(cfg.gain.0..=cfg.gain.1);
    let offsets: Vec<f64> = (0..c).map(|_| rng.gen_range(-cfg.offset..=cfg.offset)).collect();
    let drift: Vec<Vec<f64>> = (0..c).map(|_| smooth_field(n, 3, rng)).collect();

    let mut later: Vec<Vec<f64>> = (0..c)
        .map(|ch| {
            (0..n * n)
                .map(|p| background[ch][p] * gain + offsets[ch] + cfg.smooth_noise * drift[ch][p])
                .collect()
        })
        .collect();

    let (side_lo, side_hi) = cfg.side_range();
    let n_blobs = rng.gen_range(cfg.distractors.0..=cfg.distractors.1);
    for _ in 0..n_blobs {
        let cy = rng.gen_range(0.0..n as f64);
        let cx = rng.gen_range(0.0..n as f64);
        let ry = rng.gen_range(side_lo..=side_hi) as f64 / 2.0;
        let rx = rng.gen_range(side_lo..=side_hi) as f64 / 2.0;
        let factor: Vec<f64> = {
            let contrast = rng.gen_range(cfg.contrast.0..=cfg.contrast.1);
            let darken = rng.gen_bool(0.5);
            (0..c).map(|_| scale(contrast + rng.gen_range(-0.05..0.05), darken)).collect()
        };
        for y in 0..n {
            for x in 0..n {
                let d = (((y as f64 - cy) / ry).powi(2) + ((x as f64 - cx) / rx).powi(2)).sqrt();
                // Full strength inside the ellipse, fading out by 1.5 radii.
                let w = ((1.5 - d) / 0.5).clamp(0.0, 1.0);
                if w > 0.0 {
                    for ch in 0..c {
                        later[ch][y * n + x] *= factor[ch].powf(w);
                    }
                }
            }
        }
    }

    let mut gt = BinaryMap::zeros(n, n);
    let n_rects = rng.gen_range(cfg.rects.0..=cfg.rects.1);
    for _ in 0..n_rects {
        let h = rng.gen_range(side_lo..=side_hi);
        let w = rng.gen_range(side_lo..=side_hi);
        let top = rng.gen_range(0..=n - h);
        let left = rng.gen_range(0..=n - w);
        // Textureless surface, brighter or darker than its surroundings by a
        // random factor, with a small per-band tilt.
        let contrast = rng.gen_range(cfg.contrast.0..=cfg.contrast.1);
        let darken = rng.gen_bool(0.5);
        let signature: Vec<f64> = (0..c)
            .map(|ch| {
                let mut sum = 0.0;
                for y in top..top + h {
                    sum += later[ch][y * n + left..y * n + left + w].iter().sum::<f64>();
                }
                sum / (h * w) as f64 * scale(contrast + rng.gen_range(-0.05..0.05), darken)
            })
            .collect();
        for y in top..top + h {
            for x in left..left + w {
                let p = y * n + x;
                gt.values[p] = 1;
                for ch in 0..c {
                    later[ch][p] = signature[ch];
                }
            }
        }
    }

    let mut finish = |planes: Vec<Vec<f64>>| -> Result<MultispectralImage> {
        let bands = planes
            .into_iter()
            .enumerate()
            .map(|(ch, plane)| {
                let values = plane
                    .into_iter()
                    .map(|v| (v + cfg.sensor_noise * gaussian(rng)).round().clamp(0.0, 65535.0) as f32)
                    .collect();
                BandRaster::new(n, n, Resolution::M10, values).map(|b| (SYNTHETIC_BAND_ORDER[ch], b))
            })
            .collect::<Result<Vec<_>>>()?;
        MultispectralImage::new(bands)
    };
    let earlier = finish(background)?;
    let later = finish(later)?;
    ImagePair::new(
        format!("synth_{index:03}"),
        earlier,
        later,
        Some(gt),
        ["2016-01-01".into(), "2018-01-01".into()],
    )
}

fn scale(contrast: f64, darken: bool) -> f64 {
    if darken {
        1.0 / (1.0 + contrast)
    } else {
        1.0 + contrast
    }
}

/// White noise blurred by three passes of a `2r+1` box filter, rescaled to
/// unit standard deviation.
fn smooth_field(n: usize, radius: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut field: Vec<f64> = (0..n * n).map(|_| gaussian(rng)).collect();
    for _ in 0..3 {
        field = box_blur(&field, n, radius);
    }
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let std = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / field.len() as f64).sqrt();
    field.iter().map(|v| (v - mean) / std.max(1e-12)).collect()
}

fn box_blur(src: &[f64], n: usize, r: usize) -> Vec<f64> {
    let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
    let k = (2 * r + 1) as f64;
    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let s: f64 = (-(r as isize)..=r as isize).map(|d| src[y * n + clamp(x as isize + d)]).sum();
            tmp[y * n + x] = s / k;
        }
    }
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let s: f64 = (-(r as isize)..=r as isize).map(|d| tmp[clamp(y as isize + d) * n + x]).sum();
            out[y * n + x] = s / k;
        }
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}
