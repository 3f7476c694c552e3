//! Full-image change maps from strided patch classification with
//! Gaussian-weighted voting.

use std::path::Path;

use crate::dataset::{pgm, BinaryMap, PairStacks};
use crate::models::{ChangeModel, Network};
use crate::patching::{crop_into, Padding};
use crate::{Error, Result, PATCH_SIZE};

/// Anything that maps batches of patch pairs to change probabilities.
pub trait PatchClassifier: Sync {
    fn channels(&self) -> usize;

    /// `p_change` for `n` pairs given as `n × 15 × 15 × C` buffers.
    fn classify(&self, earlier: &[f32], later: &[f32], n: usize) -> Result<Vec<f64>>;
}

impl PatchClassifier for Network<f32> {
    fn channels(&self) -> usize {
        self.arch().channels
    }

    fn classify(&self, earlier: &[f32], later: &[f32], n: usize) -> Result<Vec<f64>> {
        let p = self.predict(earlier, later, n)?;
        Ok(p.chunks_exact(2).map(|r| r[1] as f64).collect())
    }
}

impl PatchClassifier for ChangeModel {
    fn channels(&self) -> usize {
        self.network.channels()
    }

    fn classify(&self, earlier: &[f32], later: &[f32], n: usize) -> Result<Vec<f64>> {
        self.network.classify(earlier, later, n)
    }
}

/// Square voting weights centred on the patch's middle pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteKernel {
    size: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl VoteKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dy, dx)` from the center.
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = (self.size / 2) as isize;
        self.weights[((dy + r) * self.size as isize + dx + r) as usize]
    }

    pub fn is_delta(&self) -> bool {
        self.sigma == 0.0
    }

    /// Largest offset that receives a nonzero weight.
    pub fn support_radius(&self) -> usize {
        if self.is_delta() {
            0
        } else {
            self.size / 2
        }
    }
}

/// `w(dy, dx) = exp(−(dy² + dx²) / (2σ²))`; `sigma = 0` gives the
/// center-only delta kernel.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<VoteKernel> {
    if size % 2 == 0 {
        return Err(Error::invalid(format!("vote kernel size must be odd, got {size}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be finite and nonnegative, got {sigma}")));
    }
    let r = (size / 2) as isize;
    let mut weights = Vec::with_capacity(size * size);
    for dy in -r..=r {
        for dx in -r..=r {
            let w = if sigma == 0.0 {
                if dy == 0 && dx == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp()
            };
            weights.push(w);
        }
    }
    Ok(VoteKernel { size, sigma, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ProbabilityMap {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// 16-bit samples, `round(p · 65535)`.
    pub fn to_u16(&self) -> Vec<u16> {
        self.values
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect()
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        pgm::write_u16(path, self.width, self.height, &self.to_u16())
    }
}

/// Writes a change map as 8-bit PGM, 255 = change.
pub fn write_change_map(map: &BinaryMap, path: &Path) -> Result<()> {
    let samples: Vec<u8> = map.values.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    pgm::write_u8(path, map.width, map.height, &samples)
}

/// Patch centers along one axis: `0, s, 2s, …` and always the last index.
pub fn axis_centers(len: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..len).step_by(stride).collect();
    if out.last() != Some(&(len - 1)) {
        out.push(len - 1);
    }
    out
}

/// Rejects strides that would leave pixels without votes.
pub fn check_coverage(stride: usize, kernel: &VoteKernel) -> Result<()> {
    if !(1..=PATCH_SIZE).contains(&stride) {
        return Err(Error::invalid(format!("stride must be in 1..=15, got {stride}")));
    }
    if kernel.size() != PATCH_SIZE {
        return Err(Error::invalid(format!("vote kernel must be 15x15, got {0}x{0}", kernel.size())));
    }
    let reach = 2 * kernel.support_radius() + 1;
    if stride > reach {
        return Err(Error::invalid(format!(
            "stride {stride} leaves pixels uncovered by a kernel reaching {reach} pixels (use stride <= {reach})"
        )));
    }
    Ok(())
}

/// Patches classified per call.
const BATCH: usize = 256;

/// Classifies a patch at every stride-grid center (mirror-padded at the
/// borders) and averages the change probabilities each pixel receives,
/// weighted by `kernel` around each patch center.
///
/// Accumulation runs in raster order of the centers with `f64` numerator and
/// denominator maps, so the result does not depend on batching or threads.
pub fn vote_map(classifier: &dyn PatchClassifier, stacks: &PairStacks, stride: usize, kernel: &VoteKernel) -> Result<ProbabilityMap> {
    check_coverage(stride, kernel)?;
    let c = stacks.channels();
    if c != classifier.channels() {
        return Err(Error::Incompatible(format!(
            "classifier takes {} channels, image has {c}",
            classifier.channels()
        )));
    }
    let (w, h) = (stacks.width(), stacks.height());
    if w == 0 || h == 0 {
        return Err(Error::invalid("empty image"));
    }
    let rows = axis_centers(h, stride);
    let cols = axis_centers(w, stride);
    let centers: Vec<(usize, usize)> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();

    let probs = classify_all(classifier, stacks, &centers)?;

    let mut num = vec![0.0f64; w * h];
    let mut den = vec![0.0f64; w * h];
    let r = kernel.support_radius() as isize;
    for (&(cy, cx), &p) in centers.iter().zip(&probs) {
        for dy in -r..=r {
            let y = cy as isize + dy;
            if y < 0 || y >= h as isize {
                continue;
            }
            for dx in -r..=r {
                let x = cx as isize + dx;
                if x < 0 || x >= w as isize {
                    continue;
                }
                let wgt = kernel.at(dy, dx);
                let i = y as usize * w + x as usize;
                num[i] += p * wgt;
                den[i] += wgt;
            }
        }
    }
    let values = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| {
            debug_assert!(d > 0.0);
            (n / d).clamp(0.0, 1.0)
        })
        .collect();
    Ok(ProbabilityMap { width: w, height: h, values })
}

fn classify_all(classifier: &dyn PatchClassifier, stacks: &PairStacks, centers: &[(usize, usize)]) -> Result<Vec<f64>> {
    let run = |chunk: &[(usize, usize)]| -> Result<Vec<f64>> {
        let plane = PATCH_SIZE * PATCH_SIZE * stacks.channels();
        let mut earlier = vec![0.0; chunk.len() * plane];
        let mut later = vec![0.0; chunk.len() * plane];
        for (i, &center) in chunk.iter().enumerate() {
            crop_into(&stacks.earlier, center, PATCH_SIZE, Padding::Mirror, &mut earlier[i * plane..(i + 1) * plane])?;
            crop_into(&stacks.later, center, PATCH_SIZE, Padding::Mirror, &mut later[i * plane..(i + 1) * plane])?;
        }
        classifier.classify(&earlier, &later, chunk.len())
    };
    #[cfg(feature = "parallel")]
    let chunks: Vec<Result<Vec<f64>>> = {
        use rayon::prelude::*;
        centers.par_chunks(BATCH).map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let chunks: Vec<Result<Vec<f64>>> = centers.chunks(BATCH).map(run).collect();
    let mut out = Vec::with_capacity(centers.len());
    for chunk in chunks {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Change where `p ≥ t`.
pub fn threshold_map(map: &ProbabilityMap, t: f64) -> Result<BinaryMap> {
    if !t.is_finite() {
        return Err(Error::invalid(format!("threshold must be finite, got {t}")));
    }
    BinaryMap::new(map.width, map.height, map.values.iter().map(|&p| u8::from(p >= t)).collect())
}
