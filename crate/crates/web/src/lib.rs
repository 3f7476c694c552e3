//! WebAssembly bindings for a single-page demo: render a synthetic pair,
//! threshold a classical difference image, and watch Gaussian voting clean
//! up noisy per-patch decisions.
//!
//! Every image crosses the boundary as `width × height × 4` RGBA bytes.

use changecnn::baselines::{difference_image, otsu_threshold, BaselineMethod, BaselineParams, DEFAULT_OTSU_BINS};
use changecnn::dataset::{generate_synthetic, BinaryMap, ChannelMode, ImagePair, PairStacks, Stack};
use changecnn::inference::{gaussian_kernel, threshold_map, vote_map, PatchClassifier};
use changecnn::metrics::{confusion, report};
use changecnn::{Error, Result, PATCH_SIZE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Percentile stretch of an RGB stack to 8 bits, with limits taken from
/// `reference` so both dates share one scale.
fn stretch_rgb(stack: &Stack, reference: &Stack) -> Vec<u8> {
    let limits: Vec<(f32, f32)> = (0..3)
        .map(|ch| {
            let mut v: Vec<f32> = reference.data.iter().skip(ch).step_by(reference.channels).copied().collect();
            v.sort_by(f32::total_cmp);
            let at = |q: f64| v[((v.len() - 1) as f64 * q) as usize];
            (at(0.02), at(0.98) * 1.4)
        })
        .collect();
    stack
        .data
        .chunks_exact(stack.channels)
        .flat_map(|px| {
            let mut rgba = [255u8; 4];
            for (ch, &(lo, hi)) in limits.iter().enumerate() {
                rgba[ch] = ((px[ch] - lo) / (hi - lo).max(1.0) * 255.0).clamp(0.0, 255.0) as u8;
            }
            rgba
        })
        .collect()
}

fn gray(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values
        .flat_map(|v| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

/// White: hit, red: false alarm, orange: miss, black: correct rejection.
fn outcome(pred: &BinaryMap, truth: &BinaryMap) -> Vec<u8> {
    pred.values
        .iter()
        .zip(&truth.values)
        .flat_map(|(&p, &t)| match (p != 0, t != 0) {
            (true, true) => [255, 255, 255, 255],
            (true, false) => [230, 40, 40, 255],
            (false, true) => [255, 150, 0, 255],
            (false, false) => [0, 0, 0, 255],
        })
        .collect()
}

/// Two images and a small score card.
#[wasm_bindgen]
pub struct MapView {
    values: Vec<u8>,
    outcome: Vec<u8>,
    range: (f64, f64),
    threshold: f64,
    overall: f64,
    change: f64,
    no_change: f64,
}

#[wasm_bindgen]
impl MapView {
    /// Statistic or probability map, scaled to gray.
    pub fn values(&self) -> Vec<u8> {
        self.values.clone()
    }

    /// Thresholded map colored against ground truth.
    pub fn outcome(&self) -> Vec<u8> {
        self.outcome.clone()
    }

    /// Value mapped to black in [`values`](Self::values).
    #[wasm_bindgen(getter)]
    pub fn range_min(&self) -> f64 {
        self.range.0
    }

    /// Value mapped to white in [`values`](Self::values).
    #[wasm_bindgen(getter)]
    pub fn range_max(&self) -> f64 {
        self.range.1
    }

    #[wasm_bindgen(getter)]
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Overall accuracy in percent.
    #[wasm_bindgen(getter)]
    pub fn overall(&self) -> f64 {
        self.overall
    }

    #[wasm_bindgen(getter)]
    pub fn change(&self) -> f64 {
        self.change
    }

    #[wasm_bindgen(getter)]
    pub fn no_change(&self) -> f64 {
        self.no_change
    }
}

impl MapView {
    fn new(values: Vec<u8>, range: (f64, f64), pred: &BinaryMap, truth: &BinaryMap, threshold: f64) -> Result<Self> {
        let r = report(&confusion(pred, truth)?);
        Ok(MapView {
            values,
            range,
            outcome: outcome(pred, truth),
            threshold,
            overall: r.overall_accuracy.unwrap_or(f64::NAN),
            change: r.change_accuracy.unwrap_or(f64::NAN),
            no_change: r.no_change_accuracy.unwrap_or(f64::NAN),
        })
    }
}

/// Reads a classifier decision planted at each patch center.
struct CenterReader;

impl PatchClassifier for CenterReader {
    fn channels(&self) -> usize {
        1
    }

    fn classify(&self, earlier: &[f32], _later: &[f32], n: usize) -> Result<Vec<f64>> {
        let area = PATCH_SIZE * PATCH_SIZE;
        Ok((0..n).map(|i| earlier[i * area + area / 2] as f64).collect())
    }
}

/// One synthetic region with ground truth.
#[wasm_bindgen]
pub struct Scene {
    pair: ImagePair,
    stacks: PairStacks,
    truth: BinaryMap,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: usize) -> std::result::Result<Scene, JsError> {
        Scene::generate(seed, size).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.pair.width()
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.pair.height()
    }

    pub fn earlier(&self) -> Vec<u8> {
        stretch_rgb(&self.stacks.earlier, &self.stacks.earlier)
    }

    pub fn later(&self) -> Vec<u8> {
        stretch_rgb(&self.stacks.later, &self.stacks.earlier)
    }

    pub fn truth(&self) -> Vec<u8> {
        gray(self.truth.values.iter().map(|&v| v as f64))
    }

    /// `method` is `diff`, `logratio` or `glrt`; a missing threshold selects
    /// Otsu's.
    pub fn baseline(&self, method: &str, threshold: Option<f64>) -> std::result::Result<MapView, JsError> {
        self.try_baseline(method, threshold).map_err(js)
    }

    /// Votes per-patch decisions that are right with probability
    /// `1 - flip_rate`, each reported with confidence `confidence`.
    pub fn vote(&self, flip_rate: f64, confidence: f64, stride: usize, sigma: f64, seed: u32) -> std::result::Result<MapView, JsError> {
        self.try_vote(flip_rate, confidence, stride, sigma, seed).map_err(js)
    }
}

impl Scene {
    pub fn generate(seed: u32, size: usize) -> Result<Scene> {
        let pair = generate_synthetic(seed as u64, 1, size, 3)?.remove(0);
        let stacks = pair.stacks(ChannelMode::C3)?;
        let truth = pair.ground_truth.clone().expect("synthetic pairs are labelled");
        Ok(Scene { pair, stacks, truth })
    }

    pub fn try_baseline(&self, method: &str, threshold: Option<f64>) -> Result<MapView> {
        let method: BaselineMethod = method.parse()?;
        let diff = difference_image(method, &self.stacks, &BaselineParams::default())?;
        let t = match threshold {
            Some(t) => t,
            None => otsu_threshold(&diff, DEFAULT_OTSU_BINS)?,
        };
        let (lo, hi) = diff.min_max();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let values = gray(diff.values.iter().map(|v| (v - lo) / span));
        MapView::new(values, (lo, hi), &diff.threshold(t), &self.truth, t)
    }

    pub fn try_vote(&self, flip_rate: f64, confidence: f64, stride: usize, sigma: f64, seed: u32) -> Result<MapView> {
        if !(0.0..=1.0).contains(&flip_rate) || !(0.5..=1.0).contains(&confidence) {
            return Err(Error::InvalidArgument("flip rate must be in [0, 1] and confidence in [0.5, 1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let planted: Vec<f32> = self
            .truth
            .values
            .iter()
            .map(|&t| {
                let said = (t != 0) != rng.gen_bool(flip_rate);
                (if said { confidence } else { 1.0 - confidence }) as f32
            })
            .collect();
        let (w, h) = (self.width(), self.height());
        let plane = Stack::new(w, h, 1, planted)?;
        let stacks = PairStacks::new(plane.clone(), plane)?;
        let map = vote_map(&CenterReader, &stacks, stride, &gaussian_kernel(PATCH_SIZE, sigma)?)?;
        let pred = threshold_map(&map, 0.5)?;
        MapView::new(gray(map.values.iter().copied()), (0.0, 1.0), &pred, &self.truth, 0.5)
    }
}
