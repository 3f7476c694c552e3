//! Patch centers, patch extraction, dihedral augmentation, class weights and
//! the shuffled training stream.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{BinaryMap, PairStacks, Stack};
use crate::{Error, Result, PATCH_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    NoChange,
    Change,
}

impl Label {
    pub fn from_bool(change: bool) -> Self {
        if change {
            Label::Change
        } else {
            Label::NoChange
        }
    }

    /// Output index of the class: 0 = no change, 1 = change.
    pub fn index(self) -> usize {
        match self {
            Label::NoChange => 0,
            Label::Change => 1,
        }
    }
}

/// Square `size × size × channels` patch, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Patch {
    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.size + col) * self.channels + ch]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub earlier: Patch,
    pub later: Patch,
    pub label: Label,
    pub center: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// The patch must lie inside the image.
    None,
    /// Reflect across the border without repeating the edge pixel.
    Mirror,
}

/// Regular grid of patch centers whose patches lie fully inside a
/// `grid_w × grid_h` image. Rows and columns step by `stride` from the first
/// valid index and always include the last valid one.
pub fn valid_centers(grid_w: usize, grid_h: usize, patch_size: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if patch_size % 2 == 0 {
        return Err(Error::invalid(format!("patch size must be odd, got {patch_size}")));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let rows = axis_centers(grid_h, patch_size, stride);
    let cols = axis_centers(grid_w, patch_size, stride);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect())
}

fn axis_centers(len: usize, patch_size: usize, stride: usize) -> Vec<usize> {
    if len < patch_size {
        return Vec::new();
    }
    let half = patch_size / 2;
    let last = len - 1 - half;
    let mut out: Vec<usize> = (half..=last).step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Reflect-101 index map: `-1 → 1`, `len → len - 2`.
#[inline]
pub(crate) fn mirror_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Copies the `size × size` window centred on `center` into `out`.
pub(crate) fn crop_into(stack: &Stack, center: (usize, usize), size: usize, padding: Padding, out: &mut [f32]) -> Result<()> {
    let half = (size / 2) as isize;
    let (cr, cc) = (center.0 as isize, center.1 as isize);
    let c = stack.channels;
    debug_assert_eq!(out.len(), size * size * c);
    let inside = cr >= half
        && cc >= half
        && cr + half < stack.height as isize
        && cc + half < stack.width as isize;
    if inside {
        for dy in 0..size {
            let row = (cr - half) as usize + dy;
            let start = (row * stack.width + (cc - half) as usize) * c;
            out[dy * size * c..(dy + 1) * size * c].copy_from_slice(&stack.data[start..start + size * c]);
        }
        return Ok(());
    }
    match padding {
        Padding::None => Err(Error::invalid(format!(
            "patch centred at {center:?} leaves the {}x{} image",
            stack.width, stack.height
        ))),
        Padding::Mirror => {
            if center.0 >= stack.height || center.1 >= stack.width {
                return Err(Error::invalid(format!("center {center:?} outside the image")));
            }
            for dy in 0..size {
                let row = mirror_index(cr - half + dy as isize, stack.height);
                for dx in 0..size {
                    let col = mirror_index(cc - half + dx as isize, stack.width);
                    let dst = (dy * size + dx) * c;
                    out[dst..dst + c].copy_from_slice(stack.pixel(row, col));
                }
            }
            Ok(())
        }
    }
}

pub fn extract_patch(stack: &Stack, center: (usize, usize), size: usize, padding: Padding) -> Result<Patch> {
    let mut data = vec![0.0; size * size * stack.channels];
    crop_into(stack, center, size, padding, &mut data)?;
    Ok(Patch {
        size,
        channels: stack.channels,
        data,
    })
}

/// Crops the 15×15 patches of both dates at `center`. The label is read from
/// the ground truth when one is given, and is `NoChange` otherwise.
pub fn extract_patch_pair(
    stacks: &PairStacks,
    ground_truth: Option<&BinaryMap>,
    center: (usize, usize),
    padding: Padding,
) -> Result<PatchPair> {
    let earlier = extract_patch(&stacks.earlier, center, PATCH_SIZE, padding)?;
    let later = extract_patch(&stacks.later, center, PATCH_SIZE, padding)?;
    let label = Label::from_bool(ground_truth.is_some_and(|gt| gt.get(center.0, center.1)));
    Ok(PatchPair {
        earlier,
        later,
        label,
        center,
    })
}

/// One of the eight symmetries of the square.
///
/// Id `k` in `0..4` is `k` counter-clockwise quarter turns; ids `4..8` apply
/// a horizontal flip first and then `k - 4` quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AugmentationId(u8);

impl AugmentationId {
    pub const IDENTITY: AugmentationId = AugmentationId(0);

    pub fn new(id: u8) -> Result<Self> {
        if id < 8 {
            Ok(AugmentationId(id))
        } else {
            Err(Error::invalid(format!("augmentation id {id} not in 0..8")))
        }
    }

    pub fn all() -> impl Iterator<Item = AugmentationId> {
        (0..8).map(AugmentationId)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn quarter_turns(self) -> u8 {
        self.0 % 4
    }

    pub fn flipped(self) -> bool {
        self.0 >= 4
    }

    fn from_parts(turns: u8, flip: bool) -> Self {
        AugmentationId(turns % 4 + if flip { 4 } else { 0 })
    }

    /// The transform equal to applying `self` first and then `next`.
    pub fn then(self, next: AugmentationId) -> AugmentationId {
        // Elements are R^k F^f. Since F R = R^-1 F:
        // R^b F^g · R^a F^f = R^(b ± a) F^(g+f), with − when g = 1.
        let (a, f) = (self.quarter_turns(), self.flipped());
        let (b, g) = (next.quarter_turns(), next.flipped());
        let turns = if g { b + 4 - a } else { b + a };
        AugmentationId::from_parts(turns, f != g)
    }

    pub fn inverse(self) -> AugmentationId {
        if self.flipped() {
            self
        } else {
            AugmentationId::from_parts(4 - self.quarter_turns(), false)
        }
    }

    /// Source pixel of output pixel `(row, col)` in an `n × n` patch.
    #[inline]
    pub fn source(self, row: usize, col: usize, n: usize) -> (usize, usize) {
        // Undo the quarter turns, then the flip. One CCW turn maps
        // out(y, x) = in(x, n-1-y).
        let (mut r, mut c) = (row, col);
        for _ in 0..self.quarter_turns() {
            (r, c) = (c, n - 1 - r);
        }
        if self.flipped() {
            c = n - 1 - c;
        }
        (r, c)
    }
}

/// Permutes the pixels of a square patch; channel vectors move intact.
pub fn dihedral_transform(patch: &Patch, id: AugmentationId) -> Patch {
    let mut data = vec![0.0; patch.data.len()];
    transform_into(&patch.data, patch.size, patch.channels, id, &mut data);
    Patch {
        size: patch.size,
        channels: patch.channels,
        data,
    }
}

/// Same as [`dihedral_transform`] on a raw `h × w × c` buffer; rejects
/// non-square input.
pub fn dihedral_transform_raw(data: &[f32], h: usize, w: usize, c: usize, id: AugmentationId) -> Result<Vec<f32>> {
    if h != w {
        return Err(Error::invalid(format!("dihedral transform needs a square patch, got {h}x{w}")));
    }
    if data.len() != h * w * c {
        return Err(Error::DimensionMismatch(format!("{} values for {h}x{w}x{c}", data.len())));
    }
    let mut out = vec![0.0; data.len()];
    transform_into(data, h, c, id, &mut out);
    Ok(out)
}

pub(crate) fn transform_into(src: &[f32], n: usize, c: usize, id: AugmentationId, out: &mut [f32]) {
    if id == AugmentationId::IDENTITY {
        out.copy_from_slice(src);
        return;
    }
    for r in 0..n {
        for col in 0..n {
            let (sr, sc) = id.source(r, col, n);
            let s = (sr * n + sc) * c;
            let d = (r * n + col) * c;
            out[d..d + c].copy_from_slice(&src[s..s + c]);
        }
    }
}

/// Loss weights inversely proportional to class frequency.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassWeights {
    pub change: f64,
    pub no_change: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        change: 1.0,
        no_change: 1.0,
    };

    pub fn for_label(&self, label: Label) -> f64 {
        match label {
            Label::Change => self.change,
            Label::NoChange => self.no_change,
        }
    }
}

/// `w_k = (n_change + n_no_change) / (2 n_k)`, so balanced data gets unit
/// weights and `w_k · n_k` is the same for both classes.
pub fn class_weights(n_change: u64, n_no_change: u64) -> Result<ClassWeights> {
    if n_change == 0 || n_no_change == 0 {
        return Err(Error::Degenerate(format!(
            "class weights need both classes (change {n_change}, no change {n_no_change})"
        )));
    }
    let total = (n_change + n_no_change) as f64;
    Ok(ClassWeights {
        change: total / (2.0 * n_change as f64),
        no_change: total / (2.0 * n_no_change as f64),
    })
}

/// A labelled training region: channel stacks and ground truth.
#[derive(Debug, Clone)]
pub struct TrainingRegion {
    pub stacks: PairStacks,
    pub ground_truth: BinaryMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamItem {
    pub region: usize,
    pub center: (usize, usize),
    pub augmentation: AugmentationId,
}

/// A batch of augmented patch pairs, laid out as `n × 15 × 15 × C` buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    pub len: usize,
    pub channels: usize,
    pub earlier: Vec<f32>,
    pub later: Vec<f32>,
    pub labels: Vec<Label>,
}

/// Exhaustive `(center × augmentation)` enumeration over labelled regions,
/// reshuffled deterministically every epoch.
#[derive(Debug, Clone)]
pub struct TrainingStream<'a> {
    regions: &'a [TrainingRegion],
    items: Vec<StreamItem>,
    seed: u64,
    batch_size: usize,
}

impl<'a> TrainingStream<'a> {
    /// Enumerates interior patch centers on a `center_stride` grid.
    pub fn new(regions: &'a [TrainingRegion], center_stride: usize, seed: u64, batch_size: usize) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::Degenerate("training stream needs at least one labelled region".into()));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let channels = regions[0].stacks.channels();
        let mut items = Vec::new();
        for (ri, region) in regions.iter().enumerate() {
            let s = &region.stacks;
            if s.channels() != channels {
                return Err(Error::DimensionMismatch("training regions differ in channel count".into()));
            }
            if (region.ground_truth.width, region.ground_truth.height) != (s.width(), s.height()) {
                return Err(Error::DimensionMismatch(format!("ground truth of region {ri} does not match its stacks")));
            }
            for center in valid_centers(s.width(), s.height(), PATCH_SIZE, center_stride)? {
                for augmentation in AugmentationId::all() {
                    items.push(StreamItem {
                        region: ri,
                        center,
                        augmentation,
                    });
                }
            }
        }
        if items.is_empty() {
            return Err(Error::Degenerate("no training region is large enough for a patch".into()));
        }
        Ok(TrainingStream {
            regions,
            items,
            seed,
            batch_size,
        })
    }

    pub fn channels(&self) -> usize {
        self.regions[0].stacks.channels()
    }

    /// Items per epoch: eight per center.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(n_change, n_no_change)` over distinct centers.
    pub fn label_counts(&self) -> (u64, u64) {
        let mut change = 0;
        let mut total = 0;
        for item in self.items.iter().filter(|i| i.augmentation == AugmentationId::IDENTITY) {
            total += 1;
            if self.label(item) == Label::Change {
                change += 1;
            }
        }
        (change, total - change)
    }

    pub fn label(&self, item: &StreamItem) -> Label {
        Label::from_bool(self.regions[item.region].ground_truth.get(item.center.0, item.center.1))
    }

    /// Items of epoch `epoch` in visiting order.
    pub fn epoch_order(&self, epoch: usize) -> Vec<StreamItem> {
        let mut order = self.items.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        order
    }

    /// Batches of epoch `epoch`; every batch has `batch_size` items except
    /// possibly the last.
    pub fn epoch(&self, epoch: usize) -> impl Iterator<Item = PatchBatch> + '_ {
        let order = self.epoch_order(epoch);
        let batch_size = self.batch_size;
        (0..order.len().div_ceil(batch_size)).map(move |b| {
            let end = ((b + 1) * batch_size).min(order.len());
            self.materialize(&order[b * batch_size..end])
        })
    }

    pub fn materialize(&self, items: &[StreamItem]) -> PatchBatch {
        let c = self.channels();
        let plane = PATCH_SIZE * PATCH_SIZE * c;
        let mut earlier = vec![0.0; items.len() * plane];
        let mut later = vec![0.0; items.len() * plane];
        let mut scratch = vec![0.0; plane];
        let mut labels = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let region = &self.regions[item.region];
            for (stack, out) in [
                (&region.stacks.earlier, &mut earlier[i * plane..(i + 1) * plane]),
                (&region.stacks.later, &mut later[i * plane..(i + 1) * plane]),
            ] {
                crop_into(stack, item.center, PATCH_SIZE, Padding::None, &mut scratch)
                    .expect("stream centers are interior");
                transform_into(&scratch, PATCH_SIZE, c, item.augmentation, out);
            }
            labels.push(self.label(item));
        }
        PatchBatch {
            len: items.len(),
            channels: c,
            earlier,
            later,
            labels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Stack;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn ramp_stack(w: usize, h: usize, c: usize) -> Stack {
        Stack::new(w, h, c, (0..w * h * c).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn minimal_grid_has_one_center() {
        assert_eq!(valid_centers(15, 15, 15, 1).unwrap(), vec![(7, 7)]);
    }

    #[test]
    fn seventeen_square_has_nine_centers() {
        assert_eq!(valid_centers(17, 17, 15, 1).unwrap().len(), 9);
    }

    #[test]
    fn strided_count_matches_closed_form() {
        // 586 valid positions per axis; 0, 5, ..., 585 is 118 steps, last included.
        let centers = valid_centers(600, 600, 15, 5).unwrap();
        let per_axis = (600 - 15) / 5 + 1 + usize::from((600 - 15) % 5 != 0);
        assert_eq!(centers.len(), per_axis * per_axis);
        assert!(centers.contains(&(592, 592)));
        let brute = (7..593).filter(|r| (r - 7) % 5 == 0 || *r == 592).count();
        assert_eq!(per_axis, brute);
    }

    #[test]
    fn too_small_grid_has_no_centers() {
        assert!(valid_centers(14, 40, 15, 1).unwrap().is_empty());
        assert!(valid_centers(20, 20, 14, 1).is_err());
        assert!(valid_centers(20, 20, 15, 0).is_err());
    }

    #[test]
    fn interior_crop_equals_direct_indexing() {
        let s = ramp_stack(20, 18, 2);
        let p = extract_patch(&s, (9, 10), 15, Padding::None).unwrap();
        for r in 0..15 {
            for c in 0..15 {
                for ch in 0..2 {
                    assert_eq!(p.get(r, c, ch), s.get(9 - 7 + r, 10 - 7 + c, ch));
                }
            }
        }
    }

    #[test]
    fn out_of_bounds_without_padding_fails() {
        let s = ramp_stack(20, 20, 1);
        assert!(extract_patch(&s, (3, 10), 15, Padding::None).is_err());
    }

    #[test]
    fn corner_mirror_padding_reflects_without_repeating_the_edge() {
        // Explicit reflection table for a length-20 axis around index 0:
        // offsets -7..=7 map to 7,6,5,4,3,2,1,0,1,2,...,7.
        let s = ramp_stack(20, 20, 1);
        let p = extract_patch(&s, (0, 0), 15, Padding::Mirror).unwrap();
        let reflect = |o: isize| o.unsigned_abs();
        for dy in 0..15isize {
            for dx in 0..15isize {
                let expected = s.get(reflect(dy - 7), reflect(dx - 7), 0);
                assert_eq!(p.get(dy as usize, dx as usize, 0), expected);
            }
        }
        // Small toy case on a 3-wide axis extended past both ends.
        let toy: Vec<usize> = (-4..7).map(|i| mirror_index(i, 3)).collect();
        assert_eq!(toy, vec![0, 1, 2, 1, 0, 1, 2, 1, 0, 1, 2]);
    }

    #[test]
    fn label_comes_from_the_center() {
        let s = ramp_stack(16, 16, 1);
        let stacks = PairStacks::new(s.clone(), s).unwrap();
        let mut gt = BinaryMap::zeros(16, 16);
        gt.values[8 * 16 + 7] = 1;
        let pp = extract_patch_pair(&stacks, Some(&gt), (8, 7), Padding::None).unwrap();
        assert_eq!(pp.label, Label::Change);
        let pp = extract_patch_pair(&stacks, Some(&gt), (7, 7), Padding::None).unwrap();
        assert_eq!(pp.label, Label::NoChange);
    }

    fn probe() -> Patch {
        Patch {
            size: 3,
            channels: 1,
            data: (0..9).map(|v| v as f32).collect(),
        }
    }

    #[test]
    fn identity_and_quarter_turn_order() {
        let p = probe();
        assert_eq!(dihedral_transform(&p, AugmentationId::IDENTITY), p);
        let r = AugmentationId::new(1).unwrap();
        let mut q = p.clone();
        for _ in 0..4 {
            q = dihedral_transform(&q, r);
        }
        assert_eq!(q, p);
        // One CCW turn moves the top-right corner to the top-left.
        assert_eq!(dihedral_transform(&p, r).data[0], 2.0);
    }

    #[test]
    fn eight_distinct_transforms() {
        let outs: HashSet<Vec<u32>> = AugmentationId::all()
            .map(|id| dihedral_transform(&probe(), id).data.iter().map(|v| *v as u32).collect())
            .collect();
        assert_eq!(outs.len(), 8);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let p = probe();
        for a in AugmentationId::all() {
            for b in AugmentationId::all() {
                let seq = dihedral_transform(&dihedral_transform(&p, a), b);
                assert_eq!(seq, dihedral_transform(&p, a.then(b)), "{a:?} then {b:?}");
            }
            assert_eq!(dihedral_transform(&dihedral_transform(&p, a), a.inverse()), p);
        }
    }

    #[test]
    fn channels_move_together() {
        let p = Patch {
            size: 2,
            channels: 2,
            data: vec![0.0, 10.0, 1.0, 11.0, 2.0, 12.0, 3.0, 13.0],
        };
        let t = dihedral_transform(&p, AugmentationId::new(5).unwrap());
        for px in t.data.chunks(2) {
            assert_eq!(px[1], px[0] + 10.0);
        }
        assert!(dihedral_transform_raw(&p.data, 2, 4, 1, AugmentationId::IDENTITY).is_err());
        assert!(AugmentationId::new(8).is_err());
    }

    #[test]
    fn class_weight_examples() {
        assert_eq!(class_weights(7, 7).unwrap(), ClassWeights::UNIT);
        let w = class_weights(100, 900).unwrap();
        assert_eq!(w.change, 5.0);
        assert!((w.no_change - 5.0 / 9.0).abs() < 1e-15);
        assert!(class_weights(0, 10).is_err());
        assert!(class_weights(10, 0).is_err());
    }

    proptest! {
        #[test]
        fn transforms_preserve_value_multiset(id in 0u8..8, vals in proptest::collection::vec(-100i32..100, 50)) {
            let p = Patch { size: 5, channels: 2, data: vals.iter().map(|&v| v as f32).collect() };
            let t = dihedral_transform(&p, AugmentationId::new(id).unwrap());
            for ch in 0..2 {
                let mut a: Vec<i32> = p.data.iter().skip(ch).step_by(2).map(|v| *v as i32).collect();
                let mut b: Vec<i32> = t.data.iter().skip(ch).step_by(2).map(|v| *v as i32).collect();
                a.sort();
                b.sort();
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn class_weight_products_balance(n1 in 1u64..1_000_000, n0 in 1u64..1_000_000) {
            let w = class_weights(n1, n0).unwrap();
            let (a, b) = (w.change * n1 as f64, w.no_change * n0 as f64);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()));
        }
    }

    fn small_regions() -> Vec<TrainingRegion> {
        (0..2)
            .map(|r| {
                let s = ramp_stack(18, 17, 2);
                let mut gt = BinaryMap::zeros(18, 17);
                gt.values[8 * 18 + 8 + r] = 1;
                TrainingRegion {
                    stacks: PairStacks::new(s.clone(), s).unwrap(),
                    ground_truth: gt,
                }
            })
            .collect()
    }

    #[test]
    fn epoch_covers_the_full_cross_product_once() {
        let regions = small_regions();
        let stream = TrainingStream::new(&regions, 1, 3, 7).unwrap();
        let n_centers = 2 * valid_centers(18, 17, 15, 1).unwrap().len();
        assert_eq!(stream.len(), 8 * n_centers);

        let order = stream.epoch_order(0);
        let visited: HashSet<StreamItem> = order.iter().copied().collect();
        assert_eq!(visited.len(), order.len());
        let mut expected = HashSet::new();
        for region in 0..2 {
            for center in valid_centers(18, 17, 15, 1).unwrap() {
                for augmentation in AugmentationId::all() {
                    expected.insert(StreamItem { region, center, augmentation });
                }
            }
        }
        assert_eq!(visited, expected);
        assert_ne!(stream.epoch_order(0), stream.epoch_order(1));
    }

    #[test]
    fn batches_are_deterministic_and_uniform() {
        let regions = small_regions();
        let a = TrainingStream::new(&regions, 1, 3, 7).unwrap();
        let b = TrainingStream::new(&regions, 1, 3, 7).unwrap();
        let ba: Vec<PatchBatch> = a.epoch(2).collect();
        let bb: Vec<PatchBatch> = b.epoch(2).collect();
        assert_eq!(ba, bb);
        let total: usize = ba.iter().map(|b| b.len).sum();
        assert_eq!(total, a.len());
        assert!(ba[..ba.len() - 1].iter().all(|b| b.len == 7));
        for batch in &ba {
            assert_eq!(batch.earlier.len(), batch.len * 15 * 15 * 2);
        }
    }

    #[test]
    fn stream_labels_match_ground_truth() {
        let regions = small_regions();
        let stream = TrainingStream::new(&regions, 1, 0, 5).unwrap();
        let order = stream.epoch_order(0);
        let batch = stream.materialize(&order);
        for (item, label) in order.iter().zip(&batch.labels) {
            let gt = &regions[item.region].ground_truth;
            assert_eq!(*label == Label::Change, gt.get(item.center.0, item.center.1));
        }
        assert_eq!(stream.label_counts(), (2, 2 * 12 - 2));
        // The center pixel of an augmented patch is the center pixel of the crop.
        let c = 2;
        for (i, item) in order.iter().enumerate() {
            let mid = (7 * 15 + 7) * c;
            let expected = regions[item.region].stacks.earlier.pixel(item.center.0, item.center.1);
            assert_eq!(&batch.earlier[i * 450 + mid..i * 450 + mid + c], expected);
        }
    }
}
