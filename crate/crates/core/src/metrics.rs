//! Confusion counts and per-class accuracy reports.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::dataset::BinaryMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp_change: u64,
    pub fn_change: u64,
    pub tn_no_change: u64,
    pub fp_no_change: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp_change + self.fn_change + self.tn_no_change + self.fp_no_change
    }

    pub fn change_pixels(&self) -> u64 {
        self.tp_change + self.fn_change
    }

    pub fn no_change_pixels(&self) -> u64 {
        self.tn_no_change + self.fp_no_change
    }
}

impl Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp_change: self.tp_change + o.tp_change,
            fn_change: self.fn_change + o.fn_change,
            tn_no_change: self.tn_no_change + o.tn_no_change,
            fp_no_change: self.fp_no_change + o.fp_no_change,
        }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Confusion) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Confusion {
        iter.fold(Confusion::default(), Add::add)
    }
}

pub fn confusion(pred: &BinaryMap, gt: &BinaryMap) -> Result<Confusion> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.values.iter().zip(&gt.values) {
        match (p != 0, g != 0) {
            (true, true) => c.tp_change += 1,
            (false, true) => c.fn_change += 1,
            (false, false) => c.tn_no_change += 1,
            (true, false) => c.fp_no_change += 1,
        }
    }
    Ok(c)
}

/// Accuracies in percent, precision / recall / F1 as ratios. Fields that
/// divide by an empty class are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: Option<f64>,
    pub change_accuracy: Option<f64>,
    pub no_change_accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
}

impl EvalReport {
    /// Average of the two per-class accuracies, when both are defined.
    pub fn mean_class_accuracy(&self) -> Option<f64> {
        Some((self.change_accuracy? + self.no_change_accuracy?) / 2.0)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn report(c: &Confusion) -> EvalReport {
    let change = ratio(c.tp_change, c.change_pixels());
    let precision = ratio(c.tp_change, c.tp_change + c.fp_no_change);
    let f1 = match (precision, change) {
        (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
        _ => 0.0,
    };
    EvalReport {
        overall_accuracy: ratio(c.tp_change + c.tn_no_change, c.total()).map(|v| 100.0 * v),
        change_accuracy: change.map(|v| 100.0 * v),
        no_change_accuracy: ratio(c.tn_no_change, c.no_change_pixels()).map(|v| 100.0 * v),
        precision,
        recall: change,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEval {
    pub region_id: String,
    pub confusion: Confusion,
    pub report: EvalReport,
}

/// Pooled and per-region results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub pooled_confusion: Confusion,
    pub pooled: EvalReport,
    pub regions: Vec<RegionEval>,
}

/// Pools confusion counts over regions and reports both levels.
pub fn summarize(regions: Vec<(String, Confusion)>) -> EvalSummary {
    let pooled_confusion: Confusion = regions.iter().map(|(_, c)| *c).sum();
    EvalSummary {
        pooled: report(&pooled_confusion),
        pooled_confusion,
        regions: regions
            .into_iter()
            .map(|(region_id, confusion)| RegionEval {
                region_id,
                report: report(&confusion),
                confusion,
            })
            .collect(),
    }
}

/// Two-decimal percentage, or `n/a`.
pub fn format_percent(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(values: Vec<u8>, w: usize) -> BinaryMap {
        let h = values.len() / w;
        BinaryMap::new(w, h, values).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = map(vec![0, 1, 1, 0, 0, 1], 3);
        let c = confusion(&gt, &gt).unwrap();
        assert_eq!((c.fn_change, c.fp_no_change), (0, 0));
        let r = report(&c);
        assert_eq!((r.overall_accuracy, r.change_accuracy, r.no_change_accuracy), (Some(100.0), Some(100.0), Some(100.0)));
    }

    #[test]
    fn all_no_change_prediction() {
        let gt = map((0..100).map(|i| u8::from(i < 10)).collect(), 10);
        let c = confusion(&BinaryMap::zeros(10, 10), &gt).unwrap();
        assert_eq!((c.tp_change, c.fn_change), (0, 10));
        let r = report(&c);
        assert_eq!(r.overall_accuracy, Some(90.0));
        assert_eq!(r.change_accuracy, Some(0.0));
        assert_eq!(r.no_change_accuracy, Some(100.0));
        assert_eq!(r.precision, None);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn hand_arithmetic() {
        let c = Confusion { tp_change: 80, fn_change: 20, tn_no_change: 850, fp_no_change: 50 };
        let r = report(&c);
        assert!((r.change_accuracy.unwrap() - 80.0).abs() < 1e-12);
        assert!((r.no_change_accuracy.unwrap() - 94.444_444_444_444).abs() < 1e-9);
        assert!((r.overall_accuracy.unwrap() - 93.0).abs() < 1e-12);
        assert_eq!(format_percent(r.no_change_accuracy), "94.44");
    }

    #[test]
    fn missing_class_is_undefined() {
        let gt = BinaryMap::zeros(3, 3);
        let r = report(&confusion(&gt, &gt).unwrap());
        assert_eq!(r.change_accuracy, None);
        assert_eq!(r.no_change_accuracy, Some(100.0));
        assert_eq!(format_percent(r.change_accuracy), "n/a");
        assert!(confusion(&BinaryMap::zeros(2, 3), &gt).is_err());
    }

    #[test]
    fn counts_match_a_direct_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let a = map((0..36).map(|_| rng.gen_range(0..2)).collect(), 6);
            let b = map((0..36).map(|_| rng.gen_range(0..2)).collect(), 6);
            let c = confusion(&a, &b).unwrap();
            let tally = |p: u8, g: u8| a.values.iter().zip(&b.values).filter(|(x, y)| **x == p && **y == g).count() as u64;
            assert_eq!(c, Confusion { tp_change: tally(1, 1), fn_change: tally(0, 1), tn_no_change: tally(0, 0), fp_no_change: tally(1, 0) });
        }
    }

    #[test]
    fn pooling_sums_counts() {
        let a = Confusion { tp_change: 1, fn_change: 2, tn_no_change: 3, fp_no_change: 4 };
        let s = summarize(vec![("a".into(), a), ("b".into(), a)]);
        assert_eq!(s.pooled_confusion, a + a);
        assert_eq!(s.regions.len(), 2);
        assert_eq!(s.pooled.change_accuracy, s.regions[0].report.change_accuracy);
    }

    proptest! {
        #[test]
        fn overall_is_prior_weighted_mean(tp in 0u64..1000, fn_ in 1u64..1000, tn in 0u64..1000, fp in 1u64..1000) {
            let c = Confusion { tp_change: tp, fn_change: fn_, tn_no_change: tn, fp_no_change: fp };
            let r = report(&c);
            let total = c.total() as f64;
            let mixed = r.change_accuracy.unwrap() * c.change_pixels() as f64 / total
                + r.no_change_accuracy.unwrap() * c.no_change_pixels() as f64 / total;
            prop_assert!((mixed - r.overall_accuracy.unwrap()).abs() < 1e-9);
            prop_assert_eq!(r.recall.map(|v| 100.0 * v), r.change_accuracy);
        }

        #[test]
        fn swapping_transposes_errors(bits in proptest::collection::vec((0u8..2, 0u8..2), 1..60)) {
            let p = BinaryMap::new(bits.len(), 1, bits.iter().map(|b| b.0).collect()).unwrap();
            let g = BinaryMap::new(bits.len(), 1, bits.iter().map(|b| b.1).collect()).unwrap();
            let a = confusion(&p, &g).unwrap();
            let b = confusion(&g, &p).unwrap();
            prop_assert_eq!((a.fp_no_change, a.fn_change), (b.fn_change, b.fp_no_change));
            prop_assert_eq!(report(&a).overall_accuracy, report(&b).overall_accuracy);
        }
    }
}
