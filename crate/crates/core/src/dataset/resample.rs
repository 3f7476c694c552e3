use super::BandRaster;
use crate::{Error, Result};

/// Resamples a band onto a `target_w × target_h` grid.
///
/// Pixel centers are aligned (source coordinate `(t + 0.5) · src/target − 0.5`)
/// and clamped to the source extent before bilinear weighting, so the output
/// never leaves the input's value range. A band that already has the target
/// dimensions is returned unchanged.
pub fn resample_to_10m(band: &BandRaster, target_w: usize, target_h: usize) -> Result<BandRaster> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::invalid(format!(
            "cannot resample to a {target_w}x{target_h} grid"
        )));
    }
    if (band.width, band.height) == (target_w, target_h) {
        return Ok(band.clone());
    }
    let cols: Vec<(usize, usize, f64)> = (0..target_w).map(|x| taps(x, band.width, target_w)).collect();
    let rows: Vec<(usize, usize, f64)> = (0..target_h).map(|y| taps(y, band.height, target_h)).collect();

    let mut values = Vec::with_capacity(target_w * target_h);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let v00 = band.get(y0, x0) as f64;
            let v01 = band.get(y0, x1) as f64;
            let v10 = band.get(y1, x0) as f64;
            let v11 = band.get(y1, x1) as f64;
            let top = v00 + (v01 - v00) * fx;
            let bottom = v10 + (v11 - v10) * fx;
            values.push((top + (bottom - top) * fy) as f32);
        }
    }
    BandRaster::new(target_w, target_h, band.native_resolution, values)
}

/// Neighbouring source indices and interpolation fraction for one target index.
fn taps(t: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let pos = ((t as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, pos - i0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Resolution;
    use proptest::prelude::*;

    fn band(w: usize, h: usize, res: Resolution, values: Vec<f32>) -> BandRaster {
        BandRaster::new(w, h, res, values).unwrap()
    }

    #[test]
    fn matching_dimensions_pass_through() {
        let b = band(3, 2, Resolution::M10, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(resample_to_10m(&b, 3, 2).unwrap(), b);
    }

    #[test]
    fn constant_band_stays_constant() {
        let b = band(2, 2, Resolution::M60, vec![1234.0; 4]);
        let out = resample_to_10m(&b, 12, 12).unwrap();
        assert!(out.values.iter().all(|&v| v == 1234.0));
    }

    #[test]
    fn ramp_matches_clamped_bilinear_formula() {
        // Source [[0,10],[20,30]] → 4x4. Evaluate the bilinear formula directly
        // at each target pixel center.
        let b = band(2, 2, Resolution::M20, vec![0.0, 10.0, 20.0, 30.0]);
        let out = resample_to_10m(&b, 4, 4).unwrap();
        let src = |r: usize, c: usize| [[0.0, 10.0], [20.0, 30.0]][r][c];
        for ty in 0..4 {
            for tx in 0..4 {
                let sy = ((ty as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
                let sx = ((tx as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
                let expected = src(0, 0) * (1.0 - sy) * (1.0 - sx)
                    + src(0, 1) * (1.0 - sy) * sx
                    + src(1, 0) * sy * (1.0 - sx)
                    + src(1, 1) * sy * sx;
                assert!((out.get(ty, tx) as f64 - expected).abs() < 1e-9, "({ty},{tx})");
            }
        }
        // Spot values: the first row is 0, 2.5, 7.5, 10.
        assert_eq!(&out.values[..4], &[0.0, 2.5, 7.5, 10.0]);
    }

    #[test]
    fn zero_target_is_an_error() {
        let b = band(2, 2, Resolution::M20, vec![0.0; 4]);
        assert!(resample_to_10m(&b, 0, 4).is_err());
    }

    proptest! {
        #[test]
        fn output_stays_within_input_bounds(
            w in 1usize..6, h in 1usize..6, tw in 1usize..20, th in 1usize..20,
            vals in proptest::collection::vec(0.0f32..65535.0, 36),
        ) {
            let b = band(w, h, Resolution::M60, vals[..w * h].to_vec());
            let (lo, hi) = b.min_max();
            let out = resample_to_10m(&b, tw, th).unwrap();
            prop_assert_eq!(out.values.len(), tw * th);
            for v in out.values {
                prop_assert!(v >= lo && v <= hi);
            }
        }
    }
}
