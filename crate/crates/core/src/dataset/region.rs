//! On-disk region layout:
//!
//! ```text
//! <region>/meta.json          dates and per-band native resolution
//! <region>/imgs_1/<BAND>.pgm  earlier date, 16-bit binary PGM
//! <region>/imgs_2/<BAND>.pgm  later date
//! <region>/cm/cm.pgm          optional 8-bit change map, 255 = change
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{pgm, resample_to_10m, BandId, BandRaster, BinaryMap, ImagePair, MultispectralImage, Resolution};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionLayout {
    pub earlier_dir: PathBuf,
    pub later_dir: PathBuf,
    pub ground_truth: PathBuf,
    pub meta: PathBuf,
}

impl Default for RegionLayout {
    fn default() -> Self {
        RegionLayout {
            earlier_dir: "imgs_1".into(),
            later_dir: "imgs_2".into(),
            ground_truth: PathBuf::from("cm").join("cm.pgm"),
            meta: "meta.json".into(),
        }
    }
}

impl RegionLayout {
    pub fn band_path(&self, region: &Path, later: bool, band: BandId) -> PathBuf {
        let dir = if later { &self.later_dir } else { &self.earlier_dir };
        region.join(dir).join(format!("{band}.pgm"))
    }
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMeta {
    #[serde(default)]
    pub region_id: Option<String>,
    pub dates: [String; 2],
    pub bands: BTreeMap<BandId, Resolution>,
}

impl RegionMeta {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format("meta.json", format!("{}: {e}", path.display())))
    }
}

/// Loads both dates of a region and resamples every band onto the 10 m grid.
pub fn import_region(dir: &Path, layout: &RegionLayout) -> Result<ImagePair> {
    let meta = RegionMeta::read(&dir.join(&layout.meta))?;
    if meta.bands.is_empty() {
        return Err(Error::format("meta.json", "no bands listed"));
    }
    let load_date = |later: bool| -> Result<MultispectralImage> {
        let mut raw = Vec::with_capacity(meta.bands.len());
        for (&id, &res) in &meta.bands {
            let path = layout.band_path(dir, later, id);
            if !path.is_file() {
                return Err(Error::MissingBand(id));
            }
            let g = pgm::read(&path)?;
            let values = g.samples.iter().map(|&v| v as f32).collect();
            raw.push((id, BandRaster::new(g.width, g.height, res, values)?));
        }
        let (tw, th) = target_grid(&raw);
        let bands = raw
            .into_iter()
            .map(|(id, b)| resample_to_10m(&b, tw, th).map(|r| (id, r)))
            .collect::<Result<Vec<_>>>()?;
        MultispectralImage::new(bands)
    };
    let earlier = load_date(false)?;
    let later = load_date(true)?;

    let gt_path = dir.join(&layout.ground_truth);
    let ground_truth = if gt_path.is_file() {
        let g = pgm::read(&gt_path)?;
        let values = g.samples.iter().map(|&v| u8::from(v != 0)).collect();
        Some(BinaryMap::new(g.width, g.height, values)?)
    } else {
        None
    };
    let region_id = meta.region_id.clone().unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    ImagePair::new(region_id, earlier, later, ground_truth, meta.dates)
}

/// The 10 m grid is taken from the finest band; coarser-only images are
/// scaled up by their resolution ratio.
fn target_grid(bands: &[(BandId, BandRaster)]) -> (usize, usize) {
    let finest = bands
        .iter()
        .map(|(_, b)| b.native_resolution.meters())
        .min()
        .expect("non-empty band list");
    bands
        .iter()
        .filter(|(_, b)| b.native_resolution.meters() == finest)
        .map(|(_, b)| {
            let scale = (finest / 10) as usize;
            (b.width * scale, b.height * scale)
        })
        .max()
        .expect("non-empty band list")
}

/// Writes a pair in the canonical layout. Values are rounded and clamped to
/// the 16-bit range.
pub fn write_region(dir: &Path, pair: &ImagePair, layout: &RegionLayout) -> Result<()> {
    for (later, img) in [(false, &pair.earlier), (true, &pair.later)] {
        let sub = dir.join(if later { &layout.later_dir } else { &layout.earlier_dir });
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (id, band) in img.bands() {
            let samples: Vec<u16> = band.values.iter().map(|&v| v.round().clamp(0.0, 65535.0) as u16).collect();
            pgm::write_u16(&layout.band_path(dir, later, id), band.width, band.height, &samples)?;
        }
    }
    if let Some(gt) = &pair.ground_truth {
        let path = dir.join(&layout.ground_truth);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let samples: Vec<u8> = gt.values.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
        pgm::write_u8(&path, gt.width, gt.height, &samples)?;
    }
    let meta = RegionMeta {
        region_id: Some(pair.region_id.clone()),
        dates: pair.acquisition_dates.clone(),
        bands: pair.earlier.bands().map(|(id, b)| (id, b.native_resolution)).collect(),
    };
    let path = dir.join(&layout.meta);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_band(dir: &Path, sub: &str, id: BandId, w: usize, h: usize, v: u16) {
        let d = dir.join(sub);
        fs::create_dir_all(&d).unwrap();
        pgm::write_u16(&d.join(format!("{id}.pgm")), w, h, &vec![v; w * h]).unwrap();
    }

    fn write_meta(dir: &Path, bands: &[(BandId, u32)]) {
        let bands: BTreeMap<String, u32> = bands.iter().map(|(b, r)| (b.to_string(), *r)).collect();
        let json = serde_json::json!({ "dates": ["20150812", "20171030"], "bands": bands });
        fs::write(dir.join("meta.json"), json.to_string()).unwrap();
    }

    #[test]
    fn mixed_resolutions_land_on_the_10m_grid() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        let mut listed = Vec::new();
        for id in BandId::ALL {
            let f = (id.native_resolution().meters() / 10) as usize;
            let (w, h) = (60 / f, 48 / f);
            write_band(dir, "imgs_1", id, w, h, 100);
            write_band(dir, "imgs_2", id, w, h, 200);
            listed.push((id, id.native_resolution().meters()));
        }
        write_meta(dir, &listed);
        let pair = import_region(dir, &RegionLayout::default()).unwrap();
        assert_eq!(pair.earlier.band_ids().count(), 13);
        assert_eq!((pair.width(), pair.height()), (60, 48));
        for (_, b) in pair.later.bands() {
            assert_eq!((b.width, b.height), (60, 48));
            assert!(b.values.iter().all(|&v| v == 200.0));
        }
        assert!(pair.ground_truth.is_none());
        assert_eq!(pair.acquisition_dates[1], "20171030");
    }

    #[test]
    fn missing_band_file_names_the_band() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        for id in [BandId::B02, BandId::B03] {
            write_band(dir, "imgs_1", id, 8, 8, 1);
            write_band(dir, "imgs_2", id, 8, 8, 1);
        }
        write_band(dir, "imgs_1", BandId::B04, 8, 8, 1);
        write_meta(dir, &[(BandId::B02, 10), (BandId::B03, 10), (BandId::B04, 10)]);
        match import_region(dir, &RegionLayout::default()) {
            Err(Error::MissingBand(BandId::B04)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_dates_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        write_band(dir, "imgs_1", BandId::B02, 8, 8, 1);
        write_band(dir, "imgs_2", BandId::B02, 9, 8, 1);
        write_meta(dir, &[(BandId::B02, 10)]);
        assert!(matches!(
            import_region(dir, &RegionLayout::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ground_truth_is_binarized() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        write_band(dir, "imgs_1", BandId::B02, 2, 2, 1);
        write_band(dir, "imgs_2", BandId::B02, 2, 2, 1);
        write_meta(dir, &[(BandId::B02, 10)]);
        fs::create_dir_all(dir.join("cm")).unwrap();
        pgm::write_u8(&dir.join("cm/cm.pgm"), 2, 2, &[0, 255, 255, 0]).unwrap();
        let pair = import_region(dir, &RegionLayout::default()).unwrap();
        assert_eq!(pair.ground_truth.unwrap().values, vec![0, 1, 1, 0]);
    }
}
