//! Input layout accepted by `convert`, one subdirectory per region:
//!
//! ```text
//! <region>/imgs_1/*<BAND>.pgm   earlier date, any maxval; the file stem ends with the band id
//! <region>/imgs_2/*<BAND>.pgm   later date
//! <region>/cm/cm.pgm or cm.pgm  optional change map, nonzero = change
//! <region>/meta.json            optional, copied verbatim
//! <region>/dates.txt            optional, `date_1: ...` / `date_2: ...` lines
//! ```
//!
//! Without `meta.json` every band is recorded at its Sentinel-2 native
//! resolution. Top-level `train.txt` and `test.txt` are copied as well.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use changecnn::dataset::{pgm, BandId, RegionLayout, RegionMeta};

use crate::args::ConvertArgs;
use crate::output::{create_dir, RunContext};

pub const SPLIT_FILES: [&str; 2] = ["train.txt", "test.txt"];

/// Band id at the end of a file stem, e.g. `S2A_20150812_B8A`.
fn band_of_stem(stem: &str) -> Option<BandId> {
    let upper = stem.to_ascii_uppercase();
    BandId::ALL.into_iter().find(|b| {
        upper.strip_suffix(b.name()).is_some_and(|head| {
            head.chars().last().map_or(true, |c| !c.is_ascii_alphanumeric())
        })
    })
}

struct Region {
    id: String,
    dates: [BTreeMap<BandId, (PathBuf, Vec<u8>)>; 2],
    ground_truth: Option<Vec<u8>>,
    meta: Vec<u8>,
}

fn read_date(dir: &Path, errors: &mut Vec<String>) -> BTreeMap<BandId, (PathBuf, Vec<u8>)> {
    let mut bands = BTreeMap::new();
    let Ok(entries) = fs::read_dir(dir) else {
        errors.push(format!("{}: cannot read directory", dir.display()));
        return bands;
    };
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        if path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() != Some("pgm") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let Some(band) = band_of_stem(stem) else {
            errors.push(format!("{}: file name does not end with a band id", path.display()));
            continue;
        };
        match pgm::read(&path) {
            Ok(g) => {
                let bytes = pgm::encode_u16(g.width, g.height, &g.samples);
                if let Some((first, _)) = bands.insert(band, (path.clone(), bytes)) {
                    errors.push(format!("{}: band {band} also given by {}", path.display(), first.display()));
                }
            }
            Err(e) => errors.push(format!("{}: {e}", path.display())),
        }
    }
    bands
}

fn dims(bytes: &[u8]) -> (usize, usize) {
    let g = pgm::decode(bytes).expect("encoded by this module");
    (g.width, g.height)
}

fn read_dates(dir: &Path) -> [String; 2] {
    let mut dates = ["unknown".to_string(), "unknown".to_string()];
    if let Ok(text) = fs::read_to_string(dir.join("dates.txt")) {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once(':') {
                match k.trim() {
                    "date_1" => dates[0] = v.trim().to_string(),
                    "date_2" => dates[1] = v.trim().to_string(),
                    _ => {}
                }
            }
        }
    }
    dates
}

fn read_region(dir: &Path, layout: &RegionLayout, errors: &mut Vec<String>) -> Option<Region> {
    let before = errors.len();
    let id = dir.file_name()?.to_string_lossy().into_owned();
    let dates = [
        read_date(&dir.join(&layout.earlier_dir), errors),
        read_date(&dir.join(&layout.later_dir), errors),
    ];
    let meta_path = dir.join(&layout.meta);
    let meta = if meta_path.is_file() {
        match RegionMeta::read(&meta_path) {
            Ok(m) => Some((m, fs::read(&meta_path).ok()?)),
            Err(e) => {
                errors.push(format!("{}: {e}", meta_path.display()));
                None
            }
        }
    } else {
        None
    };
    let listed: Vec<BandId> = match &meta {
        Some((m, _)) => m.bands.keys().copied().collect(),
        None => dates[0].keys().chain(dates[1].keys()).copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect(),
    };
    if listed.is_empty() {
        errors.push(format!("{id}: no band images found"));
    }
    for &band in &listed {
        for (d, sub) in dates.iter().zip([&layout.earlier_dir, &layout.later_dir]) {
            if !d.contains_key(&band) {
                errors.push(format!("{id}: missing band {band} in {}", sub.display()));
            }
        }
        if let (Some(a), Some(b)) = (dates[0].get(&band), dates[1].get(&band)) {
            if dims(&a.1) != dims(&b.1) {
                errors.push(format!("{}: size differs from {}", b.0.display(), a.0.display()));
            }
        }
    }
    let gt_path = [dir.join(&layout.ground_truth), dir.join("cm.pgm")].into_iter().find(|p| p.is_file());
    let ground_truth = gt_path.and_then(|p| match pgm::read(&p) {
        Ok(g) => {
            let samples: Vec<u8> = g.samples.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
            Some(pgm::encode_u8(g.width, g.height, &samples))
        }
        Err(e) => {
            errors.push(format!("{}: {e}", p.display()));
            None
        }
    });
    if errors.len() > before {
        return None;
    }
    let meta = match meta {
        Some((_, raw)) => raw,
        None => {
            let m = RegionMeta {
                region_id: Some(id.clone()),
                dates: read_dates(dir),
                bands: listed.iter().map(|&b| (b, b.native_resolution())).collect(),
            };
            (serde_json::to_string_pretty(&m).ok()? + "\n").into_bytes()
        }
    };
    Some(Region {
        id,
        dates,
        ground_truth,
        meta,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))
}

fn write_region(out: &Path, r: &Region, layout: &RegionLayout) -> Result<()> {
    let dir = out.join(&r.id);
    for (later, bands) in [(false, &r.dates[0]), (true, &r.dates[1])] {
        for (&band, (_, bytes)) in bands {
            write_file(&layout.band_path(&dir, later, band), bytes)?;
        }
    }
    if let Some(gt) = &r.ground_truth {
        write_file(&dir.join(&layout.ground_truth), gt)?;
    }
    write_file(&dir.join(&layout.meta), &r.meta)
}

pub fn run(args: &ConvertArgs, ctx: &RunContext) -> Result<()> {
    let layout = RegionLayout::default();
    let mut dirs: Vec<PathBuf> = fs::read_dir(&args.input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(&layout.earlier_dir).is_dir() || p.join(&layout.later_dir).is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("{} contains no region directories", args.input.display());
    }
    let mut errors = Vec::new();
    let regions: Vec<Region> = dirs.iter().filter_map(|d| read_region(d, &layout, &mut errors)).collect();
    create_dir(&args.output)?;
    for r in &regions {
        write_region(&args.output, r, &layout)?;
    }
    for name in SPLIT_FILES {
        let src = args.input.join(name);
        if src.is_file() {
            fs::copy(&src, args.output.join(name))?;
        }
    }
    ctx.write_config(&args.output, "convert", args)?;
    eprintln!("converted {} of {} regions", regions.len(), dirs.len());
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("  {e}");
        }
        bail!("{} problem(s) found; affected regions were skipped", errors.len());
    }
    Ok(())
}
