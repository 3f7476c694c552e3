use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use changecnn::dataset::{import_region, ImagePair, RegionLayout};
use serde::Serialize;

/// Name of the resolved-configuration file written to every output directory.
pub const CONFIG_FILE: &str = "config.json";

/// What a command needs to record about its own invocation.
pub struct RunContext {
    pub argv: Vec<OsString>,
    pub seed: u64,
    pub threads: usize,
}

#[derive(Serialize)]
struct RunRecord<'a, A: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    threads: usize,
    working_dir: Option<PathBuf>,
    /// Full argument list after config-file expansion.
    argv: Vec<String>,
    args: &'a A,
}

impl RunContext {
    pub fn write_config<A: Serialize>(&self, dir: &Path, command: &str, args: &A) -> Result<()> {
        let record = RunRecord {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            threads: self.threads,
            working_dir: std::env::current_dir().ok(),
            argv: self.argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            args,
        };
        write_json(&dir.join(CONFIG_FILE), &record)
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Region ids separated by commas, whitespace or newlines; `#` starts a
/// comment.
pub fn parse_region_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn read_region_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading region list {}", path.display()))?;
    let ids = parse_region_list(&text);
    anyhow::ensure!(!ids.is_empty(), "region list {} is empty", path.display());
    Ok(ids)
}

pub fn load_region(dir: &Path) -> Result<ImagePair> {
    import_region(dir, &RegionLayout::default()).with_context(|| format!("loading region {}", dir.display()))
}

pub fn load_split(dataset: &Path, split: &Path) -> Result<Vec<ImagePair>> {
    read_region_list(&dataset.join(split))?
        .iter()
        .map(|id| load_region(&dataset.join(id)))
        .collect()
}
