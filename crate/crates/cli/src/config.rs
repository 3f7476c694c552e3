//! `key = value` config files, applied by splicing `--key value` into the
//! argument list ahead of the user's own flags.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Flags accepted before the subcommand name.
const GLOBAL_KEYS: [&str; 3] = ["config", "seed", "threads"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
}

/// Blank lines and `#` comments are skipped; keys may use `_` or `-`.
pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value", i + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("line {}: invalid key {:?}", i + 1, key);
        }
        out.push(Entry {
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn flag_value<'a>(args: &'a [OsString], i: usize, name: &str) -> Option<(Option<&'a OsString>, usize)> {
    let s = args[i].to_str()?;
    let long = format!("--{name}");
    if s == long {
        Some((args.get(i + 1), 2))
    } else if s.strip_prefix(&long)?.starts_with('=') {
        Some((None, 1))
    } else {
        None
    }
}

/// Path given with `--config`, and the index of the subcommand name.
fn scan(args: &[OsString]) -> (Option<OsString>, Option<usize>) {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let mut step = 1;
        let mut global = false;
        for key in GLOBAL_KEYS {
            if let Some((value, n)) = flag_value(args, i, key) {
                global = true;
                step = n;
                if key == "config" {
                    config = match value {
                        Some(v) => Some(v.clone()),
                        None => args[i].to_str().and_then(|s| s.split_once('=')).map(|(_, v)| v.into()),
                    };
                }
            }
        }
        if !global && sub.is_none() && !args[i].to_string_lossy().starts_with('-') {
            sub = Some(i);
        }
        i += step;
    }
    (config, sub)
}

/// Returns `args` with the entries of the `--config` file spliced in: global
/// keys right after the program name, the rest right after the subcommand.
/// Later occurrences of a flag override earlier ones, so anything typed on
/// the command line wins.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let (Some(path), sub) = scan(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    let entries = parse(&text).with_context(|| format!("config file {}", path.display()))?;
    let flag = |e: &Entry| [OsString::from(format!("--{}", e.key)), OsString::from(&e.value)];
    let (global, local): (Vec<_>, Vec<_>) = entries.iter().partition(|e| GLOBAL_KEYS.contains(&e.key.as_str()));
    let sub = sub.unwrap_or(args.len());
    let mut out = Vec::with_capacity(args.len() + 2 * entries.len());
    out.push(args[0].clone());
    out.extend(global.into_iter().flat_map(flag));
    out.extend_from_slice(&args[1..sub]);
    if sub < args.len() {
        out.push(args[sub].clone());
        out.extend(local.into_iter().flat_map(flag));
        out.extend_from_slice(&args[sub + 1..]);
    } else if !local.is_empty() {
        bail!("config file {} sets command flags but no command was given", path.display());
    }
    Ok(out)
}
