//! `--config FILE` support: a flat `key=value` file whose entries become
//! `--key value` flags placed before the ones given on the command line, so
//! explicit flags win.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Flags that take no value; `key=true` turns them on, `key=false` leaves them off.
const SWITCHES: &[&str] = &["no-flip", "no-overlay", "normalize"];

pub fn config_flags(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<Vec<String>> {
    let mut flags = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got {line:?}", n + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            bail!("line {}: invalid key {key:?}", n + 1);
        }
        if SWITCHES.contains(&key.as_str()) {
            match value {
                "true" | "1" | "yes" => flags.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => bail!("line {}: {key} expects true or false, got {other:?}", n + 1),
            }
        } else {
            flags.push(format!("--{key}"));
            flags.push(value.to_string());
        }
    }
    Ok(flags)
}

/// Pulls `--config FILE` (or `--config=FILE`) out of `args` and splices the
/// file's flags in right after the subcommand name.
pub fn expand_args(args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().context("--config needs a file")?);
        } else if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(config) = config else {
        return Ok(rest);
    };
    let flags = config_flags(Path::new(&config))?;
    let Some(pos) = rest.iter().skip(1).position(|a| subcommands.contains(&a.as_str())) else {
        bail!("--config needs a subcommand");
    };
    let at = pos + 2;
    rest.splice(at..at, flags);
    Ok(rest)
}
