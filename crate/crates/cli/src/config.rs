//! Flat `key = value` configuration files.
//!
//! Each entry becomes a `--key=value` flag inserted ahead of the user's own
//! flags, so anything given on the command line wins.

use anyhow::{bail, Context, Result};
use std::path::Path;

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", i + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text)
}

/// Splices config entries into `args` right after the subcommand name,
/// keeping only keys the subcommand accepts.
pub fn splice_config(args: Vec<String>, accepted: impl Fn(&str, &str) -> bool) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let (path, consumed) = match args[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => match args.get(pos + 1) {
            Some(p) => (p.clone(), 2),
            None => bail!("--config needs a file"),
        },
    };
    let mut rest: Vec<String> = args[..pos].to_vec();
    rest.extend_from_slice(&args[pos + consumed..]);
    let Some(sub) = rest.get(1).cloned() else {
        return Ok(rest);
    };
    let entries = read_config(Path::new(&path))?;
    let mut out = rest[..2].to_vec();
    for (k, v) in entries {
        if accepted(&sub, &k) {
            out.push(format!("--{k}={v}"));
        } else {
            log::debug!("config key `{k}` does not apply to `{sub}`");
        }
    }
    out.extend_from_slice(&rest[2..]);
    Ok(out)
}
