//! Flat `key = value` config files, spliced into the argument list ahead of
//! the user's own flags so that anything given on the command line wins.

use std::fs;
use std::path::{Path, PathBuf};

/// Keys whose values are paths, resolved against the config file's directory.
const PATH_KEYS: &[&str] = &["input", "output", "scatter"];

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut entries = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected `key = value`, got `{raw}`", no + 1));
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", no + 1));
        }
        entries.push((key, value.trim().to_string()));
    }
    Ok(entries)
}

fn load(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut entries = parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    for (key, value) in &mut entries {
        if PATH_KEYS.contains(&key.as_str()) && Path::new(value.as_str()).is_relative() {
            *value = base.join(&*value).to_string_lossy().into_owned();
        }
    }
    Ok(entries)
}

fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = arg.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Returns `args` with the config entries inserted right after the
/// subcommand name.
pub fn expand(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let entries = load(&path)?;
    let Some(sub) = args.iter().skip(1).position(|a| !a.starts_with('-')) else {
        return Ok(args);
    };
    let at = sub + 2;
    let mut out: Vec<String> = args[..at].to_vec();
    for (key, value) in entries {
        out.push(format!("--{key}"));
        out.push(value);
    }
    out.extend_from_slice(&args[at..]);
    Ok(out)
}
