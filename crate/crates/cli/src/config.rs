//! Flat `key = value` config files. Values become argument defaults, so an
//! explicit flag or environment variable still wins.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::CliError;

pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("config line {}: expected key=value", n + 1)))?;
        let key = k.trim().to_ascii_lowercase().replace('-', "_");
        pairs.push((key, v.trim().trim_matches('"').to_string()));
    }
    Ok(pairs)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
    parse(&text)
}

/// `--config` from the raw argument list, falling back to `XAICLIP_CONFIG`.
pub fn locate(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    std::env::var_os("XAICLIP_CONFIG").map(PathBuf::from)
}

/// Installs config values as defaults on every subcommand argument with a
/// matching id. Boolean switches accept `true`/`false`.
pub fn apply(
    mut cmd: clap::Command,
    pairs: &[(String, String)],
) -> Result<clap::Command, CliError> {
    let names: Vec<String> = cmd
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    for (key, value) in pairs {
        if key == "config" {
            continue;
        }
        let mut known = false;
        for name in &names {
            let sub = cmd.find_subcommand(name).expect("listed above");
            let Some(arg) = sub.get_arguments().find(|a| a.get_id() == key.as_str()) else {
                continue;
            };
            if arg.is_positional() {
                continue;
            }
            known = true;
            let is_switch = matches!(arg.get_action(), clap::ArgAction::SetTrue);
            let value: &'static str = Box::leak(value.clone().into_boxed_str());
            let key = key.clone();
            cmd = cmd.mut_subcommand(name, |sc| {
                sc.mut_arg(key, |a| {
                    if is_switch {
                        a.default_value(value).default_missing_value("true")
                    } else {
                        a.default_value(value)
                    }
                })
            });
        }
        if !known {
            return Err(CliError::input(format!("config: unknown key '{key}'")));
        }
    }
    Ok(cmd)
}
