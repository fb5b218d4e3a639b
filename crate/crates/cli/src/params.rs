//! Flat `key=value` files and their merge into the command line.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{ArgAction, Command};

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; keys may use `_` or `-`.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("{origin}:{}: expected key=value, got {line:?}", n + 1));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("{origin}:{}: empty key", n + 1));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_kv(&text, &path.display().to_string())
}

fn find_params(args: &[OsString]) -> Option<(usize, usize, OsString)> {
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--" {
            return None;
        }
        if s == "--params" {
            return Some((i, 2, args.get(i + 1)?.clone()));
        }
        if let Some(v) = s.strip_prefix("--params=") {
            return Some((i, 1, v.into()));
        }
    }
    None
}

/// Expands `--params FILE` into ordinary flags placed right after the
/// subcommand, so anything given on the command line comes later and wins.
/// Keys that are not long flags of the subcommand are rejected.
pub fn expand(cmd: &Command, mut args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some((at, width, file)) = find_params(&args) else {
        return Ok(args);
    };
    let sub_pos = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| cmd.find_subcommand(a.to_string_lossy().as_ref()).is_some())
        .map(|(i, _)| i);
    let Some(sub_pos) = sub_pos.filter(|&p| p < at) else {
        return Err("--params must follow a subcommand".into());
    };
    let sub = cmd.find_subcommand(args[sub_pos].to_string_lossy().as_ref()).expect("found above");
    args.drain(at..at + width);

    let mut flags: Vec<OsString> = Vec::new();
    for (key, value) in read_kv(Path::new(&file))? {
        let long = key.replace('_', "-");
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(long.as_str()) && long != "params" && long != "help")
            .ok_or_else(|| format!("unknown key {key:?} in {} for `{}`", file.to_string_lossy(), sub.get_name()))?;
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "1" | "yes" => flags.push(format!("--{long}").into()),
                "false" | "0" | "no" => {}
                _ => return Err(format!("{key} expects true or false, got {value:?}")),
            },
            _ => {
                flags.push(format!("--{long}").into());
                flags.push(value.into());
            }
        }
    }
    args.splice(sub_pos + 1..sub_pos + 1, flags);
    Ok(args)
}
