//! `--config` files: a JSON object whose keys are long flag names.
//!
//! Entries become flags inserted right after the subcommand, ahead of the user's
//! own flags; since every flag overrides earlier occurrences, explicit flags win.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;
use serde_json::Value;

use crate::args::Cli;

/// Global flags that take a value.
const GLOBAL_VALUED: [&str; 4] = ["--seed", "--out-dir", "--threads", "--config"];

/// `--config` path, if present on the raw command line.
fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

/// Index of the subcommand token.
fn subcommand_index(argv: &[OsString], names: &BTreeSet<String>) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if names.contains(s.as_ref()) {
            return Some(i);
        }
        if GLOBAL_VALUED.contains(&s.as_ref()) {
            i += 1;
        }
        i += 1;
    }
    None
}

fn long_names(cmd: &clap::Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect()
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Expands `--config` into explicit flags. Unknown keys are an error.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let json: Value = serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
    let Value::Object(map) = json else {
        return Err(format!("config {} must be a JSON object", path.display()));
    };
    let root = Cli::command();
    let names: BTreeSet<String> = root.get_subcommands().map(|c| c.get_name().to_string()).collect();
    let Some(at) = subcommand_index(&argv, &names) else {
        return Err("a subcommand is required".into());
    };
    let sub_name = argv[at].to_string_lossy().to_string();
    let sub = root.find_subcommand(&sub_name).expect("name taken from the command");
    let mut known = long_names(sub);
    known.extend(long_names(&root));
    known.remove("config");
    let mut injected = Vec::new();
    for (key, value) in map {
        let flag = key.replace('_', "-");
        if !known.contains(&flag) {
            return Err(format!("unknown config key '{key}' for '{sub_name}'"));
        }
        match &value {
            Value::Bool(true) => injected.push(format!("--{flag}")),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let parts: Option<Vec<String>> = items.iter().map(scalar).collect();
                let parts = parts.ok_or_else(|| format!("config key '{key}': list items must be scalars"))?;
                injected.push(format!("--{flag}={}", parts.join(",")));
            }
            other => {
                let v = scalar(other).ok_or_else(|| format!("config key '{key}': unsupported value"))?;
                injected.push(format!("--{flag}={v}"));
            }
        }
    }
    let mut out = argv[..=at].to_vec();
    out.extend(injected.into_iter().map(OsString::from));
    out.extend_from_slice(&argv[at + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn argv(items: &[&str]) -> Vec<OsString> {
        items.iter().map(OsString::from).collect()
    }

    #[test]
    fn injects_after_subcommand() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"alpha": 0.1, "tau_fail": 22, "tau-fail": 24}}"#).unwrap();
        let path = f.path().to_str().unwrap();
        let out = expand(argv(&["cfm", "--config", path, "calibrate", "--alpha", "0.05"])).unwrap();
        let out: Vec<String> = out.iter().map(|s| s.to_string_lossy().into()).collect();
        assert_eq!(&out[..4], &["cfm", "--config", path, "calibrate"]);
        assert!(out.contains(&"--alpha=0.1".to_string()));
        assert_eq!(out.last().unwrap(), "0.05");
    }

    #[test]
    fn rejects_unknown_keys() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"bogus": 1}}"#).unwrap();
        let path = f.path().to_str().unwrap();
        assert!(expand(argv(&["cfm", "--config", path, "mask"])).is_err());
    }
}
