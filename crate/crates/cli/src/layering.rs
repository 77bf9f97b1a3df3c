//! Config files as argv: every key becomes `--key value`, placed before the
//! user's own flags so that later (command-line) occurrences win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

pub const GLOBAL_KEYS: [&str; 3] = ["seed", "out-dir", "threads"];

pub fn read_config(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("--config: cannot read {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("--config: {} is not valid JSON", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("--config: {} must hold a JSON object", path.display()),
    }
}

fn tokens(key: &str, value: &Value) -> Result<Vec<String>> {
    let flag = format!("--{}", key.replace('_', "-"));
    let scalar = |v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            _ => bail!("--config: `{key}` holds a nested value"),
        }
    };
    Ok(match value {
        Value::Null | Value::Bool(false) => Vec::new(),
        Value::Bool(true) => vec![flag],
        Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
            vec![flag, parts.join(",")]
        }
        other => vec![flag, scalar(other)?],
    })
}

/// Rebuild argv with the config's keys spliced in: global keys right after
/// the program name, the rest right after the subcommand.
pub fn splice(argv: &[OsString], subcommand: &str, config: &Map<String, Value>) -> Result<Vec<OsString>> {
    if let Some(cmd) = config.get("command") {
        if cmd.as_str() != Some(subcommand) {
            bail!("--config: file is for `{}`, not `{subcommand}`", cmd);
        }
    }
    let (mut global, mut local) = (Vec::new(), Vec::new());
    for (key, value) in config {
        if key == "command" || key == "config" {
            continue;
        }
        let t = tokens(key, value)?;
        if GLOBAL_KEYS.contains(&key.replace('_', "-").as_str()) {
            global.extend(t);
        } else {
            local.extend(t);
        }
    }
    let pos = argv
        .iter()
        .skip(1)
        .position(|a| a == subcommand)
        .map(|p| p + 1)
        .with_context(|| format!("subcommand `{subcommand}` not found in arguments"))?;
    let mut out = vec![argv[0].clone()];
    out.extend(global.into_iter().map(OsString::from));
    out.extend_from_slice(&argv[1..=pos]);
    out.extend(local.into_iter().map(OsString::from));
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn splices_in_order() {
        let cfg = json!({"command": "adapt", "seed": 4, "lr": 0.01, "batch-sizes": [8, 16], "bias": true, "svg": null});
        let out = splice(&os(&["otta", "adapt", "--lr", "0.5"]), "adapt", cfg.as_object().unwrap()).unwrap();
        assert_eq!(out, os(&["otta", "--seed", "4", "adapt", "--batch-sizes", "8,16", "--bias", "--lr", "0.01", "--lr", "0.5"]));
    }

    #[test]
    fn wrong_command_rejected() {
        let cfg = json!({"command": "sweep"});
        assert!(splice(&os(&["otta", "adapt"]), "adapt", cfg.as_object().unwrap()).is_err());
    }
}
