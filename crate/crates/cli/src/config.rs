//! `key=value` config files merged into the command line.
//!
//! Every key names a long flag of the chosen subcommand. The config entries
//! are spliced in right after the subcommand name, so flags typed on the
//! command line come later and win.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value, found '{line}'", origin.display(), i + 1);
        };
        let key = key.trim();
        if key.is_empty() || key.starts_with('-') {
            bail!("{}:{}: invalid key '{key}'", origin.display(), i + 1);
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Removes `--config <path>` / `--config=<path>` from `args` and splices the
/// file's entries in after the subcommand token.
pub fn expand_config(mut args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                bail!("--config needs a file path");
            }
            path = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    let entries = parse_config(&text, path)?;
    let Some(at) = args.iter().position(|a| subcommands.contains(&a.as_str())) else {
        bail!("--config needs a subcommand");
    };
    let injected = entries.into_iter().flat_map(|(k, v)| match v.as_str() {
        "true" => vec![format!("--{k}")],
        _ => vec![format!("--{k}"), v],
    });
    let tail = args.split_off(at + 1);
    args.extend(injected);
    args.extend(tail);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn entries_go_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "# comment\nr = 0.5\nseed=7\n").unwrap();
        let args = s(&["rwrek", "--threads", "2", "srw-check", "--config", cfg.to_str().unwrap(), "--r", "0.9"]);
        let out = expand_config(args, &["srw-check"]).unwrap();
        assert_eq!(
            out,
            s(&["rwrek", "--threads", "2", "srw-check", "--r", "0.5", "--seed", "7", "--r", "0.9"])
        );
    }

    #[test]
    fn malformed_lines_rejected() {
        let err = parse_config("r 0.5\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().contains("x.cfg:1"));
    }
}
