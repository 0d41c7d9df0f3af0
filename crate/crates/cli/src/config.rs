//! `--config FILE`: flat `key=value` lines spliced in as `--key=value` flags.
//!
//! Blank lines and lines starting with `#` are skipped. Keys are long flag
//! names without the dashes. Flags given on the command line win because
//! they come later in the argument list.

use std::ffi::OsString;
use std::path::Path;

use crate::error::{CliError, CliResult};

pub fn parse_config(text: &str, path: &Path) -> CliResult<Vec<OsString>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!(
                "{}:{}: expected key=value",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim();
        if key.is_empty() || key.starts_with('-') || key == "config" {
            return Err(CliError::usage(format!("{}:{}: bad key {key:?}", path.display(), i + 1)));
        }
        let value = value.trim();
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => out.push(format!("--{key}={value}").into()),
        }
    }
    Ok(out)
}

/// Removes `--config FILE` (or `--config=FILE`) from `args` and inserts the
/// file's flags right after the subcommand name.
pub fn expand(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut file = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let Some(p) = it.next() else {
                return Err(CliError::usage("--config needs a file"));
            };
            file = Some(p);
        } else if let Some(p) = s.strip_prefix("--config=") {
            file = Some(OsString::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(file) = file else {
        return Ok(rest);
    };
    let path = Path::new(&file);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let extra = parse_config(&text, path)?;
    // the subcommand is the first argument after the program name that is
    // not a flag
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(rest.len());
    let tail = rest.split_off(at);
    rest.extend(extra);
    rest.extend(tail);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[OsString]) -> Vec<String> {
        v.iter().map(|s| s.to_string_lossy().into_owned()).collect()
    }

    #[test]
    fn parses_lines() {
        let got = parse_config("# c\n\nloss = dt\ncell=0.2\nsquared=true\nx=false\n", Path::new("c")).unwrap();
        assert_eq!(strs(&got), ["--loss=dt", "--cell=0.2", "--squared"]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_config("loss dt\n", Path::new("c")).is_err());
        assert!(parse_config("=3\n", Path::new("c")).is_err());
        assert!(parse_config("config=x\n", Path::new("c")).is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.cfg");
        std::fs::write(&f, "cell=0.5\n").unwrap();
        let args: Vec<OsString> = ["fnsf", "flow", "--config", f.to_str().unwrap(), "a", "b", "--cell", "0.2"]
            .iter()
            .map(OsString::from)
            .collect();
        assert_eq!(
            strs(&expand(args).unwrap()),
            ["fnsf", "flow", "--cell=0.5", "a", "b", "--cell", "0.2"]
        );
    }
}
