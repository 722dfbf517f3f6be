//! Line-oriented `key = value` files that preload command-line flags.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are long flag
//! names with or without the leading `--`; underscores and hyphens are
//! interchangeable. Flags given on the command line win over the file.

use std::collections::HashSet;

use clap::{ArgAction, Command};

use crate::CliError;

/// Parse a config file body into `(key, value)` pairs in file order.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected key = value",
                n + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(CliError::Usage(format!(
                "config line {}: invalid key {key:?}",
                n + 1
            )));
        }
        if !seen.insert(key.clone()) {
            return Err(CliError::Usage(format!(
                "config line {}: duplicate key {key:?}",
                n + 1
            )));
        }
        out.push((key, value.trim().to_owned()));
    }
    Ok(out)
}

/// Turn config pairs into extra argv entries for `sub`, skipping keys already
/// present in `cli_args`. Keys that `sub` does not accept are usage errors.
pub fn config_args(
    root: &Command,
    sub: &str,
    pairs: &[(String, String)],
    cli_args: &[String],
) -> Result<Vec<String>, CliError> {
    let sub_cmd = root
        .find_subcommand(sub)
        .ok_or_else(|| CliError::Usage(format!("unknown command {sub:?}")))?;
    let mut out = Vec::new();
    for (key, value) in pairs {
        if key == "config" {
            return Err(CliError::Usage(
                "config files cannot name another config file".into(),
            ));
        }
        let arg = sub_cmd
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Usage(format!("unknown config key {key:?} for {sub}")))?;
        let flag = format!("--{key}");
        let given = cli_args
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "" => out.push(flag),
                "false" | "no" | "0" => {}
                other => {
                    return Err(CliError::Usage(format!(
                        "config key {key:?}: expected a boolean, got {other:?}"
                    )))
                }
            }
        } else {
            out.push(format!("{flag}={value}"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let text = "# comment\n\nm = 64\n--z=256\nkeep_raw = true\n";
        let pairs = parse_config(text).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("m".into(), "64".into()),
                ("z".into(), "256".into()),
                ("keep-raw".into(), "true".into())
            ]
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            parse_config("just words"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(parse_config("= 3"), Err(CliError::Usage(_))));
        assert!(matches!(parse_config("a b = 3"), Err(CliError::Usage(_))));
        assert!(matches!(
            parse_config("m = 1\nm = 2"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn value_may_contain_equals() {
        let pairs = parse_config("out = a=b.json").unwrap();
        assert_eq!(pairs[0].1, "a=b.json");
    }
}
