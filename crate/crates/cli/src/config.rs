//! `key=value` configuration files merged into the command line.
//!
//! Entries become long flags inserted right after the subcommand name, ahead of the
//! user's own flags. Every subcommand lets a repeated flag override an earlier one, so
//! command-line flags win over the file, and the file wins over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Command};

#[derive(Debug)]
pub enum ConfigError {
    Usage(String),
    Io(PathBuf, std::io::Error),
}

/// Parses `key = value` lines; blank lines and lines starting with `#` are skipped.
pub fn parse(text: &str, origin: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError::Usage(format!(
                "{}:{}: expected key=value, got `{line}`",
                origin.display(),
                i + 1
            ))
        })?;
        out.push((key.trim().replace('_', "-"), value.trim().to_string()));
    }
    Ok(out)
}

/// Removes `--config <path>` / `--config=<path>` from `args` and splices the file's
/// entries in after the subcommand. Keys are validated against the subcommand's flags.
pub fn merge(mut args: Vec<String>, cmd: &Command) -> Result<Vec<String>, ConfigError> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err(ConfigError::Usage("--config needs a path".into()));
            }
            path = Some(PathBuf::from(args.remove(i + 1)));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| ConfigError::Io(path.clone(), e))?;
    let entries = parse(&text, &path)?;

    let sub_pos = args
        .iter()
        .position(|a| cmd.find_subcommand(a).is_some())
        .ok_or_else(|| ConfigError::Usage("a config file needs a subcommand".into()))?;
    let sub = cmd.find_subcommand(&args[sub_pos]).expect("found above");

    let mut flags = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments().filter(|a| a.is_global_set()))
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| {
                ConfigError::Usage(format!(
                    "{}: unknown key `{key}` for `{}`",
                    path.display(),
                    sub.get_name()
                ))
            })?;
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => flags.push(format!("--{key}")),
                "false" => {}
                _ => {
                    return Err(ConfigError::Usage(format!(
                        "{}: `{key}` takes true or false, got `{value}`",
                        path.display()
                    )))
                }
            },
            _ => flags.push(format!("--{key}={value}")),
        }
    }
    args.splice(sub_pos + 1..sub_pos + 1, flags);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse("# c\n\nsample_seed = 3\nlaw=uniform:0.1,0.5\n", Path::new("x")).unwrap();
        assert_eq!(
            e,
            vec![
                ("sample-seed".to_string(), "3".to_string()),
                ("law".to_string(), "uniform:0.1,0.5".to_string())
            ]
        );
        assert!(matches!(parse("oops\n", Path::new("x")), Err(ConfigError::Usage(_))));
    }
}
