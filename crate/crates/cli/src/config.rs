//! `key = value` config files, spliced into the argument list so that
//! command-line flags override them.

use std::ffi::OsString;
use std::fs;

/// A config-file problem, reported as a usage error.
#[derive(Debug)]
pub struct ConfigError(pub String);

/// Parses `key = value` lines; `#` starts a comment. Values `true`/`false`
/// toggle switches.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            ConfigError(format!("config line {}: expected 'key = value'", i + 1))
        })?;
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            return Err(ConfigError(format!("config line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn to_flags(pairs: &[(String, String)]) -> Vec<OsString> {
    let mut flags = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => flags.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                flags.push(format!("--{k}").into());
                flags.push(v.into());
            }
        }
    }
    flags
}

/// Finds `--config <path>` (or `--config=<path>`), reads it and inserts its
/// flags right after the subcommand name.
pub fn expand(args: Vec<OsString>, subcommands: &[&str]) -> Result<Vec<OsString>, ConfigError> {
    let mut path = None;
    let mut iter = args.iter().enumerate();
    while let Some((_, a)) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = iter.next().map(|(_, p)| p.clone());
            if path.is_none() {
                return Err(ConfigError("--config needs a file path".into()));
            }
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| {
        ConfigError(format!("cannot read config {}: {e}", path.to_string_lossy()))
    })?;
    let flags = to_flags(&parse(&text)?);
    let Some(at) = args
        .iter()
        .position(|a| subcommands.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    let mut out = args[..=at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let p = parse("# header\nalpha = 2\n\nbeta=1 # trailing\n").unwrap();
        assert_eq!(p, vec![("alpha".into(), "2".into()), ("beta".into(), "1".into())]);
        assert!(parse("alpha 2").is_err());
    }

    #[test]
    fn switches() {
        let f = to_flags(&[("a".into(), "true".into()), ("b".into(), "false".into())]);
        assert_eq!(f, vec![OsString::from("--a")]);
    }
}
