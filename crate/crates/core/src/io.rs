//! File formats: trajectory CSV, JSON documents with a metadata header.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::rng::PRNG_ID;

pub const TOOL: &str = "stuckwalk";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const CSV_META_PREFIX: &str = "# meta: ";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// Provenance block embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub prng: String,
    pub seed: Option<u64>,
    pub config: Value,
}

impl Meta {
    pub fn new(seed: Option<u64>, config: Value) -> Self {
        Meta {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            prng: PRNG_ID.to_string(),
            seed,
            config,
        }
    }
}

/// `{"meta": ..., <fields of body>}`; `body` must serialize to an object.
pub fn document<T: Serialize>(meta: &Meta, body: &T) -> Result<Value, IoError> {
    let mut out = serde_json::Map::new();
    out.insert("meta".into(), serde_json::to_value(meta)?);
    match serde_json::to_value(body)? {
        Value::Object(m) => out.extend(m),
        other => {
            out.insert("data".into(), other);
        }
    }
    Ok(Value::Object(out))
}

/// Pretty JSON followed by a newline.
pub fn write_json<W: Write, T: Serialize>(mut w: W, meta: &Meta, body: &T) -> Result<(), IoError> {
    let doc = document(meta, body)?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// `# meta: {...}` line, then `step,position` rows.
pub fn write_trajectory_csv<W: Write>(mut w: W, meta: &Meta, positions: &[i64]) -> Result<(), IoError> {
    writeln!(w, "{CSV_META_PREFIX}{}", serde_json::to_string(meta)?)?;
    writeln!(w, "step,position")?;
    for (k, x) in positions.iter().enumerate() {
        writeln!(w, "{k},{x}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV. Other `#` lines are ignored; steps must run
/// `0, 1, 2, ...`.
pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<(Option<Meta>, Vec<i64>), IoError> {
    let mut meta = None;
    let mut positions = Vec::new();
    let mut header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix(CSV_META_PREFIX) {
            meta = Some(serde_json::from_str(rest)?);
            continue;
        }
        if t.starts_with('#') {
            continue;
        }
        if !header {
            if t.replace(' ', "") != "step,position" {
                return Err(IoError::Format {
                    line: lineno,
                    reason: format!("expected header 'step,position', found '{t}'"),
                });
            }
            header = true;
            continue;
        }
        let bad = |reason: String| IoError::Format { line: lineno, reason };
        let (s, x) = t
            .split_once(',')
            .ok_or_else(|| bad("expected two fields".into()))?;
        let step: usize = s.trim().parse().map_err(|e| bad(format!("step: {e}")))?;
        let x: i64 = x.trim().parse().map_err(|e| bad(format!("position: {e}")))?;
        if step != positions.len() {
            return Err(bad(format!("expected step {}, found {step}", positions.len())));
        }
        positions.push(x);
    }
    if !header {
        return Err(IoError::Format {
            line: 0,
            reason: "missing 'step,position' header".into(),
        });
    }
    Ok((meta, positions))
}
