use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses a line-oriented data file. Blank lines and lines starting with `#`
/// are skipped; every other line is split on the first tab.
pub fn parse_table(source: &str, what: &str) -> Result<Vec<(String, Option<String>)>> {
    let mut rows = Vec::new();
    for (lineno, line) in source.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = match line.split_once('\t') {
            Some((k, v)) => (k.trim(), Some(v.trim().to_string())),
            None => (line.trim(), None),
        };
        if key.is_empty() {
            return Err(Error::Config(format!("{what}: empty key on line {}", lineno + 1)));
        }
        rows.push((key.to_string(), value));
    }
    Ok(rows)
}

/// Like [`parse_table`] but every row must carry a value.
pub fn parse_pairs(source: &str, what: &str) -> Result<Vec<(String, String)>> {
    parse_table(source, what)?
        .into_iter()
        .map(|(k, v)| match v {
            Some(v) if !v.is_empty() => Ok((k, v)),
            _ => Err(Error::Config(format!("{what}: missing value for {k:?}"))),
        })
        .collect()
}
