//! Key-value text configuration files (`key=value`, `#` comments). The CLI
//! resolves parameters as flags-over-file; this module only parses.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Parses `key=value` lines. Keys are trimmed and lowercased; blank lines
/// and `#` comments are skipped. Later duplicates win.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected key=value, got `{raw}`", lineno + 1))
        })?;
        out.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
    }
    Ok(out)
}
