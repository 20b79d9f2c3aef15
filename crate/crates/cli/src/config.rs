//! Flat `key = value` run configuration. The keys are the long flag names.

use std::collections::BTreeMap;

pub const KEYS: [&str; 13] = [
    "family", "r", "h", "N", "S", "out", "format", "seed", "k", "a", "L", "svg", "csv",
];

/// Parse a config file body. Blank lines and lines starting with `#` are
/// skipped; unknown or repeated keys are errors.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value, got {raw:?}", n + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(format!("line {}: unknown key {key:?}", n + 1));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(format!("line {}: key {key:?} given twice", n + 1));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_pairs_and_comments() {
        let c = parse("# run\nfamily = skyrmion:r=0.5\n\nr=0.5\nN = 129\n").unwrap();
        assert_eq!(c["family"], "skyrmion:r=0.5");
        assert_eq!(c["r"], "0.5");
        assert_eq!(c["N"], "129");
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(parse("radius = 2").unwrap_err().contains("unknown key"));
        assert!(parse("r 0.5").is_err());
        assert!(parse("r = 1\nr = 2").is_err());
    }
}
