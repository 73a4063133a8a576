//! Flat `key = value` text with optional `[section]` headers and `#` comments.

use indexmap::IndexMap;

use crate::error::{config_err, Result};

/// Parsed entries keyed by `section.key` (or `key` outside any section), in
/// file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    pub entries: IndexMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = IndexMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(format!("line {}: unterminated section header", i + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", i + 1)))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            if key.is_empty() || key.ends_with('.') {
                return Err(config_err(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(config_err(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }
}

/// Parses one value, naming the key in the error.
pub fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| config_err(format!("`{key}`: cannot parse `{value}`: {e}")))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(config_err(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let kv = KeyValues::parse("seed = 3 # run seed\n[model]\nm=10\n\n[train]\n lr = 5e-4\n").unwrap();
        assert_eq!(kv.get("seed"), Some("3"));
        assert_eq!(kv.get("model.m"), Some("10"));
        assert_eq!(kv.get("train.lr"), Some("5e-4"));
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(KeyValues::parse("just words").is_err());
        assert!(KeyValues::parse("[open").is_err());
        assert!(KeyValues::parse("a=1\na=2").is_err());
        assert!(parse_bool("k", "maybe").is_err());
        assert!(parse_value::<usize>("k", "-1").is_err());
    }
}
