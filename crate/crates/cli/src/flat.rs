//! Flat `key = value` configuration text.
//!
//! Nested structures are spelled with dotted keys (`network.learning_rate.kind`).
//! Values are JSON literals (numbers, booleans, arrays, `null`, quoted strings);
//! anything that does not parse as JSON is taken as a bare string. Blank lines
//! and lines starting with `#` are ignored.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::error::CliError;

/// Ordered `key -> value` pairs.
pub type FlatMap = BTreeMap<String, Value>;

/// Flattens nested objects into dotted keys. Arrays are kept whole.
pub fn flatten(value: &Value) -> FlatMap {
    fn walk(prefix: &str, v: &Value, out: &mut FlatMap) {
        match v {
            Value::Object(map) if !map.is_empty() || prefix.is_empty() => {
                for (k, child) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, child, out);
                }
            }
            _ => {
                out.insert(prefix.to_owned(), v.clone());
            }
        }
    }
    let mut out = FlatMap::new();
    walk("", value, &mut out);
    out
}

/// Rebuilds the nested object described by dotted keys.
pub fn unflatten(flat: &FlatMap) -> Result<Value, CliError> {
    let mut root = Map::new();
    for (key, value) in flat {
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(CliError::Config(format!("malformed key {key:?}")));
        }
        let (last, path) = parts.split_last().expect("split yields at least one part");
        let mut node = &mut root;
        for part in path {
            let entry = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            node = entry.as_object_mut().ok_or_else(|| {
                CliError::Config(format!("key {key:?} conflicts with a value at {part:?}"))
            })?;
        }
        if node.contains_key(*last) {
            return Err(CliError::Config(format!(
                "key {key:?} conflicts with a nested key"
            )));
        }
        node.insert(last.to_string(), value.clone());
    }
    Ok(Value::Object(root))
}

/// Parses a single value: JSON if possible, otherwise a bare string.
pub fn parse_value(text: &str) -> Value {
    let text = text.trim();
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_owned()))
}

fn render_value(v: &Value) -> String {
    match v {
        // Bare strings are fine as long as they read back as the same string.
        Value::String(s) if parse_value(s) == *v && !s.starts_with('#') => s.clone(),
        other => other.to_string(),
    }
}

/// Renders one `key = value` line per entry, in key order.
pub fn render(flat: &FlatMap) -> String {
    flat.iter()
        .map(|(k, v)| format!("{k} = {}\n", render_value(v)))
        .collect()
}

/// Parses configuration text. Duplicate keys are rejected.
pub fn parse(text: &str) -> Result<FlatMap, CliError> {
    let mut out = FlatMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(key.to_owned(), parse_value(value)).is_some() {
            return Err(CliError::Config(format!(
                "line {}: duplicate key {key:?}",
                i + 1
            )));
        }
    }
    Ok(out)
}

/// Parses a `key=value` override.
pub fn parse_assignment(text: &str) -> Result<(String, Value), CliError> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {text:?} is not `key=value`")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!(
            "override {text:?} has an empty key"
        )));
    }
    Ok((key.to_owned(), parse_value(value)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flatten_and_unflatten_invert() {
        let v = json!({"a": 1, "b": {"c": [1, 2], "d": {"e": "x"}}, "f": {}, "g": null});
        let flat = flatten(&v);
        assert_eq!(
            flat.keys().collect::<Vec<_>>(),
            ["a", "b.c", "b.d.e", "f", "g"]
        );
        assert_eq!(unflatten(&flat).unwrap(), v);
    }

    #[test]
    fn text_round_trip_preserves_types() {
        let v = json!({
            "n": 0.1, "big": 18446744073709551615u64, "neg": -3, "t": true,
            "s": "inverse_capped", "num_like": "7", "path": "data/mnist", "spaced": " x ",
            "hash": "#x", "arr": [0.30000000000000004, 1e-300], "empty": ""
        });
        let text = render(&flatten(&v));
        assert!(text.contains("s = inverse_capped\n"));
        assert!(text.contains("num_like = \"7\"\n"));
        assert_eq!(unflatten(&parse(&text).unwrap()).unwrap(), v);
    }

    #[test]
    fn parse_rejects_bad_lines() {
        assert!(parse("# comment\n\na = 1\n").is_ok());
        assert!(matches!(parse("a 1"), Err(CliError::Config(_))));
        assert!(matches!(parse("= 1"), Err(CliError::Config(_))));
        assert!(matches!(parse("a = 1\na = 2"), Err(CliError::Config(_))));
    }

    #[test]
    fn conflicting_keys_rejected() {
        let flat = parse("a = 1\na.b = 2").unwrap();
        assert!(unflatten(&flat).is_err());
        assert!(unflatten(&parse("a..b = 1").unwrap()).is_err());
    }

    #[test]
    fn assignments() {
        assert_eq!(
            parse_assignment("seed=9").unwrap(),
            ("seed".into(), json!(9))
        );
        assert_eq!(
            parse_assignment("x = [1,2]").unwrap(),
            ("x".into(), json!([1, 2]))
        );
        assert!(parse_assignment("seed").is_err());
    }
}
