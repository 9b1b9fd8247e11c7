//! Canonical JSON and CSV artifact writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::config::parse_json;
use crate::geometry::Polytope;
use crate::Result;

/// JSON with sorted keys, no insignificant whitespace and every float
/// written with 17 significant digits.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, &mut out);
    Ok(out)
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.push_str(&n.to_string());
            } else {
                let f = n.as_f64().expect("finite JSON number");
                out.push_str(&format!("{f:.16e}"));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push(':');
                write_value(&map[k], out);
            }
            out.push('}');
        }
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = to_canonical_json(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    parse_json(&fs::read_to_string(path)?)
}

/// Planar vertex list of each set: `set, vertex, x0, x1`.
pub fn write_vertices_csv<W: Write>(w: W, sets: &[Polytope]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["set", "vertex", "x0", "x1"])?;
    for (s, p) in sets.iter().enumerate() {
        for (v, [x, y]) in p.vertices_2d()?.into_iter().enumerate() {
            out.write_record([s.to_string(), v.to_string(), format!("{x:.16e}"), format!("{y:.16e}")])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let v = json!({"b": 0.1, "a": [1, 2.5, null], "c": {"z": true, "y": "s"}});
        assert_eq!(
            to_canonical_json(&v).unwrap(),
            r#"{"a":[1,2.5000000000000000e0,null],"b":1.0000000000000001e-1,"c":{"y":"s","z":true}}"#
        );
    }

    #[test]
    fn floats_round_trip() {
        let xs = vec![0.1, -1.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE];
        let text = to_canonical_json(&xs).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(xs, back);
    }
}
