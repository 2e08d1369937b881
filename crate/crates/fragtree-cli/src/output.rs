//! Deterministic file output: JSON with 17 significant digits, CSV with 9,
//! and the per-run manifest.

use serde_json::Value;
use std::fs;
use std::path::Path;

/// 17 significant digits, scientific notation (valid JSON number syntax).
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// 9 significant digits for CSV summaries.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Serializes a JSON value with floats printed to 17 significant digits
/// (serde_json's shortest-round-trip floats would be value-identical but
/// the output contract fixes the digit count).
pub fn to_json_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(value: &Value, indent: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&sig17(n.as_f64().expect("JSON numbers are finite")));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("strings serialize"))
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent + 1, out);
                write_value(item, indent + 1, out);
            }
            newline(indent, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent + 1, out);
                out.push_str(&serde_json::to_string(key).expect("keys serialize"));
                out.push_str(": ");
                write_value(item, indent + 1, out);
            }
            newline(indent, out);
            out.push('}');
        }
    }
}

fn newline(indent: usize, out: &mut String) {
    out.push('\n');
    for _ in 0..indent {
        out.push_str("  ");
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), String> {
    fs::write(path, to_json_string(value))
        .map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Writes a CSV file: a header row plus preformatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), String> {
    let mut body = String::with_capacity(rows.len() * 32 + header.len() + 1);
    body.push_str(header);
    body.push('\n');
    for row in rows {
        body.push_str(row);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Writes `manifest.json`: the exact invocation, the resolved config, and
/// crate versions, so any output file can be regenerated bit-identically.
pub fn write_manifest(out_dir: &Path, config: &Value) -> Result<(), String> {
    let command: Vec<String> = std::env::args().collect();
    let manifest = serde_json::json!({
        "command": command,
        "config": config,
        "versions": {
            "fragtree": fragtree::VERSION,
            "fragtree-cli": env!("CARGO_PKG_VERSION"),
        },
    });
    write_json(&out_dir.join("manifest.json"), &manifest)
}
