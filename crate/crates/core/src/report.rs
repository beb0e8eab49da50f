//! Serialization helpers: 17 significant digits for every float, explicit
//! strings for infinities.

use std::io;

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use serde_json::ser::Formatter;

/// A float in scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Extended real: finite values as numbers, `±∞` as the strings `"inf"` / `"-inf"`.
pub fn ser_ext<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&fmt_f64(*x))
    }
}

pub fn ser_ext_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Ext(*x))?;
    }
    seq.end()
}

/// Wrapper that serializes with [`ser_ext`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ext(pub f64);

impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ser_ext(&self.0, s)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct F17;

impl Formatter for F17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format!("{value:.16e}").as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with 17-significant-digit floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, F17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Pretty JSON with 17-significant-digit floats.
pub fn to_json_pretty<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let compact = to_json(value)?;
    let v: serde_json::Value = serde_json::from_str(&compact)?;
    let mut out = String::new();
    pretty(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn pretty(v: &serde_json::Value, depth: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Array(items) if !items.is_empty() => {
            if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                let parts: Vec<String> = items.iter().map(scalar).collect();
                out.push('[');
                out.push_str(&parts.join(", "));
                out.push(']');
            } else {
                out.push_str("[\n");
                for (i, x) in items.iter().enumerate() {
                    out.push_str(&pad(depth + 1));
                    pretty(x, depth + 1, out);
                    if i + 1 < items.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                out.push_str(&pad(depth));
                out.push(']');
            }
        }
        Value::Object(map) if !map.is_empty() => {
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&serde_json::to_string(k).expect("string key"));
                out.push_str(": ");
                pretty(x, depth + 1, out);
                if i + 1 < map.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
        other => out.push_str(&scalar(other)),
    }
}

fn scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.16e}"),
            _ => n.to_string(),
        },
        other => serde_json::to_string(other).expect("scalar"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: f64,
        #[serde(serialize_with = "ser_ext")]
        b: f64,
        #[serde(serialize_with = "ser_ext_vec")]
        c: Vec<f64>,
        n: usize,
    }

    #[test]
    fn seventeen_digits_and_infinities() {
        let r = Row {
            a: 0.1,
            b: f64::INFINITY,
            c: vec![1.0, f64::NEG_INFINITY],
            n: 3,
        };
        let s = to_json(&r).unwrap();
        assert_eq!(
            s,
            r#"{"a":1.0000000000000001e-1,"b":"inf","c":[1.0000000000000000e0,"-inf"],"n":3}"#
        );
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
        let p = to_json_pretty(&r).unwrap();
        assert!(p.contains("\"a\": 1.0000000000000001e-1"));
        assert!(p.contains("\"n\": 3"));
    }

    #[test]
    fn fmt_roundtrip() {
        for x in [1.0 / 3.0, 2f64.powi(-10), 1e300, -7.25] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
