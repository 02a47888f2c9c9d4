use serde::Serialize;
use serde_json::{Map, Value};

use crate::{Failure, Format};

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure::Data(vsfat_core::Error::InvalidInput(format!("output: {e}")))
}

/// Prints a result on stdout. Floats use the shortest round-trip form.
pub fn emit<T: Serialize>(value: &T, fmt: Format) -> Result<(), Failure> {
    let text = match fmt {
        Format::Json => serde_json::to_string_pretty(value).map_err(internal)? + "\n",
        Format::Csv => to_csv(&serde_json::to_value(value).map_err(internal)?)?,
    };
    print!("{text}");
    Ok(())
}

fn flatten(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(_) => v.to_string(),
        other => other.to_string(),
    }
}

/// An object becomes one row, an array of objects one row each. Nested
/// objects are flattened to dotted column names.
fn to_csv(v: &Value) -> Result<String, Failure> {
    let rows: Vec<Map<String, Value>> = match v {
        Value::Array(items) => items
            .iter()
            .map(|it| {
                let mut m = Map::new();
                flatten("", it, &mut m);
                m
            })
            .collect(),
        other => {
            let mut m = Map::new();
            flatten("", other, &mut m);
            vec![m]
        }
    };
    let header: Vec<String> = rows.first().map(|r| r.keys().cloned().collect()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(internal)?;
    for r in &rows {
        w.write_record(header.iter().map(|k| r.get(k).map(cell).unwrap_or_default())).map_err(internal)?;
    }
    String::from_utf8(w.into_inner().map_err(internal)?).map_err(internal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn nested_objects_flatten() {
        let v = json!({"a": 1, "b": {"c": 0.5, "d": null}, "e": [1, 2]});
        let text = to_csv(&v).unwrap();
        assert_eq!(text, "a,b.c,b.d,e\n1,0.5,,\"[1,2]\"\n");
    }

    #[test]
    fn arrays_become_rows() {
        let v = json!([{"x": 1}, {"x": 2}]);
        assert_eq!(to_csv(&v).unwrap(), "x\n1\n2\n");
    }
}
