//! JSON persistence of [`DatasetConfig`].
//!
//! ```json
//! {
//!   "schema_version": "1",
//!   "generation": { "n_datapoints": 5000, "n_classes": 500, ... },
//!   "fingerprints": [ { "id": 0, "positions": [...], "intensities": [...] } ]
//! }
//! ```
//!
//! Floats are written as shortest round-trip decimals, so a save/load cycle
//! is bit-exact. Unknown keys are accepted and reported as warnings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DatasetConfig, GenerationConfig};
use crate::error::{Error, Result};
use crate::spectra::{ClassFingerprint, Peak};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Serialize, Deserialize)]
struct Document {
    schema_version: String,
    generation: GenerationConfig,
    fingerprints: Vec<FingerprintEntry>,
}

#[derive(Serialize, Deserialize)]
struct FingerprintEntry {
    id: u32,
    positions: Vec<f64>,
    intensities: Vec<f64>,
}

pub fn to_json(config: &DatasetConfig) -> String {
    let doc = Document {
        schema_version: SCHEMA_VERSION.to_string(),
        generation: config.generation.clone(),
        fingerprints: config
            .fingerprints
            .iter()
            .map(|fp| FingerprintEntry {
                id: fp.class_id,
                positions: fp.positions().collect(),
                intensities: fp.intensities().collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("config serializes");
    s.push('\n');
    s
}

pub fn save_config(config: &DatasetConfig, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(config)).map_err(|e| Error::io(path.display(), e))
}

pub fn load_config(path: &Path) -> Result<DatasetConfig> {
    let (config, warnings) = load_config_with_warnings(path)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(config)
}

/// Loads and validates a config; the second element lists ignored keys.
pub fn load_config_with_warnings(path: &Path) -> Result<(DatasetConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    from_json(&text)
}

pub fn from_json(text: &str) -> Result<(DatasetConfig, Vec<String>)> {
    let raw: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    match raw.get("schema_version") {
        Some(Value::String(v)) if v == SCHEMA_VERSION => {}
        Some(other) => {
            return Err(Error::Parse {
                path: "schema_version".into(),
                message: format!("unsupported schema version {other}, expected \"{SCHEMA_VERSION}\""),
            })
        }
        None => {
            return Err(Error::Parse {
                path: "schema_version".into(),
                message: "missing field".into(),
            })
        }
    }
    let doc: Document = serde_path_to_error::deserialize(&raw).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;

    let mut warnings = Vec::new();
    let known = serde_json::to_value(&doc).expect("document serializes");
    unknown_keys(&raw, &known, String::new(), &mut warnings);

    let mut fingerprints = Vec::with_capacity(doc.fingerprints.len());
    for (i, e) in doc.fingerprints.into_iter().enumerate() {
        if e.positions.len() != e.intensities.len() {
            return Err(Error::Parse {
                path: format!("fingerprints[{i}]"),
                message: format!(
                    "class {}: {} positions but {} intensities",
                    e.id,
                    e.positions.len(),
                    e.intensities.len()
                ),
            });
        }
        let peaks = e
            .positions
            .into_iter()
            .zip(e.intensities)
            .map(|(p, i)| Peak::new(p, i))
            .collect();
        fingerprints.push(ClassFingerprint { class_id: e.id, peaks });
    }
    let config = DatasetConfig {
        generation: doc.generation,
        fingerprints,
    };
    config.validate()?;
    Ok((config, warnings))
}

fn unknown_keys(raw: &Value, known: &Value, path: String, out: &mut Vec<String>) {
    match (raw, known) {
        (Value::Object(r), Value::Object(k)) => {
            for (key, rv) in r {
                let p = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match k.get(key) {
                    Some(kv) => unknown_keys(rv, kv, p, out),
                    None => out.push(format!("ignoring unknown field `{p}`")),
                }
            }
        }
        (Value::Array(r), Value::Array(k)) => {
            for (i, (rv, kv)) in r.iter().zip(k).enumerate() {
                unknown_keys(rv, kv, format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetConfig {
        let generation = GenerationConfig {
            n_classes: 2,
            ..GenerationConfig::desk(5)
        };
        DatasetConfig {
            generation,
            fingerprints: vec![
                ClassFingerprint::new(0, vec![Peak::new(100.1, 0.3), Peak::new(400.0, 1.0)]),
                ClassFingerprint::new(
                    1,
                    vec![Peak::new(0.1f64.exp() * 300.0, 1.0), Peak::new(777.7, 1.0 / 3.0)],
                ),
            ],
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let c = tiny();
        let (back, warnings) = from_json(&to_json(&c)).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(back, c);
        for (a, b) in back.fingerprints.iter().zip(&c.fingerprints) {
            for (pa, pb) in a.peaks.iter().zip(&b.peaks) {
                assert_eq!(pa.position.to_bits(), pb.position.to_bits());
                assert_eq!(pa.intensity.to_bits(), pb.intensity.to_bits());
            }
        }
    }

    #[test]
    fn unknown_fields_warn() {
        let mut v: Value = serde_json::from_str(&to_json(&tiny())).unwrap();
        v["comment"] = Value::from("hand edited");
        v["generation"]["future_knob"] = Value::from(3);
        v["fingerprints"][1]["note"] = Value::from("x");
        let (c, warnings) = from_json(&v.to_string()).unwrap();
        assert_eq!(c, tiny());
        assert_eq!(warnings.len(), 3, "{warnings:?}");
        assert!(warnings.iter().any(|w| w.contains("generation.future_knob")));
        assert!(warnings.iter().any(|w| w.contains("fingerprints[1].note")));
    }

    #[test]
    fn missing_field_names_its_path() {
        let mut v: Value = serde_json::from_str(&to_json(&tiny())).unwrap();
        v["generation"].as_object_mut().unwrap().remove("n_classes");
        match from_json(&v.to_string()) {
            Err(Error::Parse { path, message }) => {
                assert_eq!(path, "generation");
                assert!(message.contains("n_classes"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut v: Value = serde_json::from_str(&to_json(&tiny())).unwrap();
        v["fingerprints"][0]["positions"][0] = Value::from("oops");
        match from_json(&v.to_string()) {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "fingerprints[0].positions[0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_version_mismatch_is_rejected() {
        let mut v: Value = serde_json::from_str(&to_json(&tiny())).unwrap();
        v["schema_version"] = Value::from("2");
        assert!(matches!(from_json(&v.to_string()), Err(Error::Parse { .. })));
    }

    #[test]
    fn peak_inside_border_is_rejected_with_class_id() {
        let mut v: Value = serde_json::from_str(&to_json(&tiny())).unwrap();
        v["fingerprints"][1]["positions"][0] = Value::from(5.0);
        let err = from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("class 1"), "{err}");
    }
}
