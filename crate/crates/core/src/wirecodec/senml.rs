//! SenML-JSON measurement payloads.
//!
//! Every record is written with all five fields (`bn`, `n`, `u`, `v`, `t`);
//! values use shortest round-trip decimal formatting so decode is lossless.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SenMLRecord {
    pub base_name: String,
    pub name: String,
    pub unit: String,
    pub value: f64,
    /// Seconds.
    pub time: f64,
}

impl SenMLRecord {
    pub fn new(
        base_name: impl Into<String>,
        name: impl Into<String>,
        unit: impl Into<String>,
        value: f64,
        time: f64,
    ) -> Self {
        SenMLRecord {
            base_name: base_name.into(),
            name: name.into(),
            unit: unit.into(),
            value,
            time,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBatch {
    pub records: Vec<SenMLRecord>,
}

impl MeasurementBatch {
    pub fn new(records: Vec<SenMLRecord>) -> Self {
        MeasurementBatch { records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SenmlError {
    #[error("batch has no records")]
    EmptyBatch,
    #[error("record {0} has an empty base name")]
    EmptyBaseName(usize),
    #[error("record {0} has a non-finite value or time")]
    NonFinite(usize),
    #[error("malformed SenML JSON: {0}")]
    MalformedJson(String),
    #[error("record {index} is missing field {field:?}")]
    MissingField { index: usize, field: &'static str },
    #[error("record {index} field {field:?} has the wrong type")]
    InvalidField { index: usize, field: &'static str },
}

#[derive(Serialize)]
struct WireRecord<'a> {
    bn: &'a str,
    n: &'a str,
    u: &'a str,
    v: f64,
    t: f64,
}

pub fn encode_senml(batch: &MeasurementBatch) -> Result<Vec<u8>, SenmlError> {
    if batch.records.is_empty() {
        return Err(SenmlError::EmptyBatch);
    }
    let mut wire = Vec::with_capacity(batch.records.len());
    for (i, r) in batch.records.iter().enumerate() {
        if r.base_name.is_empty() {
            return Err(SenmlError::EmptyBaseName(i));
        }
        if !r.value.is_finite() || !r.time.is_finite() {
            return Err(SenmlError::NonFinite(i));
        }
        wire.push(WireRecord {
            bn: &r.base_name,
            n: &r.name,
            u: &r.unit,
            v: r.value,
            t: r.time,
        });
    }
    serde_json::to_vec(&wire).map_err(|e| SenmlError::MalformedJson(e.to_string()))
}

pub fn decode_senml(bytes: &[u8]) -> Result<MeasurementBatch, SenmlError> {
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| SenmlError::MalformedJson(e.to_string()))?;
    let Value::Array(items) = doc else {
        return Err(SenmlError::MalformedJson(
            "top level is not an array".into(),
        ));
    };
    let mut records = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let Value::Object(obj) = item else {
            return Err(SenmlError::MalformedJson(format!(
                "record {index} is not an object"
            )));
        };
        let field = |name: &'static str| {
            obj.get(name)
                .ok_or(SenmlError::MissingField { index, field: name })
        };
        let text = |name: &'static str| -> Result<String, SenmlError> {
            field(name)?
                .as_str()
                .map(str::to_owned)
                .ok_or(SenmlError::InvalidField { index, field: name })
        };
        let number = |name: &'static str| -> Result<f64, SenmlError> {
            field(name)?
                .as_f64()
                .ok_or(SenmlError::InvalidField { index, field: name })
        };
        let base_name = text("bn")?;
        if base_name.is_empty() {
            return Err(SenmlError::EmptyBaseName(index));
        }
        records.push(SenMLRecord {
            base_name,
            name: text("n")?,
            unit: text("u")?,
            value: number("v")?,
            time: number("t")?,
        });
    }
    Ok(MeasurementBatch { records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(v: f64, t: f64) -> SenMLRecord {
        SenMLRecord::new("sensor-01", "temperature", "Cel", v, t)
    }

    #[test]
    fn single_record_round_trips() {
        let batch = MeasurementBatch::new(vec![rec(21.5, 3.25)]);
        let bytes = encode_senml(&batch).unwrap();
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            r#"[{"bn":"sensor-01","n":"temperature","u":"Cel","v":21.5,"t":3.25}]"#
        );
        assert_eq!(decode_senml(&bytes).unwrap(), batch);
    }

    #[test]
    fn zero_value_and_time_round_trip() {
        let batch = MeasurementBatch::new(vec![rec(0.0, 0.0)]);
        assert_eq!(decode_senml(&encode_senml(&batch).unwrap()).unwrap(), batch);
    }

    #[test]
    fn awkward_decimals_round_trip_exactly() {
        let batch =
            MeasurementBatch::new(vec![rec(0.1 + 0.2, 1e-300), rec(-123456.789e10, 5e-324)]);
        let back = decode_senml(&encode_senml(&batch).unwrap()).unwrap();
        assert_eq!(back, batch);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert_eq!(
            encode_senml(&MeasurementBatch::default()),
            Err(SenmlError::EmptyBatch)
        );
    }

    #[test]
    fn non_finite_and_empty_base_name_are_rejected() {
        assert_eq!(
            encode_senml(&MeasurementBatch::new(vec![rec(f64::NAN, 0.0)])),
            Err(SenmlError::NonFinite(0))
        );
        let mut r = rec(1.0, 1.0);
        r.base_name.clear();
        assert_eq!(
            encode_senml(&MeasurementBatch::new(vec![r])),
            Err(SenmlError::EmptyBaseName(0))
        );
    }

    #[test]
    fn missing_value_field() {
        let bytes = br#"[{"bn":"a","n":"temperature","u":"Cel","t":1}]"#;
        assert_eq!(
            decode_senml(bytes),
            Err(SenmlError::MissingField {
                index: 0,
                field: "v"
            })
        );
    }

    #[test]
    fn non_json_is_malformed() {
        assert!(matches!(
            decode_senml(b"\x00not json"),
            Err(SenmlError::MalformedJson(_))
        ));
        assert!(matches!(
            decode_senml(b"{}"),
            Err(SenmlError::MalformedJson(_))
        ));
    }

    #[test]
    fn wrong_field_type() {
        let bytes = br#"[{"bn":"a","n":"temperature","u":"Cel","v":"hot","t":1}]"#;
        assert_eq!(
            decode_senml(bytes),
            Err(SenmlError::InvalidField {
                index: 0,
                field: "v"
            })
        );
    }
}
