//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use vsn_core::wirecodec::{content_format, MeasurementBatch, SenMLRecord};
use vsn_core::{Code, Message, ScenarioConfig};

pub fn scenario(name: &str) -> ScenarioConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    ScenarioConfig::load(&path).expect("shipped scenario loads")
}

pub fn batch(records: usize) -> MeasurementBatch {
    MeasurementBatch::new(
        (0..records)
            .map(|i| {
                SenMLRecord::new(
                    format!("sensor-{i:02}"),
                    "temperature",
                    "Cel",
                    20.0 + i as f64 * 0.37,
                    12.5,
                )
            })
            .collect(),
    )
}

pub fn data_post(payload: Vec<u8>) -> Message {
    Message::request(Code::POST, 0x1234)
        .with_token(vec![0x12, 0x34])
        .with_path(["apps", "city", "tasks", "city-temp"])
        .with_payload(content_format::SENML_JSON, payload)
}
