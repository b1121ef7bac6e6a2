#![allow(dead_code)]

use std::path::PathBuf;

use proptest::collection::vec;
use proptest::prelude::*;
use vsn_core::wirecodec::{content_format, MeasurementBatch, MsgType, SenMLRecord};
use vsn_core::{Code, Message, ScenarioConfig};

pub fn scenario(name: &str) -> ScenarioConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    ScenarioConfig::load(&path).expect("shipped scenario loads")
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        -1000.0..1000.0f64,
        Just(0.0),
    ]
}

pub fn message() -> impl Strategy<Value = Message> {
    (
        prop_oneof![Just(MsgType::Confirmable), Just(MsgType::Acknowledgement)],
        vec(any::<u8>(), 0..=8),
        prop::sample::select(Code::SUPPORTED.to_vec()),
        any::<u16>(),
        vec("[a-z0-9._-]{0,20}", 0..6),
        prop::option::of(prop_oneof![
            Just(content_format::OCTET_STREAM),
            Just(content_format::JSON),
            Just(content_format::SENML_JSON),
            any::<u16>(),
        ]),
        vec(any::<u8>(), 0..64),
    )
        .prop_map(
            |(msg_type, token, code, message_id, uri_path, content_format, payload)| Message {
                msg_type,
                token,
                code,
                message_id,
                uri_path,
                content_format,
                payload,
            },
        )
}

pub fn record() -> impl Strategy<Value = SenMLRecord> {
    (
        "[a-z][a-z0-9-]{0,15}",
        "[a-z]{0,12}",
        "[A-Za-z%]{0,4}",
        finite(),
        0.0..1e6f64,
    )
        .prop_map(|(bn, n, u, v, t)| SenMLRecord::new(bn, n, u, v, t))
}

pub fn batch() -> impl Strategy<Value = MeasurementBatch> {
    vec(record(), 1..8).prop_map(MeasurementBatch::new)
}
