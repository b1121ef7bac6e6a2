//! Byte-level formats shared by the data and control paths.

mod coap;
mod senml;

pub use coap::{
    content_format, decode_message, encode_message, CoapError, Code, Message, MsgType,
    MAX_TOKEN_LEN, OPTION_CONTENT_FORMAT, OPTION_URI_PATH, PAYLOAD_MARKER, VERSION,
};
pub use senml::{decode_senml, encode_senml, MeasurementBatch, SenMLRecord, SenmlError};

/// Builds a data-path POST carrying `batch` as SenML-JSON.
pub fn senml_post(
    message_id: u16,
    token: Vec<u8>,
    uri_path: Vec<String>,
    batch: &MeasurementBatch,
) -> Result<Message, SenmlError> {
    let payload = encode_senml(batch)?;
    Ok(Message::request(Code::POST, message_id)
        .with_token(token)
        .with_path(uri_path)
        .with_payload(content_format::SENML_JSON, payload))
}

/// Receiver-side check for data-path messages: a payload must be tagged
/// SenML-JSON and decode as such. The error is the response code to return.
pub fn accept_data_message(m: &Message) -> Result<Option<MeasurementBatch>, Code> {
    if m.payload.is_empty() {
        return Ok(None);
    }
    if m.content_format != Some(content_format::SENML_JSON) {
        return Err(Code::BAD_REQUEST);
    }
    decode_senml(&m.payload)
        .map(Some)
        .map_err(|_| Code::BAD_REQUEST)
}
