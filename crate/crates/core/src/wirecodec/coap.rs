//! CoAP-subset framing.
//!
//! Layout: 4-byte fixed header (version, type, token length, code, message
//! id), the token, delta-encoded options in ascending option number, then a
//! `0xFF` marker and the payload when the payload is nonempty. Only Uri-Path
//! and Content-Format options are produced.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VERSION: u8 = 1;
pub const MAX_TOKEN_LEN: usize = 8;
pub const PAYLOAD_MARKER: u8 = 0xFF;

pub const OPTION_URI_PATH: u16 = 11;
pub const OPTION_CONTENT_FORMAT: u16 = 12;

/// Content-format ids used on the wire.
pub mod content_format {
    pub const OCTET_STREAM: u16 = 42;
    pub const JSON: u16 = 50;
    pub const SENML_JSON: u16 = 110;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoapError {
    #[error("input truncated")]
    Truncated,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unsupported message type {0}")]
    UnsupportedType(u8),
    #[error("unsupported code {0}")]
    UnsupportedCode(Code),
    #[error("token of {0} bytes exceeds 8")]
    OversizeToken(usize),
    #[error("malformed option: {0}")]
    MalformedOption(&'static str),
    #[error("option value of {0} bytes cannot be encoded")]
    OptionTooLong(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MsgType {
    Confirmable,
    Acknowledgement,
}

impl MsgType {
    fn bits(self) -> u8 {
        match self {
            MsgType::Confirmable => 0,
            MsgType::Acknowledgement => 2,
        }
    }

    fn from_bits(bits: u8) -> Result<Self, CoapError> {
        match bits {
            0 => Ok(MsgType::Confirmable),
            2 => Ok(MsgType::Acknowledgement),
            other => Err(CoapError::UnsupportedType(other)),
        }
    }
}

/// Request method or response code, packed as `class << 5 | detail`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Code(u8);

impl Code {
    pub const GET: Code = Code::new(0, 1);
    pub const POST: Code = Code::new(0, 2);
    pub const PUT: Code = Code::new(0, 3);
    pub const CREATED: Code = Code::new(2, 1);
    pub const CHANGED: Code = Code::new(2, 4);
    pub const CONTENT: Code = Code::new(2, 5);
    pub const BAD_REQUEST: Code = Code::new(4, 0);
    pub const NOT_FOUND: Code = Code::new(4, 4);

    pub const SUPPORTED: [Code; 8] = [
        Code::GET,
        Code::POST,
        Code::PUT,
        Code::CREATED,
        Code::CHANGED,
        Code::CONTENT,
        Code::BAD_REQUEST,
        Code::NOT_FOUND,
    ];

    /// `class` is truncated to 3 bits and `detail` to 5.
    pub const fn new(class: u8, detail: u8) -> Self {
        Code(((class & 0x07) << 5) | (detail & 0x1F))
    }

    pub const fn from_byte(b: u8) -> Self {
        Code(b)
    }

    pub const fn as_byte(self) -> u8 {
        self.0
    }

    pub const fn class(self) -> u8 {
        self.0 >> 5
    }

    pub const fn detail(self) -> u8 {
        self.0 & 0x1F
    }

    pub fn is_supported(self) -> bool {
        Code::SUPPORTED.contains(&self)
    }

    pub const fn is_request(self) -> bool {
        self.class() == 0
    }

    pub const fn is_success(self) -> bool {
        self.class() == 2
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.class(), self.detail())
    }
}

impl fmt::Debug for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Code({self})")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub msg_type: MsgType,
    pub token: Vec<u8>,
    pub code: Code,
    pub message_id: u16,
    pub uri_path: Vec<String>,
    pub content_format: Option<u16>,
    pub payload: Vec<u8>,
}

impl Message {
    /// A confirmable request without options or payload.
    pub fn request(code: Code, message_id: u16) -> Self {
        Message {
            msg_type: MsgType::Confirmable,
            token: Vec::new(),
            code,
            message_id,
            uri_path: Vec::new(),
            content_format: None,
            payload: Vec::new(),
        }
    }

    /// Piggybacked acknowledgement carrying `code`, echoing the request's
    /// message id and token.
    pub fn response_to(request: &Message, code: Code) -> Self {
        Message {
            msg_type: MsgType::Acknowledgement,
            token: request.token.clone(),
            code,
            message_id: request.message_id,
            uri_path: Vec::new(),
            content_format: None,
            payload: Vec::new(),
        }
    }

    pub fn with_token(mut self, token: impl Into<Vec<u8>>) -> Self {
        self.token = token.into();
        self
    }

    pub fn with_path<I, S>(mut self, segments: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.uri_path = segments.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_payload(mut self, content_format: u16, payload: Vec<u8>) -> Self {
        self.content_format = Some(content_format);
        self.payload = payload;
        self
    }

    pub fn is_request(&self) -> bool {
        self.msg_type == MsgType::Confirmable
    }

    pub fn uri(&self) -> String {
        self.uri_path.join("/")
    }
}

fn push_option(out: &mut Vec<u8>, delta: u16, value: &[u8]) -> Result<(), CoapError> {
    fn nibble(v: usize) -> Result<(u8, Option<Vec<u8>>), CoapError> {
        match v {
            0..=12 => Ok((v as u8, None)),
            13..=268 => Ok((13, Some(vec![(v - 13) as u8]))),
            269..=65_804 => Ok((14, Some(((v - 269) as u16).to_be_bytes().to_vec()))),
            _ => Err(CoapError::OptionTooLong(v)),
        }
    }
    let (d, d_ext) = nibble(delta as usize)?;
    let (l, l_ext) = nibble(value.len()).map_err(|_| CoapError::OptionTooLong(value.len()))?;
    out.push((d << 4) | l);
    out.extend(d_ext.into_iter().flatten());
    out.extend(l_ext.into_iter().flatten());
    out.extend_from_slice(value);
    Ok(())
}

fn uint_bytes(v: u16) -> Vec<u8> {
    match v {
        0 => Vec::new(),
        1..=0xFF => vec![v as u8],
        _ => v.to_be_bytes().to_vec(),
    }
}

pub fn encode_message(m: &Message) -> Result<Vec<u8>, CoapError> {
    if m.token.len() > MAX_TOKEN_LEN {
        return Err(CoapError::OversizeToken(m.token.len()));
    }
    if !m.code.is_supported() {
        return Err(CoapError::UnsupportedCode(m.code));
    }
    let mut out = Vec::with_capacity(4 + m.token.len() + m.payload.len() + 16);
    out.push((VERSION << 6) | (m.msg_type.bits() << 4) | m.token.len() as u8);
    out.push(m.code.as_byte());
    out.extend_from_slice(&m.message_id.to_be_bytes());
    out.extend_from_slice(&m.token);

    let mut last = 0u16;
    for segment in &m.uri_path {
        push_option(&mut out, OPTION_URI_PATH - last, segment.as_bytes())?;
        last = OPTION_URI_PATH;
    }
    if let Some(cf) = m.content_format {
        push_option(&mut out, OPTION_CONTENT_FORMAT - last, &uint_bytes(cf))?;
    }
    if !m.payload.is_empty() {
        out.push(PAYLOAD_MARKER);
        out.extend_from_slice(&m.payload);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CoapError> {
        let end = self.pos.checked_add(n).ok_or(CoapError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(CoapError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn byte(&mut self) -> Result<u8, CoapError> {
        Ok(self.take(1)?[0])
    }

    fn extended(&mut self, nibble: u8) -> Result<usize, CoapError> {
        match nibble {
            0..=12 => Ok(nibble as usize),
            13 => Ok(self.byte()? as usize + 13),
            14 => {
                let b = self.take(2)?;
                Ok(u16::from_be_bytes([b[0], b[1]]) as usize + 269)
            }
            _ => Err(CoapError::MalformedOption("reserved nibble 15")),
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, CoapError> {
    let mut r = Reader { bytes, pos: 0 };
    let header = r.take(4)?;
    let version = header[0] >> 6;
    if version != VERSION {
        return Err(CoapError::BadVersion(version));
    }
    let msg_type = MsgType::from_bits((header[0] >> 4) & 0x03)?;
    let token_len = (header[0] & 0x0F) as usize;
    if token_len > MAX_TOKEN_LEN {
        return Err(CoapError::OversizeToken(token_len));
    }
    let code = Code::from_byte(header[1]);
    if !code.is_supported() {
        return Err(CoapError::UnsupportedCode(code));
    }
    let message_id = u16::from_be_bytes([header[2], header[3]]);
    let token = r.take(token_len)?.to_vec();

    let mut uri_path = Vec::new();
    let mut content_format = None;
    let mut payload = Vec::new();
    let mut number = 0usize;
    while !r.is_empty() {
        let head = r.byte()?;
        if head == PAYLOAD_MARKER {
            let rest = r.rest();
            if rest.is_empty() {
                return Err(CoapError::MalformedOption("payload marker without payload"));
            }
            payload = rest.to_vec();
            break;
        }
        number += r.extended(head >> 4)?;
        let len = r.extended(head & 0x0F)?;
        let value = r.take(len)?;
        match number {
            n if n == OPTION_URI_PATH as usize => {
                let segment = std::str::from_utf8(value)
                    .map_err(|_| CoapError::MalformedOption("Uri-Path is not UTF-8"))?;
                uri_path.push(segment.to_owned());
            }
            n if n == OPTION_CONTENT_FORMAT as usize => {
                if content_format.is_some() {
                    return Err(CoapError::MalformedOption("repeated Content-Format"));
                }
                if value.len() > 2 {
                    return Err(CoapError::MalformedOption(
                        "Content-Format wider than 2 bytes",
                    ));
                }
                content_format = Some(value.iter().fold(0u16, |acc, b| (acc << 8) | *b as u16));
            }
            n if n % 2 == 1 => return Err(CoapError::MalformedOption("unknown critical option")),
            _ => {} // unknown elective options are skipped
        }
    }

    Ok(Message {
        msg_type,
        token,
        code,
        message_id,
        uri_path,
        content_format,
        payload,
    })
}
