//! Length-prefixed binary frames.
//!
//! ```text
//! frame   = length:u32be  type:u8  session_id:u64be  payload[length]
//! bigint  = count:u32be  magnitude[count]          (big-endian, minimal)
//! string  = count:u32be  utf8[count]
//! ```
//!
//! Payloads by message type:
//!
//! | type | name                 | payload                                         |
//! |------|----------------------|-------------------------------------------------|
//! | 0x01 | HELLO                | version:u16 n:bigint kappa:u32 pixels:u32       |
//! | 0x02 | ACCEPT               | l:u32 kappa:u32 m_out:u32 gallery:u32 labels:u32 string* |
//! | 0x10 | ENC_IMAGE_CHUNK      | offset:u32 total:u32 count:u32 bigint*          |
//! | 0x11 | BLINDED_FEATURES     | count:u32 bigint*                               |
//! | 0x12 | SQUARE_SUM           | bigint                                          |
//! | 0x20 | BLINDED_Z            | bigint                                          |
//! | 0x21 | REDUCED_Z_AND_CARRY  | reduced:bigint count:u32 bit:bigint*            |
//! | 0x22 | MUL_BLIND            | count:u32 (a:bigint b:bigint)*                  |
//! | 0x23 | MUL_RESULT           | count:u32 bigint*                               |
//! | 0x24 | CARRY_MASKED         | count:u32 bigint*                               |
//! | 0x25 | CARRY_BIT            | bigint                                          |
//! | 0x30 | RESULT_LABEL         | bigint                                          |
//! | 0x7F | ERROR                | code:u16 utf8 message (rest of payload)         |

use std::io::{Read, Write};

use num_bigint::BigUint;
use thiserror::Error;

pub const HEADER_LEN: usize = 13;
pub const DEFAULT_MAX_FRAME: usize = 16 * 1024 * 1024;
pub const PROTOCOL_VERSION: u16 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("frame length field {declared} does not match {actual} payload bytes")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("frame of {0} bytes exceeds the maximum of {1}")]
    TooLarge(usize, usize),
    #[error("malformed {0} payload")]
    Malformed(&'static str),
    #[error("integer is not minimally encoded")]
    NonMinimal,
    #[error("invalid UTF-8 in {0}")]
    Utf8(&'static str),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("connection closed")]
    Closed,
}

#[repr(u8)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageType {
    Hello = 0x01,
    Accept = 0x02,
    EncImageChunk = 0x10,
    BlindedFeatures = 0x11,
    SquareSum = 0x12,
    BlindedZ = 0x20,
    ReducedZAndCarry = 0x21,
    MulBlind = 0x22,
    MulResult = 0x23,
    CarryMasked = 0x24,
    CarryBit = 0x25,
    ResultLabel = 0x30,
    Error = 0x7F,
}

impl MessageType {
    pub const ALL: [MessageType; 13] = [
        MessageType::Hello,
        MessageType::Accept,
        MessageType::EncImageChunk,
        MessageType::BlindedFeatures,
        MessageType::SquareSum,
        MessageType::BlindedZ,
        MessageType::ReducedZAndCarry,
        MessageType::MulBlind,
        MessageType::MulResult,
        MessageType::CarryMasked,
        MessageType::CarryBit,
        MessageType::ResultLabel,
        MessageType::Error,
    ];

    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        Self::ALL
            .into_iter()
            .find(|t| *t as u8 == b)
            .ok_or(WireError::UnknownType(b))
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageType::Hello => "HELLO",
            MessageType::Accept => "ACCEPT",
            MessageType::EncImageChunk => "ENC_IMAGE_CHUNK",
            MessageType::BlindedFeatures => "BLINDED_FEATURES",
            MessageType::SquareSum => "SQUARE_SUM",
            MessageType::BlindedZ => "BLINDED_Z",
            MessageType::ReducedZAndCarry => "REDUCED_Z_AND_CARRY",
            MessageType::MulBlind => "MUL_BLIND",
            MessageType::MulResult => "MUL_RESULT",
            MessageType::CarryMasked => "CARRY_MASKED",
            MessageType::CarryBit => "CARRY_BIT",
            MessageType::ResultLabel => "RESULT_LABEL",
            MessageType::Error => "ERROR",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Hello {
        version: u16,
        modulus: BigUint,
        kappa: u32,
        pixel_count: u32,
    },
    Accept {
        l: u32,
        kappa: u32,
        m_out: u32,
        gallery_size: u32,
        labels: Vec<String>,
    },
    EncImageChunk {
        offset: u32,
        total: u32,
        ciphertexts: Vec<BigUint>,
    },
    BlindedFeatures(Vec<BigUint>),
    SquareSum(BigUint),
    BlindedZ(BigUint),
    ReducedZAndCarry {
        reduced: BigUint,
        bits: Vec<BigUint>,
    },
    MulBlind(Vec<(BigUint, BigUint)>),
    MulResult(Vec<BigUint>),
    CarryMasked(Vec<BigUint>),
    CarryBit(BigUint),
    ResultLabel(BigUint),
    Error {
        code: u16,
        message: String,
    },
}

impl Message {
    pub fn kind(&self) -> MessageType {
        match self {
            Message::Hello { .. } => MessageType::Hello,
            Message::Accept { .. } => MessageType::Accept,
            Message::EncImageChunk { .. } => MessageType::EncImageChunk,
            Message::BlindedFeatures(_) => MessageType::BlindedFeatures,
            Message::SquareSum(_) => MessageType::SquareSum,
            Message::BlindedZ(_) => MessageType::BlindedZ,
            Message::ReducedZAndCarry { .. } => MessageType::ReducedZAndCarry,
            Message::MulBlind(_) => MessageType::MulBlind,
            Message::MulResult(_) => MessageType::MulResult,
            Message::CarryMasked(_) => MessageType::CarryMasked,
            Message::CarryBit(_) => MessageType::CarryBit,
            Message::ResultLabel(_) => MessageType::ResultLabel,
            Message::Error { .. } => MessageType::Error,
        }
    }

    /// Every big integer carried by the message, in wire order.
    pub fn integers(&self) -> Vec<&BigUint> {
        match self {
            Message::Hello { modulus, .. } => vec![modulus],
            Message::Accept { .. } | Message::Error { .. } => vec![],
            Message::EncImageChunk { ciphertexts: v, .. }
            | Message::BlindedFeatures(v)
            | Message::MulResult(v)
            | Message::CarryMasked(v) => v.iter().collect(),
            Message::SquareSum(x)
            | Message::BlindedZ(x)
            | Message::CarryBit(x)
            | Message::ResultLabel(x) => vec![x],
            Message::ReducedZAndCarry { reduced, bits } => {
                std::iter::once(reduced).chain(bits.iter()).collect()
            }
            Message::MulBlind(pairs) => pairs.iter().flat_map(|(a, b)| [a, b]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub session_id: u64,
    pub message: Message,
}

impl Frame {
    pub fn new(session_id: u64, message: Message) -> Self {
        Frame {
            session_id,
            message,
        }
    }
}

/// Bytes a big integer occupies on the wire.
pub fn bigint_wire_len(v: &BigUint) -> usize {
    4 + magnitude(v).len()
}

fn magnitude(v: &BigUint) -> Vec<u8> {
    if v.bits() == 0 {
        Vec::new()
    } else {
        v.to_bytes_be()
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("collection length fits in u32"));
    }
    fn bigint(&mut self, v: &BigUint) {
        let bytes = magnitude(v);
        self.len(bytes.len());
        self.0.extend_from_slice(&bytes);
    }
    fn bigints(&mut self, vs: &[BigUint]) {
        self.len(vs.len());
        vs.iter().for_each(|v| self.bigint(v));
    }
    fn string(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Malformed(self.what));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    /// A count of items that each occupy at least `min_item` bytes.
    fn count(&mut self, min_item: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.buf.len() {
            return Err(WireError::Malformed(self.what));
        }
        Ok(n)
    }
    fn bigint(&mut self) -> Result<BigUint, WireError> {
        let n = self.count(1)?;
        let bytes = self.take(n)?;
        if bytes.first() == Some(&0) {
            return Err(WireError::NonMinimal);
        }
        Ok(BigUint::from_bytes_be(bytes))
    }
    fn bigints(&mut self) -> Result<Vec<BigUint>, WireError> {
        let n = self.count(4)?;
        (0..n).map(|_| self.bigint()).collect()
    }
    fn string(&mut self) -> Result<String, WireError> {
        let n = self.count(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| WireError::Utf8(self.what))
    }
    fn finish(self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(WireError::Malformed(self.what))
        }
    }
}

pub fn encode_payload(message: &Message) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    match message {
        Message::Hello {
            version,
            modulus,
            kappa,
            pixel_count,
        } => {
            w.u16(*version);
            w.bigint(modulus);
            w.u32(*kappa);
            w.u32(*pixel_count);
        }
        Message::Accept {
            l,
            kappa,
            m_out,
            gallery_size,
            labels,
        } => {
            w.u32(*l);
            w.u32(*kappa);
            w.u32(*m_out);
            w.u32(*gallery_size);
            w.len(labels.len());
            labels.iter().for_each(|s| w.string(s));
        }
        Message::EncImageChunk {
            offset,
            total,
            ciphertexts,
        } => {
            w.u32(*offset);
            w.u32(*total);
            w.bigints(ciphertexts);
        }
        Message::BlindedFeatures(v) | Message::MulResult(v) | Message::CarryMasked(v) => {
            w.bigints(v)
        }
        Message::SquareSum(x) | Message::BlindedZ(x) | Message::CarryBit(x) | Message::ResultLabel(x) => {
            w.bigint(x)
        }
        Message::ReducedZAndCarry { reduced, bits } => {
            w.bigint(reduced);
            w.bigints(bits);
        }
        Message::MulBlind(pairs) => {
            w.len(pairs.len());
            for (a, b) in pairs {
                w.bigint(a);
                w.bigint(b);
            }
        }
        Message::Error { code, message } => {
            w.u16(*code);
            w.0.extend_from_slice(message.as_bytes());
        }
    }
    w.0
}

pub fn decode_payload(kind: MessageType, payload: &[u8]) -> Result<Message, WireError> {
    let mut r = Reader {
        buf: payload,
        what: kind.name(),
    };
    let msg = match kind {
        MessageType::Hello => Message::Hello {
            version: r.u16()?,
            modulus: r.bigint()?,
            kappa: r.u32()?,
            pixel_count: r.u32()?,
        },
        MessageType::Accept => {
            let (l, kappa, m_out, gallery_size) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
            let n = r.count(4)?;
            let labels = (0..n).map(|_| r.string()).collect::<Result<_, _>>()?;
            Message::Accept {
                l,
                kappa,
                m_out,
                gallery_size,
                labels,
            }
        }
        MessageType::EncImageChunk => Message::EncImageChunk {
            offset: r.u32()?,
            total: r.u32()?,
            ciphertexts: r.bigints()?,
        },
        MessageType::BlindedFeatures => Message::BlindedFeatures(r.bigints()?),
        MessageType::MulResult => Message::MulResult(r.bigints()?),
        MessageType::CarryMasked => Message::CarryMasked(r.bigints()?),
        MessageType::SquareSum => Message::SquareSum(r.bigint()?),
        MessageType::BlindedZ => Message::BlindedZ(r.bigint()?),
        MessageType::CarryBit => Message::CarryBit(r.bigint()?),
        MessageType::ResultLabel => Message::ResultLabel(r.bigint()?),
        MessageType::ReducedZAndCarry => Message::ReducedZAndCarry {
            reduced: r.bigint()?,
            bits: r.bigints()?,
        },
        MessageType::MulBlind => {
            let n = r.count(8)?;
            let pairs = (0..n)
                .map(|_| Ok((r.bigint()?, r.bigint()?)))
                .collect::<Result<_, WireError>>()?;
            Message::MulBlind(pairs)
        }
        MessageType::Error => {
            let code = r.u16()?;
            let rest = r.take(r.buf.len())?;
            let message =
                String::from_utf8(rest.to_vec()).map_err(|_| WireError::Utf8("ERROR"))?;
            Message::Error { code, message }
        }
    };
    r.finish()?;
    Ok(msg)
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let payload = encode_payload(&frame.message);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    let len = u32::try_from(payload.len()).expect("payload below 4 GiB");
    out.extend_from_slice(&len.to_be_bytes());
    out.push(frame.message.kind() as u8);
    out.extend_from_slice(&frame.session_id.to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Header {
    length: usize,
    kind: u8,
    session_id: u64,
}

fn parse_header(bytes: &[u8; HEADER_LEN]) -> Header {
    Header {
        length: u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize,
        kind: bytes[4],
        session_id: u64::from_be_bytes(bytes[5..13].try_into().unwrap()),
    }
}

/// Decode exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let header = parse_header(bytes[..HEADER_LEN].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < header.length {
        return Err(WireError::Truncated {
            needed: HEADER_LEN + header.length,
            available: bytes.len(),
        });
    }
    if payload.len() != header.length {
        return Err(WireError::LengthMismatch {
            declared: header.length,
            actual: payload.len(),
        });
    }
    let kind = MessageType::from_byte(header.kind)?;
    Ok(Frame {
        session_id: header.session_id,
        message: decode_payload(kind, payload)?,
    })
}

fn io_error(e: std::io::Error) -> WireError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        WireError::Closed
    } else {
        WireError::Io(e.to_string())
    }
}

/// Read one raw frame from a stream without interpreting the payload.
pub fn read_frame_bytes<R: Read>(reader: &mut R, max_frame: usize) -> Result<Vec<u8>, WireError> {
    let mut head = [0u8; HEADER_LEN];
    reader.read_exact(&mut head).map_err(io_error)?;
    let header = parse_header(&head);
    let total = HEADER_LEN + header.length;
    if total > max_frame {
        return Err(WireError::TooLarge(total, max_frame));
    }
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&head);
    out.resize(total, 0);
    reader.read_exact(&mut out[HEADER_LEN..]).map_err(io_error)?;
    Ok(out)
}

pub fn write_frame_bytes<W: Write>(writer: &mut W, bytes: &[u8]) -> Result<(), WireError> {
    writer
        .write_all(bytes)
        .and_then(|_| writer.flush())
        .map_err(io_error)
}
