//! Controller-to-driver wire format and the `.hrlog` frame-log container.
//!
//! Message layout (big-endian, 172 bytes):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 2    | magic `"HR"` (`0x48 0x52`)              |
//! | 2      | 1    | version `0x01`                          |
//! | 3      | 1    | eye id (0 = left, 1 = right)            |
//! | 4      | 4    | sequence number                         |
//! | 8      | 160  | 40 pixels as R, G, B, A in frame order  |
//! | 168    | 4    | CRC-32 (IEEE 802.3) of bytes 0..168     |
//!
//! At 30 fps for two eyes this is 172 * 60 = 10,320 bytes/s.
//!
//! A frame log is the 8-byte header `HRLOG\0\0\x01` followed by records of
//! an 8-byte big-endian millisecond timestamp and one encoded message.

use alloc::vec::Vec;
use core::fmt;

use crate::frames::{ColorRGBA, LedFrame};
use crate::geometry::PIXEL_COUNT;

pub const MAGIC: [u8; 2] = *b"HR";
pub const VERSION: u8 = 0x01;
pub const MESSAGE_LEN: usize = 172;
const PAYLOAD_LEN: usize = MESSAGE_LEN - 4;
const PIXELS_AT: usize = 8;

pub const LOG_HEADER: [u8; 8] = *b"HRLOG\0\0\x01";
pub const LOG_RECORD_LEN: usize = 8 + MESSAGE_LEN;

/// Which eye of the pair a message addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EyeId {
    Left = 0,
    Right = 1,
}

impl EyeId {
    pub const BOTH: [EyeId; 2] = [EyeId::Left, EyeId::Right];

    pub fn from_u8(v: u8) -> Option<EyeId> {
        match v {
            0 => Some(EyeId::Left),
            1 => Some(EyeId::Right),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EyeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EyeId::Left => "left",
            EyeId::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DriverMessage {
    pub eye: EyeId,
    pub sequence: u32,
    pub frame: LedFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("message truncated: {got} of {MESSAGE_LEN} bytes")]
    Truncated { got: usize },
    #[error("message has {got} bytes, expected {MESSAGE_LEN}")]
    Length { got: usize },
    #[error("bad magic {0:02x?}")]
    Magic([u8; 2]),
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("unknown eye id {0}")]
    EyeId(u8),
    #[error("checksum mismatch: computed {computed:#010x}, stored {stored:#010x}")]
    Corrupt { computed: u32, stored: u32 },
}

impl DecodeError {
    /// True for errors caused by damaged bytes rather than an unexpected format.
    pub fn is_corruption(&self) -> bool {
        matches!(self, DecodeError::Corrupt { .. })
    }
}

/// CRC-32/ISO-HDLC (the IEEE 802.3 polynomial, reflected, init and xorout `0xFFFFFFFF`).
pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

pub fn encode(msg: &DriverMessage) -> [u8; MESSAGE_LEN] {
    let mut out = [0u8; MESSAGE_LEN];
    out[0..2].copy_from_slice(&MAGIC);
    out[2] = VERSION;
    out[3] = msg.eye as u8;
    out[4..8].copy_from_slice(&msg.sequence.to_be_bytes());
    for (chunk, px) in out[PIXELS_AT..PAYLOAD_LEN]
        .chunks_exact_mut(4)
        .zip(msg.frame.pixels.iter())
    {
        chunk.copy_from_slice(&px.to_array());
    }
    let crc = crc32(&out[..PAYLOAD_LEN]);
    out[PAYLOAD_LEN..].copy_from_slice(&crc.to_be_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<DriverMessage, DecodeError> {
    if bytes.len() < MESSAGE_LEN {
        return Err(DecodeError::Truncated { got: bytes.len() });
    }
    if bytes.len() > MESSAGE_LEN {
        return Err(DecodeError::Length { got: bytes.len() });
    }
    let magic = [bytes[0], bytes[1]];
    if magic != MAGIC {
        return Err(DecodeError::Magic(magic));
    }
    if bytes[2] != VERSION {
        return Err(DecodeError::Version(bytes[2]));
    }
    let stored = u32::from_be_bytes(bytes[PAYLOAD_LEN..].try_into().expect("4 bytes"));
    let computed = crc32(&bytes[..PAYLOAD_LEN]);
    if stored != computed {
        return Err(DecodeError::Corrupt { computed, stored });
    }
    let eye = EyeId::from_u8(bytes[3]).ok_or(DecodeError::EyeId(bytes[3]))?;
    let sequence = u32::from_be_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let mut frame = LedFrame::default();
    for (px, chunk) in frame
        .pixels
        .iter_mut()
        .zip(bytes[PIXELS_AT..PAYLOAD_LEN].chunks_exact(4))
    {
        *px = ColorRGBA::from_array(chunk.try_into().expect("4 bytes"));
    }
    debug_assert_eq!(PIXEL_COUNT * 4, PAYLOAD_LEN - PIXELS_AT);
    Ok(DriverMessage {
        eye,
        sequence,
        frame,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LogRecord {
    pub timestamp_ms: u64,
    pub message: DriverMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FrameLogError {
    #[error("not a frame log (bad header)")]
    Header,
    #[error("record {index}: {source}")]
    Record { index: usize, source: DecodeError },
    #[error("timestamp {timestamp_ms} is earlier than the previous record")]
    TimestampOrder { timestamp_ms: u64 },
    #[error("{eye} eye sequence {sequence} follows {previous}")]
    SequenceOrder {
        eye: EyeId,
        sequence: u32,
        previous: u32,
    },
}

/// Incremental log builder that enforces monotone timestamps and, per eye,
/// nondecreasing sequence numbers.
#[derive(Debug, Clone)]
pub struct FrameLogWriter {
    bytes: Vec<u8>,
    last_timestamp: Option<u64>,
    last_sequence: [Option<u32>; 2],
}

impl Default for FrameLogWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameLogWriter {
    pub fn new() -> Self {
        let mut bytes = Vec::with_capacity(LOG_HEADER.len());
        bytes.extend_from_slice(&LOG_HEADER);
        FrameLogWriter {
            bytes,
            last_timestamp: None,
            last_sequence: [None; 2],
        }
    }

    pub fn push(&mut self, timestamp_ms: u64, message: &DriverMessage) -> Result<(), FrameLogError> {
        if self.last_timestamp.is_some_and(|t| timestamp_ms < t) {
            return Err(FrameLogError::TimestampOrder { timestamp_ms });
        }
        let slot = &mut self.last_sequence[message.eye.index()];
        if let Some(previous) = *slot {
            if message.sequence < previous {
                return Err(FrameLogError::SequenceOrder {
                    eye: message.eye,
                    sequence: message.sequence,
                    previous,
                });
            }
        }
        *slot = Some(message.sequence);
        self.last_timestamp = Some(timestamp_ms);
        self.bytes.extend_from_slice(&timestamp_ms.to_be_bytes());
        self.bytes.extend_from_slice(&encode(message));
        Ok(())
    }

    /// Bytes written so far, header included.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

pub fn framelog_write<'a>(
    records: impl IntoIterator<Item = &'a LogRecord>,
) -> Result<Vec<u8>, FrameLogError> {
    let mut w = FrameLogWriter::new();
    for r in records {
        w.push(r.timestamp_ms, &r.message)?;
    }
    Ok(w.into_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLog {
    pub records: Vec<LogRecord>,
    /// The byte stream ended partway through a record.
    pub truncated: bool,
}

pub fn framelog_read(bytes: &[u8]) -> Result<FrameLog, FrameLogError> {
    if bytes.len() < LOG_HEADER.len() || bytes[..LOG_HEADER.len()] != LOG_HEADER {
        return Err(FrameLogError::Header);
    }
    let body = &bytes[LOG_HEADER.len()..];
    let mut records = Vec::with_capacity(body.len() / LOG_RECORD_LEN);
    let mut chunks = body.chunks_exact(LOG_RECORD_LEN);
    for (index, chunk) in chunks.by_ref().enumerate() {
        let timestamp_ms = u64::from_be_bytes(chunk[..8].try_into().expect("8 bytes"));
        let message =
            decode(&chunk[8..]).map_err(|source| FrameLogError::Record { index, source })?;
        records.push(LogRecord {
            timestamp_ms,
            message,
        });
    }
    Ok(FrameLog {
        records,
        truncated: !chunks.remainder().is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::blank_frame;

    fn msg(eye: EyeId, sequence: u32) -> DriverMessage {
        let mut frame = blank_frame();
        frame.pixels[sequence as usize % 40] = ColorRGBA::new(1, 2, 3, 4);
        DriverMessage {
            eye,
            sequence,
            frame,
        }
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn dark_frame_layout() {
        let bytes = encode(&DriverMessage {
            eye: EyeId::Left,
            sequence: 0,
            frame: blank_frame(),
        });
        assert_eq!(bytes.len(), 172);
        assert_eq!(&bytes[..8], &[0x48, 0x52, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00]);
        assert!(bytes[8..168].iter().all(|&b| b == 0));
        assert_eq!(&bytes[168..], &crc32(&bytes[..168]).to_be_bytes());
    }

    #[test]
    fn sequence_is_big_endian() {
        let bytes = encode(&msg(EyeId::Right, 0x0102_0304));
        assert_eq!(&bytes[3..8], &[1, 1, 2, 3, 4]);
    }

    #[test]
    fn decode_errors_are_distinct() {
        assert_eq!(decode(&[]), Err(DecodeError::Truncated { got: 0 }));
        let good = encode(&msg(EyeId::Left, 7));
        assert_eq!(decode(&good).unwrap(), msg(EyeId::Left, 7));

        let mut bad = good;
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(DecodeError::Magic(_))));

        let mut bad = good;
        bad[2] = 2;
        assert_eq!(decode(&bad), Err(DecodeError::Version(2)));

        let mut bad = good;
        bad[50] ^= 0x10;
        assert!(decode(&bad).unwrap_err().is_corruption());

        // a valid checksum over an invalid eye id is a format error
        let mut bad = good;
        bad[3] = 9;
        let crc = crc32(&bad[..168]);
        bad[168..].copy_from_slice(&crc.to_be_bytes());
        assert_eq!(decode(&bad), Err(DecodeError::EyeId(9)));

        let mut long = good.to_vec();
        long.push(0);
        assert_eq!(decode(&long), Err(DecodeError::Length { got: 173 }));
    }

    #[test]
    fn log_round_trip() {
        let records: Vec<LogRecord> = (0..3)
            .map(|i| LogRecord {
                timestamp_ms: i as u64 * 33,
                message: msg(EyeId::Left, i),
            })
            .collect();
        let bytes = framelog_write(&records).unwrap();
        assert_eq!(bytes.len(), 8 + 3 * LOG_RECORD_LEN);
        let log = framelog_read(&bytes).unwrap();
        assert_eq!(log.records, records);
        assert!(!log.truncated);

        let cut = framelog_read(&bytes[..bytes.len() - 10]).unwrap();
        assert_eq!(cut.records, records[..2]);
        assert!(cut.truncated);
    }

    #[test]
    fn empty_log() {
        let log = framelog_read(&LOG_HEADER).unwrap();
        assert!(log.records.is_empty());
        assert!(!log.truncated);
        assert_eq!(framelog_read(b"HRLOG\0\0\x02"), Err(FrameLogError::Header));
        assert_eq!(framelog_read(b"HR"), Err(FrameLogError::Header));
    }

    #[test]
    fn writer_enforces_order() {
        let mut w = FrameLogWriter::new();
        w.push(10, &msg(EyeId::Left, 5)).unwrap();
        w.push(10, &msg(EyeId::Right, 0)).unwrap();
        assert!(matches!(
            w.push(9, &msg(EyeId::Left, 6)),
            Err(FrameLogError::TimestampOrder { .. })
        ));
        assert!(matches!(
            w.push(11, &msg(EyeId::Left, 4)),
            Err(FrameLogError::SequenceOrder { .. })
        ));
    }
}
