use crate::error::{Result, ServiceError};

pub const HEADER_LEN: usize = 16;

/// Prefix of every binary WebSocket frame message, little-endian:
/// `seq: u64`, `code_index: u32`, `ts_ms: u32`. The encoded image follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameHeader {
    pub seq: u64,
    pub code_index: u32,
    /// Milliseconds since session start, wrapping at `u32::MAX`.
    pub ts_ms: u32,
}

impl FrameHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..8].copy_from_slice(&self.seq.to_le_bytes());
        b[8..12].copy_from_slice(&self.code_index.to_le_bytes());
        b[12..].copy_from_slice(&self.ts_ms.to_le_bytes());
        b
    }

    /// Parses the header and returns it with the remaining payload.
    pub fn decode(bytes: &[u8]) -> Result<(Self, &[u8])> {
        if bytes.len() < HEADER_LEN {
            return Err(ServiceError::Protocol(format!("frame message of {} bytes is shorter than the header", bytes.len())));
        }
        let seq = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let code_index = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let ts_ms = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        Ok((Self { seq, code_index, ts_ms }, &bytes[HEADER_LEN..]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let h = FrameHeader { seq: 0x0102_0304_0506_0708, code_index: 0x0a0b_0c0d, ts_ms: 0x1122_3344 };
        assert_eq!(
            h.encode(),
            [0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01, 0x0d, 0x0c, 0x0b, 0x0a, 0x44, 0x33, 0x22, 0x11]
        );
        let mut msg = h.encode().to_vec();
        msg.extend_from_slice(b"png");
        let (back, rest) = FrameHeader::decode(&msg).unwrap();
        assert_eq!(back, h);
        assert_eq!(rest, b"png");
        assert!(FrameHeader::decode(&msg[..15]).is_err());
    }
}
