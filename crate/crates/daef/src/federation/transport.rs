//! Optional stream transport: 4-byte big-endian length prefix followed by the
//! UTF-8 JSON packet body. Pinned bit-exactly so nodes written in other
//! languages can speak it over a socket.

use std::io::{Read, Write};

use super::packet::{decode_packet, encode_packet, KnowledgePacket};
use super::FederationError;

pub fn write_frame<W: Write>(mut sink: W, packet: &KnowledgePacket) -> Result<(), FederationError> {
    let body = encode_packet(packet)?;
    let len = u32::try_from(body.len())
        .map_err(|_| FederationError::Codec("frame exceeds u32 length".into()))?;
    let io = |e: std::io::Error| FederationError::Codec(format!("frame write failed: {e}"));
    sink.write_all(&len.to_be_bytes()).map_err(io)?;
    sink.write_all(&body).map_err(io)?;
    sink.flush().map_err(io)?;
    Ok(())
}

pub fn read_frame<R: Read>(mut source: R) -> Result<KnowledgePacket, FederationError> {
    let io = |e: std::io::Error| FederationError::Codec(format!("frame read failed: {e}"));
    let mut len_bytes = [0u8; 4];
    source.read_exact(&mut len_bytes).map_err(io)?;
    let len = u32::from_be_bytes(len_bytes) as usize;
    let mut body = vec![0u8; len];
    source.read_exact(&mut body).map_err(io)?;
    decode_packet(&body)
}
