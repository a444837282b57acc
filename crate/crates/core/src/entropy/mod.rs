//! Lossless back-ends for the bit-plane payloads.

pub mod arith;
pub mod bitio;
pub mod rans;
pub mod rle;

use std::fmt;
use std::str::FromStr;

pub use arith::{ac_decode, ac_encode, FrequencyModel};
pub use bitio::{BitReader, BitWriter};
pub use rans::{rans_decode, rans_encode, RansTable};
pub use rle::{rle_extract, rle_restore, RunLengthBuilder, RunLengthStream};

use crate::error::{Error, Result};

/// Bytes of framing ahead of every coded symbol stream.
pub const FRAME_HEADER_LEN: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CoderKind {
    #[default]
    Arithmetic = 0,
    Rans = 1,
}

impl CoderKind {
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(CoderKind::Arithmetic),
            1 => Some(CoderKind::Rans),
            _ => None,
        }
    }

    /// Codes `symbols` without framing.
    pub fn encode_raw(self, symbols: &[u32]) -> Result<Vec<u8>> {
        match self {
            CoderKind::Arithmetic => Ok(ac_encode(symbols)),
            CoderKind::Rans => rans_encode(symbols),
        }
    }

    pub fn decode_raw(self, bytes: &[u8], count: usize) -> Result<Vec<u32>> {
        match self {
            CoderKind::Arithmetic => ac_decode(bytes, count),
            CoderKind::Rans => rans_decode(bytes, count),
        }
    }
}

impl FromStr for CoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ac" | "arithmetic" => Ok(CoderKind::Arithmetic),
            "rans" => Ok(CoderKind::Rans),
            other => Err(Error::InvalidArgument(format!("unknown coder '{other}'"))),
        }
    }
}

impl fmt::Display for CoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoderKind::Arithmetic => "ac",
            CoderKind::Rans => "rans",
        })
    }
}

/// Frames a coded stream: coder id, symbol count (u32 LE), coder bytes.
pub fn encode_symbols(kind: CoderKind, symbols: &[u32]) -> Result<Vec<u8>> {
    let count = u32::try_from(symbols.len())
        .map_err(|_| Error::InvalidArgument("symbol stream longer than 2^32".into()))?;
    let body = kind.encode_raw(symbols)?;
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + body.len());
    out.push(kind.id());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Inverse of [`encode_symbols`]; the coder is read from the frame.
pub fn decode_symbols(bytes: &[u8]) -> Result<(CoderKind, Vec<u32>)> {
    decode_symbols_at_most(bytes, usize::MAX)
}

/// [`decode_symbols`] rejecting frames that declare more than `max_count`
/// symbols before decoding anything.
pub fn decode_symbols_at_most(bytes: &[u8], max_count: usize) -> Result<(CoderKind, Vec<u32>)> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(Error::Truncated("entropy frame header".into()));
    }
    let kind = CoderKind::from_id(bytes[0])
        .ok_or_else(|| Error::corrupt("entropy frame", format!("unknown coder id {}", bytes[0])))?;
    let count = u32::from_le_bytes(bytes[1..5].try_into().expect("4 bytes")) as usize;
    if count > max_count {
        return Err(Error::corrupt(
            "entropy frame",
            format!("{count} symbols declared, at most {max_count} possible"),
        ));
    }
    let symbols = kind.decode_raw(&bytes[FRAME_HEADER_LEN..], count)?;
    Ok((kind, symbols))
}
