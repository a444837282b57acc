//! Zero-run extraction for the leading-bit column of a plane block.
//!
//! A column is described by the number of zeros before each 1, followed by
//! one terminal symbol counting the zeros after the last 1. An empty column
//! yields no symbols.

use crate::error::{Error, Result};

/// Zero-run lengths of a bit column, terminal run last.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunLengthStream {
    pub symbols: Vec<u32>,
}

pub fn rle_extract(bits: &[bool]) -> RunLengthStream {
    let mut symbols = Vec::new();
    if bits.is_empty() {
        return RunLengthStream { symbols };
    }
    let mut run = 0u32;
    for &b in bits {
        if b {
            symbols.push(run);
            run = 0;
        } else {
            run += 1;
        }
    }
    symbols.push(run);
    RunLengthStream { symbols }
}

/// Incremental form of [`rle_extract`] used by the block encoder.
#[derive(Clone, Debug, Default)]
pub struct RunLengthBuilder {
    symbols: Vec<u32>,
    run: u32,
    len: usize,
}

impl RunLengthBuilder {
    #[inline]
    pub fn push(&mut self, bit: bool) {
        self.len += 1;
        if bit {
            self.symbols.push(self.run);
            self.run = 0;
        } else {
            self.run += 1;
        }
    }

    pub fn finish(mut self) -> RunLengthStream {
        if self.len > 0 {
            self.symbols.push(self.run);
        }
        RunLengthStream {
            symbols: self.symbols,
        }
    }
}

/// Rebuilds a column of `length` bits.
pub fn rle_restore(stream: &RunLengthStream, length: usize) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(length);
    if length == 0 {
        if stream.symbols.is_empty() {
            return Ok(bits);
        }
        return Err(Error::corrupt("run-length stream", "symbols for an empty column"));
    }
    let mut iter = stream.symbols.iter();
    loop {
        let run = *iter
            .next()
            .ok_or_else(|| Error::corrupt("run-length stream", "missing terminal run"))?
            as usize;
        if bits.len() + run > length {
            return Err(Error::corrupt("run-length stream", "run exceeds column length"));
        }
        bits.extend(std::iter::repeat_n(false, run));
        if bits.len() == length {
            break;
        }
        bits.push(true);
    }
    if iter.next().is_some() {
        return Err(Error::corrupt("run-length stream", "symbols after terminal run"));
    }
    Ok(bits)
}
