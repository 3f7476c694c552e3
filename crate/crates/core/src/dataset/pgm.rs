//! Netpbm graymap codec.
//!
//! Reads binary (`P5`) and plain (`P2`) graymaps with any maxval up to
//! 65535; writes binary graymaps only. Samples wider than 8 bits are
//! big-endian, as Netpbm requires.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

/// Header written by [`encode_u16`]; files carrying exactly this header are
/// already in canonical form.
pub fn canonical_header_u16(width: usize, height: usize) -> String {
    format!("P5\n{width} {height}\n65535\n")
}

pub fn encode_u16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height, "sample count");
    let header = canonical_header_u16(width, height);
    let mut out = Vec::with_capacity(header.len() + samples.len() * 2);
    out.extend_from_slice(header.as_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn encode_u8(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height, "sample count");
    let header = format!("P5\n{width} {height}\n255\n");
    let mut out = Vec::with_capacity(header.len() + samples.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(samples);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("PGM", format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("PGM", format!("{what} out of range")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Graymap> {
    if bytes.len() < 2 {
        return Err(Error::format("PGM", "file too short"));
    }
    let plain = match &bytes[..2] {
        b"P5" => false,
        b"P2" => true,
        other => {
            return Err(Error::format(
                "PGM",
                format!("unsupported magic {:?}", String::from_utf8_lossy(other)),
            ))
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format("PGM", "zero-sized image"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("PGM", format!("maxval {maxval} out of range")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format("PGM", "image dimensions overflow"))?;

    let samples = if plain {
        (0..n)
            .map(|_| cur.number("sample"))
            .map(|r| r.and_then(|v| check_sample(v, maxval)))
            .collect::<Result<Vec<_>>>()?
    } else {
        // Exactly one whitespace byte separates the header from the raster.
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::format("PGM", "missing raster separator"));
        }
        let raster = &bytes[cur.pos + 1..];
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        if raster.len() < need {
            return Err(Error::format(
                "PGM",
                format!("truncated raster: {} of {need} bytes", raster.len()),
            ));
        }
        if wide {
            raster[..need]
                .chunks_exact(2)
                .map(|b| check_sample(u16::from_be_bytes([b[0], b[1]]) as usize, maxval))
                .collect::<Result<Vec<_>>>()?
        } else {
            raster[..need]
                .iter()
                .map(|&b| check_sample(b as usize, maxval))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(Graymap {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

fn check_sample(v: usize, maxval: usize) -> Result<u16> {
    if v > maxval {
        Err(Error::format("PGM", format!("sample {v} exceeds maxval {maxval}")))
    } else {
        Ok(v as u16)
    }
}

pub fn read(path: &Path) -> Result<Graymap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { what, detail } => Error::Format {
            what,
            detail: format!("{}: {detail}", path.display()),
        },
        other => other,
    })
}

pub fn write_u16(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    fs::write(path, encode_u16(width, height, samples)).map_err(|e| Error::io(path, e))
}

pub fn write_u8(path: &Path, width: usize, height: usize, samples: &[u8]) -> Result<()> {
    fs::write(path, encode_u8(width, height, samples)).map_err(|e| Error::io(path, e))
}
