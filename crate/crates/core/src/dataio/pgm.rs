//! Binary PGM (P5).

use crate::error::Location;
use crate::raster::{BitDepth, GrayFrame, Grid};
use crate::{Error, Result};

use super::ImageInfo;

struct Header {
    info: ImageInfo,
    maxval: u16,
    data_offset: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(Location::Byte(start), format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::parse(Location::Byte(start), format!("{what} out of range")))
    }
}

fn read_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse(Location::Byte(0), "missing P5 magic"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(Location::Byte(2), format!("image is {width}x{height}")));
    }
    if maxval == 0 || maxval > u16::MAX as u32 {
        return Err(Error::parse(Location::Byte(maxval_at), format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(Error::parse(Location::Byte(cur.pos), "expected whitespace after maxval")),
    }
    let bit_depth = if maxval < 256 { BitDepth::Eight } else { BitDepth::Sixteen };
    Ok(Header {
        info: ImageInfo {
            width,
            height,
            bit_depth,
        },
        maxval: maxval as u16,
        data_offset: cur.pos + 1,
    })
}

pub(super) fn probe(bytes: &[u8]) -> Result<(ImageInfo, usize)> {
    let h = read_header(bytes)?;
    let sample = h.info.bit_depth.bits() as usize / 8;
    Ok((h.info, h.data_offset + h.info.width * h.info.height * sample))
}

pub(super) fn decode(bytes: &[u8]) -> Result<GrayFrame> {
    let header = read_header(bytes)?;
    let ImageInfo {
        width,
        height,
        bit_depth,
    } = header.info;
    let sample = bit_depth.bits() as usize / 8;
    let start = header.data_offset;
    let end = start + width * height * sample;
    if bytes.len() < end {
        return Err(Error::parse(
            Location::Byte(bytes.len()),
            format!("raster truncated: {} of {} bytes present", bytes.len().saturating_sub(start), end - start),
        ));
    }
    if bytes.len() > end {
        return Err(Error::parse(Location::Byte(end), "unexpected data after raster"));
    }
    let raw = &bytes[start..end];
    let data: Vec<u16> = match bit_depth {
        BitDepth::Eight => raw.iter().map(|&b| b as u16).collect(),
        BitDepth::Sixteen => raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect(),
    };
    if let Some(i) = data.iter().position(|&v| v > header.maxval) {
        return Err(Error::parse(
            Location::Byte(start + i * sample),
            format!("sample {} exceeds maxval {}", data[i], header.maxval),
        ));
    }
    GrayFrame::new(Grid::from_vec(width, height, data)?, bit_depth)
}

pub fn encode(frame: &GrayFrame) -> Vec<u8> {
    let maxval = frame.bit_depth().max_value();
    let mut out = format!("P5\n{} {}\n{}\n", frame.width(), frame.height(), maxval).into_bytes();
    match frame.bit_depth() {
        BitDepth::Eight => out.extend(frame.intensities().iter().map(|&v| v as u8)),
        BitDepth::Sixteen => {
            for &v in frame.intensities() {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    out
}
