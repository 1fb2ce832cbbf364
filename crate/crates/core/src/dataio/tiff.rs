//! Baseline uncompressed single-channel TIFF (8/16-bit).

use crate::error::Location;
use crate::raster::{BitDepth, GrayFrame, Grid};
use crate::{Error, Result};

use super::{ByteSource, ImageInfo};

const IMAGE_WIDTH: u16 = 256;
const IMAGE_LENGTH: u16 = 257;
const BITS_PER_SAMPLE: u16 = 258;
const COMPRESSION: u16 = 259;
const PHOTOMETRIC: u16 = 262;
const STRIP_OFFSETS: u16 = 273;
const SAMPLES_PER_PIXEL: u16 = 277;
const ROWS_PER_STRIP: u16 = 278;
const STRIP_BYTE_COUNTS: u16 = 279;
const PLANAR_CONFIGURATION: u16 = 284;
const PREDICTOR: u16 = 317;
const TILE_WIDTH: u16 = 322;
const TILE_OFFSETS: u16 = 324;
const SAMPLE_FORMAT: u16 = 339;

const SHORT: u16 = 3;
const LONG: u16 = 4;

#[derive(Clone, Copy)]
struct Endian {
    little: bool,
}

impl Endian {
    fn u16(self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        if self.little {
            u16::from_le_bytes(a)
        } else {
            u16::from_be_bytes(a)
        }
    }

    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        if self.little {
            u32::from_le_bytes(a)
        } else {
            u32::from_be_bytes(a)
        }
    }
}

fn type_size(field_type: u16) -> Option<usize> {
    match field_type {
        1 | 2 | 6 | 7 => Some(1),
        3 | 8 => Some(2),
        4 | 9 | 11 => Some(4),
        5 | 10 | 12 => Some(8),
        _ => None,
    }
}

struct Entry {
    tag: u16,
    field_type: u16,
    count: u32,
    /// The raw 4-byte value/offset field.
    field: [u8; 4],
    /// Byte offset of the entry itself.
    at: usize,
}

/// Everything needed to locate the pixel data.
pub(super) struct Layout {
    endian: Endian,
    pub info: ImageInfo,
    rows_per_strip: usize,
    strips: Vec<(usize, usize)>,
}

fn read_values<S: ByteSource + ?Sized>(src: &mut S, e: &Entry, endian: Endian) -> Result<Vec<u32>> {
    let size = match e.field_type {
        SHORT => 2,
        LONG => 4,
        other => {
            return Err(Error::parse(
                Location::Byte(e.at),
                format!("tag {} has type {other}, expected SHORT or LONG", e.tag),
            ))
        }
    };
    let total = size * e.count as usize;
    let bytes = if total <= 4 {
        e.field[..total].to_vec()
    } else {
        let offset = endian.u32(&e.field) as usize;
        src.read_at(offset, total)?
    };
    Ok(bytes
        .chunks_exact(size)
        .map(|c| if size == 2 { endian.u16(c) as u32 } else { endian.u32(c) })
        .collect())
}

fn single<S: ByteSource + ?Sized>(src: &mut S, e: &Entry, endian: Endian) -> Result<u32> {
    let values = read_values(src, e, endian)?;
    match values.as_slice() {
        [v] => Ok(*v),
        _ => Err(Error::parse(
            Location::Byte(e.at),
            format!("tag {} should hold one value, has {}", e.tag, values.len()),
        )),
    }
}

/// Parses the header and first IFD and checks that the strips fit in the file.
pub(super) fn read_layout<S: ByteSource + ?Sized>(src: &mut S) -> Result<Layout> {
    let header = src.read_at(0, 8)?;
    let endian = match &header[..2] {
        b"II" => Endian { little: true },
        b"MM" => Endian { little: false },
        _ => return Err(Error::parse(Location::Byte(0), "missing TIFF byte-order mark")),
    };
    let magic = endian.u16(&header[2..4]);
    if magic != 42 {
        let message = if magic == 43 {
            "BigTIFF is not supported".to_string()
        } else {
            format!("bad TIFF magic {magic}")
        };
        return Err(Error::unsupported(Location::Byte(2), message));
    }
    let ifd = endian.u32(&header[4..8]) as usize;
    if ifd < 8 {
        return Err(Error::parse(Location::Byte(4), format!("IFD offset {ifd} overlaps header")));
    }
    let count = endian.u16(&src.read_at(ifd, 2)?) as usize;
    if count == 0 {
        return Err(Error::parse(Location::Byte(ifd), "empty IFD"));
    }
    let raw = src.read_at(ifd + 2, count * 12)?;
    let entries: Vec<Entry> = raw
        .chunks_exact(12)
        .enumerate()
        .map(|(i, b)| Entry {
            tag: endian.u16(&b[0..2]),
            field_type: endian.u16(&b[2..4]),
            count: endian.u32(&b[4..8]),
            field: [b[8], b[9], b[10], b[11]],
            at: ifd + 2 + 12 * i,
        })
        .collect();
    // The next-IFD pointer must be present even though further pages are ignored.
    src.read_at(ifd + 2 + count * 12, 4)?;

    let mut width = None;
    let mut height = None;
    let mut bits = None;
    let mut offsets = None;
    let mut counts = None;
    let mut rows_per_strip = u32::MAX;
    for e in &entries {
        if type_size(e.field_type).is_none() {
            return Err(Error::parse(
                Location::Byte(e.at),
                format!("tag {} has unknown field type {}", e.tag, e.field_type),
            ));
        }
        let at = Location::Byte(e.at);
        match e.tag {
            IMAGE_WIDTH => width = Some(single(src, e, endian)?),
            IMAGE_LENGTH => height = Some(single(src, e, endian)?),
            BITS_PER_SAMPLE => bits = Some(single(src, e, endian)?),
            COMPRESSION => {
                let c = single(src, e, endian)?;
                if c != 1 {
                    return Err(Error::unsupported(at, format!("Compression (tag 259) = {c}; only 1 (none) is supported")));
                }
            }
            PHOTOMETRIC => {
                let p = single(src, e, endian)?;
                if p > 1 {
                    return Err(Error::unsupported(at, format!("PhotometricInterpretation (tag 262) = {p}; only grayscale is supported")));
                }
            }
            SAMPLES_PER_PIXEL => {
                let s = single(src, e, endian)?;
                if s != 1 {
                    return Err(Error::unsupported(at, format!("SamplesPerPixel (tag 277) = {s}; only single-channel images are supported")));
                }
            }
            PLANAR_CONFIGURATION => {
                let p = single(src, e, endian)?;
                if p != 1 {
                    return Err(Error::unsupported(at, format!("PlanarConfiguration (tag 284) = {p}")));
                }
            }
            PREDICTOR => {
                let p = single(src, e, endian)?;
                if p != 1 {
                    return Err(Error::unsupported(at, format!("Predictor (tag 317) = {p}")));
                }
            }
            SAMPLE_FORMAT => {
                let f = single(src, e, endian)?;
                if f != 1 {
                    return Err(Error::unsupported(at, format!("SampleFormat (tag 339) = {f}; only unsigned integers are supported")));
                }
            }
            TILE_WIDTH..=TILE_OFFSETS => {
                return Err(Error::unsupported(at, format!("tiled layout (tag {}) is not supported", e.tag)));
            }
            ROWS_PER_STRIP => rows_per_strip = single(src, e, endian)?,
            STRIP_OFFSETS => offsets = Some(read_values(src, e, endian)?),
            STRIP_BYTE_COUNTS => counts = Some(read_values(src, e, endian)?),
            _ => {}
        }
    }
    let missing = |tag: u16| Error::parse(Location::Byte(ifd), format!("required tag {tag} missing"));
    let width = width.ok_or_else(|| missing(IMAGE_WIDTH))? as usize;
    let height = height.ok_or_else(|| missing(IMAGE_LENGTH))? as usize;
    let bits = bits.unwrap_or(1);
    let bit_depth = BitDepth::from_bits(bits).ok_or_else(|| {
        Error::unsupported(Location::Byte(ifd), format!("BitsPerSample (tag 258) = {bits}; only 8 and 16 are supported"))
    })?;
    let offsets = offsets.ok_or_else(|| missing(STRIP_OFFSETS))?;
    let counts = counts.ok_or_else(|| missing(STRIP_BYTE_COUNTS))?;
    if width == 0 || height == 0 {
        return Err(Error::parse(Location::Byte(ifd), format!("image is {width}x{height}")));
    }
    if offsets.len() != counts.len() {
        return Err(Error::parse(
            Location::Byte(ifd),
            format!("{} strip offsets but {} byte counts", offsets.len(), counts.len()),
        ));
    }
    let rows_per_strip = (rows_per_strip as usize).clamp(1, height);
    let bytes_per_sample = bit_depth.bits() as usize / 8;
    let row_bytes = width * bytes_per_sample;
    let n_strips = height.div_ceil(rows_per_strip);
    if offsets.len() < n_strips {
        return Err(Error::parse(
            Location::Byte(ifd),
            format!("{n_strips} strips needed, {} declared", offsets.len()),
        ));
    }
    let file_len = src.total_len()?;
    let mut strips = Vec::with_capacity(n_strips);
    for s in 0..n_strips {
        let rows = rows_per_strip.min(height - s * rows_per_strip);
        let needed = rows * row_bytes;
        let (offset, count) = (offsets[s] as usize, counts[s] as usize);
        if count < needed {
            return Err(Error::parse(
                Location::Byte(ifd),
                format!("strip {s} holds {count} bytes, {needed} needed"),
            ));
        }
        if offset + needed > file_len {
            return Err(Error::parse(
                Location::Byte(file_len),
                format!("strip {s} at byte {offset} runs past end of file"),
            ));
        }
        strips.push((offset, needed));
    }
    Ok(Layout {
        endian,
        info: ImageInfo {
            width,
            height,
            bit_depth,
        },
        rows_per_strip,
        strips,
    })
}

pub(super) fn decode<S: ByteSource + ?Sized>(src: &mut S) -> Result<GrayFrame> {
    let layout = read_layout(src)?;
    let ImageInfo {
        width,
        height,
        bit_depth,
    } = layout.info;
    debug_assert!(layout.rows_per_strip >= 1);
    let mut data = Vec::with_capacity(width * height);
    for &(offset, len) in &layout.strips {
        let bytes = src.read_at(offset, len)?;
        match bit_depth {
            BitDepth::Eight => data.extend(bytes.iter().map(|&b| b as u16)),
            BitDepth::Sixteen => data.extend(bytes.chunks_exact(2).map(|c| layout.endian.u16(c))),
        }
    }
    GrayFrame::new(Grid::from_vec(width, height, data)?, bit_depth)
}

/// Little-endian, one strip, ten tags, pixel data right after the IFD.
pub fn encode(frame: &GrayFrame) -> Vec<u8> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let bits = frame.bit_depth().bits();
    let data_len = w * h * bits / 8;
    const N_TAGS: u16 = 10;
    let data_offset = 8 + 2 + 12 * N_TAGS as u32 + 4;

    let mut out = Vec::with_capacity(data_offset as usize + data_len as usize);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&8u32.to_le_bytes());
    out.extend_from_slice(&N_TAGS.to_le_bytes());
    let mut entry = |tag: u16, field_type: u16, value: u32| {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&field_type.to_le_bytes());
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&value.to_le_bytes());
    };
    entry(IMAGE_WIDTH, LONG, w);
    entry(IMAGE_LENGTH, LONG, h);
    entry(BITS_PER_SAMPLE, SHORT, bits);
    entry(COMPRESSION, SHORT, 1);
    entry(PHOTOMETRIC, SHORT, 1);
    entry(STRIP_OFFSETS, LONG, data_offset);
    entry(SAMPLES_PER_PIXEL, SHORT, 1);
    entry(ROWS_PER_STRIP, LONG, h);
    entry(STRIP_BYTE_COUNTS, LONG, data_len);
    entry(PLANAR_CONFIGURATION, SHORT, 1);
    out.extend_from_slice(&0u32.to_le_bytes());
    debug_assert_eq!(out.len(), data_offset as usize);
    match frame.bit_depth() {
        BitDepth::Eight => out.extend(frame.intensities().iter().map(|&v| v as u8)),
        BitDepth::Sixteen => {
            for &v in frame.intensities() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Bytes written by [`encode`] before the pixel data.
pub const ENCODED_HEADER_LEN: usize = 8 + 2 + 12 * 10 + 4;

#[cfg(test)]
mod tests {
    use super::*;

    fn frame16() -> GrayFrame {
        GrayFrame::from_vec(3, 2, BitDepth::Sixteen, vec![0, 1, 2, 300, 40_000, 65_535]).unwrap()
    }

    #[test]
    fn round_trip_both_depths() {
        let f = frame16();
        let encoded = encode(&f);
        assert_eq!(decode(&mut encoded.as_slice()).unwrap(), f);
        let g = GrayFrame::from_vec(2, 2, BitDepth::Eight, vec![0, 7, 128, 255]).unwrap();
        assert_eq!(decode(&mut encode(&g).as_slice()).unwrap(), g);
    }

    #[test]
    fn big_endian_multi_strip() {
        // Hand-built MM file: 2x3, 16-bit, one row per strip.
        let mut b = Vec::new();
        b.extend_from_slice(b"MM");
        b.extend_from_slice(&42u16.to_be_bytes());
        b.extend_from_slice(&8u32.to_be_bytes());
        let tags: Vec<(u16, u16, u32, u32)> = vec![
            (IMAGE_WIDTH, SHORT, 1, 2 << 16),
            (IMAGE_LENGTH, SHORT, 1, 3 << 16),
            (BITS_PER_SAMPLE, SHORT, 1, 16 << 16),
            (STRIP_OFFSETS, LONG, 3, 0), // patched below
            (ROWS_PER_STRIP, SHORT, 1, 1 << 16),
            (STRIP_BYTE_COUNTS, SHORT, 3, 0),
        ];
        let ifd_len = 2 + 12 * tags.len() + 4;
        let arrays_at = 8 + ifd_len;
        let counts_at = arrays_at + 12;
        let data_at = counts_at + 6;
        b.extend_from_slice(&(tags.len() as u16).to_be_bytes());
        for (tag, ty, count, value) in tags {
            let value = match tag {
                STRIP_OFFSETS => arrays_at as u32,
                STRIP_BYTE_COUNTS => counts_at as u32,
                _ => value,
            };
            b.extend_from_slice(&tag.to_be_bytes());
            b.extend_from_slice(&ty.to_be_bytes());
            b.extend_from_slice(&count.to_be_bytes());
            b.extend_from_slice(&value.to_be_bytes());
        }
        b.extend_from_slice(&0u32.to_be_bytes());
        for s in 0..3u32 {
            b.extend_from_slice(&(data_at as u32 + 4 * s).to_be_bytes());
        }
        for _ in 0..3 {
            b.extend_from_slice(&4u16.to_be_bytes());
        }
        for v in [1u16, 2, 3, 4, 5, 0xABCD] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        let f = decode(&mut b.as_slice()).unwrap();
        assert_eq!(f.intensities(), &[1, 2, 3, 4, 5, 0xABCD]);
        assert_eq!((f.width(), f.height()), (2, 3));
    }

    #[test]
    fn compressed_is_rejected_with_tag() {
        let mut bytes = encode(&frame16());
        // Compression is the fourth entry; its value starts 8 bytes in.
        let at = 8 + 2 + 12 * 3;
        bytes[at + 8] = 5;
        let err = decode(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat { .. }));
        assert!(err.to_string().contains("tag 259"), "{err}");
        assert_eq!(err.location(), Some(Location::Byte(at)));
    }

    #[test]
    fn multi_channel_is_rejected() {
        let mut bytes = encode(&frame16());
        let at = 8 + 2 + 12 * 6;
        bytes[at + 8] = 3;
        let err = decode(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("tag 277"), "{err}");
    }
}
