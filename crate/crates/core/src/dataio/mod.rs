//! Parsers and writers for images, track files, CTC directories and key=value files.
//!
//! Every parser rejects malformed input instead of repairing it, and every
//! rejection carries a byte offset or line number.

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

use crate::error::Location;
use crate::raster::{BitDepth, GrayFrame, Grid, LabelMask};
use crate::{Error, Result};

pub mod keyvalue;
pub mod layout;
pub mod pgm;
pub mod tiff;
pub mod tracks;

pub use keyvalue::{format_key_values, parse_key_values, KeyValues};
pub use layout::{
    load_ctc_video, load_ctc_video_with, load_ground_truth, load_result_dir, GroundTruth, IndexedFile, ResultDataset, VideoDataset,
    DEFAULT_FRAME_INTERVAL_MIN,
};
pub use tracks::{format_track_file, parse_track_file, TrackRecord};

/// Random-access input, so headers can be read without loading whole files.
pub(crate) trait ByteSource {
    fn read_at(&mut self, offset: usize, len: usize) -> Result<Vec<u8>>;
    fn total_len(&mut self) -> Result<usize>;
}

impl ByteSource for &[u8] {
    fn read_at(&mut self, offset: usize, len: usize) -> Result<Vec<u8>> {
        let size = <[u8]>::len(self);
        match offset.checked_add(len) {
            Some(end) if end <= size => Ok(self[offset..end].to_vec()),
            _ => Err(Error::parse(
                Location::Byte(offset.min(size)),
                format!("unexpected end of data: {len} bytes needed at offset {offset}, file has {size}"),
            )),
        }
    }

    fn total_len(&mut self) -> Result<usize> {
        Ok(<[u8]>::len(self))
    }
}

struct FileSource<'a> {
    file: File,
    path: &'a Path,
    len: usize,
}

impl<'a> FileSource<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len() as usize;
        Ok(Self { file, path, len })
    }
}

impl ByteSource for FileSource<'_> {
    fn read_at(&mut self, offset: usize, len: usize) -> Result<Vec<u8>> {
        if offset.checked_add(len).is_none_or(|end| end > self.len) {
            return Err(Error::parse(
                Location::Byte(offset.min(self.len)),
                format!("unexpected end of file: {len} bytes needed at offset {offset}, file has {}", self.len),
            ));
        }
        let mut buf = vec![0; len];
        self.file
            .seek(SeekFrom::Start(offset as u64))
            .and_then(|_| self.file.read_exact(&mut buf))
            .map_err(|e| Error::io(self.path, e))?;
        Ok(buf)
    }

    fn total_len(&mut self) -> Result<usize> {
        Ok(self.len)
    }
}

/// Dimensions and depth of an image, read from its header alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageInfo {
    pub width: usize,
    pub height: usize,
    pub bit_depth: BitDepth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Tiff,
    Pgm,
}

impl ImageFormat {
    fn from_magic(head: &[u8]) -> Result<Self> {
        match head {
            [b'I', b'I', ..] | [b'M', b'M', ..] => Ok(ImageFormat::Tiff),
            [b'P', b'5', ..] => Ok(ImageFormat::Pgm),
            _ => Err(Error::unsupported(Location::Byte(0), "not a TIFF or binary PGM file")),
        }
    }

    /// Picks the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("tif" | "tiff") => Ok(ImageFormat::Tiff),
            Some("pgm") => Ok(ImageFormat::Pgm),
            _ => Err(Error::InvalidArgument(format!(
                "{}: cannot infer image format (expected .tif, .tiff or .pgm)",
                path.display()
            ))),
        }
    }
}

/// Decodes an in-memory TIFF or PGM, chosen by magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<GrayFrame> {
    match ImageFormat::from_magic(bytes)? {
        ImageFormat::Tiff => tiff::decode(&mut &bytes[..]),
        ImageFormat::Pgm => pgm::decode(bytes),
    }
}

pub fn encode_image(frame: &GrayFrame, format: ImageFormat) -> Vec<u8> {
    match format {
        ImageFormat::Tiff => tiff::encode(frame),
        ImageFormat::Pgm => pgm::encode(frame),
    }
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { location, message } => Error::parse(location, format!("{}: {message}", path.display())),
        Error::UnsupportedFormat { location, message } => {
            Error::unsupported(location, format!("{}: {message}", path.display()))
        }
        other => other,
    })
}

pub fn read_image(path: &Path) -> Result<GrayFrame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    with_path(path, decode_image(&bytes))
}

/// Reads only the header. For PGM the file length is checked against the raster size too.
pub fn probe_image(path: &Path) -> Result<ImageInfo> {
    let mut src = FileSource::open(path)?;
    let head = src.read_at(0, src.len.min(2));
    let head = with_path(path, head)?;
    let r = match with_path(path, ImageFormat::from_magic(&head))? {
        ImageFormat::Tiff => tiff::read_layout(&mut src).map(|l| l.info),
        ImageFormat::Pgm => {
            // PGM headers are short; 512 bytes always covers one with modest comments.
            let head = src.read_at(0, src.len.min(512))?;
            pgm::probe(&head).and_then(|(info, expected)| {
                if expected == src.len {
                    Ok(info)
                } else {
                    Err(Error::parse(
                        Location::Byte(src.len.min(expected)),
                        format!("file is {} bytes, header implies {expected}", src.len),
                    ))
                }
            })
        }
    };
    with_path(path, r)
}

/// Writes the frame in the format implied by the extension.
pub fn write_image(frame: &GrayFrame, path: &Path) -> Result<()> {
    let bytes = encode_image(frame, ImageFormat::from_path(path)?);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a label mask stored as an 8- or 16-bit image.
pub fn read_label_mask(path: &Path) -> Result<LabelMask> {
    Ok(read_image(path)?.grid().map(|&v| v as u32))
}

/// Writes a label mask as 16-bit image data.
pub fn write_label_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    let frame = label_mask_to_frame(mask)?;
    write_image(&frame, path)
}

pub fn label_mask_to_frame(mask: &LabelMask) -> Result<GrayFrame> {
    if let Some(&big) = mask.as_slice().iter().find(|&&l| l > u16::MAX as u32) {
        return Err(Error::InvalidInput(format!("label {big} does not fit in a 16-bit mask")));
    }
    let data = mask.as_slice().iter().map(|&l| l as u16).collect();
    GrayFrame::new(Grid::from_vec(mask.width(), mask.height(), data)?, BitDepth::Sixteen)
}
