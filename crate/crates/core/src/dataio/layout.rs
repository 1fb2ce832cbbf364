//! Cell Tracking Challenge directory layout.
//!
//! A video directory holds frames `tNNN.tif`. Ground truth lives either in the
//! video directory itself or in a sibling `<video>_GT` directory, as
//! `SEG/man_segNNN.tif`, `TRA/man_trackNNN.tif` and `TRA/man_track.txt`.
//! A result directory holds `maskNNN.tif` and `res_track.txt`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::par::{self, Execution};
use crate::raster::{GrayFrame, LabelMask};
use crate::{Error, Result, DEFAULT_PIXEL_SIZE_UM};

use super::{probe_image, read_image, read_label_mask, ImageInfo, TrackRecord};

/// Minutes between consecutive frames of the reference recordings.
pub const DEFAULT_FRAME_INTERVAL_MIN: f64 = 2.0;

const IMAGE_EXTENSIONS: [&str; 3] = ["tif", "tiff", "pgm"];

/// A file whose name carries a frame index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedFile {
    pub index: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoDataset {
    pub dir: PathBuf,
    /// Frames in index order; indices are contiguous.
    pub frames: Vec<IndexedFile>,
    pub info: ImageInfo,
    /// Segmentation ground truth, usually for a subset of frames.
    pub gt_seg: Vec<IndexedFile>,
    /// Tracking ground truth masks; empty or one per frame.
    pub gt_tra: Vec<IndexedFile>,
    pub gt_tracks: Option<Vec<TrackRecord>>,
    /// Where `gt_tracks` was read from.
    pub gt_track_file: Option<PathBuf>,
    pub pixel_size: f64,
    pub frame_interval_min: f64,
}

impl VideoDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first_index(&self) -> usize {
        self.frames[0].index
    }

    pub fn has_gt(&self) -> bool {
        !self.gt_seg.is_empty() || !self.gt_tra.is_empty()
    }

    /// Reads every frame, tagging it with the dataset's pixel size.
    pub fn read_frames(&self, exec: Execution) -> Result<Vec<GrayFrame>> {
        par::map(exec, &self.frames, |f| {
            let mut frame = read_image(&f.path)?;
            frame.set_pixel_size(self.pixel_size)?;
            Ok(frame)
        })
        .into_iter()
        .collect()
    }

    pub fn read_gt_seg(&self, exec: Execution) -> Result<Vec<(usize, LabelMask)>> {
        read_masks(&self.gt_seg, exec)
    }

    pub fn read_gt_tra(&self, exec: Execution) -> Result<Vec<LabelMask>> {
        Ok(read_masks(&self.gt_tra, exec)?.into_iter().map(|(_, m)| m).collect())
    }

    /// Every file the dataset refers to, frames first.
    pub fn files(&self) -> Vec<&Path> {
        let images = self.frames.iter().chain(&self.gt_seg).chain(&self.gt_tra).map(|f| f.path.as_path());
        images.chain(self.gt_track_file.as_deref()).collect()
    }
}

/// Tracking or segmentation results for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultDataset {
    pub dir: PathBuf,
    pub masks: Vec<IndexedFile>,
    pub info: ImageInfo,
    pub tracks: Option<Vec<TrackRecord>>,
    pub track_file: Option<PathBuf>,
}

impl ResultDataset {
    pub fn read_masks(&self, exec: Execution) -> Result<Vec<(usize, LabelMask)>> {
        read_masks(&self.masks, exec)
    }

    /// Every file the dataset refers to.
    pub fn files(&self) -> Vec<&Path> {
        self.masks.iter().map(|f| f.path.as_path()).chain(self.track_file.as_deref()).collect()
    }

    /// The mask for frame `index`, if present.
    pub fn mask_path(&self, index: usize) -> Option<&Path> {
        self.masks.iter().find(|f| f.index == index).map(|f| f.path.as_path())
    }
}

fn read_masks(files: &[IndexedFile], exec: Execution) -> Result<Vec<(usize, LabelMask)>> {
    par::map(exec, files, |f| read_label_mask(&f.path).map(|m| (f.index, m)))
        .into_iter()
        .collect()
}

fn frame_index(name: &str, prefix: &str) -> Option<usize> {
    let (stem, ext) = name.rsplit_once('.')?;
    if !IMAGE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()) {
        return None;
    }
    let digits = stem.strip_prefix(prefix)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Lists `<prefix><digits>.<image ext>` files in `dir`, sorted by index.
fn scan_indexed(dir: &Path, prefix: &str) -> Result<Vec<IndexedFile>> {
    let mut found: BTreeMap<usize, PathBuf> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(index) = name.to_str().and_then(|n| frame_index(n, prefix)) else {
            continue;
        };
        let path = entry.path();
        if let Some(other) = found.insert(index, path.clone()) {
            return Err(Error::InvalidInput(format!(
                "frame {index} appears twice: {} and {}",
                other.display(),
                path.display()
            )));
        }
    }
    Ok(found.into_iter().map(|(index, path)| IndexedFile { index, path }).collect())
}

fn check_contiguous(files: &[IndexedFile], dir: &Path) -> Result<()> {
    for pair in files.windows(2) {
        if pair[1].index != pair[0].index + 1 {
            return Err(Error::InvalidInput(format!(
                "{}: frame {} is missing (found {} then {})",
                dir.display(),
                pair[0].index + 1,
                pair[0].index,
                pair[1].index
            )));
        }
    }
    Ok(())
}

/// Probes every file header and checks all share the dimensions of the first.
fn common_info(files: &[IndexedFile], exec: Execution) -> Result<ImageInfo> {
    let infos: Vec<ImageInfo> = par::map(exec, files, |f| probe_image(&f.path))
        .into_iter()
        .collect::<Result<_>>()?;
    let first = infos[0];
    for (f, info) in files.iter().zip(&infos) {
        if (info.width, info.height) != (first.width, first.height) {
            return Err(Error::DimensionMismatch {
                left: format!("{} ({}x{})", files[0].path.display(), first.width, first.height),
                right: format!("{} ({}x{})", f.path.display(), info.width, info.height),
            });
        }
    }
    Ok(first)
}

fn check_matches(files: &[IndexedFile], reference: &ImageInfo, reference_path: &Path, exec: Execution) -> Result<()> {
    if files.is_empty() {
        return Ok(());
    }
    let info = common_info(files, exec)?;
    if (info.width, info.height) != (reference.width, reference.height) {
        return Err(Error::DimensionMismatch {
            left: format!("{} ({}x{})", reference_path.display(), reference.width, reference.height),
            right: format!("{} ({}x{})", files[0].path.display(), info.width, info.height),
        });
    }
    Ok(())
}

fn read_tracks(path: &Path) -> Result<Option<Vec<TrackRecord>>> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    super::parse_track_file(&text)
        .map(Some)
        .map_err(|e| match e {
            Error::Parse { location, message } => {
                Error::parse(location, format!("{}: {message}", path.display()))
            }
            other => other,
        })
}

fn gt_root(dir: &Path) -> Option<PathBuf> {
    if dir.join("SEG").is_dir() || dir.join("TRA").is_dir() {
        return Some(dir.to_path_buf());
    }
    let name = dir.file_name()?.to_str()?;
    let sibling = dir.with_file_name(format!("{name}_GT"));
    sibling.is_dir().then_some(sibling)
}

/// Annotations of one video, without its frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub seg: Vec<IndexedFile>,
    pub tra: Vec<IndexedFile>,
    pub tracks: Option<Vec<TrackRecord>>,
    pub track_file: Option<PathBuf>,
    /// Dimensions shared by every annotation image, if there is any.
    pub info: Option<ImageInfo>,
}

impl GroundTruth {
    pub fn files(&self) -> Vec<&Path> {
        let images = self.seg.iter().chain(&self.tra).map(|f| f.path.as_path());
        images.chain(self.track_file.as_deref()).collect()
    }

    pub fn read_seg(&self, exec: Execution) -> Result<Vec<(usize, LabelMask)>> {
        read_masks(&self.seg, exec)
    }

    pub fn read_tra(&self, exec: Execution) -> Result<Vec<(usize, LabelMask)>> {
        read_masks(&self.tra, exec)
    }
}

fn scan_ground_truth(root: &Path) -> Result<GroundTruth> {
    let mut gt = GroundTruth::default();
    let seg_dir = root.join("SEG");
    if seg_dir.is_dir() {
        gt.seg = scan_indexed(&seg_dir, "man_seg")?;
    }
    let tra_dir = root.join("TRA");
    if tra_dir.is_dir() {
        gt.tra = scan_indexed(&tra_dir, "man_track")?;
        let path = tra_dir.join("man_track.txt");
        gt.tracks = read_tracks(&path)?;
        gt.track_file = gt.tracks.is_some().then_some(path);
    }
    Ok(gt)
}

/// SEG must lie within `first..=last`; TRA must cover it exactly.
fn check_ground_truth(gt: &GroundTruth, first: usize, last: usize) -> Result<()> {
    if let Some(f) = gt.seg.iter().find(|f| f.index < first || f.index > last) {
        return Err(Error::InvalidInput(format!(
            "{} refers to frame {}, outside {first}..={last}",
            f.path.display(),
            f.index
        )));
    }
    if !gt.tra.is_empty() {
        let indices: Vec<usize> = gt.tra.iter().map(|f| f.index).collect();
        let expected: Vec<usize> = (first..=last).collect();
        if indices != expected {
            let missing = expected.iter().find(|i| !indices.contains(i));
            return Err(Error::InvalidInput(match missing {
                Some(i) => format!("tracking ground truth is missing frame {i}"),
                None => format!("tracking ground truth covers frames outside {first}..={last}"),
            }));
        }
    }
    Ok(())
}

/// Loads a stand-alone ground-truth directory holding `SEG/` and/or `TRA/`,
/// checked against the frame range `first..=last`.
pub fn load_ground_truth(dir: &Path, first: usize, last: usize, exec: Execution) -> Result<GroundTruth> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "ground-truth directory not found"),
        ));
    }
    let mut gt = scan_ground_truth(dir)?;
    if gt.seg.is_empty() && gt.tra.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no SEG/man_segNNN.tif or TRA/man_trackNNN.tif",
            dir.display()
        )));
    }
    check_ground_truth(&gt, first, last)?;
    let all: Vec<IndexedFile> = gt.seg.iter().chain(&gt.tra).cloned().collect();
    gt.info = Some(common_info(&all, exec)?);
    Ok(gt)
}

/// Loads a video directory, reading only image headers.
pub fn load_ctc_video(dir: &Path) -> Result<VideoDataset> {
    load_ctc_video_with(dir, Execution::default())
}

pub fn load_ctc_video_with(dir: &Path, exec: Execution) -> Result<VideoDataset> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "video directory not found"),
        ));
    }
    let frames = scan_indexed(dir, "t")?;
    if frames.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no frames named tNNN.tif", dir.display())));
    }
    check_contiguous(&frames, dir)?;
    let info = common_info(&frames, exec)?;
    let first = frames[0].index;
    let last = frames[frames.len() - 1].index;

    let gt = match gt_root(dir) {
        Some(root) => scan_ground_truth(&root)?,
        None => GroundTruth::default(),
    };
    check_ground_truth(&gt, first, last)?;
    check_matches(&gt.seg, &info, &frames[0].path, exec)?;
    check_matches(&gt.tra, &info, &frames[0].path, exec)?;
    let GroundTruth {
        seg: gt_seg,
        tra: gt_tra,
        tracks: gt_tracks,
        track_file: gt_track_file,
        ..
    } = gt;

    Ok(VideoDataset {
        dir: dir.to_path_buf(),
        frames,
        info,
        gt_seg,
        gt_tra,
        gt_tracks,
        gt_track_file,
        pixel_size: DEFAULT_PIXEL_SIZE_UM,
        frame_interval_min: DEFAULT_FRAME_INTERVAL_MIN,
    })
}

/// Loads a result directory of `maskNNN.tif` files and an optional `res_track.txt`.
pub fn load_result_dir(dir: &Path) -> Result<ResultDataset> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "result directory not found"),
        ));
    }
    let masks = scan_indexed(dir, "mask")?;
    if masks.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no masks named maskNNN.tif", dir.display())));
    }
    check_contiguous(&masks, dir)?;
    let info = common_info(&masks, Execution::default())?;
    let path = dir.join("res_track.txt");
    let tracks = read_tracks(&path)?;
    Ok(ResultDataset {
        dir: dir.to_path_buf(),
        masks,
        info,
        track_file: tracks.is_some().then_some(path),
        tracks,
    })
}
