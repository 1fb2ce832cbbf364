#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cellmig::dataio::{format_track_file, write_image, write_label_mask, TrackRecord};
use cellmig::registration::register_video;
use cellmig::synth::{drifting_video, paint_star, textured_frame_with_cells, Arm};
use cellmig::raster::Rect;
use cellmig::{Grid, LabelMask, Pixel};

pub const DRIFTS: [(isize, isize); 3] = [(0, 0), (2, -1), (3, 1)];
pub const ARM_PX: usize = 60;
pub const BODY_PX: usize = 10;

pub type Arg<'a> = &'a dyn AsRef<std::ffi::OsStr>;

pub fn cellmig(args: &[Arg]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellmig"))
        .args(args.iter().map(|a| a.as_ref()))
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Synthetic CTC data: a three-armed star and a round cell on a textured
/// background, filmed for three frames under stage drift.
pub struct Fixture {
    /// Drifting frames `tNNN.tif`.
    pub video: PathBuf,
    /// Instance masks in registered coordinates, `maskNNN.tif`.
    pub masks: PathBuf,
    /// `SEG/` and `TRA/` ground truth in registered coordinates.
    pub gt: PathBuf,
    /// CTC video of registered frames with a sibling `_GT` directory.
    pub gt_video: PathBuf,
    /// Registered height and width.
    pub registered: (usize, usize),
    pub star_center: Pixel,
}

pub fn scene_mask() -> (LabelMask, Pixel) {
    let mut mask = Grid::filled(240, 220, 0u32);
    let center = Pixel::new(110, 90);
    let arms = [Arm::new((-1, 0), ARM_PX), Arm::new((0, 1), ARM_PX), Arm::new((1, 0), ARM_PX)];
    paint_star(&mut mask, center, BODY_PX, &arms, 1);
    paint_star(&mut mask, Pixel::new(60, 210), 12, &[], 2);
    (mask, center)
}

pub fn star_fixture(root: &Path) -> Fixture {
    let (mask, center) = scene_mask();
    let scene = textured_frame_with_cells(&mask, 11);
    let base = (15, 15);
    let frames = drifting_video(&scene, &DRIFTS, 190, 210, base);
    let reg = register_video(&frames, 20).unwrap();
    let rect = Rect {
        top: base.0 + reg.crop.top,
        left: base.1 + reg.crop.left,
        height: reg.height(),
        width: reg.width(),
    };
    let cropped = mask.crop(rect).unwrap();

    let fx = Fixture {
        video: root.join("video"),
        masks: root.join("masks"),
        gt: root.join("gt"),
        gt_video: root.join("01"),
        registered: (reg.height(), reg.width()),
        star_center: Pixel::new(center.row - rect.top, center.col - rect.left),
    };
    for d in [
        fx.video.clone(),
        fx.masks.clone(),
        fx.gt.join("SEG"),
        fx.gt.join("TRA"),
        fx.gt_video.clone(),
        root.join("01_GT/SEG"),
        root.join("01_GT/TRA"),
    ] {
        std::fs::create_dir_all(d).unwrap();
    }
    let tracks = format_track_file(&[TrackRecord::new(1, 0, 2, 0), TrackRecord::new(2, 0, 2, 0)]);
    for (t, frame) in frames.iter().enumerate() {
        write_image(frame, &fx.video.join(format!("t{t:03}.tif"))).unwrap();
        write_label_mask(&cropped, &fx.masks.join(format!("mask{t:03}.tif"))).unwrap();
        write_image(&reg.frames[t], &fx.gt_video.join(format!("t{t:03}.tif"))).unwrap();
        for gt in [fx.gt.clone(), root.join("01_GT")] {
            write_label_mask(&cropped, &gt.join(format!("SEG/man_seg{t:03}.tif"))).unwrap();
            write_label_mask(&cropped, &gt.join(format!("TRA/man_track{t:03}.tif"))).unwrap();
        }
    }
    for gt in [fx.gt.clone(), root.join("01_GT")] {
        std::fs::write(gt.join("TRA/man_track.txt"), &tracks).unwrap();
    }
    fx
}

/// Every file under `dir` with its contents, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Rows of a CSV file below its header.
pub fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}
