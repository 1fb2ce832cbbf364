//! Subcommand implementations.
//!
//! Every run first loads and checks all inputs without writing anything, so a
//! bad path or a dimension mismatch leaves no output behind. Stages then run
//! in order, each a barrier, and the manifest is written last whatever the
//! outcome.

use std::path::{Path, PathBuf};

use cellmig::dataio::{
    format_track_file, load_ctc_video_with, load_ground_truth, load_result_dir, read_label_mask, write_image,
    write_label_mask, GroundTruth, IndexedFile, ResultDataset, TrackRecord, VideoDataset,
};
use cellmig::metrics::{aogm, build_graph, seg_dataset, Aogm, FramePair, LineageGraph, SegReport};
use cellmig::morphology::detect_protrusions_video;
use cellmig::raster::normalize_percentile;
use cellmig::registration::{register_video_with, RegisteredVideo};
use cellmig::sampler::{AugmentationOp, PatchSampler};
use cellmig::tracking::link_by_overlap;
use cellmig::{par, BitDepth, Execution, GrayFrame, LabelMask, NormalizedFrame};

use crate::config::{Command, RunConfig};
use crate::manifest::{write_file, Manifest};
use crate::report::{self, real, Csv};
use crate::Failure;

enum MaskSource {
    Results(ResultDataset),
    GroundTruth,
}

enum Plan {
    Video(VideoDataset),
    Sample {
        video: VideoDataset,
        masks: MaskSource,
    },
    Masks(ResultDataset),
    Evaluate(Vec<(VideoDataset, ResultDataset)>),
    Pipeline {
        video: VideoDataset,
        masks: ResultDataset,
        gt: Option<GroundTruth>,
    },
}

/// Runs one configured command. On success returns the human-readable
/// summary, if the command has one.
pub fn run(cfg: &RunConfig) -> Result<Option<String>, Failure> {
    let plan = prepare(cfg)?;
    std::fs::create_dir_all(&cfg.output).map_err(|e| Failure::io("output", &cfg.output, e))?;
    let mut manifest = Manifest::new(cfg);
    record_inputs(&plan, &mut manifest);
    let result = execute(cfg, plan, &mut manifest);
    manifest.write(&cfg.output, cfg.execution, result.as_ref().map(|_| ()))?;
    result
}

fn record_inputs(plan: &Plan, m: &mut Manifest) {
    let video_info = |m: &mut Manifest, v: &VideoDataset| {
        m.record("dataset.frames", v.len());
        m.record("dataset.first_frame", v.first_index());
        m.record("dataset.width", v.info.width);
        m.record("dataset.height", v.info.height);
        m.record("dataset.bit_depth", v.info.bit_depth.bits());
    };
    match plan {
        Plan::Video(v) => {
            video_info(m, v);
            m.add_inputs(v.frames.iter().map(|f| f.path.as_path()));
        }
        Plan::Sample { video, masks } => {
            video_info(m, video);
            m.add_inputs(video.frames.iter().map(|f| f.path.as_path()));
            match masks {
                MaskSource::Results(r) => m.add_inputs(r.files()),
                MaskSource::GroundTruth => m.add_inputs(video.gt_seg.iter().map(|f| f.path.as_path())),
            }
        }
        Plan::Masks(r) => {
            m.record("dataset.frames", r.masks.len());
            m.record("dataset.width", r.info.width);
            m.record("dataset.height", r.info.height);
            m.add_inputs(r.masks.iter().map(|f| f.path.as_path()));
        }
        Plan::Evaluate(pairs) => {
            for (v, r) in pairs {
                m.add_inputs(v.files());
                m.add_inputs(r.files());
            }
        }
        Plan::Pipeline { video, masks, gt } => {
            video_info(m, video);
            m.add_inputs(video.frames.iter().map(|f| f.path.as_path()));
            m.add_inputs(masks.masks.iter().map(|f| f.path.as_path()));
            if let Some(gt) = gt {
                m.add_inputs(gt.files());
            }
        }
    }
}

fn input_error(e: cellmig::Error) -> Failure {
    Failure::from_core("input", e)
}

fn invalid(message: String) -> Failure {
    Failure::new("input", message)
}

fn load_video(dir: &Option<PathBuf>, exec: Execution) -> Result<VideoDataset, Failure> {
    let dir = dir.as_deref().expect("required key");
    load_ctc_video_with(dir, exec).map_err(input_error)
}

fn load_results(dir: &Path) -> Result<ResultDataset, Failure> {
    load_result_dir(dir).map_err(input_error)
}

fn check_output(cfg: &RunConfig) -> Result<(), Failure> {
    let Ok(out) = cfg.output.canonicalize() else {
        return Ok(());
    };
    for dir in cfg.input_dirs() {
        if dir.canonicalize().is_ok_and(|d| d == out) {
            return Err(Failure::new(
                "output",
                format!("output directory {} is also an input", cfg.output.display()),
            ));
        }
    }
    Ok(())
}

fn check_registration(video: &VideoDataset, max_shift: usize) -> Result<(), Failure> {
    if video.len() < 2 {
        return Err(invalid(format!("{}: registration needs at least 2 frames", video.dir.display())));
    }
    let side = video.info.width.min(video.info.height);
    if 2 * max_shift >= side {
        return Err(invalid(format!(
            "max_shift {max_shift} leaves no overlap in {}x{} frames",
            video.info.width, video.info.height
        )));
    }
    Ok(())
}

fn same_dims(a: &cellmig::dataio::ImageInfo, a_dir: &Path, b: &cellmig::dataio::ImageInfo, b_dir: &Path) -> Result<(), Failure> {
    if (a.width, a.height) == (b.width, b.height) {
        return Ok(());
    }
    Err(invalid(format!(
        "{} is {}x{} but {} is {}x{}",
        a_dir.display(),
        a.width,
        a.height,
        b_dir.display(),
        b.width,
        b.height
    )))
}

fn indices(files: &[IndexedFile]) -> Vec<usize> {
    files.iter().map(|f| f.index).collect()
}

/// Loads every input and checks everything that can be checked before work starts.
fn prepare(cfg: &RunConfig) -> Result<Plan, Failure> {
    let exec = cfg.execution;
    for dir in cfg.input_dirs() {
        if !dir.is_dir() {
            return Err(Failure::new("input", format!("{}: no such directory", dir.display())));
        }
    }
    check_output(cfg)?;
    match cfg.command {
        Command::Register | Command::Normalize => {
            let video = load_video(&cfg.input, exec)?;
            if cfg.command == Command::Register {
                check_registration(&video, cfg.max_shift)?;
            }
            Ok(Plan::Video(video))
        }
        Command::SamplePatches => {
            let video = load_video(&cfg.input, exec)?;
            let (masks, files) = match &cfg.masks {
                Some(dir) => {
                    let r = load_results(dir)?;
                    same_dims(&r.info, dir, &video.info, &video.dir)?;
                    let files = r.masks.clone();
                    (MaskSource::Results(r), files)
                }
                None if video.gt_seg.is_empty() => {
                    return Err(invalid(format!(
                        "no --masks given and {} has no SEG ground truth",
                        video.dir.display()
                    )))
                }
                None => (MaskSource::GroundTruth, video.gt_seg.clone()),
            };
            let s = &cfg.sampler;
            if s.patch_height > video.info.height || s.patch_width > video.info.width {
                return Err(invalid(format!(
                    "patch_size {} exceeds the {}x{} frames",
                    s.patch_height, video.info.width, video.info.height
                )));
            }
            let last = video.first_index() + video.len() - 1;
            if files.iter().all(|f| f.index < video.first_index() + s.frame_window - 1 || f.index > last) {
                return Err(invalid(format!(
                    "no annotated frame has {} frames of history",
                    s.frame_window
                )));
            }
            Ok(Plan::Sample { video, masks })
        }
        Command::DetectProtrusions | Command::Link => {
            Ok(Plan::Masks(load_results(cfg.masks.as_deref().expect("required key"))?))
        }
        Command::EvaluateSeg | Command::EvaluateTra => {
            let mut pairs = Vec::new();
            for (gt_dir, res_dir) in cfg.gt.iter().zip(&cfg.res) {
                let video = load_ctc_video_with(gt_dir, exec).map_err(input_error)?;
                let res = load_results(res_dir)?;
                same_dims(&res.info, res_dir, &video.info, gt_dir)?;
                if cfg.command == Command::EvaluateSeg {
                    if video.gt_seg.is_empty() {
                        return Err(invalid(format!("{} has no SEG ground truth", gt_dir.display())));
                    }
                    if let Some(f) = video.gt_seg.iter().find(|f| res.mask_path(f.index).is_none()) {
                        return Err(invalid(format!(
                            "{} has no mask for frame {} annotated in {}",
                            res_dir.display(),
                            f.index,
                            f.path.display()
                        )));
                    }
                } else {
                    if video.gt_tra.is_empty() || video.gt_tracks.is_none() {
                        return Err(invalid(format!("{} has no TRA ground truth", gt_dir.display())));
                    }
                    if res.tracks.is_none() {
                        return Err(invalid(format!("{} has no res_track.txt", res_dir.display())));
                    }
                    if indices(&res.masks) != indices(&video.frames) {
                        return Err(invalid(format!(
                            "{} does not cover the frames of {}",
                            res_dir.display(),
                            gt_dir.display()
                        )));
                    }
                }
                pairs.push((video, res));
            }
            Ok(Plan::Evaluate(pairs))
        }
        Command::Pipeline => {
            let mut video = load_video(&cfg.input, exec)?;
            video.pixel_size = cfg.pixel_size;
            check_registration(&video, cfg.max_shift)?;
            let masks_dir = cfg.masks.as_deref().expect("required key");
            let masks = load_results(masks_dir)?;
            if indices(&masks.masks) != indices(&video.frames) {
                return Err(invalid(format!(
                    "{} does not hold one mask per frame of {}",
                    masks_dir.display(),
                    video.dir.display()
                )));
            }
            let gt = match cfg.gt.first() {
                Some(dir) => {
                    let last = video.first_index() + video.len() - 1;
                    let gt = load_ground_truth(dir, video.first_index(), last, exec).map_err(input_error)?;
                    same_dims(&gt.info.expect("non-empty ground truth"), dir, &masks.info, masks_dir)?;
                    Some(gt)
                }
                None => None,
            };
            Ok(Plan::Pipeline { video, masks, gt })
        }
    }
}

fn execute(cfg: &RunConfig, plan: Plan, m: &mut Manifest) -> Result<Option<String>, Failure> {
    let exec = cfg.execution;
    let out = cfg.output.as_path();
    match plan {
        Plan::Video(video) if cfg.command == Command::Register => {
            let frames = m.stage("read", |_| video.read_frames(exec).map_err(|e| Failure::from_core("read", e)))?;
            let reg = m.stage("register", |_| register(&frames, cfg.max_shift, exec))?;
            m.stage("write", |m| write_registration(&video, &reg, out, &out.join("drift.csv"), exec, m))?;
            Ok(None)
        }
        Plan::Video(video) => {
            m.stage("normalize", |_| normalize_files(&video, cfg, out))?;
            Ok(None)
        }
        Plan::Sample { video, masks } => {
            let frames = m.stage("read", |_| video.read_frames(exec).map_err(|e| Failure::from_core("read", e)))?;
            let normalized = m.stage("normalize", |_| normalize_frames(&frames, cfg, exec))?;
            let masks = m.stage("read_masks", |_| {
                match masks {
                    MaskSource::Results(r) => r.read_masks(exec),
                    MaskSource::GroundTruth => video.read_gt_seg(exec),
                }
                .map_err(|e| Failure::from_core("read_masks", e))
            })?;
            m.stage("sample", |m| sample_patches(&video, &normalized, &masks, cfg, m))?;
            Ok(None)
        }
        Plan::Masks(res) => {
            let masks = m.stage("read_masks", |_| res.read_masks(exec).map_err(|e| Failure::from_core("read_masks", e)))?;
            if cfg.command == Command::Link {
                m.stage("link", |m| link(&masks, cfg.min_iou, out, m).map(|_| ()))?;
            } else {
                m.stage("protrusions", |m| protrusions(&masks, cfg, &out.join("protrusions.csv"), m))?;
            }
            Ok(None)
        }
        Plan::Evaluate(pairs) if cfg.command == Command::EvaluateSeg => {
            let summary = m.stage("evaluate_seg", |m| evaluate_seg(&pairs, cfg, m))?;
            write_file(&out.join("summary.txt"), summary.as_bytes())?;
            Ok(Some(summary))
        }
        Plan::Evaluate(pairs) => {
            let summary = m.stage("evaluate_tra", |m| evaluate_tra(&pairs, cfg, m))?;
            write_file(&out.join("summary.txt"), summary.as_bytes())?;
            Ok(Some(summary))
        }
        Plan::Pipeline { video, masks, gt } => pipeline(cfg, &video, &masks, gt.as_ref(), m),
    }
}

fn pipeline(
    cfg: &RunConfig,
    video: &VideoDataset,
    masks: &ResultDataset,
    gt: Option<&GroundTruth>,
    m: &mut Manifest,
) -> Result<Option<String>, Failure> {
    let (exec, out) = (cfg.execution, cfg.output.as_path());
    let frames = m.stage("read", |_| video.read_frames(exec).map_err(|e| Failure::from_core("read", e)))?;
    let reg = m.stage("register", |_| register(&frames, cfg.max_shift, exec))?;
    m.stage("write_registered", |m| {
        write_registration(video, &reg, &out.join("registered"), &out.join("drift.csv"), exec, m)
    })?;
    m.stage("normalize", |_| {
        let normalized = normalize_frames(&reg.frames, cfg, exec)?;
        write_normalized(video, &normalized, &out.join("normalized"), exec)
    })?;
    let masks = m.stage("ingest", |_| {
        let masks = masks.read_masks(exec).map_err(|e| Failure::from_core("ingest", e))?;
        let first = &masks[0].1;
        if (first.width(), first.height()) != (reg.width(), reg.height()) {
            return Err(Failure::new(
                "ingest",
                format!(
                    "masks are {}x{} but registered frames are {}x{}",
                    first.width(),
                    first.height(),
                    reg.width(),
                    reg.height()
                ),
            ));
        }
        Ok(masks)
    })?;
    m.stage("protrusions", |m| protrusions(&masks, cfg, &out.join("protrusions.csv"), m))?;
    let (linked, tracks) = m.stage("link", |m| link(&masks, cfg.min_iou, &out.join("linked"), m))?;

    let Some(gt) = gt else {
        return Ok(None);
    };
    let mut summary = String::new();
    let first = video.first_index();
    if !gt.seg.is_empty() {
        let text = m.stage("evaluate_seg", |m| {
            let gt_seg = gt.read_seg(exec).map_err(|e| Failure::from_core("evaluate_seg", e))?;
            let pairs: Vec<(usize, FramePair)> =
                gt_seg.into_iter().map(|(i, g)| (i, (g, masks[i - first].1.clone()))).collect();
            seg_report(&[pairs], &[gt_label(&video.dir)], cfg, &cfg.output, m)
        })?;
        summary.push_str(&text);
    }
    if let (false, Some(gt_tracks)) = (gt.tra.is_empty(), &gt.tracks) {
        let text = m.stage("evaluate_tra", |m| {
            let gt_masks: Vec<LabelMask> = gt
                .read_tra(exec)
                .map_err(|e| Failure::from_core("evaluate_tra", e))?
                .into_iter()
                .map(|(_, mask)| mask)
                .collect();
            let g = graph(&gt_masks, gt_tracks, first, "evaluate_tra")?;
            let r = graph(&linked, &tracks, 0, "evaluate_tra")?;
            tra_report(&[(g, r)], &[gt_label(&video.dir)], cfg, m)
        })?;
        summary.push_str(&text);
    }
    write_file(&out.join("summary.txt"), summary.as_bytes())?;
    Ok(Some(summary))
}

fn gt_label(dir: &Path) -> String {
    dir.display().to_string()
}

/// `<prefix><index>.tif` with at least three digits.
fn indexed_name(prefix: &str, index: usize, last: usize) -> String {
    let digits = last.to_string().len().max(3);
    format!("{prefix}{index:0digits$}.tif")
}

fn create_dir(dir: &Path, stage: &'static str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(stage, dir, e))
}

fn register(frames: &[GrayFrame], max_shift: usize, exec: Execution) -> Result<RegisteredVideo, Failure> {
    let reg = register_video_with(frames, max_shift, exec).map_err(|e| Failure::from_core("register", e))?;
    for (i, d) in reg.pairwise.iter().enumerate().skip(1) {
        if !d.is_reliable() {
            log::warn!("frame {i}: drift estimate score {:.3} is unreliable", d.score);
        }
    }
    Ok(reg)
}

fn write_registration(
    video: &VideoDataset,
    reg: &RegisteredVideo,
    frames_dir: &Path,
    drift_csv: &Path,
    exec: Execution,
    m: &mut Manifest,
) -> Result<(), Failure> {
    create_dir(frames_dir, "write")?;
    let (first, last) = (video.first_index(), video.first_index() + video.len() - 1);
    let indexed: Vec<(usize, &GrayFrame)> = reg.frames.iter().enumerate().map(|(i, f)| (first + i, f)).collect();
    par::map(exec, &indexed, |(i, f)| {
        let path = frames_dir.join(indexed_name("t", *i, last));
        write_image(f, &path).map_err(|e| Failure::from_core("write", e))
    })
    .into_iter()
    .collect::<Result<(), _>>()?;
    let mut csv = Csv::new(report::DRIFT_HEADER);
    for (i, d) in reg.pairwise.iter().enumerate() {
        csv.row(&[&(first + i), &d.dy, &d.dx, &real(d.score)]);
    }
    csv.write(drift_csv)?;
    m.record("registered.width", reg.width());
    m.record("registered.height", reg.height());
    m.record("registered.crop_top", reg.crop.top);
    m.record("registered.crop_left", reg.crop.left);
    Ok(())
}

fn normalize_frames(frames: &[GrayFrame], cfg: &RunConfig, exec: Execution) -> Result<Vec<NormalizedFrame>, Failure> {
    par::map(exec, frames, |f| {
        normalize_percentile(f, cfg.p_low, cfg.p_high).map_err(|e| Failure::from_core("normalize", e))
    })
    .into_iter()
    .collect()
}

fn to_sixteen_bit(frame: &NormalizedFrame, pixel_size: f64) -> Result<GrayFrame, Failure> {
    GrayFrame::from_normalized(frame, BitDepth::Sixteen, pixel_size).map_err(|e| Failure::from_core("write", e))
}

fn write_normalized(video: &VideoDataset, frames: &[NormalizedFrame], dir: &Path, exec: Execution) -> Result<(), Failure> {
    create_dir(dir, "normalize")?;
    let (first, last) = (video.first_index(), video.first_index() + video.len() - 1);
    let indexed: Vec<(usize, &NormalizedFrame)> = frames.iter().enumerate().map(|(i, f)| (first + i, f)).collect();
    par::map(exec, &indexed, |(i, f)| {
        let path = dir.join(indexed_name("t", *i, last));
        write_image(&to_sixteen_bit(f, video.pixel_size)?, &path).map_err(|e| Failure::from_core("normalize", e))
    })
    .into_iter()
    .collect()
}

/// Streams frames through normalization one at a time.
fn normalize_files(video: &VideoDataset, cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let last = video.first_index() + video.len() - 1;
    par::map(cfg.execution, &video.frames, |f| {
        let frame = cellmig::dataio::read_image(&f.path).map_err(|e| Failure::from_core("normalize", e))?;
        let n = normalize_percentile(&frame, cfg.p_low, cfg.p_high).map_err(|e| Failure::from_core("normalize", e))?;
        let path = out.join(indexed_name("t", f.index, last));
        write_image(&to_sixteen_bit(&n, video.pixel_size)?, &path).map_err(|e| Failure::from_core("normalize", e))
    })
    .into_iter()
    .collect()
}

fn augmentation_name(op: Option<AugmentationOp>) -> String {
    match op {
        None => "none".into(),
        Some(AugmentationOp::FlipHorizontal) => "flip-horizontal".into(),
        Some(AugmentationOp::FlipVertical) => "flip-vertical".into(),
        Some(AugmentationOp::Rotate { quarter_turns }) => format!("rotate-{}", 90 * quarter_turns as u32),
    }
}

/// Draws `count` patches, cycling through the annotated frames that have a
/// full history window.
fn sample_patches(
    video: &VideoDataset,
    frames: &[NormalizedFrame],
    masks: &[(usize, LabelMask)],
    cfg: &RunConfig,
    m: &mut Manifest,
) -> Result<(), Failure> {
    let first = video.first_index();
    let k = cfg.sampler.frame_window;
    let targets: Vec<(usize, &LabelMask)> = masks
        .iter()
        .filter(|(i, _)| *i >= first && i - first + 1 >= k && i - first < frames.len())
        .map(|(i, mask)| (i - first, mask))
        .collect();
    let seed = cfg.seed.expect("seed is required");
    let mut sampler = PatchSampler::new(cfg.sampler, seed).map_err(|e| Failure::from_core("sample", e))?;
    let dir = cfg.output.join("patches");
    create_dir(&dir, "sample")?;
    let mut csv = Csv::new(report::PATCH_HEADER);
    for draw in 0..cfg.count {
        let (target, mask) = targets[draw % targets.len()];
        let s = sampler.sample(frames, mask, target).map_err(|e| Failure::from_core("sample", e))?;
        let stem = format!("p{:05}", s.draw_index);
        for (j, f) in s.patch.frames.iter().enumerate() {
            let path = dir.join(format!("{stem}_t{j}.tif"));
            write_image(&to_sixteen_bit(f, video.pixel_size)?, &path).map_err(|e| Failure::from_core("sample", e))?;
        }
        write_label_mask(&s.patch.mask, &dir.join(format!("{stem}_mask.tif")))
            .map_err(|e| Failure::from_core("sample", e))?;
        let r = s.patch.rect;
        csv.row(&[
            &s.seed,
            &s.draw_index,
            &s.center.row,
            &s.center.col,
            &r.top,
            &r.left,
            &r.height,
            &r.width,
            &(first + s.frame_range.0),
            &(first + s.frame_range.1),
            &augmentation_name(s.augmentation),
            &format!("patches/{stem}"),
        ]);
    }
    csv.write(&cfg.output.join("patches.csv"))?;
    m.record("sampler.seed", seed);
    m.record("sampler.draws", cfg.count);
    m.record("sampler.target_frames", targets.len());
    Ok(())
}

fn protrusions(masks: &[(usize, LabelMask)], cfg: &RunConfig, path: &Path, m: &mut Manifest) -> Result<(), Failure> {
    let grids: Vec<LabelMask> = masks.iter().map(|(_, mask)| mask.clone()).collect();
    let reports = detect_protrusions_video(&grids, cfg.pixel_size, cfg.min_protrusion_um, cfg.execution)
        .map_err(|e| Failure::from_core("protrusions", e))?;
    let mut csv = Csv::new(report::PROTRUSION_HEADER);
    let mut tips = 0;
    for ((index, _), frame) in masks.iter().zip(&reports) {
        for cell in frame {
            for tip in &cell.tips {
                csv.row(&[
                    index,
                    &cell.label,
                    &cell.centroid.row,
                    &cell.centroid.col,
                    &tip.pixel.row,
                    &tip.pixel.col,
                    &report::micrometres(tip.length_um),
                ]);
                tips += 1;
            }
        }
    }
    csv.write(path)?;
    m.record("protrusions.tips", tips);
    Ok(())
}

/// Links masks into tracks and writes a result directory. Returns the
/// relabeled masks and tracks with frames counted from 0.
fn link(
    masks: &[(usize, LabelMask)],
    min_iou: f64,
    dir: &Path,
    m: &mut Manifest,
) -> Result<(Vec<LabelMask>, Vec<TrackRecord>), Failure> {
    let grids: Vec<LabelMask> = masks.iter().map(|(_, mask)| mask.clone()).collect();
    let (linked, tracks) = link_by_overlap(&grids, min_iou).map_err(|e| Failure::from_core("link", e))?;
    create_dir(dir, "link")?;
    let first = masks[0].0;
    let last = masks[masks.len() - 1].0;
    for ((index, _), mask) in masks.iter().zip(&linked) {
        write_label_mask(mask, &dir.join(indexed_name("mask", *index, last))).map_err(|e| Failure::from_core("link", e))?;
    }
    let absolute: Vec<TrackRecord> = tracks
        .iter()
        .map(|t| TrackRecord::new(t.label, t.begin_frame + first, t.end_frame + first, t.parent))
        .collect();
    write_file(&dir.join("res_track.txt"), format_track_file(&absolute).as_bytes())?;
    m.record("link.tracks", tracks.len());
    Ok((linked, tracks))
}

/// Builds a lineage graph from masks whose first frame has CTC index `first`.
fn graph(masks: &[LabelMask], tracks: &[TrackRecord], first: usize, stage: &'static str) -> Result<LineageGraph, Failure> {
    let mut rebased = Vec::with_capacity(tracks.len());
    for t in tracks {
        if t.begin_frame < first {
            return Err(Failure::new(
                stage,
                format!("track {} begins at frame {} before the video starts at {first}", t.label, t.begin_frame),
            ));
        }
        rebased.push(TrackRecord::new(t.label, t.begin_frame - first, t.end_frame - first, t.parent));
    }
    build_graph(masks, &rebased).map_err(|e| Failure::from_core(stage, e))
}

fn evaluate_seg(pairs: &[(VideoDataset, ResultDataset)], cfg: &RunConfig, m: &mut Manifest) -> Result<String, Failure> {
    let mut videos = Vec::new();
    for (video, res) in pairs {
        let gt = video.read_gt_seg(cfg.execution).map_err(|e| Failure::from_core("evaluate_seg", e))?;
        let frames = par::map(cfg.execution, &gt, |(i, g)| {
            let path = res.mask_path(*i).expect("checked before the run");
            read_label_mask(path).map(|r| (*i, (g.clone(), r)))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::from_core("evaluate_seg", e))?;
        videos.push(frames);
    }
    let labels: Vec<String> = pairs.iter().map(|(v, _)| gt_label(&v.dir)).collect();
    seg_report(&videos, &labels, cfg, &cfg.output, m)
}

fn seg_report(
    videos: &[Vec<(usize, FramePair)>],
    labels: &[String],
    cfg: &RunConfig,
    out: &Path,
    m: &mut Manifest,
) -> Result<String, Failure> {
    let pairs: Vec<Vec<FramePair>> = videos.iter().map(|v| v.iter().map(|(_, p)| p.clone()).collect()).collect();
    let report: SegReport =
        seg_dataset(&pairs, cfg.match_rule, cfg.execution).map_err(|e| Failure::from_core("evaluate_seg", e))?;
    let mut csv = Csv::new(report::SEG_HEADER);
    for (v, (video, frames)) in report.videos.iter().zip(videos).enumerate() {
        for (scores, (index, _)) in video.frames.iter().zip(frames) {
            for s in scores {
                csv.row(&[&v, index, &s.gt_label, &s.res_label.unwrap_or(0), &real(s.score)]);
            }
        }
    }
    csv.write(&out.join("seg.csv"))?;
    m.record("seg.mean", real(report.mean));
    m.record("seg.pooled", real(report.pooled));
    let mut text = format!("SEG {} (mean of per-video SEG)\n", real(report.mean));
    text.push_str(&format!("SEG {} (pooled over all objects)\n", real(report.pooled)));
    for (v, (video, label)) in report.videos.iter().zip(labels).enumerate() {
        let seg = video.seg.map_or("undefined".to_string(), real);
        text.push_str(&format!("  video {v} {label}: SEG {seg} over {} objects\n", video.object_count()));
    }
    Ok(text)
}

fn evaluate_tra(pairs: &[(VideoDataset, ResultDataset)], cfg: &RunConfig, m: &mut Manifest) -> Result<String, Failure> {
    let stage = "evaluate_tra";
    let mut graphs = Vec::new();
    for (video, res) in pairs {
        let gt_masks = video.read_gt_tra(cfg.execution).map_err(|e| Failure::from_core(stage, e))?;
        let g = graph(&gt_masks, video.gt_tracks.as_deref().expect("checked"), video.first_index(), stage)?;
        let res_masks: Vec<LabelMask> = res
            .read_masks(cfg.execution)
            .map_err(|e| Failure::from_core(stage, e))?
            .into_iter()
            .map(|(_, mask)| mask)
            .collect();
        let r = graph(&res_masks, res.tracks.as_deref().expect("checked"), res.masks[0].index, stage)?;
        graphs.push((g, r));
    }
    let labels: Vec<String> = pairs.iter().map(|(v, _)| gt_label(&v.dir)).collect();
    tra_report(&graphs, &labels, cfg, m)
}

fn tra_report(
    graphs: &[(LineageGraph, LineageGraph)],
    labels: &[String],
    cfg: &RunConfig,
    m: &mut Manifest,
) -> Result<String, Failure> {
    let stage = "evaluate_tra";
    let results: Vec<Aogm> = par::map(cfg.execution, graphs, |(g, r)| aogm(g, r, &cfg.aogm))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::from_core(stage, e))?;
    let tras: Vec<f64> = results
        .iter()
        .map(Aogm::tra)
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::from_core(stage, e))?;
    let mean = tras.iter().sum::<f64>() / tras.len() as f64;
    let mut csv = Csv::new(report::TRA_HEADER);
    let mut text = format!("TRA {} (mean over videos)\n", real(mean));
    for (v, ((a, t), label)) in results.iter().zip(&tras).zip(labels).enumerate() {
        let c = &a.counts;
        csv.row(&[
            &v,
            &real(*t),
            &real(a.cost),
            &real(a.empty_cost),
            &c.splits,
            &c.false_negatives,
            &c.false_positives,
            &c.redundant_edges,
            &c.missing_edges,
            &c.wrong_semantics,
        ]);
        text.push_str(&format!(
            "  video {v} {label}: TRA {} (AOGM {} of {} for an empty result)\n",
            real(*t),
            real(a.cost),
            real(a.empty_cost)
        ));
    }
    csv.write(&cfg.output.join("tra.csv"))?;
    m.record("tra.mean", real(mean));
    Ok(text)
}
