//! Translation-only drift correction for time-lapse videos.
//!
//! Each consecutive pair of frames is aligned by the integer shift that
//! maximizes zero-normalized cross-correlation over a fixed interior window.
//! Shifts are accumulated and every frame is cropped to the region that stayed
//! inside the field of view for the whole video.

use crate::par::{self, Execution};
use crate::raster::{GrayFrame, Rect};
use crate::{Error, Result};

/// Scores below this are reported as unreliable; independent noise frames
/// correlate far below it.
pub const MIN_RELIABLE_SCORE: f64 = 0.2;

/// `moving(r, c) == reference(r - dy, c - dx)` at the optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub dy: isize,
    pub dx: isize,
    /// Zero-normalized cross-correlation at the optimum, in `[-1, 1]`.
    pub score: f64,
}

impl DriftEstimate {
    pub const ZERO: DriftEstimate = DriftEstimate {
        dy: 0,
        dx: 0,
        score: 1.0,
    };

    pub fn is_reliable(&self) -> bool {
        self.score >= MIN_RELIABLE_SCORE
    }
}

/// Which input of a pair had no texture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Degenerate {
    Reference,
    Moving,
}

/// Exact first and second moments of a block of samples.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: u64,
    sum_sq: u64,
}

impl Moments {
    /// `n * sum_sq - sum^2`, i.e. `n^2` times the variance.
    fn scaled_variance(&self) -> i128 {
        self.n as i128 * self.sum_sq as i128 - (self.sum as i128).pow(2)
    }
}

/// Summed-area tables of values and squared values, with a zero guard row/column.
struct IntegralImage {
    stride: usize,
    sum: Vec<u64>,
    sum_sq: Vec<u64>,
}

impl IntegralImage {
    fn new(frame: &GrayFrame) -> Self {
        let (w, h) = (frame.width(), frame.height());
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut sum_sq = vec![0u64; stride * (h + 1)];
        for r in 0..h {
            let (mut row_sum, mut row_sq) = (0u64, 0u64);
            for c in 0..w {
                let v = *frame.grid().at(r, c) as u64;
                row_sum += v;
                row_sq += v * v;
                let i = (r + 1) * stride + c + 1;
                sum[i] = sum[i - stride] + row_sum;
                sum_sq[i] = sum_sq[i - stride] + row_sq;
            }
        }
        Self {
            stride,
            sum,
            sum_sq,
        }
    }

    fn moments(&self, top: usize, left: usize, height: usize, width: usize) -> Moments {
        let s = self.stride;
        let (a, b) = (top * s + left, top * s + left + width);
        let (c, d) = ((top + height) * s + left, (top + height) * s + left + width);
        Moments {
            n: (height * width) as u64,
            sum: self.sum[d] + self.sum[a] - self.sum[b] - self.sum[c],
            sum_sq: self.sum_sq[d] + self.sum_sq[a] - self.sum_sq[b] - self.sum_sq[c],
        }
    }
}

fn candidate_order(max_shift: isize) -> Vec<(isize, isize)> {
    let mut shifts: Vec<(isize, isize)> = (-max_shift..=max_shift)
        .flat_map(|dy| (-max_shift..=max_shift).map(move |dx| (dy, dx)))
        .collect();
    // Earlier candidates win exact ties.
    shifts.sort_by_key(|&(dy, dx)| (dy.abs() + dx.abs(), dy, dx));
    shifts
}

fn estimate_shift_inner(
    reference: &GrayFrame,
    moving: &GrayFrame,
    max_shift: usize,
    exec: Execution,
) -> Result<std::result::Result<DriftEstimate, Degenerate>> {
    if reference.width() != moving.width() || reference.height() != moving.height() {
        return Err(Error::DimensionMismatch {
            left: format!("{}x{}", reference.width(), reference.height()),
            right: format!("{}x{}", moving.width(), moving.height()),
        });
    }
    let (w, h) = (reference.width(), reference.height());
    if h <= 2 * max_shift || w <= 2 * max_shift {
        return Err(Error::InvalidArgument(format!(
            "max shift {max_shift} leaves no comparison window in a {w}x{h} frame"
        )));
    }
    let m = max_shift;
    let (win_h, win_w) = (h - 2 * m, w - 2 * m);

    let ref_grid = reference.grid();
    let mut ref_moments = Moments::default();
    for r in m..m + win_h {
        for &v in &ref_grid.as_slice()[r * w + m..r * w + m + win_w] {
            let v = v as u64;
            ref_moments.n += 1;
            ref_moments.sum += v;
            ref_moments.sum_sq += v * v;
        }
    }
    let ref_var = ref_moments.scaled_variance();
    if ref_var == 0 {
        return Ok(Err(Degenerate::Reference));
    }
    let integral = IntegralImage::new(moving);
    if integral.moments(0, 0, h, w).scaled_variance() == 0 {
        return Ok(Err(Degenerate::Moving));
    }

    let candidates = candidate_order(m as isize);
    let mov = moving.grid().as_slice();
    let scores = par::map(exec, &candidates, |&(dy, dx)| {
        let top = (m as isize + dy) as usize;
        let left = (m as isize + dx) as usize;
        let mov_moments = integral.moments(top, left, win_h, win_w);
        let mov_var = mov_moments.scaled_variance();
        if mov_var == 0 {
            return None;
        }
        let mut cross = 0u64;
        for r in 0..win_h {
            let a = &ref_grid.as_slice()[(m + r) * w + m..][..win_w];
            let b = &mov[(top + r) * w + left..][..win_w];
            cross += a.iter().zip(b).map(|(&x, &y)| x as u64 * y as u64).sum::<u64>();
        }
        let n = ref_moments.n as i128;
        let cov = n * cross as i128 - ref_moments.sum as i128 * mov_moments.sum as i128;
        let denom = (ref_var as f64 * mov_var as f64).sqrt();
        Some((cov as f64 / denom).clamp(-1.0, 1.0))
    });

    let mut best: Option<DriftEstimate> = None;
    for (&(dy, dx), score) in candidates.iter().zip(scores) {
        let Some(score) = score else { continue };
        if best.is_none_or(|b| score > b.score) {
            best = Some(DriftEstimate { dy, dx, score });
        }
    }
    Ok(best.ok_or(Degenerate::Moving))
}

/// Integer translation of `moving` relative to `reference` within
/// `[-max_shift, max_shift]^2`. Ties go to the smallest `|dy| + |dx|`, then
/// the lexicographically smallest `(dy, dx)`.
pub fn estimate_shift(reference: &GrayFrame, moving: &GrayFrame, max_shift: usize) -> Result<DriftEstimate> {
    estimate_shift_with(reference, moving, max_shift, Execution::default())
}

pub fn estimate_shift_with(
    reference: &GrayFrame,
    moving: &GrayFrame,
    max_shift: usize,
    exec: Execution,
) -> Result<DriftEstimate> {
    estimate_shift_inner(reference, moving, max_shift, exec)?.map_err(|which| Error::Degenerate {
        frame: None,
        reason: format!("{which:?} frame has zero variance; correlation undefined").to_lowercase(),
    })
}

/// A drift-corrected video.
#[derive(Debug, Clone)]
pub struct RegisteredVideo {
    pub frames: Vec<GrayFrame>,
    /// Shift of frame `t` relative to frame `t - 1`; entry 0 is frame 0 itself.
    pub pairwise: Vec<DriftEstimate>,
    /// Accumulated `(dy, dx)` of each frame relative to frame 0.
    pub cumulative: Vec<(isize, isize)>,
    /// Common crop in frame-0 coordinates.
    pub crop: Rect,
}

impl RegisteredVideo {
    pub fn width(&self) -> usize {
        self.crop.width
    }

    pub fn height(&self) -> usize {
        self.crop.height
    }
}

pub fn register_video(frames: &[GrayFrame], max_shift: usize) -> Result<RegisteredVideo> {
    register_video_with(frames, max_shift, Execution::default())
}

/// Aligns every frame to its predecessor, accumulates the shifts and crops all
/// frames to the region visible throughout.
pub fn register_video_with(frames: &[GrayFrame], max_shift: usize, exec: Execution) -> Result<RegisteredVideo> {
    if frames.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "registration needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    for (i, f) in frames.iter().enumerate() {
        if f.width() != w || f.height() != h {
            return Err(Error::DimensionMismatch {
                left: format!("frame 0 {w}x{h}"),
                right: format!("frame {i} {}x{}", f.width(), f.height()),
            });
        }
    }

    // Pair estimates are independent; the inner candidate loop stays
    // sequential when pairs already saturate the pool.
    let inner = if frames.len() > 2 { Execution::Sequential } else { exec };
    let estimates = par::map_range(exec, frames.len() - 1, |i| {
        estimate_shift_inner(&frames[i], &frames[i + 1], max_shift, inner)
    });
    let mut pairwise = vec![DriftEstimate::ZERO];
    for (i, est) in estimates.into_iter().enumerate() {
        match est? {
            Ok(d) => pairwise.push(d),
            Err(which) => {
                let frame = if which == Degenerate::Reference { i } else { i + 1 };
                return Err(Error::Degenerate {
                    frame: Some(frame),
                    reason: "zero-variance frame; correlation undefined".into(),
                });
            }
        }
    }

    let mut cumulative = Vec::with_capacity(frames.len());
    let (mut y, mut x) = (0isize, 0isize);
    for d in &pairwise {
        y += d.dy;
        x += d.dx;
        cumulative.push((y, x));
    }
    let min_y = cumulative.iter().map(|c| c.0).min().unwrap_or(0);
    let max_y = cumulative.iter().map(|c| c.0).max().unwrap_or(0);
    let min_x = cumulative.iter().map(|c| c.1).min().unwrap_or(0);
    let max_x = cumulative.iter().map(|c| c.1).max().unwrap_or(0);
    let span_y = (max_y - min_y) as usize;
    let span_x = (max_x - min_x) as usize;
    if span_y >= h || span_x >= w {
        return Err(Error::Degenerate {
            frame: None,
            reason: format!("accumulated drift {span_y}x{span_x} leaves no common field of view"),
        });
    }
    let crop = Rect {
        top: (-min_y) as usize,
        left: (-min_x) as usize,
        height: h - span_y,
        width: w - span_x,
    };
    let aligned = frames
        .iter()
        .zip(&cumulative)
        .map(|(f, &(dy, dx))| {
            f.crop(Rect {
                top: (crop.top as isize + dy) as usize,
                left: (crop.left as isize + dx) as usize,
                ..crop
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RegisteredVideo {
        frames: aligned,
        pairwise,
        cumulative,
        crop,
    })
}
