//! Synthetic frames and shapes for tests, benchmarks and demo fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{BinaryMask, BitDepth, GrayFrame, Grid, LabelMask, Pixel, Rect};

/// Uniform noise over the full range of `depth`.
pub fn noise_frame(width: usize, height: usize, depth: BitDepth, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = depth.max_value();
    let data = (0..width * height).map(|_| rng.random_range(0..=max)).collect();
    GrayFrame::from_vec(width, height, depth, data).expect("valid synthetic frame")
}

/// `height x width` window of `scene` whose top-left corner is `origin`.
pub fn view(scene: &GrayFrame, origin: (usize, usize), height: usize, width: usize) -> GrayFrame {
    scene
        .crop(Rect {
            top: origin.0,
            left: origin.1,
            height,
            width,
        })
        .expect("view inside scene")
}

/// Frames of a scene under stage drift: frame `t` equals frame 0 translated by
/// `drifts[t]` (`(dy, dx)`), i.e. `frame_t(r, c) = frame_0(r - dy, c - dx)`.
pub fn drifting_video(
    scene: &GrayFrame,
    drifts: &[(isize, isize)],
    height: usize,
    width: usize,
    base: (usize, usize),
) -> Vec<GrayFrame> {
    drifts
        .iter()
        .map(|&(dy, dx)| {
            let top = base.0 as isize - dy;
            let left = base.1 as isize - dx;
            assert!(top >= 0 && left >= 0, "drift exceeds scene margin");
            view(scene, (top as usize, left as usize), height, width)
        })
        .collect()
}

/// Pixels within `radius` (inclusive) of `center`.
pub fn disk(height: usize, width: usize, center: Pixel, radius: f64) -> BinaryMask {
    let mut mask = Grid::filled(width, height, false);
    paint_disk(&mut mask, center, radius, true);
    mask
}

fn paint_disk<T: Clone>(grid: &mut Grid<T>, center: Pixel, radius: f64, value: T) {
    let r2 = radius * radius;
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            let p = Pixel::new(row, col);
            let dr = row as f64 - center.row as f64;
            let dc = col as f64 - center.col as f64;
            if dr * dr + dc * dc <= r2 {
                grid.set(p, value.clone());
            }
        }
    }
}

/// A one-pixel-wide straight arm leaving a round body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arm {
    /// Unit step, e.g. `(-1, 0)` for north or `(1, 1)` for south-east.
    pub step: (isize, isize),
    /// Number of arm pixels beyond the body.
    pub length: usize,
}

impl Arm {
    pub const fn new(step: (isize, isize), length: usize) -> Self {
        Self { step, length }
    }

    /// Last pixel of the arm for a body of integer `radius` centered at `center`.
    pub fn tip(&self, center: Pixel, radius: usize) -> Pixel {
        offset(center, self.step, radius + self.length)
    }
}

fn offset(p: Pixel, step: (isize, isize), k: usize) -> Pixel {
    Pixel::new(
        (p.row as isize + step.0 * k as isize) as usize,
        (p.col as isize + step.1 * k as isize) as usize,
    )
}

/// Paints a disk of integer `radius` plus straight arms into `grid`.
pub fn paint_star<T: Clone>(grid: &mut Grid<T>, center: Pixel, radius: usize, arms: &[Arm], value: T) {
    paint_disk(grid, center, radius as f64, value.clone());
    for arm in arms {
        for k in radius + 1..=radius + arm.length {
            grid.set(offset(center, arm.step, k), value.clone());
        }
    }
}

/// Binary star: a round body with one-pixel arms.
pub fn star(height: usize, width: usize, center: Pixel, radius: usize, arms: &[Arm]) -> BinaryMask {
    let mut mask = Grid::filled(width, height, false);
    paint_star(&mut mask, center, radius, arms, true);
    mask
}

/// The three-armed reference cell: body radius 10 px and arms of `lengths`
/// pointing north, east and south in a 180 x 160 (rows x columns) frame.
/// Arms up to 79 px fit.
pub fn reference_star(lengths: [usize; 3]) -> (LabelMask, Pixel, Vec<Arm>) {
    let center = Pixel::new(90, 70);
    let arms = vec![
        Arm::new((-1, 0), lengths[0]),
        Arm::new((0, 1), lengths[1]),
        Arm::new((1, 0), lengths[2]),
    ];
    let mut mask = Grid::filled(160, 180, 0u32);
    paint_star(&mut mask, center, 10, &arms, 1);
    (mask, center, arms)
}

/// Phase-contrast stand-in: textured background with brighter cell bodies.
pub fn textured_frame_with_cells(mask: &LabelMask, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = mask
        .as_slice()
        .iter()
        .map(|&l| {
            let base: u16 = if l > 0 { 40_000 } else { 10_000 };
            base + rng.random_range(0..5_000u16)
        })
        .collect();
    GrayFrame::from_vec(mask.width(), mask.height(), BitDepth::Sixteen, data).expect("valid synthetic frame")
}
