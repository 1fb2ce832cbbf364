//! Foreground-weighted patch sampling.
//!
//! Training patches are produced by transforming the whole frame stack first,
//! then drawing a patch centroid from a per-pixel probability field built on
//! the transformed mask, then cropping a rectangle that is clamped to lie
//! inside the image. Nothing is ever padded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{BinaryMask, Grid, LabelMask, NormalizedFrame, Pixel, Rect};
use crate::{Error, Result};

pub const DEFAULT_FOREGROUND_WEIGHT: f64 = 50_000.0;
pub const DEFAULT_BACKGROUND_WEIGHT: f64 = 1.0;
pub const DEFAULT_PATCH_SIZE: usize = 256;
pub const DEFAULT_FRAME_WINDOW: usize = 5;

/// Generator used for every sampling run. Its name is written to run manifests.
pub type SamplerRng = ChaCha8Rng;
pub const RNG_ALGORITHM: &str = "ChaCha8Rng";

pub fn seeded_rng(seed: u64) -> SamplerRng {
    SamplerRng::seed_from_u64(seed)
}

/// Normalized per-pixel probabilities with their prefix sums.
#[derive(Debug, Clone)]
pub struct SamplingDistribution {
    width: usize,
    height: usize,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SamplingDistribution {
    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: &Grid<f64>) -> Result<Self> {
        if weights.as_slice().iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be finite and non-negative".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights.as_slice() {
            acc += w;
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        let probabilities = weights.as_slice().iter().map(|w| w / acc).collect();
        for c in cumulative.iter_mut() {
            *c /= acc;
        }
        *cumulative.last_mut().expect("grid is non-empty") = 1.0;
        Ok(Self {
            width: weights.width(),
            height: weights.height(),
            probabilities,
            cumulative,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probability(&self, p: Pixel) -> f64 {
        self.probabilities[p.row * self.width + p.col]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Total probability carried by the `true` pixels of `mask`.
    pub fn mass_on(&self, mask: &BinaryMask) -> f64 {
        self.probabilities
            .iter()
            .zip(mask.as_slice())
            .filter(|(_, &fg)| fg)
            .map(|(p, _)| p)
            .sum()
    }

    /// Inverse-CDF lookup of a uniform variate in `[0, 1)`.
    pub fn pixel_for(&self, u: f64) -> Pixel {
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1);
        Pixel::new(i / self.width, i % self.width)
    }
}

/// Foreground pixels get `w_fg`, background pixels `w_bg`, then everything is
/// scaled to sum to one.
pub fn build_sampling_distribution(mask: &BinaryMask, w_fg: f64, w_bg: f64) -> Result<SamplingDistribution> {
    if !(w_fg > 0.0 && w_fg.is_finite() && w_bg > 0.0 && w_bg.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sampling weights must be positive, got fg={w_fg} bg={w_bg}"
        )));
    }
    if mask.is_empty() {
        return Err(Error::InvalidInput("empty mask".into()));
    }
    SamplingDistribution::from_weights(&mask.map(|&fg| if fg { w_fg } else { w_bg }))
}

/// One uniform variate, one lookup.
pub fn draw_centroid<R: Rng + ?Sized>(dist: &SamplingDistribution, rng: &mut R) -> Pixel {
    dist.pixel_for(rng.random::<f64>())
}

/// Size and placement of a patch stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub center: Pixel,
    pub height: usize,
    pub width: usize,
    /// Number of consecutive frames in the stack.
    pub frame_window: usize,
}

impl PatchSpec {
    pub fn new(center: Pixel, height: usize, width: usize) -> Self {
        Self {
            center,
            height,
            width,
            frame_window: DEFAULT_FRAME_WINDOW,
        }
    }

    /// The patch rectangle centered on `center`, shifted to fit inside the image.
    pub fn rect_within(&self, image_height: usize, image_width: usize) -> Result<Rect> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("patch must be at least 1x1".into()));
        }
        if self.height > image_height || self.width > image_width {
            return Err(Error::InvalidArgument(format!(
                "{}x{} patch does not fit in {}x{} image",
                self.height, self.width, image_height, image_width
            )));
        }
        let place = |center: usize, size: usize, extent: usize| {
            center.saturating_sub(size / 2).min(extent - size)
        };
        Ok(Rect {
            top: place(self.center.row, self.height, image_height),
            left: place(self.center.col, self.width, image_width),
            height: self.height,
            width: self.width,
        })
    }
}

/// A cropped frame stack with its mask and the rectangle it came from.
#[derive(Debug, Clone)]
pub struct Patch {
    pub frames: Vec<NormalizedFrame>,
    pub mask: LabelMask,
    pub rect: Rect,
}

/// Cuts the same clamped rectangle out of every frame and the mask.
pub fn crop_patch(frames: &[NormalizedFrame], mask: &LabelMask, spec: &PatchSpec) -> Result<Patch> {
    for (i, f) in frames.iter().enumerate() {
        if !f.same_shape(mask) {
            return Err(Error::DimensionMismatch {
                left: format!("frame {i} {}x{}", f.width(), f.height()),
                right: format!("mask {}x{}", mask.width(), mask.height()),
            });
        }
    }
    let rect = spec.rect_within(mask.height(), mask.width())?;
    Ok(Patch {
        frames: frames.iter().map(|f| f.crop(rect)).collect::<Result<_>>()?,
        mask: mask.crop(rect)?,
        rect,
    })
}

/// Geometric transforms that never introduce border pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentationOp {
    FlipHorizontal,
    FlipVertical,
    /// Clockwise by `90° * quarter_turns`.
    Rotate { quarter_turns: u8 },
}

impl AugmentationOp {
    pub fn apply<T: Clone>(&self, grid: &Grid<T>) -> Grid<T> {
        match *self {
            AugmentationOp::FlipHorizontal => grid.flip_horizontal(),
            AugmentationOp::FlipVertical => grid.flip_vertical(),
            AugmentationOp::Rotate { quarter_turns } => {
                let mut out = grid.clone();
                for _ in 0..quarter_turns % 4 {
                    out = out.rotate90();
                }
                out
            }
        }
    }

    /// Where pixel `p` of an `height x width` grid lands after the transform.
    pub fn map_pixel(&self, p: Pixel, height: usize, width: usize) -> Pixel {
        match *self {
            AugmentationOp::FlipHorizontal => Pixel::new(p.row, width - 1 - p.col),
            AugmentationOp::FlipVertical => Pixel::new(height - 1 - p.row, p.col),
            AugmentationOp::Rotate { quarter_turns } => {
                let (mut p, mut h, mut w) = (p, height, width);
                for _ in 0..quarter_turns % 4 {
                    p = Pixel::new(p.col, h - 1 - p.row);
                    std::mem::swap(&mut h, &mut w);
                }
                p
            }
        }
    }

    /// Uniform choice among the two flips and three non-trivial rotations.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        match rng.random_range(0..5u8) {
            0 => AugmentationOp::FlipHorizontal,
            1 => AugmentationOp::FlipVertical,
            n => AugmentationOp::Rotate { quarter_turns: n - 1 },
        }
    }
}

impl std::fmt::Display for AugmentationOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AugmentationOp::FlipHorizontal => write!(f, "fliph"),
            AugmentationOp::FlipVertical => write!(f, "flipv"),
            AugmentationOp::Rotate { quarter_turns } => write!(f, "rot{}", 90 * (*quarter_turns as u32 % 4)),
        }
    }
}

/// Applies `op` to every frame and the mask alike.
pub fn augment(frames: &[NormalizedFrame], mask: &LabelMask, op: AugmentationOp) -> (Vec<NormalizedFrame>, LabelMask) {
    (frames.iter().map(|f| op.apply(f)).collect(), op.apply(mask))
}

/// Sampler configuration shared by every draw of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub foreground_weight: f64,
    pub background_weight: f64,
    pub patch_height: usize,
    pub patch_width: usize,
    pub frame_window: usize,
    /// Whether each draw first applies a random flip/rotation.
    pub augment: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            foreground_weight: DEFAULT_FOREGROUND_WEIGHT,
            background_weight: DEFAULT_BACKGROUND_WEIGHT,
            patch_height: DEFAULT_PATCH_SIZE,
            patch_width: DEFAULT_PATCH_SIZE,
            frame_window: DEFAULT_FRAME_WINDOW,
            augment: true,
        }
    }
}

/// One emitted training sample.
#[derive(Debug, Clone)]
pub struct SampledPatch {
    pub seed: u64,
    pub draw_index: u64,
    /// Index of the first and last source frame of the stack.
    pub frame_range: (usize, usize),
    pub augmentation: Option<AugmentationOp>,
    /// Drawn centroid, in the coordinates of the transformed frame.
    pub center: Pixel,
    pub patch: Patch,
}

/// Stateful sampler: owns its generator, so give each worker its own seed.
#[derive(Debug, Clone)]
pub struct PatchSampler {
    config: SamplerConfig,
    seed: u64,
    draws: u64,
    rng: SamplerRng,
}

impl PatchSampler {
    pub fn new(config: SamplerConfig, seed: u64) -> Result<Self> {
        if !(config.foreground_weight > 0.0 && config.background_weight > 0.0) {
            return Err(Error::InvalidArgument("sampling weights must be positive".into()));
        }
        if config.frame_window == 0 || config.patch_height == 0 || config.patch_width == 0 {
            return Err(Error::InvalidArgument(
                "frame window and patch size must be positive".into(),
            ));
        }
        Ok(Self {
            config,
            seed,
            draws: 0,
            rng: seeded_rng(seed),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Draws one patch stack ending at frame `target`; `mask` annotates `target`.
    pub fn sample(&mut self, frames: &[NormalizedFrame], mask: &LabelMask, target: usize) -> Result<SampledPatch> {
        let k = self.config.frame_window;
        if target >= frames.len() {
            return Err(Error::InvalidArgument(format!(
                "target frame {target} outside video of {} frames",
                frames.len()
            )));
        }
        if target + 1 < k {
            return Err(Error::InvalidArgument(format!(
                "target frame {target} has fewer than {k} frames of history"
            )));
        }
        let first = target + 1 - k;
        let window = &frames[first..=target];

        let augmentation = self.config.augment.then(|| AugmentationOp::random(&mut self.rng));
        let (window, mask) = match augmentation {
            Some(op) => augment(window, mask, op),
            None => (window.to_vec(), mask.clone()),
        };
        let dist = build_sampling_distribution(
            &mask.foreground(),
            self.config.foreground_weight,
            self.config.background_weight,
        )?;
        let center = draw_centroid(&dist, &mut self.rng);
        let spec = PatchSpec {
            center,
            height: self.config.patch_height,
            width: self.config.patch_width,
            frame_window: k,
        };
        let patch = crop_patch(&window, &mask, &spec)?;
        let draw_index = self.draws;
        self.draws += 1;
        Ok(SampledPatch {
            seed: self.seed,
            draw_index,
            frame_range: (first, target),
            augmentation,
            center,
            patch,
        })
    }
}
